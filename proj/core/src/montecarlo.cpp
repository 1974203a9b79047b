#include "eigoverlap/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <exception>
#include <optional>
#include <sstream>
#include <thread>

#include <cereal/archives/portable_binary.hpp>
#include <cereal/types/complex.hpp>
#include <cereal/types/string.hpp>
#include <cereal/types/utility.hpp>
#include <cereal/types/vector.hpp>

#include "eigoverlap/error.hpp"
#include "eigoverlap/hashing.hpp"
#include "text_util.hpp"

namespace eigoverlap {

using cplx = std::complex<double>;

cplx RealizationResult::green(std::size_t n, std::size_t m, cplx z) const {
  const Eigen::Index dim = eigenvalues.size();
  cplx g = 0.0;
  for (Eigen::Index k = 0; k < dim; ++k) {
    g += overlaps(static_cast<Eigen::Index>(n), k) *
         std::conj(overlaps(static_cast<Eigen::Index>(m), k)) / (eigenvalues[k] - z);
  }
  return g;
}

namespace {

template <class Matrix>
void fill_result(const Eigen::SelfAdjointEigenSolver<Matrix>& solver, RealizationResult& out) {
  const Eigen::Index dim = solver.eigenvalues().size();
  out.eigenvalues = solver.eigenvalues().reverse();
  out.overlaps.resize(dim, dim);
  // Eigen returns ascending order; column k of the result is column dim-1-k.
  for (Eigen::Index k = 0; k < dim; ++k) {
    out.overlaps.col(k) = solver.eigenvectors().col(dim - 1 - k).template cast<cplx>();
  }
}

}  // namespace

RealizationResult run_realization(const BareSpectrum& spectrum, const InteractionSpec& interaction,
                                  std::uint64_t index, std::uint64_t master_seed) {
  interaction.validate();
  const std::size_t n = spectrum.size();
  RngStream stream = RngStream::for_realization(master_seed, index);
  const InteractionSample w = sample_interaction(interaction, n, stream);

  RealizationResult out;
  out.index = index;
  out.real_basis = w.is_real();
  const auto levels = spectrum.levels();
  if (interaction.sigma_w == 0.0) {
    // W = 0 exactly; the eigensolver's scaling would perturb the last bits.
    out.eigenvalues = Eigen::Map<const Eigen::VectorXd>(levels.data(), static_cast<Eigen::Index>(n));
    out.overlaps = Eigen::MatrixXcd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    return out;
  }
  if (w.is_real()) {
    Eigen::MatrixXd h = w.real();
    for (std::size_t k = 0; k < n; ++k) h(k, k) += levels[k];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(h);
    if (solver.info() != Eigen::Success) {
      throw RealizationError("eigensolver failed", index);
    }
    fill_result(solver, out);
  } else {
    Eigen::MatrixXcd h = w.complex();
    for (std::size_t k = 0; k < n; ++k) h(k, k) += levels[k];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(h);
    if (solver.info() != Eigen::Success) {
      throw RealizationError("eigensolver failed", index);
    }
    fill_result(solver, out);
  }
  if (!out.eigenvalues.allFinite() || !out.overlaps.allFinite()) {
    throw RealizationError("eigensolver returned non-finite values", index);
  }
  return out;
}

double unitarity_defect(const RealizationResult& result) {
  const Eigen::VectorXd rows = result.overlaps.rowwise().squaredNorm();
  const Eigen::VectorXd cols = result.overlaps.colwise().squaredNorm().transpose();
  return std::max((rows.array() - 1.0).abs().maxCoeff(), (cols.array() - 1.0).abs().maxCoeff());
}

void TrackingConfig::validate() const {
  if (dimension < 2) throw ConfigError("tracking dimension must be >= 2");
  auto check = [this](std::size_t k, const char* what) {
    if (k >= dimension) {
      throw ConfigError(std::string(what) + " index " + std::to_string(k) + " >= N=" +
                        std::to_string(dimension));
    }
  };
  for (const auto& [n, m] : cyclic_pairs) {
    check(n, "cyclic pair");
    check(m, "cyclic pair");
    if (n == m) throw ConfigError("cyclic pair needs n != m");
  }
  for (const auto& [n, p] : factorized_pairs) {
    check(n, "factorized pair");
    check(p, "factorized pair");
  }
  for (const auto& g : green_probes) {
    check(g.n, "green probe");
    check(g.m, "green probe");
    if (g.z1.imag() == 0.0 || g.z2.imag() == 0.0) {
      throw ConfigError("green probe points must lie off the real axis");
    }
  }
}

std::string TrackingConfig::canonical() const {
  std::string out = "dimension=" + std::to_string(dimension) + "\ncyclic=";
  for (const auto& [n, m] : cyclic_pairs) out += std::to_string(n) + ":" + std::to_string(m) + ";";
  out += "\nfactorized=";
  for (const auto& [n, p] : factorized_pairs) {
    out += std::to_string(n) + ":" + std::to_string(p) + ";";
  }
  out += "\ngreen=";
  for (const auto& g : green_probes) {
    out += g.kind == GreenProbe::Kind::Extradiag ? "x" : "d";
    out += ":" + std::to_string(g.n) + ":" + std::to_string(g.m);
    for (double v : {g.z1.real(), g.z1.imag(), g.z2.real(), g.z2.imag()}) {
      out += ":" + detail::format_double(v);
    }
    out += ";";
  }
  return out + "\n";
}

MomentAccumulator::MomentAccumulator(TrackingConfig config) : config_(std::move(config)) {
  config_.validate();
  const std::size_t n = config_.dimension;
  auto make = [](std::size_t size) { return Stat{std::vector<double>(size, 0.0),
                                                 std::vector<double>(size, 0.0)}; };
  second_ = make(n * n);
  eigenvalues_ = make(n);
  for (std::size_t k = 0; k < config_.cyclic_pairs.size(); ++k) cyclic_.push_back(make(n * n));
  for (std::size_t k = 0; k < config_.factorized_pairs.size(); ++k) {
    factorized_.push_back(make(n * n));
  }
  for (const auto& g : config_.green_probes) {
    if (g.kind == GreenProbe::Kind::Extradiag) {
      extradiag_.push_back(make(2));
    } else {
      diag_.emplace_back();
    }
  }
}

namespace {

// Chan et al. combination of (nA, meanA, m2A) with (nB, meanB, m2B). With
// nB = 1 and m2B = 0 this is the usual Welford step.
struct MergeWeights {
  double frac_b;  // nB / n
  double cross;   // nA nB / n
};

MergeWeights weights(std::uint64_t na, std::uint64_t nb) {
  const double n = static_cast<double>(na + nb);
  return {static_cast<double>(nb) / n, static_cast<double>(na) * static_cast<double>(nb) / n};
}

inline void merge_one(double& mean_a, double& m2_a, double mean_b, double m2_b, MergeWeights w) {
  const double delta = mean_b - mean_a;
  mean_a = mean_a + delta * w.frac_b;
  m2_a = m2_a + m2_b + delta * delta * w.cross;
}

void push_sample(std::uint64_t& count, double* mean, double* m2, const double* x, int dims) {
  const MergeWeights w = weights(count, 1);
  for (int d = 0; d < dims; ++d) merge_one(mean[d], m2[d], x[d], 0.0, w);
  ++count;
}

}  // namespace

void MomentAccumulator::accumulate(const RealizationResult& result) {
  const std::size_t n = config_.dimension;
  if (result.size() != n || static_cast<std::size_t>(result.overlaps.rows()) != n) {
    throw ConfigError("realization dimension " + std::to_string(result.size()) +
                      " does not match accumulator dimension " + std::to_string(n));
  }
  MomentAccumulator single(config_);
  single.count_ = 1;
  single.next_index_ = result.index + 1;
  single.max_defect_ = unitarity_defect(result);
  const auto& o = result.overlaps;
  const auto idx = [](std::size_t k) { return static_cast<Eigen::Index>(k); };

  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t i = 0; i < n; ++i) single.second_.mean[a * n + i] = std::norm(o(idx(a), idx(i)));
  }
  for (std::size_t i = 0; i < n; ++i) single.eigenvalues_.mean[i] = result.eigenvalues[idx(i)];

  std::vector<double> re(n), im(n);
  for (std::size_t k = 0; k < config_.cyclic_pairs.size(); ++k) {
    const auto [a, b] = config_.cyclic_pairs[k];
    for (std::size_t i = 0; i < n; ++i) {
      const cplx v = o(idx(a), idx(i)) * std::conj(o(idx(b), idx(i)));
      re[i] = v.real();
      im[i] = v.imag();
    }
    auto& mean = single.cyclic_[k].mean;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) mean[i * n + j] = re[i] * re[j] + im[i] * im[j];
    }
  }
  for (std::size_t k = 0; k < config_.factorized_pairs.size(); ++k) {
    const auto [a, p] = config_.factorized_pairs[k];
    auto& mean = single.factorized_[k].mean;
    for (std::size_t i = 0; i < n; ++i) {
      const double wi = std::norm(o(idx(a), idx(i)));
      for (std::size_t j = 0; j < n; ++j) mean[i * n + j] = wi * std::norm(o(idx(p), idx(j)));
    }
  }
  std::size_t xk = 0, dk = 0;
  for (const auto& g : config_.green_probes) {
    if (g.kind == GreenProbe::Kind::Extradiag) {
      const cplx v = result.green(g.n, g.m, g.z1) * result.green(g.m, g.n, g.z2);
      single.extradiag_[xk].mean = {v.real(), v.imag()};
      ++xk;
    } else {
      auto& c = single.diag_[dk];
      c.mean_x = result.green(g.n, g.n, g.z1);
      c.mean_y = result.green(g.m, g.m, g.z2);
      ++dk;
    }
  }
  merge(single);
}

void MomentAccumulator::merge_values(const MomentAccumulator& other, std::uint64_t n_other) {
  const MergeWeights w = weights(count_, n_other);
  auto merge_stat = [w](Stat& a, const Stat& b) {
    for (std::size_t k = 0; k < a.mean.size(); ++k) merge_one(a.mean[k], a.m2[k], b.mean[k], b.m2[k], w);
  };
  merge_stat(second_, other.second_);
  merge_stat(eigenvalues_, other.eigenvalues_);
  for (std::size_t k = 0; k < cyclic_.size(); ++k) merge_stat(cyclic_[k], other.cyclic_[k]);
  for (std::size_t k = 0; k < factorized_.size(); ++k) merge_stat(factorized_[k], other.factorized_[k]);
  for (std::size_t k = 0; k < extradiag_.size(); ++k) merge_stat(extradiag_[k], other.extradiag_[k]);
  for (std::size_t k = 0; k < diag_.size(); ++k) {
    CovStat& a = diag_[k];
    const CovStat& b = other.diag_[k];
    const cplx dx = b.mean_x - a.mean_x;
    const cplx dy = b.mean_y - a.mean_y;
    const cplx increment = dx * dy * w.cross;
    a.mean_x = a.mean_x + dx * w.frac_b;
    a.mean_y = a.mean_y + dy * w.frac_b;
    a.comoment = a.comoment + b.comoment + increment;
    // Increment statistics: pool both sides, then add this step's increment.
    if (b.inc_count > 0) {
      const MergeWeights wi = weights(a.inc_count, b.inc_count);
      for (int d = 0; d < 2; ++d) merge_one(a.inc_mean[d], a.inc_m2[d], b.inc_mean[d], b.inc_m2[d], wi);
      a.inc_count += b.inc_count;
    }
    // Merging into an empty accumulator has no cross term to record.
    if (count_ > 0) {
      const double x[2] = {increment.real(), increment.imag()};
      push_sample(a.inc_count, a.inc_mean, a.inc_m2, x, 2);
    }
  }
}

void MomentAccumulator::merge(const MomentAccumulator& other) {
  if (other.config_.canonical() != config_.canonical()) {
    throw ConfigError("cannot merge accumulators with different tracking configs");
  }
  if (other.count_ > 0) {
    merge_values(other, other.count_);
    count_ += other.count_;
  }
  failures_.insert(failures_.end(), other.failures_.begin(), other.failures_.end());
  std::sort(failures_.begin(), failures_.end());
  next_index_ = std::max(next_index_, other.next_index_);
  max_defect_ = std::max(max_defect_, other.max_defect_);
}

void MomentAccumulator::record_failure(std::uint64_t index) {
  failures_.push_back(index);
  std::sort(failures_.begin(), failures_.end());
  next_index_ = std::max(next_index_, index + 1);
}

Estimate MomentAccumulator::finish(const Stat& s) const {
  Estimate e;
  e.mean = s.mean;
  e.std_error.assign(s.mean.size(), 0.0);
  if (count_ >= 2) {
    const double denom = static_cast<double>(count_) * static_cast<double>(count_ - 1);
    for (std::size_t k = 0; k < s.m2.size(); ++k) e.std_error[k] = std::sqrt(s.m2[k] / denom);
  }
  return e;
}

Estimate MomentAccumulator::second_moments() const { return finish(second_); }
Estimate MomentAccumulator::eigenvalues() const { return finish(eigenvalues_); }

Estimate MomentAccumulator::cyclic(std::size_t pair) const {
  if (pair >= cyclic_.size()) throw RangeError("no such cyclic pair");
  return finish(cyclic_[pair]);
}

Estimate MomentAccumulator::factorized(std::size_t pair) const {
  if (pair >= factorized_.size()) throw RangeError("no such factorized pair");
  return finish(factorized_[pair]);
}

ComplexEstimate MomentAccumulator::green(std::size_t probe) const {
  if (probe >= config_.green_probes.size()) throw RangeError("no such green probe");
  std::size_t xk = 0, dk = 0;
  for (std::size_t k = 0; k < probe; ++k) {
    (config_.green_probes[k].kind == GreenProbe::Kind::Extradiag ? xk : dk)++;
  }
  ComplexEstimate out;
  if (config_.green_probes[probe].kind == GreenProbe::Kind::Extradiag) {
    const Estimate e = finish(extradiag_[xk]);
    out.mean = {e.mean[0], e.mean[1]};
    out.stderr_re = e.std_error[0];
    out.stderr_im = e.std_error[1];
    return out;
  }
  const CovStat& c = diag_[dk];
  if (count_ >= 2) {
    out.mean = c.comoment / static_cast<double>(count_ - 1);
  }
  // The increments (x_k - mean_x)(y_k - mean_y)(k-1)/k are close to
  // independent samples of the centred product; their spread gives the error.
  if (c.inc_count >= 2) {
    const double denom = static_cast<double>(c.inc_count) * static_cast<double>(c.inc_count - 1);
    out.stderr_re = std::sqrt(c.inc_m2[0] / denom);
    out.stderr_im = std::sqrt(c.inc_m2[1] / denom);
  }
  return out;
}

namespace {

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

bool same_bits(cplx a, cplx b) { return same_bits(a.real(), b.real()) && same_bits(a.imag(), b.imag()); }

}  // namespace

bool MomentAccumulator::identical(const MomentAccumulator& other) const {
  if (config_.canonical() != other.config_.canonical()) return false;
  if (count_ != other.count_ || next_index_ != other.next_index_ ||
      failures_ != other.failures_ || !same_bits(max_defect_, other.max_defect_)) {
    return false;
  }
  auto eq = [](const Stat& a, const Stat& b) { return same_bits(a.mean, b.mean) && same_bits(a.m2, b.m2); };
  auto eq_all = [&](const std::vector<Stat>& a, const std::vector<Stat>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t k = 0; k < a.size(); ++k) {
      if (!eq(a[k], b[k])) return false;
    }
    return true;
  };
  if (!eq(second_, other.second_) || !eq(eigenvalues_, other.eigenvalues_) ||
      !eq_all(cyclic_, other.cyclic_) || !eq_all(factorized_, other.factorized_) ||
      !eq_all(extradiag_, other.extradiag_)) {
    return false;
  }
  for (std::size_t k = 0; k < diag_.size(); ++k) {
    const CovStat& a = diag_[k];
    const CovStat& b = other.diag_[k];
    if (!same_bits(a.mean_x, b.mean_x) || !same_bits(a.mean_y, b.mean_y) ||
        !same_bits(a.comoment, b.comoment) || a.inc_count != b.inc_count ||
        !same_bits(a.inc_mean[0], b.inc_mean[0]) || !same_bits(a.inc_mean[1], b.inc_mean[1]) ||
        !same_bits(a.inc_m2[0], b.inc_m2[0]) || !same_bits(a.inc_m2[1], b.inc_m2[1])) {
      return false;
    }
  }
  return true;
}

template <class Archive>
void serialize_state(Archive& ar, MomentAccumulator& acc) {
  auto stat = [&ar](MomentAccumulator::Stat& s) { ar(s.mean, s.m2); };
  ar(acc.count_, acc.next_index_, acc.failures_, acc.max_defect_);
  stat(acc.second_);
  stat(acc.eigenvalues_);
  for (auto& s : acc.cyclic_) stat(s);
  for (auto& s : acc.factorized_) stat(s);
  for (auto& s : acc.extradiag_) stat(s);
  for (auto& c : acc.diag_) {
    ar(c.mean_x, c.mean_y, c.comoment, c.inc_count, c.inc_mean[0], c.inc_mean[1], c.inc_m2[0],
       c.inc_m2[1]);
  }
}

namespace {

template <class Archive>
void archive_tracking(Archive& ar, TrackingConfig& t) {
  std::uint64_t dim = t.dimension;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> cyc(t.cyclic_pairs.begin(), t.cyclic_pairs.end());
  std::vector<std::pair<std::uint64_t, std::uint64_t>> fac(t.factorized_pairs.begin(),
                                                           t.factorized_pairs.end());
  std::vector<std::uint64_t> kinds, ns, ms;
  std::vector<cplx> z1s, z2s;
  for (const auto& g : t.green_probes) {
    kinds.push_back(g.kind == GreenProbe::Kind::Extradiag ? 0 : 1);
    ns.push_back(g.n);
    ms.push_back(g.m);
    z1s.push_back(g.z1);
    z2s.push_back(g.z2);
  }
  ar(dim, cyc, fac, kinds, ns, ms, z1s, z2s);
  t.dimension = static_cast<std::size_t>(dim);
  t.cyclic_pairs.assign(cyc.begin(), cyc.end());
  t.factorized_pairs.assign(fac.begin(), fac.end());
  t.green_probes.clear();
  for (std::size_t k = 0; k < kinds.size(); ++k) {
    t.green_probes.push_back({kinds[k] == 0 ? GreenProbe::Kind::Extradiag : GreenProbe::Kind::Diag,
                              static_cast<std::size_t>(ns[k]), static_cast<std::size_t>(ms[k]),
                              z1s[k], z2s[k]});
  }
}

}  // namespace

std::string MomentAccumulator::serialize() const {
  std::ostringstream os(std::ios::binary);
  {
    cereal::PortableBinaryOutputArchive ar(os);
    TrackingConfig t = config_;
    archive_tracking(ar, t);
    serialize_state(ar, const_cast<MomentAccumulator&>(*this));
  }
  return os.str();
}

MomentAccumulator MomentAccumulator::deserialize(const std::string& bytes) {
  std::istringstream is(bytes, std::ios::binary);
  try {
    cereal::PortableBinaryInputArchive ar(is);
    TrackingConfig t;
    archive_tracking(ar, t);
    MomentAccumulator acc(std::move(t));
    serialize_state(ar, acc);
    return acc;
  } catch (const cereal::Exception& e) {
    throw IntegrityError(std::string("malformed accumulator payload: ") + e.what());
  }
}

Estimate estimate_mean_positions(const MomentAccumulator& acc) {
  if (acc.count() < 2) {
    throw InsufficientDataError("mean positions need at least 2 realizations, have " +
                                std::to_string(acc.count()));
  }
  return acc.eigenvalues();
}

namespace {

constexpr char kMagic[8] = {'E', 'O', 'V', 'C', 'K', 'P', 'T', '\n'};
constexpr std::uint32_t kFormatVersion = 1;
constexpr std::size_t kDigestHex = 64;

void put_u64(std::string& out, std::uint64_t v) {
  for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

std::uint64_t get_u64(const std::string& in, std::size_t& pos) {
  if (pos + 8 > in.size()) throw IntegrityError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int k = 0; k < 8; ++k) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + k])) << (8 * k);
  }
  pos += 8;
  return v;
}

}  // namespace

void checkpoint(const MomentAccumulator& acc, const std::filesystem::path& path,
                const std::string& config_hash) {
  std::string body(kMagic, sizeof(kMagic));
  put_u64(body, kFormatVersion);
  put_u64(body, config_hash.size());
  body += config_hash;
  const std::string payload = acc.serialize();
  put_u64(body, payload.size());
  body += payload;
  body += sha256_hex(body);
  detail::write_file_atomic(path, body);
}

MomentAccumulator restore(const std::filesystem::path& path, const std::string& config_hash) {
  const std::string data = detail::read_file(path);
  if (data.size() < sizeof(kMagic) + kDigestHex) throw IntegrityError("checkpoint truncated");
  const std::string body = data.substr(0, data.size() - kDigestHex);
  if (sha256_hex(body) != data.substr(data.size() - kDigestHex)) {
    throw IntegrityError("checkpoint checksum mismatch: " + path.string());
  }
  if (std::memcmp(body.data(), kMagic, sizeof(kMagic)) != 0) {
    throw IntegrityError("not a checkpoint file: " + path.string());
  }
  std::size_t pos = sizeof(kMagic);
  const std::uint64_t version = get_u64(body, pos);
  if (version != kFormatVersion) {
    throw IncompatibleCheckpointError("checkpoint format version " + std::to_string(version) +
                                      ", expected " + std::to_string(kFormatVersion));
  }
  const std::uint64_t hash_len = get_u64(body, pos);
  if (pos + hash_len > body.size()) throw IntegrityError("checkpoint truncated");
  const std::string stored_hash = body.substr(pos, hash_len);
  pos += hash_len;
  if (stored_hash != config_hash) {
    throw IncompatibleCheckpointError("checkpoint config hash " + stored_hash +
                                      " does not match " + config_hash);
  }
  const std::uint64_t payload_len = get_u64(body, pos);
  if (pos + payload_len != body.size()) throw IntegrityError("checkpoint length mismatch");
  return MomentAccumulator::deserialize(body.substr(pos));
}

void run_monte_carlo(const BareSpectrum& spectrum, const InteractionSpec& interaction,
                     const RunOptions& options, MomentAccumulator& acc) {
  interaction.validate();
  if (acc.config().dimension != spectrum.size()) {
    throw ConfigError("tracking dimension does not match the spectrum size");
  }
  const unsigned threads = std::max(1u, options.threads);
  const std::uint64_t batch = 8ull * threads;
  std::uint64_t next_checkpoint =
      options.checkpoint_every ? (acc.next_index() / options.checkpoint_every + 1) * options.checkpoint_every
                               : 0;

  std::vector<std::optional<RealizationResult>> slots;
  std::vector<std::exception_ptr> errors;
  while (acc.next_index() < options.realizations) {
    const std::uint64_t begin = acc.next_index();
    const std::uint64_t end = std::min(options.realizations, begin + batch);
    const std::size_t size = static_cast<std::size_t>(end - begin);
    slots.assign(size, std::nullopt);
    errors.assign(size, nullptr);
    std::atomic<std::size_t> cursor{0};
    auto work = [&] {
      for (std::size_t k = cursor++; k < size; k = cursor++) {
        try {
          slots[k] = run_realization(spectrum, interaction, begin + k, options.master_seed);
        } catch (const RealizationError&) {
          errors[k] = std::current_exception();
        }
      }
    };
    if (threads == 1 || size == 1) {
      work();
    } else {
      std::vector<std::jthread> pool;
      for (unsigned t = 0; t < std::min<std::size_t>(threads, size); ++t) pool.emplace_back(work);
    }
    for (std::size_t k = 0; k < size; ++k) {
      if (slots[k]) {
        acc.accumulate(*slots[k]);
      } else {
        acc.record_failure(begin + k);
      }
    }
    if (options.progress) options.progress(acc.next_index(), options.realizations);
    if (next_checkpoint && !options.checkpoint_path.empty() && acc.next_index() >= next_checkpoint) {
      checkpoint(acc, options.checkpoint_path, options.config_hash);
      next_checkpoint += options.checkpoint_every;
    }
  }
}

namespace {

CsvTable mc_skeleton(const MomentAccumulator& acc, const std::string& kind) {
  CsvTable t;
  t.set_meta("kind", kind);
  t.set_meta("index_convention", "0-based, both bases sorted by descending energy");
  t.set_meta("n_levels", std::to_string(acc.config().dimension));
  t.set_meta("realizations", std::to_string(acc.count()));
  t.set_meta("failures", std::to_string(acc.failures().size()));
  t.columns = {"n", "m", "i", "j", "value", "mode", "stderr"};
  return t;
}

void add_row(CsvTable& t, std::size_t n, std::size_t m, std::size_t i, std::size_t j, double v,
             const std::string& mode, double se) {
  t.rows.push_back({std::to_string(n), std::to_string(m), std::to_string(i), std::to_string(j),
                    detail::format_double(v), mode, detail::format_double(se)});
}

}  // namespace

CsvTable mc_second_moment_table(const MomentAccumulator& acc, const std::vector<std::size_t>& rows) {
  CsvTable t = mc_skeleton(acc, "second");
  const Estimate e = acc.second_moments();
  const std::size_t n = acc.config().dimension;
  for (std::size_t r : rows) {
    if (r >= n) throw RangeError("row index out of range");
    for (std::size_t i = 0; i < n; ++i) add_row(t, r, r, i, i, e.mean[r * n + i], "second", e.std_error[r * n + i]);
  }
  return t;
}

CsvTable mc_cyclic_table(const MomentAccumulator& acc, std::size_t pair) {
  CsvTable t = mc_skeleton(acc, "cyclic");
  const Estimate e = acc.cyclic(pair);
  const auto [a, b] = acc.config().cyclic_pairs[pair];
  const std::size_t n = acc.config().dimension;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) add_row(t, a, b, i, j, e.mean[i * n + j], "mc", e.std_error[i * n + j]);
    }
  }
  return t;
}

CsvTable mc_factorized_table(const MomentAccumulator& acc, std::size_t pair) {
  CsvTable t = mc_skeleton(acc, "factorized");
  const Estimate e = acc.factorized(pair);
  const auto [a, p] = acc.config().factorized_pairs[pair];
  const std::size_t n = acc.config().dimension;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) add_row(t, a, p, i, j, e.mean[i * n + j], "factorized", e.std_error[i * n + j]);
    }
  }
  return t;
}

}  // namespace eigoverlap
