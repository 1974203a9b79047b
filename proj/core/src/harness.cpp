#include "eigoverlap/harness.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "eigoverlap/error.hpp"
#include "eigoverlap/hashing.hpp"
#include "eigoverlap/montecarlo.hpp"
#include "eigoverlap/resolvent.hpp"
#include "text_util.hpp"

namespace eigoverlap {

namespace {
constexpr double kPi = std::numbers::pi;
}

std::string to_string(Experiment e) {
  switch (e) {
    case Experiment::SecondMoment:
      return "fig1-second-moment";
    case Experiment::FourthMoment:
      return "fig2-fourth-moment";
    case Experiment::SemicircleOracle:
      return "semicircle-oracle";
    case Experiment::CovarianceCheck:
      return "covariance-check";
    case Experiment::Custom:
      return "custom";
  }
  return "custom";
}

Experiment parse_experiment(std::string_view text) {
  for (Experiment e : {Experiment::SecondMoment, Experiment::FourthMoment,
                       Experiment::SemicircleOracle, Experiment::CovarianceCheck,
                       Experiment::Custom}) {
    if (text == to_string(e)) return e;
  }
  throw ConfigError("experiment: unknown value '" + std::string(text) + "'");
}

ExperimentConfig ExperimentConfig::preset(Experiment e) {
  ExperimentConfig c;
  c.experiment = e;
  switch (e) {
    case Experiment::SecondMoment:
      c.n = 256;
      c.sigma_w = {0.08, 0.2, 0.65};
      c.realizations = 2000;
      break;
    case Experiment::FourthMoment:
      c.n = 128;
      c.sigma_w = {0.4};
      c.realizations = 100000;
      c.rows = {32, 96};
      c.cyclic_pairs = {{32, 96}};
      c.factorized_pairs = {{32, 96}};
      break;
    case Experiment::SemicircleOracle:
      c.n = 256;
      c.flat_spectrum = true;
      c.sigma_w = {1.0};
      c.realizations = 0;
      c.eta_final = 1e-6;
      break;
    case Experiment::CovarianceCheck:
      c.n = 128;
      c.sigma_w = {0.4};
      c.realizations = 100000;
      c.rows = {32, 96};
      for (auto [a, b] : {std::pair<std::size_t, std::size_t>{16, 80}, {32, 96}, {48, 112},
                          {24, 56}, {40, 72}}) {
        c.green_triples.push_back({a, b, a});
        c.green_triples.push_back({a, b, b});
      }
      break;
    case Experiment::Custom:
      break;
  }
  return c;
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError(field + ": " + why);
  };
  if (n < 2) fail("n", "must be >= 2");
  if (!(sigma0 >= 0.0) || !std::isfinite(sigma0)) fail("sigma0", "must be >= 0");
  if (sigma_w.empty()) fail("sigma_w", "needs at least one value");
  for (double s : sigma_w) {
    if (!(s > 0.0) || !std::isfinite(s)) fail("sigma_w", "values must be > 0");
  }
  if (threads < 1) fail("threads", "must be >= 1");
  for (std::size_t r : rows) {
    if (r >= n) fail("rows", "index " + std::to_string(r) + " >= n");
  }
  for (const auto& [a, b] : cyclic_pairs) {
    if (a >= n || b >= n) fail("cyclic_pairs", "index out of range");
    if (a == b) fail("cyclic_pairs", "needs n != m");
  }
  for (const auto& [a, b] : factorized_pairs) {
    if (a >= n || b >= n) fail("factorized_pairs", "index out of range");
  }
  for (const auto& t : green_triples) {
    if (t.n >= n || t.m >= n || t.i >= n) fail("green_triples", "index out of range");
    if (t.n == t.m) fail("green_triples", "needs n != m");
  }
  if (!(green_eta > 0.0)) fail("green_eta", "must be > 0");
  if (eta_final < 0.0) fail("eta_final", "must be >= 0");
  if (!(solver_tol > 0.0)) fail("solver_tol", "must be > 0");
  if (max_iters < 1) fail("max_iters", "must be >= 1");
  if (!(mass_tol > 0.0)) fail("mass_tol", "must be > 0");
  if (!(mask_fraction >= 0.0 && mask_fraction < 1.0)) fail("mask_fraction", "must be in [0, 1)");
  if (!(rel_tol > 0.0)) fail("rel_tol", "must be > 0");
  if (!(z_tol > 0.0)) fail("z_tol", "must be > 0");
  if (!(corr_min >= -1.0 && corr_min <= 1.0)) fail("corr_min", "must be in [-1, 1]");
  if (!(sign_min >= 0.0 && sign_min <= 1.0)) fail("sign_min", "must be in [0, 1]");
}

namespace {

using detail::format_double;

std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t k = 0; k < v.size(); ++k) out += (k ? "," : "") + format_double(v[k]);
  return out;
}

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t k = 0; k < v.size(); ++k) out += (k ? "," : "") + std::to_string(v[k]);
  return out;
}

std::string join_pairs(const std::vector<std::pair<std::size_t, std::size_t>>& v) {
  std::string out;
  for (std::size_t k = 0; k < v.size(); ++k) {
    out += (k ? "," : "") + std::to_string(v[k].first) + ":" + std::to_string(v[k].second);
  }
  return out;
}

std::string join_triples(const std::vector<GreenTriple>& v) {
  std::string out;
  for (std::size_t k = 0; k < v.size(); ++k) {
    out += (k ? "," : "") + std::to_string(v[k].n) + ":" + std::to_string(v[k].m) + ":" +
           std::to_string(v[k].i);
  }
  return out;
}

double to_double(const std::string& key, std::string_view s) {
  double v = 0.0;
  if (!detail::parse_double(detail::trim(s), v)) {
    throw ConfigError(key + ": expected a number, got '" + std::string(s) + "'");
  }
  return v;
}

template <class Int>
Int to_int(const std::string& key, std::string_view s) {
  Int v{};
  if (!detail::parse_int(detail::trim(s), v)) {
    throw ConfigError(key + ": expected an integer, got '" + std::string(s) + "'");
  }
  return v;
}

bool to_bool(const std::string& key, std::string_view s) {
  s = detail::trim(s);
  if (s == "true") return true;
  if (s == "false") return false;
  throw ConfigError(key + ": expected true or false");
}

std::vector<std::string_view> list_items(std::string_view s) {
  std::vector<std::string_view> out;
  s = detail::trim(s);
  if (s.empty()) return out;
  for (auto item : detail::split(s, ',')) out.push_back(detail::trim(item));
  return out;
}

std::vector<std::size_t> index_tuple(const std::string& key, std::string_view s, std::size_t arity) {
  const auto parts = detail::split(s, ':');
  if (parts.size() != arity) {
    throw ConfigError(key + ": expected " + std::to_string(arity) + " colon-separated indices in '" +
                      std::string(s) + "'");
  }
  std::vector<std::size_t> out;
  for (auto p : parts) out.push_back(to_int<std::size_t>(key, p));
  return out;
}

}  // namespace

std::string ExperimentConfig::serialize() const {
  std::ostringstream os;
  os << "version = " << kVersion << "\n";
  os << "experiment = " << to_string(experiment) << "\n";
  os << "n = " << n << "\n";
  os << "sigma0 = " << format_double(sigma0) << "\n";
  os << "spectrum_seed = " << spectrum_seed << "\n";
  os << "spectrum_file = " << spectrum_file << "\n";
  os << "flat_spectrum = " << (flat_spectrum ? "true" : "false") << "\n";
  os << "ensemble = " << eigoverlap::to_string(ensemble) << "\n";
  os << "sigma_w = " << join_doubles(sigma_w) << "\n";
  os << "realizations = " << realizations << "\n";
  os << "master_seed = " << master_seed << "\n";
  os << "threads = " << threads << "\n";
  os << "output = " << output << "\n";
  os << "rows = " << join_sizes(rows) << "\n";
  os << "cyclic_pairs = " << join_pairs(cyclic_pairs) << "\n";
  os << "factorized_pairs = " << join_pairs(factorized_pairs) << "\n";
  os << "green_triples = " << join_triples(green_triples) << "\n";
  os << "green_eta = " << format_double(green_eta) << "\n";
  os << "mode = " << eigoverlap::to_string(mode) << "\n";
  os << "resummation = " << eigoverlap::to_string(resummation) << "\n";
  os << "eta_final = " << format_double(eta_final) << "\n";
  os << "solver_tol = " << format_double(solver_tol) << "\n";
  os << "max_iters = " << max_iters << "\n";
  os << "mass_tol = " << format_double(mass_tol) << "\n";
  os << "mask_fraction = " << format_double(mask_fraction) << "\n";
  os << "rel_tol = " << format_double(rel_tol) << "\n";
  os << "z_tol = " << format_double(z_tol) << "\n";
  os << "corr_min = " << format_double(corr_min) << "\n";
  os << "sign_min = " << format_double(sign_min) << "\n";
  os << "checkpoint_every = " << checkpoint_every << "\n";
  return os.str();
}

ExperimentConfig ExperimentConfig::parse(std::string_view text) {
  std::map<std::string, std::string> kv;
  int line_no = 0;
  for (std::string_view line : detail::split_lines(text)) {
    ++line_no;
    line = detail::trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected 'key = value'", line_no);
    std::string key(detail::trim(line.substr(0, eq)));
    if (key.empty()) throw ParseError("empty key", line_no);
    if (!kv.emplace(key, std::string(detail::trim(line.substr(eq + 1)))).second) {
      throw ConfigError(key + ": given more than once");
    }
  }
  auto version = kv.find("version");
  if (version == kv.end()) throw ConfigError("version: missing");
  if (to_int<int>("version", version->second) != kVersion) {
    throw ConfigError("version: unsupported value " + version->second);
  }
  kv.erase(version);

  Experiment experiment = Experiment::Custom;
  if (auto it = kv.find("experiment"); it != kv.end()) {
    experiment = parse_experiment(it->second);
    kv.erase(it);
  }
  ExperimentConfig c = preset(experiment);

  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"n", [&](auto& k, auto& v) { c.n = to_int<std::size_t>(k, v); }},
      {"sigma0", [&](auto& k, auto& v) { c.sigma0 = to_double(k, v); }},
      {"spectrum_seed", [&](auto& k, auto& v) { c.spectrum_seed = to_int<std::uint64_t>(k, v); }},
      {"spectrum_file", [&](auto&, auto& v) { c.spectrum_file = v; }},
      {"flat_spectrum", [&](auto& k, auto& v) { c.flat_spectrum = to_bool(k, v); }},
      {"ensemble", [&](auto&, auto& v) { c.ensemble = parse_ensemble(v); }},
      {"sigma_w",
       [&](auto& k, auto& v) {
         c.sigma_w.clear();
         for (auto item : list_items(v)) c.sigma_w.push_back(to_double(k, item));
       }},
      {"realizations", [&](auto& k, auto& v) { c.realizations = to_int<std::uint64_t>(k, v); }},
      {"master_seed", [&](auto& k, auto& v) { c.master_seed = to_int<std::uint64_t>(k, v); }},
      {"threads", [&](auto& k, auto& v) { c.threads = to_int<unsigned>(k, v); }},
      {"output", [&](auto&, auto& v) { c.output = v; }},
      {"rows",
       [&](auto& k, auto& v) {
         c.rows.clear();
         for (auto item : list_items(v)) c.rows.push_back(to_int<std::size_t>(k, item));
       }},
      {"cyclic_pairs",
       [&](auto& k, auto& v) {
         c.cyclic_pairs.clear();
         for (auto item : list_items(v)) {
           const auto t = index_tuple(k, item, 2);
           c.cyclic_pairs.emplace_back(t[0], t[1]);
         }
       }},
      {"factorized_pairs",
       [&](auto& k, auto& v) {
         c.factorized_pairs.clear();
         for (auto item : list_items(v)) {
           const auto t = index_tuple(k, item, 2);
           c.factorized_pairs.emplace_back(t[0], t[1]);
         }
       }},
      {"green_triples",
       [&](auto& k, auto& v) {
         c.green_triples.clear();
         for (auto item : list_items(v)) {
           const auto t = index_tuple(k, item, 3);
           c.green_triples.push_back({t[0], t[1], t[2]});
         }
       }},
      {"green_eta", [&](auto& k, auto& v) { c.green_eta = to_double(k, v); }},
      {"mode", [&](auto&, auto& v) { c.mode = parse_cyclic_mode(v); }},
      {"resummation", [&](auto&, auto& v) { c.resummation = parse_resummation(v); }},
      {"eta_final", [&](auto& k, auto& v) { c.eta_final = to_double(k, v); }},
      {"solver_tol", [&](auto& k, auto& v) { c.solver_tol = to_double(k, v); }},
      {"max_iters", [&](auto& k, auto& v) { c.max_iters = to_int<int>(k, v); }},
      {"mass_tol", [&](auto& k, auto& v) { c.mass_tol = to_double(k, v); }},
      {"mask_fraction", [&](auto& k, auto& v) { c.mask_fraction = to_double(k, v); }},
      {"rel_tol", [&](auto& k, auto& v) { c.rel_tol = to_double(k, v); }},
      {"z_tol", [&](auto& k, auto& v) { c.z_tol = to_double(k, v); }},
      {"corr_min", [&](auto& k, auto& v) { c.corr_min = to_double(k, v); }},
      {"sign_min", [&](auto& k, auto& v) { c.sign_min = to_double(k, v); }},
      {"checkpoint_every",
       [&](auto& k, auto& v) { c.checkpoint_every = to_int<std::uint64_t>(k, v); }},
  };
  for (const auto& [key, value] : kv) {
    auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError(key + ": unknown key");
    it->second(key, value);
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  return parse(detail::read_file(path));
}

namespace {

// serialize() minus the keys that must not influence artifacts.
std::string hashed_form(const ExperimentConfig& c) {
  std::string out;
  const std::string text = c.serialize();
  for (auto line : detail::split_lines(text)) {
    if (line.starts_with("threads =") || line.starts_with("output =")) continue;
    out += std::string(line) + "\n";
  }
  return out;
}

}  // namespace

std::string ExperimentConfig::hash() const { return git_blob_sha1(hashed_form(*this)); }

bool RunSummary::pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw DomainError("pearson needs equal sizes >= 2");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ma += a[k];
    mb += b[k];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    sab += (a[k] - ma) * (b[k] - mb);
    saa += (a[k] - ma) * (a[k] - ma);
    sbb += (b[k] - mb) * (b[k] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

// ---- compare ----

CsvTable ComparisonReport::to_table() const {
  CsvTable t;
  t.set_meta("theory_hash", theory_hash);
  t.set_meta("mc_hash", mc_hash);
  t.set_meta("max_abs_z", format_double(max_abs_z));
  t.set_meta("max_rel_error", format_double(max_rel_error));
  t.set_meta("pass", pass ? "true" : "false");
  t.columns = {"n", "m", "i", "j", "theory", "mc", "stderr", "z", "masked"};
  for (const auto& r : rows) {
    t.rows.push_back({std::to_string(r.n), std::to_string(r.m), std::to_string(r.i),
                      std::to_string(r.j), format_double(r.theory), format_double(r.mc),
                      format_double(r.stderr_mc), format_double(r.z), r.masked ? "1" : "0"});
  }
  return t;
}

ComparisonReport compare(const CsvTable& theory, const CsvTable& mc, const CompareOptions& options) {
  static const std::vector<std::string> required = {"n", "m", "i", "j", "value"};
  auto check_columns = [](const CsvTable& t, const std::string& which) {
    std::vector<std::string> missing;
    for (const auto& c : required) {
      if (std::find(t.columns.begin(), t.columns.end(), c) == t.columns.end()) missing.push_back(c);
    }
    if (!missing.empty()) {
      std::string names;
      for (const auto& m : missing) names += (names.empty() ? "" : ", ") + m;
      throw ComparisonError(which + " table is missing columns: " + names);
    }
  };
  check_columns(theory, "theory");
  check_columns(mc, "mc");

  using Key = std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>;
  auto keys = [](const CsvTable& t, const std::string& which) {
    std::vector<Key> out;
    const std::size_t cn = t.column_index("n"), cm = t.column_index("m"),
                      ci = t.column_index("i"), cj = t.column_index("j");
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      std::size_t v[4];
      const std::size_t cols[4] = {cn, cm, ci, cj};
      for (int k = 0; k < 4; ++k) {
        if (!detail::parse_int(t.rows[r][cols[k]], v[k])) {
          throw ComparisonError(which + " table has a non-integer index in row " +
                                std::to_string(r + 1));
        }
      }
      out.emplace_back(v[0], v[1], v[2], v[3]);
    }
    return out;
  };
  const auto tkeys = keys(theory, "theory");
  const auto mkeys = keys(mc, "mc");
  const auto tval = theory.numeric_column("value");
  const auto mval = mc.numeric_column("value");
  const bool has_se =
      std::find(mc.columns.begin(), mc.columns.end(), "stderr") != mc.columns.end();
  const auto mse = has_se ? mc.numeric_column("stderr") : std::vector<double>(mval.size(), 0.0);

  std::map<Key, std::size_t> lookup;
  for (std::size_t r = 0; r < mkeys.size(); ++r) lookup.emplace(mkeys[r], r);
  if (lookup.size() != tkeys.size()) {
    throw ComparisonError("index schemas differ: theory has " + std::to_string(tkeys.size()) +
                          " rows, mc has " + std::to_string(lookup.size()) + " distinct rows");
  }
  std::map<std::pair<std::size_t, std::size_t>, double> peak;
  for (std::size_t r = 0; r < tkeys.size(); ++r) {
    auto& p = peak[{std::get<0>(tkeys[r]), std::get<1>(tkeys[r])}];
    p = std::max(p, std::abs(tval[r]));
  }

  ComparisonReport report;
  report.theory_hash = git_blob_sha1(format_csv(theory));
  report.mc_hash = git_blob_sha1(format_csv(mc));
  for (std::size_t r = 0; r < tkeys.size(); ++r) {
    auto it = lookup.find(tkeys[r]);
    if (it == lookup.end()) {
      const auto& [n, m, i, j] = tkeys[r];
      throw ComparisonError("mc table has no row for (n, m, i, j) = (" + std::to_string(n) + ", " +
                            std::to_string(m) + ", " + std::to_string(i) + ", " +
                            std::to_string(j) + ")");
    }
    ComparisonRow row;
    std::tie(row.n, row.m, row.i, row.j) = tkeys[r];
    row.theory = tval[r];
    row.mc = mval[it->second];
    row.stderr_mc = mse[it->second];
    const double diff = row.mc - row.theory;
    if (row.stderr_mc > 0.0) {
      row.z = diff / row.stderr_mc;
    } else {
      row.z = diff == 0.0 ? 0.0 : std::copysign(HUGE_VAL, diff);
    }
    row.masked = std::abs(row.theory) >= options.mask_fraction * peak[{row.n, row.m}] &&
                 row.theory != 0.0;
    if (row.masked) {
      report.max_abs_z = std::max(report.max_abs_z, std::abs(row.z));
      report.max_rel_error = std::max(report.max_rel_error, std::abs(diff / row.theory));
    }
    report.rows.push_back(row);
  }
  report.pass = report.max_abs_z <= options.z_tol && report.max_rel_error <= options.rel_tol;
  return report;
}

ComparisonReport compare_files(const std::filesystem::path& theory, const std::filesystem::path& mc,
                               const CompareOptions& options) {
  return compare(read_csv(theory), read_csv(mc), options);
}

// ---- run ----

namespace {

SolverConfig solver_config(const ExperimentConfig& c, double sigma_w) {
  SolverConfig s = SolverConfig::defaults(sigma_w);
  if (c.eta_final > 0.0) {
    std::vector<double> schedule;
    for (double e : s.eta_schedule) {
      if (e > c.eta_final) schedule.push_back(e);
    }
    schedule.push_back(c.eta_final);
    s.eta_schedule = std::move(schedule);
  }
  s.tol = c.solver_tol;
  s.max_iters = c.max_iters;
  return s;
}

BareSpectrum build_spectrum(const ExperimentConfig& c) {
  if (c.flat_spectrum) return make_constant_spectrum(c.n, 0.0);
  if (!c.spectrum_file.empty()) {
    BareSpectrum s = load_spectrum(c.spectrum_file);
    if (s.size() != c.n) {
      throw ConfigError("spectrum_file: has " + std::to_string(s.size()) + " levels, n = " +
                        std::to_string(c.n));
    }
    return s;
  }
  return make_gaussian_spectrum(c.n, c.sigma0, c.spectrum_seed);
}

class RunWriter {
 public:
  RunWriter(std::filesystem::path dir, std::string hash)
      : dir_(std::move(dir)), hash_(std::move(hash)) {}

  void csv(const std::string& name, CsvTable table) {
    table.metadata.insert(table.metadata.begin(), {"config_hash", hash_});
    write_csv(dir_ / name, table);
    files_.push_back(name);
  }
  void text(const std::string& name, const std::string& content) {
    detail::write_file_atomic(dir_ / name, content);
    files_.push_back(name);
  }
  void track(const std::string& name) { files_.push_back(name); }
  const std::vector<std::string>& files() const { return files_; }

 private:
  std::filesystem::path dir_;
  std::string hash_;
  std::vector<std::string> files_;
};

void add_check(RunSummary& s, std::string name, double value, const std::string& relation,
               double threshold) {
  const bool pass = relation == "<=" ? value <= threshold : value >= threshold;
  s.checks.push_back({std::move(name), value, threshold, relation, pass});
}

double semicircle_density(double lambda, double sigma_w) {
  const double r2 = 4.0 * sigma_w * sigma_w - lambda * lambda;
  return r2 > 0.0 ? std::sqrt(r2) / (2.0 * kPi * sigma_w * sigma_w) : 0.0;
}

std::vector<std::size_t> default_rows(std::size_t n) { return {n / 4, n / 2, 3 * n / 4}; }

}  // namespace

RunSummary run_experiment(const ExperimentConfig& config) {
  config.validate();
  if (config.output.empty()) throw ConfigError("output: no output directory given");
  RunSummary summary;
  summary.config_hash = config.hash();
  summary.directory = config.output;
  std::filesystem::create_directories(summary.directory);
  RunWriter out(summary.directory, summary.config_hash);

  const BareSpectrum spectrum = build_spectrum(config);
  out.text("config.txt", hashed_form(config));
  out.text("spectrum.txt", format_spectrum(spectrum));
  const std::size_t n = spectrum.size();
  const std::vector<std::size_t> rows = config.rows.empty() ? default_rows(n) : config.rows;

  for (std::size_t s = 0; s < config.sigma_w.size(); ++s) {
    const double sigma_w = config.sigma_w[s];
    const std::string tag = "s" + std::to_string(s);
    RefineOptions refine;
    refine.mass_tol = config.mass_tol;
    StieltjesSolution solution =
        solve_adaptive(spectrum, sigma_w, solver_config(config, sigma_w), refine);
    write_solution_csv(summary.directory / ("solution_" + tag + ".csv"), solution,
                       {"config_hash=" + summary.config_hash});
    out.track("solution_" + tag + ".csv");

    const double center = spectrum.mean();
    const double rho_center = solution.rho_at(center);
    summary.metrics["sigma_w_" + tag] = sigma_w;
    summary.metrics["rho_center_" + tag] = rho_center;
    summary.metrics["gamma_over_spacing_" + tag] =
        static_cast<double>(n) * kPi * kPi * sigma_w * sigma_w * rho_center * rho_center;
    summary.metrics["normalization_" + tag] = solution.normalization();

    if (config.flat_spectrum) {
      const double err0 = std::abs(solution.rho_at(0.0) - 1.0 / (kPi * sigma_w));
      double profile = 0.0;
      for (double x : solution.grid()) {
        if (std::abs(x) <= 1.9 * sigma_w) {
          profile = std::max(profile, std::abs(solution.rho_at(x) - semicircle_density(x, sigma_w)));
        }
      }
      add_check(summary, "semicircle_center_error_" + tag, err0, "<=", 1e-4);
      add_check(summary, "semicircle_profile_error_" + tag, profile, "<=", 1e-3);
      continue;  // every level coincides: overlap moments are not defined
    }

    const OverlapTheory theory(std::move(solution));
    double worst_row = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const auto row = theory.second_moment_row(r);
      double sum = 0.0;
      for (double v : row) sum += v;
      worst_row = std::max(worst_row, std::abs(sum - 1.0));
    }
    add_check(summary, "second_moment_row_sum_" + tag, worst_row, "<=", 1e-2);
    const CsvTable th_second = second_moment_table(theory, rows);
    out.csv("theory_second_" + tag + ".csv", th_second);

    std::vector<CsvTable> th_cyclic[2];
    for (std::size_t k = 0; k < config.cyclic_pairs.size(); ++k) {
      const auto [a, b] = config.cyclic_pairs[k];
      for (CyclicMode mode : {CyclicMode::Symmetrized, CyclicMode::PaperLiteral}) {
        CsvTable t = cyclic_table(theory, a, b, mode);
        out.csv("theory_cyclic_" + std::to_string(k) + "_" + to_string(mode) + "_" + tag + ".csv", t);
        th_cyclic[mode == CyclicMode::Symmetrized ? 0 : 1].push_back(std::move(t));
      }
    }
    for (std::size_t k = 0; k < config.factorized_pairs.size(); ++k) {
      const auto [a, p] = config.factorized_pairs[k];
      out.csv("theory_factorized_" + std::to_string(k) + "_" + tag + ".csv",
              factorized_table(theory, a, p));
    }

    // Resolvent probes at mean positions.
    TrackingConfig tracking;
    tracking.dimension = n;
    tracking.cyclic_pairs = config.cyclic_pairs;
    tracking.factorized_pairs = config.factorized_pairs;
    std::vector<cplx> probe_theory;
    {
      CsvTable t;
      t.columns = {"kind", "n", "m", "re_z1", "im_z1", "re_z2", "im_z2", "re_value", "im_value"};
      std::set<std::pair<std::size_t, std::size_t>> diag_pairs;
      auto add_probe = [&](GreenProbe::Kind kind, std::size_t a, std::size_t b, cplx z1, cplx z2) {
        const cplx v = kind == GreenProbe::Kind::Extradiag
                           ? green_cov_extradiag(theory.solution(), a, b, z1, z2, config.resummation)
                           : green_cov_diag(theory.solution(), a, b, z1, z2, config.resummation);
        tracking.green_probes.push_back({kind, a, b, z1, z2});
        probe_theory.push_back(v);
        t.rows.push_back({kind == GreenProbe::Kind::Extradiag ? "extradiag" : "diag",
                          std::to_string(a), std::to_string(b), format_double(z1.real()),
                          format_double(z1.imag()), format_double(z2.real()),
                          format_double(z2.imag()), format_double(v.real()),
                          format_double(v.imag())});
      };
      for (const auto& g : config.green_triples) {
        const cplx z1{theory.positions()[g.i], config.green_eta};
        add_probe(GreenProbe::Kind::Extradiag, g.n, g.m, z1, std::conj(z1));
        diag_pairs.insert({g.n, g.m});
      }
      for (const auto& [a, b] : diag_pairs) {
        add_probe(GreenProbe::Kind::Diag, a, b, cplx{theory.positions()[a], config.green_eta},
                  cplx{theory.positions()[b], -config.green_eta});
      }
      if (!tracking.green_probes.empty()) out.csv("theory_green_" + tag + ".csv", t);
    }

    if (config.realizations == 0) continue;

    MomentAccumulator acc(tracking);
    const std::string run_hash = summary.config_hash + ":" + tag;
    const std::filesystem::path ckpt = summary.directory / ("checkpoint_" + tag + ".bin");
    if (config.checkpoint_every > 0 && std::filesystem::exists(ckpt)) {
      acc = restore(ckpt, run_hash);
    }
    RunOptions options;
    options.master_seed = config.master_seed + s;
    options.realizations = config.realizations;
    options.threads = config.threads;
    if (config.checkpoint_every > 0) {
      options.checkpoint_path = ckpt;
      options.config_hash = run_hash;
      options.checkpoint_every = config.checkpoint_every;
    }
    run_monte_carlo(spectrum, InteractionSpec{config.ensemble, sigma_w}, options, acc);
    if (config.checkpoint_every > 0) checkpoint(acc, ckpt, run_hash);

    summary.metrics["realizations_" + tag] = static_cast<double>(acc.count());
    summary.metrics["failures_" + tag] = static_cast<double>(acc.failures().size());
    add_check(summary, "unitarity_defect_" + tag, acc.max_unitarity_defect(), "<=", 1e-10);

    const CsvTable mc_second = mc_second_moment_table(acc, rows);
    out.csv("mc_second_" + tag + ".csv", mc_second);
    const ComparisonReport cmp =
        compare(th_second, mc_second, {config.mask_fraction, config.rel_tol, config.z_tol});
    out.csv("comparison_second_" + tag + ".csv", cmp.to_table());
    add_check(summary, "second_moment_max_rel_error_" + tag, cmp.max_rel_error, "<=", config.rel_tol);
    add_check(summary, "second_moment_max_abs_z_" + tag, cmp.max_abs_z, "<=", config.z_tol);

    for (std::size_t k = 0; k < config.cyclic_pairs.size(); ++k) {
      const CsvTable mc = mc_cyclic_table(acc, k);
      out.csv("mc_cyclic_" + std::to_string(k) + "_" + tag + ".csv", mc);
      const auto mv = mc.numeric_column("value");
      for (int mode = 0; mode < 2; ++mode) {
        const auto tv = th_cyclic[mode][k].numeric_column("value");
        const double corr = pearson(tv, mv);
        const std::string name = std::string(mode == 0 ? "symmetrized" : "paper-literal") +
                                 "_correlation_" + std::to_string(k) + "_" + tag;
        const bool checked = (mode == 0) == (config.mode == CyclicMode::Symmetrized);
        if (checked) {
          add_check(summary, name, corr, ">=", config.corr_min);
          // Sign agreement where the prediction is at least 10% of its peak.
          double peak = 0.0;
          for (double v : tv) peak = std::max(peak, std::abs(v));
          std::size_t total = 0, agree = 0;
          for (std::size_t r = 0; r < tv.size(); ++r) {
            if (std::abs(tv[r]) < 0.1 * peak) continue;
            ++total;
            agree += (tv[r] > 0.0) == (mv[r] > 0.0);
          }
          add_check(summary, "sign_agreement_" + std::to_string(k) + "_" + tag,
                    total ? static_cast<double>(agree) / static_cast<double>(total) : 0.0, ">=",
                    config.sign_min);
        } else {
          summary.metrics[name] = corr;
        }
      }
    }

    const Estimate second = acc.second_moments();
    for (std::size_t k = 0; k < config.factorized_pairs.size(); ++k) {
      const auto [a, p] = config.factorized_pairs[k];
      out.csv("mc_factorized_" + std::to_string(k) + "_" + tag + ".csv", mc_factorized_table(acc, k));
      const Estimate f = acc.factorized(k);
      std::size_t total = 0, within = 0;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          if (i == j) continue;
          const double product = second.mean[a * n + i] * second.mean[p * n + j];
          ++total;
          within += std::abs(f.mean[i * n + j] - product) <= 3.0 * f.std_error[i * n + j];
        }
      }
      add_check(summary, "factorization_within_3se_" + std::to_string(k) + "_" + tag,
                static_cast<double>(within) / static_cast<double>(total), ">=", 0.95);
    }

    if (!tracking.green_probes.empty()) {
      CsvTable t;
      t.columns = {"kind", "n", "m", "re_value", "im_value", "stderr_re", "stderr_im", "z_re", "z_im"};
      double worst = 0.0;
      for (std::size_t k = 0; k < tracking.green_probes.size(); ++k) {
        const auto& g = tracking.green_probes[k];
        const ComplexEstimate e = acc.green(k);
        auto z = [](double d, double se) {
          return se > 0.0 ? d / se : (d == 0.0 ? 0.0 : std::copysign(HUGE_VAL, d));
        };
        const double tiny = 1e-12 * std::abs(probe_theory[k]);
        const double dre = e.mean.real() - probe_theory[k].real();
        const double dim = e.mean.imag() - probe_theory[k].imag();
        const double zre = std::abs(dre) <= tiny ? 0.0 : z(dre, e.stderr_re);
        const double zim = std::abs(dim) <= tiny ? 0.0 : z(dim, e.stderr_im);
        if (g.kind == GreenProbe::Kind::Extradiag) {
          worst = std::max({worst, std::abs(zre), std::abs(zim)});
        } else {
          summary.metrics["diag_cov_max_abs_z_" + tag] =
              std::max(summary.metrics["diag_cov_max_abs_z_" + tag], std::max(std::abs(zre), std::abs(zim)));
        }
        t.rows.push_back({g.kind == GreenProbe::Kind::Extradiag ? "extradiag" : "diag",
                          std::to_string(g.n), std::to_string(g.m), format_double(e.mean.real()),
                          format_double(e.mean.imag()), format_double(e.stderr_re),
                          format_double(e.stderr_im), format_double(zre), format_double(zim)});
      }
      out.csv("mc_green_" + tag + ".csv", t);
      add_check(summary, "extradiag_cov_max_abs_z_" + tag, worst, "<=", 3.0);
    }
  }

  nlohmann::ordered_json j;
  j["config_hash"] = summary.config_hash;
  j["experiment"] = to_string(config.experiment);
  j["spectrum_hash"] = git_blob_sha1(format_spectrum(spectrum));
  j["metrics"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : summary.metrics) j["metrics"][k] = v;
  j["checks"] = nlohmann::ordered_json::array();
  for (const auto& c : summary.checks) {
    j["checks"].push_back({{"name", c.name},
                           {"value", c.value},
                           {"relation", c.relation},
                           {"threshold", c.threshold},
                           {"pass", c.pass}});
  }
  j["pass"] = summary.pass();
  std::vector<std::string> files = out.files();
  j["files"] = nlohmann::ordered_json::array();
  for (const auto& f : files) {
    j["files"].push_back({{"name", f}, {"hash", git_blob_sha1(detail::read_file(summary.directory / f))}});
  }
  detail::write_file_atomic(summary.directory / "summary.json", j.dump(2) + "\n");
  files.push_back("summary.json");
  summary.files = std::move(files);
  return summary;
}

// ---- report ----

std::string report(const std::filesystem::path& directory) {
  const std::vector<std::string> base = {"config.txt", "spectrum.txt", "summary.json"};
  std::vector<std::string> missing;
  for (const auto& f : base) {
    if (!std::filesystem::exists(directory / f)) missing.push_back(f);
  }
  nlohmann::ordered_json j;
  if (missing.empty()) {
    try {
      j = nlohmann::ordered_json::parse(detail::read_file(directory / "summary.json"));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("summary.json: ") + e.what());
    }
    for (const auto& f : j["files"]) {
      const std::string name = f["name"].get<std::string>();
      if (!std::filesystem::exists(directory / name)) missing.push_back(name);
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += "\n  " + m;
    throw MissingArtifactsError("missing artifacts in " + directory.string() + ":" + list);
  }

  std::ostringstream os;
  os << "run: " << directory.string() << "\n";
  os << "config hash: " << j["config_hash"].get<std::string>() << "\n\nparameters\n";
  const std::string config_text = detail::read_file(directory / "config.txt");
  for (auto line : detail::split_lines(config_text)) {
    if (!detail::trim(line).empty()) os << "  " << line << "\n";
  }
  os << "\nmetrics\n";
  for (const auto& [k, v] : j["metrics"].items()) {
    os << "  " << k << " = " << format_double(v.get<double>()) << "\n";
  }
  for (const auto& [k, v] : j["metrics"].items()) {
    if (k.starts_with("gamma_over_spacing_")) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.2f", v.get<double>());
      os << "Gamma/D at band center (" << k.substr(19) << "): " << buf << "\n";
    }
  }
  for (const auto& c : j["checks"]) {
    const std::string name = c["name"].get<std::string>();
    if (name.starts_with("semicircle_")) {
      os << "analytic vs solver density (" << name << "): "
         << format_double(c["value"].get<double>()) << "\n";
    }
  }
  os << "\nchecks\n";
  for (const auto& c : j["checks"]) {
    os << "  [" << (c["pass"].get<bool>() ? "PASS" : "FAIL") << "] " << c["name"].get<std::string>()
       << " = " << format_double(c["value"].get<double>()) << " "
       << c["relation"].get<std::string>() << " " << format_double(c["threshold"].get<double>())
       << "\n";
  }
  os << "overall: " << (j["pass"].get<bool>() ? "PASS" : "FAIL") << "\n\nfiles\n";
  for (const auto& f : j["files"]) {
    os << "  " << f["hash"].get<std::string>().substr(0, 12) << "  " << f["name"].get<std::string>()
       << "\n";
  }
  os << "  summary.json\n";
  return os.str();
}

}  // namespace eigoverlap
