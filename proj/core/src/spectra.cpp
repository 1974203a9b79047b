#include "eigoverlap/spectra.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include "eigoverlap/error.hpp"
#include "text_util.hpp"

namespace eigoverlap {

std::string_view to_string(SpectrumSource source) {
  switch (source) {
    case SpectrumSource::GaussianSampled:
      return "gaussian-sampled";
    case SpectrumSource::File:
      return "file";
    case SpectrumSource::Constant:
      return "constant";
  }
  return "unknown";
}

BareSpectrum::BareSpectrum(std::vector<double> levels, double sigma0, SpectrumSource source)
    : levels_(std::move(levels)), sigma0_(sigma0), source_(source) {
  if (levels_.size() < 2) {
    throw InvalidDimensionError("a spectrum needs at least 2 levels, got " +
                                std::to_string(levels_.size()));
  }
  if (!std::all_of(levels_.begin(), levels_.end(), [](double x) { return std::isfinite(x); })) {
    throw DomainError("spectrum contains non-finite levels");
  }
  if (!(sigma0_ >= 0.0)) throw DomainError("sigma0 must be >= 0");
  std::stable_sort(levels_.begin(), levels_.end(), std::greater<>());
}

double BareSpectrum::mean() const noexcept {
  return std::accumulate(levels_.begin(), levels_.end(), 0.0) /
         static_cast<double>(levels_.size());
}

BareSpectrum make_gaussian_spectrum(std::size_t n, double sigma0, std::uint64_t seed) {
  if (n < 2) throw InvalidDimensionError("spectrum dimension must be >= 2");
  if (!(sigma0 >= 0.0)) throw DomainError("sigma0 must be >= 0");
  RngStream stream(seed, StreamPurpose::Spectrum);
  std::vector<double> levels(n);
  for (auto& x : levels) x = sigma0 * stream.normal();
  return BareSpectrum(std::move(levels), sigma0, SpectrumSource::GaussianSampled);
}

BareSpectrum make_constant_spectrum(std::size_t n, double value) {
  if (n < 2) throw InvalidDimensionError("spectrum dimension must be >= 2");
  return BareSpectrum(std::vector<double>(n, value), 0.0, SpectrumSource::Constant);
}

BareSpectrum parse_spectrum(std::string_view text) {
  std::vector<double> levels;
  std::size_t line_no = 0;
  for (std::string_view line : detail::split_lines(text)) {
    ++line_no;
    const std::string_view body = detail::trim(line);
    if (body.empty() || body.front() == '#') continue;
    double value = 0.0;
    if (!detail::parse_double(body, value)) {
      throw ParseError("not a real number: '" + std::string(body) + "'", line_no);
    }
    if (!std::isfinite(value)) throw ParseError("non-finite level", line_no);
    levels.push_back(value);
  }
  if (levels.size() < 2) {
    throw ParseError("spectrum file needs at least 2 levels, found " +
                         std::to_string(levels.size()),
                     0);
  }
  return BareSpectrum(std::move(levels), 0.0, SpectrumSource::File);
}

BareSpectrum load_spectrum(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot read spectrum file " + path.string(), 0);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_spectrum(buffer.str());
}

std::string format_spectrum(const BareSpectrum& spectrum) {
  std::string out = "# eigoverlap spectrum, " + std::to_string(spectrum.size()) +
                    " levels, descending, source=" + std::string(to_string(spectrum.source())) +
                    "\n";
  for (double x : spectrum.levels()) {
    out += detail::format_double(x);
    out += '\n';
  }
  return out;
}

void save_spectrum(const std::filesystem::path& path, const BareSpectrum& spectrum) {
  detail::write_file_atomic(path, format_spectrum(spectrum));
}

std::string_view to_string(Ensemble kind) { return kind == Ensemble::GOE ? "GOE" : "GUE"; }

Ensemble parse_ensemble(std::string_view text) {
  if (text == "GOE" || text == "goe") return Ensemble::GOE;
  if (text == "GUE" || text == "gue") return Ensemble::GUE;
  throw ConfigError("unknown ensemble '" + std::string(text) + "' (expected GOE or GUE)");
}

void InteractionSpec::validate() const {
  if (!(sigma_w >= 0.0) || !std::isfinite(sigma_w)) {
    throw DomainError("sigma_w must be a finite number >= 0");
  }
}

std::size_t InteractionSample::size() const noexcept {
  return std::visit([](const auto& m) { return static_cast<std::size_t>(m.rows()); }, matrix_);
}

double InteractionSample::normalized_trace_square() const {
  return std::visit(
      [](const auto& m) { return m.squaredNorm() / static_cast<double>(m.rows()); }, matrix_);
}

double InteractionSample::hermiticity_defect() const {
  return std::visit(
      [](const auto& m) -> double { return (m - m.adjoint()).cwiseAbs().maxCoeff(); }, matrix_);
}

InteractionSample sample_interaction(const InteractionSpec& spec, std::size_t n,
                                     RngStream& stream) {
  if (n < 2) throw InvalidDimensionError("interaction dimension must be >= 2");
  spec.validate();
  const auto N = static_cast<Eigen::Index>(n);
  const double s2 = spec.sigma_w * spec.sigma_w;
  if (spec.kind == Ensemble::GOE) {
    const double off = std::sqrt(s2 / static_cast<double>(n + 1));
    const double diag = std::sqrt(2.0) * off;
    Eigen::MatrixXd w(N, N);
    for (Eigen::Index i = 0; i < N; ++i) {
      w(i, i) = diag * stream.normal();
      for (Eigen::Index j = i + 1; j < N; ++j) {
        const double x = off * stream.normal();
        w(i, j) = x;
        w(j, i) = x;
      }
    }
    return InteractionSample(std::move(w));
  }
  const double diag = std::sqrt(s2 / static_cast<double>(n));
  const double part = std::sqrt(s2 / (2.0 * static_cast<double>(n)));
  Eigen::MatrixXcd w(N, N);
  for (Eigen::Index i = 0; i < N; ++i) {
    w(i, i) = {diag * stream.normal(), 0.0};
    for (Eigen::Index j = i + 1; j < N; ++j) {
      const double re = part * stream.normal();
      const double im = part * stream.normal();
      w(i, j) = {re, im};
      w(j, i) = {re, -im};
    }
  }
  return InteractionSample(std::move(w));
}

}  // namespace eigoverlap
