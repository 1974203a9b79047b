#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "eigoverlap/rng.hpp"

namespace eigoverlap {

enum class SpectrumSource { GaussianSampled, File, Constant };

std::string_view to_string(SpectrumSource source);

/// Eigenvalues of the deterministic Hamiltonian, stored in descending order.
///
/// Index n of `levels()` is the bare basis index used everywhere else: the
/// bare Hamiltonian is represented as diag(levels()).
class BareSpectrum {
 public:
  /// Sorts `levels` descending. Throws InvalidDimensionError for fewer than
  /// two levels and DomainError for non-finite entries.
  BareSpectrum(std::vector<double> levels, double sigma0, SpectrumSource source);

  std::span<const double> levels() const noexcept { return levels_; }
  double operator[](std::size_t n) const { return levels_[n]; }
  std::size_t size() const noexcept { return levels_.size(); }
  double sigma0() const noexcept { return sigma0_; }
  SpectrumSource source() const noexcept { return source_; }

  double max() const noexcept { return levels_.front(); }
  double min() const noexcept { return levels_.back(); }
  double mean() const noexcept;

 private:
  std::vector<double> levels_;
  double sigma0_;
  SpectrumSource source_;
};

/// n centered Gaussian draws of standard deviation sigma0.
BareSpectrum make_gaussian_spectrum(std::size_t n, double sigma0, std::uint64_t seed);

/// n copies of `value` (the H0 = value * Id case).
BareSpectrum make_constant_spectrum(std::size_t n, double value = 0.0);

/// One decimal real per line; blank lines and lines starting with '#' are
/// skipped. Throws ParseError naming the offending line.
BareSpectrum load_spectrum(const std::filesystem::path& path);
BareSpectrum parse_spectrum(std::string_view text);

/// Shortest round-trip decimal form, one level per line, with a '#' header.
void save_spectrum(const std::filesystem::path& path, const BareSpectrum& spectrum);
std::string format_spectrum(const BareSpectrum& spectrum);

enum class Ensemble { GOE, GUE };

std::string_view to_string(Ensemble kind);
Ensemble parse_ensemble(std::string_view text);

struct InteractionSpec {
  Ensemble kind = Ensemble::GOE;
  double sigma_w = 0.1;

  void validate() const;
};

/// One draw of W. Real symmetric for GOE, complex Hermitian for GUE; both
/// triangles are filled from the same draws so the matrix is exactly
/// self-adjoint.
class InteractionSample {
 public:
  using Real = Eigen::MatrixXd;
  using Complex = Eigen::MatrixXcd;

  explicit InteractionSample(Real matrix) : matrix_(std::move(matrix)) {}
  explicit InteractionSample(Complex matrix) : matrix_(std::move(matrix)) {}

  bool is_real() const noexcept { return std::holds_alternative<Real>(matrix_); }
  const Real& real() const { return std::get<Real>(matrix_); }
  const Complex& complex() const { return std::get<Complex>(matrix_); }
  const std::variant<Real, Complex>& matrix() const noexcept { return matrix_; }
  std::size_t size() const noexcept;

  /// tr(W^2) with tr = Trace / N.
  double normalized_trace_square() const;
  /// max |W - W^dagger| over entries.
  double hermiticity_defect() const;

 private:
  std::variant<Real, Complex> matrix_;
};

/// GOE: off-diagonal N(0, s^2/(N+1)), diagonal N(0, 2 s^2/(N+1)).
/// GUE: off-diagonal real and imaginary parts N(0, s^2/(2N)), diagonal
/// N(0, s^2/N). Both have E[tr W^2] = s^2 exactly.
InteractionSample sample_interaction(const InteractionSpec& spec, std::size_t n, RngStream& stream);

}  // namespace eigoverlap
