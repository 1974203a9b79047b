#pragma once

#include <complex>
#include <cstddef>
#include <filesystem>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <math.h>  // pchip in Boost 1.74 calls isnan unqualified

#include <boost/math/interpolators/pchip.hpp>

#include "eigoverlap/spectra.hpp"

namespace eigoverlap {

using cplx = std::complex<double>;

/// Controls the self-consistent solve for the dressed Stieltjes transform
/// m(z) = (1/N) sum_n 1/(eps_n - z - sigma_w^2 m(z)).
struct SolverConfig {
  /// Imaginary offsets visited from the top, strictly decreasing. The last
  /// entry is the offset at which grid solutions are reported.
  std::vector<double> eta_schedule;
  /// Weight of the plain fixed-point step used when a Newton step is rejected.
  double damping = 0.5;
  /// Bound on |m - (1/N) sum_n g_n(m)|, relative to |m| once |m| > 1.
  double tol = 1e-12;
  int max_iters = 500;

  /// {1, 0.3, 0.1, 0.03, ..., 1e-6} * sigma_w.
  static SolverConfig defaults(double sigma_w);
  void validate() const;
  double eta_final() const { return eta_schedule.back(); }
};

/// (1/N) sum_n 1/(eps_n - z - sigma_w^2 m) - m.
cplx stieltjes_residual(std::span<const double> levels, double sigma_w, cplx z, cplx m);

/// dm/dz at a converged m, by implicit differentiation of the loop equation:
/// m' = A / (1 - sigma_w^2 A), A = (1/N) sum_n g_n^2.
cplx stieltjes_derivative(std::span<const double> levels, double sigma_w, cplx z, cplx m);

/// Solves the loop equation at one point with Im z > 0.
///
/// Newton steps on F(m) = m - (1/N) sum g_n(m), safeguarded by damped
/// fixed-point steps whenever Newton leaves the upper half-plane or fails to
/// reduce the residual. Without `warm_start` the solve anneals down the
/// schedule entries above Im z first. Throws DomainError for Im z <= 0 and
/// ConvergenceError (with the final residual) when max_iters is exhausted.
cplx solve_m(const BareSpectrum& spectrum, double sigma_w, cplx z, const SolverConfig& config,
             std::optional<cplx> warm_start = std::nullopt);

/// 4N uniform points over [min eps - 5 sigma_w, max eps + 5 sigma_w] merged
/// with the bare levels themselves.
std::vector<double> default_grid(const BareSpectrum& spectrum, double sigma_w);

struct RefineOptions {
  /// Local trapezoid error estimate (probability mass) above which an
  /// interval is bisected.
  double mass_tol = 2e-7;
  /// Intervals narrower than this fraction of the grid span are not split.
  double min_width_fraction = 1e-7;
  int max_passes = 40;
};

/// m(lambda + i eta_final) on a real grid plus the derived first-order
/// quantities. Immutable once built.
class StieltjesSolution {
 public:
  StieltjesSolution(BareSpectrum spectrum, double sigma_w, SolverConfig config,
                    std::vector<double> grid, std::vector<cplx> m_values);

  const BareSpectrum& spectrum() const noexcept { return spectrum_; }
  double sigma_w() const noexcept { return sigma_w_; }
  const SolverConfig& config() const noexcept { return config_; }
  double eta_final() const noexcept { return config_.eta_final(); }
  std::size_t dimension() const noexcept { return spectrum_.size(); }

  const std::vector<double>& grid() const noexcept { return grid_; }
  const std::vector<cplx>& m_values() const noexcept { return m_values_; }
  /// Unit-normalized density Im m / pi.
  const std::vector<double>& rho() const noexcept { return rho_; }
  /// Re m / pi.
  const std::vector<double>& hilbert() const noexcept { return hilbert_; }
  /// sigma_w^2 Re m: the energy shift of the Lorentzian.
  const std::vector<double>& s_shift() const noexcept { return s_shift_; }
  /// pi sigma_w^2 rho: the decay rate of the Lorentzian.
  const std::vector<double>& s_width() const noexcept { return s_width_; }

  bool contains(double lambda) const noexcept {
    return lambda >= grid_.front() && lambda <= grid_.back();
  }
  /// Monotone-cubic interpolation of m on the grid. RangeError off-grid.
  cplx m_interp(double lambda) const;
  double rho_at(double lambda) const { return m_interp(lambda).imag() / std::numbers::pi; }

  /// m at an arbitrary non-real z, solved directly; m(conj z) = conj m(z).
  cplx m_at(cplx z) const;
  /// dm/dz at an arbitrary non-real z.
  cplx dm_at(cplx z) const;

  /// Trapezoid integral of rho over the grid.
  double normalization() const;

 private:
  BareSpectrum spectrum_;
  double sigma_w_;
  SolverConfig config_;
  std::vector<double> grid_;
  std::vector<cplx> m_values_;
  std::vector<double> rho_, hilbert_, s_shift_, s_width_;
  boost::math::interpolators::pchip<std::vector<double>> re_interp_;
  boost::math::interpolators::pchip<std::vector<double>> im_interp_;
};

/// Anneals every grid point independently down the eta schedule.
/// The grid must be strictly increasing and cover
/// [min eps - 5 sigma_w, max eps + 5 sigma_w]; otherwise DomainError.
/// Convergence failures are rethrown naming (lambda, eta).
StieltjesSolution solve_grid(const BareSpectrum& spectrum, double sigma_w,
                             std::vector<double> grid, const SolverConfig& config);

/// solve_grid on default_grid(), then bisects intervals whose local trapezoid
/// error estimate exceeds `options.mass_tol` until the density is resolved.
StieltjesSolution solve_adaptive(const BareSpectrum& spectrum, double sigma_w,
                                 const SolverConfig& config, const RefineOptions& options = {});

/// E[G_nn(lambda + i eta_final)] = 1/(eps_n - z - sigma_w^2 m(z)) from the
/// interpolated m. RangeError off-grid.
cplx mean_green_diag(const StieltjesSolution& solution, std::size_t n, double lambda);
/// Same at an arbitrary non-real z, with m solved at z.
cplx mean_green_diag(const StieltjesSolution& solution, std::size_t n, cplx z);

/// Descending quantiles lambda_bar_1 > ... > lambda_bar_count with
/// count * int_{lambda_bar_j}^{inf} rho = j - 1/2, inverting the trapezoid
/// cumulative integral exactly on each grid interval.
std::vector<double> mean_positions(const StieltjesSolution& solution, std::size_t count);

/// S2(z1, z2) = sigma_w^2 (m(z1) - m(z2)) / (z1 - z2); below `switch_distance`
/// it returns the coincident limit sigma_w^2 m'(z1).
cplx second_subordinate(const StieltjesSolution& solution, cplx z1, cplx z2,
                        double switch_distance = 1e-9);

struct SubordinationReport {
  struct Row {
    cplx z;
    cplx m;
    cplx subordinated;
    double residual;
  };
  std::vector<Row> rows;
  double max_residual = 0.0;
};

/// Compares (1/N) sum_n 1/(eps_n - z - S(z)), S = sigma_w^2 m, with m at every
/// grid point (z = lambda + i eta_final).
SubordinationReport subordination_check(const StieltjesSolution& solution);

/// Columns: lambda, re_m, im_m, rho, s_shift, s_width, eta_final.
void write_solution_csv(const std::filesystem::path& path, const StieltjesSolution& solution,
                        const std::vector<std::string>& metadata = {});
/// Rebuilds a solution from its CSV; `spectrum`, `sigma_w` and `config` must
/// be the ones that produced it (sigma_w is cross-checked with the metadata).
StieltjesSolution read_solution_csv(const std::filesystem::path& path, BareSpectrum spectrum,
                                    double sigma_w, SolverConfig config);

}  // namespace eigoverlap
