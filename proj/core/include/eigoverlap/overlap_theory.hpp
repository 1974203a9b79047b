#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "eigoverlap/csv.hpp"
#include "eigoverlap/resolvent.hpp"

namespace eigoverlap {

/// Numerator of the cyclic fourth moment.
///   Symmetrized:  l_n(i) l_m(j) - l_n(j) l_m(i)
///   PaperLiteral: l_n(i) l_m(i) - l_n(j) l_m(i)
enum class CyclicMode { Symmetrized, PaperLiteral };
std::string to_string(CyclicMode mode);
CyclicMode parse_cyclic_mode(std::string_view text);

/// Correction factor applied to the extra-diagonal covariance:
/// (1 + S2) or the geometric form 1/(1 - S2).
enum class Resummation { Linear, Geometric };
std::string to_string(Resummation r);
Resummation parse_resummation(std::string_view text);

/// Lorentzian local density of states of a bare level `epsilon` at `lambda`,
/// (1/pi) w / ((epsilon - lambda - shift)^2 + w^2) with shift = sigma_w^2 Re m
/// and w = sigma_w^2 Im m + eta_final. RangeError off-grid.
double ldos(const StieltjesSolution& solution, double epsilon, double lambda);

/// Closed-form overlap moments built on one solution of the loop equation.
///
/// Indices are 0-based in descending order for both bases. Densities dividing
/// a moment are the density of states per unit energy, N rho.
class OverlapTheory {
 public:
  explicit OverlapTheory(StieltjesSolution solution);

  const StieltjesSolution& solution() const noexcept { return *solution_; }
  std::size_t dimension() const noexcept { return positions_.size(); }
  /// Mean dressed eigenvalues, descending.
  const std::vector<double>& positions() const noexcept { return positions_; }
  /// N rho at each mean position.
  const std::vector<double>& dos_at_positions() const noexcept { return dos_; }

  /// l_{eps_n}(lambda_bar_i).
  double ldos_at(std::size_t n, std::size_t i) const;
  /// E|<phi_n|psi_i>|^2 = l_{eps_n}(lambda_bar_i) / (N rho(lambda_bar_i)).
  double second_moment(std::size_t n, std::size_t i) const;
  std::vector<double> second_moment_row(std::size_t n) const;

  /// E[O_ni conj(O_mi) O_mj conj(O_nj)] for n != m, i != j.
  /// DomainError on n == m or i == j, and when |lambda_bar_i - lambda_bar_j|
  /// or |eps_n - eps_m| is below 1e-8 sigma_w.
  double fourth_moment_cyclic(std::size_t n, std::size_t m, std::size_t i, std::size_t j,
                              CyclicMode mode = CyclicMode::Symmetrized) const;
  /// E[|O_ni|^2 |O_pj|^2] ~ second_moment(n, i) second_moment(p, j).
  /// DomainError for n == p and i == j, which needs Monte Carlo.
  double fourth_moment_factorized(std::size_t n, std::size_t p, std::size_t i,
                                  std::size_t j) const;

 private:
  void check_index(std::size_t k, const char* what) const;

  std::shared_ptr<const StieltjesSolution> solution_;
  std::vector<double> positions_;
  std::vector<double> dos_;
  std::vector<double> ldos_;  // row-major [n][i]
};

/// E[G_nm(z1) G_mn(z2)] for n != m:
/// (sigma_w^2/N) c(S2) g_n(z1) g_m(z1) g_n(z2) g_m(z2), g the mean diagonal
/// Green function and c the chosen correction factor.
cplx green_cov_extradiag(const StieltjesSolution& solution, std::size_t n, std::size_t m,
                         cplx z1, cplx z2, Resummation resummation = Resummation::Linear);

/// Cov(G_nn(z1), G_pp(z2)) for n != p, z1 != z2. NearResonanceError when the
/// resonance denominator falls below 1e-12 sigma_w in magnitude.
cplx green_cov_diag(const StieltjesSolution& solution, std::size_t n, std::size_t p, cplx z1,
                    cplx z2, Resummation resummation = Resummation::Linear);

/// Which pairs (G_nm, G_pq) have a non-vanishing covariance.
enum class PairClass { DiagDiag, CrossExtradiag, Zero };
std::string to_string(PairClass c);
PairClass zero_moment_classifier(std::size_t n, std::size_t m, std::size_t p, std::size_t q);

// Tables use the columns n, m, i, j, value, mode (0-based, descending order).
// Second moments are written with m = n and j = i.
CsvTable second_moment_table(const OverlapTheory& theory, const std::vector<std::size_t>& rows);
CsvTable cyclic_table(const OverlapTheory& theory, std::size_t n, std::size_t m, CyclicMode mode);
CsvTable factorized_table(const OverlapTheory& theory, std::size_t n, std::size_t p);

}  // namespace eigoverlap
