#include "eigoverlap/overlap_theory.hpp"

#include <cmath>
#include <numbers>

#include "eigoverlap/error.hpp"
#include "text_util.hpp"

namespace eigoverlap {

std::string to_string(CyclicMode mode) {
  return mode == CyclicMode::Symmetrized ? "symmetrized" : "paper-literal";
}

CyclicMode parse_cyclic_mode(std::string_view text) {
  if (text == "symmetrized") return CyclicMode::Symmetrized;
  if (text == "paper-literal") return CyclicMode::PaperLiteral;
  throw ConfigError("unknown mode '" + std::string(text) +
                    "' (expected symmetrized or paper-literal)");
}

std::string to_string(Resummation r) { return r == Resummation::Linear ? "linear" : "geometric"; }

Resummation parse_resummation(std::string_view text) {
  if (text == "linear") return Resummation::Linear;
  if (text == "geometric") return Resummation::Geometric;
  throw ConfigError("unknown resummation '" + std::string(text) +
                    "' (expected linear or geometric)");
}

double ldos(const StieltjesSolution& solution, double epsilon, double lambda) {
  const cplx m = solution.m_interp(lambda);
  const double s2 = solution.sigma_w() * solution.sigma_w();
  const double shift = s2 * m.real();
  const double width = s2 * m.imag() + solution.eta_final();
  const double d = epsilon - lambda - shift;
  return width / (d * d + width * width) / std::numbers::pi;
}

OverlapTheory::OverlapTheory(StieltjesSolution solution)
    : solution_(std::make_shared<const StieltjesSolution>(std::move(solution))) {
  const std::size_t n_levels = solution_->dimension();
  positions_ = mean_positions(*solution_, n_levels);
  dos_.resize(n_levels);
  for (std::size_t i = 0; i < n_levels; ++i) {
    dos_[i] = static_cast<double>(n_levels) * solution_->rho_at(positions_[i]);
  }
  ldos_.resize(n_levels * n_levels);
  const auto& eps = solution_->spectrum();
  for (std::size_t n = 0; n < n_levels; ++n) {
    for (std::size_t i = 0; i < n_levels; ++i) {
      ldos_[n * n_levels + i] = ldos(*solution_, eps[n], positions_[i]);
    }
  }
}

void OverlapTheory::check_index(std::size_t k, const char* what) const {
  if (k >= dimension()) {
    throw RangeError(std::string(what) + "=" + std::to_string(k) + " out of range for N=" +
                     std::to_string(dimension()));
  }
}

double OverlapTheory::ldos_at(std::size_t n, std::size_t i) const {
  check_index(n, "n");
  check_index(i, "i");
  return ldos_[n * dimension() + i];
}

double OverlapTheory::second_moment(std::size_t n, std::size_t i) const {
  return ldos_at(n, i) / dos_[i];
}

std::vector<double> OverlapTheory::second_moment_row(std::size_t n) const {
  check_index(n, "n");
  std::vector<double> row(dimension());
  for (std::size_t i = 0; i < dimension(); ++i) row[i] = second_moment(n, i);
  return row;
}

double OverlapTheory::fourth_moment_cyclic(std::size_t n, std::size_t m, std::size_t i,
                                           std::size_t j, CyclicMode mode) const {
  check_index(n, "n");
  check_index(m, "m");
  check_index(i, "i");
  check_index(j, "j");
  if (n == m) throw DomainError("cyclic fourth moment needs n != m");
  if (i == j) throw DomainError("cyclic fourth moment needs i != j");
  const double sigma_w = solution_->sigma_w();
  const double dl = positions_[i] - positions_[j];
  const double de = solution_->spectrum()[n] - solution_->spectrum()[m];
  const double floor = 1e-8 * sigma_w;
  if (std::abs(dl) < floor || std::abs(de) < floor) {
    throw DomainError("near-degenerate denominator in cyclic fourth moment (n=" +
                      std::to_string(n) + ", m=" + std::to_string(m) + ", i=" +
                      std::to_string(i) + ", j=" + std::to_string(j) + ")");
  }
  const std::size_t d = dimension();
  const double lni = ldos_[n * d + i];
  const double lnj = ldos_[n * d + j];
  const double lmi = ldos_[m * d + i];
  const double lmj = ldos_[m * d + j];
  const double k = mode == CyclicMode::Symmetrized ? lni * lmj - lnj * lmi : lni * lmi - lnj * lmi;
  const double s2 = sigma_w * sigma_w;
  return -(s2 / static_cast<double>(d)) * k / (dos_[i] * dos_[j] * dl * de);
}

double OverlapTheory::fourth_moment_factorized(std::size_t n, std::size_t p, std::size_t i,
                                               std::size_t j) const {
  if (n == p && i == j) {
    throw DomainError("factorized fourth moment excludes n == p with i == j; estimate it by "
                      "Monte Carlo");
  }
  return second_moment(n, i) * second_moment(p, j);
}

cplx green_cov_extradiag(const StieltjesSolution& solution, std::size_t n, std::size_t m,
                         cplx z1, cplx z2, Resummation resummation) {
  if (n == m) throw DomainError("extra-diagonal covariance needs n != m");
  if (z1.imag() == 0.0 || z2.imag() == 0.0) {
    throw DomainError("covariance points must lie off the real axis");
  }
  const double s2 = solution.sigma_w() * solution.sigma_w();
  const cplx f = mean_green_diag(solution, n, z1) * mean_green_diag(solution, m, z1) *
                 mean_green_diag(solution, n, z2) * mean_green_diag(solution, m, z2);
  const cplx s = second_subordinate(solution, z1, z2);
  const cplx factor = resummation == Resummation::Linear ? 1.0 + s : 1.0 / (1.0 - s);
  return s2 / static_cast<double>(solution.dimension()) * factor * f;
}

cplx green_cov_diag(const StieltjesSolution& solution, std::size_t n, std::size_t p, cplx z1,
                    cplx z2, Resummation resummation) {
  if (n == p) throw DomainError("diagonal covariance needs n != p");
  if (z1 == z2) throw DomainError("diagonal covariance needs z1 != z2");
  const double sigma_w = solution.sigma_w();
  const double s2 = sigma_w * sigma_w;
  const cplx denom = solution.spectrum()[n] - solution.spectrum()[p] + z2 - z1 +
                     s2 * (solution.m_at(z2) - solution.m_at(z1));
  if (std::abs(denom) < 1e-12 * sigma_w) {
    throw NearResonanceError("diagonal covariance is at a resonance (n=" + std::to_string(n) +
                             ", p=" + std::to_string(p) + ")");
  }
  auto c = [&](cplx a, cplx b) { return green_cov_extradiag(solution, p, n, a, b, resummation); };
  const cplx inner = c(z2, z2) - c(z2, z1) - c(z1, z2) + c(z1, z1);
  return -(s2 / static_cast<double>(solution.dimension())) / (z2 - z1) * inner / denom;
}

std::string to_string(PairClass c) {
  switch (c) {
    case PairClass::DiagDiag:
      return "diag-diag";
    case PairClass::CrossExtradiag:
      return "cross-extradiag";
    case PairClass::Zero:
      return "zero";
  }
  return "zero";
}

PairClass zero_moment_classifier(std::size_t n, std::size_t m, std::size_t p, std::size_t q) {
  if (n == m && p == q) return PairClass::DiagDiag;
  if (n == q && m == p) return PairClass::CrossExtradiag;
  return PairClass::Zero;
}

namespace {

CsvTable table_skeleton(const OverlapTheory& theory, const std::string& kind) {
  CsvTable t;
  t.set_meta("kind", kind);
  t.set_meta("index_convention", "0-based, both bases sorted by descending energy");
  t.set_meta("n_levels", std::to_string(theory.dimension()));
  t.set_meta("sigma_w", detail::format_double(theory.solution().sigma_w()));
  t.columns = {"n", "m", "i", "j", "value", "mode"};
  return t;
}

void add_row(CsvTable& t, std::size_t n, std::size_t m, std::size_t i, std::size_t j, double v,
             const std::string& mode) {
  t.rows.push_back({std::to_string(n), std::to_string(m), std::to_string(i), std::to_string(j),
                    detail::format_double(v), mode});
}

}  // namespace

CsvTable second_moment_table(const OverlapTheory& theory, const std::vector<std::size_t>& rows) {
  CsvTable t = table_skeleton(theory, "second");
  for (std::size_t n : rows) {
    for (std::size_t i = 0; i < theory.dimension(); ++i) {
      add_row(t, n, n, i, i, theory.second_moment(n, i), "second");
    }
  }
  return t;
}

CsvTable cyclic_table(const OverlapTheory& theory, std::size_t n, std::size_t m, CyclicMode mode) {
  CsvTable t = table_skeleton(theory, "cyclic");
  const std::string tag = to_string(mode);
  for (std::size_t i = 0; i < theory.dimension(); ++i) {
    for (std::size_t j = 0; j < theory.dimension(); ++j) {
      if (i == j) continue;
      add_row(t, n, m, i, j, theory.fourth_moment_cyclic(n, m, i, j, mode), tag);
    }
  }
  return t;
}

CsvTable factorized_table(const OverlapTheory& theory, std::size_t n, std::size_t p) {
  CsvTable t = table_skeleton(theory, "factorized");
  for (std::size_t i = 0; i < theory.dimension(); ++i) {
    for (std::size_t j = 0; j < theory.dimension(); ++j) {
      if (i == j) continue;
      add_row(t, n, p, i, j, theory.fourth_moment_factorized(n, p, i, j), "factorized");
    }
  }
  return t;
}

}  // namespace eigoverlap
