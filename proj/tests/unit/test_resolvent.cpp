#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "eigoverlap/error.hpp"
#include "eigoverlap/resolvent.hpp"
#include "test_support.hpp"

using namespace eigoverlap;
using eigoverlap::testing::semicircle_m;

namespace {

constexpr double pi = std::numbers::pi;

// Plain damped fixed point from a cold start, no annealing shortcuts.
cplx fixed_point_oracle(const BareSpectrum& s, double sigma_w, cplx z, double tol) {
  cplx m(0.0, 1.0);
  for (int k = 0; k < 2000000; ++k) {
    cplx f = 0.0;
    for (double e : s.levels()) f += 1.0 / (e - z - sigma_w * sigma_w * m);
    f /= static_cast<double>(s.size());
    if (std::abs(f - m) < tol) return f;
    m = 0.5 * m + 0.5 * f;
  }
  ADD_FAILURE() << "oracle did not converge";
  return m;
}

}  // namespace

TEST(SolveM, SemicircleAtI) {
  const BareSpectrum flat = make_constant_spectrum(64);
  const cplx m = solve_m(flat, 1.0, {0.0, 1.0}, SolverConfig::defaults(1.0));
  EXPECT_NEAR(m.real(), 0.0, 1e-12);
  EXPECT_NEAR(m.imag(), (std::sqrt(5.0) - 1.0) / 2.0, 1e-12);
}

TEST(SolveM, SemicircleOffAxis) {
  const BareSpectrum flat = make_constant_spectrum(16);
  for (cplx z : {cplx(0.3, 0.01), cplx(-1.7, 0.2), cplx(2.5, 1e-4), cplx(-0.1, 3.0)}) {
    const cplx m = solve_m(flat, 1.0, z, SolverConfig::defaults(1.0));
    EXPECT_NEAR(std::abs(m - semicircle_m(z)), 0.0, 1e-10) << z;
  }
}

TEST(SolveM, AgreesWithColdFixedPoint) {
  const BareSpectrum s = make_gaussian_spectrum(512, 1.0, 1);
  const double sigma_w = 0.2;
  for (cplx z : {cplx(0.0, 0.05), cplx(1.3, 0.02), cplx(-2.2, 0.1)}) {
    const cplx want = fixed_point_oracle(s, sigma_w, z, 1e-14);
    const cplx got = solve_m(s, sigma_w, z, SolverConfig::defaults(sigma_w));
    EXPECT_LT(std::abs(got - want), 1e-10) << z;
  }
}

TEST(SolveM, BareLimit) {
  // sigma_w -> 0: m approaches the bare (1/N) sum 1/(eps - z).
  const BareSpectrum s = make_gaussian_spectrum(32, 1.0, 2);
  const cplx z(0.1, 0.3);
  cplx bare = 0.0;
  for (double e : s.levels()) bare += 1.0 / (e - z);
  bare /= 32.0;
  double prev = 1.0;
  for (double sigma_w : {1e-1, 1e-2, 1e-3}) {
    const double err = std::abs(solve_m(s, sigma_w, z, SolverConfig::defaults(sigma_w)) - bare);
    EXPECT_LT(err, prev);
    prev = err;
  }
  EXPECT_LT(prev, 1e-5);
}

TEST(SolveM, ConjugateSymmetryAndHerglotz) {
  const BareSpectrum s = make_gaussian_spectrum(64, 1.0, 3);
  const StieltjesSolution sol = solve_adaptive(s, 0.3, SolverConfig::defaults(0.3));
  const cplx z(0.4, 0.02);
  EXPECT_EQ(sol.m_at(std::conj(z)), std::conj(sol.m_at(z)));
  for (const cplx& m : sol.m_values()) EXPECT_GE(m.imag(), 0.0);
}

TEST(SolveM, Errors) {
  const BareSpectrum s = make_gaussian_spectrum(8, 1.0, 4);
  EXPECT_THROW(solve_m(s, 0.1, {0.0, 0.0}, SolverConfig::defaults(0.1)), DomainError);
  EXPECT_THROW(solve_m(s, 0.1, {0.0, -1.0}, SolverConfig::defaults(0.1)), DomainError);
  SolverConfig starved = SolverConfig::defaults(0.1);
  starved.max_iters = 1;
  starved.tol = 1e-300;
  try {
    solve_m(s, 0.1, {0.0, 1e-3}, starved);
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError& e) {
    EXPECT_GT(e.residual(), 0.0);
  }
  SolverConfig bad = SolverConfig::defaults(0.1);
  bad.eta_schedule = {1e-3, 1e-2};
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Density, NormalizedAcrossCoupling) {
  const BareSpectrum s = make_gaussian_spectrum(512, 1.0, 1);
  for (double sigma_w : {0.01, 0.08, 0.4}) {
    const StieltjesSolution sol = solve_adaptive(s, sigma_w, SolverConfig::defaults(sigma_w));
    EXPECT_NEAR(sol.normalization(), 1.0, 1e-3) << sigma_w;
    for (double r : sol.rho()) ASSERT_GE(r, 0.0);
  }
}

TEST(Density, SemicircleProfile) {
  const BareSpectrum flat = make_constant_spectrum(256);
  const StieltjesSolution sol = solve_adaptive(flat, 1.0, SolverConfig::defaults(1.0));
  EXPECT_NEAR(sol.rho_at(0.0), 1.0 / pi, 1e-4);
  for (double x = -1.9; x <= 1.9; x += 0.05) {
    EXPECT_NEAR(sol.rho_at(x), std::sqrt(4.0 - x * x) / (2.0 * pi), 1e-3) << x;
  }
  EXPECT_NEAR(sol.rho_at(2.5), 0.0, 1e-5);
}

TEST(Density, SymmetricSpectrumGivesSymmetricDensity) {
  std::vector<double> levels;
  for (int k = 0; k < 40; ++k) {
    const double x = 0.05 + 0.1 * k;
    levels.push_back(x);
    levels.push_back(-x);
  }
  const BareSpectrum s(levels, 0.0, SpectrumSource::File);
  const StieltjesSolution sol = solve_adaptive(s, 0.3, SolverConfig::defaults(0.3));
  for (double x : {0.0, 0.37, 1.1, 2.9, 4.2}) {
    EXPECT_NEAR(sol.rho_at(x), sol.rho_at(-x), 1e-6) << x;
    EXPECT_NEAR(sol.m_interp(x).real(), -sol.m_interp(-x).real(), 1e-6) << x;
  }
}

TEST(Density, OffGridIsRangeError) {
  const BareSpectrum s = make_gaussian_spectrum(32, 1.0, 5);
  const StieltjesSolution sol = solve_adaptive(s, 0.2, SolverConfig::defaults(0.2));
  EXPECT_THROW(sol.m_interp(sol.grid().back() + 1.0), RangeError);
  EXPECT_THROW(mean_green_diag(sol, 0, sol.grid().front() - 1.0), RangeError);
}

TEST(Grid, UserGridMustCoverBand) {
  const BareSpectrum s = make_gaussian_spectrum(32, 1.0, 5);
  std::vector<double> narrow;
  for (int k = 0; k <= 100; ++k) narrow.push_back(-1.0 + 0.02 * k);
  EXPECT_THROW(solve_grid(s, 0.2, narrow, SolverConfig::defaults(0.2)), DomainError);
  std::vector<double> grid = default_grid(s, 0.2);
  EXPECT_TRUE(std::is_sorted(grid.begin(), grid.end()));
  EXPECT_LE(grid.front(), s.min() - 5 * 0.2);
  EXPECT_GE(grid.back(), s.max() + 5 * 0.2);
}

TEST(MeanPositions, TwoLevelSemicircle) {
  const BareSpectrum flat = make_constant_spectrum(2);
  const StieltjesSolution sol = solve_adaptive(flat, 1.0, SolverConfig::defaults(1.0));
  const std::vector<double> pos = mean_positions(sol, 2);
  ASSERT_EQ(pos.size(), 2u);
  // Upper quartile of the radius-2 semicircle.
  EXPECT_NEAR(pos[0], 0.8079, 2e-4);
  EXPECT_NEAR(pos[1], -0.8079, 2e-4);
}

TEST(MeanPositions, DescendingAndAntisymmetric) {
  const BareSpectrum flat = make_constant_spectrum(256);
  const StieltjesSolution sol = solve_adaptive(flat, 1.0, SolverConfig::defaults(1.0));
  const std::vector<double> pos = mean_positions(sol, 256);
  for (std::size_t k = 1; k < pos.size(); ++k) ASSERT_LT(pos[k], pos[k - 1]);
  for (std::size_t k = 0; k < pos.size(); ++k) EXPECT_NEAR(pos[k], -pos[255 - k], 1e-6);
}

TEST(SecondSubordinate, SemicircleClosedForm) {
  const BareSpectrum flat = make_constant_spectrum(32);
  const StieltjesSolution sol = solve_adaptive(flat, 1.0, SolverConfig::defaults(1.0));
  const cplx z1(0.0, 2.0), z2(0.0, 1.0);
  const cplx want = (semicircle_m(z1) - semicircle_m(z2)) / (z1 - z2);
  EXPECT_LT(std::abs(second_subordinate(sol, z1, z2) - want), 1e-8);
}

TEST(SecondSubordinate, ConjugatePairIsRealPositive) {
  const BareSpectrum s = make_gaussian_spectrum(128, 1.0, 6);
  const StieltjesSolution sol = solve_adaptive(s, 0.4, SolverConfig::defaults(0.4));
  for (double x : {-1.0, 0.0, 0.6}) {
    const cplx z(x, 0.05);
    const cplx s2 = second_subordinate(sol, z, std::conj(z));
    EXPECT_NEAR(s2.imag(), 0.0, 1e-12 * std::abs(s2));
    EXPECT_GT(s2.real(), 0.0);
  }
}

TEST(SecondSubordinate, DecaysFarFromBand) {
  // m(z) ~ -1/z at large |z|, so S2 ~ sigma^2 / (z1 z2).
  const BareSpectrum s = make_gaussian_spectrum(64, 1.0, 7);
  const StieltjesSolution sol = solve_adaptive(s, 0.3, SolverConfig::defaults(0.3));
  const cplx z1(1e4, 1.0), z2(-2e4, 3.0);
  const cplx s2 = second_subordinate(sol, z1, z2);
  EXPECT_LT(std::abs(s2 - 0.09 / (z1 * z2)) / std::abs(0.09 / (z1 * z2)), 1e-3);
}

TEST(SecondSubordinate, CoincidentLimitMatchesFiniteDifference) {
  const BareSpectrum s = make_gaussian_spectrum(128, 1.0, 8);
  const double sigma_w = 0.3;
  const StieltjesSolution sol = solve_adaptive(s, sigma_w, SolverConfig::defaults(sigma_w));
  for (cplx z : {cplx(0.2, 0.05), cplx(-1.4, 0.1), cplx(3.0, 0.02)}) {
    const double h = 1e-5;
    const cplx fd = (sol.m_at(z + h) - sol.m_at(z - h)) / (2.0 * h);
    const cplx an = sol.dm_at(z);
    EXPECT_LT(std::abs(fd - an) / std::abs(an), 1e-6) << z;
    EXPECT_LT(std::abs(second_subordinate(sol, z, z) - sigma_w * sigma_w * an), 1e-12 * std::abs(an));
    // Continuity across the switch.
    const cplx near = second_subordinate(sol, z, z + cplx(1e-7, 0.0));
    EXPECT_LT(std::abs(near - sigma_w * sigma_w * an) / std::abs(sigma_w * sigma_w * an), 1e-5);
  }
}

TEST(Subordination, ResidualAtSolverTolerance) {
  const BareSpectrum s = make_gaussian_spectrum(256, 1.0, 9);
  for (double sigma_w : {0.08, 0.2, 0.65}) {
    const SolverConfig cfg = SolverConfig::defaults(sigma_w);
    const StieltjesSolution sol = solve_adaptive(s, sigma_w, cfg);
    const SubordinationReport rep = subordination_check(sol);
    EXPECT_EQ(rep.rows.size(), sol.grid().size());
    EXPECT_LE(rep.max_residual, 10 * cfg.tol) << sigma_w;
  }
}

TEST(MeanGreen, DiagonalSumsToM) {
  const BareSpectrum s = make_gaussian_spectrum(64, 1.0, 10);
  const StieltjesSolution sol = solve_adaptive(s, 0.25, SolverConfig::defaults(0.25));
  const cplx z(0.3, 0.04);
  cplx sum = 0.0;
  for (std::size_t n = 0; n < 64; ++n) sum += mean_green_diag(sol, n, z);
  EXPECT_LT(std::abs(sum / 64.0 - sol.m_at(z)), 1e-11);
}

TEST(SolutionCsv, RoundTrip) {
  const auto dir = eigoverlap::testing::scratch_dir("resolvent");
  const BareSpectrum s = make_gaussian_spectrum(64, 1.0, 11);
  const SolverConfig cfg = SolverConfig::defaults(0.2);
  const StieltjesSolution sol = solve_adaptive(s, 0.2, cfg);
  write_solution_csv(dir / "solution.csv", sol);
  const StieltjesSolution back = read_solution_csv(dir / "solution.csv", s, 0.2, cfg);
  ASSERT_EQ(back.grid().size(), sol.grid().size());
  for (std::size_t k = 0; k < sol.grid().size(); ++k) {
    ASSERT_EQ(back.grid()[k], sol.grid()[k]);
    ASSERT_EQ(back.m_values()[k], sol.m_values()[k]);
  }
  EXPECT_THROW(read_solution_csv(dir / "solution.csv", s, 0.3, SolverConfig::defaults(0.3)), Error);
}
