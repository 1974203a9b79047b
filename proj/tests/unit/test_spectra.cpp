#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>

#include "eigoverlap/error.hpp"
#include "eigoverlap/spectra.hpp"
#include "test_support.hpp"

using namespace eigoverlap;

TEST(GaussianSpectrum, SortedWithUnitStd) {
  const BareSpectrum s = make_gaussian_spectrum(512, 1.0, 11);
  ASSERT_EQ(s.size(), 512u);
  EXPECT_TRUE(std::is_sorted(s.levels().begin(), s.levels().end(), std::greater<>()));
  const double mean = s.mean();
  double var = 0.0;
  for (double x : s.levels()) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / 511.0);
  EXPECT_NEAR(sd, 1.0, 3.0 / std::sqrt(2.0 * 512));
  EXPECT_EQ(s.source(), SpectrumSource::GaussianSampled);
  EXPECT_EQ(s.sigma0(), 1.0);
}

TEST(GaussianSpectrum, ZeroVarianceGivesZeros) {
  const BareSpectrum s = make_gaussian_spectrum(4, 0.0, 99);
  for (double x : s.levels()) EXPECT_EQ(x, 0.0);
}

TEST(GaussianSpectrum, Deterministic) {
  const BareSpectrum a = make_gaussian_spectrum(512, 1.0, 5);
  const BareSpectrum b = make_gaussian_spectrum(512, 1.0, 5);
  EXPECT_TRUE(std::equal(a.levels().begin(), a.levels().end(), b.levels().begin()));
  const BareSpectrum c = make_gaussian_spectrum(512, 1.0, 6);
  EXPECT_FALSE(std::equal(a.levels().begin(), a.levels().end(), c.levels().begin()));
}

TEST(GaussianSpectrum, MomentsConvergeWithN) {
  // Mean and variance of the draw approach (0, 1) as N grows.
  for (std::size_t n : {1000u, 100000u}) {
    const BareSpectrum s = make_gaussian_spectrum(n, 1.0, 3);
    double var = 0.0;
    for (double x : s.levels()) var += x * x;
    var /= static_cast<double>(n);
    EXPECT_NEAR(s.mean(), 0.0, 5.0 / std::sqrt(double(n)));
    EXPECT_NEAR(var, 1.0, 5.0 * std::sqrt(2.0 / double(n)));
  }
}

TEST(GaussianSpectrum, RejectsTooSmall) {
  EXPECT_THROW(make_gaussian_spectrum(1, 1.0, 0), InvalidDimensionError);
  EXPECT_THROW(make_gaussian_spectrum(0, 1.0, 0), InvalidDimensionError);
}

TEST(SpectrumFile, ParsesAndSorts) {
  const BareSpectrum s = parse_spectrum("1.0\n-1.0\n0.0");
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0], 1.0);
  EXPECT_EQ(s[1], 0.0);
  EXPECT_EQ(s[2], -1.0);
  EXPECT_EQ(s.source(), SpectrumSource::File);
  EXPECT_EQ(s.sigma0(), 0.0);
}

TEST(SpectrumFile, CommentsAndBlankLines) {
  const BareSpectrum s = parse_spectrum("# header\n\n2.5\n  # note\n-0.5\n");
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0], 2.5);
}

TEST(SpectrumFile, ErrorNamesLine) {
  try {
    parse_spectrum("1.0\nabc");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  EXPECT_THROW(parse_spectrum("1.0\n"), ParseError);
  EXPECT_THROW(parse_spectrum("1.0\ninf\n"), ParseError);
  EXPECT_THROW(load_spectrum("/nonexistent/eigoverlap/levels.txt"), Error);
}

TEST(SpectrumFile, RoundTripIsExact) {
  const auto dir = eigoverlap::testing::scratch_dir("spectra");
  const BareSpectrum s = make_gaussian_spectrum(512, 1.0, 17);
  save_spectrum(dir / "levels.txt", s);
  const BareSpectrum back = load_spectrum(dir / "levels.txt");
  ASSERT_EQ(back.size(), s.size());
  for (std::size_t k = 0; k < s.size(); ++k) ASSERT_EQ(back[k], s[k]);
}

TEST(Interaction, ExactlyHermitian) {
  for (Ensemble kind : {Ensemble::GOE, Ensemble::GUE}) {
    RngStream stream(1, StreamPurpose::Interaction, 0);
    const InteractionSample w = sample_interaction({kind, 0.7}, 33, stream);
    EXPECT_EQ(w.hermiticity_defect(), 0.0);
    EXPECT_EQ(w.is_real(), kind == Ensemble::GOE);
    if (!w.is_real()) {
      for (Eigen::Index k = 0; k < 33; ++k) EXPECT_EQ(w.complex()(k, k).imag(), 0.0);
    }
  }
}

TEST(Interaction, DeterministicForStream) {
  RngStream a(9, StreamPurpose::Interaction, 4), b(9, StreamPurpose::Interaction, 4);
  const auto wa = sample_interaction({Ensemble::GUE, 1.0}, 16, a);
  const auto wb = sample_interaction({Ensemble::GUE, 1.0}, 16, b);
  EXPECT_TRUE((wa.complex().array() == wb.complex().array()).all());
}

TEST(Interaction, GoeTraceSquareMatchesSigmaSquared) {
  const int samples = 10000;
  double mean = 0.0, m2 = 0.0;
  for (int k = 0; k < samples; ++k) {
    RngStream stream(21, StreamPurpose::Interaction, k);
    const double t = sample_interaction({Ensemble::GOE, 0.4}, 128, stream).normalized_trace_square();
    const double d = t - mean;
    mean += d / (k + 1);
    m2 += d * (t - mean);
  }
  const double se = std::sqrt(m2 / (samples - 1.0) / samples);
  EXPECT_NEAR(mean, 0.16, 3.0 * se);
}

TEST(Interaction, GueEntryCovariances) {
  const int samples = 10000;
  const std::size_t n = 64;
  std::complex<double> cross = 0.0, same = 0.0;
  double cross_sq = 0.0, same_sq_re = 0.0, same_sq_im = 0.0;
  for (int k = 0; k < samples; ++k) {
    RngStream stream(23, StreamPurpose::Interaction, k);
    const auto w = sample_interaction({Ensemble::GUE, 1.0}, n, stream);
    const auto a = w.complex()(0, 1) * w.complex()(1, 0);
    const auto b = w.complex()(0, 1) * w.complex()(0, 1);
    cross += a;
    same += b;
    cross_sq += std::norm(a);
    same_sq_re += b.real() * b.real();
    same_sq_im += b.imag() * b.imag();
  }
  cross /= samples;
  same /= samples;
  const double se_cross = std::sqrt((cross_sq / samples - std::norm(cross)) / samples);
  EXPECT_NEAR(cross.real(), 1.0 / 64.0, 3.0 * se_cross);
  EXPECT_NEAR(same.real(), 0.0, 3.0 * std::sqrt(same_sq_re / samples / samples));
  EXPECT_NEAR(same.imag(), 0.0, 3.0 * std::sqrt(same_sq_im / samples / samples));
}

TEST(Interaction, GoeOffDiagonalVariance) {
  // Off-diagonal variance sigma^2/(N+1): the N/(N+1) scaling that makes
  // E[tr W^2] = sigma^2 exact.
  const int samples = 20000;
  const std::size_t n = 16;
  double s = 0.0, s2 = 0.0;
  for (int k = 0; k < samples; ++k) {
    RngStream stream(29, StreamPurpose::Interaction, k);
    const double x = sample_interaction({Ensemble::GOE, 1.0}, n, stream).real()(2, 5);
    s += x * x;
    s2 += x * x * x * x;
  }
  const double mean = s / samples;
  const double se = std::sqrt((s2 / samples - mean * mean) / samples);
  EXPECT_NEAR(mean, 1.0 / 17.0, 3.0 * se);
}

TEST(Interaction, SemicircleDensityWithGrowingN) {
  // Kolmogorov-Smirnov distance of the eigenvalues of W to the semicircle of
  // radius 2 shrinks with N.
  auto ks = [](std::size_t n) {
    RngStream stream(31, StreamPurpose::Interaction, n);
    const auto w = sample_interaction({Ensemble::GOE, 1.0}, n, stream);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(w.real(), Eigen::EigenvaluesOnly);
    const Eigen::VectorXd ev = solver.eigenvalues();
    auto cdf = [](double x) {
      x = std::clamp(x, -2.0, 2.0);
      return 0.5 + (x * std::sqrt(4.0 - x * x) / 4.0 + std::asin(x / 2.0)) / std::numbers::pi;
    };
    double d = 0.0;
    for (Eigen::Index k = 0; k < ev.size(); ++k) {
      const double f = cdf(ev[k]);
      d = std::max({d, std::abs(f - double(k) / ev.size()), std::abs(f - double(k + 1) / ev.size())});
    }
    return d;
  };
  const double d64 = ks(64), d256 = ks(256), d1024 = ks(1024);
  EXPECT_LT(d256, d64);
  EXPECT_LT(d1024, d256);
  EXPECT_LT(d1024, 0.02);
}

TEST(Interaction, ValidatesSpec) {
  RngStream stream(1, StreamPurpose::Interaction);
  EXPECT_THROW(sample_interaction({Ensemble::GOE, 1.0}, 1, stream), InvalidDimensionError);
  EXPECT_THROW(sample_interaction({Ensemble::GOE, -1.0}, 4, stream), Error);
  EXPECT_EQ(parse_ensemble("gue"), Ensemble::GUE);
  EXPECT_THROW(parse_ensemble("gse"), ConfigError);
}
