#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "eigoverlap/csv.hpp"
#include "eigoverlap/spectra.hpp"

namespace eigoverlap {

/// One diagonalized sample of diag(eps) + W.
struct RealizationResult {
  std::uint64_t index = 0;
  /// Descending.
  Eigen::VectorXd eigenvalues;
  /// overlaps(n, i) = <phi_n|psi_i>. Purely real for GOE samples.
  Eigen::MatrixXcd overlaps;
  bool real_basis = true;

  std::size_t size() const noexcept { return static_cast<std::size_t>(eigenvalues.size()); }
  /// G_nm(z) = sum_k O_nk conj(O_mk) / (lambda_k - z).
  std::complex<double> green(std::size_t n, std::size_t m, std::complex<double> z) const;
};

/// Draws W for (master_seed, index) and diagonalizes diag(eps) + W.
/// RealizationError carrying the index if the eigensolver fails.
RealizationResult run_realization(const BareSpectrum& spectrum, const InteractionSpec& interaction,
                                  std::uint64_t index, std::uint64_t master_seed);

/// Largest deviation of any row or column norm of the overlap matrix from 1.
double unitarity_defect(const RealizationResult& result);

/// A resolvent statistic sampled at fixed complex points.
///  Extradiag: mean of G_nm(z1) G_mn(z2).
///  Diag:      covariance of G_nn(z1) and G_mm(z2) (no conjugation).
struct GreenProbe {
  enum class Kind { Extradiag, Diag };
  Kind kind = Kind::Extradiag;
  std::size_t n = 0;
  std::size_t m = 0;
  std::complex<double> z1;
  std::complex<double> z2;
};

struct TrackingConfig {
  std::size_t dimension = 0;
  /// (n, m): grid over (i, j) of Re[O_ni conj(O_mi) O_mj conj(O_nj)].
  std::vector<std::pair<std::size_t, std::size_t>> cyclic_pairs;
  /// (n, p): grid over (i, j) of |O_ni|^2 |O_pj|^2.
  std::vector<std::pair<std::size_t, std::size_t>> factorized_pairs;
  std::vector<GreenProbe> green_probes;

  void validate() const;
  /// Stable text form, used for hashing.
  std::string canonical() const;
};

struct Estimate {
  std::vector<double> mean;
  std::vector<double> std_error;
};

struct ComplexEstimate {
  std::complex<double> mean;
  double stderr_re = 0.0;
  double stderr_im = 0.0;
};

/// Streaming means and sums of squared deviations of every tracked statistic.
///
/// accumulate(r) is exactly merge() with a one-sample accumulator, so folding
/// results in index order and merging contiguous blocks in the same order give
/// identical bits.
class MomentAccumulator {
 public:
  explicit MomentAccumulator(TrackingConfig config);

  const TrackingConfig& config() const noexcept { return config_; }
  std::uint64_t count() const noexcept { return count_; }
  const std::vector<std::uint64_t>& failures() const noexcept { return failures_; }
  /// One past the largest realization index seen (successful or failed).
  std::uint64_t next_index() const noexcept { return next_index_; }
  double max_unitarity_defect() const noexcept { return max_defect_; }

  /// ConfigError on dimension mismatch.
  void accumulate(const RealizationResult& result);
  void merge(const MomentAccumulator& other);
  void record_failure(std::uint64_t index);

  /// Row-major [n][i] of |O_ni|^2.
  Estimate second_moments() const;
  Estimate cyclic(std::size_t pair) const;
  Estimate factorized(std::size_t pair) const;
  ComplexEstimate green(std::size_t probe) const;
  /// Raw eigenvalue means; see estimate_mean_positions for the checked form.
  Estimate eigenvalues() const;

  /// Same config and bit-identical state.
  bool identical(const MomentAccumulator& other) const;

  std::string serialize() const;
  static MomentAccumulator deserialize(const std::string& bytes);

 private:
  struct Stat {
    std::vector<double> mean;
    std::vector<double> m2;
  };
  struct CovStat {
    std::complex<double> mean_x, mean_y, comoment;
    // Welford over the co-moment increments, real and imaginary parts.
    std::uint64_t inc_count = 0;
    double inc_mean[2] = {0.0, 0.0};
    double inc_m2[2] = {0.0, 0.0};
  };
  template <class Archive>
  friend void serialize_state(Archive& ar, MomentAccumulator& acc);

  Estimate finish(const Stat& s) const;
  void merge_values(const MomentAccumulator& other, std::uint64_t n_other);

  TrackingConfig config_;
  std::uint64_t count_ = 0;
  std::uint64_t next_index_ = 0;
  std::vector<std::uint64_t> failures_;
  double max_defect_ = 0.0;
  Stat second_;
  Stat eigenvalues_;
  std::vector<Stat> cyclic_;
  std::vector<Stat> factorized_;
  std::vector<Stat> extradiag_;  // 2 entries: re, im
  std::vector<CovStat> diag_;
};

/// Mean sorted eigenvalues with standard errors. InsufficientDataError when
/// fewer than two realizations were accumulated.
Estimate estimate_mean_positions(const MomentAccumulator& acc);

/// Binary container: magic, format version, config hash, payload, SHA-256 of
/// everything before it. Written atomically.
void checkpoint(const MomentAccumulator& acc, const std::filesystem::path& path,
                const std::string& config_hash);
/// IntegrityError on a bad checksum or truncated file (nothing is loaded);
/// IncompatibleCheckpointError on a config-hash or format-version mismatch.
MomentAccumulator restore(const std::filesystem::path& path, const std::string& config_hash);

struct RunOptions {
  std::uint64_t master_seed = 0;
  /// Total realizations, counting any already in a resumed accumulator.
  std::uint64_t realizations = 0;
  unsigned threads = 1;
  /// Optional periodic checkpoint.
  std::filesystem::path checkpoint_path;
  std::string config_hash;
  std::uint64_t checkpoint_every = 0;
  std::function<void(std::uint64_t done, std::uint64_t total)> progress;
};

/// Runs realizations next_index() .. realizations-1 into `acc`. Worker count
/// only affects wall time: results are folded in index order.
void run_monte_carlo(const BareSpectrum& spectrum, const InteractionSpec& interaction,
                     const RunOptions& options, MomentAccumulator& acc);

// Monte Carlo tables in the theory schema plus a stderr column.
CsvTable mc_second_moment_table(const MomentAccumulator& acc, const std::vector<std::size_t>& rows);
CsvTable mc_cyclic_table(const MomentAccumulator& acc, std::size_t pair);
CsvTable mc_factorized_table(const MomentAccumulator& acc, std::size_t pair);

}  // namespace eigoverlap
