#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "eigoverlap/csv.hpp"
#include "eigoverlap/overlap_theory.hpp"
#include "eigoverlap/spectra.hpp"

namespace eigoverlap {

enum class Experiment { SecondMoment, FourthMoment, SemicircleOracle, CovarianceCheck, Custom };
std::string to_string(Experiment e);
Experiment parse_experiment(std::string_view text);

/// (n, m, i): a resolvent pair probed at lambda_bar_i + i*eta.
struct GreenTriple {
  std::size_t n = 0;
  std::size_t m = 0;
  std::size_t i = 0;

  bool operator==(const GreenTriple&) const = default;
};

/// Flat `key = value` experiment description. Keys not listed here are
/// rejected. `threads` and `output` do not enter the hash.
struct ExperimentConfig {
  static constexpr int kVersion = 1;

  Experiment experiment = Experiment::Custom;
  std::size_t n = 128;
  double sigma0 = 1.0;
  std::uint64_t spectrum_seed = 1;
  std::string spectrum_file;  // overrides the Gaussian draw
  bool flat_spectrum = false; // H0 = 0
  Ensemble ensemble = Ensemble::GOE;
  std::vector<double> sigma_w = {0.2};
  std::uint64_t realizations = 0;
  std::uint64_t master_seed = 2;
  unsigned threads = 1;
  std::string output;

  /// Rows n of the second-moment table; empty means N/4, N/2, 3N/4.
  std::vector<std::size_t> rows;
  std::vector<std::pair<std::size_t, std::size_t>> cyclic_pairs;
  std::vector<std::pair<std::size_t, std::size_t>> factorized_pairs;
  std::vector<GreenTriple> green_triples;
  double green_eta = 0.05;
  CyclicMode mode = CyclicMode::Symmetrized;
  Resummation resummation = Resummation::Linear;

  double eta_final = 0.0;  // 0: 1e-6 sigma_w
  double solver_tol = 1e-12;
  int max_iters = 500;
  double mass_tol = 2e-7;

  double mask_fraction = 0.01;
  double rel_tol = 0.15;
  double z_tol = 4.0;
  double corr_min = 0.9;
  double sign_min = 0.9;
  std::uint64_t checkpoint_every = 0;

  void validate() const;
  /// Stable serialization; parse(serialize(c)) == c field by field.
  std::string serialize() const;
  static ExperimentConfig parse(std::string_view text);
  static ExperimentConfig load(const std::filesystem::path& path);
  /// git blob SHA-1 of serialize() without threads and output.
  std::string hash() const;

  /// Experiment presets with desk-scale defaults.
  static ExperimentConfig preset(Experiment e);

  bool operator==(const ExperimentConfig&) const = default;
};

/// One checked property of a run.
struct Check {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  std::string relation;  // "<=" or ">="
  bool pass = false;
};

struct RunSummary {
  std::string config_hash;
  std::filesystem::path directory;
  std::vector<Check> checks;
  std::map<std::string, double> metrics;
  std::vector<std::string> files;
  bool pass() const;
};

/// Runs the configured pipeline and writes every artifact under
/// config.output. Artifacts do not depend on config.threads.
RunSummary run_experiment(const ExperimentConfig& config);

struct CompareOptions {
  double mask_fraction = 0.01;
  double rel_tol = 0.15;
  double z_tol = 4.0;
};

struct ComparisonRow {
  std::size_t n, m, i, j;
  double theory;
  double mc;
  double stderr_mc;
  double z;
  bool masked;  // theory >= mask_fraction * peak of its (n, m) group
};

struct ComparisonReport {
  std::vector<ComparisonRow> rows;
  double max_abs_z = 0.0;         // over the mask
  double max_rel_error = 0.0;     // over the mask
  std::string theory_hash;        // git blob hashes of the inputs
  std::string mc_hash;
  bool pass = false;
  CsvTable to_table() const;
};

/// Joins two tables on (n, m, i, j). The second table's stderr column, when
/// present, scales the z-scores. ComparisonError names mismatched columns.
ComparisonReport compare(const CsvTable& theory, const CsvTable& mc, const CompareOptions& options);
ComparisonReport compare_files(const std::filesystem::path& theory, const std::filesystem::path& mc,
                               const CompareOptions& options);

/// Human-readable summary of a run directory. MissingArtifactsError lists
/// every expected file that is absent.
std::string report(const std::filesystem::path& directory);

double pearson(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace eigoverlap
