#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "eigoverlap/error.hpp"
#include "eigoverlap/harness.hpp"

namespace fs = std::filesystem;
using namespace eigoverlap;

namespace {

// Relative output paths are resolved against EIGOVERLAP_OUTPUT_ROOT when set.
std::string resolve_output(const std::string& output) {
  const char* root = std::getenv("EIGOVERLAP_OUTPUT_ROOT");
  if (!root || !*root || fs::path(output).is_absolute()) return output;
  return (fs::path(root) / output).string();
}

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed,
            std::optional<std::uint64_t> realizations, std::optional<unsigned> threads,
            std::optional<std::string> output, std::optional<std::string> mode) {
  ExperimentConfig config = ExperimentConfig::load(config_path);
  if (seed) config.master_seed = *seed;
  if (realizations) config.realizations = *realizations;
  if (threads) config.threads = *threads;
  if (mode) config.mode = parse_cyclic_mode(*mode);
  if (output) config.output = *output;
  if (config.output.empty()) config.output = "runs/" + to_string(config.experiment) + "-" + config.hash().substr(0, 10);
  config.output = resolve_output(config.output);
  config.validate();

  const RunSummary summary = run_experiment(config);
  for (const auto& c : summary.checks) {
    std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << " = " << c.value << " " << c.relation
              << " " << c.threshold << "\n";
  }
  std::cout << "artifacts: " << summary.directory.string() << "\n";
  return summary.pass() ? 0 : 1;
}

int cmd_compare(const std::string& a, const std::string& b, const CompareOptions& options,
                const std::string& out) {
  const ComparisonReport r = compare_files(a, b, options);
  std::cout << "rows: " << r.rows.size() << "\n";
  std::cout << "max |z| on mask: " << r.max_abs_z << "\n";
  std::cout << "max relative error on mask: " << r.max_rel_error << "\n";
  std::cout << (r.pass ? "PASS" : "FAIL") << "\n";
  if (!out.empty()) write_csv(out, r.to_table());
  return r.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Eigenvector overlap statistics of H0 + W: theory and Monte Carlo"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed, realizations;
  std::optional<unsigned> threads;
  std::optional<std::string> output, mode;
  auto* run = app.add_subcommand("run", "Run an experiment described by a config file");
  run->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Monte Carlo master seed");
  run->add_option("--realizations", realizations, "Number of realizations");
  run->add_option("--threads", threads, "Worker threads (does not change results)");
  run->add_option("--output", output, "Output directory");
  run->add_option("--mode", mode, "Fourth-moment numerator")
      ->check(CLI::IsMember({"paper-literal", "symmetrized"}));

  std::string a, b, cmp_out;
  CompareOptions cmp;
  auto* compare_cmd = app.add_subcommand("compare", "Compare a theory table with a Monte Carlo table");
  compare_cmd->add_option("theory", a, "Theory CSV")->required()->check(CLI::ExistingFile);
  compare_cmd->add_option("mc", b, "Monte Carlo CSV")->required()->check(CLI::ExistingFile);
  compare_cmd->add_option("--mask", cmp.mask_fraction, "Mask threshold as a fraction of the peak");
  compare_cmd->add_option("--rel-tol", cmp.rel_tol, "Relative error tolerance on the mask");
  compare_cmd->add_option("--z-tol", cmp.z_tol, "z-score tolerance on the mask");
  compare_cmd->add_option("--out", cmp_out, "Write the row-level comparison CSV here");

  std::string dir;
  auto* report_cmd = app.add_subcommand("report", "Summarize a run directory");
  report_cmd->add_option("dir", dir, "Run directory")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (run->parsed()) return cmd_run(config_path, seed, realizations, threads, output, mode);
    if (compare_cmd->parsed()) return cmd_compare(a, b, cmp, cmp_out);
    if (report_cmd->parsed()) {
      std::cout << report(dir);
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
