#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "eigoverlap/error.hpp"
#include "eigoverlap/harness.hpp"
#include "test_support.hpp"

using namespace eigoverlap;
using eigoverlap::testing::scratch_dir;

namespace {

CsvTable table_with(const std::vector<double>& values, const std::vector<double>& se) {
  CsvTable t;
  t.columns = {"n", "m", "i", "j", "value", "mode", "stderr"};
  for (std::size_t k = 0; k < values.size(); ++k) {
    t.rows.push_back({"0", "0", std::to_string(k), std::to_string(k), std::to_string(values[k]),
                      "second", std::to_string(se[k])});
  }
  return t;
}

}  // namespace

TEST(Config, PresetsRoundTrip) {
  for (Experiment e : {Experiment::SecondMoment, Experiment::FourthMoment,
                       Experiment::SemicircleOracle, Experiment::CovarianceCheck,
                       Experiment::Custom}) {
    const ExperimentConfig c = ExperimentConfig::preset(e);
    EXPECT_NO_THROW(c.validate());
    const ExperimentConfig back = ExperimentConfig::parse(c.serialize());
    EXPECT_EQ(back, c) << to_string(e);
    EXPECT_EQ(back.serialize(), c.serialize());
    EXPECT_EQ(back.hash(), c.hash());
  }
}

TEST(Config, ParsesOverridesOnTopOfPreset) {
  const ExperimentConfig c = ExperimentConfig::parse(
      "version = 1\n"
      "experiment = fig2-fourth-moment\n"
      "# comment\n"
      "realizations = 500\n"
      "sigma_w = 0.3, 0.5\n"
      "cyclic_pairs = 10:20, 30:40\n"
      "mode = paper-literal\n");
  EXPECT_EQ(c.experiment, Experiment::FourthMoment);
  EXPECT_EQ(c.n, ExperimentConfig::preset(Experiment::FourthMoment).n);
  EXPECT_EQ(c.realizations, 500u);
  EXPECT_EQ(c.sigma_w, (std::vector<double>{0.3, 0.5}));
  ASSERT_EQ(c.cyclic_pairs.size(), 2u);
  EXPECT_EQ(c.cyclic_pairs[1], (std::pair<std::size_t, std::size_t>{30, 40}));
  EXPECT_EQ(c.mode, CyclicMode::PaperLiteral);
}

TEST(Config, RejectsUnknownAndDuplicateKeys) {
  try {
    ExperimentConfig::parse("version = 1\nrealisations = 10\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("realisations"), std::string::npos);
  }
  EXPECT_THROW(ExperimentConfig::parse("version = 1\nn = 4\nn = 8\n"), ConfigError);
  EXPECT_THROW(ExperimentConfig::parse("n = 4\n"), ConfigError);
  EXPECT_THROW(ExperimentConfig::parse("version = 2\n"), ConfigError);
  EXPECT_THROW(ExperimentConfig::parse("version = 1\nn = -4\n"), ConfigError);
  EXPECT_THROW(ExperimentConfig::parse("version = 1\nsigma_w = 0\n"), ConfigError);
  EXPECT_THROW(ExperimentConfig::parse("version = 1\nensemble = GSE\n"), ConfigError);
}

TEST(Config, HashIgnoresThreadsAndOutput) {
  ExperimentConfig a = ExperimentConfig::preset(Experiment::SecondMoment);
  ExperimentConfig b = a;
  b.threads = 7;
  b.output = "/tmp/elsewhere";
  EXPECT_EQ(a.hash(), b.hash());
  b.master_seed += 1;
  EXPECT_NE(a.hash(), b.hash());
  EXPECT_EQ(a.hash().size(), 40u);
}

TEST(Compare, IdenticalInputsPass) {
  const CsvTable t = table_with({0.1, 0.5, 0.2, 0.001}, {0.01, 0.01, 0.01, 0.01});
  const ComparisonReport r = compare(t, t, {});
  EXPECT_TRUE(r.pass);
  for (const auto& row : r.rows) EXPECT_EQ(row.z, 0.0);
  EXPECT_FALSE(r.rows[3].masked);
  EXPECT_EQ(r.theory_hash, r.mc_hash);
}

TEST(Compare, TenStandardErrorShiftFails) {
  const CsvTable mc = table_with({0.1, 0.5, 0.2}, {0.001, 0.002, 0.001});
  const CsvTable theory = table_with({0.11, 0.52, 0.21}, {0, 0, 0});
  const ComparisonReport r = compare(theory, mc, {0.01, 1.0, 4.0});
  EXPECT_FALSE(r.pass);
  EXPECT_NEAR(r.max_abs_z, 10.0, 1e-6);
  const CsvTable out = r.to_table();
  EXPECT_EQ(out.rows.size(), 3u);
}

TEST(Compare, SchemaMismatchNamesColumns) {
  CsvTable theory = table_with({0.1}, {0.0});
  CsvTable mc = theory;
  mc.columns[4] = "mean";
  try {
    compare(theory, mc, {});
    FAIL() << "expected ComparisonError";
  } catch (const ComparisonError& e) {
    EXPECT_NE(std::string(e.what()).find("value"), std::string::npos);
  }
  CsvTable shorter = table_with({0.1, 0.2}, {0.1, 0.1});
  EXPECT_THROW(compare(shorter, theory, {}), ComparisonError);
}

TEST(Compare, Pearson) {
  EXPECT_NEAR(pearson({1, 2, 3}, {2, 4, 6}), 1.0, 1e-15);
  EXPECT_NEAR(pearson({1, 2, 3}, {3, 2, 1}), -1.0, 1e-15);
}

TEST(Report, EmptyDirectoryListsExpectedFiles) {
  const auto dir = scratch_dir("report-empty");
  try {
    report(dir);
    FAIL() << "expected MissingArtifactsError";
  } catch (const MissingArtifactsError& e) {
    const std::string what = e.what();
    for (const char* f : {"config.txt", "spectrum.txt", "summary.json"}) {
      EXPECT_NE(what.find(f), std::string::npos) << f;
    }
  }
}

TEST(Run, SemicircleOraclePasses) {
  ExperimentConfig c = ExperimentConfig::preset(Experiment::SemicircleOracle);
  c.output = scratch_dir("run-semicircle").string();
  const RunSummary s = run_experiment(c);
  EXPECT_TRUE(s.pass());
  const std::string text = report(c.output);
  EXPECT_NE(text.find("analytic vs solver density"), std::string::npos);
  EXPECT_NE(text.find("PASS"), std::string::npos);
}

TEST(Run, SmallPipelineWritesEveryArtifact) {
  ExperimentConfig c = ExperimentConfig::parse(
      "version = 1\nexperiment = custom\nn = 24\nsigma_w = 0.3\nrealizations = 200\n"
      "rows = 6, 12\ncyclic_pairs = 6:18\nfactorized_pairs = 6:18\n"
      "green_triples = 6:18:6\n");
  c.output = scratch_dir("run-small").string();
  const RunSummary s = run_experiment(c);
  for (const auto& f : s.files) EXPECT_TRUE(std::filesystem::exists(c.output + "/" + f)) << f;
  for (const char* f : {"theory_second_s0.csv", "mc_second_s0.csv", "comparison_second_s0.csv",
                        "theory_cyclic_0_symmetrized_s0.csv", "theory_cyclic_0_paper-literal_s0.csv",
                        "mc_cyclic_0_s0.csv", "mc_factorized_0_s0.csv", "mc_green_s0.csv",
                        "solution_s0.csv", "summary.json"}) {
    EXPECT_TRUE(std::filesystem::exists(c.output + "/" + f)) << f;
  }
  const CsvTable t = read_csv(c.output + "/mc_second_s0.csv");
  EXPECT_EQ(t.meta("config_hash"), s.config_hash);
  EXPECT_GT(s.metrics.at("gamma_over_spacing_s0"), 0.0);
  EXPECT_NO_THROW(report(c.output));

  std::filesystem::remove(c.output + "/mc_second_s0.csv");
  try {
    report(c.output);
    FAIL() << "expected MissingArtifactsError";
  } catch (const MissingArtifactsError& e) {
    EXPECT_NE(std::string(e.what()).find("mc_second_s0.csv"), std::string::npos);
  }
}

TEST(Run, ReportsGammaOverSpacing) {
  ExperimentConfig c = ExperimentConfig::parse(
      "version = 1\nexperiment = custom\nn = 512\nsigma_w = 0.2\nrealizations = 0\n");
  c.output = scratch_dir("run-gamma").string();
  const RunSummary s = run_experiment(c);
  EXPECT_NEAR(s.metrics.at("gamma_over_spacing_s0"), 31.0, 2.0);
  EXPECT_NE(report(c.output).find("Gamma/D at band center"), std::string::npos);
}
