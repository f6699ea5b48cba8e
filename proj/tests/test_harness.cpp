#include <filesystem>
#include <fstream>
#include <string>

#include <gtest/gtest.h>

#include "poseforge/harness.hpp"

using namespace poseforge;
using namespace poseforge::harness;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  const auto d = std::filesystem::temp_directory_path() / ("poseforge_harness_" + name);
  std::filesystem::remove_all(d);
  return d;
}

SweepSpec small_spec() {
  SweepSpec s;
  s.sigma_values = {0.0, 4.0};
  s.outlier_values = {0.0, 0.2};
  s.methods = {{MethodKind::epnp_ransac, "", ""}, {MethodKind::voting, "", ""}};
  s.scenes_per_cell = 6;
  s.seed = 81;
  s.m = 60;
  s.record_timing = false;
  return s;
}

std::string trained_checkpoint(regressor::Aggregation agg) {
  const auto path = std::filesystem::temp_directory_path() /
                    (agg == regressor::Aggregation::grouped ? "poseforge_h_g.ckpt" : "poseforge_h_s.ckpt");
  regressor::NetworkConfig c;
  if (agg == regressor::Aggregation::single_pool) c = regressor::matched_single_pool_config(c);
  regressor::save_checkpoint(regressor::init_params<float>(c, 7), path.string());
  return path.string();
}

}  // namespace

TEST(SweepSpec, Validation) {
  SweepSpec s = small_spec();
  EXPECT_NO_THROW(s.validate());
  s.sigma_values.clear();
  EXPECT_THROW(s.validate(), InvalidArgument);
  s = small_spec();
  s.scenes_per_cell = 0;
  EXPECT_THROW(s.validate(), InvalidArgument);
  s = small_spec();
  s.methods = {{MethodKind::regressor, "", ""}};
  EXPECT_THROW(s.validate(), InvalidArgument);
}

TEST(SweepSpec, JsonRoundTrip) {
  SweepSpec s = small_spec();
  s.methods.push_back({MethodKind::regressor, "/tmp/x.ckpt", "regressor-smoke"});
  const SweepSpec t = spec_from_json(spec_to_json(s));
  EXPECT_EQ(spec_to_json(t), spec_to_json(s));
  const auto j = nlohmann::json::parse(
      R"({"sigma_values":[1],"outlier_values":[0],"methods":["p3p-ransac",{"kind":"regressor","checkpoint":"m.ckpt"}]})");
  const SweepSpec u = spec_from_json(j, "/data");
  EXPECT_EQ(u.methods[0].kind, MethodKind::p3p_ransac);
  EXPECT_EQ(u.methods[1].checkpoint, "/data/m.ckpt");
  EXPECT_EQ(u.scenes_per_cell, 2000u);
  EXPECT_THROW(spec_from_json(nlohmann::json::parse(R"({"sigma_values":[1]})")), InvalidArgument);
  EXPECT_THROW(parse_method_kind("icp"), InvalidArgument);
}

TEST(Sweep, NoiseFreeEpnpOracle) {
  SweepSpec s;
  s.sigma_values = {0.0};
  s.outlier_values = {0.0};
  s.methods = {{MethodKind::epnp_ransac, "", ""}};
  s.scenes_per_cell = 100;
  s.seed = 82;
  const SweepResult r = run_sweep(s);
  ASSERT_EQ(r.cells.size(), 1u);
  EXPECT_LT(r.cells[0].mean_err, 1e-6);
  EXPECT_EQ(r.cells[0].n_scenes, 100u);
  EXPECT_EQ(r.cells[0].n_failed, 0u);
  EXPECT_EQ(r.cells[0].add01d_rate, 1.0);
}

TEST(Sweep, CellLayoutAndCounts) {
  const SweepResult r = run_sweep(small_spec());
  ASSERT_EQ(r.cells.size(), 8u);
  EXPECT_EQ(r.cells[0].method, "epnp-ransac");
  EXPECT_EQ(r.cells[1].method, "voting");
  EXPECT_EQ(r.cells[2].outlier_rate, 0.2);
  EXPECT_EQ(r.cells[4].sigma, 4.0);
  for (const auto& c : r.cells) {
    EXPECT_EQ(c.n_scenes, 6u);
    EXPECT_EQ(c.errors.size(), 6u);
    EXPECT_EQ(c.mean_ms, 0.0);
  }
  ASSERT_NE(r.find("voting", 4.0, 0.2), nullptr);
  EXPECT_EQ(r.find("voting", 5.0, 0.2), nullptr);
}

TEST(Sweep, DeterministicFiles) {
  const auto a = temp_dir("det_a"), b = temp_dir("det_b");
  write_sweep_outputs(run_sweep(small_spec()), a);
  write_sweep_outputs(run_sweep(small_spec()), b);
  EXPECT_EQ(read_text(a / "results.csv"), read_text(b / "results.csv"));
  EXPECT_EQ(read_text(a / "summary.csv"), read_text(b / "summary.csv"));
}

TEST(Sweep, PairedScenesAcrossMethodLists) {
  SweepSpec one = small_spec();
  one.methods = {{MethodKind::epnp_ransac, "", ""}};
  const SweepResult a = run_sweep(one);
  const SweepResult b = run_sweep(small_spec());
  EXPECT_EQ(a.find("epnp-ransac", 4.0, 0.2)->errors, b.find("epnp-ransac", 4.0, 0.2)->errors);
}

TEST(Sweep, LearnedMethods) {
  SweepSpec s = small_spec();
  s.methods = {{MethodKind::regressor, trained_checkpoint(regressor::Aggregation::grouped), ""},
               {MethodKind::single_pool, trained_checkpoint(regressor::Aggregation::single_pool), ""}};
  const SweepResult r = run_sweep(s);
  EXPECT_EQ(r.cells.size(), 8u);
  for (const auto& c : r.cells) EXPECT_EQ(c.n_failed, 0u);
}

TEST(Sweep, MissingCheckpoint) {
  SweepSpec s = small_spec();
  s.methods = {{MethodKind::regressor, "/nonexistent/model.ckpt", ""}};
  try {
    run_sweep(s);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_EQ(e.path(), "/nonexistent/model.ckpt");
  }
}

TEST(Sweep, WrongCheckpointKind) {
  SweepSpec s = small_spec();
  s.methods = {{MethodKind::single_pool, trained_checkpoint(regressor::Aggregation::grouped), ""}};
  EXPECT_THROW(run_sweep(s), InvalidArgument);
}

TEST(Sweep, FailuresScoredAtCap) {
  SweepSpec s = small_spec();
  s.outlier_values = {1.0};
  s.sigma_values = {0.0};
  s.methods = {{MethodKind::epnp_ransac, "", ""}};
  const SweepResult r = run_sweep(s);
  EXPECT_EQ(r.cells[0].n_failed, 6u);
  EXPECT_EQ(r.cells[0].mean_err, kFailureErrorRatio);
}

TEST(Report, SingleCellSingleRow) {
  SweepSpec s = small_spec();
  s.sigma_values = {0.0};
  s.outlier_values = {0.0};
  s.methods = {{MethodKind::epnp_ransac, "", ""}};
  const Report rep = compare_report(run_sweep(s));
  EXPECT_EQ(std::count(rep.csv.begin(), rep.csv.end(), '\n'), 2);
  EXPECT_EQ(rep.csv.substr(0, rep.csv.find('\n')), kResultsHeader);
  EXPECT_EQ(rep.cells.size(), 1u);
  EXPECT_FALSE(rep.cells[0].learned_beats_ransac.has_value());
}

TEST(Report, CsvReparseMatches) {
  const SweepResult r = run_sweep(small_spec());
  const auto parsed = parse_results_csv(results_csv(r));
  ASSERT_EQ(parsed.size(), r.cells.size());
  for (std::size_t i = 0; i < parsed.size(); ++i) EXPECT_TRUE(parsed[i].same_summary(r.cells[i])) << i;
}

TEST(Report, CsvParseErrors) {
  EXPECT_THROW(parse_results_csv("bad header\n"), ParseError);
  try {
    parse_results_csv(std::string(kResultsHeader) + "\nvoting,1,0,x,0,0,0,1,0\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Report, CrossoverFlag) {
  std::vector<CellResult> cells;
  auto cell = [](std::string m, double sigma, double mean) {
    CellResult c;
    c.method = std::move(m);
    c.sigma = sigma;
    c.mean_err = mean;
    c.n_scenes = 1;
    return c;
  };
  cells.push_back(cell("epnp-ransac", 0, 0.01));
  cells.push_back(cell("regressor", 0, 0.05));
  cells.push_back(cell("epnp-ransac", 15, 0.2));
  cells.push_back(cell("regressor", 15, 0.1));
  cells.push_back(cell("voting", 15, 0.05));
  cells.push_back(cell("epnp-ransac", 9, 0.1));
  cells.push_back(cell("regressor", 9, 0.1));
  const Report rep = compare_report(cells);
  ASSERT_EQ(rep.cells.size(), 3u);
  EXPECT_FALSE(*rep.cells[0].learned_beats_ransac);
  EXPECT_TRUE(*rep.cells[1].learned_beats_ransac);
  EXPECT_EQ(rep.cells[1].best_method, "voting");
  EXPECT_FALSE(*rep.cells[2].learned_beats_ransac);  // ties are not wins
  EXPECT_NE(rep.summary.find("15,0,voting,0.10000000000000001,0.20000000000000001,yes"), std::string::npos);
  EXPECT_THROW(compare_report(std::vector<CellResult>{}), InvalidArgument);
}

TEST(Stats, MedianAndStandardError) {
  EXPECT_EQ(median_of({3, 1, 2}), 2.0);
  EXPECT_EQ(median_of({4, 1, 2, 3}), 2.5);
  EXPECT_NEAR(standard_error({1, 2, 3, 4}), std::sqrt(5.0 / 3.0 / 4.0), 1e-15);
}

TEST(Demo, UnwritableDirectoryNamesPath) {
  const auto blocker = std::filesystem::temp_directory_path() / "poseforge_demo_blocker";
  std::ofstream(blocker) << "file";
  const auto target = blocker / "out";
  try {
    end_to_end_demo(1, target, {10, 5, 1});
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_EQ(e.path(), target.string());
    EXPECT_NE(std::string(e.what()).find(target.string()), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("setup"), std::string::npos);
  }
}

TEST(Demo, DefaultRunProducesArtifacts) {
  const auto dir = temp_dir("demo");
  const DemoResult r = end_to_end_demo(0, dir);
  for (const char* f : {"train_scenes.jsonl", "model.ckpt", "train_log.csv", "sweep_spec.json", "results.csv",
                        "summary.csv", "demo.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  EXPECT_EQ(r.sweep.cells.size(), 4u);
  EXPECT_LT(r.trained_error_sigma3, r.initial_error_sigma3);
}
