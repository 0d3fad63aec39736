#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "rstar/errors.hpp"
#include "rstar/pipeline.hpp"
#include "rstar/rng.hpp"

using namespace rstar;
namespace fs = std::filesystem;

namespace {

StageParams bench_params() {
  StageParams p;
  p.a_y1 = 1.5;
  p.a_y2 = -0.6;
  p.a_r = -0.07;
  p.b_pi = 0.67;
  p.b_y = 0.08;
  p.sigma_ytilde = 0.35;
  p.sigma_pi = 0.8;
  p.sigma_ystar = 0.58;
  p.sigma_g = 0.03;
  p.sigma_z = 0.15;
  return p;
}

fs::path temp_dir(const std::string& sub) {
  const fs::path dir = fs::temp_directory_path() / "rstar_tests" / sub;
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

int count_lines(const fs::path& p) {
  std::ifstream in(p);
  int n = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++n;
  return n;
}

}  // namespace

TEST_CASE("config validation") {
  RunConfig c;
  c.data_path = "x.csv";
  c.break_styles.clear();
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("break styles"), ValidationError);
  c.break_styles = {BreakStyle::kSw};
  CHECK_NOTHROW(c.validate());
  c.data_path.clear();
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("json config merge overrides fields") {
  const fs::path dir = temp_dir("cfg");
  const fs::path cfg = dir / "run.json";
  {
    std::ofstream out(cfg, std::ios::trunc);
    out << R"({
      "country": "sim",
      "pipeline": "corrected",
      "stage3": "mle-all",
      "break_styles": ["sw"],
      "window": {"start": "1902:Q2"},
      "lambda_g": 0.05,
      "optimizer": {"budget": 1234, "restarts": 1},
      "lookup": {"source": "regenerate", "reps": 321, "seed": 5}
    })";
  }
  RunConfig c;
  c.data_path = "preset.csv";
  c.country = "flagvalue";
  c.merge_json_file(cfg);
  CHECK(c.country == "sim");
  CHECK(c.data_path == "preset.csv");  // untouched: not in the json
  CHECK(c.pipeline == PipelineChoice::kCorrected);
  CHECK(c.stage3_mode == Stage3Mode::kMleAll);
  CHECK(c.break_styles.size() == 1);
  CHECK(c.window_start.has_value());
  CHECK(c.window_start->str() == "1902:Q2");
  CHECK(c.fit.lambda_g == doctest::Approx(0.05));
  CHECK(c.fit.optimizer_budget == 1234);
  CHECK(c.lookup.regenerate);
  CHECK(c.lookup.n_reps == 321);
}

TEST_CASE("end-to-end corrected run writes a consistent output set") {
  const StageParams p = bench_params();
  const SimulatedPaths sim = simulate_full_model(p, 145, 2718);
  const fs::path dir = temp_dir("run_corrected");
  const fs::path csv = dir / "sim.csv";
  write_country_csv(sim.data, csv);

  RunConfig config;
  config.country = "sim";
  config.data_path = csv;
  config.pipeline = PipelineChoice::kCorrected;
  config.break_styles = {BreakStyle::kHlw, BreakStyle::kSw};
  config.output_dir = dir / "out";
  config.fit.restarts = 0;
  config.fit.optimizer_budget = 2500;
  config.fit.tolerance = 1e-6;

  const MueLookup table = simulate_lookup(500, 200, 77);
  const RunResult run = run_estimate(config, table);
  REQUIRE(run.pipelines.size() == 1);
  const PipelineResult& pr = run.pipelines.front();
  CHECK(pr.mue.size() == 2);

  // the natural rate is the sum of its two components, filtered and smoothed
  const StatePaths& s = pr.states;
  for (std::size_t t = 0; t < s.dates.size(); ++t) {
    CHECK(s.rstar_filtered[t] ==
          doctest::Approx(s.g_ann_filtered[t] + s.z_filtered[t]).epsilon(1e-12));
    CHECK(s.rstar_smoothed[t] ==
          doctest::Approx(s.g_ann_smoothed[t] + s.z_smoothed[t]).epsilon(1e-12));
  }

  const auto manifest = write_outputs(run, config.output_dir);
  CHECK(manifest.size() == 5);  // states, ftau, 2x params, mue summary
  for (const auto& path : manifest) CHECK(fs::exists(path));
  CHECK(count_lines(config.output_dir / "states_correct.csv") ==
        static_cast<int>(run.data.T()) + 1);

  // F(tau) file: one row per (style, tau)
  int expected = 1;  // header
  for (const auto& m : pr.mue) expected += m.grid.n_tau();
  CHECK(count_lines(config.output_dir / "ftau_correct.csv") == expected);

  // deterministic re-run: byte-identical outputs
  const std::string before = read_file(config.output_dir / "states_correct.csv");
  const RunResult run2 = run_estimate(config, table);
  write_outputs(run2, config.output_dir);
  CHECK(read_file(config.output_dir / "states_correct.csv") == before);

  const std::string summary = summarize(run);
  CHECK(summary.find("correct") != std::string::npos);
  CHECK(summary.find("rstar") != std::string::npos);
}

TEST_CASE("a degenerate run writes header-only files") {
  RunResult run;
  run.config.country = "empty";
  PipelineResult pr;
  pr.stage2_pipeline = Stage2Pipeline::kCorrect;
  pr.stage3.mode = Stage3Mode::kMleAll;
  run.pipelines.push_back(std::move(pr));

  const fs::path dir = temp_dir("empty_run");
  const auto manifest = write_outputs(run, dir);
  CHECK(manifest.size() == 5);
  CHECK(count_lines(dir / "states_correct.csv") == 1);  // header only
  CHECK(count_lines(dir / "ftau_correct.csv") == 1);
  CHECK(count_lines(dir / "mue_summary.csv") == 1);
  std::string header;
  std::ifstream in(dir / "states_correct.csv");
  std::getline(in, header);
  CHECK(header.rfind("date,rstar_filtered", 0) == 0);

  // without finalize the staged files keep their .partial suffix
  const fs::path pdir = temp_dir("empty_run_partial");
  const auto staged = write_outputs(run, pdir, /*finalize=*/false);
  for (const auto& p : staged) {
    CHECK(p.string().ends_with(".partial"));
    CHECK(fs::exists(p));
  }
  CHECK_FALSE(fs::exists(pdir / "states_correct.csv"));
}

TEST_CASE("the both pipeline fills every MUE cell") {
  const StageParams p = bench_params();
  const SimulatedPaths sim = simulate_full_model(p, 130, 31415);
  const fs::path dir = temp_dir("run_both");
  const fs::path csv = dir / "sim.csv";
  write_country_csv(sim.data, csv);

  RunConfig config;
  config.country = "sim";
  config.data_path = csv;
  config.pipeline = PipelineChoice::kBoth;
  config.break_styles = {BreakStyle::kHlw, BreakStyle::kSw};
  config.output_dir = dir / "out";
  config.fit.lambda_g = 0.05;
  config.fit.restarts = 0;
  config.fit.optimizer_budget = 2200;
  config.fit.tolerance = 1e-6;

  const MueLookup table = simulate_lookup(500, 200, 78);
  const RunResult run = run_estimate(config, table);
  REQUIRE(run.pipelines.size() == 3);  // replication, free sigma_g, correct
  for (const auto& pr : run.pipelines) {
    REQUIRE(pr.mue.size() == 2);
    for (const auto& m : pr.mue)
      for (const auto& name : MueLookup::stat_names()) {
        REQUIRE(m.by_stat.count(name) == 1);
        CHECK(std::isfinite(m.by_stat.at(name).lambda_z));
      }
  }

  // replication without lambda_g fails validation before any fit
  RunConfig bad = config;
  bad.fit.lambda_g.reset();
  CHECK_THROWS_WITH_AS(run_estimate(bad, table), doctest::Contains("lambda_g"), ValidationError);
}
