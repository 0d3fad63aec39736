#ifndef RSTAR_PIPELINE_HPP
#define RSTAR_PIPELINE_HPP

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rstar/mue.hpp"

namespace rstar {

// ---- orchestration of the staged estimation -----------------------------

struct FitOptions {
  std::optional<double> lambda_g;  // required by kHlwReplication
  InitConfig init;
  int optimizer_budget = 40000;
  double tolerance = 1e-8;
  int restarts = 3;
  std::uint64_t seed = 0;
  std::vector<std::vector<double>> starts;  // explicit starts; data-driven default when empty
  std::map<std::string, std::pair<double, double>> bounds;  // optional box constraints
};

// Fits the stage-2 model for a pipeline (legacy model with sigma_g tied to
// lambda_g, legacy model with free sigma_g, or the correct model) and runs
// the smoother at the optimum.
Stage2Fit fit_stage2(Stage2Pipeline pipeline, const ModelData& data, const FitOptions& opts);

enum class Stage3Mode { kFixBothLambdas, kMleSigmaGGivenLambdaZ, kMleAll };
std::string to_string(Stage3Mode m);

struct Stage3Fit {
  Stage3Mode mode;
  FitResult fit;
  FilterOutput states;
};

// Full-model fit. kFixBothLambdas requires lambda_g and lambda_z;
// kMleSigmaGGivenLambdaZ requires lambda_z; kMleAll estimates both sigmas
// directly.
Stage3Fit fit_stage3(Stage3Mode mode, std::optional<double> lambda_g,
                     std::optional<double> lambda_z, const ModelData& data,
                     const FitOptions& opts);

// ---- run configuration ---------------------------------------------------

enum class PipelineChoice { kHlwReplication, kCorrected, kBoth };

BreakStyle break_style_from_string(const std::string& s);

struct LookupSource {
  bool regenerate = false;
  std::filesystem::path path;  // shipped table when !regenerate
  int n_reps = 5000;
  std::uint64_t seed = 20240528;
};

struct RunConfig {
  std::string country = "data";
  std::filesystem::path data_path;
  std::optional<Quarter> window_start, window_end;
  PipelineChoice pipeline = PipelineChoice::kBoth;
  Stage3Mode stage3_mode = Stage3Mode::kMleSigmaGGivenLambdaZ;
  std::vector<BreakStyle> break_styles = {BreakStyle::kHlw, BreakStyle::kSw};
  LookupSource lookup;
  std::filesystem::path output_dir = ".";
  FitOptions fit;

  void validate() const;  // at least one pipeline and one break style
  static RunConfig from_json_file(const std::filesystem::path& path);
  void merge_json_file(const std::filesystem::path& path);  // config overrides fields
};

// ---- results -------------------------------------------------------------

struct StatePaths {
  std::vector<Quarter> dates;
  // reported g and z at t are the quarter t-1 states (original timing
  // convention), rstar = 4 g + z
  std::vector<double> rstar_filtered, rstar_smoothed;
  std::vector<double> g_ann_filtered, g_ann_smoothed;
  std::vector<double> z_filtered, z_smoothed;
  std::vector<double> gap_filtered, gap_smoothed;
};

StatePaths extract_state_paths(const FilterOutput& states, const ModelData& data, bool has_z);

struct PipelineResult {
  Stage2Pipeline stage2_pipeline;
  Stage2Fit stage2;
  std::vector<MueResult> mue;  // one per break style
  Stage3Fit stage3;
  StatePaths states;
};

struct RunResult {
  RunConfig config;
  ModelData data;
  std::vector<PipelineResult> pipelines;
};

// Runs the requested pipelines (concurrently; results merged in a fixed
// order). On a pipeline error the first failure is rethrown; when
// `partial` is given, results of pipelines that did complete are moved
// into it first.
RunResult run_estimate(const RunConfig& config, const MueLookup& table,
                       RunResult* partial = nullptr);

// Writes state-path CSVs, F(tau) CSVs, parameter JSONs and the MUE summary
// into `dir`; returns the paths written. Files are staged with a .partial
// suffix and renamed once the whole set has been written; with
// finalize = false the .partial files are left in place.
std::vector<std::filesystem::path> write_outputs(const RunResult& run,
                                                 const std::filesystem::path& dir,
                                                 bool finalize = true);

// One-line-per-cell console summary (lambda_z per statistic and the
// end-of-sample natural rate, filtered and smoothed).
std::string summarize(const RunResult& run);

}  // namespace rstar

#endif  // RSTAR_PIPELINE_HPP
