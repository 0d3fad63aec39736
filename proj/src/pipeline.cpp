#include "rstar/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include "rstar/errors.hpp"
#include "json.hpp"

namespace rstar {

namespace {

EstimationSpec base_spec(const FitOptions& opts) {
  EstimationSpec spec;
  spec.optimizer_budget = opts.optimizer_budget;
  spec.tolerance = opts.tolerance;
  spec.restarts = opts.restarts;
  spec.seed = opts.seed;
  spec.init = opts.init;
  spec.starts = opts.starts;
  spec.bounds = opts.bounds;
  return spec;
}

FilterOutput smooth_at_optimum(const EstimationSpec& spec, const StageParams& params,
                               const ModelData& data) {
  StateSpaceModel model = build_model(spec.variant, params);
  apply_init(model, data, spec.init);
  model.validate();
  return kalman_smoother(kalman_filter(model, data.obs, data.exog), model);
}

}  // namespace

std::string to_string(Stage3Mode m) {
  switch (m) {
    case Stage3Mode::kFixBothLambdas: return "fix-both-lambdas";
    case Stage3Mode::kMleSigmaGGivenLambdaZ: return "mle-sigma-g-given-lambda-z";
    case Stage3Mode::kMleAll: return "mle-all";
  }
  return "?";
}

Stage2Fit fit_stage2(Stage2Pipeline pipeline, const ModelData& data, const FitOptions& opts) {
  EstimationSpec spec = base_spec(opts);
  spec.free_params = {"a_y1", "a_y2", "a_r", "b_pi", "b_y", "sigma_ytilde", "sigma_pi",
                      "sigma_ystar"};
  switch (pipeline) {
    case Stage2Pipeline::kHlwReplication:
      if (!opts.lambda_g)
        throw ValidationError("pipeline 'hlw-replication' requires lambda_g");
      spec.variant = ModelVariant{VariantTag::kStage2Hlw, SigmaMode::kRatioImplied,
                                  SigmaMode::kMleFree};
      spec.fixed_params["lambda_g"] = *opts.lambda_g;
      spec.free_params.push_back("a_0");
      spec.free_params.push_back("a_g");
      break;
    case Stage2Pipeline::kHlwMleSigmaG:
      spec.variant = ModelVariant{VariantTag::kStage2Hlw, SigmaMode::kMleFree, SigmaMode::kMleFree};
      spec.free_params.push_back("a_0");
      spec.free_params.push_back("a_g");
      spec.free_params.push_back("sigma_g");
      break;
    case Stage2Pipeline::kCorrect:
      spec.variant =
          ModelVariant{VariantTag::kStage2Correct, SigmaMode::kMleFree, SigmaMode::kMleFree};
      spec.free_params.push_back("sigma_g");
      break;
  }
  for (const auto& s : spec.starts)
    if (s.size() != spec.free_params.size())
      throw ValidationError("start vector has wrong length for stage-2 pipeline " +
                            to_string(pipeline));

  Stage2Fit out;
  out.pipeline = pipeline;
  out.fit = fit(spec, data);
  out.states = smooth_at_optimum(spec, out.fit.params, data);
  return out;
}

Stage3Fit fit_stage3(Stage3Mode mode, std::optional<double> lambda_g,
                     std::optional<double> lambda_z, const ModelData& data,
                     const FitOptions& opts) {
  EstimationSpec spec = base_spec(opts);
  spec.starts.clear();  // stage-2 start shapes do not fit the full model
  spec.free_params = {"a_y1", "a_y2", "a_r", "b_pi", "b_y", "sigma_ytilde", "sigma_pi",
                      "sigma_ystar"};
  switch (mode) {
    case Stage3Mode::kFixBothLambdas:
      if (!lambda_g || !lambda_z)
        throw ValidationError("stage-3 mode fix-both-lambdas requires lambda_g and lambda_z");
      spec.variant =
          ModelVariant{VariantTag::kFull, SigmaMode::kRatioImplied, SigmaMode::kRatioImplied};
      spec.fixed_params["lambda_g"] = *lambda_g;
      spec.fixed_params["lambda_z"] = *lambda_z;
      break;
    case Stage3Mode::kMleSigmaGGivenLambdaZ:
      if (!lambda_z)
        throw ValidationError("stage-3 mode mle-sigma-g-given-lambda-z requires lambda_z");
      spec.variant =
          ModelVariant{VariantTag::kFull, SigmaMode::kMleFree, SigmaMode::kRatioImplied};
      spec.fixed_params["lambda_z"] = *lambda_z;
      spec.free_params.push_back("sigma_g");
      break;
    case Stage3Mode::kMleAll:
      spec.variant = ModelVariant{VariantTag::kFull, SigmaMode::kMleFree, SigmaMode::kMleFree};
      spec.free_params.push_back("sigma_g");
      spec.free_params.push_back("sigma_z");
      break;
  }

  Stage3Fit out;
  out.mode = mode;
  out.fit = fit(spec, data);
  out.states = smooth_at_optimum(spec, out.fit.params, data);
  return out;
}

StatePaths extract_state_paths(const FilterOutput& states, const ModelData& data, bool has_z) {
  const Eigen::Index T = states.T();
  StatePaths out;
  out.dates = data.dates;
  auto fill = [&](const Eigen::MatrixXd& mean, std::vector<double>& rstar, std::vector<double>& g,
                  std::vector<double>& z, std::vector<double>& gap) {
    rstar.resize(T);
    g.resize(T);
    z.resize(T);
    gap.resize(T);
    for (Eigen::Index t = 0; t < T; ++t) {
      const double gq = mean(t, 3);
      const double zq = has_z ? mean(t, 5) : 0.0;
      g[t] = 4.0 * gq;
      z[t] = zq;
      rstar[t] = 4.0 * gq + zq;
      gap[t] = data.obs(t, 0) - mean(t, 0);
    }
  };
  fill(states.filt_mean, out.rstar_filtered, out.g_ann_filtered, out.z_filtered, out.gap_filtered);
  if (states.smoothed)
    fill(states.smooth_mean, out.rstar_smoothed, out.g_ann_smoothed, out.z_smoothed,
         out.gap_smoothed);
  return out;
}

// ---- config ------------------------------------------------------------------

void RunConfig::validate() const {
  if (break_styles.empty()) throw ValidationError("config selects no break styles");
  if (data_path.empty()) throw ValidationError("config has no data path");
}

namespace {

PipelineChoice parse_pipeline(const std::string& s) {
  if (s == "hlw-replication") return PipelineChoice::kHlwReplication;
  if (s == "corrected") return PipelineChoice::kCorrected;
  if (s == "both") return PipelineChoice::kBoth;
  throw ValidationError("unknown pipeline '" + s + "' (hlw-replication|corrected|both)");
}

Stage3Mode parse_stage3(const std::string& s) {
  if (s == "fix-both-lambdas") return Stage3Mode::kFixBothLambdas;
  if (s == "mle-sigma-g-given-lambda-z") return Stage3Mode::kMleSigmaGGivenLambdaZ;
  if (s == "mle-all") return Stage3Mode::kMleAll;
  throw ValidationError("unknown stage-3 mode '" + s + "'");
}

BreakStyle parse_style(const std::string& s) {
  if (s == "sw") return BreakStyle::kSw;
  if (s == "hlw") return BreakStyle::kHlw;
  throw ValidationError("unknown break style '" + s + "' (sw|hlw)");
}

}  // namespace

BreakStyle break_style_from_string(const std::string& s) { return parse_style(s); }

void RunConfig::merge_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  nlohmann::json j = nlohmann::json::parse(in, nullptr, true, true);

  if (j.contains("country")) country = j["country"].get<std::string>();
  if (j.contains("data")) data_path = j["data"].get<std::string>();
  if (j.contains("window")) {
    const auto& w = j["window"];
    if (w.contains("start")) window_start = Quarter::parse(w["start"].get<std::string>());
    if (w.contains("end")) window_end = Quarter::parse(w["end"].get<std::string>());
  }
  if (j.contains("pipeline")) pipeline = parse_pipeline(j["pipeline"].get<std::string>());
  if (j.contains("stage3")) stage3_mode = parse_stage3(j["stage3"].get<std::string>());
  if (j.contains("break_styles")) {
    break_styles.clear();
    for (const auto& s : j["break_styles"]) break_styles.push_back(parse_style(s.get<std::string>()));
  }
  if (j.contains("lookup")) {
    const auto& l = j["lookup"];
    if (l.contains("source")) lookup.regenerate = l["source"].get<std::string>() == "regenerate";
    if (l.contains("path")) lookup.path = l["path"].get<std::string>();
    if (l.contains("reps")) lookup.n_reps = l["reps"].get<int>();
    if (l.contains("seed")) lookup.seed = l["seed"].get<std::uint64_t>();
  }
  if (j.contains("out_dir")) output_dir = j["out_dir"].get<std::string>();
  if (j.contains("lambda_g")) fit.lambda_g = j["lambda_g"].get<double>();
  if (j.contains("seed")) fit.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("optimizer")) {
    const auto& o = j["optimizer"];
    if (o.contains("budget")) fit.optimizer_budget = o["budget"].get<int>();
    if (o.contains("tolerance")) fit.tolerance = o["tolerance"].get<double>();
    if (o.contains("restarts")) fit.restarts = o["restarts"].get<int>();
  }
  if (j.contains("bounds")) {
    for (const auto& [name, range] : j["bounds"].items()) {
      double lo = -std::numeric_limits<double>::infinity();
      double hi = std::numeric_limits<double>::infinity();
      if (range.is_array() && range.size() == 2) {
        if (!range[0].is_null()) lo = range[0].get<double>();
        if (!range[1].is_null()) hi = range[1].get<double>();
      } else {
        throw ValidationError("bounds entry for '" + name + "' must be a [lo, hi] array");
      }
      fit.bounds[name] = {lo, hi};
    }
  }
  if (j.contains("init")) {
    const auto& i = j["init"];
    if (i.contains("mean")) fit.init.mean = i["mean"].get<std::vector<double>>();
    if (i.contains("cov")) fit.init.cov = i["cov"].get<std::vector<std::vector<double>>>();
    if (i.contains("mode"))
      fit.init.mode = i["mode"].get<std::string>() == "diffuse" ? InitMode::kDiffuse
                                                                : InitMode::kFixedPrior;
  }
}

RunConfig RunConfig::from_json_file(const std::filesystem::path& path) {
  RunConfig c;
  c.merge_json_file(path);
  return c;
}

// ---- run ----------------------------------------------------------------------

namespace {

PipelineResult run_one_pipeline(Stage2Pipeline p, const RunConfig& config, const MueLookup& table,
                                const ModelData& data) {
  PipelineResult pr;
  pr.stage2_pipeline = p;
  pr.stage2 = fit_stage2(p, data, config.fit);
  for (const BreakStyle style : config.break_styles)
    pr.mue.push_back(estimate_lambda_z(pr.stage2, style, table, data));

  // lambda_z feeding stage 3: the exponential-Wald estimate under the
  // pipeline's native regression style (hlw for the legacy model, sw for
  // the correct model), falling back to the first style run.
  const BreakStyle native = p == Stage2Pipeline::kCorrect ? BreakStyle::kSw : BreakStyle::kHlw;
  const MueResult* chosen = &pr.mue.front();
  for (const auto& m : pr.mue)
    if (m.style == native) chosen = &m;
  const double lambda_z = chosen->primary().lambda_z;

  Stage3Mode mode = config.stage3_mode;
  if (p == Stage2Pipeline::kHlwReplication) mode = Stage3Mode::kFixBothLambdas;
  std::optional<double> lz = lambda_z;
  if (mode == Stage3Mode::kMleAll) lz.reset();
  pr.stage3 = fit_stage3(mode, config.fit.lambda_g, lz, data, config.fit);
  pr.states = extract_state_paths(pr.stage3.states, data, true);
  return pr;
}

}  // namespace

RunResult run_estimate(const RunConfig& config, const MueLookup& table, RunResult* partial) {
  config.validate();
  const TimeSeriesData raw = load_country_csv(config.data_path);
  RunResult run;
  run.config = config;
  run.data = prepare_model_data(raw, config.window_start, config.window_end);

  std::vector<Stage2Pipeline> pipelines;
  switch (config.pipeline) {
    case PipelineChoice::kHlwReplication:
      pipelines = {Stage2Pipeline::kHlwReplication};
      break;
    case PipelineChoice::kCorrected:
      pipelines = {Stage2Pipeline::kCorrect};
      break;
    case PipelineChoice::kBoth:
      pipelines = {Stage2Pipeline::kHlwReplication, Stage2Pipeline::kHlwMleSigmaG,
                   Stage2Pipeline::kCorrect};
      break;
  }
  if (config.pipeline != PipelineChoice::kCorrected && !config.fit.lambda_g)
    throw ValidationError("pipeline 'hlw-replication' requires lambda_g");

  // pipelines are independent; run them concurrently and merge in order
  const std::size_t n = pipelines.size();
  std::vector<std::optional<PipelineResult>> results(n);
  std::vector<std::exception_ptr> errors(n);
  {
    std::vector<std::thread> pool;
    const std::size_t workers = std::min<std::size_t>(n, std::thread::hardware_concurrency() > 0
                                                             ? std::thread::hardware_concurrency()
                                                             : 1);
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w]() {
        for (std::size_t i = w; i < n; i += workers) {
          try {
            results[i] = run_one_pipeline(pipelines[i], config, table, run.data);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    for (auto& th : pool) th.join();
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (errors[i]) {
      if (partial) {
        partial->config = run.config;
        partial->data = run.data;
        for (std::size_t j = 0; j < n; ++j)
          if (results[j]) partial->pipelines.push_back(std::move(*results[j]));
      }
      std::rethrow_exception(errors[i]);
    }
    run.pipelines.push_back(std::move(*results[i]));
  }
  return run;
}

// ---- output -------------------------------------------------------------------

namespace {

class StagedWriter {
 public:
  std::ofstream open(const std::filesystem::path& final_path) {
    const std::filesystem::path partial = final_path.string() + ".partial";
    staged_.emplace_back(partial, final_path);
    std::ofstream out(partial, std::ios::trunc);
    if (!out) throw IoError("cannot write '" + partial.string() + "'");
    return out;
  }

  std::vector<std::filesystem::path> commit() {
    std::vector<std::filesystem::path> finals;
    for (const auto& [partial, final_path] : staged_) {
      std::filesystem::rename(partial, final_path);
      finals.push_back(final_path);
    }
    staged_.clear();
    return finals;
  }

  std::vector<std::filesystem::path> staged_paths() const {
    std::vector<std::filesystem::path> out;
    for (const auto& [partial, final_path] : staged_) out.push_back(partial);
    return out;
  }

 private:
  std::vector<std::pair<std::filesystem::path, std::filesystem::path>> staged_;
};

nlohmann::json params_json(const ModelVariant& variant, const FitResult& fr,
                           const InitConfig& init) {
  nlohmann::json j;
  j["variant"] = variant.name();
  nlohmann::json p;
  for (const char* name : {"a_y1", "a_y2", "a_r", "a_0", "a_g", "b_pi", "b_y", "sigma_ytilde",
                           "sigma_pi", "sigma_ystar", "sigma_g", "sigma_z"})
    p[name] = fr.params.get(name);
  j["params"] = p;
  nlohmann::json fixed;
  if (variant.sigma_g_mode == SigmaMode::kRatioImplied) fixed["lambda_g"] = fr.params.lambda_g;
  if (variant.has_z() && variant.sigma_z_mode == SigmaMode::kRatioImplied)
    fixed["lambda_z"] = fr.params.lambda_z;
  j["fixed"] = fixed;
  nlohmann::json ji;
  ji["mode"] = init.mode == InitMode::kDiffuse ? "diffuse" : "fixed-prior";
  if (!init.mean.empty()) ji["mean"] = init.mean;
  if (!init.cov.empty()) ji["cov"] = init.cov;
  j["init"] = ji;
  j["log_likelihood"] = fr.log_likelihood;
  nlohmann::json conv;
  conv["evaluations"] = fr.report.total_evaluations;
  conv["converged"] = fr.report.converged;
  conv["boundary_zeros"] = fr.report.boundary_zeros;
  nlohmann::json starts = nlohmann::json::array();
  for (const auto& s : fr.report.starts) {
    nlohmann::json sj;
    sj["log_likelihood"] = s.log_likelihood;
    sj["evaluations"] = s.evaluations;
    sj["converged"] = s.converged;
    starts.push_back(sj);
  }
  conv["starts"] = starts;
  j["convergence"] = conv;
  return j;
}

ModelVariant stage2_variant(Stage2Pipeline p) {
  switch (p) {
    case Stage2Pipeline::kHlwReplication:
      return ModelVariant{VariantTag::kStage2Hlw, SigmaMode::kRatioImplied, SigmaMode::kMleFree};
    case Stage2Pipeline::kHlwMleSigmaG:
      return ModelVariant{VariantTag::kStage2Hlw, SigmaMode::kMleFree, SigmaMode::kMleFree};
    case Stage2Pipeline::kCorrect:
      return ModelVariant{VariantTag::kStage2Correct, SigmaMode::kMleFree, SigmaMode::kMleFree};
  }
  throw ValidationError("unknown pipeline");
}

ModelVariant stage3_variant(Stage3Mode m) {
  switch (m) {
    case Stage3Mode::kFixBothLambdas:
      return ModelVariant{VariantTag::kFull, SigmaMode::kRatioImplied, SigmaMode::kRatioImplied};
    case Stage3Mode::kMleSigmaGGivenLambdaZ:
      return ModelVariant{VariantTag::kFull, SigmaMode::kMleFree, SigmaMode::kRatioImplied};
    case Stage3Mode::kMleAll:
      return ModelVariant{VariantTag::kFull, SigmaMode::kMleFree, SigmaMode::kMleFree};
  }
  throw ValidationError("unknown stage-3 mode");
}

}  // namespace

std::vector<std::filesystem::path> write_outputs(const RunResult& run,
                                                 const std::filesystem::path& dir, bool finalize) {
  std::filesystem::create_directories(dir);
  StagedWriter writer;

  for (const auto& pr : run.pipelines) {
    const std::string tag = to_string(pr.stage2_pipeline);
    {
      auto out = writer.open(dir / ("states_" + tag + ".csv"));
      out << "date,rstar_filtered,rstar_smoothed,g_annualized_filtered,g_annualized_smoothed,"
             "z_filtered,z_smoothed,output_gap_filtered,output_gap_smoothed\n";
      const StatePaths& s = pr.states;
      for (std::size_t t = 0; t < s.dates.size(); ++t)
        out << s.dates[t].str() << ',' << format_number(s.rstar_filtered[t]) << ','
            << format_number(s.rstar_smoothed[t]) << ',' << format_number(s.g_ann_filtered[t])
            << ',' << format_number(s.g_ann_smoothed[t]) << ',' << format_number(s.z_filtered[t])
            << ',' << format_number(s.z_smoothed[t]) << ',' << format_number(s.gap_filtered[t])
            << ',' << format_number(s.gap_smoothed[t]) << '\n';
    }
    {
      auto out = writer.open(dir / ("ftau_" + tag + ".csv"));
      out << "date,f,variant\n";
      for (const auto& m : pr.mue) {
        const std::string style = to_string(m.style);
        for (std::size_t i = 0; i < m.f_seq.size(); ++i)
          out << m.f_dates[i].str() << ',' << format_number(m.f_seq[i]) << ',' << style << '\n';
      }
    }
    {
      auto out = writer.open(dir / ("params_" + tag + "_stage2.json"));
      out << params_json(stage2_variant(pr.stage2_pipeline), pr.stage2.fit, run.config.fit.init)
                 .dump(2)
          << '\n';
    }
    {
      auto out = writer.open(dir / ("params_" + tag + "_stage3.json"));
      out << params_json(stage3_variant(pr.stage3.mode), pr.stage3.fit, run.config.fit.init)
                 .dump(2)
          << '\n';
    }
  }

  {
    auto out = writer.open(dir / "mue_summary.csv");
    out << "country,pipeline,style,stat,value,p_value,lambda_hat,lambda_z,ci90_lo,ci90_hi,"
           "extrapolated\n";
    for (const auto& pr : run.pipelines)
      for (const auto& m : pr.mue)
        for (const auto& name : MueLookup::stat_names()) {
          const MueEntry& e = m.by_stat.at(name);
          out << run.config.country << ',' << to_string(pr.stage2_pipeline) << ','
              << to_string(m.style) << ',' << name << ',' << format_number(e.stat_value) << ','
              << format_number(e.p_value) << ',' << format_number(e.lambda_hat) << ','
              << format_number(e.lambda_z) << ',' << format_number(e.ci90_lo) << ','
              << format_number(e.ci90_hi) << ',' << (e.extrapolated ? 1 : 0) << '\n';
        }
  }

  return finalize ? writer.commit() : writer.staged_paths();
}

std::string summarize(const RunResult& run) {
  std::ostringstream os;
  os << "country: " << run.config.country << ", sample " << run.data.dates.front().str() << " .. "
     << run.data.dates.back().str() << " (T=" << run.data.T() << ")\n";
  for (const auto& pr : run.pipelines) {
    os << "pipeline " << to_string(pr.stage2_pipeline)
       << ": stage2 loglik=" << format_number(pr.stage2.fit.log_likelihood) << "\n";
    for (const auto& m : pr.mue) {
      os << "  style " << to_string(m.style) << ": lambda_z";
      for (const auto& name : MueLookup::stat_names())
        os << "  " << name << "=" << format_number(m.by_stat.at(name).lambda_z);
      os << "\n";
    }
    const StatePaths& s = pr.states;
    os << "  stage3 " << to_string(pr.stage3.mode)
       << ": loglik=" << format_number(pr.stage3.fit.log_likelihood)
       << ", sigma_g=" << format_number(pr.stage3.fit.params.sigma_g)
       << ", sigma_z=" << format_number(pr.stage3.fit.params.sigma_z) << "\n";
    os << "  end-of-sample rstar (" << s.dates.back().str()
       << "): filtered=" << format_number(s.rstar_filtered.back())
       << ", smoothed=" << format_number(s.rstar_smoothed.back()) << "\n";
  }
  return os.str();
}

}  // namespace rstar
