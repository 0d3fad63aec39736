#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rstar/errors.hpp"
#include "rstar/mue.hpp"
#include "rstar/pipeline.hpp"

namespace {

using namespace rstar;

MueLookup obtain_lookup(const LookupSource& src) {
  if (src.regenerate) {
    std::cerr << "regenerating look-up table (T=500, reps=" << src.n_reps << ", seed=" << src.seed
              << ")...\n";
    return simulate_lookup(500, src.n_reps, src.seed);
  }
  if (src.path.empty())
    throw ValidationError("no look-up table: pass --lookup <file> or --regenerate-lookup");
  return MueLookup::load(src.path);
}

int cmd_estimate(const RunConfig& config) {
  config.validate();
  const MueLookup table = obtain_lookup(config.lookup);
  RunResult partial;
  RunResult run;
  try {
    run = run_estimate(config, table, &partial);
  } catch (...) {
    if (!partial.pipelines.empty()) {
      const auto staged = write_outputs(partial, config.output_dir, /*finalize=*/false);
      std::cerr << "kept partial outputs:\n";
      for (const auto& p : staged) std::cerr << "  " << p.string() << "\n";
    }
    throw;
  }
  const auto manifest = write_outputs(run, config.output_dir);
  std::cout << summarize(run);
  std::cout << "wrote:\n";
  for (const auto& p : manifest) std::cout << "  " << p.string() << "\n";
  return 0;
}

int cmd_simulate_lookup(int reps, std::uint64_t seed, int t_sim, int threads,
                        const std::string& out) {
  const MueLookup table = simulate_lookup(t_sim, reps, seed, threads);
  table.save(out);
  std::cout << "wrote " << out << " (+ .meta.json, .null.csv); lambda=0 medians:";
  for (const auto& name : MueLookup::stat_names())
    std::cout << " " << name << "=" << format_number(table.median.at(name).front());
  std::cout << "\n";
  return 0;
}

int cmd_recursive(const RunConfig& config, const std::string& first_end_str,
                  const std::string& out_path) {
  const Quarter first_end = Quarter::parse(first_end_str);
  const TimeSeriesData data = load_country_csv(config.data_path);

  EstimationSpec spec;
  spec.variant = ModelVariant{VariantTag::kFull, SigmaMode::kMleFree, SigmaMode::kMleFree};
  spec.free_params = {"a_y1", "a_y2", "a_r", "b_pi", "b_y", "sigma_ytilde", "sigma_pi",
                      "sigma_ystar", "sigma_g", "sigma_z"};
  spec.optimizer_budget = config.fit.optimizer_budget;
  spec.tolerance = config.fit.tolerance;
  spec.restarts = config.fit.restarts;
  spec.seed = config.fit.seed;
  spec.init = config.fit.init;
  spec.bounds = config.fit.bounds;

  const auto windows = fit_recursive(spec, data, first_end, config.window_start);

  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + out_path + "'");
  out << "window_end";
  for (const auto& name : spec.free_params) out << ',' << name;
  out << ",loglik\n";
  for (const auto& w : windows) {
    out << w.window_end.str();
    for (const auto& name : spec.free_params) out << ',' << format_number(w.fit.params.get(name));
    out << ',' << format_number(w.fit.log_likelihood) << '\n';
  }
  std::cout << "wrote " << out_path << " (" << windows.size() << " windows)\n";
  return 0;
}

int cmd_break_test(const std::string& input, const std::string& style_str,
                   const std::string& grid_str, const std::string& lookup_path,
                   const std::string& ftau_out) {
  std::ifstream in(input);
  if (!in) throw IoError("cannot open '" + input + "'");
  std::vector<double> series;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find_last_of(',');
    const std::string field = comma == std::string::npos ? line : line.substr(comma + 1);
    char* end = nullptr;
    const double v = std::strtod(field.c_str(), &end);
    if (end == nullptr || *end != '\0') {
      if (first) {  // header row
        first = false;
        continue;
      }
      throw ValidationError("unparseable value '" + field + "' in " + input);
    }
    first = false;
    series.push_back(v);
  }
  if (series.size() < 20) throw ValidationError("series too short for a break test");

  const int T = static_cast<int>(series.size());
  const BreakGrid grid = make_grid(break_style_from_string(grid_str), T);
  std::vector<double> fs;
  if (style_str == "sw") {
    fs = fstat_sequence_sw(series, grid);
  } else if (style_str == "hlw") {
    fs = fstat_sequence_hlw(series, Eigen::MatrixXd(T, 0), grid, true);
  } else {
    throw ValidationError("unknown style '" + style_str + "' (sw|hlw)");
  }
  const BreakStats bs = break_stats(fs);
  const double L = nyblom_L(series);

  std::cout << "T=" << T << " grid=[" << grid.tau0 << "," << grid.tau1 << "]\n";
  std::cout << "L=" << format_number(L) << " MW=" << format_number(bs.mw)
            << " EW=" << format_number(bs.ew) << " QLR=" << format_number(bs.qlr) << "\n";

  if (!lookup_path.empty()) {
    const MueLookup table = MueLookup::load(lookup_path);
    for (const auto& [name, value] :
         std::vector<std::pair<std::string, double>>{{"L", L}, {"MW", bs.mw}, {"EW", bs.ew}, {"QLR", bs.qlr}}) {
      const MueEntry e = lookup_mue(name, value, table, T);
      std::cout << name << ": lambda_hat=" << format_number(e.lambda_hat)
                << " lambda_z=" << format_number(e.lambda_z) << " p=" << format_number(e.p_value)
                << " ci90=[" << format_number(e.ci90_lo) << "," << format_number(e.ci90_hi)
                << "]\n";
    }
  }
  if (!ftau_out.empty()) {
    std::ofstream fout(ftau_out, std::ios::trunc);
    if (!fout) throw IoError("cannot write '" + ftau_out + "'");
    fout << "tau,f\n";
    for (int i = 0; i < static_cast<int>(fs.size()); ++i)
      fout << grid.tau0 + i << ',' << format_number(fs[i]) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"natural-rate estimation: staged state-space fits and median unbiased estimation"};
  app.require_subcommand(1);

  // estimate
  auto* est = app.add_subcommand("estimate", "staged estimation with the MUE comparison");
  std::string est_config, est_data, est_country = "data", est_pipeline = "both";
  std::string est_stage3 = "mle-sigma-g-given-lambda-z", est_out = "out";
  std::string est_wstart, est_wend, est_lookup;
  std::vector<std::string> est_styles;
  double est_lambda_g = -1.0;
  bool est_regen = false;
  int est_regen_reps = 5000;
  std::uint64_t est_seed = 0, est_lookup_seed = 20240528;
  est->add_option("--config", est_config, "JSON config; its fields override flags");
  est->add_option("--data", est_data, "input CSV (date,gdp.log,inflation,interest)");
  est->add_option("--country", est_country, "label used in outputs");
  est->add_option("--window-start", est_wstart, "estimation window start (YYYY:Qn)");
  est->add_option("--window-end", est_wend, "estimation window end (YYYY:Qn)");
  est->add_option("--pipeline", est_pipeline, "hlw-replication|corrected|both");
  est->add_option("--stage3", est_stage3,
                  "fix-both-lambdas|mle-sigma-g-given-lambda-z|mle-all");
  est->add_option("--break-style", est_styles, "sw and/or hlw (repeatable)");
  est->add_option("--lookup", est_lookup, "look-up table CSV");
  est->add_flag("--regenerate-lookup", est_regen, "simulate the look-up table instead");
  est->add_option("--regenerate-lookup-reps", est_regen_reps, "replications when regenerating");
  est->add_option("--lookup-seed", est_lookup_seed, "seed when regenerating");
  est->add_option("--lambda-g", est_lambda_g, "trend growth ratio for the replication pipeline");
  est->add_option("--seed", est_seed, "optimizer jitter seed");
  est->add_option("--out", est_out, "output directory");

  // simulate-lookup
  auto* sim = app.add_subcommand("simulate-lookup", "regenerate the MUE look-up table");
  int sim_reps = 5000, sim_tsim = 500, sim_threads = 0;
  std::uint64_t sim_seed = 20240528;
  std::string sim_out = "lookup.csv";
  sim->add_option("--reps", sim_reps, "replications per lambda (>= 200)");
  sim->add_option("--seed", sim_seed, "stream seed");
  sim->add_option("--t-sim", sim_tsim, "simulated series length");
  sim->add_option("--threads", sim_threads, "worker threads (0 = hardware)");
  sim->add_option("--out", sim_out, "output CSV path");

  // recursive
  auto* rec = app.add_subcommand("recursive", "expanding-window ML of the full model");
  std::string rec_config, rec_data, rec_first_end, rec_out = "recursive.csv", rec_wstart;
  rec->add_option("--config", rec_config, "JSON config; its fields override flags");
  rec->add_option("--data", rec_data, "input CSV");
  rec->add_option("--first-end", rec_first_end, "first window end (YYYY:Qn)")->required();
  rec->add_option("--window-start", rec_wstart, "estimation window start");
  rec->add_option("--out", rec_out, "output CSV path");

  // break-test
  auto* brk = app.add_subcommand("break-test", "raw break statistics on a user series");
  std::string brk_input, brk_style = "sw", brk_grid = "sw", brk_lookup, brk_ftau;
  brk->add_option("--input", brk_input, "CSV of values (optional date column)")->required();
  brk->add_option("--style", brk_style, "regression style: sw|hlw");
  brk->add_option("--grid", brk_grid, "grid convention: sw|hlw");
  brk->add_option("--lookup", brk_lookup, "look-up table for lambda_z conversion");
  brk->add_option("--ftau-out", brk_ftau, "write the F(tau) sequence here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (est->parsed()) {
      rstar::RunConfig config;
      if (!est_data.empty()) config.data_path = est_data;
      config.country = est_country;
      if (!est_wstart.empty()) config.window_start = rstar::Quarter::parse(est_wstart);
      if (!est_wend.empty()) config.window_end = rstar::Quarter::parse(est_wend);
      config.pipeline = est_pipeline == "hlw-replication" ? rstar::PipelineChoice::kHlwReplication
                        : est_pipeline == "corrected"     ? rstar::PipelineChoice::kCorrected
                                                          : rstar::PipelineChoice::kBoth;
      if (est_pipeline != "hlw-replication" && est_pipeline != "corrected" &&
          est_pipeline != "both")
        throw rstar::ValidationError("unknown pipeline '" + est_pipeline + "'");
      if (est_stage3 == "fix-both-lambdas")
        config.stage3_mode = rstar::Stage3Mode::kFixBothLambdas;
      else if (est_stage3 == "mle-sigma-g-given-lambda-z")
        config.stage3_mode = rstar::Stage3Mode::kMleSigmaGGivenLambdaZ;
      else if (est_stage3 == "mle-all")
        config.stage3_mode = rstar::Stage3Mode::kMleAll;
      else
        throw rstar::ValidationError("unknown stage-3 mode '" + est_stage3 + "'");
      if (!est_styles.empty()) {
        config.break_styles.clear();
        for (const auto& s : est_styles)
          config.break_styles.push_back(rstar::break_style_from_string(s));
      }
      config.lookup.regenerate = est_regen;
      if (!est_lookup.empty()) config.lookup.path = est_lookup;
      config.lookup.n_reps = est_regen_reps;
      config.lookup.seed = est_lookup_seed;
      if (est_lambda_g >= 0.0) config.fit.lambda_g = est_lambda_g;
      config.fit.seed = est_seed;
      config.output_dir = est_out;
      if (!est_config.empty()) config.merge_json_file(est_config);  // config wins
      return cmd_estimate(config);
    }
    if (sim->parsed()) return cmd_simulate_lookup(sim_reps, sim_seed, sim_tsim, sim_threads, sim_out);
    if (rec->parsed()) {
      rstar::RunConfig config;
      if (!rec_data.empty()) config.data_path = rec_data;
      if (!rec_wstart.empty()) config.window_start = rstar::Quarter::parse(rec_wstart);
      if (!rec_config.empty()) config.merge_json_file(rec_config);
      if (config.data_path.empty()) throw rstar::ValidationError("recursive needs --data or a config");
      return cmd_recursive(config, rec_first_end, rec_out);
    }
    if (brk->parsed()) return cmd_break_test(brk_input, brk_style, brk_grid, brk_lookup, brk_ftau);
  } catch (const rstar::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
