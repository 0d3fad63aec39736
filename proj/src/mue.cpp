#include "rstar/mue.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <thread>

#include "rstar/errors.hpp"
#include "rstar/rng.hpp"
#include "json.hpp"

namespace rstar {

// ---- grids ----------------------------------------------------------------

void BreakGrid::validate(int T) const {
  if (tau0 < 2 || tau1 > T - 2 || tau0 > tau1)
    throw ValidationError("degenerate dummy: grid [" + std::to_string(tau0) + "," +
                          std::to_string(tau1) + "] leaves fewer than 2 observations on a side (T=" +
                          std::to_string(T) + ")");
}

BreakGrid BreakGrid::sw_style(int T) {
  const int tau0 = static_cast<int>(std::floor(0.15 * T));
  return BreakGrid{tau0, T - tau0};
}

BreakGrid BreakGrid::hlw_style(int T) { return BreakGrid{4, T - 4}; }

BreakGrid make_grid(BreakStyle style, int T) {
  return style == BreakStyle::kSw ? BreakGrid::sw_style(T) : BreakGrid::hlw_style(T);
}

std::string to_string(BreakStyle style) { return style == BreakStyle::kSw ? "sw" : "hlw"; }

std::string to_string(Stage2Pipeline p) {
  switch (p) {
    case Stage2Pipeline::kHlwReplication: return "hlw_replication";
    case Stage2Pipeline::kHlwMleSigmaG: return "hlw_mle_sigma_g";
    case Stage2Pipeline::kCorrect: return "correct";
  }
  return "?";
}

// ---- statistics -------------------------------------------------------------

BreakStats break_stats(std::span<const double> f_seq) {
  if (f_seq.empty()) throw ValidationError("empty grid: no F statistics");
  for (double f : f_seq)
    if (!std::isfinite(f)) throw ValidationError("non-finite F statistic");

  const double f0 = f_seq[0];
  double m = f_seq[0];
  for (double f : f_seq) m = std::max(m, f);

  // mean computed on differences from f_seq[0] so a constant sequence
  // returns its value exactly
  double sum_d = 0.0;
  for (double f : f_seq) sum_d += f - f0;
  const double mw = f0 + sum_d / static_cast<double>(f_seq.size());

  // max-shifted to avoid overflow in exp
  double sum_e = 0.0;
  for (double f : f_seq) sum_e += std::exp(0.5 * (f - m));
  const double ew = 0.5 * m + std::log(sum_e / static_cast<double>(f_seq.size()));

  return BreakStats{mw, ew, m};
}

double nyblom_L(std::span<const double> x) {
  const std::size_t T = x.size();
  if (T < 2) throw ValidationError("series too short for the L statistic");
  double mean = 0.0;
  for (double v : x) {
    if (!std::isfinite(v)) throw ValidationError("non-finite value in L input");
    mean += v;
  }
  mean /= static_cast<double>(T);

  double s = 0.0, sum_s2 = 0.0, sum_e2 = 0.0;
  for (double v : x) {
    const double e = v - mean;
    s += e;
    sum_s2 += s * s;
    sum_e2 += e * e;
  }
  const double var = sum_e2 / static_cast<double>(T);  // divisor T
  // threshold at rounding level so genuinely tiny (but real) scales pass
  if (var <= 1e-28 * (1.0 + mean * mean))
    throw ValidationError("zero variance: L statistic undefined for a constant series");
  return sum_s2 / (static_cast<double>(T) * static_cast<double>(T) * var);
}

std::vector<double> fstat_sequence_sw(std::span<const double> lhs, const BreakGrid& grid) {
  const int T = static_cast<int>(lhs.size());
  grid.validate(T);

  double mean = 0.0;
  for (double v : lhs) mean += v;
  mean /= static_cast<double>(T);

  std::vector<double> prefix(T + 1, 0.0);
  double ss = 0.0;
  for (int t = 0; t < T; ++t) {
    const double e = lhs[t] - mean;
    prefix[t + 1] = prefix[t] + e;
    ss += e * e;
  }
  const double scale = ss / static_cast<double>(T);

  // a constant series (variation at rounding level only) carries no break
  // evidence: F = 0 everywhere by convention
  if (scale <= 1e-28 * (1.0 + mean * mean)) return std::vector<double>(grid.n_tau(), 0.0);

  std::vector<double> out;
  out.reserve(grid.n_tau());
  for (int tau = grid.tau0; tau <= grid.tau1; ++tau) {
    const double n1 = tau, n2 = T - tau;
    const double m1 = prefix[tau] / n1;
    const double m2 = (prefix[T] - prefix[tau]) / n2;
    const double rss = std::max(0.0, ss - n1 * m1 * m1 - n2 * m2 * m2);
    const double s2 = rss / static_cast<double>(T - 2);
    const double se2 = s2 * (1.0 / n1 + 1.0 / n2);
    const double d = m2 - m1;
    if (se2 <= 0.0) {
      out.push_back(d * d <= 1e-24 * (1.0 + scale)
                        ? 0.0
                        : std::numeric_limits<double>::infinity());
    } else {
      out.push_back(d * d / se2);
    }
  }
  return out;
}

std::vector<double> fstat_sequence_hlw(std::span<const double> y, const Eigen::MatrixXd& extras,
                                       const BreakGrid& grid, bool include_intercept) {
  const int T = static_cast<int>(y.size());
  grid.validate(T);
  if (extras.rows() != 0 && extras.rows() != T)
    throw ValidationError("extras row count does not match the series");

  const int k = static_cast<int>(extras.cols());
  const int p = k + (include_intercept ? 1 : 0) + 1;  // + dummy
  if (T - p < 1) throw ValidationError("too few observations for the break regression");

  Eigen::MatrixXd X(T, p);
  if (k > 0) X.leftCols(k) = extras;
  if (include_intercept) X.col(k).setOnes();
  Eigen::VectorXd yv(T);
  for (int t = 0; t < T; ++t) yv[t] = y[t];

  double yscale = 0.0;
  {
    const double ym = yv.mean();
    yscale = (yv.array() - ym).square().sum() / static_cast<double>(T);
    if (yscale <= 1e-28 * (1.0 + ym * ym)) return std::vector<double>(grid.n_tau(), 0.0);
  }

  std::vector<double> out;
  out.reserve(grid.n_tau());
  for (int tau = grid.tau0; tau <= grid.tau1; ++tau) {
    for (int t = 0; t < T; ++t) X(t, p - 1) = (t + 1) > tau ? 1.0 : 0.0;

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < p)
      throw ValidationError("rank deficient break regression at tau=" + std::to_string(tau));
    const Eigen::VectorXd beta = qr.solve(yv);
    const Eigen::VectorXd resid = yv - X * beta;
    const double rss = resid.squaredNorm();
    const double s2 = rss / static_cast<double>(T - p);

    const Eigen::MatrixXd xtx = X.transpose() * X;
    Eigen::VectorXd e_last = Eigen::VectorXd::Zero(p);
    e_last[p - 1] = 1.0;
    const Eigen::VectorXd w = xtx.ldlt().solve(e_last);
    const double var_last = s2 * w[p - 1];
    const double b = beta[p - 1];
    if (var_last <= 0.0) {
      out.push_back(b * b <= 1e-24 * (1.0 + yscale)
                        ? 0.0
                        : std::numeric_limits<double>::infinity());
    } else {
      out.push_back(b * b / var_last);
    }
  }
  return out;
}

// ---- look-up table -----------------------------------------------------------

const std::vector<std::string>& MueLookup::stat_names() {
  static const std::vector<std::string> names = {"L", "MW", "EW", "QLR"};
  return names;
}

namespace {

double quantile_sorted(const std::vector<double>& v, double p) {
  if (v.empty()) throw ValidationError("quantile of empty sample");
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= v.size()) return v.back();
  return v[lo] + (h - lo) * (v[lo + 1] - v[lo]);
}

// pool-adjacent-violators, nondecreasing
bool isotonize(std::vector<double>& v) {
  bool changed = false;
  std::vector<double> val(v), weight(v.size(), 1.0);
  std::vector<std::size_t> count;
  std::vector<double> pool_val, pool_w;
  for (std::size_t i = 0; i < v.size(); ++i) {
    pool_val.push_back(v[i]);
    pool_w.push_back(1.0);
    count.push_back(1);
    while (pool_val.size() > 1 && pool_val[pool_val.size() - 2] > pool_val.back()) {
      changed = true;
      const double w = pool_w[pool_w.size() - 2] + pool_w.back();
      const double m = (pool_val[pool_val.size() - 2] * pool_w[pool_w.size() - 2] +
                        pool_val.back() * pool_w.back()) /
                       w;
      pool_val.pop_back();
      pool_w.pop_back();
      const std::size_t c = count.back();
      count.pop_back();
      pool_val.back() = m;
      pool_w.back() = w;
      count.back() += c;
    }
  }
  std::size_t idx = 0;
  for (std::size_t b = 0; b < pool_val.size(); ++b)
    for (std::size_t j = 0; j < count[b]; ++j) v[idx++] = pool_val[b];
  // strictly increasing for invertibility
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] <= v[i - 1]) v[i] = v[i - 1] + 1e-9 * (1.0 + std::abs(v[i - 1]));
  (void)val;
  (void)weight;
  return changed;
}

void run_parallel(int n_tasks, int n_threads, const std::function<void(int)>& task) {
  if (n_threads <= 0) n_threads = static_cast<int>(std::thread::hardware_concurrency());
  n_threads = std::max(1, std::min(n_threads, n_tasks));
  if (n_threads == 1) {
    for (int i = 0; i < n_tasks; ++i) task(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(n_threads);
  for (int w = 0; w < n_threads; ++w)
    pool.emplace_back([&, w]() {
      for (int i = w; i < n_tasks; i += n_threads) task(i);
    });
  for (auto& th : pool) th.join();
}

}  // namespace

MueLookup simulate_lookup(int T_sim, int n_reps, std::uint64_t seed, int n_threads) {
  if (n_reps < 200) throw ValidationError("look-up simulation needs n_reps >= 200");
  if (T_sim < 20) throw ValidationError("look-up simulation needs T_sim >= 20");

  MueLookup table;
  table.T_sim = T_sim;
  table.n_reps = n_reps;
  table.seed = seed;
  table.L_divisor = "T";
  table.style = "sw";
  for (int l = 0; l <= 30; ++l) table.lambda_grid.push_back(l);

  const int n_lambda = static_cast<int>(table.lambda_grid.size());
  // draws[lambda][stat][rep]
  std::vector<std::array<std::vector<double>, 4>> draws(n_lambda);
  const BreakGrid grid = BreakGrid::sw_style(T_sim);

  run_parallel(n_lambda, n_threads, [&](int li) {
    const int lambda = table.lambda_grid[li];
    auto& slot = draws[li];
    for (auto& v : slot) v.resize(n_reps);
    std::vector<double> x(T_sim);
    for (int rep = 0; rep < n_reps; ++rep) {
      Rng rng(seed, static_cast<std::uint64_t>(lambda), static_cast<std::uint64_t>(rep));
      double b = 0.0;
      const double step = static_cast<double>(lambda) / static_cast<double>(T_sim);
      for (int t = 0; t < T_sim; ++t) {
        b += step * rng.normal();
        x[t] = b + rng.normal();
      }
      const std::vector<double> fs = fstat_sequence_sw(x, grid);
      const BreakStats bs = break_stats(fs);
      slot[0][rep] = nyblom_L(x);
      slot[1][rep] = bs.mw;
      slot[2][rep] = bs.ew;
      slot[3][rep] = bs.qlr;
    }
  });

  const auto& names = MueLookup::stat_names();
  for (std::size_t s = 0; s < names.size(); ++s) {
    std::vector<double> med(n_lambda), lo(n_lambda), hi(n_lambda);
    for (int li = 0; li < n_lambda; ++li) {
      std::vector<double>& v = draws[li][s];
      std::sort(v.begin(), v.end());
      med[li] = quantile_sorted(v, 0.5);
      lo[li] = quantile_sorted(v, 0.05);
      hi[li] = quantile_sorted(v, 0.95);
    }
    table.isotonic_applied[names[s]] = isotonize(med);
    isotonize(lo);
    isotonize(hi);
    table.median[names[s]] = med;
    table.q05[names[s]] = lo;
    table.q95[names[s]] = hi;
    table.null_draws[names[s]] = draws[0][s];  // already sorted
  }
  return table;
}

namespace {

// Inverse of a strictly increasing curve sampled on the lambda grid.
double invert_curve(const std::vector<int>& grid, const std::vector<double>& curve, double value,
                    bool* extrapolated = nullptr) {
  if (value < curve.front()) return 0.0;
  if (value >= curve.back()) {
    if (extrapolated && value > curve.back()) *extrapolated = true;
    return static_cast<double>(grid.back());
  }
  for (std::size_t i = 0; i + 1 < curve.size(); ++i) {
    if (value <= curve[i + 1]) {
      const double frac = (value - curve[i]) / (curve[i + 1] - curve[i]);
      return grid[i] + frac * (grid[i + 1] - grid[i]);
    }
  }
  return static_cast<double>(grid.back());
}

}  // namespace

MueEntry lookup_mue(const std::string& stat_name, double value, const MueLookup& table, int T) {
  const auto it = table.median.find(stat_name);
  if (it == table.median.end())
    throw ValidationError("unknown statistic '" + stat_name + "' in look-up table");
  if (T <= 0) throw ValidationError("sample size must be positive");

  MueEntry e;
  e.stat_value = value;
  if (value < it->second.front()) {
    e.lambda_hat = 0.0;  // below the lambda=0 median: exactly zero
  } else {
    e.lambda_hat = invert_curve(table.lambda_grid, it->second, value, &e.extrapolated);
  }
  e.lambda_z = e.lambda_hat / static_cast<double>(T);

  const auto lo95 = table.q95.find(stat_name);
  const auto hi05 = table.q05.find(stat_name);
  if (lo95 != table.q95.end() && hi05 != table.q05.end()) {
    const double l_lo = invert_curve(table.lambda_grid, lo95->second, value);
    const double l_hi = invert_curve(table.lambda_grid, hi05->second, value);
    e.ci90_lo = std::max(0.0, l_lo) / static_cast<double>(T);
    e.ci90_hi = std::max(0.0, l_hi) / static_cast<double>(T);
  }

  const auto nd = table.null_draws.find(stat_name);
  if (nd != table.null_draws.end() && !nd->second.empty()) {
    const auto& null = nd->second;  // sorted
    const std::size_t ge =
        null.end() - std::lower_bound(null.begin(), null.end(), value);
    e.p_value = (1.0 + static_cast<double>(ge)) / (static_cast<double>(null.size()) + 1.0);
  } else {
    e.p_value = std::numeric_limits<double>::quiet_NaN();
  }
  return e;
}

void MueLookup::save(const std::filesystem::path& csv_path) const {
  auto sibling = [&](const std::string& suffix) {
    std::filesystem::path p = csv_path;
    p.replace_extension();
    return std::filesystem::path(p.string() + suffix);
  };

  {
    std::ofstream out(csv_path, std::ios::trunc);
    if (!out) throw IoError("cannot write '" + csv_path.string() + "'");
    out << "lambda,stat,median,q05,q95\n";
    char buf[128];
    for (std::size_t li = 0; li < lambda_grid.size(); ++li)
      for (const auto& name : stat_names()) {
        std::snprintf(buf, sizeof(buf), "%d,%s,%.12g,%.12g,%.12g\n", lambda_grid[li],
                      name.c_str(), median.at(name)[li], q05.at(name)[li], q95.at(name)[li]);
        out << buf;
      }
  }
  {
    nlohmann::json meta;
    meta["T_sim"] = T_sim;
    meta["n_reps"] = n_reps;
    meta["seed"] = seed;
    meta["L_divisor"] = L_divisor;
    meta["style"] = style;
    for (const auto& [k, v] : isotonic_applied) meta["isotonic_applied"][k] = v;
    std::ofstream out(sibling(".meta.json"), std::ios::trunc);
    if (!out) throw IoError("cannot write metadata for '" + csv_path.string() + "'");
    out << meta.dump(2) << "\n";
  }
  {
    std::ofstream out(sibling(".null.csv"), std::ios::trunc);
    if (!out) throw IoError("cannot write null draws for '" + csv_path.string() + "'");
    out << "stat,value\n";
    char buf[64];
    for (const auto& name : stat_names()) {
      const auto it = null_draws.find(name);
      if (it == null_draws.end()) continue;
      for (double v : it->second) {
        std::snprintf(buf, sizeof(buf), "%s,%.12g\n", name.c_str(), v);
        out << buf;
      }
    }
  }
}

MueLookup MueLookup::load(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw IoError("cannot open look-up table '" + csv_path.string() + "'");

  MueLookup table;
  std::string line;
  if (!std::getline(in, line) || line.rfind("lambda,stat,median", 0) != 0)
    throw ValidationError("look-up table '" + csv_path.string() + "' has an unexpected header");

  std::map<std::string, std::map<int, std::array<double, 3>>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    int lambda;
    char stat[16];
    double med, lo, hi;
    if (std::sscanf(line.c_str(), "%d,%15[^,],%lf,%lf,%lf", &lambda, stat, &med, &lo, &hi) != 5)
      throw ValidationError("bad look-up table row: " + line);
    rows[stat][lambda] = {med, lo, hi};
  }
  if (rows.empty()) throw ValidationError("empty look-up table");

  const auto& first = rows.begin()->second;
  for (const auto& [lambda, vals] : first) table.lambda_grid.push_back(lambda);
  for (const auto& [stat, by_lambda] : rows) {
    if (by_lambda.size() != table.lambda_grid.size())
      throw ValidationError("look-up table rows uneven for statistic '" + stat + "'");
    for (const auto& [lambda, vals] : by_lambda) {
      table.median[stat].push_back(vals[0]);
      table.q05[stat].push_back(vals[1]);
      table.q95[stat].push_back(vals[2]);
    }
  }

  auto sibling = [&](const std::string& suffix) {
    std::filesystem::path p = csv_path;
    p.replace_extension();
    return std::filesystem::path(p.string() + suffix);
  };
  {
    std::ifstream meta_in(sibling(".meta.json"));
    if (meta_in) {
      nlohmann::json meta = nlohmann::json::parse(meta_in, nullptr, true, true);
      table.T_sim = meta.value("T_sim", 0);
      table.n_reps = meta.value("n_reps", 0);
      table.seed = meta.value("seed", 0ULL);
      table.L_divisor = meta.value("L_divisor", "T");
      table.style = meta.value("style", "sw");
    }
  }
  {
    std::ifstream null_in(sibling(".null.csv"));
    if (null_in) {
      std::getline(null_in, line);  // header
      while (std::getline(null_in, line)) {
        if (line.empty()) continue;
        char stat[16];
        double v;
        if (std::sscanf(line.c_str(), "%15[^,],%lf", stat, &v) == 2)
          table.null_draws[stat].push_back(v);
      }
      for (auto& [k, v] : table.null_draws) std::sort(v.begin(), v.end());
    }
  }
  return table;
}

// ---- stage-2 break inputs -----------------------------------------------------

BreakInputs stage2_break_inputs(BreakRegression form, const StageParams& params,
                                const FilterOutput& smoothed, const ModelData& data,
                                VariantTag fitted_tag) {
  const bool hlw_form = form == BreakRegression::kHlwModelRegressorForm ||
                        form == BreakRegression::kHlwModelConstructedLhs;
  if (hlw_form && fitted_tag != VariantTag::kStage2Hlw)
    throw ValidationError("variant mismatch: legacy-model break form needs a legacy stage-2 fit");
  if (!hlw_form && fitted_tag != VariantTag::kStage2Correct &&
      fitted_tag != VariantTag::kStage2CorrectPlusA0)
    throw ValidationError("variant mismatch: correct-model break form needs a correct stage-2 fit");
  if (!smoothed.smoothed) throw ValidationError("smoothed states required for break inputs");
  if (smoothed.T() != data.T()) throw ValidationError("states and data have different lengths");

  const Eigen::Index T = data.T();
  if (T < 3) throw ValidationError("sample too short for break inputs");

  BreakInputs out;
  const Eigen::Index n = T - 2;  // first two observations feed the gap lags
  out.dates.assign(data.dates.begin() + 2, data.dates.end());

  auto gap0 = [&](Eigen::Index t) { return data.obs(t, 0) - smoothed.smooth_mean(t, 0); };
  auto gap1 = [&](Eigen::Index t) {
    return data.exog(t, ModelData::kYLag1) - smoothed.smooth_mean(t, 1);
  };
  auto gap2 = [&](Eigen::Index t) {
    return data.exog(t, ModelData::kYLag2) - smoothed.smooth_mean(t, 2);
  };
  auto g1 = [&](Eigen::Index t) { return smoothed.smooth_mean(t, 3); };
  auto g2 = [&](Eigen::Index t) { return smoothed.smooth_mean(t, 4); };
  auto r1 = [&](Eigen::Index t) { return data.exog(t, ModelData::kRLag1); };
  auto r2 = [&](Eigen::Index t) { return data.exog(t, ModelData::kRLag2); };

  out.y.resize(n);
  switch (form) {
    case BreakRegression::kHlwModelRegressorForm:
      out.extras.resize(n, 4);
      out.include_intercept = true;
      for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index t = i + 2;
        out.y[i] = gap0(t);
        out.extras(i, 0) = gap1(t);
        out.extras(i, 1) = gap2(t);
        out.extras(i, 2) = 0.5 * (r1(t) + r2(t));
        out.extras(i, 3) = g1(t);
      }
      break;
    case BreakRegression::kHlwModelConstructedLhs:
      out.constructed = true;
      for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index t = i + 2;
        out.y[i] = gap0(t) - params.a_y1 * gap1(t) - params.a_y2 * gap2(t) - params.a_0 -
                   0.5 * params.a_r * (r1(t) + r2(t)) - params.a_g * g1(t);
      }
      break;
    case BreakRegression::kCorrectModelRegressorForm:
      out.extras.resize(n, 3);
      out.include_intercept = true;
      for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index t = i + 2;
        out.y[i] = gap0(t);
        out.extras(i, 0) = gap1(t);
        out.extras(i, 1) = gap2(t);
        out.extras(i, 2) = 0.5 * (r1(t) + r2(t) - 4.0 * (g1(t) + g2(t)));
      }
      break;
    case BreakRegression::kCorrectModelConstructedLhs:
      out.constructed = true;
      for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index t = i + 2;
        double lhs = gap0(t) - params.a_y1 * gap1(t) - params.a_y2 * gap2(t) -
                     0.5 * params.a_r * (r1(t) + r2(t) - 4.0 * (g1(t) + g2(t)));
        if (fitted_tag == VariantTag::kStage2CorrectPlusA0) lhs -= params.a_0;
        out.y[i] = lhs;
      }
      break;
  }
  if (out.extras.size() == 0) out.extras.resize(n, 0);
  return out;
}

// ---- pipeline estimate ----------------------------------------------------------

MueResult estimate_lambda_z(const Stage2Fit& fit, BreakStyle style, const MueLookup& table,
                            const ModelData& data) {
  const VariantTag tag = fit.pipeline == Stage2Pipeline::kCorrect ? VariantTag::kStage2Correct
                                                                  : VariantTag::kStage2Hlw;
  const bool legacy = tag == VariantTag::kStage2Hlw;
  const BreakRegression regression =
      style == BreakStyle::kHlw
          ? (legacy ? BreakRegression::kHlwModelRegressorForm
                    : BreakRegression::kCorrectModelRegressorForm)
          : (legacy ? BreakRegression::kHlwModelConstructedLhs
                    : BreakRegression::kCorrectModelConstructedLhs);

  const BreakInputs inputs = stage2_break_inputs(regression, fit.fit.params, fit.states, data, tag);
  const int T = static_cast<int>(inputs.y.size());

  MueResult res;
  res.pipeline = fit.pipeline;
  res.style = style;
  res.grid = make_grid(style, T);
  res.grid.validate(T);
  res.f_seq = inputs.constructed
                  ? fstat_sequence_sw(inputs.y, res.grid)
                  : fstat_sequence_hlw(inputs.y, inputs.extras, res.grid, inputs.include_intercept);
  res.f_dates.assign(inputs.dates.begin() + (res.grid.tau0 - 1),
                     inputs.dates.begin() + res.grid.tau1);

  const BreakStats bs = break_stats(res.f_seq);

  // L is computed from the constructed series of the same model, so it is
  // invariant to the regression style.
  const BreakRegression l_form = legacy ? BreakRegression::kHlwModelConstructedLhs
                                        : BreakRegression::kCorrectModelConstructedLhs;
  const BreakInputs l_inputs = stage2_break_inputs(l_form, fit.fit.params, fit.states, data, tag);
  const double L = nyblom_L(l_inputs.y);

  res.by_stat["L"] = lookup_mue("L", L, table, T);
  res.by_stat["MW"] = lookup_mue("MW", bs.mw, table, T);
  res.by_stat["EW"] = lookup_mue("EW", bs.ew, table, T);
  res.by_stat["QLR"] = lookup_mue("QLR", bs.qlr, table, T);
  return res;
}

}  // namespace rstar
