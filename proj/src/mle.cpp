#include "rstar/mle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "rstar/errors.hpp"
#include "rstar/rng.hpp"

namespace rstar {

namespace {

constexpr double kPenalty = 1e12;
constexpr double kLogSigmaFloor = -15.0;
constexpr double kLogSigmaCap = 25.0;

double ll_spread_tol(double tol, double fbest) { return tol * (1.0 + std::abs(fbest)); }

}  // namespace

SimplexResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& fn,
                          const Eigen::VectorXd& x0, const Eigen::VectorXd& steps,
                          int max_evaluations, double tolerance) {
  const int n = static_cast<int>(x0.size());
  if (n == 0) throw ValidationError("nelder_mead needs at least one coordinate");

  std::vector<Eigen::VectorXd> v(n + 1, x0);
  std::vector<double> f(n + 1);
  int evals = 0;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++evals;
    const double y = fn(x);
    return std::isfinite(y) ? y : kPenalty;
  };
  for (int i = 1; i <= n; ++i) v[i][i - 1] += steps[i - 1];
  for (int i = 0; i <= n; ++i) f[i] = eval(v[i]);

  std::vector<int> order(n + 1);
  auto sort_order = [&]() {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return f[a] < f[b]; });
  };

  SimplexResult res;
  while (true) {
    sort_order();
    const int ib = order[0], iw = order[n], is = order[n - 1];
    if (f[iw] - f[ib] <= ll_spread_tol(tolerance, f[ib])) {
      res.converged = true;
      break;
    }
    if (evals >= max_evaluations) break;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (int i = 0; i <= n; ++i)
      if (i != iw) centroid += v[i];
    centroid /= static_cast<double>(n);

    const Eigen::VectorXd xr = centroid + (centroid - v[iw]);
    const double fr = eval(xr);
    if (fr < f[ib]) {
      const Eigen::VectorXd xe = centroid + 2.0 * (xr - centroid);
      const double fe = eval(xe);
      if (fe < fr) {
        v[iw] = xe;
        f[iw] = fe;
      } else {
        v[iw] = xr;
        f[iw] = fr;
      }
    } else if (fr < f[is]) {
      v[iw] = xr;
      f[iw] = fr;
    } else {
      if (fr < f[iw]) {
        const Eigen::VectorXd xc = centroid + 0.5 * (xr - centroid);  // outside contraction
        const double fc = eval(xc);
        if (fc <= fr) {
          v[iw] = xc;
          f[iw] = fc;
          continue;
        }
      } else {
        const Eigen::VectorXd xc = centroid + 0.5 * (v[iw] - centroid);  // inside contraction
        const double fc = eval(xc);
        if (fc < f[iw]) {
          v[iw] = xc;
          f[iw] = fc;
          continue;
        }
      }
      for (int i = 1; i <= n; ++i) {  // shrink toward the best vertex
        const int k = order[i];
        v[k] = v[order[0]] + 0.5 * (v[k] - v[order[0]]);
        f[k] = eval(v[k]);
      }
    }
  }

  sort_order();
  res.x = v[order[0]];
  res.fmin = f[order[0]];
  res.evaluations = evals;
  return res;
}

namespace {

struct Problem {
  const EstimationSpec* spec;
  const ModelData* data;
  std::vector<bool> log_transformed;

  StageParams assemble(const std::vector<double>& free_values) const {
    StageParams p;
    for (const auto& [name, value] : spec->fixed_params) p.set(name, value);
    for (std::size_t i = 0; i < spec->free_params.size(); ++i)
      p.set(spec->free_params[i], free_values[i]);
    return p;
  }

  double loglik(const StageParams& p) const {
    StateSpaceModel model = build_model(spec->variant, p, spec->enforce_stationarity);
    apply_init(model, *data, spec->init);
    model.validate();
    return kalman_filter(model, data->obs, data->exog).log_likelihood;
  }

  // transformed coordinates -> natural units
  std::vector<double> decode(const Eigen::VectorXd& u) const {
    std::vector<double> x(u.size());
    for (Eigen::Index i = 0; i < u.size(); ++i)
      x[i] = log_transformed[i]
                 ? std::exp(std::clamp(u[i], kLogSigmaFloor, kLogSigmaCap))
                 : u[i];
    return x;
  }

  Eigen::VectorXd encode(const std::vector<double>& x) const {
    Eigen::VectorXd u(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
      u[i] = log_transformed[i] ? std::log(std::max(x[i], std::exp(kLogSigmaFloor))) : x[i];
    return u;
  }

  double objective(const Eigen::VectorXd& u) const {
    const std::vector<double> x = decode(u);
    if (!spec->bounds.empty()) {
      double violation = 0.0;
      for (std::size_t i = 0; i < spec->free_params.size(); ++i) {
        const auto it = spec->bounds.find(spec->free_params[i]);
        if (it == spec->bounds.end()) continue;
        if (x[i] < it->second.first) violation += it->second.first - x[i];
        if (x[i] > it->second.second) violation += x[i] - it->second.second;
      }
      // graded penalty so the simplex is pushed back into the box
      if (violation > 0.0) return 1e10 * (1.0 + violation);
    }
    try {
      return -loglik(assemble(x));
    } catch (const Error&) {
      return kPenalty;
    }
  }
};

std::vector<double> default_start(const EstimationSpec& spec, const ModelData& data) {
  const Eigen::Index T = data.T();
  double sd_dy = 0.0, sd_dpi = 0.0, mean_dy = 0.0;
  for (Eigen::Index t = 1; t < T; ++t) mean_dy += data.obs(t, 0) - data.obs(t - 1, 0);
  mean_dy /= static_cast<double>(T - 1);
  for (Eigen::Index t = 1; t < T; ++t) {
    const double dy = data.obs(t, 0) - data.obs(t - 1, 0) - mean_dy;
    const double dpi = data.obs(t, 1) - data.obs(t - 1, 1);
    sd_dy += dy * dy;
    sd_dpi += dpi * dpi;
  }
  sd_dy = std::sqrt(sd_dy / static_cast<double>(T - 1));
  sd_dpi = std::sqrt(sd_dpi / static_cast<double>(T - 1));

  StageParams s;
  s.a_y1 = 1.5;
  s.a_y2 = -0.57;
  s.a_r = -0.07;
  s.a_0 = 0.0;
  s.a_g = 0.28;
  s.b_pi = 0.67;
  s.b_y = 0.08;
  s.sigma_ytilde = std::max(0.5 * sd_dy, 1e-3);
  s.sigma_pi = std::max(0.7 * sd_dpi, 1e-3);
  s.sigma_ystar = std::max(0.6 * sd_dy, 1e-3);
  s.sigma_g = std::max(0.06 * sd_dy, 1e-4);
  s.sigma_z = std::max(0.25 * sd_dy, 1e-4);
  s.lambda_g = 0.05;
  s.lambda_z = 0.03;

  std::vector<double> x;
  x.reserve(spec.free_params.size());
  for (const auto& name : spec.free_params) x.push_back(s.get(name));
  return x;
}

}  // namespace

FitResult fit(const EstimationSpec& spec, const ModelData& data) {
  // free + fixed must cover what the variant needs, with no strays
  const auto required = spec.variant.required_params();
  std::set<std::string> have(spec.free_params.begin(), spec.free_params.end());
  for (const auto& name : spec.free_params) {
    if (std::count(spec.free_params.begin(), spec.free_params.end(), name) > 1)
      throw ValidationError("parameter '" + name + "' listed free more than once");
    if (name.rfind("lambda_", 0) == 0)
      throw ValidationError("ratio '" + name + "' cannot be a free parameter");
    if (std::find(required.begin(), required.end(), name) == required.end())
      throw ValidationError("parameter '" + name + "' is not used by variant " +
                            spec.variant.name());
  }
  for (const auto& [name, v] : spec.fixed_params) have.insert(name);
  for (const auto& name : required)
    if (!have.count(name))
      throw ValidationError("parameter '" + name + "' is neither free nor fixed for variant " +
                            spec.variant.name());

  Problem prob{&spec, &data, {}};
  prob.log_transformed.reserve(spec.free_params.size());
  for (const auto& name : spec.free_params)
    prob.log_transformed.push_back(StageParams::is_sigma(name));

  FitResult result;

  if (spec.free_params.empty()) {
    const StageParams p = prob.assemble({});
    result.params = resolve_sigmas(spec.variant, p);
    result.log_likelihood = prob.loglik(p);
    StartReport sr;
    sr.log_likelihood = result.log_likelihood;
    sr.evaluations = 1;
    sr.converged = true;
    result.report.starts.push_back(sr);
    result.report.best_start = 0;
    result.report.total_evaluations = 1;
    result.report.converged = true;
    return result;
  }

  std::vector<std::vector<double>> starts = spec.starts;
  if (starts.empty()) starts.push_back(default_start(spec, data));
  for (const auto& s : starts)
    if (s.size() != spec.free_params.size())
      throw ValidationError("start vector length " + std::to_string(s.size()) +
                            " does not match " + std::to_string(spec.free_params.size()) +
                            " free parameters");

  auto objective = [&prob](const Eigen::VectorXd& u) { return prob.objective(u); };

  Eigen::VectorXd best_u;
  double best_f = std::numeric_limits<double>::infinity();
  bool any_converged = false;
  ConvergenceReport& report = result.report;

  for (std::size_t si = 0; si < starts.size(); ++si) {
    Eigen::VectorXd u = prob.encode(starts[si]);
    Rng jitter(spec.seed, si);
    for (int run = 0; run <= spec.restarts; ++run) {
      if (run > 0) {
        // restart around the incumbent, +-20% per coordinate
        for (Eigen::Index i = 0; i < u.size(); ++i) {
          const double d = jitter.uniform(-0.2, 0.2);
          u[i] = std::abs(u[i]) > 1e-8 ? u[i] * (1.0 + d) : u[i] + 0.1 * d;
        }
      }
      Eigen::VectorXd steps(u.size());
      for (Eigen::Index i = 0; i < u.size(); ++i) steps[i] = std::max(0.1, 0.15 * std::abs(u[i]));
      const SimplexResult nm =
          nelder_mead(objective, u, steps, spec.optimizer_budget, spec.tolerance);

      StartReport sr;
      sr.start = prob.decode(u);
      sr.log_likelihood = -nm.fmin;
      sr.evaluations = nm.evaluations;
      sr.converged = nm.converged;
      report.starts.push_back(sr);
      report.total_evaluations += nm.evaluations;
      any_converged = any_converged || nm.converged;

      if (nm.fmin < best_f) {
        best_f = nm.fmin;
        best_u = nm.x;
        report.best_start = static_cast<int>(report.starts.size()) - 1;
      }
      u = nm.x;  // next restart perturbs the incumbent
    }
  }

  if (!(best_f < kPenalty))
    throw NumericalError("likelihood undefined at every start point");
  if (!any_converged)
    throw NumericalError("no convergence: optimizer budget exhausted with spread above tolerance");

  std::vector<double> best_x = prob.decode(best_u);

  // Pin near-boundary state-shock sigmas at exactly zero when that does
  // not hurt the likelihood; ML of a boundary variance legitimately piles
  // up at 0. Observation-noise sigmas stay at the floor instead: an
  // exactly-zero measurement variance degenerates the smoothed residuals
  // that downstream break tests are built from.
  static const std::set<std::string> snappable = {"sigma_ystar", "sigma_g", "sigma_z"};
  double best_ll = -best_f;
  for (std::size_t i = 0; i < spec.free_params.size(); ++i) {
    if (!prob.log_transformed[i]) continue;
    if (!snappable.count(spec.free_params[i])) continue;
    if (best_x[i] <= 0.0 || best_x[i] >= 1e-3) continue;
    std::vector<double> cand = best_x;
    cand[i] = 0.0;
    double ll;
    try {
      ll = prob.loglik(prob.assemble(cand));
    } catch (const Error&) {
      continue;
    }
    ++report.total_evaluations;
    if (ll >= best_ll - 1e-9) {
      best_x = cand;
      best_ll = std::max(best_ll, ll);
      report.boundary_zeros.push_back(spec.free_params[i]);
    }
  }

  const StageParams final_params = prob.assemble(best_x);
  result.params = resolve_sigmas(spec.variant, final_params);
  result.log_likelihood = prob.loglik(final_params);
  report.converged = any_converged;
  return result;
}

std::vector<WindowFit> fit_recursive(const EstimationSpec& spec, const TimeSeriesData& data,
                                     Quarter first_end, std::optional<Quarter> sample_start) {
  const Quarter model_start =
      sample_start ? *sample_start : data.dates.front().plus(kLagTrim);
  if (first_end.index() - model_start.index() + 1 < 40)
    throw ValidationError("first window end " + first_end.str() +
                          " is fewer than 40 quarters after sample start " + model_start.str());
  const Quarter last = data.dates.back();
  if (first_end > last)
    throw ValidationError("first window end " + first_end.str() + " beyond sample end");

  std::vector<WindowFit> out;
  std::vector<double> warm;
  for (Quarter end = first_end; end <= last; end = end.plus(1)) {
    EstimationSpec wspec = spec;
    if (!warm.empty()) {
      wspec.starts.clear();
      wspec.starts.push_back(warm);
      for (const auto& s : spec.starts) wspec.starts.push_back(s);
    }
    try {
      const ModelData window = prepare_model_data(data, model_start, end);
      WindowFit wf;
      wf.window_end = end;
      wf.fit = fit(wspec, window);
      warm.clear();
      for (const auto& name : spec.free_params) warm.push_back(wf.fit.params.get(name));
      out.push_back(std::move(wf));
    } catch (const Error& e) {
      throw NumericalError("window " + end.str() + ": " + e.what());
    }
  }
  return out;
}

}  // namespace rstar
