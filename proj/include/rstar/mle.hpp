#ifndef RSTAR_MLE_HPP
#define RSTAR_MLE_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rstar/models.hpp"

namespace rstar {

// ---- generic derivative-free simplex search ---------------------------

struct SimplexResult {
  Eigen::VectorXd x;
  double fmin = 0.0;
  int evaluations = 0;
  bool converged = false;
};

// Nelder-Mead minimization. Converges when the spread of function values
// across the simplex falls below `tolerance` or the evaluation budget is
// exhausted.
SimplexResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& fn,
                          const Eigen::VectorXd& x0, const Eigen::VectorXd& steps,
                          int max_evaluations, double tolerance);

// ---- model estimation --------------------------------------------------

// Sigma parameters are searched as u = log(sigma), floored at u = -15.
// After the search, a state-shock sigma (sigma_ystar, sigma_g, sigma_z)
// below 1e-3 is snapped to exactly 0 when doing so does not lower the
// log-likelihood; measurement-noise sigmas stay at the floor value so the
// smoothed residuals remain well defined.
struct EstimationSpec {
  ModelVariant variant;
  std::vector<std::string> free_params;
  std::map<std::string, double> fixed_params;  // includes lambda_g / lambda_z when ratio-implied
  std::vector<std::vector<double>> starts;     // natural units, aligned with free_params
  // optional box constraints on free parameters, natural units; unconstrained by default
  std::map<std::string, std::pair<double, double>> bounds;
  int optimizer_budget = 40000;                // per simplex run
  double tolerance = 1e-8;
  int restarts = 3;          // re-runs around the incumbent, +-20% per coordinate
  std::uint64_t seed = 0;    // restart jitter
  bool enforce_stationarity = false;
  InitConfig init;
};

struct StartReport {
  std::vector<double> start;  // natural units
  double log_likelihood = 0.0;
  int evaluations = 0;
  bool converged = false;
};

struct ConvergenceReport {
  std::vector<StartReport> starts;
  int best_start = -1;
  int total_evaluations = 0;
  bool converged = false;
  std::vector<std::string> boundary_zeros;  // sigmas snapped to exact zero
};

struct FitResult {
  StageParams params;          // sigmas resolved, ratios filled in
  double log_likelihood = 0.0;
  ConvergenceReport report;
};

// Maximum likelihood over the transformed free parameters. With an empty
// free list the fixed point is evaluated and returned without a search.
// Throws ValidationError if free+fixed do not cover the variant's
// parameters, NumericalError if no start produced a usable likelihood.
FitResult fit(const EstimationSpec& spec, const ModelData& data);

struct WindowFit {
  Quarter window_end;
  FitResult fit;
};

// Expanding-window re-estimation, one fit per quarter from first_end to
// the end of the sample. Each window is warm-started from the previous
// window's solution in addition to the configured cold starts.
std::vector<WindowFit> fit_recursive(const EstimationSpec& spec, const TimeSeriesData& data,
                                     Quarter first_end,
                                     std::optional<Quarter> sample_start = std::nullopt);

}  // namespace rstar

#endif  // RSTAR_MLE_HPP
