#ifndef RSTAR_MODELS_HPP
#define RSTAR_MODELS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rstar/ssm.hpp"
#include "rstar/timeseries.hpp"

namespace rstar {

/*
  Structural model of the natural rate. Observables are output y_t
  (100*log GDP) and inflation pi_t; the real rate r_t enters as an
  exogenous regressor. With lag polynomials

    a_y(L) = 1 - a_y1 L - a_y2 L^2
    a_r(L) = (a_r / 2) (L + L^2)
    b_p(L) = 1 - b_pi L - ((1 - b_pi) / 3)(L^2 + L^3 + L^4)

  the full model is

    y_t        = ystar_t + ygap_t
    b_p(L)pi_t = b_y * ygap_{t-1} + e_pi
    a_y(L)ygap_t = a_r(L)[r_t - 4 g_t - z_t] + e_gap
    ystar_t    = ystar_{t-1} + g_{t-1} + e_trend
    g_t        = g_{t-1} + e_g
    z_t        = z_{t-1} + e_z

  and the natural rate is rstar_t = 4 g_t + z_t. The two restricted
  ("stage 2") variants drop z from the system:

    correct:  a_y(L)ygap_t = [a_0] + a_r(L)[r_t - 4 g_t] + e
    legacy:   a_y(L)ygap_t = a_0 + a_r(L) r_t + a_g g_{t-1} + e,
              ystar_t = ystar_{t-1} + g_{t-2} + (e_trend + e_g_{t-1})

  where the legacy trend error is MA(1); it is carried through the joint
  state-shock covariance (the g block of state_cov is not diagonal).

  State vector: (ystar_t, ystar_{t-1}, ystar_{t-2}, g_{t-1}, g_{t-2}
                 [, z_{t-1}, z_{t-2}]).
  Exogenous vector: (y_{t-1}, y_{t-2}, r_{t-1}, r_{t-2}, pi_{t-1},
                     mean(pi_{t-2..t-4}), 1).
*/

struct StageParams {
  double a_y1 = 0, a_y2 = 0;     // output-gap AR coefficients
  double a_r = 0;                // real-rate slope (empirically negative)
  double a_0 = 0;                // gap intercept (legacy / +intercept variants)
  double a_g = 0;                // trend-growth loading (legacy variant)
  double b_pi = 0;               // inflation persistence
  double b_y = 0;                // inflation-gap slope
  double sigma_ytilde = 0;       // gap shock s.d.
  double sigma_pi = 0;           // inflation shock s.d.
  double sigma_ystar = 0;        // trend shock s.d.
  double sigma_g = 0;            // trend-growth shock s.d.
  double sigma_z = 0;            // z shock s.d.
  double lambda_g = std::numeric_limits<double>::quiet_NaN();  // sigma_g / sigma_ystar
  double lambda_z = std::numeric_limits<double>::quiet_NaN();  // |a_r| sigma_z / sigma_ytilde

  double get(const std::string& name) const;
  void set(const std::string& name, double value);
  static bool is_sigma(const std::string& name);
};

enum class VariantTag { kFull, kStage2Correct, kStage2CorrectPlusA0, kStage2Hlw };

enum class SigmaMode { kMleFree, kRatioImplied, kZero };  // kZero applies to sigma_z only

struct ModelVariant {
  VariantTag tag = VariantTag::kFull;
  SigmaMode sigma_g_mode = SigmaMode::kMleFree;
  SigmaMode sigma_z_mode = SigmaMode::kMleFree;

  bool has_z() const { return tag == VariantTag::kFull; }
  int n_state() const { return has_z() ? 7 : 5; }
  std::string name() const;
  // Parameter names the variant requires (excluding ratio-implied sigmas).
  std::vector<std::string> required_params() const;
};

// Applies the sigma modes: sigma_g = lambda_g * sigma_ystar and/or
// sigma_z = lambda_z * sigma_ytilde / |a_r| (or 0). With kMleFree the
// stored sigma is kept and the corresponding lambda recomputed. Throws
// ValidationError on negative sigmas or inconsistent stored values.
StageParams resolve_sigmas(const ModelVariant& variant, StageParams p);

// Builders. Covariances are set directly from the parameters; callers set
// the initial state (or use apply_default_init). `enforce_stationarity`
// rejects |a_y1 + a_y2| >= 1.
StateSpaceModel build_full_model(const StageParams& p, bool enforce_stationarity = false);
StateSpaceModel build_stage2_correct(const StageParams& p, bool with_intercept,
                                     bool enforce_stationarity = false);
StateSpaceModel build_stage2_hlw(const StageParams& p, bool enforce_stationarity = false);
StateSpaceModel build_model(const ModelVariant& variant, const StageParams& p,
                            bool enforce_stationarity = false);

// Initial state configuration, overridable from JSON.
struct InitConfig {
  std::vector<double> mean;               // empty -> data heuristic
  std::vector<std::vector<double>> cov;   // empty -> default diagonal
  InitMode mode = InitMode::kFixedPrior;
};

// Heuristic prior: trend levels from the first observations, growth from
// the average first differences, z at zero, moderately wide diagonal
// covariance. Used when no init is configured.
void apply_default_init(StateSpaceModel& model, const ModelData& data);
void apply_init(StateSpaceModel& model, const ModelData& data, const InitConfig& init);

// ---- simulation -------------------------------------------------------

struct SimulatedPaths {
  TimeSeriesData data;          // observables with synthetic dates
  std::vector<double> ystar, g, z, ygap;  // true states, aligned with data
  std::vector<double> real_rate;          // true exogenous real rate
};

// Simulates the full structural model. The real rate is generated as
// r_t = 4 g_t + z_t + u_t with u_t ~ N(0, r_noise_sd^2), so the rate gap
// that drives the output gap is pure noise with known scale.
SimulatedPaths simulate_full_model(const StageParams& p, int T, std::uint64_t seed,
                                   double r_noise_sd = 1.5, int burn_in = 50);

}  // namespace rstar

#endif  // RSTAR_MODELS_HPP
