#include "rstar/models.hpp"

#include <cmath>

#include "rstar/errors.hpp"
#include "rstar/rng.hpp"

namespace rstar {

namespace {

void check_sigmas(const StageParams& p, bool needs_z) {
  auto chk = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v))
      throw ValidationError(std::string("invalid params: ") + name + " = " + std::to_string(v) +
                            " must be >= 0");
  };
  chk(p.sigma_ytilde, "sigma_ytilde");
  chk(p.sigma_pi, "sigma_pi");
  chk(p.sigma_ystar, "sigma_ystar");
  chk(p.sigma_g, "sigma_g");
  if (needs_z) chk(p.sigma_z, "sigma_z");
}

void check_stationarity(const StageParams& p, bool enforce) {
  if (enforce && std::abs(p.a_y1 + p.a_y2) >= 1.0)
    throw ValidationError("invalid params: |a_y1 + a_y2| = " + std::to_string(std::abs(p.a_y1 + p.a_y2)) +
                          " >= 1 with stationarity enforced");
}

// Shared transition block for (ystar_t, ystar_{t-1}, ystar_{t-2},
// g_{t-1}, g_{t-2}): the trend picks up last quarter's growth, whose own
// innovation enters the trend row jointly (non-diagonal shock covariance).
void fill_trend_growth_block(Eigen::MatrixXd& F, Eigen::MatrixXd& Q, const StageParams& p) {
  F(0, 0) = 1.0;
  F(0, 3) = 1.0;
  F(1, 0) = 1.0;
  F(2, 1) = 1.0;
  F(3, 3) = 1.0;
  F(4, 3) = 1.0;
  const double vg = p.sigma_g * p.sigma_g;
  Q(0, 0) = p.sigma_ystar * p.sigma_ystar + vg;
  Q(0, 3) = Q(3, 0) = vg;
  Q(3, 3) = vg;
}

void fill_inflation_rows(StateSpaceModel& m, const StageParams& p) {
  m.obs_load(1, 1) = -p.b_y;
  m.obs_exog(1, ModelData::kYLag1) = p.b_y;
  m.obs_exog(1, ModelData::kPiLag1) = p.b_pi;
  m.obs_exog(1, ModelData::kPiLag24) = 1.0 - p.b_pi;
}

StateSpaceModel make_skeleton(int n_state) {
  StateSpaceModel m;
  m.obs_load = Eigen::MatrixXd::Zero(2, n_state);
  m.obs_exog = Eigen::MatrixXd::Zero(2, ModelData::kNumExog);
  m.trans = Eigen::MatrixXd::Zero(n_state, n_state);
  m.trans_exog = Eigen::MatrixXd::Zero(n_state, ModelData::kNumExog);
  m.obs_cov = Eigen::MatrixXd::Zero(2, 2);
  m.state_cov = Eigen::MatrixXd::Zero(n_state, n_state);
  m.init_mean = Eigen::VectorXd::Zero(n_state);
  m.init_cov = Eigen::MatrixXd::Identity(n_state, n_state);
  return m;
}

}  // namespace

double StageParams::get(const std::string& name) const {
  if (name == "a_y1") return a_y1;
  if (name == "a_y2") return a_y2;
  if (name == "a_r") return a_r;
  if (name == "a_0") return a_0;
  if (name == "a_g") return a_g;
  if (name == "b_pi") return b_pi;
  if (name == "b_y") return b_y;
  if (name == "sigma_ytilde") return sigma_ytilde;
  if (name == "sigma_pi") return sigma_pi;
  if (name == "sigma_ystar") return sigma_ystar;
  if (name == "sigma_g") return sigma_g;
  if (name == "sigma_z") return sigma_z;
  if (name == "lambda_g") return lambda_g;
  if (name == "lambda_z") return lambda_z;
  throw ValidationError("unknown parameter '" + name + "'");
}

void StageParams::set(const std::string& name, double value) {
  if (name == "a_y1") a_y1 = value;
  else if (name == "a_y2") a_y2 = value;
  else if (name == "a_r") a_r = value;
  else if (name == "a_0") a_0 = value;
  else if (name == "a_g") a_g = value;
  else if (name == "b_pi") b_pi = value;
  else if (name == "b_y") b_y = value;
  else if (name == "sigma_ytilde") sigma_ytilde = value;
  else if (name == "sigma_pi") sigma_pi = value;
  else if (name == "sigma_ystar") sigma_ystar = value;
  else if (name == "sigma_g") sigma_g = value;
  else if (name == "sigma_z") sigma_z = value;
  else if (name == "lambda_g") lambda_g = value;
  else if (name == "lambda_z") lambda_z = value;
  else throw ValidationError("unknown parameter '" + name + "'");
}

bool StageParams::is_sigma(const std::string& name) { return name.rfind("sigma_", 0) == 0; }

std::string ModelVariant::name() const {
  switch (tag) {
    case VariantTag::kFull: return "full";
    case VariantTag::kStage2Correct: return "stage2_correct";
    case VariantTag::kStage2CorrectPlusA0: return "stage2_correct_a0";
    case VariantTag::kStage2Hlw: return "stage2_hlw";
  }
  return "?";
}

std::vector<std::string> ModelVariant::required_params() const {
  std::vector<std::string> names = {"a_y1", "a_y2", "a_r", "b_pi", "b_y",
                                    "sigma_ytilde", "sigma_pi", "sigma_ystar"};
  if (tag == VariantTag::kStage2CorrectPlusA0) names.push_back("a_0");
  if (tag == VariantTag::kStage2Hlw) {
    names.push_back("a_0");
    names.push_back("a_g");
  }
  if (sigma_g_mode == SigmaMode::kMleFree) names.push_back("sigma_g");
  else names.push_back("lambda_g");
  if (has_z()) {
    if (sigma_z_mode == SigmaMode::kMleFree) names.push_back("sigma_z");
    else if (sigma_z_mode == SigmaMode::kRatioImplied) names.push_back("lambda_z");
  }
  return names;
}

StageParams resolve_sigmas(const ModelVariant& variant, StageParams p) {
  if (variant.sigma_g_mode == SigmaMode::kRatioImplied) {
    if (!(p.lambda_g >= 0.0))
      throw ValidationError("invalid params: lambda_g must be >= 0 when sigma_g is ratio-implied");
    p.sigma_g = p.lambda_g * p.sigma_ystar;
  } else if (variant.sigma_g_mode == SigmaMode::kZero) {
    p.sigma_g = 0.0;
    p.lambda_g = 0.0;
  } else {
    p.lambda_g = p.sigma_ystar > 0.0 ? p.sigma_g / p.sigma_ystar
                                     : std::numeric_limits<double>::quiet_NaN();
  }

  if (variant.has_z()) {
    if (variant.sigma_z_mode == SigmaMode::kRatioImplied) {
      if (!(p.lambda_z >= 0.0))
        throw ValidationError("invalid params: lambda_z must be >= 0 when sigma_z is ratio-implied");
      if (p.a_r == 0.0)
        throw ValidationError("invalid params: a_r = 0 cannot imply sigma_z from lambda_z");
      p.sigma_z = p.lambda_z * p.sigma_ytilde / std::abs(p.a_r);
    } else if (variant.sigma_z_mode == SigmaMode::kZero) {
      p.sigma_z = 0.0;
      p.lambda_z = 0.0;
    } else {
      p.lambda_z = p.sigma_ytilde > 0.0 ? std::abs(p.a_r) * p.sigma_z / p.sigma_ytilde
                                        : std::numeric_limits<double>::quiet_NaN();
    }
  } else {
    p.sigma_z = 0.0;
  }
  check_sigmas(p, variant.has_z());
  return p;
}

StateSpaceModel build_full_model(const StageParams& p, bool enforce_stationarity) {
  check_sigmas(p, true);
  check_stationarity(p, enforce_stationarity);
  StateSpaceModel m = make_skeleton(7);

  fill_trend_growth_block(m.trans, m.state_cov, p);
  m.trans(5, 5) = 1.0;
  m.trans(6, 5) = 1.0;
  m.state_cov(5, 5) = p.sigma_z * p.sigma_z;

  // output row: y_t = ystar_t + gap, gap recursion substituted out
  m.obs_load(0, 0) = 1.0;
  m.obs_load(0, 1) = -p.a_y1;
  m.obs_load(0, 2) = -p.a_y2;
  m.obs_load(0, 3) = -2.0 * p.a_r;        // -(a_r/2)*4 on g_{t-1}
  m.obs_load(0, 4) = -2.0 * p.a_r;        // and on g_{t-2}
  m.obs_load(0, 5) = -0.5 * p.a_r;        // -(a_r/2) on z_{t-1}
  m.obs_load(0, 6) = -0.5 * p.a_r;        // and on z_{t-2}
  m.obs_exog(0, ModelData::kYLag1) = p.a_y1;
  m.obs_exog(0, ModelData::kYLag2) = p.a_y2;
  m.obs_exog(0, ModelData::kRLag1) = 0.5 * p.a_r;
  m.obs_exog(0, ModelData::kRLag2) = 0.5 * p.a_r;

  fill_inflation_rows(m, p);
  m.obs_cov(0, 0) = p.sigma_ytilde * p.sigma_ytilde;
  m.obs_cov(1, 1) = p.sigma_pi * p.sigma_pi;
  return m;
}

StateSpaceModel build_stage2_correct(const StageParams& p, bool with_intercept,
                                     bool enforce_stationarity) {
  check_sigmas(p, false);
  check_stationarity(p, enforce_stationarity);
  StateSpaceModel m = make_skeleton(5);

  fill_trend_growth_block(m.trans, m.state_cov, p);

  m.obs_load(0, 0) = 1.0;
  m.obs_load(0, 1) = -p.a_y1;
  m.obs_load(0, 2) = -p.a_y2;
  m.obs_load(0, 3) = -2.0 * p.a_r;
  m.obs_load(0, 4) = -2.0 * p.a_r;
  m.obs_exog(0, ModelData::kYLag1) = p.a_y1;
  m.obs_exog(0, ModelData::kYLag2) = p.a_y2;
  m.obs_exog(0, ModelData::kRLag1) = 0.5 * p.a_r;
  m.obs_exog(0, ModelData::kRLag2) = 0.5 * p.a_r;
  if (with_intercept) m.obs_exog(0, ModelData::kConst) = p.a_0;

  fill_inflation_rows(m, p);
  m.obs_cov(0, 0) = p.sigma_ytilde * p.sigma_ytilde;
  m.obs_cov(1, 1) = p.sigma_pi * p.sigma_pi;
  return m;
}

StateSpaceModel build_stage2_hlw(const StageParams& p, bool enforce_stationarity) {
  check_sigmas(p, false);
  check_stationarity(p, enforce_stationarity);
  StateSpaceModel m = make_skeleton(5);

  // Trend/growth dynamics are shared: writing the legacy trend equation
  // with g_{t-2} plus an MA(1) error (e_trend + e_g_{t-1}) is the same
  // joint law as the correct block, so only the gap equation differs.
  fill_trend_growth_block(m.trans, m.state_cov, p);

  m.obs_load(0, 0) = 1.0;
  m.obs_load(0, 1) = -p.a_y1;
  m.obs_load(0, 2) = -p.a_y2;
  m.obs_load(0, 3) = p.a_g;  // a_g * g_{t-1}, unrestricted
  m.obs_exog(0, ModelData::kYLag1) = p.a_y1;
  m.obs_exog(0, ModelData::kYLag2) = p.a_y2;
  m.obs_exog(0, ModelData::kRLag1) = 0.5 * p.a_r;
  m.obs_exog(0, ModelData::kRLag2) = 0.5 * p.a_r;
  m.obs_exog(0, ModelData::kConst) = p.a_0;

  fill_inflation_rows(m, p);
  m.obs_cov(0, 0) = p.sigma_ytilde * p.sigma_ytilde;
  m.obs_cov(1, 1) = p.sigma_pi * p.sigma_pi;
  return m;
}

StateSpaceModel build_model(const ModelVariant& variant, const StageParams& p,
                            bool enforce_stationarity) {
  const StageParams r = resolve_sigmas(variant, p);
  switch (variant.tag) {
    case VariantTag::kFull: return build_full_model(r, enforce_stationarity);
    case VariantTag::kStage2Correct: return build_stage2_correct(r, false, enforce_stationarity);
    case VariantTag::kStage2CorrectPlusA0:
      return build_stage2_correct(r, true, enforce_stationarity);
    case VariantTag::kStage2Hlw: return build_stage2_hlw(r, enforce_stationarity);
  }
  throw ValidationError("unknown variant");
}

void apply_default_init(StateSpaceModel& model, const ModelData& data) {
  const Eigen::Index ns = model.n_state();
  const Eigen::Index T = data.T();
  const Eigen::Index n_diff = std::min<Eigen::Index>(20, T - 1);
  double g0 = 0.0;
  for (Eigen::Index t = 1; t <= n_diff; ++t) g0 += data.obs(t, 0) - data.obs(t - 1, 0);
  g0 /= static_cast<double>(n_diff);

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(ns);
  mean[0] = data.obs(0, 0);
  mean[1] = data.obs(0, 0) - g0;
  mean[2] = data.obs(0, 0) - 2.0 * g0;
  mean[3] = g0;
  mean[4] = g0;
  // z entries (if present) stay at zero

  Eigen::VectorXd var = Eigen::VectorXd::Zero(ns);
  var[0] = var[1] = var[2] = 1.0;
  var[3] = var[4] = 0.04;
  if (ns > 5) var[5] = var[6] = 0.25;

  model.init_mean = mean;
  model.init_cov = var.asDiagonal();
  model.init_mode = InitMode::kFixedPrior;
}

void apply_init(StateSpaceModel& model, const ModelData& data, const InitConfig& init) {
  apply_default_init(model, data);
  const Eigen::Index ns = model.n_state();
  if (!init.mean.empty()) {
    if (static_cast<Eigen::Index>(init.mean.size()) != ns)
      throw ValidationError("init mean has " + std::to_string(init.mean.size()) +
                            " entries, model has " + std::to_string(ns) + " states");
    for (Eigen::Index i = 0; i < ns; ++i) model.init_mean[i] = init.mean[i];
  }
  if (!init.cov.empty()) {
    if (static_cast<Eigen::Index>(init.cov.size()) != ns)
      throw ValidationError("init cov has wrong dimension");
    for (Eigen::Index i = 0; i < ns; ++i) {
      if (static_cast<Eigen::Index>(init.cov[i].size()) != ns)
        throw ValidationError("init cov is not square");
      for (Eigen::Index j = 0; j < ns; ++j) model.init_cov(i, j) = init.cov[i][j];
    }
  }
  model.init_mode = init.mode;
}

SimulatedPaths simulate_full_model(const StageParams& p, int T, std::uint64_t seed,
                                   double r_noise_sd, int burn_in) {
  if (T < 1) throw ValidationError("simulation length must be positive");
  burn_in = std::max(burn_in, 8);
  check_sigmas(p, true);

  Rng rng(seed);
  const int N = T + burn_in;
  std::vector<double> ystar(N), g(N), z(N), ygap(N), pi(N), r(N), y(N);

  // pre-sample values
  double ystar_prev = 700.0, g_prev = 0.75, z_prev = 0.0;
  double gap1 = 0.0, gap2 = 0.0;                  // gap_{t-1}, gap_{t-2}
  double pi1 = 2.0, pi2 = 2.0, pi3 = 2.0, pi4 = 2.0;
  double r1 = 4.0 * g_prev + r_noise_sd * rng.normal();
  double r2 = 4.0 * g_prev + r_noise_sd * rng.normal();

  for (int t = 0; t < N; ++t) {
    const double g_t = g_prev + p.sigma_g * rng.normal();
    const double z_t = z_prev + p.sigma_z * rng.normal();
    const double ystar_t = ystar_prev + g_prev + p.sigma_ystar * rng.normal();

    // rate gaps at t-1 and t-2 drive the cycle
    const double rgap1 = r1 - 4.0 * (t >= 1 ? g[t - 1] : g_prev) - (t >= 1 ? z[t - 1] : z_prev);
    const double rgap2 = r2 - 4.0 * (t >= 2 ? g[t - 2] : g_prev) - (t >= 2 ? z[t - 2] : z_prev);
    const double gap_t = p.a_y1 * gap1 + p.a_y2 * gap2 + 0.5 * p.a_r * (rgap1 + rgap2) +
                         p.sigma_ytilde * rng.normal();
    const double pi_t = p.b_pi * pi1 + (1.0 - p.b_pi) / 3.0 * (pi2 + pi3 + pi4) + p.b_y * gap1 +
                        p.sigma_pi * rng.normal();
    const double r_t = 4.0 * g_t + z_t + r_noise_sd * rng.normal();

    ystar[t] = ystar_t;
    g[t] = g_t;
    z[t] = z_t;
    ygap[t] = gap_t;
    pi[t] = pi_t;
    r[t] = r_t;
    y[t] = ystar_t + gap_t;

    ystar_prev = ystar_t;
    g_prev = g_t;
    z_prev = z_t;
    gap2 = gap1;
    gap1 = gap_t;
    pi4 = pi3;
    pi3 = pi2;
    pi2 = pi1;
    pi1 = pi_t;
    r2 = r1;
    r1 = r_t;
  }

  SimulatedPaths out;
  out.data.dates.reserve(T);
  const Quarter start{1900, 1};
  for (int t = 0; t < T; ++t) out.data.dates.push_back(start.plus(t));
  auto keep = [&](const std::vector<double>& v) {
    return std::vector<double>(v.begin() + burn_in, v.end());
  };
  out.data.log_output = keep(y);
  out.data.inflation = keep(pi);
  out.ystar = keep(ystar);
  out.g = keep(g);
  out.z = keep(z);
  out.ygap = keep(ygap);
  out.real_rate = keep(r);

  // nominal rate such that the derived real rate reproduces the true one
  out.data.nominal_rate.resize(T);
  for (int t = 0; t < T; ++t) {
    const int s = t + burn_in;
    const double pie = 0.25 * (pi[s] + pi[s - 1] + pi[s - 2] + pi[s - 3]);
    out.data.nominal_rate[t] = r[s] + pie;
  }
  out.data.derive();
  return out;
}

}  // namespace rstar
