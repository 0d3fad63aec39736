#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "rstar/errors.hpp"
#include "rstar/models.hpp"
#include "rstar/rng.hpp"

using namespace rstar;

namespace {

StageParams random_params(Rng& rng) {
  StageParams p;
  p.a_y1 = rng.uniform(0.8, 1.6);
  p.a_y2 = rng.uniform(-0.7, -0.2);
  p.a_r = rng.uniform(-0.12, -0.02);
  p.a_0 = rng.uniform(-0.3, 0.3);
  p.a_g = rng.uniform(-0.5, 0.7);
  p.b_pi = rng.uniform(0.4, 0.9);
  p.b_y = rng.uniform(0.02, 0.2);
  p.sigma_ytilde = rng.uniform(0.2, 0.6);
  p.sigma_pi = rng.uniform(0.4, 1.0);
  p.sigma_ystar = rng.uniform(0.3, 0.8);
  p.sigma_g = rng.uniform(0.01, 0.08);
  p.sigma_z = rng.uniform(0.05, 0.3);
  return p;
}

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

// Structural right-hand side of the gap equation, built from named pieces.
struct StatePieces {
  double ystar_t, ystar_1, ystar_2, g_1, g_2, z_1, z_2;
};

double obs_row(const StateSpaceModel& m, int row, const Eigen::VectorXd& state,
               const Eigen::VectorXd& x) {
  return (m.obs_load.row(row) * state + m.obs_exog.row(row) * x)(0);
}

}  // namespace

TEST_CASE("state-space matrices reproduce the structural equations") {
  Rng rng(301);
  for (int rep = 0; rep < 25; ++rep) {
    const StageParams p = random_params(rng);

    // a common set of state / exogenous values
    StatePieces s{rng.normal(700, 5), rng.normal(700, 5), rng.normal(700, 5),
                  rng.normal(0.8, 0.2), rng.normal(0.8, 0.2), rng.normal(0, 0.5),
                  rng.normal(0, 0.5)};
    Eigen::VectorXd x(ModelData::kNumExog);
    const double y_1 = rng.normal(700, 5), y_2 = rng.normal(700, 5);
    const double r_1 = rng.normal(2, 1), r_2 = rng.normal(2, 1);
    const double pi_1 = rng.normal(2, 1), pi_24 = rng.normal(2, 1);
    x << y_1, y_2, r_1, r_2, pi_1, pi_24, 1.0;

    const double gap_1 = y_1 - s.ystar_1;
    const double gap_2 = y_2 - s.ystar_2;
    const double pi_rhs = p.b_pi * pi_1 + (1.0 - p.b_pi) * pi_24 + p.b_y * gap_1;

    SUBCASE("") {}  // keep doctest happy about loop structure

    {
      const StateSpaceModel m = build_full_model(p);
      Eigen::VectorXd state(7);
      state << s.ystar_t, s.ystar_1, s.ystar_2, s.g_1, s.g_2, s.z_1, s.z_2;
      const double gap_rhs = p.a_y1 * gap_1 + p.a_y2 * gap_2 +
                             0.5 * p.a_r * ((r_1 - 4.0 * s.g_1 - s.z_1) + (r_2 - 4.0 * s.g_2 - s.z_2));
      CHECK(obs_row(m, 0, state, x) - s.ystar_t == doctest::Approx(gap_rhs).epsilon(1e-12));
      CHECK(obs_row(m, 1, state, x) == doctest::Approx(pi_rhs).epsilon(1e-12));

      // trend block: shock structure implies the exact trend equation
      const Eigen::MatrixXd& Q = m.state_cov;
      CHECK(Q(0, 0) - 2.0 * Q(0, 3) + Q(3, 3) ==
            doctest::Approx(p.sigma_ystar * p.sigma_ystar).epsilon(1e-12));
      CHECK(Q(0, 3) - Q(3, 3) == doctest::Approx(0.0).epsilon(1e-14));
      CHECK(Q(3, 3) == doctest::Approx(p.sigma_g * p.sigma_g).epsilon(1e-14));
      CHECK(Q(5, 5) == doctest::Approx(p.sigma_z * p.sigma_z).epsilon(1e-14));
      // transition rows: ystar_t = ystar_{t-1} + g_{t-1} once the growth
      // shock is added, lag rows shift
      Eigen::VectorXd prev(7);
      prev << s.ystar_1, s.ystar_2, rng.normal(), s.g_2, rng.normal(), s.z_2, rng.normal();
      const Eigen::VectorXd next = m.trans * prev;
      CHECK(next[0] == doctest::Approx(s.ystar_1 + s.g_2).epsilon(1e-12));  // + (e_trend + e_g)
      CHECK(next[1] == doctest::Approx(s.ystar_1).epsilon(1e-12));
      CHECK(next[3] == doctest::Approx(s.g_2).epsilon(1e-12));  // + e_g
      CHECK(next[4] == doctest::Approx(s.g_2).epsilon(1e-12));
      CHECK(next[5] == doctest::Approx(s.z_2).epsilon(1e-12));  // + e_z
      CHECK(next[6] == doctest::Approx(s.z_2).epsilon(1e-12));
    }
    {
      const StateSpaceModel m = build_stage2_correct(p, false);
      Eigen::VectorXd state(5);
      state << s.ystar_t, s.ystar_1, s.ystar_2, s.g_1, s.g_2;
      const double gap_rhs = p.a_y1 * gap_1 + p.a_y2 * gap_2 +
                             0.5 * p.a_r * ((r_1 - 4.0 * s.g_1) + (r_2 - 4.0 * s.g_2));
      CHECK(obs_row(m, 0, state, x) - s.ystar_t == doctest::Approx(gap_rhs).epsilon(1e-12));
      CHECK(obs_row(m, 1, state, x) == doctest::Approx(pi_rhs).epsilon(1e-12));
    }
    {
      const StateSpaceModel m = build_stage2_correct(p, true);
      Eigen::VectorXd state(5);
      state << s.ystar_t, s.ystar_1, s.ystar_2, s.g_1, s.g_2;
      const double gap_rhs = p.a_0 + p.a_y1 * gap_1 + p.a_y2 * gap_2 +
                             0.5 * p.a_r * ((r_1 - 4.0 * s.g_1) + (r_2 - 4.0 * s.g_2));
      CHECK(obs_row(m, 0, state, x) - s.ystar_t == doctest::Approx(gap_rhs).epsilon(1e-12));
    }
    {
      const StateSpaceModel m = build_stage2_hlw(p);
      Eigen::VectorXd state(5);
      state << s.ystar_t, s.ystar_1, s.ystar_2, s.g_1, s.g_2;
      const double gap_rhs = p.a_0 + p.a_y1 * gap_1 + p.a_y2 * gap_2 +
                             0.5 * p.a_r * (r_1 + r_2) + p.a_g * s.g_1;
      CHECK(obs_row(m, 0, state, x) - s.ystar_t == doctest::Approx(gap_rhs).epsilon(1e-12));
      CHECK(obs_row(m, 1, state, x) == doctest::Approx(pi_rhs).epsilon(1e-12));
      // legacy trend error is MA(1): trend and growth shocks correlate
      CHECK(m.state_cov(0, 3) == doctest::Approx(p.sigma_g * p.sigma_g).epsilon(1e-14));
    }
  }
}

TEST_CASE("ratio-implied sigmas satisfy the defining identities") {
  Rng rng(302);
  for (int rep = 0; rep < 10; ++rep) {
    StageParams p = random_params(rng);
    p.lambda_g = rng.uniform(0.02, 0.1);
    p.lambda_z = rng.uniform(0.0, 0.06);
    const ModelVariant v{VariantTag::kFull, SigmaMode::kRatioImplied, SigmaMode::kRatioImplied};
    const StageParams r = resolve_sigmas(v, p);
    CHECK(r.sigma_z * std::abs(r.a_r) == doctest::Approx(r.lambda_z * r.sigma_ytilde).epsilon(1e-12));
    CHECK(r.sigma_g == doctest::Approx(r.lambda_g * r.sigma_ystar).epsilon(1e-12));
  }
  StageParams p = random_params(rng);
  p.lambda_z = -0.1;
  CHECK_THROWS_AS(
      resolve_sigmas(ModelVariant{VariantTag::kFull, SigmaMode::kMleFree, SigmaMode::kRatioImplied}, p),
      ValidationError);
}

TEST_CASE("negative sigma and stationarity rejection") {
  StageParams p = bench_params();
  p.sigma_pi = -0.1;
  CHECK_THROWS_WITH_AS(build_full_model(p), doctest::Contains("sigma_pi"), ValidationError);
  p = bench_params();
  p.a_y1 = 1.2;
  p.a_y2 = -0.1;  // sum 1.1
  CHECK_THROWS_AS(build_full_model(p, true), ValidationError);
  CHECK_NOTHROW(build_full_model(p, false));
}

TEST_CASE("intercept variant nests the plain correct model at a_0 = 0") {
  StageParams p = bench_params();
  p.a_0 = 0.0;
  const SimulatedPaths sim = simulate_full_model(p, 60, 99);
  const ModelData md = prepare_model_data(sim.data);

  StateSpaceModel m0 = build_stage2_correct(p, false);
  StateSpaceModel m1 = build_stage2_correct(p, true);
  apply_default_init(m0, md);
  apply_default_init(m1, md);
  const double ll0 = kalman_filter(m0, md.obs, md.exog).log_likelihood;
  const double ll1 = kalman_filter(m1, md.obs, md.exog).log_likelihood;
  CHECK(ll0 == doctest::Approx(ll1).epsilon(1e-14));
}

TEST_CASE("restricted legacy gap equation matches the correct one up to the growth lag") {
  StageParams p = bench_params();
  p.a_0 = 0.0;
  p.a_g = -4.0 * p.a_r;
  const StateSpaceModel hlw = build_stage2_hlw(p);
  const StateSpaceModel correct = build_stage2_correct(p, false);
  CHECK((hlw.trans - correct.trans).cwiseAbs().maxCoeff() == 0.0);
  CHECK((hlw.state_cov - correct.state_cov).cwiseAbs().maxCoeff() == 0.0);
  CHECK((hlw.obs_exog - correct.obs_exog).cwiseAbs().maxCoeff() < 1e-15);
  // gap loading on the two growth states differs in timing but not in total
  CHECK(hlw.obs_load(0, 3) + hlw.obs_load(0, 4) ==
        doctest::Approx(correct.obs_load(0, 3) + correct.obs_load(0, 4)).epsilon(1e-14));
  for (int j : {0, 1, 2}) CHECK(hlw.obs_load(0, j) == correct.obs_load(0, j));
}

TEST_CASE("with sigma_g = 0 the two stage-2 shock structures coincide") {
  StageParams p = bench_params();
  p.sigma_g = 0.0;
  const StateSpaceModel hlw = build_stage2_hlw(p);
  const StateSpaceModel correct = build_stage2_correct(p, false);
  CHECK((hlw.state_cov - correct.state_cov).cwiseAbs().maxCoeff() == 0.0);
  CHECK(hlw.state_cov(0, 3) == 0.0);
  CHECK(hlw.state_cov(0, 0) == doctest::Approx(p.sigma_ystar * p.sigma_ystar));
}

TEST_CASE("full model with sigma_z = 0 collapses to the correct stage-2 likelihood") {
  StageParams p = bench_params();
  p.sigma_z = 0.0;
  const SimulatedPaths sim = simulate_full_model(p, 70, 123);
  const ModelData md = prepare_model_data(sim.data);

  StateSpaceModel full = build_full_model(p);
  StateSpaceModel s2 = build_stage2_correct(p, false);
  apply_default_init(s2, md);
  apply_default_init(full, md);
  // pin the z states at exactly zero so the two models describe the same law
  full.init_mean[5] = full.init_mean[6] = 0.0;
  full.init_cov.row(5).setZero();
  full.init_cov.col(5).setZero();
  full.init_cov.row(6).setZero();
  full.init_cov.col(6).setZero();
  for (int i = 0; i < 5; ++i) {
    full.init_mean[i] = s2.init_mean[i];
    for (int j = 0; j < 5; ++j) full.init_cov(i, j) = s2.init_cov(i, j);
  }

  const double ll_full = kalman_filter(full, md.obs, md.exog).log_likelihood;
  const double ll_s2 = kalman_filter(s2, md.obs, md.exog).log_likelihood;
  CHECK(ll_full == doctest::Approx(ll_s2).epsilon(1e-10));
}

TEST_CASE("a_r = 0 makes the likelihood invariant to the rate series") {
  StageParams p = bench_params();
  p.a_r = 0.0;
  const SimulatedPaths sim = simulate_full_model(bench_params(), 60, 5);
  ModelData md = prepare_model_data(sim.data);

  StateSpaceModel m = build_stage2_correct(p, false);
  apply_default_init(m, md);
  const double ll_a = kalman_filter(m, md.obs, md.exog).log_likelihood;
  md.exog.col(ModelData::kRLag1).array() += 5.0;
  md.exog.col(ModelData::kRLag2).array() *= -2.0;
  const double ll_b = kalman_filter(m, md.obs, md.exog).log_likelihood;
  CHECK(ll_a == doctest::Approx(ll_b).epsilon(1e-13));
}

TEST_CASE("simulation: sigma_z = 0 gives rstar = 4g exactly") {
  StageParams p = bench_params();
  p.sigma_z = 0.0;
  const SimulatedPaths sim = simulate_full_model(p, 80, 7);
  for (double zv : sim.z) CHECK(zv == 0.0);
}

TEST_CASE("simulation: deterministic limit") {
  StageParams p = bench_params();
  p.sigma_ytilde = p.sigma_ystar = p.sigma_g = p.sigma_z = 0.0;
  const SimulatedPaths sim = simulate_full_model(p, 40, 8, /*r_noise_sd=*/0.0);
  for (double gv : sim.ygap) CHECK(std::abs(gv) < 1e-10);  // homogeneous AR(2) from rest
  for (std::size_t t = 1; t < sim.data.log_output.size(); ++t) {
    const double dy = sim.data.log_output[t] - sim.data.log_output[t - 1];
    CHECK(dy == doctest::Approx(sim.g[0]).epsilon(1e-10));  // linear trend at constant growth
  }
}

TEST_CASE("simulated rate-gap identity recovers a unit slope") {
  StageParams p = bench_params();
  const int T = 50000;
  const SimulatedPaths sim = simulate_full_model(p, T, 31337);

  // left side of the gap equation with the rate/growth part removed,
  // regressed on the z contribution it should equal up to noise
  std::vector<double> lhs, x;
  for (int t = 2; t < T; ++t) {
    const double l = sim.ygap[t] - p.a_y1 * sim.ygap[t - 1] - p.a_y2 * sim.ygap[t - 2] -
                     0.5 * p.a_r *
                         ((sim.real_rate[t - 1] - 4.0 * sim.g[t - 1]) +
                          (sim.real_rate[t - 2] - 4.0 * sim.g[t - 2]));
    lhs.push_back(l);
    x.push_back(-0.5 * p.a_r * (sim.z[t - 1] + sim.z[t - 2]));
  }
  Eigen::MatrixXd X(lhs.size(), 2);
  Eigen::VectorXd yv(lhs.size());
  for (std::size_t i = 0; i < lhs.size(); ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = x[i];
    yv[i] = lhs[i];
  }
  const auto fit = oracles::ols(X, yv);
  CHECK(fit.beta[1] == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("full model smooths cleanly with sigma_z = 0") {
  // lambda_z = 0 pins sigma_z at zero; the z states then duplicate and the
  // predicted covariance is singular, which the smoother must tolerate
  StageParams p = bench_params();
  p.sigma_z = 0.0;
  const SimulatedPaths sim = simulate_full_model(p, 90, 911);
  const ModelData md = prepare_model_data(sim.data);
  StateSpaceModel m = build_full_model(p);
  apply_default_init(m, md);
  m.init_mean[5] = m.init_mean[6] = 0.25;
  const FilterOutput sm = kalman_smoother(kalman_filter(m, md.obs, md.exog), m);
  CHECK(sm.smoothed);
  for (Eigen::Index t = 0; t < sm.T(); ++t) {
    CHECK(std::isfinite(sm.smooth_mean(t, 5)));
    // z is a constant state: its smoothed value is the same at every t
    CHECK(sm.smooth_mean(t, 5) == doctest::Approx(sm.smooth_mean(0, 5)).epsilon(1e-7));
  }
}

TEST_CASE("parameter names round-trip") {
  StageParams p;
  for (const char* name : {"a_y1", "a_y2", "a_r", "a_0", "a_g", "b_pi", "b_y", "sigma_ytilde",
                           "sigma_pi", "sigma_ystar", "sigma_g", "sigma_z"}) {
    p.set(name, 0.5);
    CHECK(p.get(name) == 0.5);
  }
  CHECK(StageParams::is_sigma("sigma_g"));
  CHECK_FALSE(StageParams::is_sigma("a_r"));
  CHECK_THROWS_AS(p.get("nope"), ValidationError);
}
