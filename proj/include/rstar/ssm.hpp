#ifndef RSTAR_SSM_HPP
#define RSTAR_SSM_HPP

#include <Eigen/Dense>
#include <vector>

namespace rstar {

enum class InitMode { kFixedPrior, kDiffuse };

// Linear Gaussian state-space system
//
//   y_t  = obs_load  * s_t + obs_exog  * x_t + w_t,   w_t ~ N(0, obs_cov)
//   s_t  = trans * s_{t-1} + trans_exog * x_t + v_t,  v_t ~ N(0, state_cov)
//
// init_mean / init_cov describe the prior of s_1 before the first update.
// With InitMode::kDiffuse, init_cov is replaced by kappa * I (kappa = 1e7)
// and the first ceil(n_state / n_obs) likelihood terms are dropped.
struct StateSpaceModel {
  Eigen::MatrixXd obs_load;    // n_obs x n_state
  Eigen::MatrixXd obs_exog;    // n_obs x n_exog
  Eigen::MatrixXd trans;       // n_state x n_state
  Eigen::MatrixXd trans_exog;  // n_state x n_exog
  Eigen::MatrixXd obs_cov;     // n_obs x n_obs
  Eigen::MatrixXd state_cov;   // n_state x n_state
  Eigen::VectorXd init_mean;   // n_state
  Eigen::MatrixXd init_cov;    // n_state x n_state
  InitMode init_mode = InitMode::kFixedPrior;

  Eigen::Index n_obs() const { return obs_load.rows(); }
  Eigen::Index n_state() const { return obs_load.cols(); }
  Eigen::Index n_exog() const { return obs_exog.cols(); }

  // Checks dimensional consistency and that covariances are symmetric PSD
  // (eigenvalues >= -1e-10; small negatives are clipped to zero in place).
  void validate();
};

inline constexpr double kDiffuseKappa = 1e7;

struct FilterOutput {
  Eigen::MatrixXd pred_mean;    // T x n_state, E[s_t | y_{1..t-1}]
  Eigen::MatrixXd filt_mean;    // T x n_state, E[s_t | y_{1..t}]
  Eigen::MatrixXd smooth_mean;  // T x n_state, E[s_t | y_{1..T}] (after smoothing)
  std::vector<Eigen::MatrixXd> pred_cov, filt_cov, smooth_cov;
  Eigen::MatrixXd resid;                  // T x n_obs, one-step-ahead residuals
  std::vector<Eigen::MatrixXd> resid_cov; // per t
  double log_likelihood = 0.0;
  int excluded_terms = 0;  // leading terms dropped under diffuse init
  bool smoothed = false;

  Eigen::Index T() const { return filt_mean.rows(); }
};

// Forward pass. obs is T x n_obs; exog is T x n_exog (pass a T x 0 matrix
// when the model has no exogenous block). Throws NumericalError on a
// singular one-step-ahead residual covariance.
FilterOutput kalman_filter(const StateSpaceModel& model, const Eigen::MatrixXd& obs,
                           const Eigen::MatrixXd& exog);

// Rauch-Tung-Striebel backward pass; fills the smooth_* fields. The gain
// uses a spectral pseudo-inverse of the predicted covariance so that
// degenerate states (exact zero shock variances) smooth cleanly.
FilterOutput kalman_smoother(FilterOutput filtered, const StateSpaceModel& model);

// (A + A^T) / 2
inline Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& a) { return 0.5 * (a + a.transpose()); }

}  // namespace rstar

#endif  // RSTAR_SSM_HPP
