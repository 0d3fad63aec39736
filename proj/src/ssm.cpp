#include "rstar/ssm.hpp"

#include <cmath>

#include "rstar/errors.hpp"

namespace rstar {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void check_psd_and_clip(Eigen::MatrixXd& m, const char* name) {
  if (m.rows() != m.cols()) throw ValidationError(std::string(name) + " is not square");
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-8 * (1.0 + m.cwiseAbs().maxCoeff()))
    throw ValidationError(std::string(name) + " is not symmetric");
  m = symmetrize(m);
  if (m.rows() == 0) return;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const Eigen::VectorXd ev = es.eigenvalues();
  if (ev.minCoeff() < -1e-10 * std::max(1.0, ev.cwiseAbs().maxCoeff()))
    throw ValidationError(std::string(name) + " has eigenvalue " + std::to_string(ev.minCoeff()) +
                          " < -1e-10");
  if (ev.minCoeff() < 0.0) {
    const Eigen::VectorXd clipped = ev.cwiseMax(0.0);
    m = es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
    m = symmetrize(m);
  }
}

// Spectral pseudo-inverse; tolerant of exactly singular predicted
// covariances (zero shock variances make lagged-state copies collinear).
Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(m));
  const Eigen::VectorXd ev = es.eigenvalues();
  const double cutoff = 1e-12 * std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (ev[i] > cutoff) inv[i] = 1.0 / ev[i];
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

void StateSpaceModel::validate() {
  const Eigen::Index ns = n_state(), no = n_obs(), nx = n_exog();
  if (no <= 0 || ns <= 0) throw ValidationError("state-space model has empty dimensions");
  auto dim = [&](const Eigen::MatrixXd& m, Eigen::Index r, Eigen::Index c, const char* name) {
    if (m.rows() != r || m.cols() != c)
      throw ValidationError(std::string("dimension mismatch in ") + name + ": " +
                            std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                            ", expected " + std::to_string(r) + "x" + std::to_string(c));
  };
  dim(obs_exog, no, nx, "obs_exog");
  dim(trans, ns, ns, "trans");
  dim(trans_exog, ns, nx, "trans_exog");
  dim(obs_cov, no, no, "obs_cov");
  dim(state_cov, ns, ns, "state_cov");
  if (init_mean.size() != ns) throw ValidationError("init_mean has wrong length");
  dim(init_cov, ns, ns, "init_cov");
  check_psd_and_clip(obs_cov, "obs_cov");
  check_psd_and_clip(state_cov, "state_cov");
  check_psd_and_clip(init_cov, "init_cov");
}

FilterOutput kalman_filter(const StateSpaceModel& model, const Eigen::MatrixXd& obs,
                           const Eigen::MatrixXd& exog) {
  const Eigen::Index T = obs.rows();
  const Eigen::Index ns = model.n_state(), no = model.n_obs();
  if (obs.cols() != no) throw ValidationError("obs has wrong number of columns");
  if (model.n_exog() > 0 && (exog.rows() != T || exog.cols() != model.n_exog()))
    throw ValidationError("exog has wrong dimensions");
  if (!obs.allFinite()) throw ValidationError("obs contains non-finite values");

  FilterOutput out;
  out.pred_mean.resize(T, ns);
  out.filt_mean.resize(T, ns);
  out.resid.resize(T, no);
  out.pred_cov.resize(T);
  out.filt_cov.resize(T);
  out.resid_cov.resize(T);

  Eigen::VectorXd a = model.init_mean;
  Eigen::MatrixXd P = model.init_cov;
  if (model.init_mode == InitMode::kDiffuse)
    P = kDiffuseKappa * Eigen::MatrixXd::Identity(ns, ns);
  out.excluded_terms =
      model.init_mode == InitMode::kDiffuse ? static_cast<int>((ns + no - 1) / no) : 0;

  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(ns, ns);
  double loglik = 0.0;

  for (Eigen::Index t = 0; t < T; ++t) {
    if (t > 0) {
      const Eigen::VectorXd x =
          model.n_exog() > 0 ? Eigen::VectorXd(exog.row(t)) : Eigen::VectorXd(0);
      a = model.trans * a;
      if (model.n_exog() > 0) a += model.trans_exog * x;
      P = symmetrize(model.trans * P * model.trans.transpose() + model.state_cov);
    }
    out.pred_mean.row(t) = a;
    out.pred_cov[t] = P;

    Eigen::VectorXd yhat = model.obs_load * a;
    if (model.n_exog() > 0) yhat += model.obs_exog * Eigen::VectorXd(exog.row(t));
    const Eigen::VectorXd v = obs.row(t).transpose() - yhat;
    const Eigen::MatrixXd S = symmetrize(model.obs_load * P * model.obs_load.transpose() + model.obs_cov);

    Eigen::LDLT<Eigen::MatrixXd> ldlt(S);
    const Eigen::VectorXd d = ldlt.vectorD();
    if (ldlt.info() != Eigen::Success || d.minCoeff() <= 1e-13 * std::max(1e-300, d.maxCoeff()))
      throw NumericalError("singular residual covariance at t=" + std::to_string(t));

    const Eigen::VectorXd Sinv_v = ldlt.solve(v);
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < d.size(); ++i) logdet += std::log(d[i]);
    if (t >= out.excluded_terms)
      loglik += -0.5 * (static_cast<double>(no) * kLog2Pi + logdet + v.dot(Sinv_v));

    const Eigen::MatrixXd K = P * model.obs_load.transpose() * ldlt.solve(Eigen::MatrixXd::Identity(no, no));
    a = a + K * v;
    const Eigen::MatrixXd ImKH = I - K * model.obs_load;
    P = symmetrize(ImKH * P * ImKH.transpose() + K * model.obs_cov * K.transpose());  // Joseph form

    out.resid.row(t) = v;
    out.resid_cov[t] = S;
    out.filt_mean.row(t) = a;
    out.filt_cov[t] = P;
  }

  if (!std::isfinite(loglik)) throw NumericalError("non-finite log-likelihood");
  out.log_likelihood = loglik;
  return out;
}

FilterOutput kalman_smoother(FilterOutput filtered, const StateSpaceModel& model) {
  const Eigen::Index T = filtered.T();
  const Eigen::Index ns = model.n_state();
  if (T == 0) throw ValidationError("empty filter output");

  filtered.smooth_mean.resize(T, ns);
  filtered.smooth_cov.resize(T);
  filtered.smooth_mean.row(T - 1) = filtered.filt_mean.row(T - 1);
  filtered.smooth_cov[T - 1] = filtered.filt_cov[T - 1];

  for (Eigen::Index t = T - 2; t >= 0; --t) {
    const Eigen::MatrixXd& Pf = filtered.filt_cov[t];
    const Eigen::MatrixXd& Pp = filtered.pred_cov[t + 1];
    if (!Pp.allFinite())
      throw NumericalError("singular predicted covariance at t=" + std::to_string(t + 1));
    const Eigen::MatrixXd J = Pf * model.trans.transpose() * pseudo_inverse(Pp);
    filtered.smooth_mean.row(t) =
        filtered.filt_mean.row(t) +
        (J * (filtered.smooth_mean.row(t + 1) - filtered.pred_mean.row(t + 1)).transpose())
            .transpose();
    filtered.smooth_cov[t] =
        symmetrize(Pf + J * (filtered.smooth_cov[t + 1] - Pp) * J.transpose());
  }
  filtered.smoothed = true;
  return filtered;
}

}  // namespace rstar
