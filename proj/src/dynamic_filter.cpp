#include "morphfit/dynamic_filter.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "morphfit/errors.hpp"

namespace morphfit {

namespace {

Eigen::LLT<Eigen::MatrixXd> spd_factor(const Eigen::MatrixXd& m,
                                       const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success || !m.allFinite()) {
    throw NotPositiveDefiniteError(std::string(what) +
                                   " is not positive definite");
  }
  return llt;
}

void symmetrize(Eigen::MatrixXd& m) { m = 0.5 * (m + m.transpose()).eval(); }

double log_det(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

Eigen::VectorXd flatten(const Points3& p) {
  return Eigen::Map<const Eigen::VectorXd>(p.data(), p.size());
}

}  // namespace

void DlLdsParams::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("alpha must lie in [0, 1]");
  }
  if (gamma_s.rows() < 1 || gamma_s.rows() != gamma_s.cols()) {
    throw std::invalid_argument("Gamma_S must be square (K+1) x (K+1)");
  }
  if (gamma_v.rows() < 3 || gamma_v.rows() % 3 != 0 ||
      gamma_v.rows() != gamma_v.cols()) {
    throw std::invalid_argument("Gamma_V must be square 3J x 3J");
  }
  if (w.rows() != gamma_v.rows() || w.cols() != gamma_s.rows()) {
    throw std::invalid_argument("W must be 3J x (K+1)");
  }
  spd_factor(gamma_s, "Gamma_S");
  spd_factor(gamma_v, "Gamma_V");
}

Eigen::MatrixXd JointDynamics::c() const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(3 * n_landmarks, state_dim());
  out.rightCols(3 * n_landmarks).setIdentity();
  return out;
}

Eigen::MatrixXd JointDynamics::c_bar() const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(k, state_dim());
  out.leftCols(k).setIdentity();
  return out;
}

Eigen::MatrixXd reconstruction_matrix(const LandmarkModel& model) {
  Eigen::MatrixXd w(model.mean.size(), model.k() + 1);
  w.leftCols(model.k()) = model.basis;
  w.col(model.k()) = model.mean;
  return w;
}

Eigen::MatrixXd kron_identity(const Mat3& sigma, int n_landmarks) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(3 * n_landmarks, 3 * n_landmarks);
  for (int j = 0; j < n_landmarks; ++j) out.block<3, 3>(3 * j, 3 * j) = sigma;
  return out;
}

JointDynamics assemble_joint_dynamics(const DlLdsParams& params) {
  params.validate();
  const int ks = static_cast<int>(params.gamma_s.rows());
  const int m = static_cast<int>(params.gamma_v.rows());
  const double alpha = params.alpha;
  const double beta = 1.0 - alpha;

  const Eigen::MatrixXd ident_s = Eigen::MatrixXd::Identity(ks, ks);
  const Eigen::MatrixXd ident_v = Eigen::MatrixXd::Identity(m, m);
  Eigen::MatrixXd gs_inv = spd_factor(params.gamma_s, "Gamma_S").solve(ident_s);
  Eigen::MatrixXd gv_inv = spd_factor(params.gamma_v, "Gamma_V").solve(ident_v);
  symmetrize(gs_inv);
  symmetrize(gv_inv);
  const Eigen::MatrixXd gv_inv_w = gv_inv * params.w;

  JointDynamics dyn;
  dyn.k = ks - 1;
  dyn.n_landmarks = m / 3;
  const int d = ks + m;

  dyn.gamma_inv.resize(d, d);
  dyn.gamma_inv.topLeftCorner(ks, ks) =
      gs_inv + beta * beta * params.w.transpose() * gv_inv_w;
  dyn.gamma_inv.topRightCorner(ks, m) = -beta * gv_inv_w.transpose();
  dyn.gamma_inv.bottomLeftCorner(m, ks) = -beta * gv_inv_w;
  dyn.gamma_inv.bottomRightCorner(m, m) = gv_inv;

  dyn.a = Eigen::MatrixXd::Zero(d, d);
  dyn.a.topLeftCorner(ks, ks) = gs_inv;
  dyn.a.topRightCorner(ks, m) = -alpha * beta * gv_inv_w.transpose();
  dyn.a.bottomRightCorner(m, m) = alpha * gv_inv;

  // Block inversion through the Schur complement of the V block.
  const Eigen::MatrixXd a11 = dyn.gamma_inv.topLeftCorner(ks, ks);
  const Eigen::MatrixXd a12 = dyn.gamma_inv.topRightCorner(ks, m);
  const Eigen::LLT<Eigen::MatrixXd> llt22 = spd_factor(gv_inv, "Gamma_V^-1");
  const Eigen::MatrixXd x = llt22.solve(Eigen::MatrixXd(a12.transpose()));
  Eigen::MatrixXd schur = a11 - a12 * x;
  symmetrize(schur);
  Eigen::MatrixXd schur_inv = spd_factor(schur, "Gamma^-1").solve(ident_s);
  symmetrize(schur_inv);

  dyn.gamma.resize(d, d);
  dyn.gamma.topLeftCorner(ks, ks) = schur_inv;
  dyn.gamma.topRightCorner(ks, m) = -schur_inv * x.transpose();
  dyn.gamma.bottomLeftCorner(m, ks) = -x * schur_inv;
  dyn.gamma.bottomRightCorner(m, m) =
      llt22.solve(ident_v) + x * schur_inv * x.transpose();
  symmetrize(dyn.gamma);

  dyn.f = dyn.gamma * dyn.a;
  return dyn;
}

Prediction predict(const FilterState& state, const JointDynamics& dyn) {
  if (state.nu.size() != dyn.state_dim()) {
    throw std::invalid_argument("predict: state dimension mismatch");
  }
  Prediction out;
  out.mean = dyn.f * state.nu;
  out.p = dyn.f * state.psi * dyn.f.transpose() + dyn.gamma;
  symmetrize(out.p);
  return out;
}

KalmanStepResult kalman_step(const FilterState& state, const JointDynamics& dyn,
                             const Eigen::VectorXd& y,
                             const Eigen::MatrixXd& sigma_t) {
  const int m = 3 * dyn.n_landmarks;
  const int off = dyn.k + 1;
  if (y.size() != m || sigma_t.rows() != m || sigma_t.cols() != m) {
    throw std::invalid_argument("kalman_step: observation size mismatch");
  }
  const Prediction pred = predict(state, dyn);

  Eigen::MatrixXd s = pred.p.bottomRightCorner(m, m) + sigma_t;
  symmetrize(s);
  const Eigen::LLT<Eigen::MatrixXd> llt = spd_factor(s, "innovation covariance");
  const Eigen::VectorXd r = y - pred.mean.segment(off, m);

  // K = P C^T S^-1; P C^T = P[:, V] and S is symmetric.
  const Eigen::MatrixXd pc = pred.p.middleCols(off, m);
  const Eigen::MatrixXd gain = llt.solve(pc.transpose()).transpose();

  KalmanStepResult out;
  out.state.nu = pred.mean + gain * r;
  out.state.psi = pred.p - gain * pc.transpose();
  symmetrize(out.state.psi);
  out.state.p = pred.p;
  out.state.t = state.t + 1;

  const double quad = r.dot(llt.solve(r));
  out.log_likelihood =
      -0.5 * (m * std::log(2.0 * std::numbers::pi) + log_det(llt) + quad);
  return out;
}

FilterState initialize(const ShapeEmbedding& s1, const Eigen::MatrixXd& w) {
  if (s1.size() + 1 != w.cols()) {
    throw std::invalid_argument("initialize: embedding does not match W");
  }
  const auto ks = w.cols();
  const auto d = ks + w.rows();
  Eigen::VectorXd big_s(ks);
  big_s << s1, 1.0;

  FilterState st;
  st.nu.resize(d);
  st.nu << big_s, w * big_s;
  st.psi = Eigen::MatrixXd::Identity(d, d);
  st.p = Eigen::MatrixXd::Identity(d, d);
  st.t = 1;
  return st;
}

void pin_homogeneous(FilterState& state, int k) {
  const double var = state.psi(k, k);
  if (var > 0.0) {
    const Eigen::VectorXd col = state.psi.col(k);
    state.nu += col * ((1.0 - state.nu(k)) / var);
    state.psi -= col * col.transpose() / var;
    symmetrize(state.psi);
  }
  state.nu(k) = 1.0;
  state.psi.row(k).setZero();
  state.psi.col(k).setZero();
}

ExtractedState extract_state(const FilterState& state, int k) {
  const auto m = state.nu.size() - k - 1;
  if (k < 0 || m <= 0 || m % 3 != 0) {
    throw std::invalid_argument("extract_state: bad state dimension");
  }
  ExtractedState out;
  out.s = state.nu.head(k);
  out.v = Eigen::Map<const Points3>(state.nu.tail(m).data(), 3, m / 3);
  return out;
}

double observation_log_likelihood(const FilterState& state, int k,
                                  const Eigen::VectorXd& y,
                                  const Eigen::MatrixXd& sigma_t) {
  const auto m = state.nu.size() - k - 1;
  if (y.size() != m || sigma_t.rows() != m) {
    throw std::invalid_argument("observation size mismatch");
  }
  Eigen::MatrixXd s = state.psi.bottomRightCorner(m, m) + sigma_t;
  symmetrize(s);
  const Eigen::LLT<Eigen::MatrixXd> llt = spd_factor(s, "innovation covariance");
  const Eigen::VectorXd r = y - state.nu.tail(m);
  return -0.5 * (static_cast<double>(m) * std::log(2.0 * std::numbers::pi) +
                 log_det(llt) + r.dot(llt.solve(r)));
}

ProcessNoise estimate_process_noise(const std::vector<ShapeEmbedding>& s,
                                    const LandmarkModel& model, double floor) {
  const int k = model.k();
  const int m = 3 * model.n_landmarks();
  ProcessNoise out;
  out.s_diag = Eigen::VectorXd::Zero(k);
  out.v_diag = Eigen::VectorXd::Zero(m);
  if (s.size() >= 2) {
    for (std::size_t t = 1; t < s.size(); ++t) {
      const Eigen::VectorXd ds = s[t] - s[t - 1];
      out.s_diag += ds.cwiseAbs2();
      out.v_diag += (model.basis * ds).cwiseAbs2();
    }
    const double n = static_cast<double>(s.size() - 1);
    out.s_diag /= n;
    out.v_diag /= n;
  }
  out.s_diag = out.s_diag.cwiseMax(floor);
  out.v_diag = out.v_diag.cwiseMax(floor);
  return out;
}

DffResult dff_track(const std::vector<Points3>& frames,
                    const LandmarkModel& model, const DffConfig& config) {
  config.fit.validate();
  if (frames.empty()) throw std::invalid_argument("dff_track: no frames");
  if (!(config.homogeneous_variance > 0.0) || !(config.gamma_floor > 0.0)) {
    throw std::invalid_argument("dff_track: variances must be positive");
  }
  const int k = model.k();
  const int j_count = model.n_landmarks();
  const int t_count = static_cast<int>(frames.size());

  auto fit_frame = [&](int t, const std::optional<WarmStart>& warm) {
    try {
      return rff_fit(frames[t], model, config.fit, warm);
    } catch (const std::exception& e) {
      throw TrackingError(t + 1, e.what());
    }
  };

  const bool estimate = !config.gamma_s_diag || !config.gamma_v_diag;
  std::vector<FitResult> prelim;
  if (estimate) {
    for (int t = 0; t < t_count; ++t) prelim.push_back(fit_frame(t, std::nullopt));
  } else {
    prelim.push_back(fit_frame(0, std::nullopt));
  }

  Eigen::VectorXd s_diag;
  Eigen::VectorXd v_diag;
  if (estimate) {
    std::vector<ShapeEmbedding> embeddings;
    for (const FitResult& r : prelim) embeddings.push_back(r.state.s);
    const ProcessNoise noise =
        estimate_process_noise(embeddings, model, config.gamma_floor);
    s_diag = noise.s_diag;
    v_diag = noise.v_diag;
  }
  if (config.gamma_s_diag) s_diag = *config.gamma_s_diag;
  if (config.gamma_v_diag) v_diag = *config.gamma_v_diag;
  if (s_diag.size() != k || v_diag.size() != 3 * j_count) {
    throw std::invalid_argument("dff_track: process-noise diagonal size");
  }

  DffResult result;
  result.params.alpha = config.alpha;
  result.params.w = reconstruction_matrix(model);
  Eigen::VectorXd gs(k + 1);
  gs << s_diag, config.homogeneous_variance;
  result.params.gamma_s = gs.asDiagonal();
  result.params.gamma_v = v_diag.asDiagonal();
  const JointDynamics dyn = assemble_joint_dynamics(result.params);

  auto record = [&](const FilterState& st, const FitResult& fit, double ll) {
    const ExtractedState ex = extract_state(st, k);
    DffFrame frame;
    frame.pose = fit.state.pose;
    frame.s = ex.s;
    frame.v = ex.v;
    frame.psi = st.psi;
    frame.sigma = fit.state.sigma;
    frame.frontalized = fit.frontalized;
    frame.log_likelihood = ll;
    frame.iterations = fit.iterations;
    frame.converged = fit.converged;
    result.frames.push_back(std::move(frame));
  };

  const FitResult& first = prelim.front();
  FilterState state = initialize(first.state.s, result.params.w);
  pin_homogeneous(state, k);
  record(state, first,
         observation_log_likelihood(state, k, flatten(first.frontalized),
                                    kron_identity(first.state.sigma, j_count)));

  for (int t = 1; t < t_count; ++t) {
    const FitResult fit = fit_frame(t, WarmStart{result.frames.back().s, true});
    try {
      const KalmanStepResult step =
          kalman_step(state, dyn, flatten(fit.frontalized),
                      kron_identity(fit.state.sigma, j_count));
      state = step.state;
      record(state, fit, step.log_likelihood);
    } catch (const std::exception& e) {
      throw TrackingError(t + 1, e.what());
    }
  }
  return result;
}

}  // namespace morphfit
