#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "morphfit/robust_fit.hpp"

namespace morphfit {

/// Parameters of the doubly-latent LDS
///   S_t = S_{t-1} + e_S,                         e_S ~ N(0, Gamma_S)
///   V_t = alpha V_{t-1} + (1 - alpha) W S_t + e_V,  e_V ~ N(0, Gamma_V)
/// with S = [s; 1] and W = [U_j | M_j] stacked over the J landmarks.
struct DlLdsParams {
  Eigen::MatrixXd gamma_s;  // (K+1) x (K+1)
  Eigen::MatrixXd gamma_v;  // 3J x 3J
  double alpha = 0.06;
  Eigen::MatrixXd w;        // 3J x (K+1)

  int k() const { return static_cast<int>(gamma_s.rows()) - 1; }
  int n_landmarks() const { return static_cast<int>(gamma_v.rows() / 3); }

  /// Throws std::invalid_argument on bad sizes or alpha, and
  /// NotPositiveDefiniteError when a covariance is not SPD.
  void validate() const;
};

/// The LDS recast over Z = [S; V]: Z_t ~ N(F Z_{t-1}, Gamma), F = Gamma A.
struct JointDynamics {
  Eigen::MatrixXd gamma;
  Eigen::MatrixXd gamma_inv;
  Eigen::MatrixXd a;
  Eigen::MatrixXd f;
  int k = 0;
  int n_landmarks = 0;

  int state_dim() const { return k + 1 + 3 * n_landmarks; }
  /// Index of the homogeneous coordinate of S.
  int homogeneous_index() const { return k; }
  /// 3J x D selection of V.
  Eigen::MatrixXd c() const;
  /// K x D selection of s.
  Eigen::MatrixXd c_bar() const;
};

struct FilterState {
  Eigen::VectorXd nu;
  Eigen::MatrixXd psi;
  Eigen::MatrixXd p;
  int t = 1;
};

struct Prediction {
  Eigen::VectorXd mean;
  Eigen::MatrixXd p;
};

struct KalmanStepResult {
  FilterState state;
  /// log N(Y_t; C F nu_{t-1}, C P C^T + Sigma_t).
  double log_likelihood = 0.0;
};

struct ExtractedState {
  ShapeEmbedding s;
  Points3 v;
};

/// W = [U_j | M_j] over the landmarks, 3J x (K+1).
Eigen::MatrixXd reconstruction_matrix(const LandmarkModel& model);

/// Sigma_t = I_J (x) sigma.
Eigen::MatrixXd kron_identity(const Mat3& sigma, int n_landmarks);

JointDynamics assemble_joint_dynamics(const DlLdsParams& params);

/// Predicted mean F nu_{t-1} and covariance P = F Psi F^T + Gamma.
Prediction predict(const FilterState& state, const JointDynamics& dyn);

/// One filter recursion with observation Y_t = C Z_t + N(0, sigma_t).
/// Throws NotPositiveDefiniteError when C P C^T + Sigma_t is not SPD.
KalmanStepResult kalman_step(const FilterState& state, const JointDynamics& dyn,
                             const Eigen::VectorXd& y,
                             const Eigen::MatrixXd& sigma_t);

/// nu_1 = [s_1; 1; W [s_1; 1]], Psi_1 = P_1 = I.
FilterState initialize(const ShapeEmbedding& s1, const Eigen::MatrixXd& w);

/// Conditions the state on the homogeneous coordinate being exactly 1.
void pin_homogeneous(FilterState& state, int k);

ExtractedState extract_state(const FilterState& state, int k);

/// log N(Y; C nu, C Psi C^T + Sigma), the t = 1 likelihood.
double observation_log_likelihood(const FilterState& state, int k,
                                  const Eigen::VectorXd& y,
                                  const Eigen::MatrixXd& sigma_t);

struct DffConfig {
  FitConfig fit;
  double alpha = 0.06;
  /// Diagonal of Gamma_S over the K shape coordinates. Estimated from a
  /// preliminary per-frame pass when unset.
  std::optional<Eigen::VectorXd> gamma_s_diag;
  /// Diagonal of Gamma_V (length 3J). Estimated when unset.
  std::optional<Eigen::VectorXd> gamma_v_diag;
  double homogeneous_variance = 1e-12;
  /// Lower bound on estimated process variances.
  double gamma_floor = 1e-10;
};

struct DffFrame {
  RigidSimilarity pose;
  /// Filtered embedding and landmark vertices.
  ShapeEmbedding s;
  Points3 v;
  Eigen::MatrixXd psi;
  Mat3 sigma = Mat3::Identity();
  /// Output of the rigid step, the filter observation.
  Points3 frontalized;
  double log_likelihood = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct DffResult {
  std::vector<DffFrame> frames;
  DlLdsParams params;
};

struct ProcessNoise {
  Eigen::VectorXd s_diag;
  Eigen::VectorXd v_diag;
};

/// Diagonal variances of successive differences of the per-frame
/// embeddings and decoded landmark vertices, floored at `floor`.
ProcessNoise estimate_process_noise(const std::vector<ShapeEmbedding>& s,
                                    const LandmarkModel& model, double floor);

/// Frame 1 by a full robust fit; later frames refit the rigid pose with the
/// previous filtered embedding held fixed, then run one filter step on the
/// frontalized landmarks. Throws TrackingError naming the failed frame.
DffResult dff_track(const std::vector<Points3>& frames,
                    const LandmarkModel& model, const DffConfig& config);

}  // namespace morphfit
