#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "morphfit/geometry.hpp"
#include "morphfit/shape_model.hpp"

namespace morphfit {

struct FitConfig {
  /// Weight of the shape regularizer kappa * s^T Lambda^-1 s.
  double kappa = 1.0;
  /// Convergence threshold on max(|d rho|/rho, rotation angle, |dT|, |ds|).
  double epsilon = 1e-6;
  int max_iters = 100;
  /// Initial Gamma shape parameter mu.
  double mu_init = 1.0;
  /// Step-size tolerance (radians) of the anisotropic rotation solver.
  double rotation_tolerance = 1e-10;
  int rotation_max_iters = 50;

  /// Throws std::invalid_argument on out-of-range fields.
  void validate() const;
};

/// The landmark rows of a shape model, i.e. the target geometry
/// V_j = U_j s + M_j that observed landmarks X_j are aligned onto.
struct LandmarkModel {
  Eigen::MatrixXd basis;        // 3J x K
  Eigen::VectorXd mean;         // 3J
  Eigen::VectorXd eigenvalues;  // K

  static LandmarkModel from_shape_model(const ShapeModel& model);
  /// Fixed target points and no deformation modes (K = 0).
  static LandmarkModel rigid(const Points3& targets);

  int n_landmarks() const { return static_cast<int>(mean.size() / 3); }
  int k() const { return static_cast<int>(basis.cols()); }
  /// U s + M as a 3 x J point matrix.
  Points3 vertices(const ShapeEmbedding& s) const;
};

/// Posterior G(omega_j; a, b_j) of the landmark precisions and their means.
struct GammaPosterior {
  double a = 0.0;
  Eigen::VectorXd b;
  Eigen::VectorXd weights;
};

struct RobustFitState {
  RigidSimilarity pose;
  ShapeEmbedding s;
  Mat3 sigma = Mat3::Identity();
  double mu = 1.0;
  Eigen::VectorXd weights;
  double a = 0.0;
  Eigen::VectorXd b;
};

struct FitResult {
  RobustFitState state;
  /// Y_j = rho R X_j + T at the returned pose.
  Points3 frontalized;
  int iterations = 0;
  /// False when max_iters was reached before the parameter change fell
  /// below epsilon. The result is still usable.
  bool converged = false;
  double objective = 0.0;
  /// Inlier proportion pi of the Gaussian-uniform mixture (GUM-EM only).
  double mixing = 1.0;
};

/// Previous-frame shape coefficients for the rigid-only refits of the
/// dynamic filter.
struct WarmStart {
  ShapeEmbedding s;
  /// Keep s fixed (no M-non-rigid step).
  bool skip_shape_step = true;
};

enum class CovarianceNormalization {
  /// sigma = (1/J) sum w_j e_j e_j^T (Student's t ECM).
  kLandmarkCount,
  /// sigma = sum w_j e_j e_j^T / sum w_j (mixture responsibilities).
  kWeightSum,
};

/// E_j = rho R X_j + T - (U_j s + M_j).
Vec3 residual(int j, const Points3& x, const RigidSimilarity& pose,
              const ShapeEmbedding& s, const LandmarkModel& model);
Points3 residuals(const Points3& x, const RigidSimilarity& pose,
                  const ShapeEmbedding& s, const LandmarkModel& model);

/// a = mu + 3/2, b_j = 1 + E_j^T sigma^-1 E_j / 2, w_j = a / b_j.
/// Throws NotPositiveDefiniteError if sigma is not SPD.
GammaPosterior estep_weights(const Points3& residuals, const Mat3& sigma,
                             double mu);

/// mu = digamma^-1(digamma(a) - mean_j log b_j).
double update_mu(double a, const Eigen::VectorXd& b);

struct WeightedCenters {
  Vec3 x_center;
  Vec3 v_center;
  Points3 x_centered;
  Points3 v_centered;
};

WeightedCenters weighted_centers(const Points3& x, const Points3& v,
                                 const Eigen::VectorXd& weights);

/// sqrt(sum w V'^T P V' / sum w (R X')^T P (R X')) with P = sigma^-1.
/// Independent of R when sigma = I.
double symmetric_scale(const Points3& x_centered, const Points3& v_centered,
                       const Eigen::VectorXd& weights, const Mat3& sigma,
                       const Mat3& rotation);

/// Minimizer over rho of sum w |V' - rho R X'|^2_sigma for fixed R.
double conditional_scale(const Points3& x_centered, const Points3& v_centered,
                         const Eigen::VectorXd& weights, const Mat3& sigma,
                         const Mat3& rotation);

/// sum_j w_j |V'_j - rho R X'_j|^2_sigma.
double weighted_procrustes_cost(const Points3& x_centered,
                                const Points3& v_centered,
                                const Eigen::VectorXd& weights,
                                const Mat3& sigma, double rho,
                                const UnitQuaternion& rotation);

struct RotationSolveResult {
  UnitQuaternion rotation;
  double cost = 0.0;
  int iterations = 0;
};

/// Minimizes weighted_procrustes_cost over unit quaternions by damped
/// Gauss-Newton on SO(3) with renormalization after every step, starting at
/// `start`. Only cost-decreasing steps are taken, so the returned cost never
/// exceeds the cost at `start`.
RotationSolveResult solve_weighted_rotation(
    const Points3& x_centered, const Points3& v_centered,
    const Eigen::VectorXd& weights, const Mat3& sigma, double rho,
    const UnitQuaternion& start, double tolerance = 1e-10,
    int max_iters = 50);

/// Conditional rigid update. Without `previous` (first call of a fit, sigma
/// = I): symmetric scale plus the closed-form rotation. With `previous`: the
/// conditional scale at the previous rotation, then the anisotropic rotation
/// solver warm-started there. Translation is T = V~ - rho R X~ in both cases.
/// Throws DegenerateConfigurationError when the weighted points have rank < 2.
RigidSimilarity mstep_rigid(const Points3& x, const Points3& v,
                            const Eigen::VectorXd& weights, const Mat3& sigma,
                            const std::optional<RigidSimilarity>& previous,
                            const FitConfig& config = {});

/// Weighted residual covariance, symmetrized and floored to stay SPD.
Mat3 mstep_covariance(
    const Points3& x, const Points3& v, const Eigen::VectorXd& weights,
    const RigidSimilarity& pose,
    CovarianceNormalization normalization =
        CovarianceNormalization::kLandmarkCount);

/// The variance floor added to the diagonal of a covariance estimate.
double covariance_floor(const Mat3& sigma);

/// Solves (sum w U_j^T P U_j + kappa Lambda^-1) s = sum w U_j^T P (Y_j - M_j)
/// with Y_j = rho R X_j + T and P = sigma^-1. Throws SingularSystemError when
/// the normal matrix is not positive definite.
ShapeEmbedding mstep_shape(const Points3& x, const RigidSimilarity& pose,
                           const Mat3& sigma, const Eigen::VectorXd& weights,
                           const LandmarkModel& model, double kappa);

/// Q = sum w |E_j|^2_sigma + J log|sigma| + kappa s^T Lambda^-1 s.
double objective_q(const Points3& x, const RobustFitState& state,
                   const LandmarkModel& model, double kappa);

/// One conditional M-sweep at fixed weights: (rho, T), then (R, T), then
/// sigma, then s (unless `shape_step` is false). Returns Q evaluated before
/// the sweep and after every conditional step.
std::vector<double> conditional_sweep(const Points3& x,
                                      const LandmarkModel& model,
                                      RobustFitState& state,
                                      const FitConfig& config, bool shape_step);

/// Robust frontalization: ECM under the generalized Student's t error model.
FitResult rff_fit(const Points3& x, const LandmarkModel& model,
                  const FitConfig& config,
                  const std::optional<WarmStart>& warm_start = std::nullopt);
FitResult rff_fit(const Points3& x, const ShapeModel& model,
                  const FitConfig& config,
                  const std::optional<WarmStart>& warm_start = std::nullopt);

/// Same ECM loop with every weight fixed to 1: full-covariance Gaussian.
FitResult gen_horn_fit(const Points3& x, const Points3& v,
                       const FitConfig& config);

struct GumOptions {
  /// Volume of the uniform outlier component. Defaults to the bounding box
  /// of the targets inflated 1.5x per axis.
  std::optional<double> volume;
  double pi_init = 0.9;
};

/// EM for a Gaussian + uniform mixture with responsibilities as weights.
FitResult gum_em_fit(const Points3& x, const Points3& v,
                     const FitConfig& config, const GumOptions& options = {});

double bounding_box_volume(const Points3& points, double inflate = 1.5);

}  // namespace morphfit
