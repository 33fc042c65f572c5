#include "morphfit/robust_fit.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "morphfit/errors.hpp"
#include "morphfit/special_functions.hpp"

namespace morphfit {

void FitConfig::validate() const {
  if (!(kappa >= 0.0) || !std::isfinite(kappa)) {
    throw std::invalid_argument("fit config: kappa must be >= 0");
  }
  if (!(epsilon > 0.0)) {
    throw std::invalid_argument("fit config: epsilon must be > 0");
  }
  if (max_iters < 1) {
    throw std::invalid_argument("fit config: max_iters must be >= 1");
  }
  if (!(mu_init > 0.0) || !std::isfinite(mu_init)) {
    throw std::invalid_argument("fit config: mu_init must be > 0");
  }
  if (!(rotation_tolerance > 0.0) || rotation_max_iters < 1) {
    throw std::invalid_argument("fit config: bad rotation solver settings");
  }
}

LandmarkModel LandmarkModel::from_shape_model(const ShapeModel& model) {
  LandmarkModel out;
  out.basis = model.landmark_basis();
  out.mean = model.landmark_mean();
  out.eigenvalues = model.eigenvalues;
  return out;
}

LandmarkModel LandmarkModel::rigid(const Points3& targets) {
  LandmarkModel out;
  out.mean = Eigen::Map<const Eigen::VectorXd>(targets.data(), targets.size());
  out.basis = Eigen::MatrixXd(out.mean.size(), 0);
  out.eigenvalues = Eigen::VectorXd(0);
  return out;
}

Points3 LandmarkModel::vertices(const ShapeEmbedding& s) const {
  Eigen::VectorXd v = mean;
  if (k() > 0) v.noalias() += basis * s;
  return Eigen::Map<const Points3>(v.data(), 3, n_landmarks());
}

namespace {

Eigen::LLT<Mat3> spd_factor(const Mat3& sigma) {
  Eigen::LLT<Mat3> llt(sigma);
  if (llt.info() != Eigen::Success || !sigma.allFinite()) {
    throw NotPositiveDefiniteError("covariance is not positive definite");
  }
  return llt;
}

Mat3 spd_inverse(const Mat3& sigma) {
  return spd_factor(sigma).solve(Mat3::Identity());
}

void check_embedding(const ShapeEmbedding& s, const LandmarkModel& model) {
  if (s.size() != model.k()) {
    throw std::invalid_argument("embedding length does not match the model");
  }
}

void check_rank(const Points3& centered, const Eigen::VectorXd& w) {
  Mat3 scatter = Mat3::Zero();
  for (Eigen::Index j = 0; j < centered.cols(); ++j) {
    scatter.noalias() += w(j) * centered.col(j) * centered.col(j).transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> eig(scatter, Eigen::EigenvaluesOnly);
  const Vec3 ev = eig.eigenvalues();
  if (!(ev(2) > 0.0) || ev(1) <= 1e-12 * ev(2)) {
    throw DegenerateConfigurationError(
        "weighted landmarks are collinear or coincident");
  }
}

// Pseudo-inverse of Lambda: zero for dimensions below the cutoff.
Eigen::VectorXd inverse_eigenvalues(const Eigen::VectorXd& eigenvalues) {
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(eigenvalues.size());
  if (eigenvalues.size() == 0) return inv;
  const double floor = kEigenvalueCutoff * eigenvalues.maxCoeff();
  for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) {
    if (eigenvalues(i) > floor && eigenvalues(i) > 0.0) {
      inv(i) = 1.0 / eigenvalues(i);
    }
  }
  return inv;
}

double parameter_change(const RobustFitState& before,
                        const RobustFitState& after) {
  double delta = std::abs(after.pose.rho - before.pose.rho) / after.pose.rho;
  delta = std::max(delta,
                   geodesic_angle(before.pose.rotation, after.pose.rotation));
  delta = std::max(delta,
                   (after.pose.translation - before.pose.translation).norm());
  if (after.s.size() > 0) delta = std::max(delta, (after.s - before.s).norm());
  return delta;
}

void sweep_impl(const Points3& x, const LandmarkModel& model,
                RobustFitState& state, const FitConfig& config,
                bool shape_step, CovarianceNormalization normalization,
                std::vector<double>* trace) {
  auto record = [&] {
    if (trace) trace->push_back(objective_q(x, state, model, config.kappa));
  };
  record();

  const Points3 v = model.vertices(state.s);
  const WeightedCenters c = weighted_centers(x, v, state.weights);
  check_rank(c.x_centered, state.weights);

  Mat3 r = state.pose.rotation_matrix();
  const double rho = conditional_scale(c.x_centered, c.v_centered,
                                       state.weights, state.sigma, r);
  // rho <= 0 means the cost is increasing on (0, inf); keep the old scale.
  if (rho > 0.0 && std::isfinite(rho)) state.pose.rho = rho;
  state.pose.translation = c.v_center - state.pose.rho * r * c.x_center;
  record();

  const RotationSolveResult rot = solve_weighted_rotation(
      c.x_centered, c.v_centered, state.weights, state.sigma, state.pose.rho,
      state.pose.rotation, config.rotation_tolerance,
      config.rotation_max_iters);
  state.pose.rotation = rot.rotation;
  r = state.pose.rotation_matrix();
  state.pose.translation = c.v_center - state.pose.rho * r * c.x_center;
  record();

  state.sigma = mstep_covariance(x, v, state.weights, state.pose, normalization);
  record();

  if (shape_step && model.k() > 0) {
    state.s = mstep_shape(x, state.pose, state.sigma, state.weights, model,
                          config.kappa);
    record();
  }
}

enum class WeightRule { kStudent, kFixed, kUniformMixture };

struct EngineOptions {
  WeightRule rule = WeightRule::kStudent;
  CovarianceNormalization normalization =
      CovarianceNormalization::kLandmarkCount;
  bool shape_step = true;
  double log_volume = 0.0;
  double pi = 0.9;
};

// Responsibilities of the Gaussian component, computed in log space.
Eigen::VectorXd responsibilities(const Points3& e, const Mat3& sigma, double pi,
                                 double log_volume) {
  const Eigen::LLT<Mat3> llt = spd_factor(sigma);
  const Mat3 l = llt.matrixL();
  const double log_det = 2.0 * l.diagonal().array().log().sum();
  const double log_norm = -1.5 * std::log(2.0 * std::numbers::pi) - 0.5 * log_det;
  const double log_pi = std::log(pi);
  const double log_out = std::log1p(-pi) - log_volume;
  Eigen::VectorXd r(e.cols());
  for (Eigen::Index j = 0; j < e.cols(); ++j) {
    const double m = llt.matrixL().solve(e.col(j)).squaredNorm();
    const double log_in = log_pi + log_norm - 0.5 * m;
    const double hi = std::max(log_in, log_out);
    if (hi == -std::numeric_limits<double>::infinity()) {
      r(j) = 0.0;
      continue;
    }
    r(j) = std::exp(log_in - hi) /
           (std::exp(log_in - hi) + std::exp(log_out - hi));
  }
  return r;
}

FitResult run_ecm(const Points3& x, const LandmarkModel& model,
                  const FitConfig& config, ShapeEmbedding s0,
                  EngineOptions options) {
  config.validate();
  const int j_count = model.n_landmarks();
  if (x.cols() != j_count) {
    throw std::invalid_argument("landmark count does not match the model");
  }
  if (j_count < 4) {
    throw std::invalid_argument("robust fit needs at least 4 landmarks");
  }
  if (!x.allFinite()) throw std::invalid_argument("landmarks must be finite");
  check_embedding(s0, model);

  RobustFitState state;
  state.s = std::move(s0);
  state.sigma = Mat3::Identity();
  state.mu = config.mu_init;
  state.weights = Eigen::VectorXd::Ones(j_count);

  // Initialization: sigma = I, unit weights, closed-form rotation, then T,
  // sigma and s.
  {
    const Points3 v = model.vertices(state.s);
    state.pose = mstep_rigid(x, v, state.weights, state.sigma, std::nullopt,
                             config);
    state.sigma =
        mstep_covariance(x, v, state.weights, state.pose, options.normalization);
    if (options.shape_step && model.k() > 0) {
      state.s = mstep_shape(x, state.pose, state.sigma, state.weights, model,
                            config.kappa);
    }
  }

  double pi = options.pi;
  FitResult result;
  for (int iter = 1; iter <= config.max_iters; ++iter) {
    const RobustFitState before = state;
    const Points3 e = residuals(x, state.pose, state.s, model);
    switch (options.rule) {
      case WeightRule::kStudent: {
        const GammaPosterior post = estep_weights(e, state.sigma, state.mu);
        state.weights = post.weights;
        state.a = post.a;
        state.b = post.b;
        state.mu = update_mu(post.a, post.b);
        break;
      }
      case WeightRule::kFixed:
        break;
      case WeightRule::kUniformMixture:
        state.weights =
            responsibilities(e, state.sigma, pi, options.log_volume);
        pi = state.weights.mean();
        if (!(state.weights.sum() > 0.0)) {
          throw DegenerateConfigurationError(
              "mixture assigned every landmark to the outlier component");
        }
        break;
    }
    sweep_impl(x, model, state, config, options.shape_step,
               options.normalization, nullptr);
    result.iterations = iter;
    if (parameter_change(before, state) <= config.epsilon) {
      result.converged = true;
      break;
    }
  }

  // Refresh the weights at the final parameters.
  const Points3 e = residuals(x, state.pose, state.s, model);
  switch (options.rule) {
    case WeightRule::kStudent: {
      const GammaPosterior post = estep_weights(e, state.sigma, state.mu);
      state.weights = post.weights;
      state.a = post.a;
      state.b = post.b;
      break;
    }
    case WeightRule::kFixed:
      state.a = std::numeric_limits<double>::quiet_NaN();
      state.b.resize(0);
      break;
    case WeightRule::kUniformMixture:
      state.weights = responsibilities(e, state.sigma, pi, options.log_volume);
      state.a = std::numeric_limits<double>::quiet_NaN();
      state.b.resize(0);
      break;
  }

  result.objective = objective_q(x, state, model, config.kappa);
  result.frontalized = apply_similarity(state.pose, x);
  result.mixing = pi;
  result.state = std::move(state);
  return result;
}

}  // namespace

Vec3 residual(int j, const Points3& x, const RigidSimilarity& pose,
              const ShapeEmbedding& s, const LandmarkModel& model) {
  if (j < 0 || j >= model.n_landmarks() || j >= x.cols()) {
    throw std::out_of_range("residual: landmark index out of range");
  }
  check_embedding(s, model);
  Vec3 v = model.mean.segment<3>(3 * j);
  if (model.k() > 0) v.noalias() += model.basis.middleRows<3>(3 * j) * s;
  return apply_similarity(pose, Vec3(x.col(j))) - v;
}

Points3 residuals(const Points3& x, const RigidSimilarity& pose,
                  const ShapeEmbedding& s, const LandmarkModel& model) {
  check_embedding(s, model);
  if (x.cols() != model.n_landmarks()) {
    throw std::invalid_argument("residuals: landmark count mismatch");
  }
  return apply_similarity(pose, x) - model.vertices(s);
}

GammaPosterior estep_weights(const Points3& residuals, const Mat3& sigma,
                             double mu) {
  const Eigen::LLT<Mat3> llt = spd_factor(sigma);
  GammaPosterior post;
  post.a = mu + 1.5;
  post.b.resize(residuals.cols());
  post.weights.resize(residuals.cols());
  for (Eigen::Index j = 0; j < residuals.cols(); ++j) {
    const double m = llt.matrixL().solve(residuals.col(j)).squaredNorm();
    post.b(j) = 1.0 + 0.5 * m;
    post.weights(j) = post.a / post.b(j);
  }
  return post;
}

double update_mu(double a, const Eigen::VectorXd& b) {
  if (!(a > 0.0)) throw std::invalid_argument("update_mu: a must be > 0");
  if (b.size() == 0 || (b.array() <= 0.0).any()) {
    throw std::invalid_argument("update_mu: b must be non-empty and positive");
  }
  const double mean_log_b = b.array().log().mean();
  return inverse_digamma(digamma(a) - mean_log_b);
}

WeightedCenters weighted_centers(const Points3& x, const Points3& v,
                                 const Eigen::VectorXd& weights) {
  if (x.cols() != v.cols() || x.cols() != weights.size()) {
    throw std::invalid_argument("weighted_centers: size mismatch");
  }
  const double wsum = weights.sum();
  if (!(wsum > 0.0)) {
    throw DegenerateConfigurationError("all landmark weights are zero");
  }
  WeightedCenters c;
  c.x_center = (x * weights) / wsum;
  c.v_center = (v * weights) / wsum;
  c.x_centered = x.colwise() - c.x_center;
  c.v_centered = v.colwise() - c.v_center;
  return c;
}

double symmetric_scale(const Points3& x_centered, const Points3& v_centered,
                       const Eigen::VectorXd& weights, const Mat3& sigma,
                       const Mat3& rotation) {
  const Mat3 p = spd_inverse(sigma);
  const Points3 rx = rotation * x_centered;
  double num = 0.0;
  double den = 0.0;
  for (Eigen::Index j = 0; j < rx.cols(); ++j) {
    num += weights(j) * v_centered.col(j).dot(p * v_centered.col(j));
    den += weights(j) * rx.col(j).dot(p * rx.col(j));
  }
  return std::sqrt(num / den);
}

double conditional_scale(const Points3& x_centered, const Points3& v_centered,
                         const Eigen::VectorXd& weights, const Mat3& sigma,
                         const Mat3& rotation) {
  const Mat3 p = spd_inverse(sigma);
  const Points3 rx = rotation * x_centered;
  double num = 0.0;
  double den = 0.0;
  for (Eigen::Index j = 0; j < rx.cols(); ++j) {
    const Vec3 prx = p * rx.col(j);
    num += weights(j) * v_centered.col(j).dot(prx);
    den += weights(j) * rx.col(j).dot(prx);
  }
  return num / den;
}

double weighted_procrustes_cost(const Points3& x_centered,
                                const Points3& v_centered,
                                const Eigen::VectorXd& weights,
                                const Mat3& sigma, double rho,
                                const UnitQuaternion& rotation) {
  const Mat3 p = spd_inverse(sigma);
  const Mat3 sr = rho * rotation.matrix();
  double cost = 0.0;
  for (Eigen::Index j = 0; j < x_centered.cols(); ++j) {
    const Vec3 r = v_centered.col(j) - sr * x_centered.col(j);
    cost += weights(j) * r.dot(p * r);
  }
  return cost;
}

RotationSolveResult solve_weighted_rotation(
    const Points3& x_centered, const Points3& v_centered,
    const Eigen::VectorXd& weights, const Mat3& sigma, double rho,
    const UnitQuaternion& start, double tolerance, int max_iters) {
  const Mat3 p = spd_inverse(sigma);
  auto cost_of = [&](const UnitQuaternion& q) {
    const Mat3 sr = rho * q.matrix();
    double c = 0.0;
    for (Eigen::Index j = 0; j < x_centered.cols(); ++j) {
      const Vec3 r = v_centered.col(j) - sr * x_centered.col(j);
      c += weights(j) * r.dot(p * r);
    }
    return c;
  };

  RotationSolveResult out;
  out.rotation = start;
  out.cost = cost_of(start);
  double damping = 1e-6;

  for (int iter = 0; iter < max_iters; ++iter) {
    out.iterations = iter + 1;
    // Right perturbation R exp([d]x): dr_j/dd = rho R [X'_j]x.
    const Mat3 r_mat = out.rotation.matrix();
    Mat3 h = Mat3::Zero();
    Vec3 g = Vec3::Zero();
    for (Eigen::Index j = 0; j < x_centered.cols(); ++j) {
      const Vec3 xj = x_centered.col(j);
      Mat3 skew;
      skew << 0.0, -xj.z(), xj.y(), xj.z(), 0.0, -xj.x(), -xj.y(), xj.x(), 0.0;
      const Mat3 jac = rho * r_mat * skew;
      const Vec3 res = v_centered.col(j) - rho * r_mat * xj;
      const Mat3 jp = jac.transpose() * p;
      h.noalias() += weights(j) * jp * jac;
      g.noalias() += weights(j) * jp * res;
    }

    bool accepted = false;
    Vec3 step = Vec3::Zero();
    while (damping < 1e10) {
      Mat3 damped = h;
      damped.diagonal() += damping * h.diagonal().cwiseMax(1e-300);
      step = -damped.ldlt().solve(g);
      if (!step.allFinite()) {
        damping *= 10.0;
        continue;
      }
      const UnitQuaternion candidate =
          out.rotation * UnitQuaternion::from_rotation_vector(step);
      const double c = cost_of(candidate);
      if (c < out.cost) {
        out.rotation = candidate;
        out.cost = c;
        damping = std::max(damping * 0.1, 1e-12);
        accepted = true;
        break;
      }
      damping *= 10.0;
      if (step.norm() < tolerance) break;
    }
    if (!accepted || step.norm() < tolerance) break;
  }
  return out;
}

RigidSimilarity mstep_rigid(const Points3& x, const Points3& v,
                            const Eigen::VectorXd& weights, const Mat3& sigma,
                            const std::optional<RigidSimilarity>& previous,
                            const FitConfig& config) {
  const WeightedCenters c = weighted_centers(x, v, weights);
  check_rank(c.x_centered, weights);

  RigidSimilarity pose;
  if (!previous) {
    Mat3 cross = Mat3::Zero();
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      cross.noalias() +=
          weights(j) * c.x_centered.col(j) * c.v_centered.col(j).transpose();
    }
    pose.rotation = horn_rotation(cross);
    pose.rho = symmetric_scale(c.x_centered, c.v_centered, weights, sigma,
                               pose.rotation_matrix());
  } else {
    pose = *previous;
    const double rho = conditional_scale(c.x_centered, c.v_centered, weights,
                                         sigma, pose.rotation_matrix());
    if (rho > 0.0 && std::isfinite(rho)) pose.rho = rho;
    pose.rotation =
        solve_weighted_rotation(c.x_centered, c.v_centered, weights, sigma,
                                pose.rho, pose.rotation,
                                config.rotation_tolerance,
                                config.rotation_max_iters)
            .rotation;
  }
  if (!(pose.rho > 0.0) || !std::isfinite(pose.rho)) {
    throw DegenerateConfigurationError("target landmarks have no spread");
  }
  pose.translation = c.v_center - pose.rho * pose.rotation.rotate(c.x_center);
  return pose;
}

double covariance_floor(const Mat3& sigma) {
  return std::max(1e-9 * sigma.trace() / 3.0, 1e-12);
}

Mat3 mstep_covariance(const Points3& x, const Points3& v,
                      const Eigen::VectorXd& weights,
                      const RigidSimilarity& pose,
                      CovarianceNormalization normalization) {
  if (x.cols() != v.cols() || x.cols() != weights.size()) {
    throw std::invalid_argument("mstep_covariance: size mismatch");
  }
  const Points3 e = v - apply_similarity(pose, x);
  Mat3 sigma = Mat3::Zero();
  for (Eigen::Index j = 0; j < e.cols(); ++j) {
    sigma.noalias() += weights(j) * e.col(j) * e.col(j).transpose();
  }
  const double denom = normalization == CovarianceNormalization::kLandmarkCount
                           ? static_cast<double>(e.cols())
                           : weights.sum();
  if (denom > 0.0) sigma /= denom;
  sigma = 0.5 * (sigma + sigma.transpose()).eval();
  sigma.diagonal().array() += covariance_floor(sigma);
  return sigma;
}

ShapeEmbedding mstep_shape(const Points3& x, const RigidSimilarity& pose,
                           const Mat3& sigma, const Eigen::VectorXd& weights,
                           const LandmarkModel& model, double kappa) {
  const int k = model.k();
  if (k == 0) return ShapeEmbedding(0);
  if (kappa < 0.0) throw std::invalid_argument("mstep_shape: kappa < 0");
  if (x.cols() != model.n_landmarks() || weights.size() != x.cols()) {
    throw std::invalid_argument("mstep_shape: size mismatch");
  }
  const Mat3 p = spd_inverse(sigma);
  const Points3 y = apply_similarity(pose, x);

  Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(k, k);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const auto uj = model.basis.middleRows(3 * j, 3);
    const Eigen::MatrixXd ujt_p = uj.transpose() * p;
    normal.noalias() += weights(j) * ujt_p * uj;
    rhs.noalias() +=
        weights(j) * ujt_p * (y.col(j) - model.mean.segment<3>(3 * j));
  }
  normal.diagonal() += kappa * inverse_eigenvalues(model.eigenvalues);

  Eigen::LLT<Eigen::MatrixXd> llt(normal);
  if (llt.info() != Eigen::Success) {
    throw SingularSystemError("shape normal matrix is singular");
  }
  const Eigen::VectorXd d = Eigen::MatrixXd(llt.matrixL()).diagonal();
  if (d.minCoeff() <= 1e-10 * d.maxCoeff()) {
    throw SingularSystemError("shape normal matrix is singular");
  }
  return llt.solve(rhs);
}

double objective_q(const Points3& x, const RobustFitState& state,
                   const LandmarkModel& model, double kappa) {
  const Eigen::LLT<Mat3> llt = spd_factor(state.sigma);
  const Points3 e = residuals(x, state.pose, state.s, model);
  double q = 0.0;
  for (Eigen::Index j = 0; j < e.cols(); ++j) {
    q += state.weights(j) * llt.matrixL().solve(e.col(j)).squaredNorm();
  }
  const Mat3 l = llt.matrixL();
  q += static_cast<double>(e.cols()) * 2.0 * l.diagonal().array().log().sum();
  if (model.k() > 0) {
    q += kappa * state.s.cwiseAbs2().dot(inverse_eigenvalues(model.eigenvalues));
  }
  return q;
}

std::vector<double> conditional_sweep(const Points3& x,
                                      const LandmarkModel& model,
                                      RobustFitState& state,
                                      const FitConfig& config,
                                      bool shape_step) {
  std::vector<double> trace;
  sweep_impl(x, model, state, config, shape_step,
             CovarianceNormalization::kLandmarkCount, &trace);
  return trace;
}

FitResult rff_fit(const Points3& x, const LandmarkModel& model,
                  const FitConfig& config,
                  const std::optional<WarmStart>& warm_start) {
  EngineOptions options;
  options.rule = WeightRule::kStudent;
  ShapeEmbedding s0 = ShapeEmbedding::Zero(model.k());
  if (warm_start) {
    s0 = warm_start->s;
    options.shape_step = !warm_start->skip_shape_step;
  }
  return run_ecm(x, model, config, std::move(s0), options);
}

FitResult rff_fit(const Points3& x, const ShapeModel& model,
                  const FitConfig& config,
                  const std::optional<WarmStart>& warm_start) {
  return rff_fit(x, LandmarkModel::from_shape_model(model), config, warm_start);
}

FitResult gen_horn_fit(const Points3& x, const Points3& v,
                       const FitConfig& config) {
  EngineOptions options;
  options.rule = WeightRule::kFixed;
  options.shape_step = false;
  return run_ecm(x, LandmarkModel::rigid(v), config, ShapeEmbedding(0),
                 options);
}

double bounding_box_volume(const Points3& points, double inflate) {
  const Vec3 extent = points.rowwise().maxCoeff() - points.rowwise().minCoeff();
  return (inflate * extent).prod();
}

FitResult gum_em_fit(const Points3& x, const Points3& v,
                     const FitConfig& config, const GumOptions& options) {
  const double volume = options.volume.value_or(bounding_box_volume(v));
  if (!(volume > 0.0)) {
    throw std::invalid_argument("gum_em: uniform volume must be positive");
  }
  if (!(options.pi_init > 0.0 && options.pi_init <= 1.0)) {
    throw std::invalid_argument("gum_em: pi_init must lie in (0, 1]");
  }
  EngineOptions engine;
  engine.rule = WeightRule::kUniformMixture;
  engine.normalization = CovarianceNormalization::kWeightSum;
  engine.shape_step = false;
  engine.log_volume = std::log(volume);
  engine.pi = options.pi_init;
  return run_ecm(x, LandmarkModel::rigid(v), config, ShapeEmbedding(0), engine);
}

}  // namespace morphfit
