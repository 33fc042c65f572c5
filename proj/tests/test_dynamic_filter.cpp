#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <cmath>
#include <numbers>
#include <random>

#include "morphfit/dynamic_filter.hpp"
#include "morphfit/errors.hpp"

using namespace morphfit;

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

Mat random_matrix(std::mt19937_64& rng, int r, int c) {
  std::normal_distribution<double> n;
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = n(rng);
  return m;
}

Vec random_vector(std::mt19937_64& rng, int n) {
  return random_matrix(rng, n, 1);
}

Mat random_spd(std::mt19937_64& rng, int n, double scale) {
  const Mat a = random_matrix(rng, n, n);
  return scale * (a * a.transpose() / n + 0.2 * Mat::Identity(n, n));
}

DlLdsParams random_params(std::mt19937_64& rng, int k, int j) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  DlLdsParams p;
  p.gamma_s = random_spd(rng, k + 1, 0.5);
  p.gamma_v = random_spd(rng, 3 * j, 0.5);
  p.w = random_matrix(rng, 3 * j, k + 1);
  p.alpha = u(rng);
  return p;
}

double log_normal(const Vec& x, const Vec& mean, const Mat& cov) {
  const Eigen::LLT<Mat> llt(cov);
  const Vec r = x - mean;
  const double logdet =
      2.0 * Mat(llt.matrixL()).diagonal().array().log().sum();
  return -0.5 * (x.size() * std::log(2.0 * std::numbers::pi) + logdet +
                 r.dot(llt.solve(r)));
}

// Product of the two conditional transition densities.
double factored_log_density(const DlLdsParams& p, const Vec& z_t,
                            const Vec& z_prev) {
  const int ks = p.k() + 1;
  const int m = 3 * p.n_landmarks();
  const Vec s_t = z_t.head(ks);
  const Vec v_t = z_t.tail(m);
  const Vec s_p = z_prev.head(ks);
  const Vec v_p = z_prev.tail(m);
  return log_normal(s_t, s_p, p.gamma_s) +
         log_normal(v_t, p.alpha * v_p + (1.0 - p.alpha) * p.w * s_t,
                    p.gamma_v);
}

// One step of the LDS by brute force: the joint Gaussian of
// (Z_{t-1}, Z_t, Y_t) from the generative equations, conditioned on Y_t.
struct DenseStep {
  Vec mean;
  Mat cov;
};

// Evaluated in extended precision: the joint covariance is larger and worse
// conditioned than anything the filter itself forms.
DenseStep dense_condition(const DlLdsParams& p, const Vec& nu, const Mat& psi,
                          const Vec& y, const Mat& sigma) {
  using LMat = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  using LVec = Eigen::Matrix<long double, Eigen::Dynamic, 1>;
  const int ks = p.k() + 1;
  const int m = 3 * p.n_landmarks();
  const int d = ks + m;
  const int n_in = d + ks + m + m;
  const long double a = p.alpha;
  const long double b = 1.0L - a;
  const LMat w = p.w.cast<long double>();

  // Inputs u = [Z_{t-1}; e_S; e_V; e_Y].
  LVec mu_u = LVec::Zero(n_in);
  mu_u.head(d) = nu.cast<long double>();
  LMat cov_u = LMat::Zero(n_in, n_in);
  cov_u.block(0, 0, d, d) = psi.cast<long double>();
  cov_u.block(d, d, ks, ks) = p.gamma_s.cast<long double>();
  cov_u.block(d + ks, d + ks, m, m) = p.gamma_v.cast<long double>();
  cov_u.block(d + ks + m, d + ks + m, m, m) = sigma.cast<long double>();

  // Outputs [Z_{t-1}; S_t; V_t; Y_t].
  LMat l = LMat::Zero(d + d + m, n_in);
  l.block(0, 0, d, d).setIdentity();
  // S_t = S_{t-1} + e_S
  l.block(d, 0, ks, ks).setIdentity();
  l.block(d, d, ks, ks).setIdentity();
  // V_t = a V_{t-1} + b W S_{t-1} + b W e_S + e_V
  l.block(d + ks, ks, m, m) = a * LMat::Identity(m, m);
  l.block(d + ks, 0, m, ks) = b * w;
  l.block(d + ks, d, m, ks) = b * w;
  l.block(d + ks, d + ks, m, m).setIdentity();
  // Y_t = V_t + e_Y
  l.block(2 * d, 0, m, n_in) = l.block(d + ks, 0, m, n_in);
  l.block(2 * d, d + ks + m, m, m).setIdentity();

  const LVec mu = l * mu_u;
  const LMat cov = l * cov_u * l.transpose();
  const LMat c_zy = cov.block(d, 2 * d, d, m);
  const LMat c_yy = cov.block(2 * d, 2 * d, m, m);
  const Eigen::FullPivLU<LMat> lu(c_yy);
  DenseStep out;
  out.mean = (mu.segment(d, d) +
              c_zy * lu.solve(LVec(y.cast<long double>() - mu.tail(m))))
                 .cast<double>();
  out.cov = (cov.block(d, d, d, d) - c_zy * lu.solve(LMat(c_zy.transpose())))
                .cast<double>();
  return out;
}

// Generic textbook Kalman filter with explicitly written F and Q.
struct TextbookKalman {
  Mat f, q, h;
  Vec x;
  Mat p;

  void step(const Vec& y, const Mat& r) {
    const Vec xp = f * x;
    const Mat pp = f * p * f.transpose() + q;
    const Mat s = h * pp * h.transpose() + r;
    const Mat k = pp * h.transpose() * s.inverse();
    x = xp + k * (y - h * xp);
    p = (Mat::Identity(x.size(), x.size()) - k * h) * pp;
  }
};

}  // namespace

TEST_CASE("joint dynamics structure") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const DlLdsParams p = random_params(rng, 2, 3);
    const JointDynamics dyn = assemble_joint_dynamics(p);
    const int ks = 3;
    const int m = 9;
    const double b = 1.0 - p.alpha;

    // Closed-form covariance and transition of the stacked process.
    Mat gamma(ks + m, ks + m);
    gamma << p.gamma_s, b * p.gamma_s * p.w.transpose(), b * p.w * p.gamma_s,
        p.gamma_v + b * b * p.w * p.gamma_s * p.w.transpose();
    Mat f = Mat::Zero(ks + m, ks + m);
    f.topLeftCorner(ks, ks).setIdentity();
    f.bottomLeftCorner(m, ks) = b * p.w;
    f.bottomRightCorner(m, m) = p.alpha * Mat::Identity(m, m);

    CHECK((dyn.gamma - gamma).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((dyn.f - f).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((dyn.gamma * dyn.gamma_inv - Mat::Identity(ks + m, ks + m))
              .cwiseAbs()
              .maxCoeff() < 1e-10);
    CHECK((dyn.gamma - dyn.gamma.transpose()).norm() == 0.0);

    // Reassembled inverse blocks.
    const Mat gs_inv = p.gamma_s.inverse();
    const Mat gv_inv = p.gamma_v.inverse();
    CHECK((dyn.gamma_inv.topLeftCorner(ks, ks) -
           (gs_inv + b * b * p.w.transpose() * gv_inv * p.w))
              .cwiseAbs()
              .maxCoeff() < 1e-10);
    CHECK((dyn.gamma_inv.topRightCorner(ks, m) + b * p.w.transpose() * gv_inv)
              .cwiseAbs()
              .maxCoeff() < 1e-10);
    CHECK((dyn.gamma_inv.bottomRightCorner(m, m) - gv_inv).cwiseAbs().maxCoeff() <
          1e-10);
    CHECK((dyn.a.topRightCorner(ks, m) +
           p.alpha * b * p.w.transpose() * gv_inv)
              .cwiseAbs()
              .maxCoeff() < 1e-10);
    CHECK(dyn.a.bottomLeftCorner(m, ks).norm() == 0.0);
  }
}

TEST_CASE("alpha limits") {
  std::mt19937_64 rng(2);
  DlLdsParams p = random_params(rng, 2, 3);
  p.alpha = 1.0;
  JointDynamics dyn = assemble_joint_dynamics(p);
  CHECK(dyn.gamma_inv.topRightCorner(3, 9).norm() == 0.0);
  CHECK(dyn.a.topRightCorner(3, 9).norm() == 0.0);
  CHECK((dyn.f.bottomRightCorner(9, 9) - Mat::Identity(9, 9)).cwiseAbs().maxCoeff() <
        1e-12);
  CHECK(dyn.f.bottomLeftCorner(9, 3).cwiseAbs().maxCoeff() < 1e-12);

  p.alpha = 0.0;
  dyn = assemble_joint_dynamics(p);
  CHECK(dyn.a.bottomRightCorner(9, 9).norm() == 0.0);
  CHECK(dyn.f.bottomRightCorner(9, 9).cwiseAbs().maxCoeff() < 1e-12);

  p.alpha = 1.5;
  CHECK_THROWS_AS(assemble_joint_dynamics(p), std::invalid_argument);
  p.alpha = 0.5;
  p.gamma_v(0, 0) = -10.0;
  CHECK_THROWS_AS(assemble_joint_dynamics(p), NotPositiveDefiniteError);
}

TEST_CASE("transition density factorizes") {
  std::mt19937_64 rng(3);
  double worst = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    const DlLdsParams p = random_params(rng, 2, 3);
    const JointDynamics dyn = assemble_joint_dynamics(p);
    for (int i = 0; i < 100; ++i) {
      const Vec z_prev = random_vector(rng, 12);
      const Vec z_t = random_vector(rng, 12);
      const double joint = log_normal(z_t, dyn.f * z_prev, dyn.gamma);
      worst = std::max(worst,
                       std::abs(joint - factored_log_density(p, z_t, z_prev)));
    }
  }
  CHECK(worst < 1e-8);
}

TEST_CASE("predict") {
  std::mt19937_64 rng(4);
  const DlLdsParams p = random_params(rng, 2, 3);
  JointDynamics dyn = assemble_joint_dynamics(p);
  FilterState st;
  st.nu = random_vector(rng, 12);
  st.psi = Mat::Zero(12, 12);
  Prediction pr = predict(st, dyn);
  CHECK((pr.p - dyn.gamma).cwiseAbs().maxCoeff() < 1e-14);

  JointDynamics zero = dyn;
  zero.f.setZero();
  st.psi = random_spd(rng, 12, 1.0);
  pr = predict(st, zero);
  CHECK(pr.mean.norm() == 0.0);
  CHECK((pr.p - dyn.gamma).cwiseAbs().maxCoeff() < 1e-14);

  // Oracle: marginal of Z_t from the generative equations.
  const DenseStep dense = dense_condition(
      p, st.nu, st.psi, Vec::Zero(9), 1e12 * Mat::Identity(9, 9));
  pr = predict(st, dyn);
  CHECK((pr.mean - dense.mean).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((pr.p - dense.cov).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("kalman step limits") {
  std::mt19937_64 rng(5);
  const DlLdsParams p = random_params(rng, 2, 3);
  const JointDynamics dyn = assemble_joint_dynamics(p);
  FilterState st;
  st.nu = random_vector(rng, 12);
  st.psi = random_spd(rng, 12, 1.0);
  const Vec y = random_vector(rng, 9);

  const KalmanStepResult exact =
      kalman_step(st, dyn, y, 1e-12 * Mat::Identity(9, 9));
  CHECK((exact.state.nu.tail(9) - y).cwiseAbs().maxCoeff() < 1e-5);
  CHECK(std::isfinite(exact.log_likelihood));

  JointDynamics still = dyn;
  still.gamma.setZero();
  FilterState certain = st;
  certain.psi.setZero();
  const KalmanStepResult none =
      kalman_step(certain, still, y, Mat::Identity(9, 9));
  CHECK((none.state.nu - dyn.f * st.nu).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(none.state.psi.norm() == 0.0);

  Mat bad = -Mat::Identity(9, 9) * 100.0;
  CHECK_THROWS_AS(kalman_step(st, dyn, y, bad), NotPositiveDefiniteError);
  CHECK_THROWS_AS(kalman_step(st, dyn, Vec::Zero(6), Mat::Identity(9, 9)),
                  std::invalid_argument);
}

TEST_CASE("kalman recursion matches dense conditioning and textbook filter") {
  std::mt19937_64 rng(6);
  double worst_mean = 0.0;
  double worst_cov = 0.0;
  double worst_text = 0.0;
  double worst_sym = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    const int k = 2;
    const int j = 3;
    const DlLdsParams p = random_params(rng, k, j);
    const JointDynamics dyn = assemble_joint_dynamics(p);
    const double b = 1.0 - p.alpha;

    FilterState st = initialize(random_vector(rng, k), p.w);
    Vec nu = st.nu;
    Mat psi = st.psi;

    TextbookKalman tk;
    tk.f = Mat::Zero(12, 12);
    tk.f.topLeftCorner(3, 3).setIdentity();
    tk.f.bottomLeftCorner(9, 3) = b * p.w;
    tk.f.bottomRightCorner(9, 9) = p.alpha * Mat::Identity(9, 9);
    tk.q.resize(12, 12);
    tk.q << p.gamma_s, b * p.gamma_s * p.w.transpose(), b * p.w * p.gamma_s,
        p.gamma_v + b * b * p.w * p.gamma_s * p.w.transpose();
    tk.h = Mat::Zero(9, 12);
    tk.h.rightCols(9).setIdentity();
    tk.x = st.nu;
    tk.p = st.psi;

    for (int t = 0; t < 20; ++t) {
      const Vec y = random_vector(rng, 9);
      Mat sigma = kron_identity(Mat3(random_spd(rng, 3, 0.3)), j);
      if (t % 2 == 1) sigma = random_spd(rng, 9, 0.3);
      const KalmanStepResult r = kalman_step(st, dyn, y, sigma);
      const DenseStep d = dense_condition(p, nu, psi, y, sigma);
      tk.step(y, sigma);
      worst_mean = std::max(worst_mean,
                            (r.state.nu - d.mean).cwiseAbs().maxCoeff());
      worst_cov = std::max(worst_cov,
                           (r.state.psi - d.cov).cwiseAbs().maxCoeff());
      worst_text = std::max(worst_text,
                            (r.state.nu - tk.x).cwiseAbs().maxCoeff());
      worst_text = std::max(worst_text,
                            (r.state.psi - tk.p).cwiseAbs().maxCoeff());
      worst_sym = std::max(
          worst_sym, (r.state.psi - r.state.psi.transpose()).cwiseAbs().maxCoeff());

      // Predictive likelihood against the dense marginal of Y_t.
      const Prediction pr = predict(st, dyn);
      const double ll = log_normal(y, pr.mean.tail(9),
                                   pr.p.bottomRightCorner(9, 9) + sigma);
      CHECK(r.log_likelihood == doctest::Approx(ll).epsilon(1e-10));

      st = r.state;
      nu = d.mean;
      psi = d.cov;
    }
  }
  CHECK(worst_mean < 1e-8);
  CHECK(worst_cov < 1e-8);
  CHECK(worst_text < 1e-8);
  CHECK(worst_sym < 1e-10);
}

TEST_CASE("initialize and extract") {
  const SyntheticModel synth = generate_synthetic_model(50, 4, 10, 3);
  const LandmarkModel model = LandmarkModel::from_shape_model(synth.model);
  const Mat w = reconstruction_matrix(model);
  CHECK(w.rows() == 30);
  CHECK(w.cols() == 5);

  const FilterState zero = initialize(ShapeEmbedding::Zero(4), w);
  CHECK(zero.nu.head(4).norm() == 0.0);
  CHECK(zero.nu(4) == 1.0);
  CHECK((zero.nu.tail(30) - model.mean).norm() == 0.0);
  CHECK(zero.psi == Mat::Identity(35, 35));
  CHECK(zero.p == Mat::Identity(35, 35));

  std::mt19937_64 rng(7);
  const ShapeEmbedding s1 = synth.sampler(rng);
  const FilterState st = initialize(s1, w);
  const ExtractedState ex = extract_state(st, 4);
  CHECK(ex.s == s1);
  CHECK((ex.v - model.vertices(s1)).cwiseAbs().maxCoeff() < 1e-15);

  JointDynamics dyn;
  dyn.k = 4;
  dyn.n_landmarks = 10;
  const Mat c = dyn.c();
  const Mat cb = dyn.c_bar();
  CHECK(c.rows() == 30);
  CHECK(cb.rows() == 4);
  CHECK((c * cb.transpose()).norm() == 0.0);
  CHECK((c * st.nu - st.nu.tail(30)).norm() == 0.0);
  CHECK((cb * st.nu - s1).norm() == 0.0);
}

TEST_CASE("pinning the homogeneous coordinate") {
  std::mt19937_64 rng(8);
  FilterState st;
  st.nu = random_vector(rng, 8);
  st.psi = random_spd(rng, 8, 1.0);
  const int h = 2;
  // Oracle: conditioning N(nu, psi) on z_h = 1.
  const Vec expected =
      st.nu + st.psi.col(h) * (1.0 - st.nu(h)) / st.psi(h, h);
  const Mat expected_cov =
      st.psi - st.psi.col(h) * st.psi.row(h) / st.psi(h, h);
  pin_homogeneous(st, h);
  CHECK(st.nu(h) == 1.0);
  CHECK((st.nu - expected).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((st.psi - expected_cov).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(st.psi.row(h).norm() == 0.0);
}

namespace {

struct Sequence {
  std::vector<Points3> x;
  std::vector<Points3> truth;
};

Sequence make_sequence(std::mt19937_64& rng, const SyntheticModel& synth,
                       int frames, double drift, double noise) {
  const LandmarkModel model = LandmarkModel::from_shape_model(synth.model);
  std::normal_distribution<double> nd;
  ShapeEmbedding s = 0.5 * synth.sampler(rng);
  Sequence seq;
  for (int t = 0; t < frames; ++t) {
    s += drift * synth.model.eigenvalues.cwiseSqrt().cwiseProduct(
                     random_vector(rng, synth.model.k()));
    const Points3 v = model.vertices(s);
    RigidSimilarity pose;
    pose.rotation = UnitQuaternion::from_rotation_vector(
        Vec3(0.2 * std::sin(0.1 * t), 0.3 * std::cos(0.07 * t), 0.05));
    pose.rho = 1.2;
    pose.translation = Vec3(0.1 * t / frames, -0.2, 0.3);
    Points3 noisy = v;
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
      noisy.col(j) += noise * Vec3(nd(rng), nd(rng), nd(rng));
    }
    seq.x.push_back(apply_similarity(invert_similarity(pose), noisy));
    seq.truth.push_back(v);
  }
  return seq;
}

}  // namespace

TEST_CASE("dff_track on a static noiseless scene") {
  const SyntheticModel synth = generate_synthetic_model(60, 4, 15, 9);
  const LandmarkModel model = LandmarkModel::from_shape_model(synth.model);
  RigidSimilarity pose;
  pose.rotation = UnitQuaternion::from_rotation_vector(Vec3(0.1, 0.2, -0.1));
  pose.rho = 0.8;

  // The mean shape is a fixed point of the regularized fit, so every frame
  // observes exactly W S_1.
  const ShapeEmbedding s = ShapeEmbedding::Zero(4);
  {
    const DffConfig cfg;
    const Points3 x =
        apply_similarity(invert_similarity(pose), model.vertices(s));
    const std::vector<Points3> frames(10, x);
    const DffResult r = dff_track(frames, model, cfg);
    REQUIRE(r.frames.size() == 10);
    for (const DffFrame& f : r.frames) {
      CHECK((f.s - r.frames.front().s).cwiseAbs().maxCoeff() < 1e-6);
      CHECK((f.v - r.frames.front().v).cwiseAbs().maxCoeff() < 1e-6);
      CHECK(std::isfinite(f.log_likelihood));
    }
    CHECK((r.frames.front().s - s).norm() < 1e-6);
  }
}

TEST_CASE("homogeneous coordinate stays pinned over 100 frames") {
  const SyntheticModel synth = generate_synthetic_model(60, 4, 15, 11);
  const LandmarkModel model = LandmarkModel::from_shape_model(synth.model);
  std::mt19937_64 rng(12);
  const Sequence seq = make_sequence(rng, synth, 100, 0.02, 0.01);

  DffConfig cfg;
  const DffResult r = dff_track(seq.x, model, cfg);
  // Rebuild the homogeneous entry by replaying the filter.
  const JointDynamics dyn = assemble_joint_dynamics(r.params);
  const int k = model.k();
  FilterState st = initialize(r.frames.front().s, r.params.w);
  pin_homogeneous(st, k);
  double drift = 0.0;
  for (std::size_t t = 1; t < r.frames.size(); ++t) {
    const Points3& y = r.frames[t].frontalized;
    st = kalman_step(st, dyn, Eigen::Map<const Vec>(y.data(), y.size()),
                     kron_identity(r.frames[t].sigma, model.n_landmarks()))
             .state;
    drift = std::max(drift, std::abs(st.nu(k) - 1.0));
    CHECK((st.nu.head(k) - r.frames[t].s).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((st.psi - st.psi.transpose()).cwiseAbs().maxCoeff() < 1e-10);
  }
  CHECK(drift < 1e-6);
}

TEST_CASE("filtering reduces landmark error on drifting sequences") {
  const SyntheticModel synth = generate_synthetic_model(80, 6, 20, 13);
  const LandmarkModel model = LandmarkModel::from_shape_model(synth.model);
  std::mt19937_64 rng(14);
  int wins = 0;
  for (int i = 0; i < 5; ++i) {
    const Sequence seq = make_sequence(rng, synth, 30, 0.01, 0.01);
    const DffResult r = dff_track(seq.x, model, DffConfig{});
    double e_dff = 0.0;
    double e_rff = 0.0;
    for (int t = 0; t < 30; ++t) {
      e_dff += (r.frames[t].v - seq.truth[t]).squaredNorm();
      const FitResult f = rff_fit(seq.x[t], model, FitConfig{});
      e_rff += (f.frontalized - seq.truth[t]).squaredNorm();
    }
    if (e_dff < e_rff) ++wins;
  }
  CHECK(wins >= 4);
}

TEST_CASE("process noise estimation and overrides") {
  const SyntheticModel synth = generate_synthetic_model(40, 3, 10, 15);
  const LandmarkModel model = LandmarkModel::from_shape_model(synth.model);
  std::vector<ShapeEmbedding> s = {Eigen::Vector3d(0, 0, 0),
                                   Eigen::Vector3d(1, 0, 0),
                                   Eigen::Vector3d(1, 2, 0)};
  const ProcessNoise n = estimate_process_noise(s, model, 1e-10);
  CHECK(n.s_diag(0) == doctest::Approx(0.5));
  CHECK(n.s_diag(1) == doctest::Approx(2.0));
  CHECK(n.s_diag(2) == 1e-10);
  const Vec d1 = model.basis.col(0);
  const Vec d2 = 2.0 * model.basis.col(1);
  const Vec expect = (0.5 * (d1.cwiseAbs2() + d2.cwiseAbs2())).cwiseMax(1e-10);
  CHECK((n.v_diag - expect).cwiseAbs().maxCoeff() < 1e-15);

  const ProcessNoise single =
      estimate_process_noise({Eigen::Vector3d(1, 1, 1)}, model, 1e-9);
  CHECK((single.s_diag.array() == 1e-9).all());

  std::mt19937_64 rng(16);
  const Sequence seq = make_sequence(rng, synth, 5, 0.01, 0.005);
  DffConfig cfg;
  cfg.gamma_s_diag = Vec::Constant(3, 1e-4);
  cfg.gamma_v_diag = Vec::Constant(30, 1e-5);
  const DffResult r = dff_track(seq.x, model, cfg);
  CHECK(r.params.gamma_s(0, 0) == 1e-4);
  CHECK(r.params.gamma_s(3, 3) == cfg.homogeneous_variance);
  CHECK(r.params.gamma_v(29, 29) == 1e-5);
  cfg.gamma_v_diag = Vec::Constant(29, 1e-5);
  CHECK_THROWS_AS(dff_track(seq.x, model, cfg), std::invalid_argument);
}

TEST_CASE("a failing frame reports its index") {
  const SyntheticModel synth = generate_synthetic_model(40, 3, 10, 17);
  const LandmarkModel model = LandmarkModel::from_shape_model(synth.model);
  std::mt19937_64 rng(18);
  Sequence seq = make_sequence(rng, synth, 4, 0.01, 0.005);
  seq.x[2].setZero();
  try {
    dff_track(seq.x, model, DffConfig{});
    FAIL("expected TrackingError");
  } catch (const TrackingError& e) {
    CHECK(e.frame() == 3);
  }
  CHECK_THROWS_AS(dff_track({}, model, DffConfig{}), std::invalid_argument);
}
