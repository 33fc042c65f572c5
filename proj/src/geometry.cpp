#include "morphfit/geometry.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "morphfit/errors.hpp"

namespace morphfit {

UnitQuaternion::UnitQuaternion(double w, double x, double y, double z)
    : q_(w, x, y, z) {
  const double n = q_.norm();
  if (!std::isfinite(n) || n == 0.0) {
    throw std::invalid_argument("quaternion must be finite and non-zero");
  }
  q_.coeffs() /= n;
  canonicalize();
}

UnitQuaternion::UnitQuaternion(const Eigen::Quaterniond& q)
    : UnitQuaternion(q.w(), q.x(), q.y(), q.z()) {}

void UnitQuaternion::canonicalize() {
  // First non-zero of (w, x, y, z) is made positive.
  const double c[4] = {q_.w(), q_.x(), q_.y(), q_.z()};
  for (double v : c) {
    if (v > 0.0) return;
    if (v < 0.0) {
      q_.coeffs() = -q_.coeffs();
      return;
    }
  }
}

UnitQuaternion UnitQuaternion::from_axis_angle(const Vec3& axis, double angle) {
  const double n = axis.norm();
  if (n == 0.0) {
    throw std::invalid_argument("rotation axis must be non-zero");
  }
  return UnitQuaternion(Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis / n)));
}

UnitQuaternion UnitQuaternion::from_rotation_vector(const Vec3& v) {
  const double angle = v.norm();
  if (angle < 1e-300) return {};
  const double h = 0.5 * angle;
  const Vec3 xyz = v * (std::sin(h) / angle);
  return UnitQuaternion(std::cos(h), xyz.x(), xyz.y(), xyz.z());
}

UnitQuaternion UnitQuaternion::from_matrix(const Mat3& r) {
  return UnitQuaternion(Eigen::Quaterniond(r));
}

double geodesic_angle(const UnitQuaternion& a, const UnitQuaternion& b) {
  // |<a,b>| handles the double cover; atan2 form is accurate near 0 and pi.
  const Eigen::Quaterniond rel = a.eigen().conjugate() * b.eigen();
  const double s = rel.vec().norm();
  const double c = std::abs(rel.w());
  return 2.0 * std::atan2(s, c);
}

void RigidSimilarity::validate() const {
  if (!(rho > 0.0) || !std::isfinite(rho)) {
    throw std::invalid_argument("similarity scale must be positive and finite");
  }
  if (!translation.allFinite()) {
    throw std::invalid_argument("similarity translation must be finite");
  }
}

Vec3 apply_similarity(const RigidSimilarity& pose, const Vec3& p) {
  return pose.rho * pose.rotation.rotate(p) + pose.translation;
}

Points3 apply_similarity(const RigidSimilarity& pose, const Points3& points) {
  Points3 out = (pose.rho * pose.rotation_matrix()) * points;
  out.colwise() += pose.translation;
  return out;
}

RigidSimilarity invert_similarity(const RigidSimilarity& pose) {
  pose.validate();
  RigidSimilarity inv;
  inv.rho = 1.0 / pose.rho;
  inv.rotation = pose.rotation.conjugate();
  inv.translation = -inv.rho * inv.rotation.rotate(pose.translation);
  return inv;
}

RigidSimilarity compose(const RigidSimilarity& outer,
                        const RigidSimilarity& inner) {
  RigidSimilarity out;
  out.rho = outer.rho * inner.rho;
  out.rotation = outer.rotation * inner.rotation;
  out.translation = apply_similarity(outer, inner.translation);
  return out;
}

UnitQuaternion horn_rotation(const Mat3& m) {
  const double sxx = m(0, 0), sxy = m(0, 1), sxz = m(0, 2);
  const double syx = m(1, 0), syy = m(1, 1), syz = m(1, 2);
  const double szx = m(2, 0), szy = m(2, 1), szz = m(2, 2);

  Eigen::Matrix4d n;
  n << sxx + syy + szz, syz - szy, szx - sxz, sxy - syx,
       syz - szy, sxx - syy - szz, sxy + syx, szx + sxz,
       szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy,
       sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz;

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(n);
  const Eigen::Vector4d q = eig.eigenvectors().col(3);  // ascending order
  return UnitQuaternion(q(0), q(1), q(2), q(3));
}

namespace {

// Rank of a centered, weighted 3xJ point set is < 2.
bool rank_deficient(const Points3& centered, const Eigen::VectorXd& w) {
  Mat3 scatter = Mat3::Zero();
  for (Eigen::Index j = 0; j < centered.cols(); ++j) {
    scatter.noalias() += w(j) * centered.col(j) * centered.col(j).transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> eig(scatter, Eigen::EigenvaluesOnly);
  const Vec3 ev = eig.eigenvalues();  // ascending
  return !(ev(2) > 0.0) || ev(1) <= 1e-12 * ev(2);
}

}  // namespace

RigidSimilarity horn_absolute_orientation(const Points3& src,
                                          const Points3& dst,
                                          const Eigen::VectorXd& weights) {
  if (src.cols() != dst.cols() || src.cols() != weights.size()) {
    throw std::invalid_argument("horn: point and weight counts differ");
  }
  if (src.cols() < 3) {
    throw std::invalid_argument("horn: need at least 3 point pairs");
  }
  if ((weights.array() < 0.0).any() || !weights.allFinite()) {
    throw std::invalid_argument("horn: weights must be finite and non-negative");
  }
  const double wsum = weights.sum();
  if (!(wsum > 0.0)) {
    throw std::invalid_argument("horn: weights are all zero");
  }

  const Vec3 cs = (src * weights) / wsum;
  const Vec3 cd = (dst * weights) / wsum;
  const Points3 s = src.colwise() - cs;
  const Points3 d = dst.colwise() - cd;

  if (rank_deficient(s, weights) || rank_deficient(d, weights)) {
    throw DegenerateConfigurationError(
        "horn: centered point set has rank < 2");
  }

  Mat3 cross = Mat3::Zero();
  double ss = 0.0;
  double dd = 0.0;
  for (Eigen::Index j = 0; j < s.cols(); ++j) {
    cross.noalias() += weights(j) * s.col(j) * d.col(j).transpose();
    ss += weights(j) * s.col(j).squaredNorm();
    dd += weights(j) * d.col(j).squaredNorm();
  }

  RigidSimilarity pose;
  pose.rotation = horn_rotation(cross);
  pose.rho = std::sqrt(dd / ss);
  pose.translation = cd - pose.rho * pose.rotation.rotate(cs);
  return pose;
}

RigidSimilarity horn_absolute_orientation(const Points3& src,
                                          const Points3& dst) {
  return horn_absolute_orientation(src, dst,
                                   Eigen::VectorXd::Ones(src.cols()));
}

}  // namespace morphfit
