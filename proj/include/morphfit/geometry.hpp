#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace morphfit {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
/// Point set stored column-wise: column j is point j.
using Points3 = Eigen::Matrix3Xd;

/// Unit quaternion rotation, always normalized and canonicalized so that
/// w >= 0 (q and -q describe the same rotation).
class UnitQuaternion {
 public:
  UnitQuaternion() = default;
  /// Normalizes (w, x, y, z). Throws std::invalid_argument on a zero or
  /// non-finite input.
  UnitQuaternion(double w, double x, double y, double z);
  explicit UnitQuaternion(const Eigen::Quaterniond& q);

  static UnitQuaternion identity() { return {}; }
  static UnitQuaternion from_axis_angle(const Vec3& axis, double angle);
  /// Rotation by |v| radians about v / |v|.
  static UnitQuaternion from_rotation_vector(const Vec3& v);
  static UnitQuaternion from_matrix(const Mat3& r);

  double w() const { return q_.w(); }
  double x() const { return q_.x(); }
  double y() const { return q_.y(); }
  double z() const { return q_.z(); }

  Mat3 matrix() const { return q_.toRotationMatrix(); }
  Vec3 rotate(const Vec3& v) const { return q_ * v; }
  UnitQuaternion conjugate() const { return UnitQuaternion(q_.conjugate()); }
  const Eigen::Quaterniond& eigen() const { return q_; }

  friend UnitQuaternion operator*(const UnitQuaternion& a,
                                  const UnitQuaternion& b) {
    return UnitQuaternion(a.q_ * b.q_);
  }

 private:
  void canonicalize();

  Eigen::Quaterniond q_ = Eigen::Quaterniond::Identity();
};

/// Angle in [0, pi] of the relative rotation a^-1 b.
double geodesic_angle(const UnitQuaternion& a, const UnitQuaternion& b);

/// Similarity transform p -> rho * R * p + T.
struct RigidSimilarity {
  double rho = 1.0;
  UnitQuaternion rotation;
  Vec3 translation = Vec3::Zero();

  static RigidSimilarity identity() { return {}; }

  /// Throws std::invalid_argument unless rho > 0 and all fields finite.
  void validate() const;
  Mat3 rotation_matrix() const { return rotation.matrix(); }
};

Vec3 apply_similarity(const RigidSimilarity& pose, const Vec3& p);
Points3 apply_similarity(const RigidSimilarity& pose, const Points3& points);

/// rho' = 1/rho, R' = R^T, T' = -R^T T / rho.
RigidSimilarity invert_similarity(const RigidSimilarity& pose);

/// The transform p -> outer(inner(p)).
RigidSimilarity compose(const RigidSimilarity& outer,
                        const RigidSimilarity& inner);

/// Weighted closed-form absolute orientation with scale.
///
/// Weighted centroids, the 4x4 quaternion matrix built from the weighted
/// cross-covariance, its dominant eigenvector as the rotation, and the
/// symmetric scale sqrt(sum w |dst'|^2 / sum w |src'|^2). Returns the pose
/// mapping src onto dst.
///
/// Throws std::invalid_argument on mismatched sizes, fewer than 3 points, or
/// bad weights, and DegenerateConfigurationError when either centered point
/// set has rank < 2.
RigidSimilarity horn_absolute_orientation(const Points3& src,
                                          const Points3& dst,
                                          const Eigen::VectorXd& weights);
RigidSimilarity horn_absolute_orientation(const Points3& src,
                                          const Points3& dst);

/// Dominant eigenvector of Horn's 4x4 matrix for the (already centered,
/// weighted) cross-covariance sum_j w_j src'_j dst'_j^T.
UnitQuaternion horn_rotation(const Mat3& cross_covariance);

}  // namespace morphfit
