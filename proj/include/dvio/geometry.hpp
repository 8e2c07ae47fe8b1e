#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <string>
#include <vector>

namespace dvio {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Quat = Eigen::Quaterniond;

/// Normalizes a quaternion given as (w, x, y, z) and canonicalizes its sign:
/// w > 0, or if w == 0 the first nonzero of (x, y, z) is positive.
/// Throws DegenerateInput when the norm is below 1e-12.
///
/// Quaternion component order is (w, x, y, z) everywhere in this codebase,
/// including CSV columns qw,qx,qy,qz.
Quat quat_normalize(const Vec4& wxyz);

/// Canonical sign form of an already-unit quaternion (no renormalization).
Quat quat_canonical(const Quat& q);

/// Position + orientation + time. Orientation is kept unit-norm and
/// sign-canonical by every constructor and mutator.
struct Pose {
  Vec3 position = Vec3::Zero();
  Quat orientation = Quat::Identity();
  double timestamp = 0.0;

  Pose() = default;
  Pose(const Vec3& pos, const Quat& q, double t);

  /// Re-establishes the unit/canonical invariant after external mutation.
  void renormalize();
};

/// Euclidean distance between the two positions, meters.
double translation_error(const Pose& a, const Pose& b);

/// Geodesic angle between the two orientations: 2*acos(|<q1,q2>|), clamped
/// to [0, pi]. Invariant under sign flips of either quaternion.
double rotation_error(const Pose& a, const Pose& b);

/// sqrt( sum_i ||pred_i - actual_i||^2 / n ). The residual of one sample is
/// the full k-vector difference; the divisor is the sample count n, not the
/// element count.
double rmse(const std::vector<Eigen::VectorXd>& predicted,
            const std::vector<Eigen::VectorXd>& actual);

/// Time-ordered pose sequence. Appends enforce strictly increasing timestamps.
class Trajectory {
 public:
  Trajectory() = default;
  explicit Trajectory(std::vector<Pose> poses);

  void push_back(const Pose& p);
  const std::vector<Pose>& poses() const { return poses_; }
  size_t size() const { return poses_.size(); }
  bool empty() const { return poses_.empty(); }
  const Pose& operator[](size_t i) const { return poses_[i]; }

  /// CSV with header timestamp_s,px,py,pz,qw,qx,qy,qz.
  std::string to_csv() const;
  static Trajectory from_csv(const std::string& text);
  void save_csv(const std::string& path) const;
  static Trajectory load_csv(const std::string& path);

 private:
  std::vector<Pose> poses_;
};

/// Linear position / slerp orientation interpolation between two poses.
/// u in [0,1]; u=0 gives a, u=1 gives b.
Pose interpolate_pose(const Pose& a, const Pose& b, double u);

}  // namespace dvio
