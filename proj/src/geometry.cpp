#include "dvio/geometry.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "dvio/util.hpp"

namespace dvio {

Quat quat_canonical(const Quat& q) {
  const double comps[4] = {q.w(), q.x(), q.y(), q.z()};
  for (double c : comps) {
    if (c > 0.0) return q;
    if (c < 0.0) return Quat(-q.w(), -q.x(), -q.y(), -q.z());
  }
  return q;  // all-zero handled by callers
}

Quat quat_normalize(const Vec4& wxyz) {
  double n = wxyz.norm();
  if (n <= 1e-12)
    fail(ErrorKind::DegenerateInput, "quat_normalize: near-zero norm " + format_double(n));
  // Skip the division for already-unit input so repeated normalization is
  // exactly idempotent (dividing by a norm of 1 +- 1 ulp would still move
  // the components).
  if (std::abs(n - 1.0) < 1e-12) return quat_canonical(Quat(wxyz[0], wxyz[1], wxyz[2], wxyz[3]));
  Quat q(wxyz[0] / n, wxyz[1] / n, wxyz[2] / n, wxyz[3] / n);
  return quat_canonical(q);
}

Pose::Pose(const Vec3& pos, const Quat& q, double t) : position(pos), orientation(q), timestamp(t) {
  renormalize();
}

void Pose::renormalize() {
  Vec4 wxyz(orientation.w(), orientation.x(), orientation.y(), orientation.z());
  orientation = quat_normalize(wxyz);
}

double translation_error(const Pose& a, const Pose& b) { return (a.position - b.position).norm(); }

double rotation_error(const Pose& a, const Pose& b) {
  double d = std::abs(a.orientation.dot(b.orientation));
  d = std::min(d, 1.0);
  return std::clamp(2.0 * std::acos(d), 0.0, M_PI);
}

double rmse(const std::vector<Eigen::VectorXd>& predicted,
            const std::vector<Eigen::VectorXd>& actual) {
  if (predicted.size() != actual.size())
    fail(ErrorKind::DimensionMismatch, "rmse: sequence lengths differ");
  if (predicted.empty()) fail(ErrorKind::InvalidArgument, "rmse: empty input");
  double acc = 0.0;
  for (size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i].size() != actual[i].size())
      fail(ErrorKind::DimensionMismatch, "rmse: vector dimensions differ at sample " +
                                             std::to_string(i));
    acc += (predicted[i] - actual[i]).squaredNorm();
  }
  return std::sqrt(acc / static_cast<double>(predicted.size()));
}

Trajectory::Trajectory(std::vector<Pose> poses) {
  for (const auto& p : poses) push_back(p);
}

void Trajectory::push_back(const Pose& p) {
  if (!poses_.empty() && p.timestamp <= poses_.back().timestamp)
    fail(ErrorKind::InvalidArgument,
         "trajectory timestamps must be strictly increasing (got " +
             format_double(p.timestamp) + " after " + format_double(poses_.back().timestamp) + ")");
  poses_.push_back(p);
}

std::string Trajectory::to_csv() const {
  std::ostringstream out;
  out << "timestamp_s,px,py,pz,qw,qx,qy,qz\n";
  char buf[256];
  for (const auto& p : poses_) {
    std::snprintf(buf, sizeof(buf), "%.9f,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  p.timestamp, p.position.x(), p.position.y(), p.position.z(), p.orientation.w(),
                  p.orientation.x(), p.orientation.y(), p.orientation.z());
    out << buf;
  }
  return out.str();
}

Trajectory Trajectory::from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || trim(line) != "timestamp_s,px,py,pz,qw,qx,qy,qz")
    fail(ErrorKind::MalformedData, "trajectory csv: bad header");
  Trajectory tr;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    auto f = split(line, ',');
    if (f.size() != 8) fail(ErrorKind::MalformedData, "trajectory csv: bad row: " + line);
    double t = std::stod(f[0]);
    Vec3 pos(std::stod(f[1]), std::stod(f[2]), std::stod(f[3]));
    Vec4 q(std::stod(f[4]), std::stod(f[5]), std::stod(f[6]), std::stod(f[7]));
    tr.push_back(Pose(pos, quat_normalize(q), t));
  }
  return tr;
}

void Trajectory::save_csv(const std::string& path) const { write_text_file(path, to_csv()); }

Trajectory Trajectory::load_csv(const std::string& path) { return from_csv(read_text_file(path)); }

Pose interpolate_pose(const Pose& a, const Pose& b, double u) {
  Pose out;
  out.position = (1.0 - u) * a.position + u * b.position;
  out.orientation = quat_canonical(a.orientation.slerp(u, b.orientation));
  out.timestamp = (1.0 - u) * a.timestamp + u * b.timestamp;
  return out;
}

}  // namespace dvio
