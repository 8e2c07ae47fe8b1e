#include <cmath>

#include "dvio/dataio.hpp"
#include "dvio/util.hpp"

namespace dvio {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

FlightPath::FlightPath(std::vector<Waypoint> waypoints, double blend_frac, double yaw_amplitude,
                       double yaw_period)
    : waypoints_(std::move(waypoints)), yaw_amplitude_(yaw_amplitude), yaw_period_(yaw_period) {
  if (waypoints_.empty()) fail(ErrorKind::InvalidArgument, "flight path: no waypoints");
  if (yaw_period_ <= 0.0) fail(ErrorKind::InvalidArgument, "flight path: yaw period <= 0");
  for (size_t i = 1; i < waypoints_.size(); ++i) {
    if (waypoints_[i].t <= waypoints_[i - 1].t)
      fail(ErrorKind::InvalidArgument, "flight path: waypoint times must increase");
    Segment seg;
    seg.t0 = waypoints_[i - 1].t;
    seg.t1 = waypoints_[i].t;
    seg.p0 = waypoints_[i - 1].pos;
    seg.delta = waypoints_[i].pos - waypoints_[i - 1].pos;
    double dur = seg.t1 - seg.t0;
    double bf = std::clamp(blend_frac, 0.01, 0.45);
    seg.blend = bf * dur;
    segments_.push_back(seg);
  }
}

const FlightPath::Segment* FlightPath::segment_at(double t) const {
  for (const auto& seg : segments_)
    if (t >= seg.t0 && t < seg.t1) return &seg;
  return nullptr;
}

// Per-segment speed profile (as a fraction of the segment displacement per
// second): cosine ramp of width b at both ends, constant vc in between, so
// that the integral over the segment is exactly 1.
//   vc = 1 / (T - b)
// Position fraction s(tau) has the closed forms used below.
Vec3 FlightPath::position(double t) const {
  if (t <= waypoints_.front().t) return waypoints_.front().pos;
  if (t >= waypoints_.back().t) return waypoints_.back().pos;
  const Segment* seg = segment_at(t);
  double tau = t - seg->t0;
  double dur = seg->t1 - seg->t0;
  double b = seg->blend;
  double vc = 1.0 / (dur - b);
  double s;
  if (tau < b) {
    s = 0.5 * vc * (tau - (b / kPi) * std::sin(kPi * tau / b));
  } else if (tau < dur - b) {
    s = 0.5 * vc * b + vc * (tau - b);
  } else {
    double sig = dur - tau;  // in (0, b]
    s = 1.0 - 0.5 * vc * (sig - (b / kPi) * std::sin(kPi * sig / b));
  }
  return seg->p0 + s * seg->delta;
}

Vec3 FlightPath::velocity(double t) const {
  if (t <= waypoints_.front().t || t >= waypoints_.back().t) return Vec3::Zero();
  const Segment* seg = segment_at(t);
  double tau = t - seg->t0;
  double dur = seg->t1 - seg->t0;
  double b = seg->blend;
  double vc = 1.0 / (dur - b);
  double v;
  if (tau < b)
    v = 0.5 * vc * (1.0 - std::cos(kPi * tau / b));
  else if (tau < dur - b)
    v = vc;
  else
    v = 0.5 * vc * (1.0 - std::cos(kPi * (dur - tau) / b));
  return v * seg->delta;
}

Vec3 FlightPath::acceleration(double t) const {
  if (t <= waypoints_.front().t || t >= waypoints_.back().t) return Vec3::Zero();
  const Segment* seg = segment_at(t);
  double tau = t - seg->t0;
  double dur = seg->t1 - seg->t0;
  double b = seg->blend;
  double vc = 1.0 / (dur - b);
  double a = 0.0;
  if (tau < b)
    a = 0.5 * vc * (kPi / b) * std::sin(kPi * tau / b);
  else if (tau >= dur - b)
    a = -0.5 * vc * (kPi / b) * std::sin(kPi * (dur - tau) / b);
  return a * seg->delta;
}

double FlightPath::yaw(double t) const {
  if (yaw_amplitude_ == 0.0) return 0.0;
  return yaw_amplitude_ * std::sin(2.0 * kPi * t / yaw_period_);
}

double FlightPath::yaw_rate(double t) const {
  if (yaw_amplitude_ == 0.0) return 0.0;
  return yaw_amplitude_ * (2.0 * kPi / yaw_period_) * std::cos(2.0 * kPi * t / yaw_period_);
}

Quat FlightPath::orientation(double t) const {
  double half = 0.5 * yaw(t);
  return quat_canonical(Quat(std::cos(half), 0.0, 0.0, std::sin(half)));
}

Pose FlightPath::pose(double t) const { return Pose(position(t), orientation(t), t); }

Dataset generate_synthetic(const WorldSpec& world, const FlightSpec& flight, uint64_t seed) {
  if (flight.duration <= 0.0) fail(ErrorKind::InvalidArgument, "generate_synthetic: duration <= 0");
  if (flight.imu_rate_hz <= 0.0 || flight.cam_rate_hz <= 0.0)
    fail(ErrorKind::InvalidArgument, "generate_synthetic: sensor rates must be positive");
  double ratio = flight.imu_rate_hz / flight.cam_rate_hz;
  if (std::abs(ratio - std::round(ratio)) > 1e-9)
    fail(ErrorKind::InvalidArgument, "generate_synthetic: camera rate must divide imu rate");
  if (flight.waypoints.empty())
    fail(ErrorKind::InvalidArgument, "generate_synthetic: no waypoints");

  FlightPath path(flight.waypoints, flight.blend_frac, flight.yaw_amplitude, flight.yaw_period);

  Rng rng(seed);
  Vec3 accel_bias(rng.gaussian(0.0, flight.accel_bias_sigma),
                  rng.gaussian(0.0, flight.accel_bias_sigma),
                  rng.gaussian(0.0, flight.accel_bias_sigma));
  Vec3 gyro_bias(rng.gaussian(0.0, flight.gyro_bias_sigma),
                 rng.gaussian(0.0, flight.gyro_bias_sigma),
                 rng.gaussian(0.0, flight.gyro_bias_sigma));

  const Vec3 gravity(0.0, 0.0, -kGravity);

  long n_imu = static_cast<long>(std::floor(flight.duration * flight.imu_rate_hz + 1e-9));
  std::vector<ImuSample> samples;
  samples.reserve(static_cast<size_t>(n_imu));
  for (long j = 0; j < n_imu; ++j) {
    double t = static_cast<double>(j) / flight.imu_rate_hz;
    Eigen::Matrix3d rot = path.orientation(t).toRotationMatrix();
    ImuSample s;
    s.timestamp = t;
    s.accel = rot.transpose() * (path.acceleration(t) - gravity);
    s.gyro = Vec3(0.0, 0.0, path.yaw_rate(t));
    if (flight.accel_noise_sigma > 0.0 || flight.accel_bias_sigma > 0.0)
      s.accel += accel_bias + Vec3(rng.gaussian(0.0, flight.accel_noise_sigma),
                                   rng.gaussian(0.0, flight.accel_noise_sigma),
                                   rng.gaussian(0.0, flight.accel_noise_sigma));
    if (flight.gyro_noise_sigma > 0.0 || flight.gyro_bias_sigma > 0.0)
      s.gyro += gyro_bias + Vec3(rng.gaussian(0.0, flight.gyro_noise_sigma),
                                 rng.gaussian(0.0, flight.gyro_noise_sigma),
                                 rng.gaussian(0.0, flight.gyro_noise_sigma));
    samples.push_back(s);
  }

  long n_frames = static_cast<long>(std::floor(flight.duration * flight.cam_rate_hz + 1e-9));
  std::vector<double> frame_times;
  std::vector<Frame> frames;
  std::vector<Pose> gts;
  for (long k = 0; k < n_frames; ++k) {
    double t = static_cast<double>(k) / flight.cam_rate_hz;
    Pose p = path.pose(t);
    Frame f = render_frame(world, p, flight.img_h, flight.img_w, flight.img_c);
    f.timestamp = t;
    frame_times.push_back(t);
    frames.push_back(std::move(f));
    gts.push_back(p);
  }

  auto windows = group_imu_windows(frame_times, samples);

  Dataset ds;
  ds.meta.imu_rate_hz = flight.imu_rate_hz;
  ds.meta.cam_rate_hz = flight.cam_rate_hz;
  ds.meta.img_h = flight.img_h;
  ds.meta.img_w = flight.img_w;
  ds.meta.img_c = flight.img_c;
  ds.meta.seed = seed;
  ds.meta.world_desc = world.describe();
  if (!frames.empty()) {
    ds.leading_frame = frames.front();
    ds.leading_ground_truth = gts.front();
  }
  for (size_t k = 0; k < windows.size(); ++k) {
    Observation obs;
    obs.frame = std::move(frames[k + 1]);
    obs.imu = std::move(windows[k]);
    obs.ground_truth = gts[k + 1];
    ds.observations.push_back(std::move(obs));
  }
  return ds;
}

}  // namespace dvio
