#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dvio/geometry.hpp"

namespace dvio {

constexpr double kGravity = 9.81;  // m/s^2

/// Pixel variance below this marks a frame as corrupted. The corruption
/// model zero-fills pixels, so the check is equivalent to the flag for
/// generated data, but the runtime only ever looks at pixels.
constexpr double kCorruptionVarianceThreshold = 1e-6;

struct ImuSample {
  double timestamp = 0.0;  // s
  Vec3 accel = Vec3::Zero();  // specific force, m/s^2, body frame
  Vec3 gyro = Vec3::Zero();   // rad/s, body frame
};

/// Inertial samples recorded between two consecutive camera frames.
/// Sample timestamps lie in [t_start, t_end), non-decreasing.
struct ImuWindow {
  std::vector<ImuSample> samples;
  double t_start = 0.0;
  double t_end = 0.0;
};

/// One camera image, row-major [h][w][c], values in [0,1] when clean.
struct Frame {
  int h = 0, w = 0, c = 1;
  std::vector<double> pixels;
  double timestamp = 0.0;
  bool corrupted = false;

  double at(int row, int col, int ch) const {
    return pixels[static_cast<size_t>((row * w + col) * c + ch)];
  }
  double& at(int row, int col, int ch) {
    return pixels[static_cast<size_t>((row * w + col) * c + ch)];
  }
  double variance() const;
};

struct Observation {
  Frame frame;
  ImuWindow imu;
  std::optional<Pose> ground_truth;
};

struct DatasetMeta {
  double imu_rate_hz = 100.0;
  double cam_rate_hz = 10.0;
  int img_h = 36, img_w = 64, img_c = 1;
  uint64_t seed = 0;
  std::string world_desc;
};

/// Ordered observation sequence; timestamps strictly increasing.
/// `leading_frame` is the camera frame that opens the first IMU window; it
/// has no window of its own and is kept only so save/load round-trips.
struct Dataset {
  std::vector<Observation> observations;
  std::optional<Frame> leading_frame;
  std::optional<Pose> leading_ground_truth;
  DatasetMeta meta;

  size_t size() const { return observations.size(); }
  Trajectory ground_truth_trajectory() const;
};

// --- World / flight description for synthetic data -------------------------

struct Pillar {
  double cx = 0.0, cy = 0.0, half = 0.12;
};

struct WorldSpec {
  double texture_period = 0.75;  // m; ground texture repeats with this period
  int texture_cells = 8;         // noise lattice points per period
  uint64_t texture_seed = 1;
  double footprint_per_alt = 1.0;  // footprint width = altitude * this
  std::vector<Pillar> pillars;
  double pad_x = 0.0, pad_y = 0.0;  // landing pad marker center
  double pad_half = 0.2;

  /// n pillars hashed into [-extent, extent]^2, avoiding the pad marker.
  static WorldSpec with_random_pillars(int n, double extent, uint64_t seed, double pad_x,
                                       double pad_y);
  std::string describe() const;
};

struct Waypoint {
  double t = 0.0;
  Vec3 pos = Vec3::Zero();
};

struct FlightSpec {
  std::vector<Waypoint> waypoints;  // times strictly increasing
  double blend_frac = 0.1;          // velocity ramp fraction per segment end
  double yaw_amplitude = 0.0;       // rad
  double yaw_period = 10.0;         // s
  double duration = 10.0;           // s of recorded data
  double imu_rate_hz = 100.0;
  double cam_rate_hz = 10.0;
  int img_h = 36, img_w = 64, img_c = 1;
  double accel_noise_sigma = 0.05;  // m/s^2
  double gyro_noise_sigma = 0.005;  // rad/s
  double accel_bias_sigma = 0.02;
  double gyro_bias_sigma = 0.002;
};

/// Piecewise-analytic trajectory through the waypoints: per segment a
/// cosine-ramped speed profile (rest at every waypoint, constant speed in
/// the cruise portion), so position is C^1, acceleration piecewise
/// continuous and available in closed form. Yaw follows a sinusoidal
/// schedule; roll and pitch stay zero.
class FlightPath {
 public:
  FlightPath(std::vector<Waypoint> waypoints, double blend_frac, double yaw_amplitude,
             double yaw_period);

  Vec3 position(double t) const;
  Vec3 velocity(double t) const;
  Vec3 acceleration(double t) const;
  double yaw(double t) const;
  double yaw_rate(double t) const;
  Quat orientation(double t) const;
  Pose pose(double t) const;

  double start_time() const { return waypoints_.front().t; }
  double end_time() const { return waypoints_.back().t; }

 private:
  struct Segment {
    double t0, t1, blend;
    Vec3 p0, delta;
  };
  const Segment* segment_at(double t) const;

  std::vector<Waypoint> waypoints_;
  std::vector<Segment> segments_;
  double yaw_amplitude_, yaw_period_;
};

// --- Operations -------------------------------------------------------------

/// Orthographic downward view of the textured ground plane with pillar and
/// pad markers. Deterministic in (world, pose, shape).
Frame render_frame(const WorldSpec& world, const Pose& pose, int h, int w, int c);

/// Deterministic-per-seed synthetic recording along the flight path.
/// IMU: analytic specific force R^T(a - g) plus Gaussian noise plus a
/// constant per-run bias; frames rendered at the scheduled poses; ground
/// truth at every frame.
Dataset generate_synthetic(const WorldSpec& world, const FlightSpec& flight, uint64_t seed);

/// Flags round(n * fraction) deterministically chosen frames and zeroes
/// their pixels.
Dataset corrupt_frames(const Dataset& ds, double fraction, uint64_t seed);

/// Contiguous temporal split; both halves must end up non-empty.
std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction);

/// Reads the on-disk layout written by save_dataset (imu.csv, frames.csv,
/// groundtruth.csv, images/, dataset.meta). Ground truth is interpolated to
/// frame timestamps (linear position, slerp orientation); IMU samples are
/// grouped into half-open windows [t_k, t_{k+1}).
Dataset load_euroc_layout(const std::string& dir);

void save_dataset(const Dataset& ds, const std::string& dir);

/// Interpolated pose at time t from a time-ordered ground-truth sequence.
/// t must lie within the covered span.
Pose interpolate_ground_truth(const std::vector<Pose>& gts, double t);

/// Groups samples into one window per consecutive frame-timestamp pair.
/// Every window must contain at least one sample.
std::vector<ImuWindow> group_imu_windows(const std::vector<double>& frame_times,
                                         const std::vector<ImuSample>& samples);

void write_pgm(const std::string& path, const Frame& frame);
Frame read_pgm(const std::string& path);

}  // namespace dvio
