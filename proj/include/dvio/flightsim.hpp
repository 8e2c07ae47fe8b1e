#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dvio/config.hpp"
#include "dvio/dataio.hpp"
#include "dvio/geometry.hpp"

namespace dvio::sim {

struct VehicleState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Quat orientation = Quat::Identity();
  Vec3 angular_velocity = Vec3::Zero();
  double time = 0.0;
};

struct GuidanceTarget {
  Vec3 desired_position = Vec3::Zero();
  Vec3 desired_velocity = Vec3::Zero();
  bool landing_phase = false;
};

/// Thrust plus commanded attitude. Angle conventions (z-up, x-forward):
/// pitch > 0 tilts the thrust vector toward -x (nose up), roll > 0 tilts it
/// toward -y. So accelerating toward +x needs a negative (nose-down) pitch.
struct ControlCommand {
  double thrust = 0.0;  // N, >= 0
  double yaw = 0.0;     // rad
  double pitch = 0.0;
  double roll = 0.0;
};

struct VehicleParams {
  double mass = 1.0;          // kg
  double drag = 0.1;          // N s / m, linear
  double attitude_lag = 0.15;  // s, first-order attitude response
  double max_tilt = 0.5236;   // rad (30 deg)
  double max_thrust = 25.0;   // N
};

struct PidGains {
  double kp = 4.0;
  double ki = 0.2;
  double kd = 4.0;
  double integral_limit = 0.5;  // m s
};

/// Body-to-world rotation for the command convention above.
Eigen::Matrix3d attitude_rotation(double yaw, double pitch, double roll);

/// Simplified rigid body: commanded attitude tracked through a first-order
/// lag, thrust along body +z, gravity, linear drag; semi-implicit Euler.
VehicleState dynamics_step(const VehicleState& state, const ControlCommand& cmd,
                           const VehicleParams& params, double dt);

struct Mission {
  std::vector<Waypoint> waypoints;
  double pad_x = 0.0, pad_y = 0.0;
  bool land = true;              // descend onto the pad after the last waypoint
  double descent_rate = 0.5;     // m/s after the last waypoint
  double touchdown_alt = 0.02;   // m
  double timeout = 60.0;         // s
  double corrupt_fraction = 0.0;  // camera dropouts during flight

  static Mission from_config(const Config& cfg);
  Pose start_pose() const;
};

/// Position reference from linear interpolation of the waypoint schedule,
/// velocity reference from its slope; after the last waypoint the target
/// descends onto the pad at the configured rate.
GuidanceTarget guidance(const Pose& current_estimate, const Mission& plan, double t);

class PidController {
 public:
  PidController(PidGains gains, VehicleParams vehicle) : gains_(gains), vehicle_(vehicle) {}

  /// Per-axis PID on position error with velocity feed-forward; desired
  /// acceleration is mapped to thrust and attitude by small-angle inversion
  /// (yaw held). Integrator clamped to +-integral_limit.
  ControlCommand update(const Pose& estimate, const Vec3& est_velocity,
                        const GuidanceTarget& target, double dt);

  void reset() { integral_ = Vec3::Zero(); }

 private:
  PidGains gains_;
  VehicleParams vehicle_;
  Vec3 integral_ = Vec3::Zero();
};

/// Pose source driven by the simulation loop at camera rate. The true pose is
/// supplied so that reference estimators (ground-truth passthrough, the
/// position-measurement Kalman baseline) can synthesize their inputs; the
/// learned estimator ignores it.
class Estimator {
 public:
  virtual ~Estimator() = default;
  virtual void reset(const Pose& initial) = 0;
  virtual Pose on_frame(const Frame& frame, const ImuWindow& imu, const Pose& true_pose) = 0;
  virtual int imu_only_count() const { return 0; }
  virtual std::string name() const = 0;
};

std::unique_ptr<Estimator> make_truth_estimator();
std::unique_ptr<Estimator> make_learned_estimator(const std::string& checkpoint_path);
std::unique_ptr<Estimator> make_kf_estimator(double dt, double accel_psd, double meas_sigma,
                                             uint64_t seed);

struct FlightLogRow {
  double t = 0.0;
  Pose true_pose;
  Pose est_pose;
  GuidanceTarget target;
  ControlCommand cmd;
  bool corrupted = false;
};

struct FlightLog {
  std::vector<FlightLogRow> rows;
  bool touched_down = false;
  bool crashed = false;  // reached the ground faster than the touchdown limit
  double touchdown_time = 0.0;
  double landing_error = 0.0;  // horizontal distance to pad at touchdown
  int frames_processed = 0;
  int frames_below_variance = 0;
  int imu_only_invocations = 0;

  std::string to_csv() const;
};

struct SimOptions {
  double control_rate_hz = 100.0;
  double cam_rate_hz = 10.0;
  int img_h = 36, img_w = 64, img_c = 1;
  double accel_noise_sigma = 0.05;
  double gyro_noise_sigma = 0.005;
  double accel_bias_sigma = 0.02;
  double gyro_bias_sigma = 0.002;
  VehicleParams vehicle;
  PidGains gains;
};

/// Closed-loop run: sensors simulated from the true state, estimate updated
/// at camera rate (held and propagated by its implied velocity in between),
/// guidance and PID at control rate. Ends at touchdown or timeout.
FlightLog fly(const Mission& mission, Estimator& estimator, const WorldSpec& world,
              const SimOptions& opts, uint64_t seed);

struct EvalReport {
  double trans_rmse = 0.0;
  double rot_rmse = 0.0;
  double clean_trans_rmse = 0.0;
  double corrupted_trans_rmse = 0.0;
  size_t n = 0, n_corrupted = 0;
  int imu_only_invocations = 0;
  Trajectory estimates;
  Trajectory truth;

  std::string summary() const;
};

/// Open-loop replay of a recorded dataset through the estimator (self-fed
/// previous pose for the learned model). Reports overall and per-subset
/// errors; subset membership is decided by the pixel-variance check.
EvalReport evaluate_open_loop(const Dataset& ds, Estimator& estimator);

}  // namespace dvio::sim
