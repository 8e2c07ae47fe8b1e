#include "dvio/flightsim.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "dvio/util.hpp"

namespace dvio::sim {

Eigen::Matrix3d attitude_rotation(double yaw, double pitch, double roll) {
  // R = Rz(yaw) * Ry(-pitch) * Rx(roll); see the ControlCommand convention.
  Eigen::Matrix3d rz = Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
  Eigen::Matrix3d ry = Eigen::AngleAxisd(-pitch, Vec3::UnitY()).toRotationMatrix();
  Eigen::Matrix3d rx = Eigen::AngleAxisd(roll, Vec3::UnitX()).toRotationMatrix();
  return rz * ry * rx;
}

namespace {

struct EulerAngles {
  double yaw, pitch, roll;
};

EulerAngles extract_euler(const Quat& q) {
  Eigen::Matrix3d r = q.toRotationMatrix();
  EulerAngles e;
  e.yaw = std::atan2(r(1, 0), r(0, 0));
  e.pitch = std::asin(std::clamp(r(2, 0), -1.0, 1.0));
  e.roll = std::atan2(r(2, 1), r(2, 2));
  return e;
}

}  // namespace

VehicleState dynamics_step(const VehicleState& state, const ControlCommand& cmd,
                           const VehicleParams& params, double dt) {
  if (dt <= 0.0) fail(ErrorKind::InvalidArgument, "dynamics_step: dt <= 0");

  EulerAngles att = extract_euler(state.orientation);
  double alpha = 1.0 - std::exp(-dt / params.attitude_lag);
  EulerAngles next{att.yaw + alpha * (cmd.yaw - att.yaw),
                   att.pitch + alpha * (cmd.pitch - att.pitch),
                   att.roll + alpha * (cmd.roll - att.roll)};

  Eigen::Matrix3d rot = attitude_rotation(next.yaw, next.pitch, next.roll);

  // Body rates from the ZYX Euler rate map (standard pitch is -pitch here).
  double dyaw = (next.yaw - att.yaw) / dt;
  double dpitch_std = -(next.pitch - att.pitch) / dt;
  double droll = (next.roll - att.roll) / dt;
  double th = -next.pitch, ph = next.roll;
  Vec3 omega(droll - dyaw * std::sin(th),
             dpitch_std * std::cos(ph) + dyaw * std::cos(th) * std::sin(ph),
             -dpitch_std * std::sin(ph) + dyaw * std::cos(th) * std::cos(ph));

  double thrust = std::max(cmd.thrust, 0.0);
  Vec3 accel = (thrust / params.mass) * (rot * Vec3::UnitZ()) + Vec3(0.0, 0.0, -kGravity) -
               (params.drag / params.mass) * state.velocity;

  VehicleState out;
  out.velocity = state.velocity + accel * dt;
  out.position = state.position + out.velocity * dt;
  out.orientation = quat_canonical(Quat(rot));
  out.angular_velocity = omega;
  out.time = state.time + dt;
  return out;
}

// --- Mission / guidance -----------------------------------------------------

Mission Mission::from_config(const Config& cfg) {
  Mission m;
  for (const auto& wp : cfg.get_all("wp")) {
    auto f = split(wp, ',');
    if (f.size() != 4) fail(ErrorKind::MalformedData, "mission: bad waypoint '" + wp + "'");
    Waypoint w;
    w.t = std::stod(trim(f[0]));
    w.pos = Vec3(std::stod(trim(f[1])), std::stod(trim(f[2])), std::stod(trim(f[3])));
    m.waypoints.push_back(w);
  }
  if (m.waypoints.empty()) fail(ErrorKind::InvalidArgument, "mission: no waypoints");
  if (auto pad = cfg.get("pad")) {
    auto f = split(*pad, ',');
    if (f.size() != 2) fail(ErrorKind::MalformedData, "mission: bad pad '" + *pad + "'");
    m.pad_x = std::stod(trim(f[0]));
    m.pad_y = std::stod(trim(f[1]));
  }
  m.land = cfg.get_bool("land", m.land);
  m.descent_rate = cfg.get_double("descent_rate", m.descent_rate);
  m.touchdown_alt = cfg.get_double("touchdown_alt", m.touchdown_alt);
  m.timeout = cfg.get_double("timeout", m.timeout);
  m.corrupt_fraction = cfg.get_double("fly_corrupt_fraction", m.corrupt_fraction);
  return m;
}

Pose Mission::start_pose() const {
  return Pose(waypoints.front().pos, Quat::Identity(), waypoints.front().t);
}

GuidanceTarget guidance(const Pose& current_estimate, const Mission& plan, double t) {
  (void)current_estimate;  // the reference is a time schedule by design
  if (plan.waypoints.empty()) fail(ErrorKind::InvalidArgument, "guidance: empty plan");
  GuidanceTarget out;
  const auto& wps = plan.waypoints;
  if (t <= wps.front().t) {
    out.desired_position = wps.front().pos;
    return out;
  }
  for (size_t i = 0; i + 1 < wps.size(); ++i) {
    if (t <= wps[i + 1].t) {
      double span = wps[i + 1].t - wps[i].t;
      double u = (t - wps[i].t) / span;
      out.desired_position = (1.0 - u) * wps[i].pos + u * wps[i + 1].pos;
      out.desired_velocity = (wps[i + 1].pos - wps[i].pos) / span;
      return out;
    }
  }
  const Waypoint& last = wps.back();
  if (!plan.land) {
    out.desired_position = last.pos;
    return out;
  }
  out.landing_phase = true;
  double descended = plan.descent_rate * (t - last.t);
  double z = last.pos.z() - descended;
  if (z <= 0.0) {
    out.desired_position = Vec3(plan.pad_x, plan.pad_y, 0.0);
    out.desired_velocity = Vec3::Zero();
  } else {
    out.desired_position = Vec3(plan.pad_x, plan.pad_y, z);
    out.desired_velocity = Vec3(0.0, 0.0, -plan.descent_rate);
  }
  return out;
}

// --- PID ----------------------------------------------------------------

ControlCommand PidController::update(const Pose& estimate, const Vec3& est_velocity,
                                     const GuidanceTarget& target, double dt) {
  if (dt <= 0.0) fail(ErrorKind::InvalidArgument, "pid: dt <= 0");
  Vec3 err = target.desired_position - estimate.position;
  integral_ += err * dt;
  for (int i = 0; i < 3; ++i)
    integral_[i] = std::clamp(integral_[i], -gains_.integral_limit, gains_.integral_limit);
  Vec3 a_des = gains_.kp * err + gains_.ki * integral_ +
               gains_.kd * (target.desired_velocity - est_velocity);

  // Yaw is held; rotate the lateral acceleration demand into the yaw frame.
  double yaw = 0.0;
  double c = std::cos(yaw), s = std::sin(yaw);
  double ax = c * a_des.x() + s * a_des.y();
  double ay = -s * a_des.x() + c * a_des.y();

  ControlCommand cmd;
  cmd.yaw = yaw;
  cmd.pitch = std::clamp(-ax / kGravity, -vehicle_.max_tilt, vehicle_.max_tilt);
  cmd.roll = std::clamp(-ay / kGravity, -vehicle_.max_tilt, vehicle_.max_tilt);
  double denom = std::cos(cmd.pitch) * std::cos(cmd.roll);
  cmd.thrust = std::clamp(vehicle_.mass * (a_des.z() + kGravity) / denom, 0.0,
                          vehicle_.max_thrust);
  return cmd;
}

// --- Flight loop -----------------------------------------------------------

std::string FlightLog::to_csv() const {
  std::ostringstream out;
  out << "t,true_px,true_py,true_pz,true_qw,true_qx,true_qy,true_qz,"
         "est_px,est_py,est_pz,est_qw,est_qx,est_qy,est_qz,"
         "des_x,des_y,des_z,cmd_F,cmd_psi,cmd_theta,cmd_phi,corrupted\n";
  char buf[768];
  for (const auto& r : rows) {
    std::snprintf(
        buf, sizeof(buf),
        "%.9f,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,"
        "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n",
        r.t, r.true_pose.position.x(), r.true_pose.position.y(), r.true_pose.position.z(),
        r.true_pose.orientation.w(), r.true_pose.orientation.x(), r.true_pose.orientation.y(),
        r.true_pose.orientation.z(), r.est_pose.position.x(), r.est_pose.position.y(),
        r.est_pose.position.z(), r.est_pose.orientation.w(), r.est_pose.orientation.x(),
        r.est_pose.orientation.y(), r.est_pose.orientation.z(), r.target.desired_position.x(),
        r.target.desired_position.y(), r.target.desired_position.z(), r.cmd.thrust, r.cmd.yaw,
        r.cmd.pitch, r.cmd.roll, r.corrupted ? 1 : 0);
    out << buf;
  }
  return out.str();
}

FlightLog fly(const Mission& mission, Estimator& estimator, const WorldSpec& world,
              const SimOptions& opts, uint64_t seed) {
  if (mission.waypoints.empty()) fail(ErrorKind::InvalidArgument, "fly: mission has no waypoints");
  double dt = 1.0 / opts.control_rate_hz;
  double ratio = opts.control_rate_hz / opts.cam_rate_hz;
  if (std::abs(ratio - std::round(ratio)) > 1e-9)
    fail(ErrorKind::InvalidArgument, "fly: camera rate must divide control rate");
  long steps_per_frame = static_cast<long>(std::llround(ratio));

  Rng imu_rng(seed);
  Rng corrupt_rng(hash_combine(seed, 0x6672616d65ULL));
  Vec3 accel_bias(imu_rng.gaussian(0.0, opts.accel_bias_sigma),
                  imu_rng.gaussian(0.0, opts.accel_bias_sigma),
                  imu_rng.gaussian(0.0, opts.accel_bias_sigma));
  Vec3 gyro_bias(imu_rng.gaussian(0.0, opts.gyro_bias_sigma),
                 imu_rng.gaussian(0.0, opts.gyro_bias_sigma),
                 imu_rng.gaussian(0.0, opts.gyro_bias_sigma));

  VehicleState state;
  state.position = mission.waypoints.front().pos;
  state.time = mission.waypoints.front().t;

  Pose start = mission.start_pose();
  estimator.reset(start);
  PidController pid(opts.gains, opts.vehicle);

  FlightLog log;
  Pose est_at_frame = start;
  double est_frame_time = state.time;
  Vec3 est_velocity = Vec3::Zero();
  bool latest_corrupted = false;
  std::vector<ImuSample> buffer;

  const Vec3 gravity_vec(0.0, 0.0, -kGravity);
  long max_steps = static_cast<long>(std::llround(mission.timeout / dt));

  for (long i = 0; i <= max_steps; ++i) {
    double t = state.time;

    if (i > 0 && i % steps_per_frame == 0) {
      ImuWindow win;
      win.t_start = t - static_cast<double>(steps_per_frame) * dt;
      win.t_end = t;
      win.samples = buffer;
      buffer.clear();

      Pose true_pose(state.position, state.orientation, t);
      Frame frame = render_frame(world, true_pose, opts.img_h, opts.img_w, opts.img_c);
      frame.timestamp = t;
      if (mission.corrupt_fraction > 0.0 &&
          corrupt_rng.uniform(0.0, 1.0) < mission.corrupt_fraction) {
        frame.corrupted = true;
        std::fill(frame.pixels.begin(), frame.pixels.end(), 0.0);
      }
      latest_corrupted = frame.corrupted;
      ++log.frames_processed;
      if (frame.variance() < kCorruptionVarianceThreshold) ++log.frames_below_variance;

      Pose est = estimator.on_frame(frame, win, true_pose);
      est_velocity = (est.position - est_at_frame.position) / (t - est_frame_time);
      est_at_frame = est;
      est_frame_time = t;
    }

    // Hold the latest estimate, propagated by its implied velocity.
    Pose est_now = est_at_frame;
    est_now.position += est_velocity * (t - est_frame_time);
    est_now.timestamp = t;

    GuidanceTarget target = guidance(est_now, mission, t);
    ControlCommand cmd = pid.update(est_now, est_velocity, target, dt);

    FlightLogRow row;
    row.t = t;
    row.true_pose = Pose(state.position, state.orientation, t);
    row.est_pose = est_now;
    row.target = target;
    row.cmd = cmd;
    row.corrupted = latest_corrupted;
    log.rows.push_back(row);

    VehicleState next = dynamics_step(state, cmd, opts.vehicle, dt);
    Vec3 accel_world = (next.velocity - state.velocity) / dt;

    ImuSample s;
    s.timestamp = t;
    Eigen::Matrix3d rot = next.orientation.toRotationMatrix();
    s.accel = rot.transpose() * (accel_world - gravity_vec) + accel_bias +
              Vec3(imu_rng.gaussian(0.0, opts.accel_noise_sigma),
                   imu_rng.gaussian(0.0, opts.accel_noise_sigma),
                   imu_rng.gaussian(0.0, opts.accel_noise_sigma));
    s.gyro = next.angular_velocity + gyro_bias +
             Vec3(imu_rng.gaussian(0.0, opts.gyro_noise_sigma),
                  imu_rng.gaussian(0.0, opts.gyro_noise_sigma),
                  imu_rng.gaussian(0.0, opts.gyro_noise_sigma));
    buffer.push_back(s);

    state = next;

    if (mission.land && state.position.z() <= mission.touchdown_alt &&
        std::abs(state.velocity.z()) < 1.0) {
      log.touched_down = true;
      log.touchdown_time = state.time;
      log.landing_error = std::hypot(state.position.x() - mission.pad_x,
                                     state.position.y() - mission.pad_y);
      break;
    }
  }
  log.imu_only_invocations = estimator.imu_only_count();
  return log;
}

// --- Open-loop evaluation --------------------------------------------------

std::string EvalReport::summary() const {
  std::ostringstream out;
  out << "observations: " << n << " (corrupted " << n_corrupted << ")\n"
      << "translation rmse [m]: " << format_double(trans_rmse) << "\n"
      << "rotation rmse [rad]: " << format_double(rot_rmse) << "\n"
      << "clean translation rmse [m]: " << format_double(clean_trans_rmse) << "\n"
      << "corrupted translation rmse [m]: " << format_double(corrupted_trans_rmse) << "\n"
      << "imu-only invocations: " << imu_only_invocations << "\n";
  return out.str();
}

EvalReport evaluate_open_loop(const Dataset& ds, Estimator& estimator) {
  if (ds.observations.empty()) fail(ErrorKind::InvalidArgument, "evaluate: empty dataset");
  Pose initial;
  if (ds.leading_ground_truth)
    initial = *ds.leading_ground_truth;
  else if (ds.observations.front().ground_truth)
    initial = *ds.observations.front().ground_truth;
  else
    fail(ErrorKind::InvalidArgument, "evaluate: dataset has no ground truth");

  estimator.reset(initial);
  EvalReport rep;
  double acc = 0.0, racc = 0.0, clean_acc = 0.0, corr_acc = 0.0;
  size_t n_clean = 0;
  for (const auto& obs : ds.observations) {
    if (!obs.ground_truth) fail(ErrorKind::InvalidArgument, "evaluate: missing ground truth");
    Pose est = estimator.on_frame(obs.frame, obs.imu, *obs.ground_truth);
    bool corrupted = obs.frame.variance() < kCorruptionVarianceThreshold;
    double te = translation_error(est, *obs.ground_truth);
    double re = rotation_error(est, *obs.ground_truth);
    acc += te * te;
    racc += re * re;
    if (corrupted) {
      corr_acc += te * te;
      ++rep.n_corrupted;
    } else {
      clean_acc += te * te;
      ++n_clean;
    }
    rep.estimates.push_back(est);
    rep.truth.push_back(*obs.ground_truth);
  }
  rep.n = ds.observations.size();
  rep.trans_rmse = std::sqrt(acc / static_cast<double>(rep.n));
  rep.rot_rmse = std::sqrt(racc / static_cast<double>(rep.n));
  rep.clean_trans_rmse = n_clean ? std::sqrt(clean_acc / static_cast<double>(n_clean)) : 0.0;
  rep.corrupted_trans_rmse =
      rep.n_corrupted ? std::sqrt(corr_acc / static_cast<double>(rep.n_corrupted)) : 0.0;
  rep.imu_only_invocations = estimator.imu_only_count();
  return rep;
}

}  // namespace dvio::sim
