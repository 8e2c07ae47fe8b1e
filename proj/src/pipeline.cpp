#include "dvio/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "dvio/dataio.hpp"
#include "dvio/flightsim.hpp"
#include "dvio/fusion.hpp"
#include "dvio/kalman.hpp"
#include "dvio/svgplot.hpp"
#include "dvio/train.hpp"
#include "dvio/util.hpp"

namespace dvio::pipeline {

namespace {

/// Reads keys with defaults while recording every resolved value, so that
/// config.echo reproduces the run exactly.
class Resolver {
 public:
  explicit Resolver(const Config& in) : in_(in) {
    // Mission indirection: a `mission = file` key merges that file's
    // waypoint/pad entries; the echo inlines them instead of the path.
    if (auto mission = in_.get("mission"); mission && !mission->empty())
      in_.merge_from(Config::from_file(*mission));
  }

  double num(const std::string& key, double dflt) {
    double v = in_.get_double(key, dflt);
    echo_.override_key(key, in_.get(key).value_or(format_double(v)));
    return v;
  }
  long integer(const std::string& key, long dflt) {
    long v = in_.get_int(key, dflt);
    echo_.override_key(key, in_.get(key).value_or(std::to_string(v)));
    return v;
  }
  std::string str(const std::string& key, const std::string& dflt) {
    std::string v = in_.get_string(key, dflt);
    echo_.override_key(key, v);
    return v;
  }
  bool boolean(const std::string& key, bool dflt) {
    bool v = in_.get_bool(key, dflt);
    echo_.override_key(key, v ? "true" : "false");
    return v;
  }
  std::vector<std::string> repeated(const std::string& key) {
    auto vs = in_.get_all(key);
    for (const auto& v : vs) echo_.append(key, v);
    return vs;
  }
  bool has(const std::string& key) const { return in_.has(key); }
  const Config& input() const { return in_; }

  void write_echo(const std::string& out_dir) const { echo_.write_file(out_dir + "/config.echo"); }

 private:
  Config in_;
  Config echo_;
};

WorldSpec resolve_world(Resolver& r) {
  WorldSpec w;
  w.texture_period = r.num("texture_period", 0.75);
  w.texture_cells = static_cast<int>(r.integer("texture_cells", 8));
  w.texture_seed = static_cast<uint64_t>(r.integer("texture_seed", 1));
  w.footprint_per_alt = r.num("footprint_per_alt", 1.0);
  double pad_x = 0.0, pad_y = 0.0;
  if (auto pad = r.input().get("pad")) {
    auto f = split(*pad, ',');
    if (f.size() != 2) fail(ErrorKind::MalformedData, "bad pad value '" + *pad + "'");
    pad_x = std::stod(trim(f[0]));
    pad_y = std::stod(trim(f[1]));
  }
  r.str("pad", format_double(pad_x) + "," + format_double(pad_y));
  int pillar_count = static_cast<int>(r.integer("pillar_count", 10));
  double pillar_extent = r.num("pillar_extent", 2.5);
  uint64_t pillar_seed = static_cast<uint64_t>(r.integer("pillar_seed", 3));
  WorldSpec full = WorldSpec::with_random_pillars(pillar_count, pillar_extent, pillar_seed, pad_x,
                                                  pad_y);
  full.texture_period = w.texture_period;
  full.texture_cells = w.texture_cells;
  full.texture_seed = w.texture_seed;
  full.footprint_per_alt = w.footprint_per_alt;
  return full;
}

std::vector<Waypoint> resolve_waypoints(Resolver& r) {
  std::vector<Waypoint> wps;
  for (const auto& line : r.repeated("wp")) {
    auto f = split(line, ',');
    if (f.size() != 4) fail(ErrorKind::MalformedData, "bad waypoint '" + line + "'");
    Waypoint w;
    w.t = std::stod(trim(f[0]));
    w.pos = Vec3(std::stod(trim(f[1])), std::stod(trim(f[2])), std::stod(trim(f[3])));
    wps.push_back(w);
  }
  return wps;
}

fusion::FusionConfig resolve_fusion_config(Resolver& r) {
  fusion::FusionConfig cfg;
  cfg.img_h = static_cast<int>(r.integer("img_h", cfg.img_h));
  cfg.img_w = static_cast<int>(r.integer("img_w", cfg.img_w));
  cfg.img_c = static_cast<int>(r.integer("img_c", cfg.img_c));
  std::string ch = r.str("conv_channels", "6,12,24,48");
  cfg.conv_channels.clear();
  for (const auto& tok : split(ch, ',')) cfg.conv_channels.push_back(std::stoi(trim(tok)));
  cfg.visual_feature_dim = static_cast<int>(r.integer("visual_feature_dim", cfg.visual_feature_dim));
  cfg.inertial_hidden = static_cast<int>(r.integer("inertial_hidden", cfg.inertial_hidden));
  cfg.inertial_feature_dim =
      static_cast<int>(r.integer("inertial_feature_dim", cfg.inertial_feature_dim));
  cfg.core_hidden = static_cast<int>(r.integer("core_hidden", cfg.core_hidden));
  cfg.head_hidden = static_cast<int>(r.integer("head_hidden", cfg.head_hidden));
  cfg.gamma = r.num("gamma", cfg.gamma);
  cfg.loss_mode = r.str("loss", "sigma") == "beta" ? fusion::LossMode::FixedBeta
                                                   : fusion::LossMode::LearnedSigma;
  cfg.beta = r.num("beta", cfg.beta);
  cfg.tbptt_len = static_cast<int>(r.integer("tbptt", cfg.tbptt_len));
  cfg.lr = r.num("lr", cfg.lr);
  cfg.validate();
  return cfg;
}

sim::SimOptions resolve_sim_options(Resolver& r) {
  sim::SimOptions o;
  o.control_rate_hz = r.num("control_rate_hz", 100.0);
  o.cam_rate_hz = r.num("cam_rate_hz", 10.0);
  o.img_h = static_cast<int>(r.integer("img_h", 36));
  o.img_w = static_cast<int>(r.integer("img_w", 64));
  o.img_c = static_cast<int>(r.integer("img_c", 1));
  o.accel_noise_sigma = r.num("accel_noise_sigma", 0.05);
  o.gyro_noise_sigma = r.num("gyro_noise_sigma", 0.005);
  o.accel_bias_sigma = r.num("accel_bias_sigma", 0.02);
  o.gyro_bias_sigma = r.num("gyro_bias_sigma", 0.002);
  o.vehicle.mass = r.num("mass", 1.0);
  o.vehicle.drag = r.num("drag", 0.1);
  o.vehicle.attitude_lag = r.num("attitude_lag", 0.15);
  o.vehicle.max_tilt = r.num("max_tilt", 0.5236);
  o.vehicle.max_thrust = r.num("max_thrust", 25.0);
  o.gains.kp = r.num("pid_kp", 4.0);
  o.gains.ki = r.num("pid_ki", 0.2);
  o.gains.kd = r.num("pid_kd", 4.0);
  o.gains.integral_limit = r.num("pid_integral_limit", 0.5);
  return o;
}

sim::Mission resolve_mission(Resolver& r) {
  sim::Mission m;
  m.waypoints = resolve_waypoints(r);
  if (m.waypoints.empty()) fail(ErrorKind::InvalidArgument, "mission: no waypoints configured");
  auto pad = split(r.str("pad", "0,0"), ',');
  m.pad_x = std::stod(trim(pad[0]));
  m.pad_y = std::stod(trim(pad[1]));
  m.land = r.boolean("land", true);
  m.descent_rate = r.num("descent_rate", 0.5);
  m.touchdown_alt = r.num("touchdown_alt", 0.02);
  m.timeout = r.num("timeout", 60.0);
  m.corrupt_fraction = r.num("fly_corrupt_fraction", 0.0);
  return m;
}

std::unique_ptr<sim::Estimator> resolve_estimator(Resolver& r, uint64_t seed) {
  std::string checkpoint = r.str("checkpoint", "");
  std::string kind = r.str("estimator", checkpoint.empty() ? "truth" : "learned");
  if (kind == "truth") return sim::make_truth_estimator();
  if (kind == "kf") {
    double dt = 1.0 / r.num("cam_rate_hz", 10.0);
    double psd = r.num("kf_accel_psd", 0.5);
    double sigma = r.num("kf_meas_sigma_m", 0.03);
    return sim::make_kf_estimator(dt, psd, sigma, hash_combine(seed, 0x6b66ULL));
  }
  if (kind == "learned") {
    if (checkpoint.empty())
      fail(ErrorKind::InvalidArgument, "estimator 'learned' needs a checkpoint");
    return sim::make_learned_estimator(checkpoint);
  }
  fail(ErrorKind::InvalidArgument, "unknown estimator '" + kind + "'");
}

std::string resolve_out(Resolver& r) {
  std::string out = r.str("out", "");
  if (out.empty()) fail(ErrorKind::InvalidArgument, "missing required key 'out'");
  ensure_dir(out);
  return out;
}

Dataset load_split(const std::string& data_dir, const char* preferred) {
  if (file_exists(data_dir + "/" + preferred + "/imu.csv"))
    return load_euroc_layout(data_dir + "/" + preferred);
  return load_euroc_layout(data_dir);
}

void write_eval_artifacts(const std::string& out, const sim::EvalReport& rep) {
  std::ostringstream csv;
  csv << "t,true_px,true_py,true_pz,est_px,est_py,est_pz,trans_err_m,rot_err_rad\n";
  char buf[360];
  std::vector<double> ts, errs, tx, ty, ex, ey;
  for (size_t i = 0; i < rep.truth.size(); ++i) {
    const Pose& tp = rep.truth[i];
    const Pose& ep = rep.estimates[i];
    double te = translation_error(tp, ep), re = rotation_error(tp, ep);
    std::snprintf(buf, sizeof(buf), "%.9f,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  tp.timestamp, tp.position.x(), tp.position.y(), tp.position.z(),
                  ep.position.x(), ep.position.y(), ep.position.z(), te, re);
    csv << buf;
    ts.push_back(tp.timestamp);
    errs.push_back(te);
    tx.push_back(tp.position.x());
    ty.push_back(tp.position.y());
    ex.push_back(ep.position.x());
    ey.push_back(ep.position.y());
  }
  write_text_file(out + "/eval_overlay.csv", csv.str());
  write_text_file(out + "/eval_summary.txt", rep.summary());

  SvgPlot traj("Trajectory overlay (top view)", "x [m]", "y [m]");
  traj.set_equal_axes(true);
  traj.add_series("ground truth", tx, ty);
  traj.add_series("estimate", ex, ey);
  traj.save(out + "/eval_traj.svg");

  SvgPlot err("Translation error", "t [s]", "error [m]");
  err.add_series("translation error", ts, errs);
  err.save(out + "/eval_err.svg");
}

}  // namespace

// --- gen -------------------------------------------------------------------

RunResult run_gen(const Config& in) {
  Resolver r(in);
  std::string out = resolve_out(r);
  uint64_t seed = static_cast<uint64_t>(r.integer("seed", 7));

  WorldSpec world = resolve_world(r);
  FlightSpec flight;
  flight.waypoints = resolve_waypoints(r);
  if (flight.waypoints.empty()) fail(ErrorKind::InvalidArgument, "gen: no waypoints configured");
  flight.blend_frac = r.num("blend_frac", 0.1);
  flight.yaw_amplitude = r.num("yaw_amplitude", 0.0);
  flight.yaw_period = r.num("yaw_period", 10.0);
  flight.duration = r.num("duration_s", 20.1);
  flight.imu_rate_hz = r.num("imu_rate_hz", 100.0);
  flight.cam_rate_hz = r.num("cam_rate_hz", 10.0);
  flight.img_h = static_cast<int>(r.integer("img_h", 36));
  flight.img_w = static_cast<int>(r.integer("img_w", 64));
  flight.img_c = static_cast<int>(r.integer("img_c", 1));
  flight.accel_noise_sigma = r.num("accel_noise_sigma", 0.05);
  flight.gyro_noise_sigma = r.num("gyro_noise_sigma", 0.005);
  flight.accel_bias_sigma = r.num("accel_bias_sigma", 0.02);
  flight.gyro_bias_sigma = r.num("gyro_bias_sigma", 0.002);
  double corrupt = r.num("corrupt_fraction", 0.0);
  double train_fraction = r.num("train_fraction", 0.8);

  Dataset ds = generate_synthetic(world, flight, seed);
  ds = corrupt_frames(ds, corrupt, hash_combine(seed, 0x636f7272ULL));
  save_dataset(ds, out);
  auto [train_ds, test_ds] = split(ds, train_fraction);
  save_dataset(train_ds, out + "/train");
  save_dataset(test_ds, out + "/test");
  r.write_echo(out);

  size_t n_corrupted = 0;
  for (const auto& obs : ds.observations)
    if (obs.frame.corrupted) ++n_corrupted;

  RunResult res;
  res.metrics["n_observations"] = static_cast<double>(ds.size());
  res.metrics["n_train"] = static_cast<double>(train_ds.size());
  res.metrics["n_test"] = static_cast<double>(test_ds.size());
  res.metrics["n_corrupted"] = static_cast<double>(n_corrupted);
  res.metrics["n_frames"] = static_cast<double>(ds.size() + 1);
  std::ostringstream s;
  s << "generated " << ds.size() << " observations (" << ds.size() + 1 << " frames, "
    << n_corrupted << " corrupted) at " << out << "\n"
    << "split: " << train_ds.size() << " train / " << test_ds.size() << " test\n";
  res.summary = s.str();
  return res;
}

// --- train --------------------------------------------------------------

RunResult run_train(const Config& in) {
  Resolver r(in);
  std::string out = resolve_out(r);
  std::string data = r.str("data", "");
  if (data.empty()) fail(ErrorKind::InvalidArgument, "train: missing 'data'");
  fusion::FusionConfig cfg = resolve_fusion_config(r);
  fusion::TrainOptions opts;
  opts.epochs = static_cast<int>(r.integer("epochs", 300));
  opts.seed = static_cast<uint64_t>(r.integer("seed", 7));
  opts.resume_checkpoint = r.str("resume", "");

  Dataset train_ds = load_split(data, "train");
  Dataset val_ds;
  bool have_val = file_exists(data + "/test/imu.csv");
  if (have_val)
    val_ds = load_euroc_layout(data + "/test");
  else {
    double tf = r.num("train_fraction", 0.8);
    auto [tr, te] = split(train_ds, tf);
    train_ds = tr;
    val_ds = te;
  }
  r.write_echo(out);

  auto [model, result] = fusion::train_fresh(cfg, train_ds, val_ds, opts);

  std::vector<std::string> extra;
  extra.push_back("train.epoch = " + std::to_string(result.final_epoch));
  extra.push_back("train.best_epoch = " + std::to_string(result.best_epoch));
  extra.push_back("train.best_val_trans_rmse = " + format_double(result.best_val_trans_rmse));
  model.save(out + "/model.ckpt", extra);
  write_text_file(out + "/train_log.csv", result.log_csv());

  RunResult res;
  res.metrics["epochs"] = static_cast<double>(result.final_epoch);
  res.metrics["best_epoch"] = static_cast<double>(result.best_epoch);
  res.metrics["best_val_trans_rmse_m"] = result.best_val_trans_rmse;
  if (!result.log.empty()) {
    res.metrics["first_train_loss"] = result.log.front().train_loss;
    res.metrics["final_train_loss"] = result.log.back().train_loss;
    res.metrics["s_x"] = result.log.back().s_x;
    res.metrics["s_q"] = result.log.back().s_q;
  }
  std::ostringstream s;
  s << "trained " << result.final_epoch << " epochs; best val translation rmse "
    << format_double(result.best_val_trans_rmse) << " m at epoch " << result.best_epoch << "\n"
    << "checkpoint: " << out << "/model.ckpt\n";
  res.summary = s.str();
  return res;
}

// --- eval -----------------------------------------------------------------

RunResult run_eval(const Config& in) {
  Resolver r(in);
  std::string out = resolve_out(r);
  std::string data = r.str("data", "");
  if (data.empty()) fail(ErrorKind::InvalidArgument, "eval: missing 'data'");
  uint64_t seed = static_cast<uint64_t>(r.integer("seed", 7));
  auto estimator = resolve_estimator(r, seed);

  Dataset ds = load_split(data, "test");
  sim::EvalReport rep = sim::evaluate_open_loop(ds, *estimator);
  write_eval_artifacts(out, rep);
  r.write_echo(out);

  RunResult res;
  res.metrics["trans_rmse_m"] = rep.trans_rmse;
  res.metrics["rot_rmse_rad"] = rep.rot_rmse;
  res.metrics["clean_trans_rmse_m"] = rep.clean_trans_rmse;
  res.metrics["corrupted_trans_rmse_m"] = rep.corrupted_trans_rmse;
  res.metrics["n_observations"] = static_cast<double>(rep.n);
  res.metrics["n_corrupted"] = static_cast<double>(rep.n_corrupted);
  res.metrics["imu_only_invocations"] = static_cast<double>(rep.imu_only_invocations);
  res.summary = rep.summary();
  return res;
}

// --- bound -----------------------------------------------------------------

RunResult run_bound(const Config& in) {
  Resolver r(in);
  std::string out = resolve_out(r);
  uint64_t seed = static_cast<uint64_t>(r.integer("seed", 7));

  if (r.boolean("self_test", false)) {
    // Scalar system A=H=Q=R=1; fixed point of the Riccati map is the golden
    // ratio (1+sqrt(5))/2.
    kf::KalmanModel m;
    m.A = kf::Mat::Ones(1, 1);
    m.H = kf::Mat::Ones(1, 1);
    m.Q = kf::Mat::Ones(1, 1);
    m.R = kf::Mat::Ones(1, 1);
    auto ss = kf::riccati_steady_state(m, 1e-12, 10000);
    r.write_echo(out);
    RunResult res;
    res.metrics["riccati_scalar_fixed_point"] = ss.P(0, 0);
    res.metrics["iterations"] = ss.iterations;
    std::ostringstream s;
    s << "scalar riccati fixed point: " << format_double(ss.P(0, 0)) << " (expected (1+sqrt(5))/2 = "
      << format_double((1.0 + std::sqrt(5.0)) / 2.0) << ", " << ss.iterations << " iterations)\n";
    res.summary = s.str();
    return res;
  }

  std::string data = r.str("data", "");
  if (data.empty()) fail(ErrorKind::InvalidArgument, "bound: missing 'data'");
  Dataset ds = load_split(data, "test");
  Trajectory truth = ds.ground_truth_trajectory();

  auto estimator = resolve_estimator(r, seed);
  sim::EvalReport rep = sim::evaluate_open_loop(ds, *estimator);

  double dt = 1.0 / ds.meta.cam_rate_hz;
  double accel_psd = r.num("kf_accel_psd", 0.5);
  double nominal_alt = r.num("kf_nominal_alt", 1.5);
  double px_err = r.num("kf_meas_sigma_px", 1.0);
  double footprint = r.num("footprint_per_alt", 1.0);
  double gsd = nominal_alt * footprint / ds.meta.img_w;
  double meas_sigma = r.num("kf_meas_sigma_m", px_err * gsd);

  kf::KalmanModel model = kf::make_constant_velocity_model(dt, accel_psd, meas_sigma);
  kf::BoundReport rep_kf =
      kf::bound_report(model, truth, rep.estimates, hash_combine(seed, 0x626e64ULL));

  write_text_file(out + "/bound_report.csv", rep_kf.to_csv());
  write_text_file(out + "/bound_summary.txt", rep_kf.summary());
  SvgPlot err("Kalman filter vs learned estimator", "t [s]", "position error [m]");
  err.add_series("kf error", rep_kf.t, rep_kf.kf_err);
  err.add_series("ml error", rep_kf.t, rep_kf.ml_err);
  err.add_series("kf steady-state std",
                 rep_kf.t, std::vector<double>(rep_kf.t.size(), rep_kf.steady_std_3d));
  err.save(out + "/bound_err.svg");
  r.write_echo(out);

  RunResult res;
  res.metrics["kf_rmse_m"] = rep_kf.kf_rmse;
  res.metrics["ml_rmse_m"] = rep_kf.ml_rmse;
  res.metrics["kf_steady_std_m"] = rep_kf.steady_std_3d;
  res.summary = rep_kf.summary();
  return res;
}

// --- fly ------------------------------------------------------------------

RunResult run_fly(const Config& in) {
  Resolver r(in);
  std::string out = resolve_out(r);
  uint64_t seed = static_cast<uint64_t>(r.integer("seed", 7));
  WorldSpec world = resolve_world(r);
  sim::Mission mission = resolve_mission(r);
  sim::SimOptions opts = resolve_sim_options(r);
  auto estimator = resolve_estimator(r, seed);

  sim::FlightLog log = sim::fly(mission, *estimator, world, opts, seed);
  write_text_file(out + "/flight_log.csv", log.to_csv());

  std::vector<double> tx, ty, ex, ey, ts, tz, ez, dz;
  for (const auto& row : log.rows) {
    tx.push_back(row.true_pose.position.x());
    ty.push_back(row.true_pose.position.y());
    ex.push_back(row.est_pose.position.x());
    ey.push_back(row.est_pose.position.y());
    ts.push_back(row.t);
    tz.push_back(row.true_pose.position.z());
    ez.push_back(row.est_pose.position.z());
    dz.push_back(row.target.desired_position.z());
  }
  SvgPlot traj("Closed-loop trajectory (top view)", "x [m]", "y [m]");
  traj.set_equal_axes(true);
  traj.add_series("true", tx, ty);
  traj.add_series("estimate", ex, ey);
  traj.save(out + "/flight_traj.svg");
  SvgPlot alt("Altitude profile", "t [s]", "z [m]");
  alt.add_series("true", ts, tz);
  alt.add_series("estimate", ts, ez);
  alt.add_series("reference", ts, dz);
  alt.save(out + "/flight_alt.svg");
  r.write_echo(out);

  RunResult res;
  res.metrics["touched_down"] = log.touched_down ? 1.0 : 0.0;
  res.metrics["touchdown_time_s"] = log.touchdown_time;
  res.metrics["landing_error_m"] = log.landing_error;
  res.metrics["frames_processed"] = static_cast<double>(log.frames_processed);
  res.metrics["frames_below_variance"] = static_cast<double>(log.frames_below_variance);
  res.metrics["imu_only_invocations"] = static_cast<double>(log.imu_only_invocations);
  std::ostringstream s;
  if (log.touched_down)
    s << "touchdown at t=" << format_double(log.touchdown_time) << " s, landing error "
      << format_double(log.landing_error) << " m\n";
  else
    s << "no touchdown before timeout\n";
  s << "frames: " << log.frames_processed << ", imu-only: " << log.imu_only_invocations << "\n";
  res.summary = s.str();
  return res;
}

// --- report ------------------------------------------------------------

RunResult run_report(const Config& in) {
  Resolver r(in);
  std::string out = resolve_out(r);
  int written = 0;

  if (file_exists(out + "/train_log.csv")) {
    std::istringstream csv(read_text_file(out + "/train_log.csv"));
    std::string line;
    std::getline(csv, line);  // header
    std::vector<double> ep, loss, vt;
    while (std::getline(csv, line)) {
      auto f = split(trim(line), ',');
      if (f.size() < 6) continue;
      ep.push_back(std::stod(f[0]));
      loss.push_back(std::stod(f[1]));
      vt.push_back(std::stod(f[2]));
    }
    SvgPlot p("Training loss", "epoch", "loss");
    p.add_series("train loss", ep, loss);
    p.save(out + "/train_loss.svg");
    SvgPlot q("Validation translation RMSE", "epoch", "rmse [m]");
    q.add_series("val rmse", ep, vt);
    q.save(out + "/train_val_rmse.svg");
    written += 2;
  }
  r.write_echo(out);

  RunResult res;
  res.metrics["files_written"] = written;
  res.summary = "wrote " + std::to_string(written) + " plot file(s) under " + out + "\n";
  return res;
}

}  // namespace pipeline
