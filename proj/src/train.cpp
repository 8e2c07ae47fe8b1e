#include "dvio/train.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "dvio/config.hpp"
#include "dvio/util.hpp"

namespace dvio::fusion {

std::string TrainResult::log_csv() const {
  std::ostringstream out;
  out << "epoch,train_loss,val_trans_rmse_m,val_rot_rmse_rad,s_x,s_q\n";
  char buf[256];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.train_loss,
                  r.val_trans_rmse, r.val_rot_rmse, r.s_x, r.s_q);
    out << buf;
  }
  return out.str();
}

Trajectory open_loop_trajectory(const FusionModel& model, const Dataset& ds) {
  if (ds.observations.empty()) fail(ErrorKind::InvalidArgument, "open loop: empty dataset");
  Pose prev;
  if (ds.leading_ground_truth)
    prev = *ds.leading_ground_truth;
  else if (ds.observations.front().ground_truth)
    prev = *ds.observations.front().ground_truth;
  else
    fail(ErrorKind::InvalidArgument, "open loop: dataset has no ground truth to start from");

  nn::LstmState core = model.zero_core_state();
  Trajectory est;
  for (const auto& obs : ds.observations) {
    auto [pose, next] = model.predict(obs, prev, core);
    core = next;
    est.push_back(pose);
    prev = pose;
  }
  return est;
}

std::pair<double, double> trajectory_rmse(const Trajectory& est, const Trajectory& truth) {
  if (est.size() != truth.size() || est.empty())
    fail(ErrorKind::DimensionMismatch, "trajectory_rmse: length mismatch or empty");
  double tacc = 0.0, racc = 0.0;
  for (size_t i = 0; i < est.size(); ++i) {
    double te = translation_error(est[i], truth[i]);
    double re = rotation_error(est[i], truth[i]);
    tacc += te * te;
    racc += re * re;
  }
  double n = static_cast<double>(est.size());
  return {std::sqrt(tacc / n), std::sqrt(racc / n)};
}

void fit_standardizers(FusionModel& model, const Dataset& train_ds) {
  std::vector<std::vector<double>> pos_rows, imu_rows;
  for (const auto& obs : train_ds.observations) {
    if (obs.ground_truth)
      pos_rows.push_back({obs.ground_truth->position.x(), obs.ground_truth->position.y(),
                          obs.ground_truth->position.z()});
    for (const auto& s : obs.imu.samples)
      imu_rows.push_back(
          {s.accel.x(), s.accel.y(), s.accel.z(), s.gyro.x(), s.gyro.y(), s.gyro.z()});
  }
  if (pos_rows.empty() || imu_rows.empty())
    fail(ErrorKind::InvalidArgument, "fit_standardizers: training set lacks ground truth or imu");
  model.set_standardizers(Standardizer::fit(pos_rows), Standardizer::fit(imu_rows));
}

namespace {

const Pose& teacher_prev(const Dataset& ds, size_t i) {
  if (i == 0) {
    if (ds.leading_ground_truth) return *ds.leading_ground_truth;
    return *ds.observations[0].ground_truth;
  }
  return *ds.observations[i - 1].ground_truth;
}

struct Snapshot {
  std::vector<nn::Tensor> values;
};

Snapshot take_snapshot(const nn::ParameterStore& store) {
  Snapshot s;
  for (const auto* p : store.all()) s.values.push_back(p->value);
  return s;
}

void restore_snapshot(nn::ParameterStore& store, const Snapshot& s) {
  auto params = store.all();
  for (size_t i = 0; i < params.size(); ++i) params[i]->value = s.values[i];
}

}  // namespace

TrainResult train(FusionModel& model, const Dataset& train_ds, const Dataset& val_ds,
                  const TrainOptions& opts) {
  if (train_ds.observations.empty()) fail(ErrorKind::InvalidArgument, "train: empty training set");
  for (const auto& obs : train_ds.observations)
    if (!obs.ground_truth) fail(ErrorKind::InvalidArgument, "train: missing ground truth");

  int epoch_offset = 0;
  if (!opts.resume_checkpoint.empty()) {
    Config c = manifest_config(read_text_file(opts.resume_checkpoint + ".manifest"));
    epoch_offset = static_cast<int>(c.get_int("train.epoch", 0));
  }

  nn::Adam adam(model.params().all(), model.config().lr);
  TrainResult result;
  result.best_val_trans_rmse = std::numeric_limits<double>::infinity();
  Snapshot best = take_snapshot(model.params());
  int best_epoch = epoch_offset;

  const size_t n = train_ds.observations.size();
  const size_t chunk_len = static_cast<size_t>(model.config().tbptt_len);

  for (int e = 1; e <= opts.epochs; ++e) {
    double loss_sum = 0.0;
    size_t steps = 0;
    for (size_t start = 0; start < n; start += chunk_len) {
      size_t end = std::min(start + chunk_len, n);
      try {
        Builder b;
        nn::LstmNodes core = model.core_state_nodes(model.zero_core_state());
        std::vector<nn::Value> losses;
        for (size_t i = start; i < end; ++i) {
          const Observation& obs = train_ds.observations[i];
          const Frame* frame = frame_usable(obs.frame) ? &obs.frame : nullptr;
          StepNodes step = model.build_step(b, frame, obs.imu, teacher_prev(train_ds, i), core);
          core = step.core;
          losses.push_back(model.build_loss(b, step, *obs.ground_truth));
        }
        nn::Value total = losses[0];
        for (size_t k = 1; k < losses.size(); ++k) total = nn::add(total, losses[k]);
        nn::Value chunk_loss = nn::scale(total, 1.0 / static_cast<double>(losses.size()));
        nn::backward(chunk_loss);
        model.params().zero_all_grads();
        b.harvest_grads();
        adam.step();
        loss_sum += chunk_loss->value[0] * static_cast<double>(losses.size());
        steps += losses.size();
      } catch (const Error& err) {
        if (err.kind() == ErrorKind::NumericFault)
          fail(ErrorKind::NumericFault,
               "training aborted at epoch " + std::to_string(epoch_offset + e) + ", observation " +
                   std::to_string(start) + ": " + err.what());
        throw;
      }
    }

    EpochRow row;
    row.epoch = epoch_offset + e;
    row.train_loss = loss_sum / static_cast<double>(steps);
    row.s_x = model.s_x();
    row.s_q = model.s_q();
    if (!val_ds.observations.empty()) {
      Trajectory est = open_loop_trajectory(model, val_ds);
      auto [trmse, rrmse] = trajectory_rmse(est, val_ds.ground_truth_trajectory());
      row.val_trans_rmse = trmse;
      row.val_rot_rmse = rrmse;
      if (trmse < result.best_val_trans_rmse) {
        result.best_val_trans_rmse = trmse;
        best = take_snapshot(model.params());
        best_epoch = row.epoch;
      }
    }
    result.log.push_back(row);
  }

  result.final_epoch = epoch_offset + opts.epochs;
  result.best_epoch = best_epoch;
  if (!val_ds.observations.empty()) restore_snapshot(model.params(), best);
  return result;
}

std::pair<FusionModel, TrainResult> train_fresh(const FusionConfig& cfg, const Dataset& train_ds,
                                                const Dataset& val_ds, const TrainOptions& opts) {
  if (!opts.resume_checkpoint.empty()) {
    FusionModel model = FusionModel::load(opts.resume_checkpoint);
    TrainResult r = train(model, train_ds, val_ds, opts);
    return {std::move(model), std::move(r)};
  }
  FusionModel model(cfg, opts.seed);
  fit_standardizers(model, train_ds);
  TrainResult r = train(model, train_ds, val_ds, opts);
  return {std::move(model), std::move(r)};
}

}  // namespace dvio::fusion
