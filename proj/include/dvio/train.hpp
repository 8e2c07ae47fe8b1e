#pragma once

#include <string>
#include <vector>

#include "dvio/dataio.hpp"
#include "dvio/fusion.hpp"

namespace dvio::fusion {

struct EpochRow {
  int epoch = 0;
  double train_loss = 0.0;
  double val_trans_rmse = 0.0;
  double val_rot_rmse = 0.0;
  double s_x = 0.0;
  double s_q = 0.0;
};

struct TrainResult {
  std::vector<EpochRow> log;
  int best_epoch = 0;
  double best_val_trans_rmse = 0.0;
  int final_epoch = 0;

  /// CSV: epoch,train_loss,val_trans_rmse_m,val_rot_rmse_rad,s_x,s_q
  std::string log_csv() const;
};

struct TrainOptions {
  int epochs = 300;
  uint64_t seed = 7;
  std::string resume_checkpoint;  // empty = fresh initialization
};

/// Self-fed open-loop replay: prev_pose starts at the dataset's leading
/// ground truth and is then the model's own estimate; corrupted frames take
/// the IMU-only path. Returns the estimated trajectory.
Trajectory open_loop_trajectory(const FusionModel& model, const Dataset& ds);

/// Translation / rotation RMSE of an estimate trajectory vs ground truth.
std::pair<double, double> trajectory_rmse(const Trajectory& est, const Trajectory& truth);

/// End-to-end training: truncated backpropagation through time over
/// contiguous sequences (cfg.tbptt_len observations), teacher forcing with
/// ground-truth previous poses, Adam at cfg.lr. Validates on val_ds after
/// every epoch and keeps the best-validation parameters, which are the ones
/// left in `model` on return.
TrainResult train(FusionModel& model, const Dataset& train_ds, const Dataset& val_ds,
                  const TrainOptions& opts);

/// Convenience: builds the model (standardizers fitted on train_ds, or
/// loaded from the resume checkpoint) and trains it.
std::pair<FusionModel, TrainResult> train_fresh(const FusionConfig& cfg, const Dataset& train_ds,
                                                const Dataset& val_ds, const TrainOptions& opts);

/// Fits position / IMU-channel standardizers from a dataset's ground truth
/// and inertial samples.
void fit_standardizers(FusionModel& model, const Dataset& train_ds);

}  // namespace dvio::fusion
