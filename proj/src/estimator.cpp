#include <memory>

#include "dvio/flightsim.hpp"
#include "dvio/fusion.hpp"
#include "dvio/kalman.hpp"
#include "dvio/util.hpp"

namespace dvio::sim {

namespace {

class TruthEstimator final : public Estimator {
 public:
  void reset(const Pose&) override {}
  Pose on_frame(const Frame&, const ImuWindow&, const Pose& true_pose) override {
    return true_pose;
  }
  std::string name() const override { return "truth"; }
};

class LearnedEstimator final : public Estimator {
 public:
  explicit LearnedEstimator(fusion::FusionModel model) : model_(std::move(model)) {}

  void reset(const Pose& initial) override {
    prev_ = initial;
    core_ = model_.zero_core_state();
    imu_only_ = 0;
  }

  Pose on_frame(const Frame& frame, const ImuWindow& imu, const Pose&) override {
    Pose est;
    nn::LstmState next = core_;
    if (fusion::frame_usable(frame)) {
      std::tie(est, next) = model_.predict(Observation{frame, imu, std::nullopt}, prev_, core_);
    } else {
      ++imu_only_;
      std::tie(est, next) = model_.predict_imu_only(imu, prev_, core_);
      est.timestamp = frame.timestamp;
    }
    core_ = next;
    prev_ = est;
    return est;
  }

  int imu_only_count() const override { return imu_only_; }
  std::string name() const override { return "learned"; }

 private:
  fusion::FusionModel model_;
  Pose prev_;
  nn::LstmState core_;
  int imu_only_ = 0;
};

/// Constant-velocity Kalman baseline fed by noisy position measurements of
/// the true pose. Estimates translation only; the reported orientation is
/// identity.
class KfEstimator final : public Estimator {
 public:
  KfEstimator(double dt, double accel_psd, double meas_sigma, uint64_t seed)
      : model_(kf::make_constant_velocity_model(dt, accel_psd, meas_sigma)),
        meas_sigma_(meas_sigma),
        rng_(seed),
        seed_(seed) {}

  void reset(const Pose& initial) override {
    kf::Vec mean = kf::Vec::Zero(6);
    for (int axis = 0; axis < 3; ++axis) mean(2 * axis) = initial.position[axis];
    state_ = kf::make_state(mean, kf::Mat::Identity(6, 6));
    rng_ = Rng(seed_);
  }

  Pose on_frame(const Frame& frame, const ImuWindow&, const Pose& true_pose) override {
    kf::Vec y(3);
    for (int axis = 0; axis < 3; ++axis)
      y(axis) = true_pose.position[axis] + rng_.gaussian(0.0, meas_sigma_);
    state_ = kf::kf_step(model_, state_, y);
    return Pose(Vec3(state_.mean(0), state_.mean(2), state_.mean(4)), Quat::Identity(),
                frame.timestamp);
  }

  std::string name() const override { return "kf"; }

 private:
  kf::KalmanModel model_;
  kf::KalmanState state_;
  double meas_sigma_;
  Rng rng_;
  uint64_t seed_;
};

}  // namespace

std::unique_ptr<Estimator> make_truth_estimator() { return std::make_unique<TruthEstimator>(); }

std::unique_ptr<Estimator> make_learned_estimator(const std::string& checkpoint_path) {
  return std::make_unique<LearnedEstimator>(fusion::FusionModel::load(checkpoint_path));
}

std::unique_ptr<Estimator> make_kf_estimator(double dt, double accel_psd, double meas_sigma,
                                             uint64_t seed) {
  return std::make_unique<KfEstimator>(dt, accel_psd, meas_sigma, seed);
}

}  // namespace dvio::sim
