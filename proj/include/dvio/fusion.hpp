#pragma once

#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "dvio/config.hpp"
#include "dvio/dataio.hpp"
#include "dvio/geometry.hpp"
#include "dvio/graph.hpp"
#include "dvio/optim.hpp"

namespace dvio::fusion {

/// key=value lines of a checkpoint manifest; parameter shape lines are
/// skipped.
Config manifest_config(const std::string& text);

enum class LossMode { FixedBeta, LearnedSigma };

struct FusionConfig {
  int img_h = 36, img_w = 64, img_c = 1;
  std::vector<int> conv_channels = {6, 12, 24, 48};  // stem, then one per block
  int visual_feature_dim = 64;
  int inertial_hidden = 32;
  int inertial_feature_dim = 32;
  int core_hidden = 128;
  int head_hidden = 1024;
  double gamma = 0.5;
  LossMode loss_mode = LossMode::LearnedSigma;
  double beta = 500.0;  // only used in FixedBeta mode
  int tbptt_len = 8;
  double lr = 1e-4;

  void validate() const;
  std::vector<std::string> to_manifest() const;
  static FusionConfig from_manifest(const std::string& manifest_text);
};

/// Per-channel affine standardization fitted on the training split.
struct Standardizer {
  std::vector<double> mean, stdev;

  std::vector<double> apply(const std::vector<double>& x) const;
  static Standardizer fit(const std::vector<std::vector<double>>& rows);
  static Standardizer identity(size_t dims);
};

struct FeatureVector {
  enum class Kind { Visual, Inertial, Fused };
  std::vector<double> values;
  Kind kind = Kind::Fused;
};

/// Graph-building context for one forward/backward pass: caches the leaf
/// node per parameter so a parameter used at several timesteps accumulates
/// its gradient in a single leaf.
struct Builder {
  std::unordered_map<nn::Parameter*, nn::Value> leaves;
  nn::Value touch(nn::Parameter& p);
  /// Copies each touched leaf's grad into the parameter's grad slot.
  void harvest_grads() const;
};

struct StepNodes {
  nn::Value trans;     // raw translation head, [3]
  nn::Value quat_raw;  // raw quaternion head, [4]
  nn::LstmNodes core;  // state after the step
};

/// The pose regressor: visual residual encoder -> z_V, inertial LSTM -> z_I,
/// z_t = concat(z_V, z_I), core LSTM over (z_t ++ previous-pose encoding),
/// shared hidden layer, translation and quaternion heads. A trainable
/// placeholder vector stands in for z_V when the camera is corrupted, so the
/// fused dimension never changes.
class FusionModel {
 public:
  FusionModel(const FusionConfig& cfg, uint64_t seed);

  static FusionModel load(const std::string& checkpoint_path);
  void save(const std::string& checkpoint_path,
            const std::vector<std::string>& extra_manifest = {}) const;

  const FusionConfig& config() const { return cfg_; }
  nn::ParameterStore& params() { return store_; }
  const nn::ParameterStore& params() const { return store_; }

  void set_standardizers(Standardizer pos, Standardizer imu);
  const Standardizer& pos_standardizer() const { return pos_std_; }
  const Standardizer& imu_standardizer() const { return imu_std_; }

  /// Per-step LSTM input for one inertial sample: standardized accel and
  /// gyro plus the normalized intra-window time offset.
  std::vector<double> inertial_input(const ImuSample& s, const ImuWindow& win) const;
  std::vector<double> encode_prev_pose(const Pose& prev) const;

  // Graph construction (training and inference share these).
  nn::Value build_visual(Builder& b, const Frame& frame) const;
  nn::Value build_visual_placeholder(Builder& b) const;
  nn::Value build_inertial(Builder& b, const ImuWindow& win) const;
  /// frame == nullptr selects the placeholder (IMU-only) path.
  StepNodes build_step(Builder& b, const Frame* frame, const ImuWindow& win, const Pose& prev,
                       const nn::LstmNodes& core) const;
  nn::LstmNodes core_state_nodes(const nn::LstmState& s) const;

  /// Loss on the raw head outputs against (x, q/||q||):
  ///   L_x = ||t - x||_2 + gamma ||t - x||_1, L_q likewise on quaternions.
  /// FixedBeta: L_x + beta L_q. LearnedSigma:
  ///   L_x exp(-s_x) + s_x + L_q exp(-s_q) + s_q.
  nn::Value build_loss(Builder& b, const StepNodes& step, const Pose& truth) const;

  // Spec-level operations (forward only).
  FeatureVector encode_visual(const Frame& frame) const;
  FeatureVector encode_inertial(const ImuWindow& win) const;
  std::pair<Pose, nn::LstmState> predict(const Observation& obs, const Pose& prev,
                                         const nn::LstmState& core) const;
  std::pair<Pose, nn::LstmState> predict_imu_only(const ImuWindow& win, const Pose& prev,
                                                  const nn::LstmState& core) const;

  double s_x() const { return store_.get("loss.s_x").value[0]; }
  double s_q() const { return store_.get("loss.s_q").value[0]; }

  nn::LstmState zero_core_state() const { return nn::LstmState::zero(cfg_.core_hidden); }

  /// Raw-head vector to a valid pose: quaternion normalized and canonical;
  /// a degenerate raw quaternion (norm <= 1e-12) falls back to identity.
  static Pose heads_to_pose(const std::vector<double>& trans, const std::vector<double>& quat,
                            double timestamp);

 private:
  void init_params(uint64_t seed);

  FusionConfig cfg_;
  nn::ParameterStore store_;
  Standardizer pos_std_;
  Standardizer imu_std_;
};

/// Routing rule used everywhere a frame may be corrupted: the runtime keys
/// off pixel variance, never the corruption flag.
inline bool frame_usable(const Frame& f) {
  return f.variance() >= kCorruptionVarianceThreshold;
}

}  // namespace dvio::fusion
