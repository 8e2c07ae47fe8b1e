#include "dvio/fusion.hpp"

#include <cmath>
#include <sstream>

#include "dvio/config.hpp"
#include "dvio/util.hpp"

namespace dvio::fusion {

using nn::Value;

void FusionConfig::validate() const {
  if (img_h <= 0 || img_w <= 0 || img_c <= 0)
    fail(ErrorKind::InvalidArgument, "fusion config: bad image shape");
  if (conv_channels.size() != 4)
    fail(ErrorKind::InvalidArgument, "fusion config: conv_channels must list stem + 3 blocks");
  for (int c : conv_channels)
    if (c <= 0) fail(ErrorKind::InvalidArgument, "fusion config: conv channels must be positive");
  if (visual_feature_dim <= 0 || inertial_hidden <= 0 || inertial_feature_dim <= 0 ||
      core_hidden <= 0 || head_hidden <= 0 || tbptt_len <= 0)
    fail(ErrorKind::InvalidArgument, "fusion config: dimensions must be positive");
  if (gamma < 0.0) fail(ErrorKind::InvalidArgument, "fusion config: gamma must be >= 0");
}

std::vector<std::string> FusionConfig::to_manifest() const {
  std::ostringstream ch;
  for (size_t i = 0; i < conv_channels.size(); ++i) ch << (i ? "," : "") << conv_channels[i];
  std::vector<std::string> out;
  out.push_back("cfg.img_h = " + std::to_string(img_h));
  out.push_back("cfg.img_w = " + std::to_string(img_w));
  out.push_back("cfg.img_c = " + std::to_string(img_c));
  out.push_back("cfg.conv_channels = " + ch.str());
  out.push_back("cfg.visual_feature_dim = " + std::to_string(visual_feature_dim));
  out.push_back("cfg.inertial_hidden = " + std::to_string(inertial_hidden));
  out.push_back("cfg.inertial_feature_dim = " + std::to_string(inertial_feature_dim));
  out.push_back("cfg.core_hidden = " + std::to_string(core_hidden));
  out.push_back("cfg.head_hidden = " + std::to_string(head_hidden));
  out.push_back("cfg.gamma = " + format_double(gamma));
  out.push_back(std::string("cfg.loss_mode = ") +
                (loss_mode == LossMode::LearnedSigma ? "sigma" : "beta"));
  out.push_back("cfg.beta = " + format_double(beta));
  out.push_back("cfg.tbptt_len = " + std::to_string(tbptt_len));
  out.push_back("cfg.lr = " + format_double(lr));
  return out;
}

Config manifest_config(const std::string& text) {
  std::ostringstream kept;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (line.find('=') != std::string::npos) kept << line << "\n";
  return Config::from_string(kept.str());
}

namespace {

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  for (const auto& tok : split(s, ',')) out.push_back(std::stoi(trim(tok)));
  return out;
}

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  for (const auto& tok : split(s, ',')) out.push_back(std::stod(trim(tok)));
  return out;
}

std::string join_doubles(const std::vector<double>& v) {
  std::ostringstream out;
  for (size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << format_double(v[i]);
  return out.str();
}

}  // namespace

FusionConfig FusionConfig::from_manifest(const std::string& manifest_text) {
  Config c = manifest_config(manifest_text);
  FusionConfig cfg;
  cfg.img_h = static_cast<int>(c.get_int("cfg.img_h", cfg.img_h));
  cfg.img_w = static_cast<int>(c.get_int("cfg.img_w", cfg.img_w));
  cfg.img_c = static_cast<int>(c.get_int("cfg.img_c", cfg.img_c));
  if (auto ch = c.get("cfg.conv_channels")) cfg.conv_channels = parse_int_list(*ch);
  cfg.visual_feature_dim =
      static_cast<int>(c.get_int("cfg.visual_feature_dim", cfg.visual_feature_dim));
  cfg.inertial_hidden = static_cast<int>(c.get_int("cfg.inertial_hidden", cfg.inertial_hidden));
  cfg.inertial_feature_dim =
      static_cast<int>(c.get_int("cfg.inertial_feature_dim", cfg.inertial_feature_dim));
  cfg.core_hidden = static_cast<int>(c.get_int("cfg.core_hidden", cfg.core_hidden));
  cfg.head_hidden = static_cast<int>(c.get_int("cfg.head_hidden", cfg.head_hidden));
  cfg.gamma = c.get_double("cfg.gamma", cfg.gamma);
  cfg.loss_mode = c.get_string("cfg.loss_mode", "sigma") == "beta" ? LossMode::FixedBeta
                                                                   : LossMode::LearnedSigma;
  cfg.beta = c.get_double("cfg.beta", cfg.beta);
  cfg.tbptt_len = static_cast<int>(c.get_int("cfg.tbptt_len", cfg.tbptt_len));
  cfg.lr = c.get_double("cfg.lr", cfg.lr);
  cfg.validate();
  return cfg;
}

// --- Standardizer ----------------------------------------------------------

std::vector<double> Standardizer::apply(const std::vector<double>& x) const {
  if (x.size() != mean.size())
    fail(ErrorKind::DimensionMismatch, "standardizer: dimension mismatch");
  std::vector<double> out(x.size());
  for (size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean[i]) / stdev[i];
  return out;
}

Standardizer Standardizer::fit(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) fail(ErrorKind::InvalidArgument, "standardizer: no rows");
  size_t d = rows[0].size();
  Standardizer s;
  s.mean.assign(d, 0.0);
  s.stdev.assign(d, 0.0);
  for (const auto& r : rows)
    for (size_t i = 0; i < d; ++i) s.mean[i] += r[i];
  for (auto& m : s.mean) m /= static_cast<double>(rows.size());
  for (const auto& r : rows)
    for (size_t i = 0; i < d; ++i) {
      double dd = r[i] - s.mean[i];
      s.stdev[i] += dd * dd;
    }
  for (auto& v : s.stdev) v = std::max(std::sqrt(v / static_cast<double>(rows.size())), 1e-6);
  return s;
}

Standardizer Standardizer::identity(size_t dims) {
  Standardizer s;
  s.mean.assign(dims, 0.0);
  s.stdev.assign(dims, 1.0);
  return s;
}

// --- Builder -----------------------------------------------------------------

Value Builder::touch(nn::Parameter& p) {
  auto it = leaves.find(&p);
  if (it != leaves.end()) return it->second;
  Value v = nn::leaf(p);
  leaves.emplace(&p, v);
  return v;
}

void Builder::harvest_grads() const {
  for (const auto& [param, node] : leaves) param->grad = node->grad;
}

// --- Model -------------------------------------------------------------------

FusionModel::FusionModel(const FusionConfig& cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  pos_std_ = Standardizer::identity(3);
  imu_std_ = Standardizer::identity(6);
  init_params(seed);
}

namespace {

void create_lstm(nn::ParameterStore& store, const std::string& prefix, int input, int hidden,
                 Rng& rng) {
  int in = input + hidden;
  for (const char* gate : {"w_i", "w_f", "w_g", "w_o"})
    store.create(prefix + "." + gate, nn::fan_in_uniform({in, hidden}, in, rng));
  store.create(prefix + ".b_i", nn::Tensor::zeros({hidden}));
  store.create(prefix + ".b_f", nn::Tensor::full({hidden}, 1.0));  // forget gate open at start
  store.create(prefix + ".b_g", nn::Tensor::zeros({hidden}));
  store.create(prefix + ".b_o", nn::Tensor::zeros({hidden}));
}

nn::LstmWeights lstm_weights(Builder& b, nn::ParameterStore& store, const std::string& prefix) {
  return nn::LstmWeights{
      b.touch(store.get(prefix + ".w_i")), b.touch(store.get(prefix + ".b_i")),
      b.touch(store.get(prefix + ".w_f")), b.touch(store.get(prefix + ".b_f")),
      b.touch(store.get(prefix + ".w_g")), b.touch(store.get(prefix + ".b_g")),
      b.touch(store.get(prefix + ".w_o")), b.touch(store.get(prefix + ".b_o"))};
}

}  // namespace

void FusionModel::init_params(uint64_t seed) {
  Rng rng(seed);
  const auto& ch = cfg_.conv_channels;

  store_.create("visual.stem.k", nn::fan_in_uniform({3, 3, cfg_.img_c, ch[0]}, 9 * cfg_.img_c, rng));
  store_.create("visual.stem.gain", nn::Tensor::full({ch[0]}, 1.0));
  store_.create("visual.stem.shift", nn::Tensor::zeros({ch[0]}));
  for (int blk = 1; blk <= 3; ++blk) {
    int in = ch[static_cast<size_t>(blk - 1)];
    int out = ch[static_cast<size_t>(blk)];
    std::string p = "visual.blk" + std::to_string(blk);
    store_.create(p + ".conv1.k", nn::fan_in_uniform({3, 3, in, out}, 9 * in, rng));
    store_.create(p + ".norm1.gain", nn::Tensor::full({out}, 1.0));
    store_.create(p + ".norm1.shift", nn::Tensor::zeros({out}));
    store_.create(p + ".conv2.k", nn::fan_in_uniform({3, 3, out, out}, 9 * out, rng));
    store_.create(p + ".norm2.gain", nn::Tensor::full({out}, 1.0));
    store_.create(p + ".norm2.shift", nn::Tensor::zeros({out}));
    store_.create(p + ".skip.k", nn::fan_in_uniform({1, 1, in, out}, in, rng));
  }
  store_.create("visual.fc1.w", nn::fan_in_uniform({ch[3], cfg_.visual_feature_dim}, ch[3], rng));
  store_.create("visual.fc1.b", nn::Tensor::zeros({cfg_.visual_feature_dim}));
  store_.create("visual.fc2.w", nn::fan_in_uniform({cfg_.visual_feature_dim, cfg_.visual_feature_dim},
                                                   cfg_.visual_feature_dim, rng));
  store_.create("visual.fc2.b", nn::Tensor::zeros({cfg_.visual_feature_dim}));
  store_.create("visual.placeholder", nn::Tensor::zeros({cfg_.visual_feature_dim}));

  create_lstm(store_, "inertial.lstm", 7, cfg_.inertial_hidden, rng);
  store_.create("inertial.proj.w",
                nn::fan_in_uniform({cfg_.inertial_hidden, cfg_.inertial_feature_dim},
                                   cfg_.inertial_hidden, rng));
  store_.create("inertial.proj.b", nn::Tensor::zeros({cfg_.inertial_feature_dim}));

  int fused = cfg_.visual_feature_dim + cfg_.inertial_feature_dim;
  create_lstm(store_, "core.lstm", fused + 7, cfg_.core_hidden, rng);

  store_.create("head.fc.w",
                nn::fan_in_uniform({cfg_.core_hidden, cfg_.head_hidden}, cfg_.core_hidden, rng));
  store_.create("head.fc.b", nn::Tensor::zeros({cfg_.head_hidden}));
  store_.create("head.trans.w", nn::fan_in_uniform({cfg_.head_hidden, 3}, cfg_.head_hidden, rng));
  store_.create("head.trans.b", nn::Tensor::zeros({3}));
  store_.create("head.quat.w", nn::fan_in_uniform({cfg_.head_hidden, 4}, cfg_.head_hidden, rng));
  // Bias the raw quaternion head at identity so early predictions are sane.
  store_.create("head.quat.b", nn::Tensor({4}, {1.0, 0.0, 0.0, 0.0}));

  store_.create("loss.s_x", nn::Tensor::scalar(0.0));
  store_.create("loss.s_q", nn::Tensor::scalar(-3.0));
}

void FusionModel::set_standardizers(Standardizer pos, Standardizer imu) {
  if (pos.mean.size() != 3 || imu.mean.size() != 6)
    fail(ErrorKind::DimensionMismatch, "standardizers must be 3 (position) and 6 (imu) wide");
  pos_std_ = std::move(pos);
  imu_std_ = std::move(imu);
}

std::vector<double> FusionModel::inertial_input(const ImuSample& s, const ImuWindow& win) const {
  std::vector<double> raw{s.accel.x(), s.accel.y(), s.accel.z(),
                          s.gyro.x(),  s.gyro.y(),  s.gyro.z()};
  std::vector<double> x = imu_std_.apply(raw);
  double span = win.t_end - win.t_start;
  x.push_back(span > 0.0 ? (s.timestamp - win.t_start) / span : 0.0);
  return x;
}

std::vector<double> FusionModel::encode_prev_pose(const Pose& prev) const {
  std::vector<double> pos{prev.position.x(), prev.position.y(), prev.position.z()};
  std::vector<double> out = pos_std_.apply(pos);
  out.push_back(prev.orientation.w());
  out.push_back(prev.orientation.x());
  out.push_back(prev.orientation.y());
  out.push_back(prev.orientation.z());
  return out;
}

Value FusionModel::build_visual(Builder& b, const Frame& frame) const {
  if (frame.corrupted)
    fail(ErrorKind::InvalidArgument, "encode_visual: corrupted frame must take the IMU-only path");
  if (frame.h != cfg_.img_h || frame.w != cfg_.img_w || frame.c != cfg_.img_c)
    fail(ErrorKind::DimensionMismatch, "encode_visual: frame shape mismatch");
  auto& store = const_cast<nn::ParameterStore&>(store_);

  Value x = nn::constant(nn::Tensor({frame.h, frame.w, frame.c}, frame.pixels));
  x = nn::conv2d(x, b.touch(store.get("visual.stem.k")), 1, 1);
  x = nn::layer_norm(x, b.touch(store.get("visual.stem.gain")),
                     b.touch(store.get("visual.stem.shift")));
  x = nn::relu(x);
  for (int blk = 1; blk <= 3; ++blk) {
    std::string p = "visual.blk" + std::to_string(blk);
    Value main = nn::conv2d(x, b.touch(store.get(p + ".conv1.k")), 2, 1);
    main = nn::layer_norm(main, b.touch(store.get(p + ".norm1.gain")),
                          b.touch(store.get(p + ".norm1.shift")));
    main = nn::relu(main);
    main = nn::conv2d(main, b.touch(store.get(p + ".conv2.k")), 1, 1);
    main = nn::layer_norm(main, b.touch(store.get(p + ".norm2.gain")),
                          b.touch(store.get(p + ".norm2.shift")));
    Value skip = nn::conv2d(x, b.touch(store.get(p + ".skip.k")), 2, 0);
    x = nn::relu(nn::add(main, skip));
  }
  Value v = nn::global_avg_pool(x);
  v = nn::relu(nn::dense(v, b.touch(store.get("visual.fc1.w")), b.touch(store.get("visual.fc1.b"))));
  return nn::dense(v, b.touch(store.get("visual.fc2.w")), b.touch(store.get("visual.fc2.b")));
}

Value FusionModel::build_visual_placeholder(Builder& b) const {
  auto& store = const_cast<nn::ParameterStore&>(store_);
  return b.touch(store.get("visual.placeholder"));
}

Value FusionModel::build_inertial(Builder& b, const ImuWindow& win) const {
  if (win.samples.empty()) fail(ErrorKind::InvalidArgument, "encode_inertial: empty imu window");
  auto& store = const_cast<nn::ParameterStore&>(store_);
  nn::LstmWeights w = lstm_weights(b, store, "inertial.lstm");
  nn::LstmNodes state{nn::constant(nn::Tensor::zeros({cfg_.inertial_hidden})),
                      nn::constant(nn::Tensor::zeros({cfg_.inertial_hidden}))};
  for (const auto& s : win.samples) {
    Value x = nn::constant(nn::Tensor::vector(inertial_input(s, win)));
    state = nn::lstm_step(x, state, w);
  }
  return nn::dense(state.hidden, b.touch(store.get("inertial.proj.w")),
                   b.touch(store.get("inertial.proj.b")));
}

nn::LstmNodes FusionModel::core_state_nodes(const nn::LstmState& s) const {
  return {nn::constant(s.hidden), nn::constant(s.cell)};
}

StepNodes FusionModel::build_step(Builder& b, const Frame* frame, const ImuWindow& win,
                                  const Pose& prev, const nn::LstmNodes& core) const {
  auto& store = const_cast<nn::ParameterStore&>(store_);
  Value zv = frame ? build_visual(b, *frame) : build_visual_placeholder(b);
  Value zi = build_inertial(b, win);
  Value zt = nn::concat({zv, zi});
  Value prev_enc = nn::constant(nn::Tensor::vector(encode_prev_pose(prev)));
  Value core_in = nn::concat({zt, prev_enc});
  nn::LstmWeights w = lstm_weights(b, store, "core.lstm");
  nn::LstmNodes next = nn::lstm_step(core_in, core, w);
  Value head = nn::relu(
      nn::dense(next.hidden, b.touch(store.get("head.fc.w")), b.touch(store.get("head.fc.b"))));
  StepNodes out;
  out.trans =
      nn::dense(head, b.touch(store.get("head.trans.w")), b.touch(store.get("head.trans.b")));
  out.quat_raw =
      nn::dense(head, b.touch(store.get("head.quat.w")), b.touch(store.get("head.quat.b")));
  out.core = next;
  return out;
}

Value FusionModel::build_loss(Builder& b, const StepNodes& step, const Pose& truth) const {
  auto& store = const_cast<nn::ParameterStore&>(store_);
  // Truth quaternion arrives unit-norm and canonical via the Pose invariant,
  // which realizes the q/||q|| target normalization. The heads stay raw.
  Value tx = nn::constant(
      nn::Tensor::vector({truth.position.x(), truth.position.y(), truth.position.z()}));
  Value tq = nn::constant(nn::Tensor::vector({truth.orientation.w(), truth.orientation.x(),
                                              truth.orientation.y(), truth.orientation.z()}));
  Value dx = nn::sub(step.trans, tx);
  Value dq = nn::sub(step.quat_raw, tq);
  Value lx = nn::add(nn::l2_norm(dx), nn::scale(nn::l1_norm(dx), cfg_.gamma));
  Value lq = nn::add(nn::l2_norm(dq), nn::scale(nn::l1_norm(dq), cfg_.gamma));
  if (cfg_.loss_mode == LossMode::FixedBeta) return nn::add(lx, nn::scale(lq, cfg_.beta));
  Value sx = b.touch(store.get("loss.s_x"));
  Value sq = b.touch(store.get("loss.s_q"));
  Value term_x = nn::add(nn::mul(lx, nn::exp_ew(nn::neg(sx))), sx);
  Value term_q = nn::add(nn::mul(lq, nn::exp_ew(nn::neg(sq))), sq);
  return nn::add(term_x, term_q);
}

FeatureVector FusionModel::encode_visual(const Frame& frame) const {
  Builder b;
  Value z = build_visual(b, frame);
  return {z->value.data, FeatureVector::Kind::Visual};
}

FeatureVector FusionModel::encode_inertial(const ImuWindow& win) const {
  Builder b;
  Value z = build_inertial(b, win);
  return {z->value.data, FeatureVector::Kind::Inertial};
}

Pose FusionModel::heads_to_pose(const std::vector<double>& trans, const std::vector<double>& quat,
                                double timestamp) {
  Vec4 q(quat[0], quat[1], quat[2], quat[3]);
  Quat orientation = q.norm() <= 1e-12 ? Quat::Identity() : quat_normalize(q);
  return Pose(Vec3(trans[0], trans[1], trans[2]), orientation, timestamp);
}

std::pair<Pose, nn::LstmState> FusionModel::predict(const Observation& obs, const Pose& prev,
                                                    const nn::LstmState& core) const {
  if (!frame_usable(obs.frame)) return predict_imu_only(obs.imu, prev, core);
  Builder b;
  StepNodes step = build_step(b, &obs.frame, obs.imu, prev, core_state_nodes(core));
  Pose pose =
      heads_to_pose(step.trans->value.data, step.quat_raw->value.data, obs.frame.timestamp);
  return {pose, nn::LstmState{step.core.hidden->value, step.core.cell->value}};
}

std::pair<Pose, nn::LstmState> FusionModel::predict_imu_only(const ImuWindow& win, const Pose& prev,
                                                             const nn::LstmState& core) const {
  Builder b;
  StepNodes step = build_step(b, nullptr, win, prev, core_state_nodes(core));
  Pose pose = heads_to_pose(step.trans->value.data, step.quat_raw->value.data, win.t_end);
  return {pose, nn::LstmState{step.core.hidden->value, step.core.cell->value}};
}

void FusionModel::save(const std::string& checkpoint_path,
                       const std::vector<std::string>& extra_manifest) const {
  std::vector<std::string> manifest = cfg_.to_manifest();
  manifest.push_back("std.pos_mean = " + join_doubles(pos_std_.mean));
  manifest.push_back("std.pos_std = " + join_doubles(pos_std_.stdev));
  manifest.push_back("std.imu_mean = " + join_doubles(imu_std_.mean));
  manifest.push_back("std.imu_std = " + join_doubles(imu_std_.stdev));
  for (const auto& line : extra_manifest) manifest.push_back(line);
  store_.save(checkpoint_path, manifest);
}

FusionModel FusionModel::load(const std::string& checkpoint_path) {
  std::string manifest = read_text_file(checkpoint_path + ".manifest");
  FusionConfig cfg = FusionConfig::from_manifest(manifest);
  FusionModel model(cfg, 0);
  model.store_ = nn::ParameterStore();
  model.store_.load(checkpoint_path);
  if (!model.store_.has("loss.s_x"))
    fail(ErrorKind::MalformedData, "checkpoint missing expected parameters");
  Config c = manifest_config(manifest);
  Standardizer pos, imu;
  pos.mean = parse_double_list(c.get_string("std.pos_mean", "0,0,0"));
  pos.stdev = parse_double_list(c.get_string("std.pos_std", "1,1,1"));
  imu.mean = parse_double_list(c.get_string("std.imu_mean", "0,0,0,0,0,0"));
  imu.stdev = parse_double_list(c.get_string("std.imu_std", "1,1,1,1,1,1"));
  model.set_standardizers(std::move(pos), std::move(imu));
  return model;
}

}  // namespace dvio::fusion
