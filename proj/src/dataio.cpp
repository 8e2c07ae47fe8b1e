#include "dvio/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dvio/config.hpp"
#include "dvio/util.hpp"

namespace dvio {

double Frame::variance() const {
  if (pixels.empty()) return 0.0;
  double mean = 0.0;
  for (double v : pixels) mean += v;
  mean /= static_cast<double>(pixels.size());
  double var = 0.0;
  for (double v : pixels) var += (v - mean) * (v - mean);
  return var / static_cast<double>(pixels.size());
}

Trajectory Dataset::ground_truth_trajectory() const {
  Trajectory tr;
  for (const auto& obs : observations) {
    if (!obs.ground_truth) fail(ErrorKind::InvalidArgument, "dataset has no ground truth");
    tr.push_back(*obs.ground_truth);
  }
  return tr;
}

std::vector<ImuWindow> group_imu_windows(const std::vector<double>& frame_times,
                                         const std::vector<ImuSample>& samples) {
  for (size_t i = 1; i < frame_times.size(); ++i)
    if (frame_times[i] <= frame_times[i - 1])
      fail(ErrorKind::MalformedData,
           "frame timestamps not strictly increasing at t=" + format_double(frame_times[i]));
  for (size_t i = 1; i < samples.size(); ++i)
    if (samples[i].timestamp < samples[i - 1].timestamp)
      fail(ErrorKind::MalformedData,
           "imu timestamps decrease at t=" + format_double(samples[i].timestamp));

  std::vector<ImuWindow> windows;
  if (frame_times.size() < 2) return windows;
  size_t j = 0;
  for (size_t k = 0; k + 1 < frame_times.size(); ++k) {
    ImuWindow win;
    win.t_start = frame_times[k];
    win.t_end = frame_times[k + 1];
    while (j < samples.size() && samples[j].timestamp < win.t_start) ++j;
    while (j < samples.size() && samples[j].timestamp < win.t_end)
      win.samples.push_back(samples[j++]);
    if (win.samples.empty())
      fail(ErrorKind::MalformedData,
           "no imu samples in window ending at frame t=" + format_double(win.t_end));
    windows.push_back(std::move(win));
  }
  return windows;
}

Dataset corrupt_frames(const Dataset& ds, double fraction, uint64_t seed) {
  if (fraction < 0.0 || fraction > 1.0)
    fail(ErrorKind::InvalidArgument, "corrupt_frames: fraction outside [0,1]");
  Dataset out = ds;
  size_t n = out.observations.size();
  size_t count = static_cast<size_t>(std::llround(fraction * static_cast<double>(n)));
  if (count == 0) return out;

  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  for (size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  for (size_t i = 0; i < count; ++i) {
    Frame& f = out.observations[idx[i]].frame;
    f.corrupted = true;
    std::fill(f.pixels.begin(), f.pixels.end(), 0.0);
  }
  return out;
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    fail(ErrorKind::InvalidArgument, "split: train_fraction must be in (0,1)");
  size_t n = ds.observations.size();
  size_t n_train = static_cast<size_t>(std::llround(train_fraction * static_cast<double>(n)));
  if (n_train < 1 || n - n_train < 1)
    fail(ErrorKind::InvalidArgument,
         "split: dataset of " + std::to_string(n) + " observations cannot fill both halves");
  Dataset train, test;
  train.meta = ds.meta;
  test.meta = ds.meta;
  train.leading_frame = ds.leading_frame;
  train.leading_ground_truth = ds.leading_ground_truth;
  train.observations.assign(ds.observations.begin(),
                            ds.observations.begin() + static_cast<long>(n_train));
  test.observations.assign(ds.observations.begin() + static_cast<long>(n_train),
                           ds.observations.end());
  // The test half keeps its preceding frame as leading context.
  test.leading_frame = ds.observations[n_train - 1].frame;
  test.leading_ground_truth = ds.observations[n_train - 1].ground_truth;
  return {std::move(train), std::move(test)};
}

Pose interpolate_ground_truth(const std::vector<Pose>& gts, double t) {
  if (gts.empty()) fail(ErrorKind::InvalidArgument, "interpolate_ground_truth: empty sequence");
  if (t < gts.front().timestamp || t > gts.back().timestamp)
    fail(ErrorKind::MalformedData, "frame t=" + format_double(t) + " outside ground-truth span");
  auto it = std::lower_bound(gts.begin(), gts.end(), t,
                             [](const Pose& p, double tt) { return p.timestamp < tt; });
  if (it->timestamp == t) return *it;
  const Pose& b = *it;
  const Pose& a = *(it - 1);
  double u = (t - a.timestamp) / (b.timestamp - a.timestamp);
  Pose out = interpolate_pose(a, b, u);
  out.timestamp = t;
  return out;
}

// --- PGM ----------------------------------------------------------------

void write_pgm(const std::string& path, const Frame& frame) {
  if (frame.c != 1) fail(ErrorKind::InvalidArgument, "write_pgm: only single-channel frames");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write " + path);
  out << "P5\n" << frame.w << " " << frame.h << "\n255\n";
  std::vector<unsigned char> bytes(frame.pixels.size());
  for (size_t i = 0; i < frame.pixels.size(); ++i) {
    double v = std::clamp(frame.pixels[i], 0.0, 1.0);
    bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

Frame read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5") fail(ErrorKind::MalformedData, path + ": not a binary PGM");
  int w = 0, h = 0, maxval = 0;
  in >> w >> h >> maxval;
  if (w <= 0 || h <= 0 || maxval != 255)
    fail(ErrorKind::MalformedData, path + ": unsupported PGM header");
  in.get();  // single whitespace after maxval
  std::vector<unsigned char> bytes(static_cast<size_t>(w) * static_cast<size_t>(h));
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) fail(ErrorKind::MalformedData, path + ": truncated PGM data");
  Frame f;
  f.h = h;
  f.w = w;
  f.c = 1;
  f.pixels.resize(bytes.size());
  for (size_t i = 0; i < bytes.size(); ++i) f.pixels[i] = bytes[i] / 255.0;
  return f;
}

// --- Directory layout -----------------------------------------------------

namespace {

int64_t to_ns(double t_s) { return std::llround(t_s * 1e9); }
double from_ns(int64_t ns) { return static_cast<double>(ns) / 1e9; }

std::vector<std::vector<std::string>> read_csv(const std::string& path,
                                               const std::string& expected_header) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line) || trim(line) != expected_header)
    fail(ErrorKind::MalformedData, path + ": expected header '" + expected_header + "'");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    rows.push_back(split(line, ','));
  }
  return rows;
}

void append_gt_row(std::ostringstream& gt, const Pose& p) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                static_cast<long long>(to_ns(p.timestamp)), p.position.x(), p.position.y(),
                p.position.z(), p.orientation.w(), p.orientation.x(), p.orientation.y(),
                p.orientation.z());
  gt << buf;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& dir) {
  if (!ds.leading_frame)
    fail(ErrorKind::InvalidArgument, "save_dataset: dataset has no leading frame");
  ensure_dir(dir);
  ensure_dir(dir + "/images");
  char buf[256];

  std::ostringstream imu;
  imu << "timestamp_ns,wx,wy,wz,ax,ay,az\n";
  for (const auto& obs : ds.observations) {
    for (const auto& s : obs.imu.samples) {
      std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                    static_cast<long long>(to_ns(s.timestamp)), s.gyro.x(), s.gyro.y(), s.gyro.z(),
                    s.accel.x(), s.accel.y(), s.accel.z());
      imu << buf;
    }
  }
  write_text_file(dir + "/imu.csv", imu.str());

  std::ostringstream frames, gt;
  frames << "timestamp_ns,filename\n";
  gt << "timestamp_ns,px,py,pz,qw,qx,qy,qz\n";

  size_t img_index = 0;
  auto emit_frame = [&](const Frame& f) {
    std::snprintf(buf, sizeof(buf), "frame_%06zu.pgm", img_index++);
    std::string name = buf;
    write_pgm(dir + "/images/" + name, f);
    frames << to_ns(f.timestamp) << "," << name << "\n";
  };

  emit_frame(*ds.leading_frame);
  if (ds.leading_ground_truth) append_gt_row(gt, *ds.leading_ground_truth);
  for (const auto& obs : ds.observations) {
    emit_frame(obs.frame);
    if (obs.ground_truth) append_gt_row(gt, *obs.ground_truth);
  }
  write_text_file(dir + "/frames.csv", frames.str());
  write_text_file(dir + "/groundtruth.csv", gt.str());

  Config meta;
  meta.set("imu_rate_hz", format_double(ds.meta.imu_rate_hz));
  meta.set("cam_rate_hz", format_double(ds.meta.cam_rate_hz));
  meta.set("img_h", std::to_string(ds.meta.img_h));
  meta.set("img_w", std::to_string(ds.meta.img_w));
  meta.set("img_c", std::to_string(ds.meta.img_c));
  meta.set("seed", std::to_string(ds.meta.seed));
  meta.set("world", ds.meta.world_desc);
  meta.write_file(dir + "/dataset.meta");
}

Dataset load_euroc_layout(const std::string& dir) {
  for (const char* name : {"imu.csv", "frames.csv", "groundtruth.csv"})
    if (!file_exists(dir + "/" + std::string(name)))
      fail(ErrorKind::Io, "dataset at " + dir + " is missing " + name);

  auto imu_rows = read_csv(dir + "/imu.csv", "timestamp_ns,wx,wy,wz,ax,ay,az");
  std::vector<ImuSample> samples;
  samples.reserve(imu_rows.size());
  for (const auto& r : imu_rows) {
    if (r.size() != 7) fail(ErrorKind::MalformedData, dir + "/imu.csv: bad row");
    ImuSample s;
    s.timestamp = from_ns(std::stoll(r[0]));
    s.gyro = Vec3(std::stod(r[1]), std::stod(r[2]), std::stod(r[3]));
    s.accel = Vec3(std::stod(r[4]), std::stod(r[5]), std::stod(r[6]));
    for (int i = 0; i < 3; ++i)
      if (!std::isfinite(s.accel[i]) || !std::isfinite(s.gyro[i]))
        fail(ErrorKind::MalformedData, "non-finite imu sample at t=" + format_double(s.timestamp));
    samples.push_back(s);
  }

  auto frame_rows = read_csv(dir + "/frames.csv", "timestamp_ns,filename");
  std::vector<double> frame_times;
  std::vector<Frame> frames;
  for (const auto& r : frame_rows) {
    if (r.size() != 2) fail(ErrorKind::MalformedData, dir + "/frames.csv: bad row");
    double t = from_ns(std::stoll(r[0]));
    Frame f = read_pgm(dir + "/images/" + trim(r[1]));
    f.timestamp = t;
    f.corrupted = f.variance() < kCorruptionVarianceThreshold;
    frame_times.push_back(t);
    frames.push_back(std::move(f));
  }

  auto gt_rows = read_csv(dir + "/groundtruth.csv", "timestamp_ns,px,py,pz,qw,qx,qy,qz");
  std::vector<Pose> gts;
  for (const auto& r : gt_rows) {
    if (r.size() != 8) fail(ErrorKind::MalformedData, dir + "/groundtruth.csv: bad row");
    double t = from_ns(std::stoll(r[0]));
    Vec3 pos(std::stod(r[1]), std::stod(r[2]), std::stod(r[3]));
    Vec4 q(std::stod(r[4]), std::stod(r[5]), std::stod(r[6]), std::stod(r[7]));
    if (!gts.empty() && t <= gts.back().timestamp)
      fail(ErrorKind::MalformedData,
           "ground-truth timestamps not increasing at t=" + format_double(t));
    gts.push_back(Pose(pos, quat_normalize(q), t));
  }

  auto windows = group_imu_windows(frame_times, samples);

  Dataset ds;
  if (file_exists(dir + "/dataset.meta")) {
    Config meta = Config::from_file(dir + "/dataset.meta");
    ds.meta.imu_rate_hz = meta.get_double("imu_rate_hz", ds.meta.imu_rate_hz);
    ds.meta.cam_rate_hz = meta.get_double("cam_rate_hz", ds.meta.cam_rate_hz);
    ds.meta.img_h = static_cast<int>(meta.get_int("img_h", ds.meta.img_h));
    ds.meta.img_w = static_cast<int>(meta.get_int("img_w", ds.meta.img_w));
    ds.meta.img_c = static_cast<int>(meta.get_int("img_c", ds.meta.img_c));
    ds.meta.seed = static_cast<uint64_t>(meta.get_int("seed", 0));
    ds.meta.world_desc = meta.get_string("world", "");
  }

  if (!frames.empty()) {
    ds.leading_frame = frames.front();
    if (!gts.empty()) ds.leading_ground_truth = interpolate_ground_truth(gts, frame_times.front());
  }
  for (size_t k = 0; k < windows.size(); ++k) {
    Observation obs;
    obs.frame = std::move(frames[k + 1]);
    obs.imu = std::move(windows[k]);
    if (!gts.empty()) obs.ground_truth = interpolate_ground_truth(gts, obs.frame.timestamp);
    ds.observations.push_back(std::move(obs));
  }
  return ds;
}

}  // namespace dvio
