#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "dvio/dataio.hpp"
#include "dvio/util.hpp"

using namespace dvio;

namespace {

FlightSpec hover_spec(double duration = 3.0) {
  FlightSpec f;
  f.waypoints = {{0.0, Vec3(0.0, 0.0, 2.0)}};
  f.duration = duration;
  f.accel_noise_sigma = 0.0;
  f.gyro_noise_sigma = 0.0;
  f.accel_bias_sigma = 0.0;
  f.gyro_bias_sigma = 0.0;
  return f;
}

WorldSpec small_world() {
  WorldSpec w;
  w.pad_x = 0.4;
  w.pad_y = -0.3;
  return w;
}

}  // namespace

TEST_CASE("imu window grouping: rates give N = imu/cam ratio") {
  // 200 Hz imu, 20 Hz frames.
  std::vector<double> frames;
  for (int k = 0; k < 5; ++k) frames.push_back(k / 20.0);
  std::vector<ImuSample> samples;
  for (int j = 0; j < 200; ++j) samples.push_back({j / 200.0, Vec3::Zero(), Vec3::Zero()});
  auto windows = group_imu_windows(frames, samples);
  REQUIRE(windows.size() == 4);
  for (const auto& w : windows) CHECK(w.samples.size() == 10);

  // 100 Hz imu, 10 Hz frames.
  frames.clear();
  samples.clear();
  for (int k = 0; k < 4; ++k) frames.push_back(k / 10.0);
  for (int j = 0; j < 100; ++j) samples.push_back({j / 100.0, Vec3::Zero(), Vec3::Zero()});
  windows = group_imu_windows(frames, samples);
  REQUIRE(windows.size() == 3);
  for (const auto& w : windows) CHECK(w.samples.size() == 10);
}

TEST_CASE("imu window grouping: single frame, empty window, sample conservation") {
  std::vector<ImuSample> samples;
  for (int j = 0; j < 30; ++j) samples.push_back({j / 100.0, Vec3::Zero(), Vec3::Zero()});
  CHECK(group_imu_windows({0.0}, samples).empty());

  // First window [-1, -0.5) contains no samples.
  CHECK_THROWS_AS(group_imu_windows({-1.0, -0.5, 0.3}, samples), Error);

  // Conservation: every sample between first and last frame lands in
  // exactly one window.
  std::vector<double> frames{0.0, 0.1, 0.2, 0.3};
  auto windows = group_imu_windows(frames, samples);
  size_t total = 0;
  double prev_t = -1.0;
  for (const auto& w : windows)
    for (const auto& s : w.samples) {
      CHECK(s.timestamp >= w.t_start);
      CHECK(s.timestamp < w.t_end);
      CHECK(s.timestamp > prev_t);
      prev_t = s.timestamp;
      ++total;
    }
  CHECK(total == 30);  // samples at t in [0, 0.3)
}

TEST_CASE("synthetic hover: accel is the gravity reaction, gyro zero") {
  Dataset ds = generate_synthetic(small_world(), hover_spec(), 1);
  REQUIRE(ds.size() > 0);
  for (const auto& obs : ds.observations)
    for (const auto& s : obs.imu.samples) {
      CHECK(s.accel.x() == 0.0);
      CHECK(s.accel.y() == 0.0);
      CHECK(s.accel.z() == doctest::Approx(kGravity));
      CHECK(s.gyro.norm() == 0.0);
    }
}

TEST_CASE("synthetic generation is deterministic per seed") {
  FlightSpec f = hover_spec(2.0);
  f.accel_noise_sigma = 0.05;
  f.gyro_noise_sigma = 0.005;
  f.accel_bias_sigma = 0.02;
  f.gyro_bias_sigma = 0.002;
  Dataset a = generate_synthetic(small_world(), f, 42);
  Dataset b = generate_synthetic(small_world(), f, 42);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a.observations[i].frame.pixels == b.observations[i].frame.pixels);
    for (size_t j = 0; j < a.observations[i].imu.samples.size(); ++j) {
      CHECK((a.observations[i].imu.samples[j].accel - b.observations[i].imu.samples[j].accel).norm() == 0.0);
      CHECK((a.observations[i].imu.samples[j].gyro - b.observations[i].imu.samples[j].gyro).norm() == 0.0);
    }
  }
  Dataset c = generate_synthetic(small_world(), f, 43);
  bool any_diff = false;
  for (size_t j = 0; j < a.observations[0].imu.samples.size(); ++j)
    if ((a.observations[0].imu.samples[j].accel - c.observations[0].imu.samples[j].accel).norm() != 0.0)
      any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("constant-velocity cruise: accel reads gravity only") {
  FlightSpec f;
  f.waypoints = {{0.0, Vec3(-1, 0, 2)}, {10.0, Vec3(1, 0, 2)}};
  f.blend_frac = 0.1;
  f.duration = 10.0;
  f.accel_noise_sigma = f.gyro_noise_sigma = f.accel_bias_sigma = f.gyro_bias_sigma = 0.0;
  Dataset ds = generate_synthetic(small_world(), f, 3);
  // Cruise spans (b, T-b) = (1, 9); sample well inside.
  int checked = 0;
  for (const auto& obs : ds.observations)
    for (const auto& s : obs.imu.samples)
      if (s.timestamp > 2.0 && s.timestamp < 8.0) {
        CHECK(s.accel.x() == 0.0);
        CHECK(s.accel.z() == doctest::Approx(kGravity));
        ++checked;
      }
  CHECK(checked > 100);
}

TEST_CASE("flight path: integrating noiseless accel recovers the trajectory") {
  FlightSpec f;
  f.waypoints = {{0.0, Vec3(0, 0, 1.5)},
                 {4.0, Vec3(1.5, -1, 1.5)},
                 {7.0, Vec3(1.5, -1, 0.5)},
                 {10.0, Vec3(0, 0, 1.0)}};
  f.yaw_amplitude = 0.2;
  f.yaw_period = 7.0;
  f.duration = 10.0;
  f.accel_noise_sigma = f.gyro_noise_sigma = f.accel_bias_sigma = f.gyro_bias_sigma = 0.0;
  FlightPath path(f.waypoints, f.blend_frac, f.yaw_amplitude, f.yaw_period);
  Dataset ds = generate_synthetic(small_world(), f, 5);

  // Trapezoidal double integration of the world-frame acceleration
  // (gravity removed) over the concatenated sample stream.
  const Vec3 g(0, 0, -kGravity);
  std::vector<std::pair<double, Vec3>> accels;
  for (const auto& obs : ds.observations)
    for (const auto& s : obs.imu.samples) {
      Eigen::Matrix3d rot = path.orientation(s.timestamp).toRotationMatrix();
      accels.emplace_back(s.timestamp, rot * s.accel + g);
    }
  Vec3 vel = path.velocity(accels.front().first);
  Vec3 pos = path.position(accels.front().first);
  for (size_t i = 0; i + 1 < accels.size(); ++i) {
    double dt = accels[i + 1].first - accels[i].first;
    Vec3 vel_next = vel + 0.5 * (accels[i].second + accels[i + 1].second) * dt;
    pos += 0.5 * (vel + vel_next) * dt;
    vel = vel_next;
  }
  CHECK((pos - path.position(accels.back().first)).norm() < 1e-3);
}

TEST_CASE("render determinism and texture periodicity") {
  WorldSpec w;  // no pillars; pad far away
  w.pad_x = 100.0;
  w.pad_y = 100.0;
  Pose p1(Vec3(0.5, 0.25, 2.0), Quat::Identity(), 0.0);
  Frame f1 = render_frame(w, p1, 36, 64, 1);
  Frame f2 = render_frame(w, p1, 36, 64, 1);
  CHECK(f1.pixels == f2.pixels);

  // One texture period over: identical phase, pixel for pixel. All values
  // involved are dyadic so the arithmetic is exact.
  Pose p3(Vec3(0.5 + w.texture_period, 0.25, 2.0), Quat::Identity(), 0.0);
  Frame f3 = render_frame(w, p3, 36, 64, 1);
  CHECK(f1.pixels == f3.pixels);

  // Different position, different pixels.
  Pose p4(Vec3(0.5 + 0.4, 0.25, 2.0), Quat::Identity(), 0.0);
  Frame f4 = render_frame(w, p4, 36, 64, 1);
  CHECK(f1.pixels != f4.pixels);
}

TEST_CASE("render: altitude doubling doubles the ground footprint") {
  // One bright pillar marker at the center; measure its pixel extent.
  WorldSpec w;
  w.pad_x = 100.0;
  w.pad_y = 100.0;
  w.pillars = {{0.0, 0.0, 0.3}};
  auto marker_cols = [&](double alt) {
    Frame f = render_frame(w, Pose(Vec3(0, 0, alt), Quat::Identity(), 0.0), 64, 64, 1);
    int lo = 64, hi = -1;
    int mid = 32;
    for (int c = 0; c < 64; ++c) {
      double v = f.at(mid, c, 0);
      if (v > 0.85 || v < 0.12) {  // marker colors
        lo = std::min(lo, c);
        hi = std::max(hi, c);
      }
    }
    return hi - lo + 1;
  };
  int extent1 = marker_cols(1.0);
  int extent2 = marker_cols(2.0);
  // Footprint width = alt * footprint_per_alt; the marker of world size
  // 0.6 m spans 0.6/(alt*1.0)*64 pixels: ~38 at 1 m, ~19 at 2 m.
  CHECK(extent1 == doctest::Approx(0.6 / 1.0 * 64).epsilon(0.08));
  CHECK(extent2 == doctest::Approx(0.6 / 2.0 * 64).epsilon(0.08));
  CHECK(std::abs(extent1 - 2 * extent2) <= 2);
}

TEST_CASE("render rejects degenerate views") {
  WorldSpec w;
  CHECK_THROWS_AS(render_frame(w, Pose(Vec3(0, 0, 0.0), Quat::Identity(), 0.0), 8, 8, 1), Error);
  CHECK_THROWS_AS(render_frame(w, Pose(Vec3(0, 0, -1.0), Quat::Identity(), 0.0), 8, 8, 1), Error);
}

TEST_CASE("corrupt_frames counts and determinism") {
  Dataset ds = generate_synthetic(small_world(), hover_spec(10.1), 7);
  REQUIRE(ds.size() == 100);

  Dataset none = corrupt_frames(ds, 0.0, 9);
  for (const auto& o : none.observations) CHECK_FALSE(o.frame.corrupted);

  Dataset all = corrupt_frames(ds, 1.0, 9);
  for (const auto& o : all.observations) {
    CHECK(o.frame.corrupted);
    CHECK(o.frame.variance() == 0.0);
  }

  Dataset fifth = corrupt_frames(ds, 0.2, 9);
  size_t flagged = 0;
  for (const auto& o : fifth.observations)
    if (o.frame.corrupted) ++flagged;
  CHECK(flagged == 20);

  Dataset fifth2 = corrupt_frames(ds, 0.2, 9);
  for (size_t i = 0; i < fifth.size(); ++i)
    CHECK(fifth.observations[i].frame.corrupted == fifth2.observations[i].frame.corrupted);
}

TEST_CASE("split counts and errors") {
  Dataset ds = generate_synthetic(small_world(), hover_spec(1.1), 7);
  REQUIRE(ds.size() == 10);
  auto [train, test] = split(ds, 0.8);
  CHECK(train.size() == 8);
  CHECK(test.size() == 2);
  CHECK(train.size() + test.size() == ds.size());
  CHECK(test.leading_ground_truth.has_value());

  Dataset two;
  two.meta = ds.meta;
  two.leading_frame = ds.leading_frame;
  two.leading_ground_truth = ds.leading_ground_truth;
  two.observations = {ds.observations[0], ds.observations[1]};
  auto [a, b] = split(two, 0.5);
  CHECK(a.size() == 1);
  CHECK(b.size() == 1);

  Dataset one;
  one.meta = ds.meta;
  one.observations = {ds.observations[0]};
  CHECK_THROWS_AS(split(one, 0.8), Error);
  CHECK_THROWS_AS(split(ds, 0.0), Error);
  CHECK_THROWS_AS(split(ds, 1.0), Error);
}

TEST_CASE("ground truth interpolation reproduces samples exactly") {
  std::vector<Pose> gts;
  Rng rng(12);
  for (int i = 0; i < 10; ++i) {
    Vec4 q(rng.gaussian(0, 1), rng.gaussian(0, 1), rng.gaussian(0, 1), rng.gaussian(0, 1));
    gts.push_back(Pose(Vec3(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(1, 3)),
                       quat_normalize(q), 0.25 * i));
  }
  for (const auto& p : gts) {
    Pose q = interpolate_ground_truth(gts, p.timestamp);
    CHECK((q.position - p.position).norm() == 0.0);
    CHECK(q.orientation.w() == doctest::Approx(p.orientation.w()).epsilon(1e-15));
  }
  // Midpoint position is the linear blend.
  Pose mid = interpolate_ground_truth(gts, 0.125);
  CHECK(mid.position.x() == doctest::Approx(0.5 * (gts[0].position.x() + gts[1].position.x())));
  CHECK_THROWS_AS(interpolate_ground_truth(gts, -0.1), Error);
  CHECK_THROWS_AS(interpolate_ground_truth(gts, 99.0), Error);
}

TEST_CASE("pgm round trip") {
  Frame f;
  f.h = 4;
  f.w = 6;
  f.c = 1;
  f.pixels.resize(24);
  for (int i = 0; i < 24; ++i) f.pixels[static_cast<size_t>(i)] = i / 23.0;
  write_pgm("test_roundtrip.pgm", f);
  Frame back = read_pgm("test_roundtrip.pgm");
  REQUIRE(back.h == 4);
  REQUIRE(back.w == 6);
  for (int i = 0; i < 24; ++i)
    CHECK(back.pixels[static_cast<size_t>(i)] ==
          doctest::Approx(f.pixels[static_cast<size_t>(i)]).epsilon(1.0 / 255.0));
}

TEST_CASE("dataset save / load round trip") {
  FlightSpec f = hover_spec(2.1);
  f.waypoints = {{0.0, Vec3(0, 0, 2)}, {2.2, Vec3(0.5, 0.3, 1.5)}};
  f.accel_noise_sigma = 0.05;
  Dataset ds = generate_synthetic(small_world(), f, 21);
  ds = corrupt_frames(ds, 0.2, 22);
  std::string dir = "test_dataset_rt";
  save_dataset(ds, dir);

  Dataset back = load_euroc_layout(dir);
  REQUIRE(back.size() == ds.size());
  CHECK(back.meta.imu_rate_hz == ds.meta.imu_rate_hz);
  CHECK(back.meta.cam_rate_hz == ds.meta.cam_rate_hz);
  CHECK(back.meta.seed == ds.meta.seed);
  for (size_t i = 0; i < ds.size(); ++i) {
    const auto& a = ds.observations[i];
    const auto& b = back.observations[i];
    CHECK(a.frame.timestamp == b.frame.timestamp);
    CHECK(a.frame.corrupted == b.frame.corrupted);  // re-derived from variance
    CHECK(a.imu.samples.size() == b.imu.samples.size());
    CHECK(a.imu.samples[0].accel.x() == doctest::Approx(b.imu.samples[0].accel.x()).epsilon(1e-15));
    REQUIRE(b.ground_truth.has_value());
    CHECK((a.ground_truth->position - b.ground_truth->position).norm() < 1e-9);
  }

  SUBCASE("missing files are reported") {
    std::filesystem::remove(dir + "/imu.csv");
    CHECK_THROWS_AS(load_euroc_layout(dir), Error);
  }
}

TEST_CASE("generate_synthetic validates its spec") {
  FlightSpec f = hover_spec();
  f.duration = 0.0;
  CHECK_THROWS_AS(generate_synthetic(small_world(), f, 1), Error);
  f = hover_spec();
  f.imu_rate_hz = 0.0;
  CHECK_THROWS_AS(generate_synthetic(small_world(), f, 1), Error);
  f = hover_spec();
  f.waypoints.clear();
  CHECK_THROWS_AS(generate_synthetic(small_world(), f, 1), Error);
  f = hover_spec();
  f.imu_rate_hz = 105.0;  // camera rate does not divide it
  CHECK_THROWS_AS(generate_synthetic(small_world(), f, 1), Error);
}
