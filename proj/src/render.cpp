#include <cmath>
#include <sstream>

#include "dvio/dataio.hpp"
#include "dvio/util.hpp"

namespace dvio {

namespace {

// Periodic value noise: bilinear interpolation over a hashed lattice that
// wraps every `cells` points, so the texture repeats exactly with the
// world-space period.
double texture_value(const WorldSpec& world, double x, double y) {
  const int k = world.texture_cells;
  // fmod keeps the wrap exact, so a pose shifted by a whole period samples
  // bit-identical texture values.
  auto wrap_coord = [&](double v) {
    double r = std::fmod(v, world.texture_period);
    if (r < 0.0) r += world.texture_period;
    double g = r / world.texture_period * k;
    return g >= k ? g - k : g;  // rounding at the negative seam
  };
  double gx = wrap_coord(x), gy = wrap_coord(y);
  int ix = static_cast<int>(gx), iy = static_cast<int>(gy);
  double fx = gx - ix, fy = gy - iy;
  int ix1 = (ix + 1) % k, iy1 = (iy + 1) % k;
  double v00 = hash_unit(static_cast<uint64_t>(ix), static_cast<uint64_t>(iy), world.texture_seed);
  double v10 = hash_unit(static_cast<uint64_t>(ix1), static_cast<uint64_t>(iy), world.texture_seed);
  double v01 = hash_unit(static_cast<uint64_t>(ix), static_cast<uint64_t>(iy1), world.texture_seed);
  double v11 = hash_unit(static_cast<uint64_t>(ix1), static_cast<uint64_t>(iy1), world.texture_seed);
  double v0 = v00 + (v10 - v00) * fx;
  double v1 = v01 + (v11 - v01) * fx;
  double v = v0 + (v1 - v0) * fy;
  return 0.15 + 0.5 * v;
}

double ground_value(const WorldSpec& world, double x, double y) {
  // Pad bullseye has priority, then pillar markers, then texture.
  double dx = std::abs(x - world.pad_x), dy = std::abs(y - world.pad_y);
  double d = std::max(dx, dy);
  if (d <= world.pad_half) {
    if (d <= world.pad_half / 3.0) return 0.95;
    if (d <= 2.0 * world.pad_half / 3.0) return 0.05;
    return 0.95;
  }
  for (const auto& p : world.pillars) {
    double px = std::abs(x - p.cx), py = std::abs(y - p.cy);
    if (px <= p.half && py <= p.half)
      return std::max(px, py) <= p.half / 2.0 ? 0.08 : 0.92;
  }
  return texture_value(world, x, y);
}

}  // namespace

WorldSpec WorldSpec::with_random_pillars(int n, double extent, uint64_t seed, double pad_x,
                                         double pad_y) {
  WorldSpec w;
  w.pad_x = pad_x;
  w.pad_y = pad_y;
  for (int i = 0; i < n; ++i) {
    Pillar p;
    // Rejection-free placement: hash-derived coordinates, nudged off the pad.
    p.cx = (hash_unit(static_cast<uint64_t>(i), 0, seed) - 0.5) * 2.0 * extent;
    p.cy = (hash_unit(static_cast<uint64_t>(i), 1, seed) - 0.5) * 2.0 * extent;
    if (std::abs(p.cx - pad_x) < w.pad_half + p.half + 0.1 &&
        std::abs(p.cy - pad_y) < w.pad_half + p.half + 0.1)
      p.cx += 2.0 * (w.pad_half + p.half + 0.2);
    w.pillars.push_back(p);
  }
  return w;
}

std::string WorldSpec::describe() const {
  std::ostringstream out;
  out << "period=" << format_double(texture_period) << " cells=" << texture_cells
      << " tex_seed=" << texture_seed << " fp=" << format_double(footprint_per_alt)
      << " pad=(" << format_double(pad_x) << ";" << format_double(pad_y) << ") pillars="
      << pillars.size();
  return out.str();
}

Frame render_frame(const WorldSpec& world, const Pose& pose, int h, int w, int c) {
  if (h <= 0 || w <= 0 || c <= 0) fail(ErrorKind::InvalidArgument, "render_frame: bad shape");
  double alt = pose.position.z();
  if (alt <= 0.0)
    fail(ErrorKind::DegenerateInput,
         "render_frame: camera altitude " + format_double(alt) + " not above ground");

  // Boresight along body -z; ground intersection displaces the footprint
  // center when the vehicle is tilted.
  Eigen::Matrix3d rot = pose.orientation.toRotationMatrix();
  Vec3 boresight = rot * Vec3(0.0, 0.0, -1.0);
  if (boresight.z() >= -1e-3)
    fail(ErrorKind::DegenerateInput, "render_frame: camera not looking at the ground");
  double s = alt / -boresight.z();
  double cx = pose.position.x() + s * boresight.x();
  double cy = pose.position.y() + s * boresight.y();

  // Footprint axes rotate with vehicle yaw only.
  double yaw = std::atan2(2.0 * (pose.orientation.w() * pose.orientation.z() +
                                 pose.orientation.x() * pose.orientation.y()),
                          1.0 - 2.0 * (pose.orientation.y() * pose.orientation.y() +
                                       pose.orientation.z() * pose.orientation.z()));
  double cyaw = std::cos(yaw), syaw = std::sin(yaw);

  double fw = alt * world.footprint_per_alt;
  double fh = fw * static_cast<double>(h) / static_cast<double>(w);

  Frame f;
  f.h = h;
  f.w = w;
  f.c = c;
  f.timestamp = pose.timestamp;
  f.pixels.resize(static_cast<size_t>(h) * w * c);
  for (int r = 0; r < h; ++r) {
    double v = ((r + 0.5) / h - 0.5) * fh;
    for (int col = 0; col < w; ++col) {
      double u = ((col + 0.5) / w - 0.5) * fw;
      double gx = cx + cyaw * u - syaw * v;
      double gy = cy + syaw * u + cyaw * v;
      double val = ground_value(world, gx, gy);
      for (int ch = 0; ch < c; ++ch) f.at(r, col, ch) = val;
    }
  }
  return f;
}

}  // namespace dvio
