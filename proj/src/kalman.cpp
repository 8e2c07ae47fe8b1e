#include "dvio/kalman.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace dvio::kf {

namespace {

Mat symmetrize(const Mat& p) { return 0.5 * (p + p.transpose()); }

/// Solves S X = B with S symmetric positive definite.
Mat chol_solve(const Mat& s, const Mat& b, const char* what) {
  Eigen::LLT<Mat> llt(s);
  if (llt.info() != Eigen::Success)
    fail(ErrorKind::NumericFault, std::string("singular ") + what);
  return llt.solve(b);
}

}  // namespace

void KalmanModel::validate() const {
  int n = state_dim(), m = meas_dim();
  if (A.cols() != n || H.cols() != n || Q.rows() != n || Q.cols() != n || R.rows() != m ||
      R.cols() != m)
    fail(ErrorKind::DimensionMismatch, "kalman model dimensions inconsistent");
  if (!Q.isApprox(Q.transpose(), 1e-9) || !R.isApprox(R.transpose(), 1e-9))
    fail(ErrorKind::InvalidArgument, "kalman model: Q and R must be symmetric");
}

KalmanState make_state(const Vec& mean, const Mat& cov) {
  KalmanState s;
  s.mean = mean;
  s.cov = symmetrize(cov);
  s.gain = Mat::Zero(mean.size(), 1);
  return s;
}

KalmanState kf_predict(const KalmanModel& m, const KalmanState& s) {
  KalmanState out = s;
  out.mean = m.A * s.mean;
  out.cov = symmetrize(m.A * s.cov * m.A.transpose() + m.Q);
  return out;
}

KalmanState kf_update(const KalmanModel& m, const KalmanState& s, const Vec& measurement) {
  if (measurement.size() != m.meas_dim())
    fail(ErrorKind::DimensionMismatch, "kf_update: measurement dimension");
  Mat ph_t = s.cov * m.H.transpose();              // n x m
  Mat innov_cov = m.H * ph_t + m.R;                // m x m
  // K = P H^T S^{-1}  via  S K^T = H P^T
  Mat k = chol_solve(symmetrize(innov_cov), ph_t.transpose(), "innovation covariance").transpose();
  KalmanState out;
  out.mean = s.mean + k * (measurement - m.H * s.mean);
  out.cov = symmetrize((Mat::Identity(m.state_dim(), m.state_dim()) - k * m.H) * s.cov);
  out.gain = k;
  return out;
}

KalmanState kf_step(const KalmanModel& m, const KalmanState& s, const Vec& measurement) {
  return kf_update(m, kf_predict(m, s), measurement);
}

Mat riccati_map(const KalmanModel& m, const Mat& p) {
  Mat ph_t = p * m.H.transpose();
  Mat innov_cov = symmetrize(m.H * ph_t + m.R);
  Mat aph_t = m.A * ph_t;  // n x m
  // A P H^T S^{-1} H P A^T, with the solve applied to the middle factor.
  Mat x = chol_solve(innov_cov, aph_t.transpose(), "innovation covariance");  // m x n
  return symmetrize(m.A * p * m.A.transpose() - aph_t * x + m.Q);
}

std::vector<Mat> riccati_iterate(const KalmanModel& m, const Mat& p0, int steps) {
  std::vector<Mat> out;
  out.reserve(static_cast<size_t>(steps));
  Mat p = symmetrize(p0);
  for (int i = 0; i < steps; ++i) {
    p = riccati_map(m, p);
    out.push_back(p);
  }
  return out;
}

SteadyStateResult riccati_steady_state(const KalmanModel& m, double tol, int max_iter,
                                       const Mat* p0) {
  Mat p = p0 ? symmetrize(*p0) : Mat::Zero(m.state_dim(), m.state_dim());
  double residual = 0.0;
  for (int i = 1; i <= max_iter; ++i) {
    Mat next = riccati_map(m, p);
    residual = (next - p).cwiseAbs().maxCoeff();
    p = next;
    if (residual < tol) return {p, i};
  }
  fail(ErrorKind::NonConvergence, "riccati_steady_state: no fixed point after " +
                                      std::to_string(max_iter) +
                                      " iterations (last residual " + format_double(residual) +
                                      ")");
}

double range_measurement(const Vec3& sensor, const Vec3& target, double noise_sigma, Rng& rng) {
  double d = (sensor - target).norm();
  if (noise_sigma > 0.0) d += rng.gaussian(0.0, noise_sigma);
  return d;
}

KalmanModel make_constant_velocity_model(double dt, double accel_psd, double meas_sigma) {
  if (dt <= 0.0) fail(ErrorKind::InvalidArgument, "constant-velocity model: dt <= 0");
  KalmanModel m;
  m.A = Mat::Zero(6, 6);
  m.H = Mat::Zero(3, 6);
  m.Q = Mat::Zero(6, 6);
  m.R = Mat::Identity(3, 3) * (meas_sigma * meas_sigma);
  double q11 = accel_psd * dt * dt * dt / 3.0;
  double q12 = accel_psd * dt * dt / 2.0;
  double q22 = accel_psd * dt;
  for (int axis = 0; axis < 3; ++axis) {
    int i = 2 * axis;
    m.A(i, i) = 1.0;
    m.A(i, i + 1) = dt;
    m.A(i + 1, i + 1) = 1.0;
    m.H(axis, i) = 1.0;
    m.Q(i, i) = q11;
    m.Q(i, i + 1) = q12;
    m.Q(i + 1, i) = q12;
    m.Q(i + 1, i + 1) = q22;
  }
  return m;
}

std::string BoundReport::to_csv() const {
  std::ostringstream out;
  out << "timestamp_s,kf_err_m,ml_err_m,kf_steady_std_m\n";
  char buf[160];
  for (size_t i = 0; i < t.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.9f,%.17g,%.17g,%.17g\n", t[i], kf_err[i], ml_err[i],
                  steady_std_3d);
    out << buf;
  }
  return out.str();
}

std::string BoundReport::summary() const {
  std::ostringstream out;
  out << "steady-state prior position std per axis [m]: " << format_double(steady_std.x()) << " "
      << format_double(steady_std.y()) << " " << format_double(steady_std.z()) << "\n"
      << "steady-state prior position std 3-D [m]: " << format_double(steady_std_3d) << "\n"
      << "kf position rmse [m]: " << format_double(kf_rmse) << "\n"
      << "ml position rmse [m]: " << format_double(ml_rmse) << "\n";
  return out.str();
}

BoundReport bound_report(const KalmanModel& model, const Trajectory& truth,
                         const Trajectory& ml_estimates, uint64_t seed) {
  model.validate();
  if (truth.size() != ml_estimates.size() || truth.empty())
    fail(ErrorKind::DimensionMismatch, "bound_report: trajectory lengths differ or empty");
  for (size_t i = 0; i < truth.size(); ++i)
    if (std::abs(truth[i].timestamp - ml_estimates[i].timestamp) > 1e-9)
      fail(ErrorKind::InvalidArgument,
           "bound_report: timestamp misalignment at t=" + format_double(truth[i].timestamp));

  double meas_sigma = std::sqrt(model.R(0, 0));
  Rng rng(seed);

  auto ss = riccati_steady_state(model, 1e-12, 100000);

  BoundReport rep;
  rep.P_steady = ss.P;
  rep.steady_std = Vec3(std::sqrt(ss.P(0, 0)), std::sqrt(ss.P(2, 2)), std::sqrt(ss.P(4, 4)));
  rep.steady_std_3d = std::sqrt(ss.P(0, 0) + ss.P(2, 2) + ss.P(4, 4));

  Vec mean = Vec::Zero(6);
  for (int axis = 0; axis < 3; ++axis) mean(2 * axis) = truth[0].position[axis];
  KalmanState state = make_state(mean, Mat::Identity(6, 6));

  double kf_acc = 0.0, ml_acc = 0.0;
  for (size_t i = 0; i < truth.size(); ++i) {
    const Vec3& p = truth[i].position;
    if (i > 0) {
      Vec y(3);
      for (int axis = 0; axis < 3; ++axis) y(axis) = p[axis] + rng.gaussian(0.0, meas_sigma);
      state = kf_step(model, state, y);
    }
    Vec3 kf_pos(state.mean(0), state.mean(2), state.mean(4));
    double ke = (kf_pos - p).norm();
    double me = (ml_estimates[i].position - p).norm();
    rep.t.push_back(truth[i].timestamp);
    rep.kf_err.push_back(ke);
    rep.ml_err.push_back(me);
    kf_acc += ke * ke;
    ml_acc += me * me;
  }
  rep.kf_rmse = std::sqrt(kf_acc / static_cast<double>(truth.size()));
  rep.ml_rmse = std::sqrt(ml_acc / static_cast<double>(truth.size()));
  return rep;
}

}  // namespace dvio::kf
