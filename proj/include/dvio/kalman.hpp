#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "dvio/geometry.hpp"
#include "dvio/util.hpp"

namespace dvio::kf {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Discrete-time linear Gaussian model
///   x_{t+1} = A x_t + w_t,  w ~ N(0, Q)
///   y_t     = H x_t + v_t,  v ~ N(0, R)
struct KalmanModel {
  Mat A, H, Q, R;

  int state_dim() const { return static_cast<int>(A.rows()); }
  int meas_dim() const { return static_cast<int>(H.rows()); }
  void validate() const;
};

struct KalmanState {
  Vec mean;  // x hat
  Mat cov;   // P, kept symmetric
  Mat gain;  // last computed K
};

KalmanState make_state(const Vec& mean, const Mat& cov);

/// Time update: mean <- A mean, P <- A P A^T + Q.
KalmanState kf_predict(const KalmanModel& m, const KalmanState& s);

/// Measurement update with gain K = P H^T (H P H^T + R)^{-1}; the innovation
/// covariance is factored by Cholesky, never inverted explicitly.
KalmanState kf_update(const KalmanModel& m, const KalmanState& s, const Vec& measurement);

/// Predict-then-update composite.
KalmanState kf_step(const KalmanModel& m, const KalmanState& s, const Vec& measurement);

/// One application of the Riccati difference map
///   P <- A P A^T - A P H^T (H P H^T + R)^{-1} H P A^T + Q
/// which propagates the one-step-ahead (prior) covariance.
Mat riccati_map(const KalmanModel& m, const Mat& p);

/// The sequence P_1..P_steps produced by iterating the map from p0.
std::vector<Mat> riccati_iterate(const KalmanModel& m, const Mat& p0, int steps);

struct SteadyStateResult {
  Mat P;
  int iterations = 0;
};

/// Fixed-point iteration of the Riccati map until the max-abs element change
/// drops below tol. Throws NonConvergence past max_iter.
SteadyStateResult riccati_steady_state(const KalmanModel& m, double tol = 1e-12,
                                       int max_iter = 100000, const Mat* p0 = nullptr);

/// Euclidean distance between sensor and target plus zero-mean Gaussian noise.
double range_measurement(const Vec3& sensor, const Vec3& target, double noise_sigma, Rng& rng);

/// Per-axis constant-velocity (white acceleration) tracking model at period
/// dt: state (px,vx,py,vy,pz,vz), position-only measurements.
KalmanModel make_constant_velocity_model(double dt, double accel_psd, double meas_sigma);

struct BoundReport {
  std::vector<double> t;
  std::vector<double> kf_err;  // posterior position error norm per step
  std::vector<double> ml_err;
  double kf_rmse = 0.0;
  double ml_rmse = 0.0;
  Vec3 steady_std;        // per-axis one-step-ahead position std from Riccati
  double steady_std_3d = 0.0;  // sqrt of the position-block trace
  Mat P_steady;

  std::string to_csv() const;  // timestamp_s,kf_err_m,ml_err_m,kf_steady_std_m
  std::string summary() const;
};

/// Runs the constant-velocity filter over noisy position measurements of the
/// true trajectory and compares its per-step error to the learned estimates.
/// Both trajectories must be sampled at the same timestamps.
BoundReport bound_report(const KalmanModel& model, const Trajectory& truth,
                         const Trajectory& ml_estimates, uint64_t seed);

}  // namespace dvio::kf
