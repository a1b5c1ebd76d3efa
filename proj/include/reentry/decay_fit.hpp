// SPDX-License-Identifier: Apache-2.0
#pragma once

// Altitude decay curve
//
//   f(t) = a1 + a2 (t_ref - t)^(1/2) + a3 (t_ref - t)^(1/3) + a4 (t_ref - t)^(1/4)
//
// with a1 pinned at the 80 km re-entry altitude so f(t_ref) = 80 exactly, and
// its inversion onto a uniform 25-point altitude grid from 200 km to 80 km.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <ostream>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "reentry/csv.hpp"
#include "reentry/error.hpp"
#include "reentry/orbit.hpp"
#include "reentry/tle_data.hpp"

namespace reentry {

inline constexpr double kReentryAltitudeKm = 80.0;
inline constexpr double kGridTopKm = 200.0;
inline constexpr double kFitCeilingKm = 240.0;
inline constexpr std::size_t kGridPoints = 25;

struct FitCoefficients {
  double a1 = kReentryAltitudeKm;
  double a2 = 0.0;
  double a3 = 0.0;
  double a4 = 0.0;
  double t_ref = 0.0;  // days

  /// Altitude [km] at epoch t (t <= t_ref).
  double operator()(double t) const {
    const double s = std::max(0.0, t_ref - t);
    return a1 + a2 * std::sqrt(s) + a3 * std::cbrt(s) + a4 * std::sqrt(std::sqrt(s));
  }
};

struct FitResult {
  FitCoefficients coefficients;
  bool converged = false;
  int iterations = 0;
  double cost = 0.0;  // 0.5 * sum of squared residuals, km^2
};

struct LmOptions {
  double lambda_init = 1e-3;
  double lambda_up = 10.0;
  double lambda_down = 10.0;
  double rel_cost_tol = 1e-10;
  int max_iterations = 200;
};

/// A (epoch, altitude) pair fed to the fit.
struct AltitudeSample {
  double epoch = 0.0;
  double altitude = 0.0;
};

/// Levenberg-Marquardt fit of (a2, a3, a4) with a1 = 80 km. Each damped step
/// is solved by QR on the augmented system [J; sqrt(lambda) D] rather than the
/// normal equations, because the three power-law columns are nearly collinear.
inline FitResult fit_decay_curve(const std::vector<AltitudeSample>& samples, double t_ref,
                                 const LmOptions& opt = {}) {
  if (samples.size() < 3) throw input_error("TooFewSamples", std::to_string(samples.size()) + " < 3");
  for (const auto& s : samples)
    if (!(s.epoch < t_ref)) throw input_error("SampleAfterReference", "sample epoch not before t_ref");

  const auto m = static_cast<Eigen::Index>(samples.size());
  Eigen::MatrixXd jac(m, 3);
  Eigen::VectorXd target(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double s = t_ref - samples[static_cast<std::size_t>(i)].epoch;
    jac(i, 0) = std::sqrt(s);
    jac(i, 1) = std::cbrt(s);
    jac(i, 2) = std::sqrt(std::sqrt(s));
    target(i) = samples[static_cast<std::size_t>(i)].altitude - kReentryAltitudeKm;
  }
  // The model is linear in the free coefficients, so the Jacobian is constant.
  auto residual = [&](const Eigen::Vector3d& p) -> Eigen::VectorXd { return jac * p - target; };
  auto cost_of = [](const Eigen::VectorXd& r) { return 0.5 * r.squaredNorm(); };

  Eigen::Vector3d params = Eigen::Vector3d::Zero();
  Eigen::VectorXd r = residual(params);
  double cost = cost_of(r);
  double lambda = opt.lambda_init;
  const Eigen::Vector3d scale = jac.colwise().norm().transpose().cwiseMax(1e-300);

  FitResult out;
  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    if (cost == 0.0) {
      out.converged = true;
      break;
    }
    Eigen::MatrixXd aug(m + 3, 3);
    aug.topRows(m) = jac;
    aug.bottomRows(3) = (std::sqrt(lambda) * scale).asDiagonal();
    Eigen::VectorXd rhs(m + 3);
    rhs.head(m) = -r;
    rhs.tail(3).setZero();
    const Eigen::Vector3d step = aug.colPivHouseholderQr().solve(rhs);
    const Eigen::Vector3d trial = params + step;
    const Eigen::VectorXd r_trial = residual(trial);
    const double trial_cost = cost_of(r_trial);
    if (std::isfinite(trial_cost) && trial_cost < cost) {
      const double rel = (cost - trial_cost) / cost;
      params = trial;
      r = r_trial;
      cost = trial_cost;
      lambda /= opt.lambda_down;
      if (rel < opt.rel_cost_tol) {
        out.converged = true;
        ++it;
        break;
      }
    } else {
      lambda *= opt.lambda_up;
      // No damping level improves the cost: the minimum is reached to machine precision.
      if (lambda > 1e20) {
        out.converged = true;
        ++it;
        break;
      }
    }
  }
  out.iterations = it;
  out.cost = cost;
  out.coefficients = FitCoefficients{kReentryAltitudeKm, params(0), params(1), params(2), t_ref};
  return out;
}

/// How t_ref is chosen for a track.
enum class FitMode {
  ReentryEpoch,  // TIP decay epoch (training data)
  LastRecord,    // epoch of the last available TLE (operational use)
};

/// Samples from a pruned track: mean altitude of every record below 240 km
/// strictly before t_ref.
inline std::vector<AltitudeSample> fit_samples(const ObjectTrack& track, double t_ref,
                                               const SemiMajorAxisConversion& convert = {}) {
  std::vector<AltitudeSample> out;
  for (const auto& r : track.records) {
    const double h = mean_altitude(r.mean_motion, convert);
    if (h < kFitCeilingKm && r.epoch < t_ref) out.push_back({r.epoch, h});
  }
  return out;
}

inline FitResult fit_track(const ObjectTrack& track, FitMode mode = FitMode::ReentryEpoch,
                           const SemiMajorAxisConversion& convert = {}) {
  if (track.records.empty()) throw input_error("TooFewSamples", "empty track");
  const double t_ref = mode == FitMode::ReentryEpoch ? track.reentry_epoch : track.records.back().epoch;
  return fit_decay_curve(fit_samples(track, t_ref, convert), t_ref);
}

struct DecayTrajectory {
  long long norad_id = 0;
  std::array<double, kGridPoints> grid_altitudes{};  // km, 200 down to 80
  std::array<double, kGridPoints> grid_times{};      // absolute epochs, days
  FitCoefficients coefficients;

  /// Epoch at 200 km, the origin of residual times.
  double origin() const { return grid_times.front(); }

  /// Residual time [days] of each grid point measured from the 200 km epoch.
  std::array<double, kGridPoints> relative_times() const {
    std::array<double, kGridPoints> out{};
    for (std::size_t i = 0; i < kGridPoints; ++i) out[i] = grid_times[i] - grid_times[0];
    return out;
  }

  /// Residual lifetime from 200 km to 80 km [days].
  double lifetime() const { return grid_times.back() - grid_times.front(); }
};

/// Grid altitude i (0-based): 200, 195, ..., 80 km.
inline double grid_altitude(std::size_t i) {
  return kGridTopKm - (kGridTopKm - kReentryAltitudeKm) * static_cast<double>(i) /
                          static_cast<double>(kGridPoints - 1);
}

/// Index of a grid altitude, or throws when `altitude_km` is not on the grid.
inline std::size_t grid_index_of(double altitude_km) {
  for (std::size_t i = 0; i < kGridPoints; ++i)
    if (std::abs(grid_altitude(i) - altitude_km) < 1e-9) return i;
  throw config_error("OffGridAltitude", std::to_string(altitude_km));
}

/// True when f is strictly decreasing in t on s = t_ref - t in (0, s_max].
/// With u = s^(1/12), s^(3/4) f'(s) = a2/2 u^3 + a3/3 u + a4/4, a cubic whose
/// minimum over (0, u_max] sits at an endpoint or a stationary point.
inline bool strictly_decreasing(const FitCoefficients& c, double s_max) {
  const double a = c.a2 / 2.0, b = c.a3 / 3.0, d = c.a4 / 4.0;
  auto p = [&](double u) { return a * u * u * u + b * u + d; };
  const double u_max = std::pow(s_max, 1.0 / 12.0);
  std::vector<double> pts{0.0, u_max};
  if (a != 0.0 && -b / (3.0 * a) > 0.0) {
    const double uc = std::sqrt(-b / (3.0 * a));
    if (uc < u_max) pts.push_back(uc);
  }
  // p(0) = a4/4 may be zero only in the limit s -> 0, which is allowed if p > 0 elsewhere.
  for (double u : pts) {
    if (u == 0.0) {
      if (d < 0.0) return false;
      if (d == 0.0 && !(p(std::min(u_max, 1e-6)) > 0.0)) return false;
    } else if (!(p(u) > 0.0)) {
      return false;
    }
  }
  return true;
}

/// Inverts the fitted curve at the 25 grid altitudes by bisection.
inline DecayTrajectory sample_grid(const FitCoefficients& c, long long norad_id = 0, double tol_days = 1e-9) {
  // Bracket the 200 km crossing by doubling s.
  double s_hi = 1.0 / 1024.0;
  while (c(c.t_ref - s_hi) < kGridTopKm) {
    s_hi *= 2.0;
    if (s_hi > 1e5 || !std::isfinite(c(c.t_ref - s_hi)))
      throw numerical_error("NonMonotoneFit", "curve never reaches 200 km");
  }
  if (!strictly_decreasing(c, s_hi)) throw numerical_error("NonMonotoneFit", "curve not invertible on [80, 200] km");

  DecayTrajectory traj;
  traj.norad_id = norad_id;
  traj.coefficients = c;
  for (std::size_t i = 0; i < kGridPoints; ++i) {
    const double x = grid_altitude(i);
    traj.grid_altitudes[i] = x;
    if (i == kGridPoints - 1) {
      traj.grid_times[i] = c.t_ref;
      continue;
    }
    double lo = c.t_ref - s_hi, hi = c.t_ref;  // f(lo) >= x > f(hi)
    while (hi - lo > tol_days) {
      const double mid = 0.5 * (lo + hi);
      if (c(mid) >= x) lo = mid;
      else hi = mid;
    }
    traj.grid_times[i] = 0.5 * (lo + hi);
  }
  for (std::size_t i = 1; i < kGridPoints; ++i)
    if (!(traj.grid_times[i] > traj.grid_times[i - 1]))
      throw numerical_error("NonMonotoneFit", "grid times not strictly increasing");
  return traj;
}

/// CSV with one row per grid point: norad_id,grid_index,altitude_km,time_days
/// (time measured from the 200 km epoch).
inline void write_trajectories_csv(std::ostream& out, const std::vector<DecayTrajectory>& trajs) {
  out << "norad_id,grid_index,altitude_km,time_days\n";
  for (const auto& t : trajs) {
    const auto rel = t.relative_times();
    for (std::size_t i = 0; i < kGridPoints; ++i)
      out << t.norad_id << ',' << i << ',' << csv::fmt(t.grid_altitudes[i]) << ',' << csv::fmt(rel[i]) << '\n';
  }
}

}  // namespace reentry
