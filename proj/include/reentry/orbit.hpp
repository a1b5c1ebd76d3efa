// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <numbers>

#include "reentry/error.hpp"

namespace reentry {

inline constexpr double kMuEarth = 398600.4418;      // km^3/s^2
inline constexpr double kEarthRadiusKm = 6378.135;   // km
inline constexpr double kSecondsPerDay = 86400.0;

/// SGP4 reference density used in the B* definition, 2.461e-5 (per ER).
inline constexpr double kBstarRho0 = 2.461e-5;

/// Semi-major axis [km] from mean motion [rev/day] via Kepler's third law.
inline double semi_major_axis_km(double mean_motion_rev_day) {
  if (!(mean_motion_rev_day > 0.0))
    throw input_error("NonPositiveMeanMotion", std::to_string(mean_motion_rev_day));
  const double n_rad_s = mean_motion_rev_day * 2.0 * std::numbers::pi / kSecondsPerDay;
  return std::cbrt(kMuEarth / (n_rad_s * n_rad_s));
}

/// Mean motion [rev/day] of a circular orbit at altitude `h_km`.
inline double mean_motion_for_altitude(double h_km) {
  const double a = h_km + kEarthRadiusKm;
  return std::sqrt(kMuEarth / (a * a * a)) * kSecondsPerDay / (2.0 * std::numbers::pi);
}

/// Converts a mean-element semi-major axis to the value used for altitude.
/// The default is the identity (Keplerian approximation); an SGP4-based
/// mean-to-osculating conversion can be plugged in here.
using SemiMajorAxisConversion = std::function<double(double mean_sma_km)>;

/// Average altitude h = a - R_earth [km].
inline double mean_altitude(double mean_motion_rev_day, const SemiMajorAxisConversion& convert = {}) {
  const double a = semi_major_axis_km(mean_motion_rev_day);
  return (convert ? convert(a) : a) - kEarthRadiusKm;
}

/// B* [1/ER] from the ballistic coefficient CD*A/m [m^2/kg]:
/// B* = 0.5 * B * rho0 * R_earth with R_earth in km, which puts typical
/// decaying objects at 1e-4..1e-2 per Earth radius.
inline double bstar_from_ballistic(double cd_area_over_mass) {
  return 0.5 * cd_area_over_mass * kBstarRho0 * kEarthRadiusKm;
}

inline double ballistic_from_bstar(double bstar) {
  return bstar / (0.5 * kBstarRho0 * kEarthRadiusKm);
}

/// Orbital period [days] from mean motion [rev/day].
inline double orbital_period_days(double mean_motion_rev_day) { return 1.0 / mean_motion_rev_day; }

}  // namespace reentry
