// SPDX-License-Identifier: Apache-2.0
#pragma once

// Drag-only decay tracks under a piecewise exponential atmosphere, sampled
// into TLE-like records with seeded noise and labeled outliers.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include "reentry/csv.hpp"
#include "reentry/decay_fit.hpp"
#include "reentry/error.hpp"
#include "reentry/orbit.hpp"
#include "reentry/random.hpp"
#include "reentry/time.hpp"
#include "reentry/tle_data.hpp"

namespace reentry {

struct AtmosphereLayer {
  double base_km;
  double density;   // kg/m^3 at base_km
  double scale_km;  // scale height
};

/// Standard exponential atmosphere (Vallado, Table 8-4).
inline const std::array<AtmosphereLayer, 28>& atmosphere_table() {
  static const std::array<AtmosphereLayer, 28> t{{
      {0, 1.225, 7.249},          {25, 3.899e-2, 6.349},     {30, 1.774e-2, 6.682},     {40, 3.972e-3, 7.554},
      {50, 1.057e-3, 8.382},      {60, 3.206e-4, 7.714},     {70, 8.770e-5, 6.549},     {80, 1.905e-5, 5.799},
      {90, 3.396e-6, 5.382},      {100, 5.297e-7, 5.877},    {110, 9.661e-8, 7.263},    {120, 2.438e-8, 9.473},
      {130, 8.484e-9, 12.636},    {140, 3.845e-9, 16.149},   {150, 2.070e-9, 22.523},   {180, 5.464e-10, 29.740},
      {200, 2.789e-10, 37.105},   {250, 7.248e-11, 45.546},  {300, 2.418e-11, 53.628},  {350, 9.518e-12, 53.298},
      {400, 3.725e-12, 58.515},   {450, 1.585e-12, 60.828},  {500, 6.967e-13, 63.822},  {600, 1.454e-13, 71.835},
      {700, 3.614e-14, 88.667},   {800, 1.170e-14, 124.64},  {900, 5.245e-15, 181.05},  {1000, 3.019e-15, 268.00},
  }};
  return t;
}

/// Density [kg/m^3] at altitude h [km]. Below 0 km the sea-level layer is extrapolated.
inline double atmosphere_density(double h_km) {
  const auto& t = atmosphere_table();
  std::size_t i = t.size() - 1;
  while (i > 0 && h_km < t[i].base_km) --i;
  return t[i].density * std::exp(-(h_km - t[i].base_km) / t[i].scale_km);
}

/// Reference flux at which the table applies unchanged.
inline constexpr double kReferenceFlux = 150.0;

struct SyntheticSpec {
  int n_objects = 40;
  long long first_norad_id = 90001;
  double cd = 2.2;
  double ballistic_min = 0.015;      // CD*A/m, m^2/kg
  double ballistic_max = 0.03;
  double initial_altitude_km = 260.0;
  double flux_mean = 150.0;          // sfu
  double flux_amplitude = 25.0;      // sinusoidal variation of the 81-day mean
  double flux_period_days = 4000.0;
  double start_epoch = 8000.0;       // days since 2000-01-01 of the first object
  double start_spacing_days = 45.0;  // between consecutive objects
  double cadence_days = 0.25;        // longest record spacing
  double max_altitude_step_km = 2.0; // spacing shrinks so records stay this close in altitude
  double cadence_jitter = 0.2;       // fraction of the spacing
  double record_floor_km = 180.0;    // no records below this altitude
  double horizon_days = 3650.0;
  double inclination_deg = 51.6;
  double eccentricity = 0.001;
  double mm_noise_rel = 1e-6;        // 1-sigma, relative
  double ecc_noise = 2e-5;           // 1-sigma, absolute
  double incl_noise_deg = 2e-3;
  double bstar_noise_rel = 0.05;
  double outlier_rate = 0.0;         // per record
  int outlier_min_separation = 7;    // records between injected outliers, keeping them isolated
  double outlier_min_factor = 10.0;  // spike size in units of the filter tolerance
  double outlier_max_factor = 20.0;
  double ecc_outlier_unit = 5e-4;    // tolerance unit for eccentricity spikes
  double incl_outlier_unit = 0.05;   // deg
  double mm_rel_tol = 1e-3;          // tolerance unit for mean-motion spikes
  double reentry_window_minutes = 10.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_objects < 1) throw config_error("InvalidSpec", "n_objects must be >= 1");
    if (!(ballistic_min > 0 && ballistic_max >= ballistic_min)) throw config_error("InvalidSpec", "ballistic range");
    if (!(initial_altitude_km > kReentryAltitudeKm)) throw config_error("InvalidSpec", "initial altitude must exceed 80 km");
    if (!(flux_mean > 0 && flux_mean - std::abs(flux_amplitude) > 0)) throw config_error("InvalidSpec", "flux must stay positive");
    if (!(cadence_days > 0 && max_altitude_step_km > 0 && cadence_jitter >= 0 && cadence_jitter < 1))
      throw config_error("InvalidSpec", "cadence");
    if (!(outlier_rate >= 0 && outlier_rate <= 1)) throw config_error("InvalidSpec", "outlier_rate must lie in [0, 1]");
    if (outlier_min_separation < 1) throw config_error("InvalidSpec", "outlier_min_separation must be >= 1");
    if (!(mm_noise_rel >= 0 && ecc_noise >= 0 && incl_noise_deg >= 0 && bstar_noise_rel >= 0))
      throw config_error("InvalidSpec", "noise amplitudes must be non-negative");
    if (!(horizon_days > 0 && cd > 0)) throw config_error("InvalidSpec", "horizon and cd must be positive");
  }

  /// 81-day mean flux on day `epoch`.
  double flux_at(double epoch) const {
    return flux_mean + flux_amplitude * std::sin(2.0 * std::numbers::pi * (epoch - start_epoch) / flux_period_days);
  }
};

enum class OutlierKind { MeanMotion, Eccentricity, Inclination };

inline const char* to_string(OutlierKind k) {
  switch (k) {
    case OutlierKind::MeanMotion: return "mean_motion";
    case OutlierKind::Eccentricity: return "eccentricity";
    case OutlierKind::Inclination: return "inclination";
  }
  return "?";
}

struct OutlierLabel {
  long long norad_id = 0;
  int source_index = 0;
  OutlierKind kind = OutlierKind::MeanMotion;
};

struct DecaySample {
  double epoch = 0.0;     // days
  double altitude = 0.0;  // km
};

struct SyntheticObject {
  long long norad_id = 0;
  double cd_a_over_m = 0.0;  // m^2/kg
  double area_to_mass = 0.0; // m^2/kg
  double flux = 0.0;         // sfu, held for the whole decay
  double start_epoch = 0.0;
  double decay_epoch = 0.0;  // 80 km crossing
  std::vector<DecaySample> path;  // integrator states, strictly decreasing altitude

  /// Altitude at `epoch` by linear interpolation of the integrator states.
  double altitude_at(double epoch) const {
    if (epoch <= path.front().epoch) return path.front().altitude;
    if (epoch >= path.back().epoch) return path.back().altitude;
    auto it = std::lower_bound(path.begin(), path.end(), epoch,
                               [](const DecaySample& s, double e) { return s.epoch < e; });
    const auto& b = *it;
    const auto& a = *(it - 1);
    return a.altitude + (b.altitude - a.altitude) * (epoch - a.epoch) / (b.epoch - a.epoch);
  }

  /// Epoch at which the altitude crosses `h_km`.
  double epoch_at(double h_km) const {
    auto it = std::lower_bound(path.begin(), path.end(), h_km,
                               [](const DecaySample& s, double h) { return s.altitude > h; });
    if (it == path.begin()) return path.front().epoch;
    if (it == path.end()) return path.back().epoch;
    const auto& b = *it;
    const auto& a = *(it - 1);
    return a.epoch + (b.epoch - a.epoch) * (a.altitude - h_km) / (a.altitude - b.altitude);
  }
};

struct SyntheticDataset {
  SyntheticSpec spec;
  std::vector<SyntheticObject> objects;
  std::vector<ObjectTrack> tracks;     // records carry global source indices
  std::vector<OutlierLabel> outliers;

  std::vector<TleRecord> all_records() const {
    std::vector<TleRecord> out;
    for (const auto& t : tracks) out.insert(out.end(), t.records.begin(), t.records.end());
    return out;
  }
};

/// Semi-major axis rate [km/s] for drag-only decay: -sqrt(mu a) rho B.
inline double decay_rate(double a_km, double ballistic, double density_scale) {
  const double rho = atmosphere_density(a_km - kEarthRadiusKm) * density_scale;
  return -std::sqrt(kMuEarth * a_km) * rho * ballistic * 1000.0;
}

/// RK4 of the semi-major axis from `h0_km` down to 80 km: 60 s steps above
/// 200 km, 10 s below, shortened so no step drops more than 0.2 km. The final state is placed exactly on the
/// 80 km crossing by linear interpolation within the last step.
inline std::vector<DecaySample> integrate_decay(double h0_km, double ballistic, double density_scale,
                                                double start_epoch, double horizon_days) {
  std::vector<DecaySample> path{{start_epoch, h0_km}};
  double a = h0_km + kEarthRadiusKm;
  double t = 0.0;  // seconds
  const double horizon_s = horizon_days * kSecondsPerDay;
  const double a_end = kReentryAltitudeKm + kEarthRadiusKm;
  while (a > a_end) {
    if (t > horizon_s)
      throw numerical_error("NonDecayingOrbit", "altitude still " + csv::fmt(a - kEarthRadiusKm) + " km after " +
                                                    csv::fmt(horizon_days) + " days");
    const double k1 = decay_rate(a, ballistic, density_scale);
    const double dt = std::min((a - kEarthRadiusKm) > kGridTopKm ? 60.0 : 10.0, 0.2 / -k1);
    const double k2 = decay_rate(a + 0.5 * dt * k1, ballistic, density_scale);
    const double k3 = decay_rate(a + 0.5 * dt * k2, ballistic, density_scale);
    const double k4 = decay_rate(a + dt * k3, ballistic, density_scale);
    const double a_next = a + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    if (a_next <= a_end) {
      const double frac = (a - a_end) / (a - a_next);
      path.push_back({start_epoch + (t + frac * dt) / kSecondsPerDay, kReentryAltitudeKm});
      break;
    }
    a = a_next;
    t += dt;
    path.push_back({start_epoch + t / kSecondsPerDay, a - kEarthRadiusKm});
  }
  return path;
}

/// Generates every object of `spec`. Records are numbered globally in emission
/// order, which matches the row order of the written OMM file.
inline SyntheticDataset generate_tracks(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticDataset ds;
  ds.spec = spec;
  int source_index = 0;
  for (int i = 0; i < spec.n_objects; ++i) {
    Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(i)));
    SyntheticObject obj;
    obj.norad_id = spec.first_norad_id + i;
    obj.cd_a_over_m = rng.uniform(spec.ballistic_min, spec.ballistic_max);
    obj.area_to_mass = obj.cd_a_over_m / spec.cd;
    obj.start_epoch = spec.start_epoch + spec.start_spacing_days * i;
    obj.flux = spec.flux_at(obj.start_epoch);
    obj.path = integrate_decay(spec.initial_altitude_km, obj.cd_a_over_m, obj.flux / kReferenceFlux, obj.start_epoch,
                               spec.horizon_days);
    obj.decay_epoch = obj.path.back().epoch;

    ObjectTrack track;
    track.norad_id = obj.norad_id;
    track.reentry_epoch = obj.decay_epoch;
    track.reentry_uncertainty = spec.reentry_window_minutes;
    const double bstar = bstar_from_ballistic(obj.cd_a_over_m);
    const double raan0 = rng.uniform(0.0, 360.0);
    const double density_scale = obj.flux / kReferenceFlux;
    long long last_outlier = -spec.outlier_min_separation;
    for (double t = obj.start_epoch;;) {
      const double rate = -decay_rate(obj.altitude_at(t) + kEarthRadiusKm, obj.cd_a_over_m, density_scale) * kSecondsPerDay;
      const double step = std::min(spec.cadence_days, spec.max_altitude_step_km / rate);
      const double epoch = t + step * spec.cadence_jitter * rng.uniform(-0.5, 0.5);
      t += step;
      if (epoch >= obj.decay_epoch) break;
      const double h = obj.altitude_at(std::max(epoch, obj.start_epoch));
      if (h < spec.record_floor_km) break;
      TleRecord r;
      r.norad_id = obj.norad_id;
      r.epoch = std::max(epoch, obj.start_epoch);
      r.mean_motion = mean_motion_for_altitude(h) * (1.0 + spec.mm_noise_rel * rng.normal());
      r.eccentricity = std::max(0.0, spec.eccentricity + spec.ecc_noise * rng.normal());
      r.inclination = spec.inclination_deg + spec.incl_noise_deg * rng.normal();
      r.bstar = bstar * (1.0 + spec.bstar_noise_rel * rng.normal());
      r.raan = std::fmod(raan0 + 5.0 * (r.epoch - obj.start_epoch), 360.0);
      r.arg_perigee = rng.uniform(0.0, 360.0);
      r.mean_anomaly = rng.uniform(0.0, 360.0);
      r.source_index = source_index;
      const auto index_in_track = static_cast<long long>(track.records.size());
      if (spec.outlier_rate > 0 && rng.bernoulli(spec.outlier_rate) &&
          index_in_track - last_outlier >= spec.outlier_min_separation) {
        last_outlier = index_in_track;
        const double factor = rng.uniform(spec.outlier_min_factor, spec.outlier_max_factor);
        const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
        const auto kind = static_cast<OutlierKind>(rng.uniform_int(0, 2));
        switch (kind) {
          case OutlierKind::MeanMotion: r.mean_motion *= 1.0 + sign * factor * spec.mm_rel_tol; break;
          case OutlierKind::Eccentricity:
            r.eccentricity = std::max(0.0, r.eccentricity + factor * spec.ecc_outlier_unit);
            break;
          case OutlierKind::Inclination: r.inclination += sign * factor * spec.incl_outlier_unit; break;
        }
        ds.outliers.push_back({obj.norad_id, source_index, kind});
      }
      ++source_index;
      track.records.push_back(r);
    }
    ds.objects.push_back(std::move(obj));
    ds.tracks.push_back(std::move(track));
  }
  return ds;
}

/// Ground truth: norad_id, decay_epoch, cd_a_over_m.
inline void write_ground_truth_csv(std::ostream& out, const SyntheticDataset& ds) {
  out << "norad_id,decay_epoch,cd_a_over_m\n";
  for (const auto& o : ds.objects)
    out << o.norad_id << ',' << format_iso8601(o.decay_epoch, 6) << ',' << csv::fmt(o.cd_a_over_m) << '\n';
}

inline void write_outlier_labels_csv(std::ostream& out, const SyntheticDataset& ds) {
  out << "norad_id,source_index,kind\n";
  for (const auto& l : ds.outliers) out << l.norad_id << ',' << l.source_index << ',' << to_string(l.kind) << '\n';
}

/// TIP-style file: NORAD_CAT_ID, DECAY_EPOCH, WINDOW_MINUTES.
inline void write_tip_csv(std::ostream& out, const SyntheticDataset& ds) {
  out << "NORAD_CAT_ID,DECAY_EPOCH,WINDOW_MINUTES\n";
  for (const auto& o : ds.objects)
    out << o.norad_id << ',' << format_iso8601(o.decay_epoch, 6) << ',' << csv::fmt(ds.spec.reentry_window_minutes) << '\n';
}

/// Daily 81-day mean flux covering every object: DATE, F107_81DAY.
inline void write_space_weather_csv(std::ostream& out, const SyntheticDataset& ds) {
  out << "DATE,F107_81DAY\n";
  double last = ds.spec.start_epoch;
  for (const auto& o : ds.objects) last = std::max(last, o.decay_epoch);
  for (double d = std::floor(ds.spec.start_epoch) - 1; d <= std::ceil(last) + 1; d += 1.0)
    out << format_iso8601(d, 0).substr(0, 10) << ',' << csv::fmt(ds.spec.flux_at(d)) << '\n';
}

/// NORAD_CAT_ID, AREA_TO_MASS.
inline void write_area_to_mass_csv(std::ostream& out, const SyntheticDataset& ds) {
  out << "NORAD_CAT_ID,AREA_TO_MASS\n";
  for (const auto& o : ds.objects) out << o.norad_id << ',' << csv::fmt(o.area_to_mass) << '\n';
}

}  // namespace reentry
