// SPDX-License-Identifier: Apache-2.0
#pragma once

// Per-object feature sequences on the 25-point altitude grid and the rank-3
// [objects x time x features] tensor fed to the network.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "reentry/csv.hpp"
#include "reentry/decay_fit.hpp"
#include "reentry/error.hpp"
#include "reentry/tle_data.hpp"
#include "reentry/time.hpp"

namespace reentry {

// ---------------------------------------------------------------------------
// B*

/// Running mean of B* where each term averages all records so far.
inline std::vector<double> cumulative_mean(const std::vector<double>& values) {
  std::vector<double> out(values.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sum += values[i];
    out[i] = sum / static_cast<double>(i + 1);
  }
  return out;
}

/// Windowed variant: mean of the last `window` values.
inline std::vector<double> moving_mean(const std::vector<double>& values, std::size_t window) {
  if (window == 0) return cumulative_mean(values);
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t b = i + 1 >= window ? i + 1 - window : 0;
    double s = 0.0;
    for (std::size_t j = b; j <= i; ++j) s += values[j];
    out[i] = s / static_cast<double>(i + 1 - b);
  }
  return out;
}

/// B* sampled at the grid epochs: running mean over record epochs, held
/// constant between records. Grid epochs before the first record take the
/// first value. `window` = 0 selects the cumulative mean.
inline std::array<double, kGridPoints> bstar_feature(const ObjectTrack& track,
                                                    const std::array<double, kGridPoints>& grid_epochs,
                                                    std::size_t window = 0) {
  if (track.records.empty()) throw input_error("EmptyTrack", std::to_string(track.norad_id));
  std::vector<double> b, t;
  for (const auto& r : track.records) {
    b.push_back(r.bstar);
    t.push_back(r.epoch);
  }
  const auto avg = moving_mean(b, window);
  std::array<double, kGridPoints> out{};
  for (std::size_t i = 0; i < kGridPoints; ++i) {
    // Last record with epoch <= grid time.
    const auto it = std::upper_bound(t.begin(), t.end(), grid_epochs[i]);
    const std::size_t k = it == t.begin() ? 0 : static_cast<std::size_t>(it - t.begin()) - 1;
    out[i] = avg[k];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Solar index

struct SpaceWeatherSeries {
  std::vector<double> dates;        // days, strictly increasing
  std::vector<double> f107_81day;   // sfu

  void validate() const {
    if (dates.size() != f107_81day.size()) throw input_error("MalformedSpaceWeather", "length mismatch");
    for (std::size_t i = 0; i < dates.size(); ++i) {
      if (i > 0 && !(dates[i] > dates[i - 1])) throw input_error("MalformedSpaceWeather", "dates not increasing");
      if (!(f107_81day[i] > 0)) throw input_error("MalformedSpaceWeather", "flux must be positive");
    }
  }
};

/// Space-weather CSV: DATE, F107_OBS, F107_81DAY. Rows are sorted by date.
inline SpaceWeatherSeries read_space_weather_csv(std::istream& in) {
  std::vector<std::pair<double, double>> rows;
  for (const auto& row : csv::read(in))
    rows.emplace_back(parse_iso8601(csv::field(row, "DATE")),
                      csv::to_double(csv::field(row, "F107_81DAY"), "F107_81DAY"));
  std::sort(rows.begin(), rows.end());
  SpaceWeatherSeries sw;
  for (const auto& [d, f] : rows) {
    sw.dates.push_back(d);
    sw.f107_81day.push_back(f);
  }
  sw.validate();
  return sw;
}

/// 81-day mean F10.7 at the latest series date <= start_epoch.
inline double solar_feature(const SpaceWeatherSeries& sw, double start_epoch) {
  if (sw.dates.empty() || start_epoch < sw.dates.front())
    throw input_error("OutOfCoverage", "epoch " + std::to_string(start_epoch) + " precedes space-weather data");
  const auto it = std::upper_bound(sw.dates.begin(), sw.dates.end(), start_epoch);
  return sw.f107_81day[static_cast<std::size_t>(it - sw.dates.begin()) - 1];
}

// ---------------------------------------------------------------------------
// Normalization

struct MinMax {
  double min = 0.0;
  double max = 1.0;

  double apply(double x) const { return (x - min) / (max - min); }
  double invert(double x) const { return min + x * (max - min); }
  double span() const { return max - min; }
  bool operator==(const MinMax&) const = default;
};

inline MinMax fit_minmax(const std::vector<double>& values) {
  if (values.empty()) throw input_error("DegenerateRange", "no values");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (!(*hi > *lo)) throw numerical_error("DegenerateRange", "max equals min");
  return {*lo, *hi};
}

/// x_bar = (x - min) / (max - min). Supplied stats are applied as-is, so
/// validation data may fall outside [0, 1].
inline std::pair<std::vector<double>, MinMax> minmax_normalize(const std::vector<double>& values,
                                                               std::optional<MinMax> stats = std::nullopt) {
  const MinMax s = stats ? *stats : fit_minmax(values);
  if (!(s.max > s.min)) throw numerical_error("DegenerateRange", "max equals min");
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = s.apply(values[i]);
  return {out, s};
}

// ---------------------------------------------------------------------------
// Tensor

/// Object metadata CSV: NORAD_CAT_ID, AREA_TO_MASS [m^2/kg].
inline std::map<long long, double> read_area_to_mass_csv(std::istream& in) {
  std::map<long long, double> out;
  for (const auto& row : csv::read(in))
    out[csv::to_int(csv::field(row, "NORAD_CAT_ID"), "NORAD_CAT_ID")] =
        csv::to_double(csv::field(row, "AREA_TO_MASS"), "AREA_TO_MASS");
  return out;
}

enum Feature : std::size_t { kTime = 0, kBstar = 1, kSolar = 2, kAreaToMass = 3, kNumFeatures = 4 };

inline const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> names{"residual_time", "bstar", "f107_81day", "area_to_mass"};
  return names;
}

struct FeatureTensor {
  std::size_t n_objects = 0;
  std::size_t n_steps = kGridPoints;
  std::size_t n_features = kNumFeatures;
  std::vector<std::string> names = feature_names();
  std::vector<double> data;           // normalized, row-major [object][step][feature]
  std::vector<MinMax> norm_stats;     // per feature, fitted on training objects
  std::vector<double> targets;        // residual times [object][step], days
  std::vector<long long> norad_ids;
  std::vector<bool> is_train;
  std::vector<double> area_to_mass;   // m^2/kg (imputed where missing)
  std::vector<double> start_epochs;   // absolute epoch of the 200 km crossing
  std::vector<long long> imputed_area_to_mass;
  std::vector<std::string> warnings;

  double& at(std::size_t obj, std::size_t step, std::size_t feat) {
    return data[(obj * n_steps + step) * n_features + feat];
  }
  double at(std::size_t obj, std::size_t step, std::size_t feat) const {
    return data[(obj * n_steps + step) * n_features + feat];
  }
  double target(std::size_t obj, std::size_t step) const { return targets[obj * n_steps + step]; }

  /// Normalization of the residual-time feature, shared with the targets.
  const MinMax& time_stats() const { return norm_stats[kTime]; }

  std::vector<std::size_t> indices(bool train) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n_objects; ++i)
      if (is_train[i] == train) out.push_back(i);
    return out;
  }

  std::optional<std::size_t> index_of(long long norad) const {
    for (std::size_t i = 0; i < n_objects; ++i)
      if (norad_ids[i] == norad) return i;
    return std::nullopt;
  }
};

struct TensorOptions {
  std::size_t bstar_window = 0;  // 0: cumulative mean
  /// The time and solar features are always min-max scaled; B* and A/m are
  /// scaled too unless disabled.
  bool normalize_bstar = true;
  bool normalize_area_to_mass = true;
  /// Reuse statistics from another tensor instead of fitting them; used to
  /// assemble held-out objects against a trained model's normalization.
  std::optional<std::vector<MinMax>> fixed_stats;
};

/// Builds the feature tensor. `train_ids` selects the objects whose values
/// define the normalization statistics and the A/m imputation median.
inline FeatureTensor assemble_tensor(const std::vector<DecayTrajectory>& trajectories,
                                     const std::vector<ObjectTrack>& tracks, const SpaceWeatherSeries& sw,
                                     const std::map<long long, double>& area_to_mass,
                                     const std::set<long long>& train_ids, const TensorOptions& opt = {}) {
  std::map<long long, const ObjectTrack*> track_by_id;
  for (const auto& t : tracks) track_by_id[t.norad_id] = &t;

  FeatureTensor ft;
  ft.n_objects = trajectories.size();
  ft.data.assign(ft.n_objects * kGridPoints * kNumFeatures, 0.0);
  ft.targets.assign(ft.n_objects * kGridPoints, 0.0);

  std::vector<double> train_am;
  for (const auto& tr : trajectories)
    if (train_ids.count(tr.norad_id)) {
      if (auto it = area_to_mass.find(tr.norad_id); it != area_to_mass.end()) train_am.push_back(it->second);
    }
  double am_median = 0.0;
  if (!train_am.empty()) am_median = detail::median(train_am);

  // Raw features first.
  for (std::size_t o = 0; o < ft.n_objects; ++o) {
    const auto& tr = trajectories[o];
    const auto tit = track_by_id.find(tr.norad_id);
    if (tit == track_by_id.end()) throw input_error("MissingObjectData", std::to_string(tr.norad_id) + " (track)");
    double f107 = 0.0;
    try {
      f107 = solar_feature(sw, tr.origin());
    } catch (const Error&) {
      throw input_error("MissingObjectData", std::to_string(tr.norad_id) + " (space weather)");
    }
    double am = 0.0;
    if (auto it = area_to_mass.find(tr.norad_id); it != area_to_mass.end()) {
      am = it->second;
    } else {
      if (train_am.empty()) throw input_error("MissingObjectData", std::to_string(tr.norad_id) + " (area-to-mass)");
      am = am_median;
      ft.imputed_area_to_mass.push_back(tr.norad_id);
      ft.warnings.push_back("object " + std::to_string(tr.norad_id) + ": area-to-mass imputed with training median " +
                            csv::fmt(am_median));
    }
    const auto rel = tr.relative_times();
    const auto bstar = bstar_feature(*tit->second, tr.grid_times, opt.bstar_window);
    for (std::size_t s = 0; s < kGridPoints; ++s) {
      ft.at(o, s, kTime) = rel[s];
      ft.at(o, s, kBstar) = bstar[s];
      ft.at(o, s, kSolar) = f107;
      ft.at(o, s, kAreaToMass) = am;
      ft.targets[o * kGridPoints + s] = rel[s];
    }
    ft.norad_ids.push_back(tr.norad_id);
    ft.is_train.push_back(train_ids.count(tr.norad_id) > 0);
    ft.area_to_mass.push_back(am);
    ft.start_epochs.push_back(tr.origin());
  }

  // Normalization statistics from training objects only.
  ft.norm_stats.assign(kNumFeatures, MinMax{});
  if (opt.fixed_stats) {
    if (opt.fixed_stats->size() != kNumFeatures) throw input_error("BadSchema", "fixed_stats needs one entry per feature");
    ft.norm_stats = *opt.fixed_stats;
  }
  const bool scaled[kNumFeatures] = {true, opt.normalize_bstar, true, opt.normalize_area_to_mass};
  for (std::size_t f = 0; f < kNumFeatures && !opt.fixed_stats; ++f) {
    if (!scaled[f]) {
      ft.norm_stats[f] = MinMax{0.0, 1.0};
      continue;
    }
    std::vector<double> vals;
    for (std::size_t o = 0; o < ft.n_objects; ++o)
      if (ft.is_train[o])
        for (std::size_t s = 0; s < kGridPoints; ++s) vals.push_back(ft.at(o, s, f));
    if (vals.empty()) throw input_error("EmptyDataset", "no training objects");
    try {
      ft.norm_stats[f] = fit_minmax(vals);
    } catch (const Error&) {
      // A constant feature carries no information; map it to zero.
      ft.norm_stats[f] = MinMax{vals.front(), vals.front() + 1.0};
      ft.warnings.push_back("feature " + ft.names[f] + " is constant on the training split");
    }
  }
  for (std::size_t o = 0; o < ft.n_objects; ++o)
    for (std::size_t s = 0; s < kGridPoints; ++s)
      for (std::size_t f = 0; f < kNumFeatures; ++f) ft.at(o, s, f) = ft.norm_stats[f].apply(ft.at(o, s, f));
  return ft;
}

inline nlohmann::json tensor_to_json(const FeatureTensor& ft) {
  nlohmann::json j;
  j["schema"] = "reentry.feature_tensor/1";
  j["shape"] = {ft.n_objects, ft.n_steps, ft.n_features};
  j["feature_names"] = ft.names;
  nlohmann::json stats = nlohmann::json::array();
  for (const auto& s : ft.norm_stats) stats.push_back({{"min", s.min}, {"max", s.max}});
  j["norm_stats"] = stats;
  j["norad_ids"] = ft.norad_ids;
  std::vector<int> train(ft.is_train.begin(), ft.is_train.end());
  j["is_train"] = train;
  j["area_to_mass"] = ft.area_to_mass;
  j["start_epochs"] = ft.start_epochs;
  j["imputed_area_to_mass"] = ft.imputed_area_to_mass;
  j["data"] = ft.data;
  j["targets"] = ft.targets;
  return j;
}

inline FeatureTensor tensor_from_json(const nlohmann::json& j) {
  if (j.value("schema", "") != "reentry.feature_tensor/1") throw input_error("BadSchema", "feature tensor");
  FeatureTensor ft;
  const auto shape = j.at("shape").get<std::vector<std::size_t>>();
  if (shape.size() != 3) throw input_error("BadSchema", "shape must have rank 3");
  ft.n_objects = shape[0];
  ft.n_steps = shape[1];
  ft.n_features = shape[2];
  ft.names = j.at("feature_names").get<std::vector<std::string>>();
  for (const auto& s : j.at("norm_stats")) ft.norm_stats.push_back({s.at("min").get<double>(), s.at("max").get<double>()});
  ft.norad_ids = j.at("norad_ids").get<std::vector<long long>>();
  for (int b : j.at("is_train").get<std::vector<int>>()) ft.is_train.push_back(b != 0);
  ft.area_to_mass = j.at("area_to_mass").get<std::vector<double>>();
  ft.start_epochs = j.at("start_epochs").get<std::vector<double>>();
  ft.imputed_area_to_mass = j.at("imputed_area_to_mass").get<std::vector<long long>>();
  ft.data = j.at("data").get<std::vector<double>>();
  ft.targets = j.at("targets").get<std::vector<double>>();
  if (ft.data.size() != ft.n_objects * ft.n_steps * ft.n_features || ft.targets.size() != ft.n_objects * ft.n_steps ||
      ft.norad_ids.size() != ft.n_objects || ft.is_train.size() != ft.n_objects)
    throw input_error("BadSchema", "tensor arrays do not match shape");
  return ft;
}

// ---------------------------------------------------------------------------
// PCA diagnostics

struct PcaResult {
  std::vector<std::vector<double>> loadings;     // loadings[c] = unit vector of component c
  std::vector<double> eigenvalues;               // descending
  std::vector<double> explained_variance_ratio;  // sums to 1
};

/// Symmetric eigendecomposition by cyclic Jacobi rotations. Returns
/// eigenvalues and eigenvectors as columns of `vectors`.
inline void jacobi_eigen(std::vector<std::vector<double>> a, std::vector<double>& values,
                         std::vector<std::vector<double>>& vectors, double tol = 1e-12, int max_sweeps = 100) {
  const std::size_t n = a.size();
  vectors.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) vectors[i][i] = 1.0;
  auto off_norm = [&]() {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) s += a[i][j] * a[i][j];
    return std::sqrt(s);
  };
  for (int sweep = 0; sweep < max_sweeps && off_norm() >= tol; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (a[p][q] == 0.0) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = vectors[k][p], vkq = vectors[k][q];
          vectors[k][p] = c * vkp - s * vkq;
          vectors[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }
  values.resize(n);
  for (std::size_t i = 0; i < n; ++i) values[i] = a[i][i];
}

/// PCA of standardized features (correlation matrix). `rows` are samples.
inline PcaResult pca(const std::vector<std::vector<double>>& rows) {
  if (rows.size() < 2) throw input_error("TooFewSamples", "PCA needs at least 2 samples");
  const std::size_t p = rows.front().size();
  if (p < 2) throw input_error("TooFewFeatures", "PCA needs at least 2 features");
  const double n = static_cast<double>(rows.size());
  std::vector<double> mean(p, 0.0), sd(p, 0.0);
  for (const auto& r : rows) {
    if (r.size() != p) throw input_error("ShapeMismatch", "ragged PCA input");
    for (std::size_t j = 0; j < p; ++j) mean[j] += r[j] / n;
  }
  for (const auto& r : rows)
    for (std::size_t j = 0; j < p; ++j) sd[j] += (r[j] - mean[j]) * (r[j] - mean[j]);
  for (std::size_t j = 0; j < p; ++j) {
    sd[j] = std::sqrt(sd[j] / (n - 1.0));
    if (!(sd[j] > 0.0)) throw numerical_error("DegenerateFeature", "column " + std::to_string(j) + " has zero variance");
  }
  std::vector<std::vector<double>> corr(p, std::vector<double>(p, 0.0));
  for (const auto& r : rows)
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < p; ++j)
        corr[i][j] += (r[i] - mean[i]) / sd[i] * (r[j] - mean[j]) / sd[j] / (n - 1.0);

  std::vector<double> values;
  std::vector<std::vector<double>> vecs;
  jacobi_eigen(corr, values, vecs);

  std::vector<std::size_t> order(p);
  for (std::size_t i = 0; i < p; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });

  PcaResult res;
  double trace = 0.0;
  for (double v : values) trace += std::max(0.0, v);
  for (std::size_t c : order) {
    std::vector<double> load(p);
    for (std::size_t k = 0; k < p; ++k) load[k] = vecs[k][c];
    // Sign convention: the largest-magnitude loading is positive.
    const auto big = std::max_element(load.begin(), load.end(),
                                      [](double x, double y) { return std::abs(x) < std::abs(y); });
    if (*big < 0)
      for (double& x : load) x = -x;
    res.loadings.push_back(load);
    res.eigenvalues.push_back(std::max(0.0, values[c]));
    res.explained_variance_ratio.push_back(std::max(0.0, values[c]) / trace);
  }
  return res;
}

}  // namespace reentry
