// SPDX-License-Identifier: Apache-2.0
#pragma once

// TLE/OMM ingestion, outlier pruning and dataset selection.
//
// The pruning pipeline runs five fixed steps:
//   1. correction removal (records closer than a fraction of an orbit)
//   2. window splitting on large epoch gaps
//   3. mean-motion outliers against a robust sliding-window regression
//   4. eccentricity / inclination outliers against a sliding mean absolute deviation
//   5. negative B* removal

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "reentry/csv.hpp"
#include "reentry/error.hpp"
#include "reentry/orbit.hpp"
#include "reentry/random.hpp"
#include "reentry/time.hpp"

namespace reentry {

struct TleRecord {
  long long norad_id = 0;
  double epoch = 0.0;          // days since 2000-01-01T00:00:00 UTC
  double mean_motion = 0.0;    // rev/day
  double eccentricity = 0.0;
  double inclination = 0.0;    // deg
  double bstar = 0.0;          // 1/ER
  double raan = 0.0;           // deg
  double arg_perigee = 0.0;    // deg
  double mean_anomaly = 0.0;   // deg
  int source_index = 0;        // position in the input stream; ties on epoch keep the larger
};

/// Half-open index range [begin, end) into ObjectTrack::records.
struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool operator==(const IndexRange&) const = default;
};

struct ObjectTrack {
  long long norad_id = 0;
  std::vector<TleRecord> records;
  std::vector<IndexRange> windows;  // empty until split_windows runs
  double reentry_epoch = 0.0;       // days
  double reentry_uncertainty = 0.0; // minutes
};

struct PruneConfig {
  double correction_threshold = 0.5;  // fraction of the orbital period
  bool correction_uses_later_period = true;
  double gap_threshold = 7.0;         // days
  int mm_window = 7;
  double mm_rel_tol = 1e-3;
  double mm_abs_tol = 1e-4;           // rev/day
  int stat_window = 7;
  double mad_threshold = 5.0;
  double stat_abs_floor = 1e-9;       // differences below this are never outliers

  void validate() const {
    if (!(correction_threshold > 0 && gap_threshold > 0 && mm_rel_tol > 0 && mm_abs_tol > 0 &&
          mad_threshold > 0 && stat_abs_floor >= 0))
      throw config_error("InvalidPruneConfig", "thresholds must be strictly positive");
    if (mm_window < 3 || stat_window < 3)
      throw config_error("InvalidPruneConfig", "windows must hold at least 3 records");
  }
};

struct SelectionCriteria {
  double max_reentry_uncertainty = 20.0;  // min
  double max_initial_altitude = 200.0;    // km
  double min_final_altitude = 180.0;      // km
  double max_eccentricity = 0.1;
  std::size_t min_points = 4;

  void validate() const {
    if (!(max_reentry_uncertainty > 0 && max_initial_altitude > 0 && min_final_altitude > 0 &&
          max_eccentricity > 0 && min_points > 0))
      throw config_error("InvalidSelectionCriteria", "bounds must be positive");
    if (!(min_final_altitude < max_initial_altitude))
      throw config_error("InvalidSelectionCriteria", "min_final_altitude must be below max_initial_altitude");
  }
};

// ---------------------------------------------------------------------------
// Parsing

/// Builds a record from OMM-style key/value fields.
inline TleRecord parse_omm(const std::map<std::string, std::string>& fields, int source_index = 0) {
  auto num = [&](const char* key) { return csv::to_double(csv::field(fields, key), key); };
  TleRecord r;
  r.norad_id = csv::to_int(csv::field(fields, "NORAD_CAT_ID"), "NORAD_CAT_ID");
  try {
    r.epoch = parse_iso8601(csv::field(fields, "EPOCH"));
  } catch (const FieldError&) {
    throw;
  } catch (const Error&) {
    throw FieldError("MalformedNumber", "EPOCH");
  }
  r.mean_motion = num("MEAN_MOTION");
  r.eccentricity = num("ECCENTRICITY");
  r.inclination = num("INCLINATION");
  r.bstar = num("BSTAR");
  auto optional_num = [&](const char* key) {
    const auto it = fields.find(key);
    return (it == fields.end() || it->second.empty()) ? 0.0 : csv::to_double(it->second, key);
  };
  r.raan = optional_num("RA_OF_ASC_NODE");
  r.arg_perigee = optional_num("ARG_OF_PERICENTER");
  r.mean_anomaly = optional_num("MEAN_ANOMALY");
  r.source_index = source_index;
  if (!(r.mean_motion > 0)) throw FieldError("MalformedNumber", "MEAN_MOTION");
  if (!(r.eccentricity >= 0 && r.eccentricity < 1)) throw FieldError("MalformedNumber", "ECCENTRICITY");
  if (!(r.inclination >= 0 && r.inclination <= 180)) throw FieldError("MalformedNumber", "INCLINATION");
  return r;
}

inline std::vector<TleRecord> read_omm_csv(std::istream& in) {
  std::vector<TleRecord> out;
  int idx = 0;
  for (const auto& row : csv::read(in)) out.push_back(parse_omm(row, idx++));
  return out;
}

/// OMM JSON array as served by Space-Track (all values may be strings or numbers).
inline std::vector<TleRecord> read_omm_json(std::istream& in) {
  const auto doc = nlohmann::json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.is_array()) throw input_error("MalformedJson", "expected an array of OMM objects");
  std::vector<TleRecord> out;
  int idx = 0;
  for (const auto& obj : doc) {
    std::map<std::string, std::string> fields;
    for (const auto& [k, v] : obj.items()) {
      if (v.is_string()) fields[k] = v.get<std::string>();
      else if (v.is_number_integer()) fields[k] = std::to_string(v.get<long long>());
      else if (v.is_number()) fields[k] = csv::fmt(v.get<double>());
    }
    out.push_back(parse_omm(fields, idx++));
  }
  return out;
}

/// Reads OMM records from a .json or .csv file (chosen by extension).
inline std::vector<TleRecord> read_omm_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw input_error("FileNotFound", path);
  const bool json = path.size() >= 5 && path.substr(path.size() - 5) == ".json";
  return json ? read_omm_json(in) : read_omm_csv(in);
}

struct TipEntry {
  double decay_epoch = 0.0;  // days
  double window_minutes = 0.0;
};

inline std::map<long long, TipEntry> read_tip_csv(std::istream& in) {
  std::map<long long, TipEntry> out;
  for (const auto& row : csv::read(in)) {
    const auto id = csv::to_int(csv::field(row, "NORAD_CAT_ID"), "NORAD_CAT_ID");
    TipEntry e;
    e.decay_epoch = parse_iso8601(csv::field(row, "DECAY_EPOCH"));
    e.window_minutes = csv::to_double(csv::field(row, "WINDOW_MINUTES"), "WINDOW_MINUTES");
    out[id] = e;
  }
  return out;
}

/// Source of raw OMM records for one object. A network client implements
/// this; the library ships an in-memory provider.
class RecordFetcher {
 public:
  virtual ~RecordFetcher() = default;
  virtual std::vector<TleRecord> fetch(long long norad_id) = 0;
};

class InMemoryFetcher : public RecordFetcher {
 public:
  explicit InMemoryFetcher(std::vector<TleRecord> records) : records_(std::move(records)) {}
  std::vector<TleRecord> fetch(long long norad_id) override {
    std::vector<TleRecord> out;
    for (const auto& r : records_)
      if (r.norad_id == norad_id) out.push_back(r);
    return out;
  }

 private:
  std::vector<TleRecord> records_;
};

/// Stable sort by epoch; equal epochs keep input order so the later-parsed
/// record ends up last.
inline void sort_records(std::vector<TleRecord>& records) {
  std::stable_sort(records.begin(), records.end(), [](const TleRecord& a, const TleRecord& b) {
    if (a.epoch != b.epoch) return a.epoch < b.epoch;
    return a.source_index < b.source_index;
  });
}

/// Groups records by NORAD id into sorted tracks (ordered by id).
inline std::vector<ObjectTrack> group_tracks(std::vector<TleRecord> records) {
  std::map<long long, ObjectTrack> by_id;
  for (auto& r : records) {
    auto& t = by_id[r.norad_id];
    t.norad_id = r.norad_id;
    t.records.push_back(r);
  }
  std::vector<ObjectTrack> out;
  for (auto& [id, t] : by_id) {
    sort_records(t.records);
    out.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Filters

namespace detail {

/// Windows to scan: the explicit split, or the whole track when unsplit.
inline std::vector<IndexRange> active_windows(const ObjectTrack& t) {
  if (!t.windows.empty()) return t.windows;
  if (t.records.empty()) return {};
  return {IndexRange{0, t.records.size()}};
}

/// Drops records where keep[i] is false and remaps windows; empty windows vanish.
inline ObjectTrack retain(const ObjectTrack& in, const std::vector<bool>& keep) {
  ObjectTrack out = in;
  out.records.clear();
  std::vector<std::size_t> new_index(in.records.size() + 1, 0);
  for (std::size_t i = 0; i < in.records.size(); ++i) {
    new_index[i] = out.records.size();
    if (keep[i]) out.records.push_back(in.records[i]);
  }
  new_index[in.records.size()] = out.records.size();
  out.windows.clear();
  for (const auto& w : in.windows) {
    IndexRange nw{new_index[w.begin], new_index[w.end]};
    if (nw.size() > 0) out.windows.push_back(nw);
  }
  return out;
}

inline double median(std::vector<double> v) {
  const std::size_t n = v.size();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (n % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// Theil-Sen line: slope is the median of pairwise slopes, intercept the
/// median of y - slope * x.
struct RobustLine {
  double slope = 0.0;
  double intercept = 0.0;
  double operator()(double x) const { return intercept + slope * x; }
};

inline RobustLine theil_sen(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> slopes;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = i + 1; j < x.size(); ++j)
      if (x[j] != x[i]) slopes.push_back((y[j] - y[i]) / (x[j] - x[i]));
  RobustLine line;
  line.slope = slopes.empty() ? 0.0 : detail::median(slopes);
  std::vector<double> icept(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) icept[i] = y[i] - line.slope * x[i];
  line.intercept = detail::median(icept);
  return line;
}

/// Step 1: a record followed within `correction_threshold` orbital periods by
/// another is superseded by it and removed.
inline ObjectTrack filter_corrections(const ObjectTrack& track, const PruneConfig& cfg) {
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < track.records.size(); ++i) {
    const auto& cur = track.records[i];
    while (!kept.empty()) {
      const auto& prev = track.records[kept.back()];
      const double period =
          orbital_period_days(cfg.correction_uses_later_period ? cur.mean_motion : prev.mean_motion);
      if (cur.epoch - prev.epoch < cfg.correction_threshold * period) kept.pop_back();
      else break;
    }
    kept.push_back(i);
  }
  std::vector<bool> keep(track.records.size(), false);
  for (auto i : kept) keep[i] = true;
  return detail::retain(track, keep);
}

/// Step 2: a new window starts after every gap strictly larger than `gap_threshold`.
inline ObjectTrack split_windows(const ObjectTrack& track, const PruneConfig& cfg) {
  ObjectTrack out = track;
  out.windows.clear();
  if (track.records.empty()) return out;
  std::size_t start = 0;
  for (std::size_t i = 1; i < track.records.size(); ++i) {
    if (track.records[i].epoch - track.records[i - 1].epoch > cfg.gap_threshold) {
      out.windows.push_back({start, i});
      start = i;
    }
  }
  out.windows.push_back({start, track.records.size()});
  return out;
}

namespace detail {

inline bool mean_motion_outlier(const RobustLine& line, double x, double observed, const PruneConfig& cfg) {
  const double residual = std::abs(line(x) - observed);
  return residual > cfg.mm_abs_tol && residual > cfg.mm_rel_tol * std::abs(observed);
}

/// One pass of the mean-motion filter. Each record after the first
/// `mm_window` clean records is compared with the Theil-Sen extrapolation of
/// the preceding `mm_window` clean records. The leading records, which have
/// no full window behind them, are checked backwards against the following
/// clean records.
inline std::vector<bool> mean_motion_pass(const ObjectTrack& track, const PruneConfig& cfg) {
  const auto n_win = static_cast<std::size_t>(cfg.mm_window);
  std::vector<bool> keep(track.records.size(), true);
  for (const auto& w : active_windows(track)) {
    if (w.size() < n_win + 1) continue;
    const double t0 = track.records[w.begin].epoch;
    auto fit = [&](const std::vector<std::size_t>& idx) {
      std::vector<double> x, y;
      for (auto i : idx) {
        x.push_back(track.records[i].epoch - t0);
        y.push_back(track.records[i].mean_motion);
      }
      return theil_sen(x, y);
    };
    std::vector<std::size_t> clean;
    for (std::size_t i = w.begin; i < w.end; ++i) {
      if (clean.size() >= n_win) {
        std::vector<std::size_t> window(clean.end() - static_cast<std::ptrdiff_t>(n_win), clean.end());
        const auto& rec = track.records[i];
        if (mean_motion_outlier(fit(window), rec.epoch - t0, rec.mean_motion, cfg)) {
          keep[i] = false;
          continue;
        }
      }
      clean.push_back(i);
    }
    // Leading records, checked in reverse against the next clean records.
    const std::size_t head = std::min(n_win, clean.size());
    for (std::size_t h = head; h-- > 0;) {
      const std::size_t i = clean[h];
      std::vector<std::size_t> window;
      for (std::size_t j = h + 1; j < clean.size() && window.size() < n_win; ++j)
        if (keep[clean[j]]) window.push_back(clean[j]);
      if (window.size() < n_win) continue;
      const auto& rec = track.records[i];
      if (mean_motion_outlier(fit(window), rec.epoch - t0, rec.mean_motion, cfg)) keep[i] = false;
    }
  }
  return keep;
}

inline std::vector<bool> stat_pass(const ObjectTrack& track, const PruneConfig& cfg) {
  const auto w_len = static_cast<std::size_t>(cfg.stat_window);
  std::vector<bool> keep(track.records.size(), true);
  for (const auto& w : active_windows(track)) {
    if (w.size() < w_len) continue;
    auto window_start = [&](std::size_t i) {
      const std::size_t half = w_len / 2;
      std::size_t s = i >= w.begin + half ? i - half : w.begin;
      return std::min(s, w.end - w_len);
    };
    for (auto element : {&TleRecord::eccentricity, &TleRecord::inclination}) {
      // Difference of each record from the mean of its neighbours.
      std::vector<double> diff(w.size());
      for (std::size_t i = w.begin; i < w.end; ++i) {
        const std::size_t s = window_start(i);
        double sum = 0.0;
        for (std::size_t j = s; j < s + w_len; ++j)
          if (j != i) sum += track.records[j].*element;
        diff[i - w.begin] = track.records[i].*element - sum / static_cast<double>(w_len - 1);
      }
      // Mean absolute deviation of the neighbouring differences. They are
      // already deviations from a local mean, so they are taken about zero.
      for (std::size_t i = w.begin; i < w.end; ++i) {
        const std::size_t s = window_start(i);
        double mad = 0.0;
        for (std::size_t j = s; j < s + w_len; ++j)
          if (j != i) mad += std::abs(diff[j - w.begin]);
        mad /= static_cast<double>(w_len - 1);
        const double d = std::abs(diff[i - w.begin]);
        if (d > cfg.mad_threshold * mad && d > cfg.stat_abs_floor) keep[i] = false;
      }
    }
  }
  return keep;
}

/// Repeats a pass until it removes nothing, which makes the filter idempotent.
template <typename Pass>
ObjectTrack to_fixed_point(const ObjectTrack& track, Pass pass) {
  ObjectTrack cur = track;
  for (;;) {
    const auto keep = pass(cur);
    if (std::all_of(keep.begin(), keep.end(), [](bool k) { return k; })) return cur;
    cur = retain(cur, keep);
  }
}

}  // namespace detail

/// Step 3: mean-motion outliers. Windows shorter than mm_window + 1 are untouched.
inline ObjectTrack filter_mean_motion(const ObjectTrack& track, const PruneConfig& cfg) {
  return detail::to_fixed_point(track, [&](const ObjectTrack& t) { return detail::mean_motion_pass(t, cfg); });
}

/// Step 4: eccentricity and inclination outliers. A record is removed when its
/// difference from the neighbouring mean exceeds mad_threshold times the mean
/// absolute deviation of the neighbouring differences.
inline ObjectTrack filter_ecc_incl(const ObjectTrack& track, const PruneConfig& cfg) {
  return detail::to_fixed_point(track, [&](const ObjectTrack& t) { return detail::stat_pass(t, cfg); });
}

/// Step 5: negative B* records are removed; zero is kept.
inline ObjectTrack filter_negative_bstar(const ObjectTrack& track) {
  std::vector<bool> keep(track.records.size());
  for (std::size_t i = 0; i < track.records.size(); ++i) keep[i] = !(track.records[i].bstar < 0.0);
  return detail::retain(track, keep);
}

struct PruneReport {
  long long norad_id = 0;
  std::size_t input_records = 0;
  std::size_t removed_corrections = 0;
  std::size_t removed_mean_motion = 0;
  std::size_t removed_ecc_incl = 0;
  std::size_t removed_negative_bstar = 0;
  std::size_t windows = 0;

  std::size_t total_removed() const {
    return removed_corrections + removed_mean_motion + removed_ecc_incl + removed_negative_bstar;
  }
};

/// Runs the five steps in order and counts removals per step.
inline ObjectTrack prune_track(const ObjectTrack& track, const PruneConfig& cfg, PruneReport* report = nullptr) {
  cfg.validate();
  PruneReport rep;
  rep.norad_id = track.norad_id;
  rep.input_records = track.records.size();
  ObjectTrack t = filter_corrections(track, cfg);
  rep.removed_corrections = track.records.size() - t.records.size();
  t = split_windows(t, cfg);
  auto n = t.records.size();
  t = filter_mean_motion(t, cfg);
  rep.removed_mean_motion = n - t.records.size();
  n = t.records.size();
  t = filter_ecc_incl(t, cfg);
  rep.removed_ecc_incl = n - t.records.size();
  n = t.records.size();
  t = filter_negative_bstar(t);
  rep.removed_negative_bstar = n - t.records.size();
  rep.windows = t.windows.size();
  if (report) *report = rep;
  return t;
}

// ---------------------------------------------------------------------------
// Selection and splitting

struct Rejection {
  long long norad_id = 0;
  std::string reason;  // first failed criterion
};

struct SelectionResult {
  std::vector<ObjectTrack> accepted;
  std::vector<Rejection> rejected;
};

/// First failed criterion, or nullopt when the track is accepted. Bounds are inclusive.
inline std::optional<std::string> selection_failure(const ObjectTrack& t, const SelectionCriteria& crit,
                                                    const SemiMajorAxisConversion& convert = {}) {
  if (t.reentry_uncertainty > crit.max_reentry_uncertainty) return "reentry_uncertainty";
  if (t.records.empty()) return "min_points";
  if (mean_altitude(t.records.front().mean_motion, convert) > crit.max_initial_altitude) return "initial_altitude";
  if (mean_altitude(t.records.back().mean_motion, convert) < crit.min_final_altitude) return "final_altitude";
  for (const auto& r : t.records)
    if (r.eccentricity > crit.max_eccentricity) return "eccentricity";
  if (t.records.size() < crit.min_points) return "min_points";
  return std::nullopt;
}

inline SelectionResult select_objects(const std::vector<ObjectTrack>& tracks, const SelectionCriteria& crit,
                                      const SemiMajorAxisConversion& convert = {}) {
  crit.validate();
  SelectionResult res;
  for (const auto& t : tracks) {
    if (auto why = selection_failure(t, crit, convert)) res.rejected.push_back({t.norad_id, *why});
    else res.accepted.push_back(t);
  }
  return res;
}

struct SplitSummary {
  double bstar_mean = 0.0, bstar_std = 0.0;
  double ecc_mean = 0.0, ecc_std = 0.0;
  std::size_t objects = 0, records = 0;
};

template <typename T>
struct DatasetSplit {
  std::vector<T> train;
  std::vector<T> validation;
};

/// Seeded shuffle, then ceil(0.8 N) training objects and the remainder for validation.
template <typename T>
DatasetSplit<T> split_dataset(std::vector<T> objects, std::uint64_t seed, double train_fraction = 0.8) {
  if (objects.size() < 5) throw input_error("TooFewObjects", std::to_string(objects.size()) + " < 5");
  Rng rng(seed);
  rng.shuffle(objects);
  // Rounding guard: 0.8 * 10 must give 8, not 9.
  const auto n_train = static_cast<std::size_t>(
      std::ceil(train_fraction * static_cast<double>(objects.size()) - 1e-9));
  DatasetSplit<T> out;
  out.train.assign(objects.begin(), objects.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.validation.assign(objects.begin() + static_cast<std::ptrdiff_t>(n_train), objects.end());
  return out;
}

/// Mean and standard deviation of B* and eccentricity over all records.
inline SplitSummary summarize(const std::vector<ObjectTrack>& tracks) {
  SplitSummary s;
  s.objects = tracks.size();
  double sb = 0, sb2 = 0, se = 0, se2 = 0;
  for (const auto& t : tracks)
    for (const auto& r : t.records) {
      sb += r.bstar;
      sb2 += r.bstar * r.bstar;
      se += r.eccentricity;
      se2 += r.eccentricity * r.eccentricity;
      ++s.records;
    }
  if (s.records == 0) return s;
  const double n = static_cast<double>(s.records);
  s.bstar_mean = sb / n;
  s.ecc_mean = se / n;
  s.bstar_std = std::sqrt(std::max(0.0, sb2 / n - s.bstar_mean * s.bstar_mean));
  s.ecc_std = std::sqrt(std::max(0.0, se2 / n - s.ecc_mean * s.ecc_mean));
  return s;
}

/// Writes records in the OMM CSV layout accepted by read_omm_csv.
inline void write_omm_csv(std::ostream& out, const std::vector<TleRecord>& records) {
  out << "NORAD_CAT_ID,EPOCH,MEAN_MOTION,ECCENTRICITY,INCLINATION,RA_OF_ASC_NODE,ARG_OF_PERICENTER,MEAN_ANOMALY,BSTAR\n";
  for (const auto& r : records) {
    out << r.norad_id << ',' << format_iso8601(r.epoch, 6) << ',' << csv::fmt(r.mean_motion) << ','
        << csv::fmt(r.eccentricity) << ',' << csv::fmt(r.inclination) << ',' << csv::fmt(r.raan) << ','
        << csv::fmt(r.arg_perigee) << ',' << csv::fmt(r.mean_anomaly) << ',' << csv::fmt(r.bstar) << '\n';
  }
}

}  // namespace reentry
