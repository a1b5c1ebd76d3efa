// SPDX-License-Identifier: Apache-2.0
#pragma once

// Case definitions, error metrics, B* categorization and report writers.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "reentry/checkpoint.hpp"
#include "reentry/csv.hpp"
#include "reentry/decay_fit.hpp"
#include "reentry/error.hpp"
#include "reentry/features.hpp"
#include "reentry/tle_data.hpp"
#include "reentry/training.hpp"

namespace reentry {

struct CaseSpec {
  char name = 'A';
  int tx = 5;
  double start_altitude_km = 180.0;
  int epochs = 2900;

  int ty() const { return static_cast<int>(kGridPoints) - tx; }

  /// The encoder input ends at the starting altitude, so tx is the grid index
  /// of that altitude plus one.
  void validate() const {
    const auto idx = grid_index_of(start_altitude_km);
    if (static_cast<int>(idx) + 1 != tx)
      throw config_error("InconsistentCase", std::string("case ") + name + ": tx " + std::to_string(tx) +
                                                 " does not end at " + csv::fmt(start_altitude_km) + " km");
  }
};

inline const std::vector<CaseSpec>& case_table() {
  static const std::vector<CaseSpec> cases = [] {
    std::vector<CaseSpec> c{{'A', 5, 180.0, 2900}, {'B', 9, 160.0, 3000}, {'C', 13, 140.0, 1200}, {'D', 17, 120.0, 1200}};
    for (const auto& s : c) s.validate();
    return c;
  }();
  return cases;
}

inline CaseSpec case_spec(char name) {
  for (const auto& c : case_table())
    if (c.name == name || c.name == name - 'a' + 'A') return c;
  throw config_error("UnknownCase", std::string(1, name));
}

inline CaseSpec case_spec(const std::string& name) {
  if (name.size() != 1) throw config_error("UnknownCase", name);
  return case_spec(name[0]);
}

struct MetricSet {
  double eps_abs_hours = 0.0;
  double eps_rel_percent = 0.0;
  double mse_day2 = 0.0;
};

/// Final-time errors and sequence MSE. Times are days on a common origin;
/// `t_initial` is the epoch of the starting altitude.
inline MetricSet metrics(double t_pred, double t_actual, double t_initial, const std::vector<double>& predicted,
                         const std::vector<double>& actual) {
  if (!(t_actual > t_initial))
    throw numerical_error("DegenerateInterval", "t_actual " + csv::fmt(t_actual) + " <= t_initial " + csv::fmt(t_initial));
  if (predicted.size() != actual.size()) throw input_error("LengthMismatch", "predicted and actual sequences differ in length");
  MetricSet m;
  const double err_days = std::abs(t_pred - t_actual);
  m.eps_abs_hours = err_days * 24.0;
  m.eps_rel_percent = err_days / (t_actual - t_initial) * 100.0;
  if (!predicted.empty()) {
    double sum = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i) sum += (predicted[i] - actual[i]) * (predicted[i] - actual[i]);
    m.mse_day2 = sum / static_cast<double>(predicted.size());
  }
  return m;
}

/// Quantile by linear interpolation between order statistics at position
/// q * (n - 1). `values` need not be sorted.
inline double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw input_error("EmptyDistribution", "quantile of an empty set");
  if (!(q >= 0 && q <= 1)) throw config_error("InvalidQuantile", csv::fmt(q));
  std::sort(values.begin(), values.end());
  const double h = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

/// Median of an object's non-negative B* values.
inline double median_bstar(const ObjectTrack& track) {
  std::vector<double> b;
  for (const auto& r : track.records)
    if (r.bstar >= 0) b.push_back(r.bstar);
  if (b.empty()) throw input_error("EmptyDistribution", "object " + std::to_string(track.norad_id) + " has no non-negative B*");
  return quantile(std::move(b), 0.5);
}

inline double mean_eccentricity(const ObjectTrack& track) {
  if (track.records.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (const auto& r : track.records) s += r.eccentricity;
  return s / static_cast<double>(track.records.size());
}

struct CategoryAssignment {
  long long norad_id = 0;
  int category = 1;  // 1: median B* inside the training IQR, 2: outside
  double median_bstar = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
};

/// Category 1 when the object's median B* lies in [Q1, Q3] of the training
/// objects' median B*; boundaries count as inside.
inline std::vector<CategoryAssignment> categorize(const std::vector<ObjectTrack>& test_tracks,
                                                  const std::vector<ObjectTrack>& training_tracks) {
  if (training_tracks.empty()) throw input_error("EmptyDistribution", "no training objects");
  std::vector<double> train_medians;
  for (const auto& t : training_tracks) train_medians.push_back(median_bstar(t));
  const double q1 = quantile(train_medians, 0.25);
  const double q3 = quantile(train_medians, 0.75);
  std::vector<CategoryAssignment> out;
  for (const auto& t : test_tracks) {
    CategoryAssignment a;
    a.norad_id = t.norad_id;
    a.median_bstar = median_bstar(t);
    a.q1 = q1;
    a.q3 = q3;
    a.category = (a.median_bstar >= q1 && a.median_bstar <= q3) ? 1 : 2;
    out.push_back(a);
  }
  return out;
}

struct ObjectEvaluation {
  long long norad_id = 0;
  int category = 0;  // 0 when not categorized
  double median_bstar = std::numeric_limits<double>::quiet_NaN();
  double eccentricity = std::numeric_limits<double>::quiet_NaN();
  double t_pred = 0.0;
  double t_actual = 0.0;
  double t_initial = 0.0;
  double residual_lifetime = 0.0;  // t_actual - t_initial, days
  MetricSet metrics;
  std::vector<double> predicted;  // residual times of the output steps, days
  std::vector<double> actual;
};

struct CaseReport {
  CaseSpec spec;
  nlohmann::json hyperparameters = nlohmann::json::object();
  std::vector<ObjectEvaluation> objects;

  std::vector<double> column(double MetricSet::*field) const {
    std::vector<double> v;
    for (const auto& o : objects) v.push_back(o.metrics.*field);
    return v;
  }
};

struct EvaluationContext {
  std::map<long long, CategoryAssignment> categories;
  std::map<long long, double> eccentricity;
};

inline EvaluationContext make_context(const std::vector<ObjectTrack>& test_tracks,
                                      const std::vector<ObjectTrack>& training_tracks) {
  EvaluationContext ctx;
  for (const auto& a : categorize(test_tracks, training_tracks)) ctx.categories[a.norad_id] = a;
  for (const auto& t : test_tracks) ctx.eccentricity[t.norad_id] = mean_eccentricity(t);
  return ctx;
}

/// Predicts every listed object of `tensor` with `ckpt` and scores it.
inline CaseReport evaluate_checkpoint(const CaseSpec& spec, const Checkpoint& ckpt, const FeatureTensor& tensor,
                                      const std::vector<std::size_t>& objects, const EvaluationContext& ctx = {}) {
  spec.validate();
  if (ckpt.tx != spec.tx)
    throw config_error("ShapeMismatch", "checkpoint tx " + std::to_string(ckpt.tx) + " differs from case tx " +
                                            std::to_string(spec.tx));
  CaseReport rep;
  rep.spec = spec;
  rep.hyperparameters = ckpt.hyperparameters;
  for (auto o : objects) {
    ObjectEvaluation ev;
    ev.norad_id = tensor.norad_ids[o];
    const auto pred = predict_object(ckpt, tensor, o);
    ev.predicted = pred.residual_times;
    for (std::size_t s = static_cast<std::size_t>(spec.tx); s < kGridPoints; ++s) ev.actual.push_back(tensor.target(o, s));
    ev.t_pred = pred.final_time;
    ev.t_actual = tensor.target(o, kGridPoints - 1);
    ev.t_initial = tensor.target(o, static_cast<std::size_t>(spec.tx) - 1);
    ev.residual_lifetime = ev.t_actual - ev.t_initial;
    ev.metrics = metrics(ev.t_pred, ev.t_actual, ev.t_initial, ev.predicted, ev.actual);
    if (auto it = ctx.categories.find(ev.norad_id); it != ctx.categories.end()) {
      ev.category = it->second.category;
      ev.median_bstar = it->second.median_bstar;
    }
    if (auto it = ctx.eccentricity.find(ev.norad_id); it != ctx.eccentricity.end()) ev.eccentricity = it->second;
    rep.objects.push_back(std::move(ev));
  }
  // Grouped by category, then by id, the way result tables are laid out.
  std::stable_sort(rep.objects.begin(), rep.objects.end(), [](const ObjectEvaluation& a, const ObjectEvaluation& b) {
    return std::tie(a.category, a.norad_id) < std::tie(b.category, b.norad_id);
  });
  return rep;
}

struct CaseRun {
  CaseReport report;
  Checkpoint checkpoint;
  TrainReport training;
};

/// Trains a model for the case on `train_tensor` (its non-training objects
/// serve as validation) and evaluates the best checkpoint on every object of
/// `eval_tensor` listed in `eval_objects`. `epochs` overrides the case's
/// epoch count when non-negative.
inline CaseRun run_case(const CaseSpec& spec, const FeatureTensor& train_tensor, const FeatureTensor& eval_tensor,
                        const std::vector<std::size_t>& eval_objects, TrainConfig cfg, int epochs = -1,
                        const EvaluationContext& ctx = {}) {
  spec.validate();
  cfg.tx = spec.tx;
  cfg.epochs = epochs >= 0 ? epochs : spec.epochs;
  if (!(eval_tensor.norm_stats == train_tensor.norm_stats))
    throw config_error("StatsMismatch", "evaluation tensor was normalized with different statistics");
  auto model = nn::Seq2SeqModel::random(cfg.model_shape(), derive_seed(cfg.seed, 0));
  CaseRun run;
  run.training = train(model, train_tensor, cfg);
  if (run.training.best) {
    run.checkpoint = *run.training.best;
  } else {
    run.checkpoint.model = model;
    run.checkpoint.tx = cfg.tx;
    run.checkpoint.norm_stats = train_tensor.norm_stats;
    run.checkpoint.hyperparameters = cfg.to_json();
  }
  run.report = evaluate_checkpoint(spec, run.checkpoint, eval_tensor, eval_objects, ctx);
  return run;
}

inline double median_of(std::vector<double> v) { return quantile(std::move(v), 0.5); }

namespace detail {

inline nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

inline std::string fmt_or_empty(double v) { return std::isfinite(v) ? csv::fmt(v) : std::string(); }

}  // namespace detail

/// Long-format CSV: case, norad_id, category, metric, value.
inline void write_report_csv(std::ostream& out, const CaseReport& r) {
  out << "case,norad_id,category,metric,value\n";
  for (const auto& o : r.objects) {
    const std::string prefix = std::string(1, r.spec.name) + ',' + std::to_string(o.norad_id) + ',' + std::to_string(o.category) + ',';
    out << prefix << "eps_abs_hours," << csv::fmt(o.metrics.eps_abs_hours) << '\n';
    out << prefix << "eps_rel_percent," << csv::fmt(o.metrics.eps_rel_percent) << '\n';
    out << prefix << "mse_day2," << csv::fmt(o.metrics.mse_day2) << '\n';
    out << prefix << "eccentricity," << detail::fmt_or_empty(o.eccentricity) << '\n';
  }
}

/// Wide table: one row per metric, one column per object.
inline void write_case_table_csv(std::ostream& out, const CaseReport& r) {
  out << "metric";
  for (const auto& o : r.objects) out << ',' << o.norad_id;
  out << "\ncategory";
  for (const auto& o : r.objects) out << ',' << o.category;
  auto row = [&](const char* name, auto get) {
    out << '\n' << name;
    for (const auto& o : r.objects) out << ',' << detail::fmt_or_empty(get(o));
  };
  row("eps_abs_hours", [](const ObjectEvaluation& o) { return o.metrics.eps_abs_hours; });
  row("eps_rel_percent", [](const ObjectEvaluation& o) { return o.metrics.eps_rel_percent; });
  row("mse_day2", [](const ObjectEvaluation& o) { return o.metrics.mse_day2; });
  row("eccentricity", [](const ObjectEvaluation& o) { return o.eccentricity; });
  out << '\n';
}

inline nlohmann::json report_to_json(const CaseReport& r) {
  nlohmann::json j;
  j["case"] = std::string(1, r.spec.name);
  j["tx"] = r.spec.tx;
  j["start_altitude_km"] = r.spec.start_altitude_km;
  j["hyperparameters"] = r.hyperparameters;
  nlohmann::json objs = nlohmann::json::array();
  for (const auto& o : r.objects) {
    objs.push_back({{"norad_id", o.norad_id},
                    {"category", o.category},
                    {"median_bstar", detail::finite_or_null(o.median_bstar)},
                    {"eccentricity", detail::finite_or_null(o.eccentricity)},
                    {"t_pred_days", o.t_pred},
                    {"t_actual_days", o.t_actual},
                    {"t_initial_days", o.t_initial},
                    {"eps_abs_hours", o.metrics.eps_abs_hours},
                    {"eps_rel_percent", o.metrics.eps_rel_percent},
                    {"mse_day2", o.metrics.mse_day2}});
  }
  j["objects"] = objs;
  if (!r.objects.empty()) {
    j["summary"] = {{"median_eps_abs_hours", median_of(r.column(&MetricSet::eps_abs_hours))},
                    {"median_eps_rel_percent", median_of(r.column(&MetricSet::eps_rel_percent))},
                    {"median_mse_day2", median_of(r.column(&MetricSet::mse_day2))}};
  }
  return j;
}

/// True and predicted residual times per object and grid step. Input steps
/// have no prediction.
inline void write_plot_data_csv(std::ostream& out, const CaseReport& r, const FeatureTensor& tensor) {
  out << "case,norad_id,step,altitude_km,true_time_days,predicted_time_days\n";
  for (const auto& o : r.objects) {
    const auto idx = tensor.index_of(o.norad_id);
    for (std::size_t s = 0; s < kGridPoints; ++s) {
      out << r.spec.name << ',' << o.norad_id << ',' << s << ',' << csv::fmt(grid_altitude(s)) << ',';
      out << (idx ? csv::fmt(tensor.target(*idx, s)) : std::string()) << ',';
      if (s >= static_cast<std::size_t>(r.spec.tx)) out << csv::fmt(o.predicted[s - static_cast<std::size_t>(r.spec.tx)]);
      out << '\n';
    }
  }
}

}  // namespace reentry
