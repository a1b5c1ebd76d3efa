// SPDX-License-Identifier: Apache-2.0
//
// reentry_cli: the pipeline as subcommands.
//
//   synth    generate synthetic tracks and side files
//   prune    clean OMM records and apply the selection criteria
//   prepare  fit trajectories and build the feature tensor
//   train    train a model for one case
//   tune     random search with ASHA early stopping
//   predict  predict the re-entry epoch of one object
//   eval     score a case and write reports
//
// Exit codes: 0 success, 2 input error, 3 numerical failure, 4 configuration error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "reentry/reentry.hpp"

namespace fs = std::filesystem;
using namespace reentry;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitConfig = 4;

void warn(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

// ---------------------------------------------------------------------------
// Settings: defaults <- config file <- command-line flags. The seed flag wins
// over the SEED environment variable, which wins over the config file.

struct Command {
  CLI::App* app = nullptr;
  Settings defaults;
  std::map<std::string, std::string> flag_values;
  std::vector<std::pair<CLI::Option*, std::string>> flags;
  std::string config_path;
  std::string manifest_path;
  std::string seed_flag;
  CLI::Option* seed_option = nullptr;

  void option(const std::string& flag, const std::string& key, const std::string& help, const std::string& def = "") {
    if (!def.empty()) defaults[key] = def;
    auto* o = app->add_option(flag, flag_values[key], help + (def.empty() ? "" : " [" + def + "]"));
    flags.emplace_back(o, key);
  }

  void toggle(const std::string& flag, const std::string& key, const std::string& help, bool def) {
    defaults[key] = def ? "true" : "false";
    auto* o = app->add_flag(flag, flag_values[key], help);
    flags.emplace_back(o, key);
  }

  Settings resolve() const {
    Settings s = defaults;
    if (!config_path.empty())
      for (const auto& [k, v] : load_config(config_path)) s[k] = v;
    const char* env_seed = std::getenv("SEED");
    if (env_seed && *env_seed) s["seed"] = env_seed;
    for (const auto& [opt, key] : flags)
      if (opt->count() > 0) s[key] = flag_values.at(key);
    if (seed_option && seed_option->count() > 0) s["seed"] = seed_flag;
    if (!s.count("seed")) s["seed"] = "0";
    return s;
  }
};

Command make_command(CLI::App& root, const std::string& name, const std::string& description) {
  Command c;
  c.app = root.add_subcommand(name, description);
  c.app->add_option("--config", c.config_path, "key = value configuration file");
  c.app->add_option("--manifest", c.manifest_path, "run manifest path (default: next to the main output)");
  c.seed_option = c.app->add_option("--seed", c.seed_flag, "master seed for all randomness");
  return c;
}

std::string get(const Settings& s, const std::string& key) {
  const auto it = s.find(key);
  return it == s.end() ? std::string() : it->second;
}

std::string require(const Settings& s, const std::string& key) {
  auto v = get(s, key);
  if (v.empty()) throw config_error("MissingSetting", key);
  return v;
}

double get_double(const Settings& s, const std::string& key) {
  try {
    return csv::to_double(require(s, key), key);
  } catch (const FieldError&) {
    throw config_error("InvalidSetting", key + " = " + get(s, key));
  }
}

long long get_int(const Settings& s, const std::string& key) {
  try {
    return csv::to_int(require(s, key), key);
  } catch (const FieldError&) {
    throw config_error("InvalidSetting", key + " = " + get(s, key));
  }
}

bool get_bool(const Settings& s, const std::string& key) {
  const auto v = get(s, key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no" || v.empty()) return false;
  throw config_error("InvalidSetting", key + " = " + v);
}

std::uint64_t get_seed(const Settings& s) { return static_cast<std::uint64_t>(get_int(s, "seed")); }

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw input_error("FileNotFound", path);
  return in;
}

void write_text(const std::string& path, const std::string& text) { write_file_atomic(path, text); }

template <typename F>
void write_with(const std::string& path, F&& writer) {
  std::ostringstream os;
  writer(os);
  write_text(path, os.str());
}

struct Run {
  RunManifest manifest;
  std::string default_manifest_path;

  void input(const std::string& p) { manifest.inputs.push_back(p); }
  void output(const std::string& p) { manifest.outputs.push_back(p); }
};

Run begin_run(const std::string& name, const Settings& s, int argc, char** argv) {
  Run r;
  r.manifest.command = name;
  for (int i = 1; i < argc; ++i) r.manifest.arguments.emplace_back(argv[i]);
  r.manifest.settings = s;
  r.manifest.seed = get_seed(s);
  r.manifest.started_at = utc_timestamp();
  return r;
}

void finish_run(Run& r, const Command& c) {
  r.manifest.finished_at = utc_timestamp();
  const std::string path = !c.manifest_path.empty() ? c.manifest_path : r.default_manifest_path;
  if (!path.empty()) r.manifest.write(path);
}

std::map<long long, TipEntry> load_tip(const std::string& path) {
  auto in = open_input(path);
  return read_tip_csv(in);
}

/// Groups records into tracks and attaches TIP data; objects without a TIP
/// entry are skipped with a warning.
std::vector<ObjectTrack> tracks_with_tip(const std::vector<TleRecord>& records, const std::map<long long, TipEntry>& tip,
                                         std::vector<long long>* skipped = nullptr) {
  std::vector<ObjectTrack> out;
  for (auto& t : group_tracks(records)) {
    const auto it = tip.find(t.norad_id);
    if (it == tip.end()) {
      warn("object " + std::to_string(t.norad_id) + " has no TIP entry; skipped");
      if (skipped) skipped->push_back(t.norad_id);
      continue;
    }
    t.reentry_epoch = it->second.decay_epoch;
    t.reentry_uncertainty = it->second.window_minutes;
    out.push_back(std::move(t));
  }
  return out;
}

FeatureTensor load_tensor(const std::string& path) {
  auto in = open_input(path);
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw input_error("MalformedJson", path);
  return tensor_from_json(j);
}

TrainConfig train_config(const Settings& s, const CaseSpec& spec) {
  TrainConfig cfg;
  cfg.learning_rate = get_double(s, "learning_rate");
  cfg.batch_size = static_cast<int>(get_int(s, "batch_size"));
  cfg.decay_k = get_double(s, "decay_k");
  cfg.hidden_size = static_cast<int>(get_int(s, "hidden_size"));
  cfg.num_layers = static_cast<int>(get_int(s, "num_layers"));
  cfg.beta1 = get_double(s, "beta1");
  cfg.beta2 = get_double(s, "beta2");
  cfg.epsilon = get_double(s, "epsilon");
  cfg.clipnorm = get_double(s, "clipnorm");
  cfg.tx = spec.tx;
  cfg.epochs = get(s, "epochs").empty() ? spec.epochs : static_cast<int>(get_int(s, "epochs"));
  cfg.seed = get_seed(s);
  const auto mode = get(s, "decoder_input");
  if (mode == "previous_output_with_statics") cfg.decoder_input = DecoderInputMode::PreviousOutputWithStatics;
  else if (mode != "previous_output") throw config_error("InvalidSetting", "decoder_input = " + mode);
  cfg.validate();
  return cfg;
}

void add_training_options(Command& c) {
  c.option("--case", "case", "training case A|B|C|D", "A");
  c.option("--epochs", "epochs", "epoch count (default: the case's)");
  c.option("--learning-rate", "learning_rate", "Adam learning rate", "0.001795");
  c.option("--batch-size", "batch_size", "batch size", "27");
  c.option("--decay-k", "decay_k", "scheduled-sampling decay", "0.15665");
  c.option("--hidden-size", "hidden_size", "GRU hidden units", "59");
  c.option("--num-layers", "num_layers", "stacked GRU layers", "3");
  c.option("--beta1", "beta1", "Adam beta1", "0.999");
  c.option("--beta2", "beta2", "Adam beta2", "0.999");
  c.option("--epsilon", "epsilon", "Adam epsilon", "1e-08");
  c.option("--clipnorm", "clipnorm", "global gradient-norm clip", "0.1");
  c.option("--decoder-input", "decoder_input", "previous_output | previous_output_with_statics", "previous_output");
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_synth(const Settings& s, Run& run) {
  SyntheticSpec spec;
  spec.n_objects = static_cast<int>(get_int(s, "objects"));
  spec.outlier_rate = get_double(s, "outlier_rate");
  spec.ballistic_min = get_double(s, "ballistic_min");
  spec.ballistic_max = get_double(s, "ballistic_max");
  spec.initial_altitude_km = get_double(s, "initial_altitude_km");
  spec.flux_mean = get_double(s, "flux_mean");
  spec.flux_amplitude = get_double(s, "flux_amplitude");
  spec.record_floor_km = get_double(s, "record_floor_km");
  spec.first_norad_id = get_int(s, "first_norad_id");
  spec.start_epoch = get_double(s, "start_epoch");
  spec.seed = get_seed(s);
  const auto ds = generate_tracks(spec);
  const fs::path dir = require(s, "out_dir");
  fs::create_directories(dir);
  auto out = [&](const std::string& name, auto writer) {
    const auto p = (dir / name).string();
    write_with(p, [&](std::ostream& os) { writer(os, ds); });
    run.output(p);
  };
  out("omm.csv", [](std::ostream& os, const SyntheticDataset& d) { write_omm_csv(os, d.all_records()); });
  out("tip.csv", write_tip_csv);
  out("space_weather.csv", write_space_weather_csv);
  out("area_to_mass.csv", write_area_to_mass_csv);
  out("ground_truth.csv", write_ground_truth_csv);
  out("outliers.csv", write_outlier_labels_csv);
  run.default_manifest_path = (dir / "manifest.json").string();
  std::cout << "objects: " << ds.objects.size() << "\nrecords: " << ds.all_records().size()
            << "\noutliers: " << ds.outliers.size() << '\n';
  return 0;
}

int cmd_prune(const Settings& s, Run& run) {
  PruneConfig pc;
  pc.correction_threshold = get_double(s, "correction_threshold");
  pc.gap_threshold = get_double(s, "gap_threshold");
  pc.mm_window = static_cast<int>(get_int(s, "mm_window"));
  pc.mm_rel_tol = get_double(s, "mm_rel_tol");
  pc.mm_abs_tol = get_double(s, "mm_abs_tol");
  pc.stat_window = static_cast<int>(get_int(s, "stat_window"));
  pc.mad_threshold = get_double(s, "mad_threshold");
  pc.validate();
  SelectionCriteria crit;
  crit.max_reentry_uncertainty = get_double(s, "max_reentry_uncertainty");
  crit.max_initial_altitude = get_double(s, "max_initial_altitude");
  crit.min_final_altitude = get_double(s, "min_final_altitude");
  crit.max_eccentricity = get_double(s, "max_eccentricity");
  crit.min_points = static_cast<std::size_t>(get_int(s, "min_points"));
  const bool select = get_bool(s, "select");
  if (select) crit.validate();

  const auto omm_path = require(s, "omm");
  const auto tip_path = require(s, "tip");
  run.input(omm_path);
  run.input(tip_path);
  std::vector<long long> skipped;
  const auto tracks = tracks_with_tip(read_omm_file(omm_path), load_tip(tip_path), &skipped);

  std::vector<TleRecord> kept;
  std::ostringstream report;
  report << "norad_id,input_records,removed_corrections,removed_mean_motion,removed_ecc_incl,removed_negative_bstar,"
            "windows,status\n";
  std::size_t accepted = 0, rejected = 0, removed = 0;
  for (const auto& t : tracks) {
    PruneReport rep;
    const auto pruned = prune_track(t, pc, &rep);
    removed += rep.total_removed();
    std::string status = "accepted";
    if (select) {
      if (auto why = selection_failure(pruned, crit)) status = "rejected:" + *why;
    }
    if (status == "accepted") {
      ++accepted;
      kept.insert(kept.end(), pruned.records.begin(), pruned.records.end());
    } else {
      ++rejected;
    }
    report << rep.norad_id << ',' << rep.input_records << ',' << rep.removed_corrections << ','
           << rep.removed_mean_motion << ',' << rep.removed_ecc_incl << ',' << rep.removed_negative_bstar << ','
           << rep.windows << ',' << status << '\n';
  }
  for (auto id : skipped) report << id << ",0,0,0,0,0,0,skipped:no_tip\n";

  const auto out = require(s, "out");
  write_with(out, [&](std::ostream& os) { write_omm_csv(os, kept); });
  run.output(out);
  const auto report_path = get(s, "report").empty() ? out + ".report.csv" : get(s, "report");
  write_text(report_path, report.str());
  run.output(report_path);
  run.default_manifest_path = out + ".manifest.json";
  std::cout << "objects: " << tracks.size() << "\naccepted: " << accepted << "\nrejected: " << rejected
            << "\nskipped: " << skipped.size() << "\nremoved_records: " << removed << '\n';
  return 0;
}

int cmd_prepare(const Settings& s, Run& run) {
  const auto tracks_path = require(s, "tracks");
  const auto tip_path = require(s, "tip");
  const auto sw_path = require(s, "space_weather");
  const auto am_path = require(s, "area_to_mass");
  for (const auto& p : {tracks_path, tip_path, sw_path, am_path}) run.input(p);
  const auto tracks = tracks_with_tip(read_omm_file(tracks_path), load_tip(tip_path));
  auto sw_in = open_input(sw_path);
  const auto sw = read_space_weather_csv(sw_in);
  auto am_in = open_input(am_path);
  const auto am = read_area_to_mass_csv(am_in);

  std::vector<DecayTrajectory> trajectories;
  std::vector<ObjectTrack> fitted;
  for (const auto& t : tracks) {
    try {
      const auto fit = fit_track(t, FitMode::ReentryEpoch);
      trajectories.push_back(sample_grid(fit.coefficients, t.norad_id));
      fitted.push_back(t);
    } catch (const Error& e) {
      warn("object " + std::to_string(t.norad_id) + " skipped: " + e.what());
    }
  }
  if (trajectories.empty()) throw input_error("EmptyDataset", "no object could be fitted");

  TensorOptions opt;
  opt.bstar_window = static_cast<std::size_t>(get_int(s, "bstar_window"));
  std::set<long long> train_ids;
  nlohmann::json split_info;
  const auto stats_from = get(s, "stats_from");
  if (!stats_from.empty()) {
    run.input(stats_from);
    opt.fixed_stats = load_tensor(stats_from).norm_stats;
  } else {
    std::vector<ObjectTrack> ordered = fitted;
    const auto split = split_dataset(ordered, get_seed(s), get_double(s, "train_fraction"));
    for (const auto& t : split.train) train_ids.insert(t.norad_id);
    auto summary_json = [](const SplitSummary& x) {
      return nlohmann::json{{"objects", x.objects},     {"records", x.records},   {"bstar_mean", x.bstar_mean},
                            {"bstar_std", x.bstar_std}, {"ecc_mean", x.ecc_mean}, {"ecc_std", x.ecc_std}};
    };
    split_info = {{"train", summary_json(summarize(split.train))},
                  {"validation", summary_json(summarize(split.validation))}};
  }
  const auto ft = assemble_tensor(trajectories, fitted, sw, am, train_ids, opt);
  for (const auto& w : ft.warnings) warn(w);

  auto j = tensor_to_json(ft);
  if (!split_info.is_null()) j["split_summary"] = split_info;
  const auto out = require(s, "out");
  write_text(out, j.dump() + "\n");
  run.output(out);
  const auto traj_path = get(s, "trajectories").empty() ? out + ".trajectories.csv" : get(s, "trajectories");
  write_with(traj_path, [&](std::ostream& os) { write_trajectories_csv(os, trajectories); });
  run.output(traj_path);
  run.default_manifest_path = out + ".manifest.json";
  std::cout << "shape: [" << ft.n_objects << " x " << ft.n_steps << " x " << ft.n_features << "]\n"
            << "train: " << ft.indices(true).size() << "\nvalidation: " << ft.indices(false).size()
            << "\nimputed_area_to_mass: " << ft.imputed_area_to_mass.size() << '\n';
  return 0;
}

int cmd_train(const Settings& s, Run& run) {
  const auto spec = case_spec(require(s, "case"));
  auto cfg = train_config(s, spec);
  const auto tensor_path = require(s, "tensor");
  run.input(tensor_path);
  const auto ft = load_tensor(tensor_path);
  const std::string run_id = "case" + std::string(1, spec.name) + "-seed" + std::to_string(cfg.seed);
  const auto out = get(s, "out").empty() ? "runs/" + run_id + "/best.ckpt.json" : get(s, "out");
  cfg.loss_curve_path = get(s, "loss_curve").empty() ? (fs::path(out).parent_path() / "loss_curve.csv").string()
                                                     : get(s, "loss_curve");
  auto model = nn::Seq2SeqModel::random(cfg.model_shape(), derive_seed(cfg.seed, 0));
  const auto report = train(model, ft, cfg);
  Checkpoint best;
  if (report.best) {
    best = *report.best;
  } else {
    best.model = model;
    best.tx = cfg.tx;
    best.norm_stats = ft.norm_stats;
    best.hyperparameters = cfg.to_json();
  }
  save_checkpoint(best, out);
  run.output(out);
  if (cfg.epochs > 0) run.output(cfg.loss_curve_path);
  run.default_manifest_path = out + ".manifest.json";
  std::cout << "checkpoint: " << out << "\nepochs: " << cfg.epochs << "\nbest_epoch: " << report.best_epoch + 1
            << "\nbest_val_loss_day2: " << csv::fmt(report.best_val_loss)
            << "\nmonotonicity_violations: " << report.monotonicity_violations << '\n';
  return 0;
}

/// Replays losses from a CSV (trial, rung, loss) instead of training.
class ScriptedSession : public TrialSession {
 public:
  ScriptedSession(const std::map<std::pair<int, int>, double>& table, std::vector<long long> milestones, int trial)
      : table_(table), milestones_(std::move(milestones)), trial_(trial) {}

  double advance_to(long long epoch) override {
    for (std::size_t r = 0; r < milestones_.size(); ++r)
      if (milestones_[r] == epoch) {
        const auto it = table_.find({trial_, static_cast<int>(r)});
        if (it == table_.end())
          throw input_error("MissingLoss", "trial " + std::to_string(trial_) + " rung " + std::to_string(r));
        return it->second;
      }
    throw input_error("MissingLoss", "epoch " + std::to_string(epoch) + " is not a rung");
  }

 private:
  const std::map<std::pair<int, int>, double>& table_;
  std::vector<long long> milestones_;
  int trial_;
};

int cmd_tune(const Settings& s, Run& run) {
  AshaConfig asha;
  asha.num_trials = static_cast<int>(get_int(s, "trials"));
  asha.reduction_factor = static_cast<int>(get_int(s, "eta"));
  asha.grace_period = static_cast<int>(get_int(s, "grace"));
  asha.max_epochs = static_cast<int>(get_int(s, "max_epochs"));
  asha.validate();
  const int jobs = static_cast<int>(get_int(s, "jobs"));
  if (jobs < 1) throw config_error("InvalidSetting", "jobs must be >= 1");
  const auto seed = get_seed(s);

  SearchResult result;
  const auto scripted = get(s, "scripted_objective");
  std::map<std::pair<int, int>, double> table;
  std::optional<FeatureTensor> ft;
  SessionFactory factory;
  if (!scripted.empty()) {
    run.input(scripted);
    auto in = open_input(scripted);
    for (const auto& row : csv::read(in))
      table[{static_cast<int>(csv::to_int(csv::field(row, "trial"), "trial")),
             static_cast<int>(csv::to_int(csv::field(row, "rung"), "rung"))}] =
          csv::to_double(csv::field(row, "loss"), "loss");
    const auto milestones = rung_epochs(asha);
    factory = [&table, milestones](const TrialRecord& t) {
      return std::make_unique<ScriptedSession>(table, milestones, t.id);
    };
  } else {
    const auto tensor_path = require(s, "tensor");
    run.input(tensor_path);
    ft = load_tensor(tensor_path);
    const auto base = train_config(s, case_spec(require(s, "case")));
    factory = training_session_factory(*ft, base);
  }
  result = run_search(SearchSpace{}, asha, factory, jobs, seed);

  const auto ledger = require(s, "ledger");
  write_with(ledger, [&](std::ostream& os) { write_ledger_jsonl(os, result.ledger); });
  run.output(ledger);
  const auto summary_path = get(s, "summary").empty() ? ledger + ".summary.json" : get(s, "summary");
  write_text(summary_path, search_summary(result).dump(2) + "\n");
  run.output(summary_path);
  run.default_manifest_path = ledger + ".manifest.json";
  std::cout << search_summary(result).dump(2) << '\n';
  return 0;
}

int cmd_predict(const Settings& s, Run& run) {
  const auto ckpt_path = require(s, "checkpoint");
  const auto tensor_path = require(s, "tensor");
  run.input(ckpt_path);
  run.input(tensor_path);
  const auto ckpt = load_checkpoint(ckpt_path);
  const auto ft = load_tensor(tensor_path);
  const auto norad = get_int(s, "norad");
  const auto idx = ft.index_of(norad);
  if (!idx) throw input_error("UnknownObject", std::to_string(norad));
  if (!(ft.norm_stats == ckpt.norm_stats)) warn("tensor and checkpoint normalization statistics differ");
  const auto pred = predict_object(ckpt, ft, *idx);
  const double t_start = ft.target(*idx, static_cast<std::size_t>(ckpt.tx) - 1);
  const double reentry = ft.start_epochs[*idx] + pred.final_time;
  std::cout << "norad_id: " << norad << "\nreentry_epoch: " << format_iso8601(reentry, 3)
            << "\nresidual_hours: " << csv::fmt((pred.final_time - t_start) * 24.0) << '\n';
  if (auto out = get(s, "out"); !out.empty()) {
    std::ostringstream os;
    os << "step,altitude_km,predicted_time_days\n";
    for (std::size_t i = 0; i < pred.residual_times.size(); ++i) {
      const auto step = static_cast<std::size_t>(ckpt.tx) + i;
      os << step << ',' << csv::fmt(grid_altitude(step)) << ',' << csv::fmt(pred.residual_times[i]) << '\n';
    }
    write_file_atomic(out, os.str());
    run.output(out);
  }
  return 0;
}

int cmd_eval(const Settings& s, Run& run) {
  const auto spec = case_spec(require(s, "case"));
  const auto tensor_path = require(s, "tensor");
  run.input(tensor_path);
  const auto ft = load_tensor(tensor_path);
  const auto eval_path = get(s, "eval_tensor");
  FeatureTensor et;
  std::vector<std::size_t> objects;
  if (!eval_path.empty()) {
    run.input(eval_path);
    et = load_tensor(eval_path);
    for (std::size_t i = 0; i < et.n_objects; ++i) objects.push_back(i);
  } else {
    et = ft;
    objects = ft.indices(false);
  }
  if (objects.empty()) throw input_error("EmptyDataset", "no evaluation objects");

  EvaluationContext ctx;
  const auto tracks_path = get(s, "tracks");
  if (!tracks_path.empty()) {
    run.input(tracks_path);
    run.input(require(s, "tip"));
    const auto tracks = tracks_with_tip(read_omm_file(tracks_path), load_tip(require(s, "tip")));
    std::set<long long> train_ids, eval_ids;
    for (auto i : ft.indices(true)) train_ids.insert(ft.norad_ids[i]);
    for (auto i : objects) eval_ids.insert(et.norad_ids[i]);
    std::vector<ObjectTrack> train_tracks, eval_tracks;
    for (const auto& t : tracks) {
      if (train_ids.count(t.norad_id)) train_tracks.push_back(t);
      if (eval_ids.count(t.norad_id)) eval_tracks.push_back(t);
    }
    ctx = make_context(eval_tracks, train_tracks);
  }

  const fs::path dir = require(s, "out_dir");
  fs::create_directories(dir);
  const std::string tag(1, spec.name);
  CaseReport report;
  const auto ckpt_path = get(s, "checkpoint");
  if (!ckpt_path.empty()) {
    run.input(ckpt_path);
    report = evaluate_checkpoint(spec, load_checkpoint(ckpt_path), et, objects, ctx);
  } else {
    auto cfg = train_config(s, spec);
    cfg.loss_curve_path = (dir / ("loss_curve_" + tag + ".csv")).string();
    const auto result = run_case(spec, ft, et, objects, cfg, cfg.epochs, ctx);
    const auto ck = (dir / ("case_" + tag + ".ckpt.json")).string();
    save_checkpoint(result.checkpoint, ck);
    run.output(ck);
    write_with(cfg.loss_curve_path, [&](std::ostream& os) { write_loss_curve_csv(os, result.training); });
    run.output(cfg.loss_curve_path);
    report = result.report;
  }
  auto emit = [&](const std::string& name, auto writer) {
    const auto p = (dir / name).string();
    write_with(p, writer);
    run.output(p);
  };
  emit("report_" + tag + ".csv", [&](std::ostream& os) { write_report_csv(os, report); });
  emit("table_" + tag + ".csv", [&](std::ostream& os) { write_case_table_csv(os, report); });
  emit("report_" + tag + ".json", [&](std::ostream& os) { os << report_to_json(report).dump(2) << '\n'; });
  emit("plot_" + tag + ".csv", [&](std::ostream& os) { write_plot_data_csv(os, report, et); });
  run.default_manifest_path = (dir / ("manifest_" + tag + ".json")).string();
  const auto j = report_to_json(report);
  std::cout << "case: " << tag << "\ntx: " << spec.tx << "\nobjects: " << report.objects.size() << '\n';
  if (j.contains("summary"))
    for (const auto& [k, v] : j["summary"].items()) std::cout << k << ": " << csv::fmt(v.get<double>()) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App root{"Orbital decay and re-entry prediction pipeline"};
  root.set_version_flag("--version", kToolVersion);
  root.require_subcommand(1);

  auto synth = make_command(root, "synth", "generate synthetic decay tracks");
  synth.option("--out-dir", "out_dir", "output directory");
  synth.option("--objects", "objects", "number of objects", "40");
  synth.option("--outlier-rate", "outlier_rate", "injected outliers per record", "0");
  synth.option("--ballistic-min", "ballistic_min", "lowest CD*A/m [m^2/kg]", "0.015");
  synth.option("--ballistic-max", "ballistic_max", "highest CD*A/m [m^2/kg]", "0.03");
  synth.option("--initial-altitude", "initial_altitude_km", "start altitude [km]", "260");
  synth.option("--flux-mean", "flux_mean", "mean 81-day F10.7 [sfu]", "150");
  synth.option("--flux-amplitude", "flux_amplitude", "F10.7 variation [sfu]", "25");
  synth.option("--record-floor", "record_floor_km", "lowest record altitude [km]", "180");
  synth.option("--first-norad", "first_norad_id", "first catalog number", "90001");
  synth.option("--start-epoch", "start_epoch", "first start epoch [days since 2000-01-01]", "8000");

  auto prune = make_command(root, "prune", "prune outliers and select objects");
  prune.option("--omm", "omm", "OMM records (.csv or .json)");
  prune.option("--tip", "tip", "TIP re-entry messages (.csv)");
  prune.option("--out", "out", "pruned OMM CSV");
  prune.option("--report", "report", "per-object removal report (default: <out>.report.csv)");
  prune.toggle("--select,!--no-select", "select", "apply the selection criteria", true);
  prune.option("--correction-threshold", "correction_threshold", "fraction of an orbit", "0.5");
  prune.option("--gap-threshold", "gap_threshold", "window split gap [days]", "7");
  prune.option("--mm-window", "mm_window", "mean-motion regression window", "7");
  prune.option("--mm-rel-tol", "mm_rel_tol", "relative mean-motion tolerance", "0.001");
  prune.option("--mm-abs-tol", "mm_abs_tol", "absolute mean-motion tolerance [rev/day]", "0.0001");
  prune.option("--stat-window", "stat_window", "eccentricity/inclination window", "7");
  prune.option("--mad-threshold", "mad_threshold", "MAD multiplier", "5");
  prune.option("--max-reentry-uncertainty", "max_reentry_uncertainty", "[min]", "20");
  prune.option("--max-initial-altitude", "max_initial_altitude", "[km]", "200");
  prune.option("--min-final-altitude", "min_final_altitude", "[km]", "180");
  prune.option("--max-eccentricity", "max_eccentricity", "", "0.1");
  prune.option("--min-points", "min_points", "", "4");

  auto prepare = make_command(root, "prepare", "fit trajectories and build the feature tensor");
  prepare.option("--tracks", "tracks", "pruned OMM CSV");
  prepare.option("--tip", "tip", "TIP re-entry messages (.csv)");
  prepare.option("--space-weather", "space_weather", "DATE, F107_81DAY CSV");
  prepare.option("--area-to-mass", "area_to_mass", "NORAD_CAT_ID, AREA_TO_MASS CSV");
  prepare.option("--out", "out", "tensor JSON");
  prepare.option("--trajectories", "trajectories", "grid trajectories CSV (default: <out>.trajectories.csv)");
  prepare.option("--train-fraction", "train_fraction", "training share", "0.8");
  prepare.option("--bstar-window", "bstar_window", "B* moving-mean window (0: cumulative)", "0");
  prepare.option("--stats-from", "stats_from", "reuse normalization of this tensor (all objects held out)");

  auto trn = make_command(root, "train", "train a model");
  trn.option("--tensor", "tensor", "tensor JSON");
  trn.option("--out", "out", "checkpoint path (default: runs/<run-id>/best.ckpt.json)");
  trn.option("--loss-curve", "loss_curve", "loss curve CSV (default: next to the checkpoint)");
  add_training_options(trn);

  auto tune = make_command(root, "tune", "hyperparameter search");
  tune.option("--tensor", "tensor", "tensor JSON");
  tune.option("--trials", "trials", "number of trials", "100");
  tune.option("--eta", "eta", "reduction factor", "4");
  tune.option("--grace", "grace", "grace period [epochs]", "400");
  tune.option("--max-epochs", "max_epochs", "maximum epochs", "2100");
  tune.option("--jobs,--parallelism", "jobs", "concurrent trials", "1");
  tune.option("--ledger", "ledger", "decision ledger (JSON lines)");
  tune.option("--summary", "summary", "best-trial summary JSON (default: <ledger>.summary.json)");
  tune.option("--scripted-objective", "scripted_objective", "CSV of trial,rung,loss replacing training");
  add_training_options(tune);

  auto pred = make_command(root, "predict", "predict one object's re-entry");
  pred.option("--checkpoint", "checkpoint", "checkpoint JSON");
  pred.option("--tensor", "tensor", "tensor JSON holding the object");
  pred.option("--norad", "norad", "catalog number");
  pred.option("--out", "out", "per-step predictions CSV");

  auto ev = make_command(root, "eval", "evaluate a case");
  ev.option("--tensor", "tensor", "training tensor JSON");
  ev.option("--eval-tensor", "eval_tensor", "held-out tensor (default: the tensor's validation objects)");
  ev.option("--checkpoint", "checkpoint", "evaluate this checkpoint instead of training");
  ev.option("--tracks", "tracks", "pruned OMM CSV, enables categories and eccentricity notes");
  ev.option("--tip", "tip", "TIP CSV used with --tracks");
  ev.option("--out-dir", "out_dir", "report directory");
  add_training_options(ev);

  try {
    root.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = root.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  struct Entry {
    Command* cmd;
    int (*fn)(const Settings&, Run&);
  };
  const std::vector<std::pair<std::string, Entry>> table{
      {"synth", {&synth, cmd_synth}},     {"prune", {&prune, cmd_prune}}, {"prepare", {&prepare, cmd_prepare}},
      {"train", {&trn, cmd_train}},       {"tune", {&tune, cmd_tune}},    {"predict", {&pred, cmd_predict}},
      {"eval", {&ev, cmd_eval}}};
  try {
    for (const auto& [name, e] : table) {
      if (!e.cmd->app->parsed()) continue;
      const auto settings = e.cmd->resolve();
      auto run = begin_run(name, settings, argc, argv);
      const int rc = e.fn(settings, run);
      finish_run(run, *e.cmd);
      return rc;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    switch (e.kind()) {
      case ErrorKind::Input: return kExitInput;
      case ErrorKind::Numerical: return kExitNumerical;
      case ErrorKind::Config: return kExitConfig;
    }
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed JSON: " << e.what() << '\n';
    return kExitInput;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return 0;
}
