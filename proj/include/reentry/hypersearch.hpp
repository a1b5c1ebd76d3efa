// SPDX-License-Identifier: Apache-2.0
#pragma once

// Random search with asynchronous successive halving (ASHA).
//
// Every trial trains to the first rung milestone. A trial waiting at rung r
// is promoted to rung r+1 when its loss ranks within the top ceil(n / eta) of
// the n losses recorded at rung r so far; otherwise it is halted. Decisions
// never wait for running trials. Workers start every trial before deciding on
// any, and decide lower rungs first.

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "reentry/error.hpp"
#include "reentry/random.hpp"
#include "reentry/training.hpp"

namespace reentry {

struct SearchSpace {
  double lr_min = 1e-6, lr_max = 1e-1;       // log-uniform
  int layers_min = 1, layers_max = 3;        // integer uniform
  int hidden_min = 16, hidden_max = 256;     // integer uniform
  int batch_min = 8, batch_max = 64;         // integer uniform
  double decay_min = 0.1, decay_max = 0.99;  // log-uniform
};

struct TrialConfig {
  double learning_rate = 0.0;
  int num_layers = 1;
  int hidden_size = 16;
  int batch_size = 8;
  double decay_k = 0.5;

  bool operator==(const TrialConfig&) const = default;

  nlohmann::json to_json() const {
    return {{"learning_rate", learning_rate},
            {"num_layers", num_layers},
            {"hidden_size", hidden_size},
            {"batch_size", batch_size},
            {"decay_k", decay_k}};
  }
};

inline double sample_log_uniform(Rng& rng, double lo, double hi) {
  return std::exp(rng.uniform(std::log(lo), std::log(hi)));
}

inline TrialConfig sample_config(const SearchSpace& space, Rng& rng) {
  TrialConfig c;
  c.learning_rate = sample_log_uniform(rng, space.lr_min, space.lr_max);
  c.num_layers = static_cast<int>(rng.uniform_int(space.layers_min, space.layers_max));
  c.hidden_size = static_cast<int>(rng.uniform_int(space.hidden_min, space.hidden_max));
  c.batch_size = static_cast<int>(rng.uniform_int(space.batch_min, space.batch_max));
  c.decay_k = sample_log_uniform(rng, space.decay_min, space.decay_max);
  return c;
}

struct AshaConfig {
  int num_trials = 100;
  int reduction_factor = 4;
  int grace_period = 400;
  int max_epochs = 2100;

  void validate() const {
    if (reduction_factor < 2) throw config_error("InvalidAsha", "reduction factor must be >= 2");
    if (grace_period < 1 || grace_period > max_epochs)
      throw config_error("InvalidAsha", "need 1 <= grace_period <= max_epochs");
    if (num_trials < 1) throw config_error("InvalidAsha", "num_trials must be >= 1");
  }
};

/// Epoch milestones grace * eta^i below max_epochs, then max_epochs itself.
inline std::vector<long long> rung_epochs(const AshaConfig& cfg) {
  cfg.validate();
  std::vector<long long> out;
  long long e = cfg.grace_period;
  while (e < cfg.max_epochs) {
    out.push_back(e);
    e *= cfg.reduction_factor;
  }
  out.push_back(cfg.max_epochs);
  return out;
}

enum class TrialStatus { Pending, Running, Paused, Halted, Completed };

inline const char* to_string(TrialStatus s) {
  switch (s) {
    case TrialStatus::Pending: return "pending";
    case TrialStatus::Running: return "running";
    case TrialStatus::Paused: return "paused";
    case TrialStatus::Halted: return "halted";
    case TrialStatus::Completed: return "completed";
  }
  return "?";
}

struct TrialRecord {
  int id = 0;
  TrialConfig config;
  std::uint64_t seed = 0;
  std::vector<double> rung_losses;  // one per rung reached, in rung order; +inf for failures
  TrialStatus status = TrialStatus::Pending;
  long long epochs_trained = 0;
};

enum class Decision { Promote, Halt };

/// ASHA promotion rule for `trial_id` at `rung` against every loss recorded
/// at that rung so far. Ties rank the lower trial id first.
inline Decision asha_decide(const std::vector<TrialRecord>& records, int trial_id, std::size_t rung, int eta) {
  const TrialRecord* self = nullptr;
  for (const auto& r : records)
    if (r.id == trial_id) self = &r;
  if (!self || self->rung_losses.size() <= rung)
    throw input_error("MissingLoss", "trial " + std::to_string(trial_id) + " has no loss at rung " + std::to_string(rung));
  const double mine = self->rung_losses[rung];
  std::size_t n = 0, better = 0;
  for (const auto& r : records) {
    if (r.rung_losses.size() <= rung) continue;
    ++n;
    const double other = r.rung_losses[rung];
    if (r.id != trial_id && (other < mine || (other == mine && r.id < trial_id))) ++better;
  }
  const std::size_t keep = (n + static_cast<std::size_t>(eta) - 1) / static_cast<std::size_t>(eta);
  return better < keep ? Decision::Promote : Decision::Halt;
}

struct LedgerEntry {
  int trial = 0;
  TrialConfig config;
  std::size_t rung = 0;
  long long epoch = 0;
  double val_loss = 0.0;
  std::string decision;  // promote | halt | complete

  nlohmann::json to_json() const {
    nlohmann::json j{{"trial", trial}, {"config", config.to_json()}, {"rung", rung}, {"epoch", epoch}};
    j["val_loss"] = std::isfinite(val_loss) ? nlohmann::json(val_loss) : nlohmann::json(nullptr);
    j["decision"] = decision;
    return j;
  }
};

/// A trial under training. `advance_to` trains up to the given total epoch
/// count and returns the validation loss there.
class TrialSession {
 public:
  virtual ~TrialSession() = default;
  virtual double advance_to(long long epoch) = 0;
};

using SessionFactory = std::function<std::unique_ptr<TrialSession>(const TrialRecord&)>;

struct SearchResult {
  TrialRecord best;
  std::vector<TrialRecord> trials;
  std::vector<LedgerEntry> ledger;
};

/// Runs the search with up to `parallelism` concurrent trials.
inline SearchResult run_search(const SearchSpace& space, const AshaConfig& asha, const SessionFactory& factory,
                               int parallelism, std::uint64_t seed) {
  asha.validate();
  const auto milestones = rung_epochs(asha);
  std::vector<TrialRecord> trials(static_cast<std::size_t>(asha.num_trials));
  {
    Rng rng(derive_seed(seed, 0xA5A5));
    for (std::size_t i = 0; i < trials.size(); ++i) {
      trials[i].id = static_cast<int>(i);
      trials[i].config = sample_config(space, rng);
      trials[i].seed = derive_seed(seed, i);
    }
  }
  std::vector<std::unique_ptr<TrialSession>> sessions(trials.size());
  std::vector<LedgerEntry> ledger;
  std::mutex mu;
  std::condition_variable cv;
  std::size_t next_new = 0;
  std::size_t running = 0;

  auto ledger_entry = [&](const TrialRecord& t, std::size_t rung, const char* decision) {
    ledger.push_back({t.id, t.config, rung, milestones[rung], t.rung_losses[rung], decision});
  };

  struct Job {
    std::size_t trial;
    std::size_t rung;
  };

  // Returns the next job, or nullopt when the search is finished. Caller holds the lock.
  auto next_job = [&](std::unique_lock<std::mutex>& lock) -> std::optional<Job> {
    for (;;) {
      if (next_new < trials.size()) return Job{next_new++, 0};
      // Lowest rung first; lowest id within a rung.
      std::optional<std::size_t> pick;
      for (std::size_t r = 0; r + 1 < milestones.size() && !pick; ++r)
        for (std::size_t i = 0; i < trials.size(); ++i)
          if (trials[i].status == TrialStatus::Paused && trials[i].rung_losses.size() == r + 1) {
            pick = i;
            break;
          }
      if (pick) {
        auto& t = trials[*pick];
        const std::size_t rung = t.rung_losses.size() - 1;
        if (asha_decide(trials, t.id, rung, asha.reduction_factor) == Decision::Promote) {
          ledger_entry(t, rung, "promote");
          t.status = TrialStatus::Running;
          return Job{*pick, rung + 1};
        }
        ledger_entry(t, rung, "halt");
        t.status = TrialStatus::Halted;
        sessions[*pick].reset();
        continue;
      }
      if (running == 0) return std::nullopt;
      cv.wait(lock);
    }
  };

  auto worker = [&]() {
    std::unique_lock<std::mutex> lock(mu);
    for (;;) {
      auto job = next_job(lock);
      if (!job) {
        cv.notify_all();
        return;
      }
      auto& t = trials[job->trial];
      t.status = TrialStatus::Running;
      ++running;
      const TrialRecord snapshot = t;
      lock.unlock();

      double loss = std::numeric_limits<double>::infinity();
      try {
        if (!sessions[job->trial]) sessions[job->trial] = factory(snapshot);
        loss = sessions[job->trial]->advance_to(milestones[job->rung]);
      } catch (const std::exception&) {
        loss = std::numeric_limits<double>::quiet_NaN();
      }
      const bool failed = !std::isfinite(loss);

      lock.lock();
      --running;
      t.rung_losses.push_back(failed ? std::numeric_limits<double>::infinity() : loss);
      t.epochs_trained = milestones[job->rung];
      if (failed) {
        t.status = TrialStatus::Halted;
        ledger_entry(t, job->rung, "halt");
        sessions[job->trial].reset();
      } else if (job->rung + 1 == milestones.size()) {
        t.status = TrialStatus::Completed;
        ledger_entry(t, job->rung, "complete");
        sessions[job->trial].reset();
      } else {
        t.status = TrialStatus::Paused;
      }
      cv.notify_all();
    }
  };

  const int workers = std::max(1, std::min(parallelism, asha.num_trials));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  SearchResult res;
  res.trials = trials;
  res.ledger = ledger;
  const TrialRecord* best = nullptr;
  for (const auto& t : trials)
    if (t.status == TrialStatus::Completed && (!best || t.rung_losses.back() < best->rung_losses.back())) best = &t;
  if (!best) throw numerical_error("NoCompletedTrials", "every trial failed or was halted");
  res.best = *best;
  return res;
}

/// Session that trains a real model on a feature tensor.
class TrainingSession : public TrialSession {
 public:
  TrainingSession(const FeatureTensor& tensor, const TrainConfig& base, const TrialRecord& trial)
      : trainer_(tensor, configure(base, trial)) {}

  double advance_to(long long epoch) override {
    double loss = std::numeric_limits<double>::quiet_NaN();
    while (trainer_.epochs_done() < epoch) loss = trainer_.run_epoch();
    return loss;
  }

  static TrainConfig configure(TrainConfig cfg, const TrialRecord& trial) {
    cfg.learning_rate = trial.config.learning_rate;
    cfg.num_layers = trial.config.num_layers;
    cfg.hidden_size = trial.config.hidden_size;
    cfg.batch_size = trial.config.batch_size;
    cfg.decay_k = trial.config.decay_k;
    cfg.seed = trial.seed;
    cfg.loss_curve_path.clear();
    return cfg;
  }

 private:
  Trainer trainer_;
};

inline SessionFactory training_session_factory(const FeatureTensor& tensor, const TrainConfig& base) {
  return [&tensor, base](const TrialRecord& t) { return std::make_unique<TrainingSession>(tensor, base, t); };
}

inline void write_ledger_jsonl(std::ostream& out, const std::vector<LedgerEntry>& ledger) {
  for (const auto& e : ledger) out << e.to_json().dump() << '\n';
}

/// Summary mirroring the optimised-hyperparameter table.
inline nlohmann::json search_summary(const SearchResult& r) {
  nlohmann::json j = r.best.config.to_json();
  j["trial"] = r.best.id;
  j["val_loss"] = r.best.rung_losses.back();
  j["epochs"] = r.best.epochs_trained;
  std::size_t completed = 0, halted = 0;
  for (const auto& t : r.trials) {
    if (t.status == TrialStatus::Completed) ++completed;
    if (t.status == TrialStatus::Halted) ++halted;
  }
  j["trials_completed"] = completed;
  j["trials_halted"] = halted;
  return j;
}

}  // namespace reentry
