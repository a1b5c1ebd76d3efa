// SPDX-License-Identifier: Apache-2.0
#pragma once

// Training loop with scheduled sampling: at epoch j each decoder step of a
// batch is teacher-forced with probability k^j, otherwise it consumes the
// model's own previous prediction.

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "reentry/adam.hpp"
#include "reentry/checkpoint.hpp"
#include "reentry/features.hpp"
#include "reentry/random.hpp"
#include "reentry/seq2seq.hpp"

namespace reentry {

/// Teacher-forcing probability at epoch j: k^j.
inline double sampling_probability(long long epoch, double decay_k) {
  if (epoch < 0) throw config_error("InvalidEpoch", std::to_string(epoch));
  if (!(decay_k > 0 && decay_k < 1)) throw config_error("InvalidDecay", "decay_k must lie in (0, 1)");
  return std::pow(decay_k, static_cast<double>(epoch));
}

/// Independent Bernoulli(p) per output step; true feeds the ground truth.
inline nn::SamplingMask draw_mask(std::size_t ty, double p, Rng& rng) {
  if (!(p >= 0 && p <= 1)) throw config_error("InvalidProbability", std::to_string(p));
  nn::SamplingMask mask(ty);
  for (std::size_t t = 0; t < ty; ++t) mask[t] = rng.bernoulli(p);
  return mask;
}

enum class DecoderInputMode {
  PreviousOutput,             // decoder sees only the previous (normalized) time
  PreviousOutputWithStatics,  // plus B*, F10.7 and A/m from the last encoder step
};

struct TrainConfig {
  double learning_rate = 0.001795;
  int batch_size = 27;
  int epochs = 2900;
  double decay_k = 0.15665;
  int tx = 5;
  std::uint64_t seed = 0;
  std::string loss_curve_path;  // empty: no CSV
  // Model and optimizer settings.
  int hidden_size = 59;
  int num_layers = 3;
  double beta1 = 0.999;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clipnorm = 0.1;
  DecoderInputMode decoder_input = DecoderInputMode::PreviousOutput;
  /// Test hook: called with every mask used, flagged true for validation passes.
  std::function<void(bool validation, const nn::SamplingMask&)> mask_observer;

  int ty() const { return static_cast<int>(kGridPoints) - tx; }

  void validate() const {
    if (tx < 1 || ty() < 1) throw config_error("InvalidConfig", "need 1 <= tx <= 24 so that tx + ty = 25");
    if (batch_size < 1) throw config_error("InvalidConfig", "batch_size must be >= 1");
    if (!(decay_k > 0 && decay_k < 1)) throw config_error("InvalidConfig", "decay_k must lie in (0, 1)");
    if (!(learning_rate > 0)) throw config_error("InvalidConfig", "learning_rate must be positive");
    if (epochs < 0) throw config_error("InvalidConfig", "epochs must be >= 0");
  }

  nn::ModelShape model_shape() const {
    nn::ModelShape s;
    s.input_size = static_cast<int>(kNumFeatures);
    s.decoder_input_size = decoder_input == DecoderInputMode::PreviousOutput ? 1 : static_cast<int>(kNumFeatures);
    s.hidden_size = hidden_size;
    s.num_layers = num_layers;
    return s;
  }

  nlohmann::json to_json() const {
    return {{"learning_rate", learning_rate}, {"batch_size", batch_size}, {"epochs", epochs},
            {"decay_k", decay_k},             {"tx", tx},                 {"seed", seed},
            {"hidden_size", hidden_size},     {"num_layers", num_layers}, {"beta1", beta1},
            {"beta2", beta2},                 {"epsilon", epsilon},       {"clipnorm", clipnorm},
            {"decoder_input", decoder_input == DecoderInputMode::PreviousOutput ? "previous_output"
                                                                                 : "previous_output_with_statics"}};
  }
};

/// Builds the encoder/decoder example for object `obj`: the first tx grid
/// steps as input, the remaining normalized times as targets.
inline nn::Sequence make_sequence(const FeatureTensor& ft, std::size_t obj, int tx, DecoderInputMode mode) {
  const auto steps = static_cast<int>(ft.n_steps);
  nn::Sequence s;
  s.inputs.resize(tx, static_cast<Eigen::Index>(ft.n_features));
  for (int t = 0; t < tx; ++t)
    for (std::size_t f = 0; f < ft.n_features; ++f)
      s.inputs(t, static_cast<Eigen::Index>(f)) = ft.at(obj, static_cast<std::size_t>(t), f);
  s.y0 = ft.at(obj, static_cast<std::size_t>(tx - 1), kTime);
  s.targets.resize(steps - tx);
  for (int t = tx; t < steps; ++t) s.targets(t - tx) = ft.at(obj, static_cast<std::size_t>(t), kTime);
  if (mode == DecoderInputMode::PreviousOutputWithStatics) {
    s.statics.resize(static_cast<Eigen::Index>(ft.n_features) - 1);
    for (std::size_t f = 1; f < ft.n_features; ++f)
      s.statics(static_cast<Eigen::Index>(f) - 1) = ft.at(obj, static_cast<std::size_t>(tx - 1), f);
  }
  return s;
}

struct TrainReport {
  std::vector<double> train_loss;        // day^2
  std::vector<double> val_loss;          // day^2, pure inference
  std::vector<double> train_loss_norm;   // normalized units
  std::vector<double> val_loss_norm;
  double wall_seconds = 0.0;
  int best_epoch = -1;                   // 0-based
  double best_val_loss = std::numeric_limits<double>::infinity();  // day^2
  std::optional<Checkpoint> best;
  std::size_t monotonicity_violations = 0;  // non-increasing predicted steps on validation, final model
  std::string checkpoint_path;
};

/// Resumable training state; `train` runs it for a fixed number of epochs and
/// the tuner advances it rung by rung.
class Trainer {
 public:
  Trainer(const FeatureTensor& tensor, TrainConfig cfg, std::optional<nn::Seq2SeqModel> initial = std::nullopt)
      : tensor_(&tensor), cfg_(std::move(cfg)) {
    cfg_.validate();
    if (static_cast<std::size_t>(cfg_.tx) >= tensor.n_steps)
      throw config_error("ShapeMismatch", "tx leaves no output steps");
    for (auto o : tensor.indices(true)) train_.push_back(make_sequence(tensor, o, cfg_.tx, cfg_.decoder_input));
    for (auto o : tensor.indices(false)) val_.push_back(make_sequence(tensor, o, cfg_.tx, cfg_.decoder_input));
    if (train_.empty()) throw input_error("EmptyDataset", "no training objects");
    model_ = initial ? std::move(*initial) : nn::Seq2SeqModel::random(cfg_.model_shape(), derive_seed(cfg_.seed, 0));
    if (!(model_.shape == cfg_.model_shape())) throw config_error("ShapeMismatch", "initial model shape differs from config");
    opt_ = nn::OptimizerState::for_model(model_, cfg_.learning_rate);
    opt_.beta1 = cfg_.beta1;
    opt_.beta2 = cfg_.beta2;
    opt_.epsilon = cfg_.epsilon;
    opt_.clipnorm = cfg_.clipnorm;
    opt_.validate();
    rng_ = Rng(derive_seed(cfg_.seed, 1));
    order_.resize(train_.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  }

  /// One epoch; returns the validation loss in day^2.
  double run_epoch() {
    const auto t_start = std::chrono::steady_clock::now();
    const double p = sampling_probability(epoch_, cfg_.decay_k);
    const auto ty = static_cast<std::size_t>(cfg_.ty());
    rng_.shuffle(order_);
    double train_sum = 0.0;
    nn::Gradients grad;
    std::vector<const nn::Sequence*> batch;
    for (std::size_t b = 0; b < order_.size(); b += static_cast<std::size_t>(cfg_.batch_size)) {
      batch.clear();
      for (std::size_t i = b; i < std::min(order_.size(), b + static_cast<std::size_t>(cfg_.batch_size)); ++i)
        batch.push_back(&train_[order_[i]]);
      const auto mask = draw_mask(ty, p, rng_);
      if (cfg_.mask_observer) cfg_.mask_observer(false, mask);
      const double loss = nn::loss_and_gradient(model_, batch, mask, grad);
      if (!std::isfinite(loss))
        throw numerical_error("NonFiniteLoss", "training loss at epoch " + std::to_string(epoch_));
      nn::clip_and_step(opt_, model_, std::move(grad));
      train_sum += loss * static_cast<double>(batch.size());
    }
    const double train_norm = train_sum / static_cast<double>(train_.size());
    const double val_norm = validation_loss_norm();
    if (!std::isfinite(val_norm))
      throw numerical_error("NonFiniteLoss", "validation loss at epoch " + std::to_string(epoch_));
    const double span2 = std::pow(tensor_->time_stats().span(), 2);
    report_.train_loss_norm.push_back(train_norm);
    report_.val_loss_norm.push_back(val_norm);
    report_.train_loss.push_back(train_norm * span2);
    report_.val_loss.push_back(val_norm * span2);
    if (val_norm * span2 < report_.best_val_loss) {
      report_.best_val_loss = val_norm * span2;
      report_.best_epoch = static_cast<int>(epoch_);
      report_.best = checkpoint();
    }
    ++epoch_;
    report_.wall_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return val_norm * span2;
  }

  /// Validation MSE in normalized units, every decoder step fed back. Falls
  /// back to the training objects when there is no validation split.
  double validation_loss_norm() const {
    const auto& set = val_.empty() ? train_ : val_;
    const auto mask = nn::all_fed_back(static_cast<std::size_t>(cfg_.ty()));
    if (cfg_.mask_observer) cfg_.mask_observer(true, mask);
    std::vector<const nn::Sequence*> ptrs;
    for (const auto& s : set) ptrs.push_back(&s);
    return nn::batch_loss(model_, ptrs, mask);
  }

  Checkpoint checkpoint(bool with_optimizer = false) const {
    Checkpoint c;
    c.model = model_;
    c.tx = cfg_.tx;
    c.norm_stats = tensor_->norm_stats;
    c.hyperparameters = cfg_.to_json();
    if (with_optimizer) c.optimizer = opt_;
    return c;
  }

  TrainReport finish() {
    const auto& set = val_.empty() ? train_ : val_;
    report_.monotonicity_violations = 0;
    for (const auto& s : set) {
      const auto pred = nn::predict_sequence(model_, s, static_cast<std::size_t>(cfg_.ty()));
      double prev = s.y0;
      for (Eigen::Index t = 0; t < pred.size(); ++t) {
        if (!(pred(t) > prev)) ++report_.monotonicity_violations;
        prev = pred(t);
      }
    }
    return report_;
  }

  long long epochs_done() const { return epoch_; }
  const nn::Seq2SeqModel& model() const { return model_; }
  const TrainReport& report() const { return report_; }
  const TrainConfig& config() const { return cfg_; }

 private:
  const FeatureTensor* tensor_;
  TrainConfig cfg_;
  std::vector<nn::Sequence> train_, val_;
  nn::Seq2SeqModel model_;
  nn::OptimizerState opt_;
  Rng rng_{0};
  std::vector<std::size_t> order_;
  long long epoch_ = 0;
  TrainReport report_;
};

inline void write_loss_curve_csv(std::ostream& out, const TrainReport& r) {
  out << "epoch,train_loss,val_loss\n";
  for (std::size_t e = 0; e < r.train_loss.size(); ++e)
    out << e + 1 << ',' << csv::fmt(r.train_loss[e]) << ',' << csv::fmt(r.val_loss[e]) << '\n';
}

/// Trains `model` in place for cfg.epochs epochs. The report keeps the
/// checkpoint with the lowest validation loss.
inline TrainReport train(nn::Seq2SeqModel& model, const FeatureTensor& tensor, const TrainConfig& cfg) {
  Trainer trainer(tensor, cfg, model);
  for (int e = 0; e < cfg.epochs; ++e) trainer.run_epoch();
  model = trainer.model();
  auto report = trainer.finish();
  if (!cfg.loss_curve_path.empty()) {
    std::ostringstream os;
    write_loss_curve_csv(os, report);
    write_file_atomic(cfg.loss_curve_path, os.str());
  }
  return report;
}

struct Prediction {
  std::vector<double> residual_times;  // days from the 200 km epoch, one per output step
  double final_time = 0.0;             // residual time at 80 km
};

/// Pure-inference prediction. `input_segment` is the normalized [tx x F]
/// input; `y0` the normalized time of its last step. Outputs are
/// denormalized with the checkpoint's time statistics.
inline Prediction predict(const Checkpoint& ckpt, const nn::Matrix& input_segment, double y0,
                          const nn::Vector& statics = {}) {
  if (ckpt.norm_stats.empty()) throw input_error("MissingStats", "checkpoint has no normalization statistics");
  if (input_segment.rows() != ckpt.tx)
    throw config_error("ShapeMismatch", "input has " + std::to_string(input_segment.rows()) +
                                            " steps, checkpoint expects " + std::to_string(ckpt.tx));
  nn::Sequence s;
  s.inputs = input_segment;
  s.y0 = y0;
  s.statics = statics;
  const auto pred = nn::predict_sequence(ckpt.model, s, static_cast<std::size_t>(ckpt.ty()));
  Prediction out;
  for (Eigen::Index t = 0; t < pred.size(); ++t) out.residual_times.push_back(ckpt.norm_stats[kTime].invert(pred(t)));
  out.final_time = out.residual_times.back();
  return out;
}

/// Prediction for object `obj` of a tensor, using the checkpoint's tx.
inline Prediction predict_object(const Checkpoint& ckpt, const FeatureTensor& ft, std::size_t obj) {
  const auto mode = ckpt.model.shape.decoder_input_size > 1 ? DecoderInputMode::PreviousOutputWithStatics
                                                            : DecoderInputMode::PreviousOutput;
  const auto s = make_sequence(ft, obj, ckpt.tx, mode);
  return predict(ckpt, s.inputs, s.y0, s.statics);
}

}  // namespace reentry
