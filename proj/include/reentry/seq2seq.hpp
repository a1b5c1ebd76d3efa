// SPDX-License-Identifier: Apache-2.0
#pragma once

// Stacked GRU encoder/decoder with an affine output head.
//
// Layer l of the decoder starts from the final state of encoder layer l.
// Decoder step t consumes the previous output: the seed value y0 at t = 0,
// then either the true previous target (teacher forcing, mask[t] = true) or
// the model's own previous prediction (mask[t] = false).

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "reentry/gru.hpp"

namespace reentry::nn {

struct ModelShape {
  int input_size = 4;          // encoder features per step
  int decoder_input_size = 1;  // previous output, plus any per-sequence statics
  int hidden_size = 59;
  int num_layers = 3;

  void validate() const {
    if (num_layers < 1 || num_layers > 3) throw config_error("InvalidShape", "num_layers must be in [1, 3]");
    if (hidden_size < 1) throw config_error("InvalidShape", "hidden_size must be positive");
    if (input_size < 1 || decoder_input_size < 1) throw config_error("InvalidShape", "input sizes must be positive");
  }
  bool operator==(const ModelShape&) const = default;
};

struct Seq2SeqModel {
  ModelShape shape;
  std::vector<GruLayerParams> encoder;
  std::vector<GruLayerParams> decoder;
  Vector dense_weight;  // [hidden]
  double dense_bias = 0.0;

  static Seq2SeqModel zeros(const ModelShape& s) {
    s.validate();
    Seq2SeqModel m;
    m.shape = s;
    for (int l = 0; l < s.num_layers; ++l) {
      m.encoder.push_back(GruLayerParams::zeros(s.hidden_size, l == 0 ? s.input_size : s.hidden_size));
      m.decoder.push_back(GruLayerParams::zeros(s.hidden_size, l == 0 ? s.decoder_input_size : s.hidden_size));
    }
    m.dense_weight.setZero(s.hidden_size);
    return m;
  }

  /// Seeded Keras-style initialisation (see GruLayerParams::random); the
  /// dense head is Glorot uniform with a zero bias.
  static Seq2SeqModel random(const ModelShape& s, std::uint64_t seed) {
    Seq2SeqModel m = zeros(s);
    Rng rng(seed);
    for (int l = 0; l < s.num_layers; ++l) {
      m.encoder[static_cast<std::size_t>(l)] =
          GruLayerParams::random(s.hidden_size, l == 0 ? s.input_size : s.hidden_size, rng);
      m.decoder[static_cast<std::size_t>(l)] =
          GruLayerParams::random(s.hidden_size, l == 0 ? s.decoder_input_size : s.hidden_size, rng);
    }
    const double limit = std::sqrt(6.0 / static_cast<double>(s.hidden_size + 1));
    for (Eigen::Index i = 0; i < m.dense_weight.size(); ++i) m.dense_weight(i) = rng.uniform(-limit, limit);
    return m;
  }

  /// Visits every parameter block as (qualified name, data, size) in a fixed order.
  template <typename F>
  void for_each(F&& f) {
    for (std::size_t l = 0; l < encoder.size(); ++l)
      encoder[l].for_each([&](const std::string& n, double* d, Eigen::Index s) {
        f("encoder." + std::to_string(l) + "." + n, d, s);
      });
    for (std::size_t l = 0; l < decoder.size(); ++l)
      decoder[l].for_each([&](const std::string& n, double* d, Eigen::Index s) {
        f("decoder." + std::to_string(l) + "." + n, d, s);
      });
    f(std::string("dense.weight"), dense_weight.data(), dense_weight.size());
    f(std::string("dense.bias"), &dense_bias, Eigen::Index{1});
  }
  template <typename F>
  void for_each(F&& f) const {
    const_cast<Seq2SeqModel*>(this)->for_each(
        [&](const std::string& n, double* d, Eigen::Index s) { f(n, static_cast<const double*>(d), s); });
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each([&](const std::string&, const double*, Eigen::Index s) { n += static_cast<std::size_t>(s); });
    return n;
  }

  /// Zeroed model of the same shape, used as a gradient accumulator.
  Seq2SeqModel zeros_like() const { return zeros(shape); }
};

using Gradients = Seq2SeqModel;

/// One training/inference example.
struct Sequence {
  Matrix inputs;          // [Tx x input_size]
  double y0 = 0.0;        // last known output preceding the decoded segment
  Vector targets;         // [Ty], may be empty for pure inference
  Vector statics;         // appended to every decoder input when decoder_input_size > 1
};

/// Decoder feedback choice per output step; true feeds the previous target.
using SamplingMask = std::vector<bool>;

inline SamplingMask all_fed_back(std::size_t ty) { return SamplingMask(ty, false); }
inline SamplingMask all_teacher(std::size_t ty) { return SamplingMask(ty, true); }

struct ForwardCache {
  std::vector<std::vector<GruCache>> encoder;  // [layer][step]
  std::vector<std::vector<GruCache>> decoder;  // [layer][step]
  Vector predictions;
};

/// Final state of every encoder layer (zero initial states).
inline std::vector<Vector> encode(const Seq2SeqModel& m, const Matrix& inputs, ForwardCache* cache = nullptr) {
  if (inputs.rows() < 1) throw config_error("ShapeMismatch", "empty input sequence");
  if (inputs.cols() != m.shape.input_size)
    throw config_error("ShapeMismatch", "input has " + std::to_string(inputs.cols()) + " features, model expects " +
                                            std::to_string(m.shape.input_size));
  const auto layers = static_cast<std::size_t>(m.shape.num_layers);
  const auto steps = static_cast<std::size_t>(inputs.rows());
  if (cache) cache->encoder.assign(layers, std::vector<GruCache>(steps));
  std::vector<Vector> state(layers, Vector::Zero(m.shape.hidden_size));
  for (std::size_t t = 0; t < steps; ++t) {
    Vector x = inputs.row(static_cast<Eigen::Index>(t)).transpose();
    for (std::size_t l = 0; l < layers; ++l) {
      state[l] = gru_step(m.encoder[l], x, state[l], cache ? &cache->encoder[l][t] : nullptr);
      x = state[l];
    }
  }
  return state;
}

namespace detail {

inline Vector decoder_input(const Seq2SeqModel& m, double y_prev, const Vector& statics) {
  Vector x(m.shape.decoder_input_size);
  x(0) = y_prev;
  if (m.shape.decoder_input_size > 1) {
    if (statics.size() != m.shape.decoder_input_size - 1)
      throw config_error("ShapeMismatch", "decoder statics size " + std::to_string(statics.size()));
    x.tail(m.shape.decoder_input_size - 1) = statics;
  }
  return x;
}

}  // namespace detail

/// Runs the decoder for `ty` steps from `context`. `teacher` is required if
/// any mask entry past the first requests teacher forcing.
inline Vector decode(const Seq2SeqModel& m, std::vector<Vector> context, double y0, std::size_t ty,
                     const Vector* teacher, const SamplingMask& mask, const Vector& statics = {},
                     ForwardCache* cache = nullptr) {
  if (mask.size() != ty) throw config_error("ShapeMismatch", "mask length differs from output length");
  for (std::size_t t = 1; t < ty; ++t)
    if (mask[t] && (!teacher || static_cast<std::size_t>(teacher->size()) < t))
      throw input_error("MissingTeacher", "teacher forcing requested without targets");
  const auto layers = static_cast<std::size_t>(m.shape.num_layers);
  if (context.size() != layers) throw config_error("ShapeMismatch", "context layer count");
  if (cache) cache->decoder.assign(layers, std::vector<GruCache>(ty));
  Vector pred(static_cast<Eigen::Index>(ty));
  double y_prev = y0;
  for (std::size_t t = 0; t < ty; ++t) {
    if (t > 0) y_prev = mask[t] ? (*teacher)(static_cast<Eigen::Index>(t - 1)) : pred(static_cast<Eigen::Index>(t - 1));
    Vector x = detail::decoder_input(m, y_prev, statics);
    for (std::size_t l = 0; l < layers; ++l) {
      context[l] = gru_step(m.decoder[l], x, context[l], cache ? &cache->decoder[l][t] : nullptr);
      x = context[l];
    }
    pred(static_cast<Eigen::Index>(t)) = m.dense_weight.dot(x) + m.dense_bias;
  }
  if (cache) cache->predictions = pred;
  return pred;
}

inline Vector forward(const Seq2SeqModel& m, const Sequence& s, std::size_t ty, const SamplingMask& mask,
                      ForwardCache* cache = nullptr) {
  const auto ctx = encode(m, s.inputs, cache);
  return decode(m, ctx, s.y0, ty, s.targets.size() > 0 ? &s.targets : nullptr, mask, s.statics, cache);
}

/// Pure inference (every step fed back).
inline Vector predict_sequence(const Seq2SeqModel& m, const Sequence& s, std::size_t ty) {
  return forward(m, s, ty, all_fed_back(ty));
}

inline double mse_loss(const Vector& y, const Vector& yhat) {
  if (y.size() != yhat.size() || y.size() < 1)
    throw input_error("LengthMismatch", std::to_string(y.size()) + " vs " + std::to_string(yhat.size()));
  return (y - yhat).squaredNorm() / static_cast<double>(y.size());
}

/// Backpropagates `scale * mse(targets, predictions)` of one cached forward
/// pass and accumulates into `grad`. Gradients flow through fed-back
/// predictions wherever mask[t] is false.
inline void backward_sequence(const Seq2SeqModel& m, const Sequence& s, const SamplingMask& mask,
                              const ForwardCache& cache, double scale, Gradients& grad) {
  const auto layers = static_cast<std::size_t>(m.shape.num_layers);
  const auto ty = static_cast<std::size_t>(cache.predictions.size());
  const auto tx = static_cast<std::size_t>(s.inputs.rows());
  const Eigen::Index k = m.shape.hidden_size;

  std::vector<Vector> dstate(layers, Vector::Zero(k));  // gradient w.r.t. each layer's state entering step t+1
  Vector dx, dprev;
  double carry = 0.0;  // gradient w.r.t. prediction t arriving through decoder input t+1
  for (std::size_t t = ty; t-- > 0;) {
    const auto ti = static_cast<Eigen::Index>(t);
    const double gy = scale * 2.0 * (cache.predictions(ti) - s.targets(ti)) / static_cast<double>(ty) + carry;
    carry = 0.0;
    const Vector& top = cache.decoder[layers - 1][t].h;
    grad.dense_weight += gy * top;
    grad.dense_bias += gy;
    Vector dh = gy * m.dense_weight + dstate[layers - 1];
    for (std::size_t l = layers; l-- > 0;) {
      if (l != layers - 1) dh = dx + dstate[l];
      gru_step_backward(m.decoder[l], cache.decoder[l][t], dh, grad.decoder[l], dx, dprev);
      dstate[l] = dprev;
    }
    if (t > 0 && !mask[t]) carry = dx(0);
  }
  // dstate now holds the gradient w.r.t. the context (encoder final states).
  for (std::size_t t = tx; t-- > 0;) {
    for (std::size_t l = layers; l-- > 0;) {
      Vector dh = dstate[l];
      if (l != layers - 1) dh += dx;
      gru_step_backward(m.encoder[l], cache.encoder[l][t], dh, grad.encoder[l], dx, dprev);
      dstate[l] = dprev;
    }
  }
}

/// Batch-mean MSE and its gradient; the same mask applies to every sequence.
inline double loss_and_gradient(const Seq2SeqModel& m, std::span<const Sequence* const> batch,
                                const SamplingMask& mask, Gradients& grad) {
  grad = m.zeros_like();
  if (batch.empty()) return 0.0;
  const double scale = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  ForwardCache cache;
  for (const Sequence* s : batch) {
    const auto ty = static_cast<std::size_t>(s->targets.size());
    const Vector pred = forward(m, *s, ty, mask, &cache);
    loss += scale * mse_loss(s->targets, pred);
    backward_sequence(m, *s, mask, cache, scale, grad);
  }
  return loss;
}

/// Batch-mean MSE without gradients.
inline double batch_loss(const Seq2SeqModel& m, std::span<const Sequence* const> batch, const SamplingMask& mask) {
  if (batch.empty()) return 0.0;
  double loss = 0.0;
  for (const Sequence* s : batch) {
    const auto ty = static_cast<std::size_t>(s->targets.size());
    loss += mse_loss(s->targets, forward(m, *s, ty, mask));
  }
  return loss / static_cast<double>(batch.size());
}

}  // namespace reentry::nn
