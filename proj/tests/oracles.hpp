// SPDX-License-Identifier: Apache-2.0
#pragma once

// Straight-line reference computations used as test oracles. They read the
// parameters element by element and share no arithmetic with the library.

#include <cmath>
#include <vector>

#include "reentry/seq2seq.hpp"

namespace reentry::oracle {

using Vec = std::vector<double>;

inline double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

/// One GRU step: gates, candidate on the reset-scaled state, convex update.
inline Vec gru(const nn::GruLayerParams& p, const Vec& x, const Vec& c_prev) {
  const auto k = static_cast<std::size_t>(p.hidden_size());
  const auto n = x.size();
  Vec z(k), r(k), out(k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    double az = p.bias_update(ii), ar = p.bias_reset(ii);
    for (std::size_t j = 0; j < n; ++j) {
      az += p.in_update(ii, static_cast<Eigen::Index>(j)) * x[j];
      ar += p.in_reset(ii, static_cast<Eigen::Index>(j)) * x[j];
    }
    for (std::size_t j = 0; j < k; ++j) {
      az += p.rec_update(ii, static_cast<Eigen::Index>(j)) * c_prev[j];
      ar += p.rec_reset(ii, static_cast<Eigen::Index>(j)) * c_prev[j];
    }
    z[i] = sig(az);
    r[i] = sig(ar);
  }
  for (std::size_t i = 0; i < k; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    double ac = p.bias_cand(ii);
    for (std::size_t j = 0; j < n; ++j) ac += p.in_cand(ii, static_cast<Eigen::Index>(j)) * x[j];
    for (std::size_t j = 0; j < k; ++j) ac += p.rec_cand(ii, static_cast<Eigen::Index>(j)) * (r[j] * c_prev[j]);
    const double cand = std::tanh(ac);
    out[i] = (1.0 - z[i]) * cand + z[i] * c_prev[i];
  }
  return out;
}

/// Full encoder/decoder unroll with per-step feedback choice.
inline Vec seq2seq(const nn::Seq2SeqModel& m, const std::vector<Vec>& inputs, double y0, std::size_t ty,
                   const Vec& teacher, const std::vector<bool>& mask) {
  const auto layers = static_cast<std::size_t>(m.shape.num_layers);
  const auto k = static_cast<std::size_t>(m.shape.hidden_size);
  std::vector<Vec> state(layers, Vec(k, 0.0));
  for (const auto& row : inputs) {
    Vec x = row;
    for (std::size_t l = 0; l < layers; ++l) {
      state[l] = gru(m.encoder[l], x, state[l]);
      x = state[l];
    }
  }
  Vec pred(ty);
  for (std::size_t t = 0; t < ty; ++t) {
    Vec x{t == 0 ? y0 : (mask[t] ? teacher[t - 1] : pred[t - 1])};
    for (std::size_t l = 0; l < layers; ++l) {
      state[l] = gru(m.decoder[l], x, state[l]);
      x = state[l];
    }
    double y = m.dense_bias;
    for (std::size_t i = 0; i < k; ++i) y += m.dense_weight(static_cast<Eigen::Index>(i)) * x[i];
    pred[t] = y;
  }
  return pred;
}

}  // namespace reentry::oracle
