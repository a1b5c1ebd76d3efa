// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>

#include "reentry/seq2seq.hpp"

namespace reentry::nn {

/// Adam with global-norm gradient clipping. Defaults follow the fixed
/// training setup: beta1 = beta2 = 0.999, clipnorm = 0.1.
struct OptimizerState {
  double lr = 1e-3;
  double beta1 = 0.999;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clipnorm = 0.1;  // <= 0 disables clipping
  Seq2SeqModel first_moment;
  Seq2SeqModel second_moment;
  long long step = 0;

  static OptimizerState for_model(const Seq2SeqModel& m, double lr) {
    OptimizerState s;
    s.lr = lr;
    s.first_moment = m.zeros_like();
    s.second_moment = m.zeros_like();
    return s;
  }

  void validate() const {
    if (!(lr > 0)) throw config_error("InvalidOptimizer", "learning rate must be positive");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1))
      throw config_error("InvalidOptimizer", "betas must lie in [0, 1)");
  }
};

inline double global_norm(const Gradients& g) {
  double sq = 0.0;
  g.for_each([&](const std::string&, const double* d, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) sq += d[i] * d[i];
  });
  return std::sqrt(sq);
}

/// Rescales `g` in place so its global L2 norm does not exceed `clipnorm`.
/// Returns the norm before clipping.
inline double clip_by_global_norm(Gradients& g, double clipnorm) {
  const double norm = global_norm(g);
  if (clipnorm > 0 && norm > clipnorm) {
    const double factor = clipnorm / norm;
    g.for_each([&](const std::string&, double* d, Eigen::Index n) {
      for (Eigen::Index i = 0; i < n; ++i) d[i] *= factor;
    });
  }
  return norm;
}

/// Clips `grads` and applies one Adam update to `params`. A non-finite
/// gradient aborts the step before anything is modified.
inline double clip_and_step(OptimizerState& opt, Seq2SeqModel& params, Gradients grads) {
  grads.for_each([&](const std::string& name, const double* d, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i)
      if (!std::isfinite(d[i])) throw numerical_error("NonFiniteGradient", name);
  });
  if (opt.first_moment.encoder.size() != params.encoder.size()) {
    opt.first_moment = params.zeros_like();
    opt.second_moment = params.zeros_like();
  }
  const double norm = clip_by_global_norm(grads, opt.clipnorm);
  ++opt.step;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));

  // Walk the four structures in lockstep by collecting raw block pointers.
  std::vector<double*> p, m, v;
  std::vector<const double*> g;
  std::vector<Eigen::Index> sizes;
  params.for_each([&](const std::string&, double* d, Eigen::Index n) {
    p.push_back(d);
    sizes.push_back(n);
  });
  opt.first_moment.for_each([&](const std::string&, double* d, Eigen::Index) { m.push_back(d); });
  opt.second_moment.for_each([&](const std::string&, double* d, Eigen::Index) { v.push_back(d); });
  grads.for_each([&](const std::string&, const double* d, Eigen::Index) { g.push_back(d); });
  for (std::size_t b = 0; b < p.size(); ++b) {
    for (Eigen::Index i = 0; i < sizes[b]; ++i) {
      const double gi = g[b][i];
      m[b][i] = opt.beta1 * m[b][i] + (1.0 - opt.beta1) * gi;
      v[b][i] = opt.beta2 * v[b][i] + (1.0 - opt.beta2) * gi * gi;
      const double m_hat = m[b][i] / bc1;
      const double v_hat = v[b][i] / bc2;
      p[b][i] -= opt.lr * m_hat / (std::sqrt(v_hat) + opt.epsilon);
    }
  }
  return norm;
}

}  // namespace reentry::nn
