// SPDX-License-Identifier: Apache-2.0
#pragma once

// Gated recurrent unit with an explicit backward pass.
//
//   z  = sigmoid(Wz x + Vz h + bz)          update gate
//   r  = sigmoid(Wr x + Vr h + br)          reset gate
//   c~ = tanh(Wc x + Vc (r * h) + bc)       candidate
//   h' = (1 - z) * c~ + z * h
//
// The memory cell is also the hidden state and the output.

#include <cmath>
#include <string>

#include <Eigen/Dense>
#include <Eigen/QR>

#include "reentry/error.hpp"
#include "reentry/random.hpp"

namespace reentry::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct GruLayerParams {
  Matrix in_update, in_reset, in_cand;     // [hidden x input]
  Matrix rec_update, rec_reset, rec_cand;  // [hidden x hidden]
  Vector bias_update, bias_reset, bias_cand;

  static GruLayerParams zeros(Eigen::Index hidden, Eigen::Index input) {
    GruLayerParams p;
    for (Matrix* m : {&p.in_update, &p.in_reset, &p.in_cand}) m->setZero(hidden, input);
    for (Matrix* m : {&p.rec_update, &p.rec_reset, &p.rec_cand}) m->setZero(hidden, hidden);
    for (Vector* b : {&p.bias_update, &p.bias_reset, &p.bias_cand}) b->setZero(hidden);
    return p;
  }

  /// Keras-style initialization: Glorot-uniform input kernels over the
  /// stacked [input x 3 hidden] kernel, orthogonal recurrent kernels over the
  /// stacked [hidden x 3 hidden] kernel, zero biases.
  static GruLayerParams random(Eigen::Index hidden, Eigen::Index input, Rng& rng) {
    GruLayerParams p = zeros(hidden, input);
    const double limit = std::sqrt(6.0 / static_cast<double>(input + 3 * hidden));
    for (Matrix* m : {&p.in_update, &p.in_reset, &p.in_cand})
      for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = rng.uniform(-limit, limit);
    Matrix g(3 * hidden, hidden);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(3 * hidden, hidden);
    const Matrix r = qr.matrixQR().topRows(hidden).triangularView<Eigen::Upper>();
    for (Eigen::Index c = 0; c < hidden; ++c)
      if (r(c, c) < 0) q.col(c) = -q.col(c);
    p.rec_update = q.block(0, 0, hidden, hidden);
    p.rec_reset = q.block(hidden, 0, hidden, hidden);
    p.rec_cand = q.block(2 * hidden, 0, hidden, hidden);
    return p;
  }

  Eigen::Index hidden_size() const { return in_update.rows(); }
  Eigen::Index input_size() const { return in_update.cols(); }

  /// Visits every parameter block as (name, data, size) in a fixed order.
  /// Matrices are visited in Eigen's column-major storage order.
  template <typename F>
  void for_each(F&& f) {
    f("in_update", in_update.data(), in_update.size());
    f("in_reset", in_reset.data(), in_reset.size());
    f("in_cand", in_cand.data(), in_cand.size());
    f("rec_update", rec_update.data(), rec_update.size());
    f("rec_reset", rec_reset.data(), rec_reset.size());
    f("rec_cand", rec_cand.data(), rec_cand.size());
    f("bias_update", bias_update.data(), bias_update.size());
    f("bias_reset", bias_reset.data(), bias_reset.size());
    f("bias_cand", bias_cand.data(), bias_cand.size());
  }
  template <typename F>
  void for_each(F&& f) const {
    const_cast<GruLayerParams*>(this)->for_each(
        [&](const std::string& n, double* d, Eigen::Index s) { f(n, static_cast<const double*>(d), s); });
  }
};

/// Intermediate values of one step needed for the backward pass.
struct GruCache {
  Vector x, h_prev, update, reset, cand, h;
};

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

inline Vector gru_step(const GruLayerParams& p, const Vector& x, const Vector& h_prev, GruCache* cache = nullptr) {
  if (x.size() != p.input_size() || h_prev.size() != p.hidden_size())
    throw config_error("ShapeMismatch", "gru_step: input " + std::to_string(x.size()) + "/" +
                                            std::to_string(p.input_size()) + ", state " +
                                            std::to_string(h_prev.size()) + "/" + std::to_string(p.hidden_size()));
  Vector z = (p.in_update * x + p.rec_update * h_prev + p.bias_update).unaryExpr(&sigmoid);
  Vector r = (p.in_reset * x + p.rec_reset * h_prev + p.bias_reset).unaryExpr(&sigmoid);
  Vector c = (p.in_cand * x + p.rec_cand * r.cwiseProduct(h_prev) + p.bias_cand).array().tanh().matrix();
  Vector h = (1.0 - z.array()).matrix().cwiseProduct(c) + z.cwiseProduct(h_prev);
  if (cache) {
    cache->x = x;
    cache->h_prev = h_prev;
    cache->update = std::move(z);
    cache->reset = std::move(r);
    cache->cand = std::move(c);
    cache->h = h;
  }
  return h;
}

/// Accumulates parameter gradients into `grad` and returns the gradients with
/// respect to the step input (`dx`) and the previous state (`dh_prev`).
inline void gru_step_backward(const GruLayerParams& p, const GruCache& c, const Vector& dh, GruLayerParams& grad,
                              Vector& dx, Vector& dh_prev) {
  const Vector& z = c.update;
  const Vector& r = c.reset;
  const Vector& cand = c.cand;
  const Vector& hp = c.h_prev;

  dh_prev = dh.cwiseProduct(z);
  const Vector dcand = dh.cwiseProduct((1.0 - z.array()).matrix());
  const Vector dz = dh.cwiseProduct(hp - cand);

  const Vector dpre_c = dcand.cwiseProduct((1.0 - cand.array().square()).matrix());
  const Vector rh = r.cwiseProduct(hp);
  grad.in_cand.noalias() += dpre_c * c.x.transpose();
  grad.rec_cand.noalias() += dpre_c * rh.transpose();
  grad.bias_cand += dpre_c;
  dx.noalias() = p.in_cand.transpose() * dpre_c;
  const Vector drh = p.rec_cand.transpose() * dpre_c;
  const Vector dr = drh.cwiseProduct(hp);
  dh_prev += drh.cwiseProduct(r);

  const Vector dpre_z = dz.cwiseProduct(z.cwiseProduct((1.0 - z.array()).matrix()));
  grad.in_update.noalias() += dpre_z * c.x.transpose();
  grad.rec_update.noalias() += dpre_z * hp.transpose();
  grad.bias_update += dpre_z;
  dx.noalias() += p.in_update.transpose() * dpre_z;
  dh_prev.noalias() += p.rec_update.transpose() * dpre_z;

  const Vector dpre_r = dr.cwiseProduct(r.cwiseProduct((1.0 - r.array()).matrix()));
  grad.in_reset.noalias() += dpre_r * c.x.transpose();
  grad.rec_reset.noalias() += dpre_r * hp.transpose();
  grad.bias_reset += dpre_r;
  dx.noalias() += p.in_reset.transpose() * dpre_r;
  dh_prev.noalias() += p.rec_reset.transpose() * dpre_r;
}

}  // namespace reentry::nn
