#pragma once

// Adam refinement of a linear 2-RNN on the analytic gradients.

#include "tt2rnn/dataset.hpp"
#include "tt2rnn/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace tt2rnn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment accumulators shaped like the model parameters.
struct AdamState {
  AdamConfig cfg;
  std::size_t step = 0;
  Vector m_h0, v_h0;
  DenseTensor m_A, v_A;
  Matrix m_Omega, v_Omega;

  static AdamState for_model(const Linear2RNN& m, AdamConfig cfg = {}) {
    AdamState s;
    s.cfg = cfg;
    const auto n = static_cast<Eigen::Index>(m.n());
    s.m_h0 = s.v_h0 = Vector::Zero(n);
    s.m_A = s.v_A = DenseTensor(m.A.shape());
    s.m_Omega = s.v_Omega = Matrix::Zero(m.Omega.rows(), m.Omega.cols());
    return s;
  }
};

namespace detail {

template <class P, class G, class M>
void adam_update(P&& param, const G& grad, M&& mom, M&& var, const AdamConfig& c, double bc1,
                 double bc2) {
  mom = c.beta1 * mom + (1.0 - c.beta1) * grad;
  var = c.beta2 * var + (1.0 - c.beta2) * grad.cwiseAbs2();
  param -= (c.lr * (mom / bc1).array() / ((var / bc2).array().sqrt() + c.eps)).matrix();
}

}  // namespace detail

/// One bias-corrected Adam update. Increments state.step.
inline Linear2RNN adam_step(const Linear2RNN& m, const RnnGradients& g, AdamState& state) {
  if (g.h0.size() != m.h0.size() || g.A.shape() != m.A.shape() ||
      g.Omega.rows() != m.Omega.rows() || g.Omega.cols() != m.Omega.cols() ||
      state.m_h0.size() != m.h0.size() || state.m_A.shape() != m.A.shape()) {
    throw std::invalid_argument("adam_step: gradient or state shape does not match the model");
  }
  ++state.step;
  const auto& c = state.cfg;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  Linear2RNN out = m;
  detail::adam_update(out.h0, g.h0, state.m_h0, state.v_h0, c, bc1, bc2);
  detail::adam_update(out.Omega, g.Omega, state.m_Omega, state.v_Omega, c, bc1, bc2);
  {
    auto pa = out.A.as_vector();
    auto ma = state.m_A.as_vector();
    auto va = state.v_A.as_vector();
    detail::adam_update(pa, std::as_const(g.A).as_vector(), ma, va, c, bc1, bc2);
  }
  return out;
}

struct RefineConfig {
  std::size_t epochs = 100;
  std::size_t minibatch = 64;
  AdamConfig adam;
  std::uint64_t seed = 0;
  std::size_t max_retries = 3;
};

struct RefineResult {
  Linear2RNN model;
  double initial_loss = 0.0;
  double best_loss = 0.0;
  std::size_t best_epoch = 0;  // 0 when the initial model was kept
  std::size_t epochs_run = 0;
  std::size_t retries = 0;
  std::vector<double> epoch_losses;
};

namespace detail {

inline bool finite(const Linear2RNN& m) {
  return m.h0.allFinite() && m.Omega.allFinite() && m.A.as_vector().allFinite();
}

}  // namespace detail

/// Minibatch Adam on rnn_loss over all available outputs. Returns the
/// iterate with the lowest full training loss seen, so the result is never
/// worse than m0. A non-finite loss aborts the epoch, halves the learning
/// rate and restarts from the best model, at most max_retries times.
inline RefineResult sgd_refine(const Linear2RNN& m0, std::span<const SequenceExample> train,
                               const RefineConfig& cfg = {}) {
  m0.validate();
  if (train.empty()) throw std::invalid_argument("sgd_refine: empty training set");
  if (cfg.minibatch < 1) throw std::invalid_argument("sgd_refine: minibatch must be >= 1");
  RefineResult res;
  res.model = m0;
  res.initial_loss = res.best_loss = rnn_loss(m0, train);
  if (!std::isfinite(res.best_loss)) return res;

  std::mt19937_64 rng(cfg.seed);
  AdamConfig adam = cfg.adam;
  Linear2RNN cur = m0;
  AdamState state = AdamState::for_model(cur, adam);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<SequenceExample> batch;
  batch.reserve(cfg.minibatch);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    bool blew_up = false;
    for (std::size_t start = 0; start < order.size(); start += cfg.minibatch) {
      const std::size_t stop = std::min(order.size(), start + cfg.minibatch);
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) batch.push_back(train[order[i]]);
      const RnnGradients g = rnn_gradients(cur, batch);
      if (!std::isfinite(g.loss)) {
        blew_up = true;
        break;
      }
      cur = adam_step(cur, g, state);
      if (!detail::finite(cur)) {
        blew_up = true;
        break;
      }
    }
    res.epochs_run = epoch;
    const double loss = blew_up ? std::numeric_limits<double>::quiet_NaN() : rnn_loss(cur, train);
    res.epoch_losses.push_back(loss);
    if (blew_up || !std::isfinite(loss)) {
      if (res.retries >= cfg.max_retries) break;
      ++res.retries;
      adam.lr *= 0.5;
      cur = res.model;
      state = AdamState::for_model(cur, adam);
      continue;
    }
    if (loss < res.best_loss) {
      res.best_loss = loss;
      res.best_epoch = epoch;
      res.model = cur;
    }
  }
  return res;
}

inline RefineResult sgd_refine(const Linear2RNN& m0, const SequenceDataset& train,
                               const RefineConfig& cfg = {}) {
  return sgd_refine(m0, std::span<const SequenceExample>(train.examples()), cfg);
}

}  // namespace tt2rnn
