#pragma once

// Linear second-order RNNs and vector-valued weighted automata.
//
// State update: h_t[j] = sum_{i,k} A[i, k, j] h_{t-1}[i] x_t[k], i.e.
// h_t = <A>_{2,1}^T kron(h_{t-1}, x_t), with A of shape (n, d, n) indexed
// (previous state, input, next state). Output: y = Omega h_l.

#include "tt2rnn/dataset.hpp"
#include "tt2rnn/linalg.hpp"
#include "tt2rnn/tensor.hpp"
#include "tt2rnn/tensor_train.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tt2rnn {

struct Linear2RNN {
  Vector h0;
  DenseTensor A;
  Matrix Omega;

  Linear2RNN() = default;
  Linear2RNN(Vector h0_, DenseTensor A_, Matrix Omega_)
      : h0(std::move(h0_)), A(std::move(A_)), Omega(std::move(Omega_)) {
    validate();
  }

  static Linear2RNN zeros(std::size_t n, std::size_t d, std::size_t p) {
    return {Vector::Zero(static_cast<Eigen::Index>(n)), DenseTensor({n, d, n}),
            Matrix::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(n))};
  }

  std::size_t n() const { return static_cast<std::size_t>(h0.size()); }
  std::size_t d() const { return A.shape()[1]; }
  std::size_t p() const { return static_cast<std::size_t>(Omega.rows()); }

  /// <A>_{2,1}: (n d) x n view with row index i * d + k.
  Eigen::Map<const RowMatrix> transition_matrix() const {
    return A.as_matrix(n() * d(), n());
  }

  void validate() const {
    const auto nn = static_cast<std::size_t>(h0.size());
    if (nn == 0) throw std::invalid_argument("Linear2RNN: empty state");
    if (A.order() != 3 || A.shape()[0] != nn || A.shape()[2] != nn) {
      throw std::invalid_argument("Linear2RNN: A must have shape (n, d, n), got " +
                                  shape_string(A.shape()) + " with n = " +
                                  std::to_string(nn));
    }
    if (static_cast<std::size_t>(Omega.cols()) != nn || Omega.rows() == 0) {
      throw std::invalid_argument("Linear2RNN: Omega must be p x n");
    }
  }
};

struct VvWFA {
  Vector alpha;
  std::vector<Matrix> transitions;
  Matrix Omega;

  std::size_t n() const { return static_cast<std::size_t>(alpha.size()); }
  std::size_t d() const { return transitions.size(); }
  std::size_t p() const { return static_cast<std::size_t>(Omega.rows()); }

  void validate() const {
    const auto nn = alpha.size();
    if (nn == 0) throw std::invalid_argument("VvWFA: empty state");
    if (transitions.empty()) throw std::invalid_argument("VvWFA: empty alphabet");
    for (const auto& t : transitions) {
      if (t.rows() != nn || t.cols() != nn) {
        throw std::invalid_argument("VvWFA: transition matrices must be n x n");
      }
    }
    if (Omega.cols() != nn) throw std::invalid_argument("VvWFA: Omega must be p x n");
  }
};

/// One step of the recurrence.
inline Vector rnn_step(const Linear2RNN& m, const Vector& h, const Vector& x) {
  if (static_cast<std::size_t>(x.size()) != m.d()) {
    throw std::invalid_argument("rnn_step: input has dimension " + std::to_string(x.size()) +
                                ", model expects " + std::to_string(m.d()));
  }
  const auto n = static_cast<Eigen::Index>(m.n());
  const auto d = static_cast<Eigen::Index>(m.d());
  const auto a = m.transition_matrix();
  // h_new = sum_i h[i] * (x^T A[i, :, :])
  Vector out = Vector::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (h[i] == 0.0) continue;
    out.noalias() += h[i] * (a.middleRows(i * d, d).transpose() * x);
  }
  return out;
}

/// States h_0, ..., h_l.
inline std::vector<Vector> rnn_states(const Linear2RNN& m, std::span<const Vector> xs) {
  std::vector<Vector> hs;
  hs.reserve(xs.size() + 1);
  hs.push_back(m.h0);
  for (const auto& x : xs) hs.push_back(rnn_step(m, hs.back(), x));
  return hs;
}

inline Vector rnn_evaluate(const Linear2RNN& m, std::span<const Vector> xs) {
  Vector h = m.h0;
  for (const auto& x : xs) h = rnn_step(m, h, x);
  return m.Omega * h;
}

/// Outputs after each prefix: entry t is the output after x[0..t].
inline std::vector<Vector> rnn_evaluate_steps(const Linear2RNN& m,
                                              std::span<const Vector> xs) {
  std::vector<Vector> ys;
  ys.reserve(xs.size());
  Vector h = m.h0;
  for (const auto& x : xs) {
    h = rnn_step(m, h, x);
    ys.push_back(m.Omega * h);
  }
  return ys;
}

inline Vector wfa_evaluate(const VvWFA& a, std::span<const std::size_t> word) {
  Vector state = a.alpha;
  for (auto s : word) {
    if (s >= a.d()) {
      throw std::invalid_argument("wfa_evaluate: symbol " + std::to_string(s) +
                                  " outside alphabet of size " + std::to_string(a.d()));
    }
    state = a.transitions[s].transpose() * state;
  }
  return a.Omega * state;
}

inline Vector wfa_evaluate(const VvWFA& a, std::initializer_list<std::size_t> word) {
  return wfa_evaluate(a, std::span<const std::size_t>(word.begin(), word.size()));
}

inline Linear2RNN rnn_from_wfa(const VvWFA& a) {
  a.validate();
  const std::size_t n = a.n(), d = a.d();
  DenseTensor A({n, d, n});
  for (std::size_t s = 0; s < d; ++s)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        A.at({i, s, j}) = a.transitions[s](static_cast<Eigen::Index>(i),
                                           static_cast<Eigen::Index>(j));
  return {a.alpha, std::move(A), a.Omega};
}

inline VvWFA wfa_from_rnn(const Linear2RNN& m) {
  m.validate();
  const std::size_t n = m.n(), d = m.d();
  VvWFA a;
  a.alpha = m.h0;
  a.Omega = m.Omega;
  a.transitions.assign(d, Matrix::Zero(static_cast<Eigen::Index>(n),
                                       static_cast<Eigen::Index>(n)));
  for (std::size_t s = 0; s < d; ++s)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        a.transitions[s](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            m.A.at({i, s, j});
  return a;
}

/// Equivalent model in the basis given by P: (P^{-T} h0, A x1 P x3 P^{-T}, Omega P^T).
inline Linear2RNN change_of_basis(const Linear2RNN& m, const Matrix& P,
                                  double min_rcond = 1e-12) {
  const auto n = static_cast<Eigen::Index>(m.n());
  if (P.rows() != n || P.cols() != n) {
    throw std::invalid_argument("change_of_basis: P must be n x n");
  }
  const Vector s = singular_values(P);
  if (s.size() == 0 || s[0] == 0.0 || s[s.size() - 1] / s[0] < min_rcond) {
    throw std::invalid_argument("change_of_basis: P is singular or ill-conditioned");
  }
  const Matrix p_inv_t = P.inverse().transpose();
  DenseTensor A = mode_matrix_product(mode_matrix_product(m.A, P, 0), p_inv_t, 2);
  return {p_inv_t * m.h0, std::move(A), m.Omega * P.transpose()};
}

/// H^(l) = TT[A .1 h0, A, ..., A, Omega^T] of shape (d, ..., d, p).
inline TTVector hankel_of_rnn(const Linear2RNN& m, std::size_t l) {
  m.validate();
  const std::size_t n = m.n(), d = m.d(), p = m.p();
  if (l == 0) {
    const Vector y = m.Omega * m.h0;
    return TTVector({DenseTensor({1, p, 1}, std::vector<double>(y.data(), y.data() + y.size()))});
  }
  std::vector<DenseTensor> cores;
  cores.reserve(l + 1);
  DenseTensor first({1, d, n});
  {
    const auto a = m.transition_matrix();
    RowMatrix acc = RowMatrix::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      acc += m.h0[static_cast<Eigen::Index>(i)] *
             a.middleRows(static_cast<Eigen::Index>(i * d), static_cast<Eigen::Index>(d));
    }
    first.as_matrix(d, n) = acc;
  }
  cores.push_back(std::move(first));
  for (std::size_t k = 1; k < l; ++k) cores.push_back(m.A);
  DenseTensor last({n, p, 1});
  last.as_matrix(n, p) = m.Omega.transpose();
  cores.push_back(std::move(last));
  return TTVector(std::move(cores));
}

inline DenseTensor hankel_dense(const Linear2RNN& m, std::size_t l) {
  return tt_to_dense(hankel_of_rnn(m, l));
}

/// Model with i.i.d. N(0, scale^2) entries.
template <class Rng>
Linear2RNN random_rnn(std::size_t n, std::size_t d, std::size_t p, double scale, Rng& rng) {
  if (n == 0 || d == 0 || p == 0) throw std::invalid_argument("random_rnn: zero dimension");
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&] { return scale * normal(rng); };
  Vector h0(static_cast<Eigen::Index>(n));
  for (auto& v : h0) v = draw();
  DenseTensor A({n, d, n});
  for (auto& v : A.data()) v = draw();
  Matrix Omega(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < Omega.size(); ++i) Omega.data()[i] = draw();
  return {std::move(h0), std::move(A), std::move(Omega)};
}

inline Linear2RNN random_rnn(std::size_t n, std::size_t d, std::size_t p, double scale,
                             std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return random_rnn(n, d, p, scale, rng);
}

/// Loss: mean of squared errors over examples, supervised steps and output
/// coordinates. Examples with per-step targets are supervised at every step,
/// others only at the end.
struct RnnGradients {
  Vector h0;
  DenseTensor A;
  Matrix Omega;
  double loss = 0.0;
};

namespace detail {

inline std::size_t supervised_count(std::span<const SequenceExample> batch, std::size_t p) {
  std::size_t c = 0;
  for (const auto& ex : batch) c += ex.has_step_targets() ? ex.y_steps.size() : 1;
  return c * p;
}

}  // namespace detail

inline double rnn_loss(const Linear2RNN& m, std::span<const SequenceExample> batch) {
  if (batch.empty()) return 0.0;
  double sse = 0.0;
  for (const auto& ex : batch) {
    if (ex.has_step_targets()) {
      const auto ys = rnn_evaluate_steps(m, ex.x);
      for (std::size_t t = 0; t < ys.size(); ++t) sse += (ys[t] - ex.y_steps[t]).squaredNorm();
    } else {
      sse += (rnn_evaluate(m, ex.x) - ex.y).squaredNorm();
    }
  }
  return sse / static_cast<double>(detail::supervised_count(batch, m.p()));
}

/// Exact gradient of rnn_loss by backpropagation through time.
inline RnnGradients rnn_gradients(const Linear2RNN& m, std::span<const SequenceExample> batch) {
  m.validate();
  const std::size_t n = m.n(), d = m.d(), p = m.p();
  const auto ni = static_cast<Eigen::Index>(n);
  const auto di = static_cast<Eigen::Index>(d);
  RnnGradients g;
  g.h0 = Vector::Zero(ni);
  g.A = DenseTensor({n, d, n});
  g.Omega = Matrix::Zero(static_cast<Eigen::Index>(p), ni);
  if (batch.empty()) return g;
  const double scale = 2.0 / static_cast<double>(detail::supervised_count(batch, p));
  auto ga = g.A.as_matrix(n * d, n);
  const auto a = m.transition_matrix();
  double sse = 0.0;
  for (const auto& ex : batch) {
    if (ex.y.size() != static_cast<Eigen::Index>(p)) {
      throw std::invalid_argument("rnn_gradients: target dimension mismatch");
    }
    const auto hs = rnn_states(m, ex.x);
    const std::size_t T = ex.x.size();
    Vector delta = Vector::Zero(ni);
    for (std::size_t t = T + 1; t-- > 0;) {
      const bool supervised = ex.has_step_targets() ? t >= 1 : t == T;
      if (supervised) {
        const Vector& target = ex.has_step_targets() ? ex.y_steps[t - 1] : ex.y;
        const Vector r = m.Omega * hs[t] - target;
        sse += r.squaredNorm();
        g.Omega.noalias() += scale * r * hs[t].transpose();
        delta.noalias() += scale * m.Omega.transpose() * r;
      }
      if (t == 0) break;
      const Vector& x = ex.x[t - 1];
      const Vector& hp = hs[t - 1];
      Vector back = Vector::Zero(ni);
      for (Eigen::Index i = 0; i < ni; ++i) {
        auto block = a.middleRows(i * di, di);  // A[i, :, :], d x n
        // dA[i, k, j] += hp[i] x[k] delta[j]
        ga.middleRows(i * di, di).noalias() += hp[i] * x * delta.transpose();
        back[i] = x.dot(block * delta);
      }
      delta = std::move(back);
    }
    g.h0 += delta;
  }
  g.loss = sse / static_cast<double>(detail::supervised_count(batch, p));
  return g;
}

inline std::vector<Vector> one_hot_sequence(std::span<const std::size_t> word, std::size_t d) {
  std::vector<Vector> xs;
  xs.reserve(word.size());
  for (auto s : word) xs.push_back(basis_vector(d, s));
  return xs;
}

}  // namespace tt2rnn
