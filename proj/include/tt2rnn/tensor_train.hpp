#pragma once

// Tensor-train vectors. Every core is stored as an order-3 tensor of shape
// (r_{k-1}, d_k, r_k) with boundary ranks r_0 = r_p = 1, so the left
// unfolding (r_{k-1} d_k, r_k) and right unfolding (r_{k-1}, d_k r_k) are
// both free views under the row-major layout.

#include "tt2rnn/linalg.hpp"
#include "tt2rnn/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tt2rnn {

class TTVector {
 public:
  TTVector() = default;

  explicit TTVector(std::vector<DenseTensor> cores) : cores_(std::move(cores)) {
    validate();
  }

  /// All-zero TT of the given mode sizes with every rank equal to one.
  static TTVector zeros(const Shape& dims) {
    std::vector<DenseTensor> cores;
    cores.reserve(dims.size());
    for (auto d : dims) cores.emplace_back(Shape{1, d, 1});
    return TTVector(std::move(cores));
  }

  /// TT with random Gaussian cores of uniform interior rank.
  template <class Rng>
  static TTVector random(const Shape& dims, std::size_t rank, Rng& rng,
                         double stdev = 1.0) {
    std::normal_distribution<double> normal(0.0, stdev);
    std::vector<DenseTensor> cores;
    for (std::size_t k = 0; k < dims.size(); ++k) {
      const std::size_t rl = k == 0 ? 1 : rank;
      const std::size_t rr = k + 1 == dims.size() ? 1 : rank;
      DenseTensor c({rl, dims[k], rr});
      for (auto& v : c.data()) v = normal(rng);
      cores.push_back(std::move(c));
    }
    return TTVector(std::move(cores));
  }

  std::size_t order() const { return cores_.size(); }
  const std::vector<DenseTensor>& cores() const { return cores_; }
  std::vector<DenseTensor>& cores() { return cores_; }
  const DenseTensor& core(std::size_t k) const { return cores_.at(k); }
  DenseTensor& core(std::size_t k) { return cores_.at(k); }

  Shape dims() const {
    Shape s;
    for (const auto& c : cores_) s.push_back(c.shape()[1]);
    return s;
  }

  /// Interior ranks (r_1, ..., r_{p-1}).
  std::vector<std::size_t> ranks() const {
    std::vector<std::size_t> r;
    for (std::size_t k = 0; k + 1 < cores_.size(); ++k) {
      r.push_back(cores_[k].shape()[2]);
    }
    return r;
  }

  std::size_t max_rank() const {
    std::size_t m = 1;
    for (auto r : ranks()) m = std::max(m, r);
    return m;
  }

  void validate() const {
    if (cores_.empty()) throw std::invalid_argument("TTVector: no cores");
    for (std::size_t k = 0; k < cores_.size(); ++k) {
      if (cores_[k].order() != 3) {
        throw std::invalid_argument("TTVector: core " + std::to_string(k) +
                                    " is not order 3");
      }
    }
    if (cores_.front().shape()[0] != 1 || cores_.back().shape()[2] != 1) {
      throw std::invalid_argument("TTVector: boundary ranks must be 1");
    }
    for (std::size_t k = 0; k + 1 < cores_.size(); ++k) {
      if (cores_[k].shape()[2] != cores_[k + 1].shape()[0]) {
        throw std::invalid_argument("TTVector: rank mismatch between cores " +
                                    std::to_string(k) + " and " +
                                    std::to_string(k + 1));
      }
    }
  }

 private:
  std::vector<DenseTensor> cores_;
};

namespace detail {

inline Eigen::Map<const RowMatrix> left_unfolding(const DenseTensor& c) {
  return c.as_matrix(c.shape()[0] * c.shape()[1], c.shape()[2]);
}

inline Eigen::Map<const RowMatrix> right_unfolding(const DenseTensor& c) {
  return c.as_matrix(c.shape()[0], c.shape()[1] * c.shape()[2]);
}

using StridedSlice =
    Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<Eigen::Dynamic>>;

/// Matrix slice G[:, i, :] of a core, shape (r_{k-1}, r_k).
inline StridedSlice core_slice(const DenseTensor& c, std::size_t i) {
  const auto rl = static_cast<Eigen::Index>(c.shape()[0]);
  const auto d = static_cast<Eigen::Index>(c.shape()[1]);
  const auto rr = static_cast<Eigen::Index>(c.shape()[2]);
  return StridedSlice(c.data().data() + static_cast<Eigen::Index>(i) * rr, rl,
                      rr, Eigen::OuterStride<Eigen::Dynamic>(d * rr));
}

inline DenseTensor core_from_left(const Matrix& m, std::size_t rl,
                                  std::size_t d) {
  DenseTensor c({rl, d, static_cast<std::size_t>(m.cols())});
  c.as_matrix(rl * d, static_cast<std::size_t>(m.cols())) = m;
  return c;
}

inline DenseTensor core_from_right(const Matrix& m, std::size_t d,
                                   std::size_t rr) {
  DenseTensor c({static_cast<std::size_t>(m.rows()), d, rr});
  c.as_matrix(static_cast<std::size_t>(m.rows()), d * rr) = m;
  return c;
}

inline void require_same_dims(const TTVector& a, const TTVector& b,
                              const char* op) {
  if (a.dims() != b.dims()) {
    throw std::invalid_argument(std::string(op) + ": mode sizes differ, " +
                                shape_string(a.dims()) + " vs " +
                                shape_string(b.dims()));
  }
}

/// Keep min(max_rank, #s > tol * s_max), at least one.
inline std::size_t truncation_rank(const Vector& s, std::size_t max_rank,
                                   double tol) {
  std::size_t keep = numerical_rank(s, tol);
  keep = std::min(keep, max_rank);
  keep = std::min<std::size_t>(keep, static_cast<std::size_t>(s.size()));
  return std::max<std::size_t>(keep, 1);
}

}  // namespace detail

inline DenseTensor tt_to_dense(const TTVector& tt) {
  tt.validate();
  const auto& first = tt.core(0);
  Matrix w = detail::left_unfolding(first);
  std::size_t lead = first.shape()[1];
  for (std::size_t k = 1; k < tt.order(); ++k) {
    const auto& c = tt.core(k);
    Matrix next = w * detail::right_unfolding(c);
    lead *= c.shape()[1];
    // (lead_prev, d_k r_k) read row-major is (lead_prev d_k, r_k).
    RowMatrix reshaped = next;
    w = Eigen::Map<RowMatrix>(reshaped.data(), static_cast<Eigen::Index>(lead),
                              static_cast<Eigen::Index>(c.shape()[2]));
  }
  return DenseTensor(tt.dims(),
                     std::vector<double>(w.data(), w.data() + w.size()));
}

/// Sequential-SVD compression with ranks min(max_rank, #s > tol * s_max).
inline TTVector tt_svd(const DenseTensor& t, std::size_t max_rank,
                       double tol = 1e-12) {
  if (t.order() < 1) throw std::invalid_argument("tt_svd: order-0 tensor");
  if (max_rank < 1) throw std::invalid_argument("tt_svd: max_rank must be >= 1");
  const Shape& dims = t.shape();
  std::vector<DenseTensor> cores;
  cores.reserve(dims.size());
  RowMatrix c = t.as_matrix(dims[0], t.size() / dims[0]);
  std::size_t rl = 1;
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    const ThinSvd svd = thin_svd(c);
    const std::size_t r = detail::truncation_rank(svd.s, max_rank, tol);
    const auto ri = static_cast<Eigen::Index>(r);
    cores.push_back(detail::core_from_left(svd.U.leftCols(ri), rl, dims[k]));
    RowMatrix rest = svd.s.head(ri).asDiagonal() * svd.V.leftCols(ri).transpose();
    const std::size_t cols = static_cast<std::size_t>(rest.size()) / (r * dims[k + 1]);
    c = Eigen::Map<RowMatrix>(rest.data(), static_cast<Eigen::Index>(r * dims[k + 1]),
                              static_cast<Eigen::Index>(cols));
    rl = r;
  }
  cores.push_back(detail::core_from_left(c, rl, dims.back()));
  return TTVector(std::move(cores));
}

/// Makes cores [begin, end) left-orthogonal, pushing the remainder into core
/// `end` (which must exist).
inline void tt_left_orthogonalize(TTVector& tt, std::size_t begin, std::size_t end) {
  for (std::size_t k = begin; k < end; ++k) {
    auto& c = tt.core(k);
    const std::size_t rl = c.shape()[0];
    const std::size_t d = c.shape()[1];
    const ThinQr qr = thin_qr(Matrix(detail::left_unfolding(c)));
    c = detail::core_from_left(qr.Q, rl, d);
    auto& nxt = tt.core(k + 1);
    const std::size_t nd = nxt.shape()[1];
    const std::size_t nr = nxt.shape()[2];
    Matrix merged = qr.R * detail::right_unfolding(nxt);
    nxt = detail::core_from_right(merged, nd, nr);
  }
}

/// Makes cores (end, begin] right-orthogonal for begin > end, walking from
/// `begin` down to `end + 1` and pushing the remainder into core `end`.
inline void tt_right_orthogonalize(TTVector& tt, std::size_t begin, std::size_t end) {
  for (std::size_t k = begin; k > end; --k) {
    auto& c = tt.core(k);
    const std::size_t d = c.shape()[1];
    const std::size_t rr = c.shape()[2];
    const ThinQr qr = thin_qr(Matrix(detail::right_unfolding(c).transpose()));
    c = detail::core_from_right(qr.Q.transpose(), d, rr);
    auto& prv = tt.core(k - 1);
    const std::size_t pl = prv.shape()[0];
    const std::size_t pd = prv.shape()[1];
    Matrix merged = detail::left_unfolding(prv) * qr.R.transpose();
    prv = detail::core_from_left(merged, pl, pd);
  }
}

/// Right-to-left orthogonalization followed by left-to-right truncated SVD.
inline TTVector tt_round(const TTVector& tt, std::size_t max_rank,
                         double tol = 1e-12) {
  if (max_rank < 1) throw std::invalid_argument("tt_round: max_rank must be >= 1");
  TTVector out = tt;
  const std::size_t p = out.order();
  if (p == 1) return out;
  tt_right_orthogonalize(out, p - 1, 0);
  for (std::size_t k = 0; k + 1 < p; ++k) {
    auto& c = out.core(k);
    const std::size_t rl = c.shape()[0];
    const std::size_t d = c.shape()[1];
    const ThinSvd svd = thin_svd(Matrix(detail::left_unfolding(c)));
    const std::size_t r = detail::truncation_rank(svd.s, max_rank, tol);
    const auto ri = static_cast<Eigen::Index>(r);
    c = detail::core_from_left(svd.U.leftCols(ri), rl, d);
    auto& nxt = out.core(k + 1);
    const std::size_t nd = nxt.shape()[1];
    const std::size_t nr = nxt.shape()[2];
    Matrix carry = svd.s.head(ri).asDiagonal() * svd.V.leftCols(ri).transpose();
    nxt = detail::core_from_right(carry * detail::right_unfolding(nxt), nd, nr);
  }
  return out;
}

/// Exact sum with block-diagonal cores; ranks add.
inline TTVector tt_add(const TTVector& a, const TTVector& b) {
  detail::require_same_dims(a, b, "tt_add");
  const std::size_t p = a.order();
  if (p == 1) {
    return TTVector({a.core(0) + b.core(0)});
  }
  std::vector<DenseTensor> cores;
  cores.reserve(p);
  for (std::size_t k = 0; k < p; ++k) {
    const auto& ca = a.core(k);
    const auto& cb = b.core(k);
    const std::size_t d = ca.shape()[1];
    const std::size_t al = ca.shape()[0], ar = ca.shape()[2];
    const std::size_t bl = cb.shape()[0], br = cb.shape()[2];
    const bool first = k == 0;
    const bool last = k + 1 == p;
    const std::size_t rl = first ? 1 : al + bl;
    const std::size_t rr = last ? 1 : ar + br;
    DenseTensor c({rl, d, rr});
    const std::size_t b_row = first ? 0 : al;
    const std::size_t b_col = last ? 0 : ar;
    for (std::size_t i = 0; i < al; ++i)
      for (std::size_t j = 0; j < d; ++j)
        for (std::size_t r = 0; r < ar; ++r)
          c.at({i, j, r}) = ca.at({i, j, r});
    for (std::size_t i = 0; i < bl; ++i)
      for (std::size_t j = 0; j < d; ++j)
        for (std::size_t r = 0; r < br; ++r)
          c.at({b_row + i, j, b_col + r}) = cb.at({i, j, r});
    cores.push_back(std::move(c));
  }
  return TTVector(std::move(cores));
}

inline TTVector tt_scale(const TTVector& a, double c) {
  TTVector out = a;
  out.core(0) *= c;
  return out;
}

/// Contraction of cores [begin, end) of `a` and `b` over their shared modes,
/// starting from the (left-rank, left-rank) matrix `w`. Returns the
/// (right-rank of a, right-rank of b) matrix.
inline Matrix tt_contract_left(const TTVector& a, const TTVector& b,
                               std::size_t begin, std::size_t end, Matrix w) {
  for (std::size_t k = begin; k < end; ++k) {
    const auto& ca = a.core(k);
    const auto& cb = b.core(k);
    if (ca.shape()[1] != cb.shape()[1]) {
      throw std::invalid_argument("tt_contract_left: mode size mismatch");
    }
    Matrix next = Matrix::Zero(static_cast<Eigen::Index>(ca.shape()[2]),
                               static_cast<Eigen::Index>(cb.shape()[2]));
    for (std::size_t i = 0; i < ca.shape()[1]; ++i) {
      next.noalias() +=
          detail::core_slice(ca, i).transpose() * w * detail::core_slice(cb, i);
    }
    w = std::move(next);
  }
  return w;
}

/// Mirror of tt_contract_left: contracts cores [begin, end) from the right,
/// starting from the (right-rank, right-rank) matrix `w`.
inline Matrix tt_contract_right(const TTVector& a, const TTVector& b,
                                std::size_t begin, std::size_t end, Matrix w) {
  for (std::size_t k = end; k > begin; --k) {
    const auto& ca = a.core(k - 1);
    const auto& cb = b.core(k - 1);
    if (ca.shape()[1] != cb.shape()[1]) {
      throw std::invalid_argument("tt_contract_right: mode size mismatch");
    }
    Matrix next = Matrix::Zero(static_cast<Eigen::Index>(ca.shape()[0]),
                               static_cast<Eigen::Index>(cb.shape()[0]));
    for (std::size_t i = 0; i < ca.shape()[1]; ++i) {
      next.noalias() +=
          detail::core_slice(ca, i) * w * detail::core_slice(cb, i).transpose();
    }
    w = std::move(next);
  }
  return w;
}

inline double tt_dot(const TTVector& a, const TTVector& b) {
  detail::require_same_dims(a, b, "tt_dot");
  return tt_contract_left(a, b, 0, a.order(), Matrix::Ones(1, 1))(0, 0);
}

/// Frobenius norm, computed after left-orthogonalization for accuracy.
inline double tt_norm(const TTVector& a) {
  TTVector t = a;
  tt_left_orthogonalize(t, 0, t.order() - 1);
  return t.core(t.order() - 1).norm();
}

/// Design tensor of a minibatch as a TT of shape (M, d, ..., d): identity
/// first core, diagonal cores (C_k)[a, :, a] = x_k^(a), rank <= M.
inline TTVector tt_design_from_batch(
    std::span<const std::vector<Vector>> batch) {
  if (batch.empty()) throw std::invalid_argument("tt_design_from_batch: empty batch");
  const std::size_t m = batch.size();
  const std::size_t l = batch[0].size();
  if (l == 0) {
    throw std::invalid_argument("tt_design_from_batch: sequences must be non-empty");
  }
  const auto d = static_cast<std::size_t>(batch[0][0].size());
  for (const auto& seq : batch) {
    if (seq.size() != l) {
      throw std::invalid_argument("tt_design_from_batch: mixed sequence lengths");
    }
    for (const auto& x : seq) {
      if (static_cast<std::size_t>(x.size()) != d) {
        throw std::invalid_argument("tt_design_from_batch: mixed input dimensions");
      }
    }
  }
  std::vector<DenseTensor> cores;
  cores.reserve(l + 1);
  DenseTensor first({1, m, m});
  for (std::size_t a = 0; a < m; ++a) first.at({0, a, a}) = 1.0;
  cores.push_back(std::move(first));
  for (std::size_t k = 0; k < l; ++k) {
    const bool last = k + 1 == l;
    DenseTensor c({m, d, last ? 1 : m});
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t i = 0; i < d; ++i)
        c.at({a, i, last ? 0 : a}) = batch[a][k][static_cast<Eigen::Index>(i)];
    cores.push_back(std::move(c));
  }
  return TTVector(std::move(cores));
}

/// <X>_{1,l} <H>_{l,1} for a design TT X of shape (M, d, ..., d) and a
/// Hankel TT H of shape (d, ..., d, p). Returns an M x p matrix.
inline Matrix tt_design_apply(const TTVector& x, const TTVector& h) {
  const std::size_t l = x.order() - 1;
  if (h.order() != l + 1) {
    throw std::invalid_argument("tt_design_apply: design has " + std::to_string(l) +
                                " input modes, Hankel has " +
                                std::to_string(h.order() - 1));
  }
  for (std::size_t k = 0; k < l; ++k) {
    if (x.core(k + 1).shape()[1] != h.core(k).shape()[1]) {
      throw std::invalid_argument("tt_design_apply: input mode size mismatch");
    }
  }
  const std::size_t p = h.core(l).shape()[1];
  // v[a, b, o] with a the design rank and b the Hankel rank, stored as an
  // (a, b * p) row-major matrix.
  const auto& hl = h.core(l);
  std::size_t vb = hl.shape()[0];
  RowMatrix v = hl.as_matrix(vb, p);
  v.resize(1, static_cast<Eigen::Index>(vb * p));
  for (std::size_t k = l; k >= 1; --k) {
    const auto& cx = x.core(k);
    const auto& ch = h.core(k - 1);
    const std::size_t xa = cx.shape()[0];
    const std::size_t d = cx.shape()[1];
    const std::size_t hb = ch.shape()[0];
    // t[a', i, b, o] = sum_a X[a', i, a] v[a, b, o]
    RowMatrix t = detail::left_unfolding(cx) * v;
    // v'[a', b', o] = sum_{i, b} H[b', i, b] t[a', i, b, o]
    RowMatrix next(static_cast<Eigen::Index>(xa), static_cast<Eigen::Index>(hb * p));
    const auto hr = detail::right_unfolding(ch);
    for (std::size_t a = 0; a < xa; ++a) {
      Eigen::Map<const RowMatrix> ta(t.data() + a * d * vb * p,
                                     static_cast<Eigen::Index>(d * vb),
                                     static_cast<Eigen::Index>(p));
      Eigen::Map<RowMatrix> dst(next.data() + a * hb * p,
                                static_cast<Eigen::Index>(hb),
                                static_cast<Eigen::Index>(p));
      dst.noalias() = hr * ta;
    }
    v = std::move(next);
    vb = hb;
  }
  const auto& c0 = x.core(0);
  const std::size_t m = c0.shape()[1];
  Eigen::Map<const RowMatrix> first(c0.data().data(),
                                    static_cast<Eigen::Index>(m),
                                    static_cast<Eigen::Index>(c0.shape()[2]));
  return first * v;
}

/// TT of shape (d, ..., d, p) whose <.>_{l,1} matricization equals
/// <X>_{1,l}^T residual. Interior design cores must be diagonal.
inline TTVector tt_design_apply_adjoint(const TTVector& x, const Matrix& residual) {
  const std::size_t l = x.order() - 1;
  if (l == 0) throw std::invalid_argument("tt_design_apply_adjoint: no input modes");
  const auto& c0 = x.core(0);
  const std::size_t m = c0.shape()[1];
  const std::size_t rank = c0.shape()[2];
  if (static_cast<std::size_t>(residual.rows()) != m) {
    throw std::invalid_argument("tt_design_apply_adjoint: residual has " +
                                std::to_string(residual.rows()) +
                                " rows, batch size is " + std::to_string(m));
  }
  for (std::size_t k = 1; k <= l; ++k) {
    const auto& c = x.core(k);
    const std::size_t rr = c.shape()[2];
    if (c.shape()[0] != rank || (k < l && rr != rank)) {
      throw std::invalid_argument("tt_design_apply_adjoint: non-uniform design ranks");
    }
    if (k < l) {
      for (std::size_t a = 0; a < rank; ++a)
        for (std::size_t i = 0; i < c.shape()[1]; ++i)
          for (std::size_t b = 0; b < rank; ++b)
            if (a != b && c.at({a, i, b}) != 0.0) {
              throw std::invalid_argument(
                  "tt_design_apply_adjoint: interior design cores must be diagonal");
            }
    }
  }
  const auto p = static_cast<std::size_t>(residual.cols());
  Eigen::Map<const RowMatrix> first(c0.data().data(),
                                    static_cast<Eigen::Index>(m),
                                    static_cast<Eigen::Index>(rank));
  const Matrix rt = first.transpose() * residual;

  auto diag_entry = [&](std::size_t k, std::size_t a, std::size_t i) {
    const auto& c = x.core(k);
    return k < l ? c.at({a, i, a}) : c.at({a, i, 0});
  };

  std::vector<DenseTensor> cores;
  cores.reserve(l + 1);
  for (std::size_t k = 1; k <= l; ++k) {
    const std::size_t d = x.core(k).shape()[1];
    if (k == 1) {
      DenseTensor g({1, d, rank});
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t a = 0; a < rank; ++a) g.at({0, i, a}) = diag_entry(k, a, i);
      cores.push_back(std::move(g));
    } else {
      DenseTensor g({rank, d, rank});
      for (std::size_t a = 0; a < rank; ++a)
        for (std::size_t i = 0; i < d; ++i) g.at({a, i, a}) = diag_entry(k, a, i);
      cores.push_back(std::move(g));
    }
  }
  DenseTensor last({rank, p, 1});
  last.as_matrix(rank, p) = rt;
  cores.push_back(std::move(last));
  return TTVector(std::move(cores));
}

}  // namespace tt2rnn
