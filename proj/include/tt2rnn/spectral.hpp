#pragma once

// Spectral reconstruction of a linear 2-RNN from Hankel tensor estimates.
//
// With <H^(2L)>_{L,L+1} = P S (P: d^L x R, S: R x d^L p):
//   h0     = (S^+)^T vec(H^(L))
//   Omega^T = P^+ <H^(L)>_{L,1}
//   A[:,k,:] = P^+ H_k S^+, where H_k is the (d^L, d^L p) slice of
//             <H^(2L+1)>_{L,1,L+1} at middle index k.

#include "tt2rnn/dataset.hpp"
#include "tt2rnn/linalg.hpp"
#include "tt2rnn/metrics.hpp"
#include "tt2rnn/models.hpp"
#include "tt2rnn/recovery.hpp"
#include "tt2rnn/tensor.hpp"
#include "tt2rnn/tensor_train.hpp"

#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tt2rnn {

struct HankelTriple {
  DenseTensor H_L;
  DenseTensor H_2L;
  DenseTensor H_2L1;
  std::size_t d = 0;
  std::size_t p = 0;
  std::size_t L = 0;

  void validate() const {
    if (L < 1) throw std::invalid_argument("HankelTriple: L must be >= 1");
    if (H_L.shape() != hankel_shape(d, p, L) || H_2L.shape() != hankel_shape(d, p, 2 * L) ||
        H_2L1.shape() != hankel_shape(d, p, 2 * L + 1)) {
      throw std::invalid_argument("HankelTriple: tensor shapes do not match (d, p, L)");
    }
  }

  static HankelTriple of_rnn(const Linear2RNN& m, std::size_t L) {
    return {hankel_dense(m, L), hankel_dense(m, 2 * L), hankel_dense(m, 2 * L + 1),
            m.d(), m.p(), L};
  }
};

struct HankelTripleTT {
  TTVector H_L;
  TTVector H_2L;
  TTVector H_2L1;
  std::size_t d = 0;
  std::size_t p = 0;
  std::size_t L = 0;

  void validate() const {
    if (L < 1) throw std::invalid_argument("HankelTripleTT: L must be >= 1");
    auto dims = [&](std::size_t l) {
      Shape s(l, d);
      s.push_back(p);
      return s;
    };
    if (H_L.dims() != dims(L) || H_2L.dims() != dims(2 * L) || H_2L1.dims() != dims(2 * L + 1)) {
      throw std::invalid_argument("HankelTripleTT: mode sizes do not match (d, p, L)");
    }
  }
};

struct RankFactorization {
  Matrix P;  // d^L x R
  Matrix S;  // R x d^L p
  Vector singular_values;  // all singular values of the factorized matrix
};

struct SpectralOptions {
  /// Relative singular-value cutoff of every pseudo-inverse.
  double pinv_cutoff = 1e-10;
  /// Relative tolerance of the rank-condition monitor.
  double rank_tol = 1e-8;
  /// Throw IllConditionedFactorization when a factor has fewer than R
  /// singular values above the cutoff.
  bool strict = false;
  bool zero_fallback = true;
  /// Per-length gradient steps overriding RecoveryConfig::step.
  std::map<std::size_t, double> steps;
};

struct SpectralDiagnostics {
  std::size_t rank = 0;
  std::size_t numerical_rank = 0;
  std::vector<double> singular_values;
  std::vector<std::string> warnings;
  bool fallback = false;
  double train_mse = 0.0;
  double zero_mse = 0.0;
  std::map<std::size_t, RecoveryReport> recovery;
};

struct SpectralResult {
  Linear2RNN model;
  SpectralDiagnostics diagnostics;
};

/// Truncated-SVD rank-R factorization of <H^(2L)>_{L,L+1}: P = U_R,
/// S = Sigma_R V_R^T, zero-padded when R exceeds the matrix dimensions.
inline RankFactorization rank_factorize(const DenseTensor& H_2L, std::size_t R) {
  if (R < 1) throw std::invalid_argument("rank_factorize: R must be >= 1");
  if (H_2L.order() < 3 || H_2L.order() % 2 == 0) {
    throw std::invalid_argument("rank_factorize: expected an order 2L+1 tensor, got order " +
                                std::to_string(H_2L.order()));
  }
  const std::size_t L = (H_2L.order() - 1) / 2;
  const std::size_t rows = ipow(H_2L.dim(0), L);
  const std::size_t cols = H_2L.size() / rows;
  const ThinSvd svd = thin_svd(Matrix(H_2L.as_matrix(rows, cols)));
  const auto r = static_cast<Eigen::Index>(R);
  const auto k = std::min<Eigen::Index>(r, svd.s.size());
  RankFactorization f;
  f.P = Matrix::Zero(static_cast<Eigen::Index>(rows), r);
  f.S = Matrix::Zero(r, static_cast<Eigen::Index>(cols));
  f.P.leftCols(k) = svd.U.leftCols(k);
  f.S.topRows(k) = svd.s.head(k).asDiagonal() * svd.V.leftCols(k).transpose();
  f.singular_values = svd.s;
  return f;
}

namespace detail {

inline void check_conditioning(const Matrix& m, std::size_t R, double cutoff, const char* what) {
  const Vector s = singular_values(m);
  const std::size_t r = numerical_rank(s, cutoff);
  if (r < R) {
    std::ostringstream os;
    os << "recover_rnn: " << what << " has only " << r << " singular values above "
       << cutoff << " * sigma_max, need R = " << R;
    throw IllConditionedFactorization(os.str());
  }
}

/// Rank-condition message, or empty when the numerical rank equals R.
inline std::string rank_warning(std::size_t numerical, std::size_t R) {
  if (numerical == R) return {};
  std::ostringstream os;
  os << "rank condition: numerical rank of <H^(2L)>_{L,L+1} is " << numerical
     << (numerical < R ? ", below" : ", above") << " R = " << R;
  return os.str();
}

}  // namespace detail

/// Model computing the function behind the Hankel tensors from a rank
/// factorization P S of <H^(2L)>_{L,L+1}. Hidden size equals P.cols().
inline Linear2RNN recover_rnn(const HankelTriple& t, const Matrix& P, const Matrix& S,
                              const SpectralOptions& opts = {}) {
  t.validate();
  const std::size_t dl = ipow(t.d, t.L);
  const std::size_t cols = dl * t.p;
  if (static_cast<std::size_t>(P.rows()) != dl || static_cast<std::size_t>(S.cols()) != cols ||
      P.cols() != S.rows()) {
    throw std::invalid_argument("recover_rnn: factor shapes do not match the Hankel tensors");
  }
  const auto R = static_cast<std::size_t>(P.cols());
  if (opts.strict) {
    detail::check_conditioning(P, R, opts.pinv_cutoff, "P");
    detail::check_conditioning(S, R, opts.pinv_cutoff, "S");
  }
  const Matrix Pp = pinv(P, opts.pinv_cutoff);  // R x d^L
  const Matrix Sp = pinv(S, opts.pinv_cutoff);  // d^L p x R

  Linear2RNN m = Linear2RNN::zeros(R, t.d, t.p);
  m.h0 = Sp.transpose() * t.H_L.as_vector();
  m.Omega = (Pp * t.H_L.as_matrix(dl, t.p)).transpose();
  const auto H1 = t.H_2L1.as_matrix(dl * t.d, cols);
  const auto r = static_cast<Eigen::Index>(R);
  for (std::size_t k = 0; k < t.d; ++k) {
    Matrix hk(static_cast<Eigen::Index>(dl), static_cast<Eigen::Index>(cols));
    for (std::size_t u = 0; u < dl; ++u) {
      hk.row(static_cast<Eigen::Index>(u)) = H1.row(static_cast<Eigen::Index>(u * t.d + k));
    }
    const Matrix ak = Pp * hk * Sp;
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < r; ++j)
        m.A.at({static_cast<std::size_t>(i), k, static_cast<std::size_t>(j)}) = ak(i, j);
  }
  return m;
}

/// Rank monitor on the dense matricization.
inline SpectralDiagnostics rank_diagnostics(const Vector& s, std::size_t R, double rank_tol) {
  SpectralDiagnostics diag;
  diag.rank = R;
  diag.singular_values.assign(s.data(), s.data() + s.size());
  diag.numerical_rank = numerical_rank(s, rank_tol);
  if (auto w = detail::rank_warning(diag.numerical_rank, R); !w.empty()) {
    diag.warnings.push_back(std::move(w));
  }
  return diag;
}

namespace detail {

/// One right-to-left contraction step: sum_i a[:, i, :] w b[:, i, :]^T.
inline Matrix right_step(const DenseTensor& a, const DenseTensor& b, const Matrix& w) {
  if (a.shape()[1] != b.shape()[1]) throw std::invalid_argument("right_step: mode mismatch");
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(a.shape()[0]),
                            static_cast<Eigen::Index>(b.shape()[0]));
  for (std::size_t i = 0; i < a.shape()[1]; ++i) {
    out.noalias() += core_slice(a, i) * w * core_slice(b, i).transpose();
  }
  return out;
}

/// Right-to-left contraction of `count` cores of `a` starting at `a0` with
/// `count` cores of `b` starting at `b0`, ending at the right boundary.
inline Matrix contract_tail(const TTVector& a, std::size_t a0, const TTVector& b,
                            std::size_t b0, std::size_t count) {
  Matrix w = Matrix::Ones(1, 1);
  for (std::size_t j = count; j > 0; --j) {
    w = right_step(a.core(a0 + j - 1), b.core(b0 + j - 1), w);
  }
  return w;
}

}  // namespace detail

/// TT-format counterpart of rank_factorize + recover_rnn. The factorization
/// of <H^(2L)>_{L,L+1} comes from orthogonalizing the TT on both sides of
/// the split; no array with d^L rows is formed.
inline Linear2RNN recover_rnn_tt(const HankelTripleTT& t, std::size_t R,
                                 const SpectralOptions& opts = {},
                                 SpectralDiagnostics* diag = nullptr) {
  t.validate();
  if (R < 1) throw std::invalid_argument("recover_rnn_tt: R must be >= 1");
  const std::size_t L = t.L, d = t.d, p = t.p;

  TTVector q = t.H_2L;
  tt_left_orthogonalize(q, 0, L);
  tt_right_orthogonalize(q, 2 * L, L);
  // <H^(2L)> = Q_left C (I_d (x) Q_rest), C the right unfolding of core L.
  const DenseTensor& mid = q.core(L);
  const std::size_t r_left = mid.shape()[0];
  const std::size_t r_right = mid.shape()[2];
  const ThinSvd svd = thin_svd(Matrix(detail::right_unfolding(mid)));
  const auto r = static_cast<Eigen::Index>(R);
  const auto k = std::min<Eigen::Index>(r, svd.s.size());

  auto local = rank_diagnostics(svd.s, R, opts.rank_tol);
  const double smax = svd.s.size() ? svd.s[0] : 0.0;
  const double cut = opts.pinv_cutoff * smax;
  if (opts.strict) {
    std::size_t good = 0;
    for (Eigen::Index i = 0; i < k; ++i) good += svd.s[i] > cut ? 1 : 0;
    if (good < R) {
      throw IllConditionedFactorization("recover_rnn_tt: factorization has only " +
                                        std::to_string(good) +
                                        " usable singular values, need R = " + std::to_string(R));
    }
  }

  Matrix UR = Matrix::Zero(static_cast<Eigen::Index>(r_left), r);  // P = Q_left UR
  UR.leftCols(k) = svd.U.leftCols(k);
  Vector inv_s = Vector::Zero(r);
  for (Eigen::Index i = 0; i < k; ++i) {
    if (svd.s[i] > cut && svd.s[i] > 0.0) inv_s[i] = 1.0 / svd.s[i];
  }
  // W = V_R^T (I_d (x) Q_rest) has orthonormal rows; S = Sigma_R W.
  DenseTensor vcore({R, d, r_right});
  {
    Matrix vt = Matrix::Zero(r, static_cast<Eigen::Index>(d * r_right));
    vt.topRows(k) = svd.V.leftCols(k).transpose();
    vcore.as_matrix(R, d * r_right) = vt;
  }

  Linear2RNN m = Linear2RNN::zeros(R, d, p);

  // h0 = Sigma^-1 W vec(H^(L)).
  {
    const Matrix e = detail::contract_tail(q, L + 1, t.H_L, 1, L);
    const Matrix w = detail::right_step(vcore, t.H_L.core(0), e);  // R x 1
    m.h0 = inv_s.asDiagonal() * w.col(0);
  }
  // Omega^T = UR^T Q_left^T <H^(L)>_{L,1}.
  {
    const Matrix left = tt_contract_left(q, t.H_L, 0, L, Matrix::Ones(1, 1));
    const auto& last = t.H_L.core(L);
    const Matrix tail = detail::right_unfolding(last);
    m.Omega = (UR.transpose() * left * tail).transpose();
  }
  // A_k = UR^T (Q_left^T H_k W^T) Sigma^-1.
  {
    const Matrix left = UR.transpose() * tt_contract_left(q, t.H_2L1, 0, L, Matrix::Ones(1, 1));
    const Matrix e = detail::contract_tail(q, L + 1, t.H_2L1, L + 2, L);
    const Matrix right = detail::right_step(t.H_2L1.core(L + 1), vcore, e.transpose()) * inv_s.asDiagonal();
    const DenseTensor& gk = t.H_2L1.core(L);
    for (std::size_t s = 0; s < d; ++s) {
      const Matrix ak = left * detail::core_slice(gk, s) * right;
      for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < r; ++j)
          m.A.at({static_cast<std::size_t>(i), s, static_cast<std::size_t>(j)}) = ak(i, j);
    }
  }
  if (diag) {
    diag->rank = local.rank;
    diag->numerical_rank = local.numerical_rank;
    diag->singular_values = std::move(local.singular_values);
    for (auto& w : local.warnings) diag->warnings.push_back(std::move(w));
  }
  return m;
}

namespace detail {

inline RecoveryConfig config_for_length(const RecoveryConfig& cfg, const SpectralOptions& opts,
                                        std::size_t l) {
  RecoveryConfig c = cfg;
  if (auto it = opts.steps.find(l); it != opts.steps.end()) c.step = it->second;
  return c;
}

inline DenseTensor estimate_dense(const SequenceDataset& data, const RecoveryConfig& cfg,
                                  std::size_t d, RecoveryReport* report) {
  if (cfg.method == RecoveryMethod::TIHT_TT && data.uniform_length() > 0) {
    return tt_to_dense(recover_tiht_tt(data, cfg, report));
  }
  RecoveryConfig c = cfg;
  if (c.method == RecoveryMethod::TIHT_TT) c.method = RecoveryMethod::TIHT;
  return recover_dense(build_design(data, d), c, report);
}

/// Replaces the model by the zero function when it fits the training data
/// worse than predicting zero.
inline void apply_fallback(SpectralResult& res, std::span<const SequenceDataset* const> train,
                           bool enabled) {
  double se = 0.0, ze = 0.0;
  std::size_t n = 0;
  for (const auto* ds : train) {
    if (!ds || ds->empty()) continue;
    const double w = static_cast<double>(ds->size());
    se += w * mse(res.model, *ds);
    ze += w * zero_mse(*ds);
    n += ds->size();
  }
  if (n == 0) return;
  auto& diag = res.diagnostics;
  diag.train_mse = se / static_cast<double>(n);
  diag.zero_mse = ze / static_cast<double>(n);
  const bool bad = !std::isfinite(diag.train_mse) || diag.train_mse > diag.zero_mse;
  if (enabled && bad) {
    res.model = Linear2RNN::zeros(res.model.n(), res.model.d(), res.model.p());
    diag.fallback = true;
    diag.train_mse = diag.zero_mse;
    diag.warnings.push_back("zero-function fallback: hypothesis fit the training data worse "
                            "than the zero function");
  }
}

inline std::size_t check_lengths(const SequenceDataset& dl, const SequenceDataset& d2l,
                                 const SequenceDataset& d2l1) {
  if (dl.empty() || d2l.empty() || d2l1.empty()) {
    throw std::invalid_argument("spectral_learn: all three datasets must be non-empty");
  }
  const std::size_t L = dl.uniform_length();
  if (L < 1) throw std::invalid_argument("spectral_learn: L must be >= 1");
  if (d2l.uniform_length() != 2 * L || d2l1.uniform_length() != 2 * L + 1) {
    throw std::invalid_argument("spectral_learn: dataset lengths must be L, 2L, 2L+1 (got " +
                                std::to_string(L) + ", " + std::to_string(d2l.uniform_length()) +
                                ", " + std::to_string(d2l1.uniform_length()) + ")");
  }
  return L;
}

}  // namespace detail

/// End-to-end learning from datasets of lengths L, 2L and 2L+1: Hankel
/// recovery with cfg.method, rank-R factorization, reconstruction and the
/// zero-function fallback.
inline SpectralResult spectral_learn(const SequenceDataset& d_l, const SequenceDataset& d_2l,
                                     const SequenceDataset& d_2l1, const RecoveryConfig& cfg,
                                     const SpectralOptions& opts = {}) {
  cfg.validate();
  const std::size_t L = detail::check_lengths(d_l, d_2l, d_2l1);
  const std::size_t d = *d_l.input_dim();
  const std::size_t p = d_l.output_dim();
  if (d_2l.input_dim() != d || d_2l1.input_dim() != d || d_2l.output_dim() != p ||
      d_2l1.output_dim() != p) {
    throw std::invalid_argument("spectral_learn: datasets disagree on input/output dimension");
  }
  const std::size_t R = cfg.rank;
  SpectralResult res;
  if (cfg.method == RecoveryMethod::TIHT_TT) {
    HankelTripleTT t;
    t.d = d;
    t.p = p;
    t.L = L;
    RecoveryReport r1, r2, r3;
    t.H_L = recover_tiht_tt(d_l, detail::config_for_length(cfg, opts, L), &r1);
    t.H_2L = recover_tiht_tt(d_2l, detail::config_for_length(cfg, opts, 2 * L), &r2);
    t.H_2L1 = recover_tiht_tt(d_2l1, detail::config_for_length(cfg, opts, 2 * L + 1), &r3);
    res.model = recover_rnn_tt(t, R, opts, &res.diagnostics);
    res.diagnostics.recovery = {{L, r1}, {2 * L, r2}, {2 * L + 1, r3}};
  } else {
    HankelTriple t;
    t.d = d;
    t.p = p;
    t.L = L;
    RecoveryReport r1, r2, r3;
    t.H_L = detail::estimate_dense(d_l, detail::config_for_length(cfg, opts, L), d, &r1);
    t.H_2L = detail::estimate_dense(d_2l, detail::config_for_length(cfg, opts, 2 * L), d, &r2);
    t.H_2L1 =
        detail::estimate_dense(d_2l1, detail::config_for_length(cfg, opts, 2 * L + 1), d, &r3);
    const auto f = rank_factorize(t.H_2L, R);
    res.diagnostics = rank_diagnostics(f.singular_values, R, opts.rank_tol);
    res.diagnostics.recovery = {{L, r1}, {2 * L, r2}, {2 * L + 1, r3}};
    res.model = recover_rnn(t, f.P, f.S, opts);
  }
  const SequenceDataset* train[] = {&d_l, &d_2l, &d_2l1};
  detail::apply_fallback(res, train, opts.zero_fallback);
  return res;
}

// ---------------------------------------------------------------------------
// General algorithm over the basis of all words of length <= L.

/// Words of length [min_len, L] over {0..d-1}, ordered by length then
/// lexicographically.
inline std::vector<std::vector<std::size_t>> word_basis(std::size_t d, std::size_t L,
                                                        std::size_t min_len = 0) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t len = min_len; len <= L; ++len) {
    const std::size_t count = ipow(d, len);
    for (std::size_t idx = 0; idx < count; ++idx) {
      std::vector<std::size_t> w(len);
      std::size_t rest = idx;
      for (std::size_t j = len; j > 0; --j) {
        w[j - 1] = rest % d;
        rest /= d;
      }
      out.push_back(std::move(w));
    }
  }
  return out;
}

struct GeneralHankelBlocks {
  std::vector<std::vector<std::size_t>> basis;
  Matrix H_tilde;               // |B| x |B| p, column (v, o)
  std::vector<Matrix> H_plus;   // d blocks, each |B| x |B| p
  Matrix H_minus;               // |B| x p
  std::size_t d = 0, p = 0, L = 0;
};

/// Copies entries of H^(l) into the prefix/suffix blocks. `hankels` must
/// hold every length 1..2L+1, plus 0 when the basis includes the empty word.
inline GeneralHankelBlocks assemble_general_blocks(const std::map<std::size_t, DenseTensor>& hankels,
                                                   std::size_t d, std::size_t p, std::size_t L) {
  if (L < 1) throw std::invalid_argument("assemble_general_blocks: L must be >= 1");
  const bool with_empty = hankels.count(0) > 0;
  for (std::size_t l = 1; l <= 2 * L + 1; ++l) {
    auto it = hankels.find(l);
    if (it == hankels.end()) {
      throw std::invalid_argument("assemble_general_blocks: missing Hankel tensor for length " +
                                  std::to_string(l));
    }
    if (it->second.shape() != hankel_shape(d, p, l)) {
      throw std::invalid_argument("assemble_general_blocks: wrong shape for length " +
                                  std::to_string(l));
    }
  }
  GeneralHankelBlocks g;
  g.d = d;
  g.p = p;
  g.L = L;
  g.basis = word_basis(d, L, with_empty ? 0 : 1);
  const auto nb = static_cast<Eigen::Index>(g.basis.size());
  const auto pp = static_cast<Eigen::Index>(p);

  auto value = [&](const std::vector<std::size_t>& a, std::optional<std::size_t> mid,
                   const std::vector<std::size_t>& b, Eigen::Index o) {
    std::size_t idx = 0, len = 0;
    auto push = [&](std::size_t s) {
      idx = idx * d + s;
      ++len;
    };
    for (auto s : a) push(s);
    if (mid) push(*mid);
    for (auto s : b) push(s);
    const auto& h = hankels.at(len);
    return h[idx * p + static_cast<std::size_t>(o)];
  };

  const std::vector<std::size_t> empty;
  g.H_tilde.resize(nb, nb * pp);
  g.H_minus.resize(nb, pp);
  g.H_plus.assign(d, Matrix(nb, nb * pp));
  for (Eigen::Index u = 0; u < nb; ++u) {
    const auto& wu = g.basis[static_cast<std::size_t>(u)];
    for (Eigen::Index o = 0; o < pp; ++o) g.H_minus(u, o) = value(wu, std::nullopt, empty, o);
    for (Eigen::Index v = 0; v < nb; ++v) {
      const auto& wv = g.basis[static_cast<std::size_t>(v)];
      for (Eigen::Index o = 0; o < pp; ++o) {
        g.H_tilde(u, v * pp + o) = value(wu, std::nullopt, wv, o);
        for (std::size_t k = 0; k < d; ++k) g.H_plus[k](u, v * pp + o) = value(wu, k, wv, o);
      }
    }
  }
  return g;
}

/// Reconstruction from the general blocks with a rank-R truncated SVD of
/// H_tilde.
inline Linear2RNN recover_rnn_general(const GeneralHankelBlocks& g, std::size_t R,
                                      const SpectralOptions& opts = {},
                                      SpectralDiagnostics* diag = nullptr) {
  if (R < 1) throw std::invalid_argument("recover_rnn_general: R must be >= 1");
  const ThinSvd svd = thin_svd(g.H_tilde);
  const auto r = static_cast<Eigen::Index>(R);
  const auto k = std::min<Eigen::Index>(r, svd.s.size());
  Matrix P = Matrix::Zero(g.H_tilde.rows(), r);
  Matrix S = Matrix::Zero(r, g.H_tilde.cols());
  P.leftCols(k) = svd.U.leftCols(k);
  S.topRows(k) = svd.s.head(k).asDiagonal() * svd.V.leftCols(k).transpose();
  if (diag) {
    auto local = rank_diagnostics(svd.s, R, opts.rank_tol);
    diag->rank = local.rank;
    diag->numerical_rank = local.numerical_rank;
    diag->singular_values = std::move(local.singular_values);
    for (auto& w : local.warnings) diag->warnings.push_back(std::move(w));
  }
  if (opts.strict) {
    detail::check_conditioning(P, R, opts.pinv_cutoff, "P");
    detail::check_conditioning(S, R, opts.pinv_cutoff, "S");
  }
  const Matrix Pp = pinv(P, opts.pinv_cutoff);
  const Matrix Sp = pinv(S, opts.pinv_cutoff);
  Linear2RNN m = Linear2RNN::zeros(R, g.d, g.p);
  // vec(H_minus) in (v, o) order is the row of H_tilde for the empty prefix.
  const Matrix hm = g.H_minus;
  Vector vec_minus(hm.size());
  for (Eigen::Index v = 0; v < hm.rows(); ++v)
    for (Eigen::Index o = 0; o < hm.cols(); ++o) vec_minus[v * hm.cols() + o] = hm(v, o);
  m.h0 = Sp.transpose() * vec_minus;
  m.Omega = (Pp * hm).transpose();
  for (std::size_t s = 0; s < g.d; ++s) {
    const Matrix ak = Pp * g.H_plus[s] * Sp;
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < r; ++j)
        m.A.at({static_cast<std::size_t>(i), s, static_cast<std::size_t>(j)}) = ak(i, j);
  }
  return m;
}

/// General algorithm from datasets D_l keyed by length l = 1..2L+1, with an
/// optional D_0 of empty sequences that adds the empty word to the basis.
inline SpectralResult spectral_learn_general(const std::map<std::size_t, SequenceDataset>& data,
                                             std::size_t L, const RecoveryConfig& cfg,
                                             const SpectralOptions& opts = {}) {
  cfg.validate();
  if (L < 1) throw std::invalid_argument("spectral_learn_general: L must be >= 1");
  std::optional<std::size_t> d;
  std::optional<std::size_t> p;
  for (const auto& [l, ds] : data) {
    if (ds.empty()) {
      throw std::invalid_argument("spectral_learn_general: dataset for length " +
                                  std::to_string(l) + " is empty");
    }
    if (ds.uniform_length() != l) {
      throw std::invalid_argument("spectral_learn_general: dataset keyed " + std::to_string(l) +
                                  " holds sequences of another length");
    }
    if (auto di = ds.input_dim()) {
      if (d && *d != *di) throw std::invalid_argument("spectral_learn_general: mixed input dims");
      d = di;
    }
    if (p && *p != ds.output_dim()) {
      throw std::invalid_argument("spectral_learn_general: mixed output dims");
    }
    p = ds.output_dim();
  }
  for (std::size_t l = 1; l <= 2 * L + 1; ++l) {
    if (!data.count(l)) {
      throw std::invalid_argument("spectral_learn_general: missing dataset for length " +
                                  std::to_string(l));
    }
  }
  SpectralResult res;
  std::map<std::size_t, DenseTensor> hankels;
  for (const auto& [l, ds] : data) {
    if (l > 2 * L + 1) continue;
    RecoveryReport rep;
    hankels.emplace(l, detail::estimate_dense(ds, detail::config_for_length(cfg, opts, l), *d,
                                              &rep));
    res.diagnostics.recovery[l] = rep;
  }
  const auto blocks = assemble_general_blocks(hankels, *d, *p, L);
  res.model = recover_rnn_general(blocks, cfg.rank, opts, &res.diagnostics);
  std::vector<const SequenceDataset*> train;
  for (const auto& [l, ds] : data) train.push_back(&ds);
  detail::apply_fallback(res, train, opts.zero_fallback);
  return res;
}

}  // namespace tt2rnn
