#pragma once

// Estimation of Hankel tensors H^(l) from input/output examples.
//
// Each example ((x_1, ..., x_l), y) is a linear measurement
//   y = <H^(l)>_{l,1}^T kron(x_1, ..., x_l),
// so with X (N x d^l) holding the Kronecker rows and Y (N x p) the outputs,
// every method below estimates the d^l x p matrix <H^(l)>_{l,1}.

#include "tt2rnn/dataset.hpp"
#include "tt2rnn/linalg.hpp"
#include "tt2rnn/tensor.hpp"
#include "tt2rnn/tensor_train.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace tt2rnn {

enum class RecoveryMethod { LeastSquares, NuclearNorm, IHT, TIHT, TIHT_TT };

inline std::string to_string(RecoveryMethod m) {
  switch (m) {
    case RecoveryMethod::LeastSquares: return "ls";
    case RecoveryMethod::NuclearNorm: return "nn";
    case RecoveryMethod::IHT: return "iht";
    case RecoveryMethod::TIHT: return "tiht";
    case RecoveryMethod::TIHT_TT: return "tiht-tt";
  }
  return "unknown";
}

inline RecoveryMethod parse_recovery_method(const std::string& s) {
  if (s == "ls" || s == "least-squares") return RecoveryMethod::LeastSquares;
  if (s == "nn" || s == "nuclear-norm") return RecoveryMethod::NuclearNorm;
  if (s == "iht") return RecoveryMethod::IHT;
  if (s == "tiht") return RecoveryMethod::TIHT;
  if (s == "tiht-tt" || s == "tiht_tt") return RecoveryMethod::TIHT_TT;
  throw std::invalid_argument("unknown recovery method '" + s + "'");
}

struct RecoveryConfig {
  RecoveryMethod method = RecoveryMethod::LeastSquares;
  std::size_t rank = 1;
  /// Gradient step; when unset, 1 / lambda_max(X^T X) of the data in use.
  std::optional<double> step;
  std::size_t max_iters = 5000;
  double rel_tol = 1e-7;
  /// TIHT_TT minibatch size; 0 or >= N means full batch.
  std::size_t minibatch = 0;
  std::uint64_t seed = 0;
  /// Consecutive objective increases tolerated before DivergenceError.
  std::size_t divergence_patience = 10;

  // Nuclear norm solver.
  double nn_tau_decay = 0.25;
  double nn_tau_min_ratio = 1e-8;
  std::size_t nn_inner_iters = 200;
  double nn_inner_tol = 1e-6;
  /// Relax the equality constraint to a residual ball sized from this noise
  /// variance; when unset the variance is estimated from the LS residual.
  bool nn_noise_ball = true;
  std::optional<double> noise_variance;

  void validate() const {
    if (rank < 1) throw std::invalid_argument("RecoveryConfig: rank must be >= 1");
    if (step && !(*step >= 0.0)) throw std::invalid_argument("RecoveryConfig: step must be >= 0");
    if (!(rel_tol >= 0.0)) throw std::invalid_argument("RecoveryConfig: rel_tol must be >= 0");
    if (!(nn_tau_decay > 0.0 && nn_tau_decay < 1.0)) {
      throw std::invalid_argument("RecoveryConfig: nn_tau_decay must be in (0, 1)");
    }
  }
};

struct RecoveryReport {
  std::size_t iterations = 0;
  bool converged = false;
  double step = 0.0;
  /// ||X <H>_{l,1} - Y||_F^2 at the returned estimate.
  double objective = 0.0;
};

struct RegressionData {
  RowMatrix X;  // N x d^l
  Matrix Y;     // N x p
  std::size_t l = 0;
  std::size_t d = 0;
  std::size_t p = 0;

  std::size_t n_samples() const { return static_cast<std::size_t>(Y.rows()); }
  std::size_t n_features() const { return static_cast<std::size_t>(X.cols()); }
  Shape hankel_shape() const { return tt2rnn::hankel_shape(d, p, l); }
};

using DenseObserver = std::function<void(std::size_t, const DenseTensor&)>;
using TTObserver = std::function<void(std::size_t, const TTVector&)>;

/// Design matrix with rows kron(x_1, ..., x_l) and output matrix Y. `d` is
/// required only when every sequence is empty.
inline RegressionData build_design(std::span<const SequenceExample> examples,
                                   std::optional<std::size_t> d = std::nullopt) {
  if (examples.empty()) throw std::invalid_argument("build_design: no examples");
  const std::size_t l = examples[0].length();
  RegressionData rd;
  rd.l = l;
  rd.p = static_cast<std::size_t>(examples[0].y.size());
  if (l > 0) {
    rd.d = static_cast<std::size_t>(examples[0].x[0].size());
  } else {
    rd.d = d.value_or(1);
  }
  const std::size_t k = ipow(rd.d, l);
  const auto n = static_cast<Eigen::Index>(examples.size());
  rd.X.resize(n, static_cast<Eigen::Index>(k));
  rd.Y.resize(n, static_cast<Eigen::Index>(rd.p));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& ex = examples[static_cast<std::size_t>(i)];
    if (ex.length() != l) {
      throw std::invalid_argument("build_design: mixed sequence lengths (" +
                                  std::to_string(l) + " and " +
                                  std::to_string(ex.length()) + ")");
    }
    if (static_cast<std::size_t>(ex.y.size()) != rd.p) {
      throw std::invalid_argument("build_design: inconsistent output dimension");
    }
    for (const auto& x : ex.x) {
      if (static_cast<std::size_t>(x.size()) != rd.d) {
        throw std::invalid_argument("build_design: inconsistent input dimension");
      }
    }
    rd.X.row(i) = l == 0 ? Vector::Ones(1) : kron(ex.x);
    rd.Y.row(i) = ex.y.transpose();
  }
  return rd;
}

inline RegressionData build_design(const SequenceDataset& data,
                                   std::optional<std::size_t> d = std::nullopt) {
  return build_design(std::span<const SequenceExample>(data.examples()), d);
}

namespace detail {

inline DenseTensor hankel_from_matrix(const Matrix& h, const RegressionData& rd) {
  DenseTensor t(rd.hankel_shape());
  t.as_matrix(rd.n_features(), rd.p) = h;
  return t;
}

inline Matrix hankel_to_matrix(const DenseTensor& t, const RegressionData& rd) {
  return t.as_matrix(rd.n_features(), rd.p);
}

/// Rows of the balanced matricization <T>_{ceil(l/2), l - ceil(l/2) + 1}.
inline std::size_t balanced_rows(const RegressionData& rd) {
  return ipow(rd.d, (rd.l + 1) / 2);
}

inline Matrix to_balanced(const Matrix& h, const RegressionData& rd) {
  RowMatrix row = h;  // row-major d^l x p
  const std::size_t rows = balanced_rows(rd);
  return Eigen::Map<RowMatrix>(row.data(), static_cast<Eigen::Index>(rows),
                               static_cast<Eigen::Index>(row.size() / rows));
}

inline Matrix from_balanced(const Matrix& b, const RegressionData& rd) {
  RowMatrix row = b;
  return Eigen::Map<RowMatrix>(row.data(), static_cast<Eigen::Index>(rd.n_features()),
                               static_cast<Eigen::Index>(rd.p));
}

inline double relative_change(const Matrix& next, const Matrix& prev) {
  const double denom = std::max(next.norm(), std::numeric_limits<double>::min());
  const double diff = (next - prev).norm();
  return diff == 0.0 ? 0.0 : diff / denom;
}

struct GramSystem {
  Matrix G;  // X^T X
  Matrix B;  // X^T Y
  double y_sq = 0.0;

  explicit GramSystem(const RegressionData& rd) {
    const auto k = static_cast<Eigen::Index>(rd.n_features());
    G = Matrix::Zero(k, k);
    G.selfadjointView<Eigen::Lower>().rankUpdate(rd.X.transpose());
    G.triangularView<Eigen::StrictlyUpper>() = G.transpose();
    B = rd.X.transpose() * rd.Y;
    y_sq = rd.Y.squaredNorm();
  }

  /// ||X H - Y||^2 given GH = G * H.
  double objective(const Matrix& h, const Matrix& gh) const {
    return std::max(0.0, y_sq + (h.array() * (gh - 2.0 * B).array()).sum());
  }
};

class DivergenceMonitor {
 public:
  /// Increases below 1e-6 relative or `floor` absolute are ignored.
  DivergenceMonitor(std::size_t patience, double floor) : patience_(patience), floor_(floor) {}

  void update(double objective, std::size_t iter, const char* who) {
    if (!std::isfinite(objective)) {
      throw DivergenceError(std::string(who) + ": non-finite objective at iteration " +
                            std::to_string(iter));
    }
    if (objective > prev_ * (1.0 + 1e-6) + floor_) {
      if (++streak_ >= patience_) {
        throw DivergenceError(std::string(who) + ": objective increased for " +
                              std::to_string(streak_) +
                              " consecutive iterations (now " + std::to_string(objective) +
                              " at iteration " + std::to_string(iter) + ")");
      }
    } else {
      streak_ = 0;
    }
    prev_ = objective;
  }

 private:
  std::size_t patience_;
  double floor_;
  std::size_t streak_ = 0;
  double prev_ = std::numeric_limits<double>::infinity();
};

}  // namespace detail

/// Minimum-norm minimizer of ||X <T>_{l,1} - Y||_F.
inline DenseTensor recover_least_squares(const RegressionData& rd,
                                         RecoveryReport* report = nullptr) {
  const Matrix x = rd.X;
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(x);
  const Matrix h = cod.solve(rd.Y);
  if (report) {
    report->iterations = 0;
    report->converged = true;
    report->objective = (x * h - rd.Y).squaredNorm();
  }
  return detail::hankel_from_matrix(h, rd);
}

namespace detail {

using Projection = std::function<Matrix(const Matrix&)>;

inline DenseTensor projected_gradient(const RegressionData& rd, const RecoveryConfig& cfg,
                                      const Projection& project, const char* who,
                                      RecoveryReport* report, const DenseObserver& observer) {
  cfg.validate();
  const GramSystem sys(rd);
  const double gamma = cfg.step ? *cfg.step : [&] {
    const double lmax = max_eigenvalue_psd(sys.G);
    return lmax > 0.0 ? 1.0 / lmax : 0.0;
  }();
  Matrix h = Matrix::Zero(sys.B.rows(), sys.B.cols());
  Matrix gh = Matrix::Zero(h.rows(), h.cols());
  DivergenceMonitor monitor(cfg.divergence_patience, 1e-12 * sys.y_sq);
  RecoveryReport rep;
  rep.step = gamma;
  for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
    monitor.update(sys.objective(h, gh), it, who);
    Matrix next = project(h + gamma * (sys.B - gh));
    if (!next.allFinite()) {
      throw DivergenceError(std::string(who) + ": non-finite iterate at iteration " +
                            std::to_string(it));
    }
    const double change = relative_change(next, h);
    h = std::move(next);
    gh.noalias() = sys.G * h;
    rep.iterations = it;
    if (observer) observer(it, hankel_from_matrix(h, rd));
    if (change < cfg.rel_tol) {
      rep.converged = true;
      break;
    }
  }
  rep.objective = sys.objective(h, gh);
  if (report) *report = rep;
  return hankel_from_matrix(h, rd);
}

}  // namespace detail

/// Projected gradient with rank-R truncation of the balanced matricization.
inline DenseTensor recover_iht(const RegressionData& rd, const RecoveryConfig& cfg,
                               RecoveryReport* report = nullptr,
                               const DenseObserver& observer = nullptr) {
  const std::size_t r = cfg.rank;
  auto project = [&](const Matrix& h) -> Matrix {
    if (rd.l == 0) return h;
    return detail::from_balanced(truncate_rank(detail::to_balanced(h, rd), r), rd);
  };
  return detail::projected_gradient(rd, cfg, project, "recover_iht", report, observer);
}

/// Projected gradient with TT-SVD truncation to TT-rank R.
inline DenseTensor recover_tiht(const RegressionData& rd, const RecoveryConfig& cfg,
                                RecoveryReport* report = nullptr,
                                const DenseObserver& observer = nullptr) {
  const std::size_t r = cfg.rank;
  auto project = [&](const Matrix& h) -> Matrix {
    if (rd.l == 0) return h;
    const DenseTensor t = detail::hankel_from_matrix(h, rd);
    return detail::hankel_to_matrix(tt_to_dense(tt_svd(t, r)), rd);
  };
  return detail::projected_gradient(rd, cfg, project, "recover_tiht", report, observer);
}

/// Nuclear-norm minimization of the balanced matricization subject to the
/// measurement constraint, by singular-value soft-thresholding alternated
/// with projection onto the constraint set and a geometrically decreasing
/// threshold. With `nn_noise_ball` the equality is relaxed to
/// ||X T - Y||_F^2 <= N p sigma^2.
inline DenseTensor recover_nuclear_norm(const RegressionData& rd, const RecoveryConfig& cfg,
                                        RecoveryReport* report = nullptr) {
  cfg.validate();
  const auto k = static_cast<Eigen::Index>(rd.n_features());
  const Matrix x = rd.X;
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(x);
  const Matrix t_ls = cod.solve(rd.Y);
  const auto rank = static_cast<std::size_t>(cod.rank());
  const double r_ls_sq = (x * t_ls - rd.Y).squaredNorm();

  RecoveryReport rep;
  auto finish = [&](const Matrix& t, bool converged, std::size_t iters) {
    rep.converged = converged;
    rep.iterations = iters;
    rep.objective = (x * t - rd.Y).squaredNorm();
    if (report) *report = rep;
    return detail::hankel_from_matrix(t, rd);
  };
  if (rank >= static_cast<std::size_t>(k) && !cfg.nn_noise_ball) {
    return finish(t_ls, true, 0);
  }

  // Orthonormal basis of the row space of X.
  Matrix v;
  if (rd.n_samples() >= rd.n_features()) {
    Matrix g = x.transpose() * x;
    Eigen::SelfAdjointEigenSolver<Matrix> es(g);
    const double top = std::max(es.eigenvalues().maxCoeff(), 0.0);
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < k; ++i) {
      if (es.eigenvalues()[i] > 1e-12 * top && top > 0.0) keep.push_back(i);
    }
    v.resize(k, static_cast<Eigen::Index>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j) {
      v.col(static_cast<Eigen::Index>(j)) = es.eigenvectors().col(keep[j]);
    }
  } else {
    const ThinSvd svd = thin_svd(x);
    const auto r = static_cast<Eigen::Index>(numerical_rank(svd.s, 1e-12));
    v = svd.V.leftCols(r);
  }

  const std::size_t n = rd.n_samples();
  const std::size_t p = rd.p;
  double delta_sq = r_ls_sq;
  if (cfg.nn_noise_ball) {
    double sigma2 = 0.0;
    if (cfg.noise_variance) {
      sigma2 = *cfg.noise_variance;
    } else if (n > rank) {
      sigma2 = r_ls_sq / static_cast<double>((n - rank) * p);
    }
    delta_sq = std::max(r_ls_sq, static_cast<double>(n * p) * sigma2);
  }

  // Moves T toward the LS affine set until the residual is inside the ball.
  auto project = [&](const Matrix& t) -> Matrix {
    Matrix pa = t - v * (v.transpose() * t) + t_ls;
    if (delta_sq <= r_ls_sq) return pa;
    const double r_sq = (x * t - rd.Y).squaredNorm();
    if (r_sq <= delta_sq) return t;
    const double shrink = std::sqrt((delta_sq - r_ls_sq) / (r_sq - r_ls_sq));
    return pa + shrink * (t - pa);
  };

  if (rank >= static_cast<std::size_t>(k) && delta_sq <= r_ls_sq) {
    return finish(t_ls, true, 0);
  }

  auto svt = [&](const Matrix& t, double tau) -> Matrix {
    if (rd.l == 0) return t;
    const ThinSvd svd = thin_svd(detail::to_balanced(t, rd));
    Vector s = (svd.s.array() - tau).max(0.0);
    return detail::from_balanced(svd.U * s.asDiagonal() * svd.V.transpose(), rd);
  };

  const double tau0 = rd.l == 0 ? 0.0 : singular_values(detail::to_balanced(t_ls, rd)).maxCoeff();
  if (!(tau0 > 0.0)) return finish(project(t_ls), true, 0);
  const double tau_min = cfg.nn_tau_min_ratio * tau0;
  Matrix t = t_ls;
  std::size_t iters = 0;
  bool converged = true;
  for (double tau = tau0 * cfg.nn_tau_decay; tau >= tau_min; tau *= cfg.nn_tau_decay) {
    bool stage_converged = false;
    for (std::size_t inner = 0; inner < cfg.nn_inner_iters && iters < cfg.max_iters; ++inner) {
      Matrix next = project(svt(t, tau));
      ++iters;
      const double change = detail::relative_change(next, t);
      t = std::move(next);
      if (change < cfg.nn_inner_tol) {
        stage_converged = true;
        break;
      }
    }
    if (!stage_converged) converged = false;
    if (iters >= cfg.max_iters) break;
  }
  return finish(project(t), converged, iters);
}

namespace detail {

/// Floyd's algorithm: m distinct indices from [0, n), in ascending order.
template <class Rng>
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t m, Rng& rng) {
  std::unordered_set<std::size_t> chosen;
  std::vector<std::size_t> out;
  out.reserve(m);
  for (std::size_t j = n - m; j < n; ++j) {
    std::uniform_int_distribution<std::size_t> dist(0, j);
    const std::size_t t = dist(rng);
    if (chosen.insert(t).second) {
      out.push_back(t);
    } else {
      chosen.insert(j);
      out.push_back(j);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Gram matrix of the Kronecker rows: G[a, b] = prod_k <x_k^a, x_k^b>.
inline Matrix batch_gram(std::span<const std::vector<Vector>> batch) {
  const auto m = static_cast<Eigen::Index>(batch.size());
  Matrix g = Matrix::Ones(m, m);
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index b = 0; b <= a; ++b) {
      double prod = 1.0;
      const auto& xa = batch[static_cast<std::size_t>(a)];
      const auto& xb = batch[static_cast<std::size_t>(b)];
      for (std::size_t k = 0; k < xa.size(); ++k) prod *= xa[k].dot(xb[k]);
      g(a, b) = g(b, a) = prod;
    }
  return g;
}

}  // namespace detail

/// TIHT carried out entirely in TT format: minibatch design TTs, gradient
/// steps through TT contractions and TT rounding to rank R. No object of
/// size d^l is formed.
inline TTVector recover_tiht_tt(const SequenceDataset& data, const RecoveryConfig& cfg,
                                RecoveryReport* report = nullptr,
                                const TTObserver& observer = nullptr) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("recover_tiht_tt: empty dataset");
  const std::size_t l = data.uniform_length();
  if (l == 0) throw std::invalid_argument("recover_tiht_tt: sequences must be non-empty");
  const std::size_t n = data.size();
  const auto d = static_cast<std::size_t>(data[0].x[0].size());
  const std::size_t p = data.output_dim();
  const bool full_batch = cfg.minibatch == 0 || cfg.minibatch >= n;
  const std::size_t m = full_batch ? n : cfg.minibatch;

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::vector<Vector>> xs(m);
  Matrix y = Matrix::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(p));
  TTVector design;
  double gamma = 0.0;

  auto load_batch = [&](const std::vector<std::size_t>& idx) {
    for (std::size_t a = 0; a < m; ++a) {
      const auto& ex = data[idx[a]];
      xs[a] = ex.x;
      y.row(static_cast<Eigen::Index>(a)) = ex.y.transpose();
    }
    design = tt_design_from_batch(xs);
    if (cfg.step) {
      gamma = *cfg.step;
    } else {
      const double lmax = max_eigenvalue_psd(detail::batch_gram(xs));
      gamma = lmax > 0.0 ? 1.0 / lmax : 0.0;
    }
  };

  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  if (full_batch) load_batch(all);

  Shape dims(l, d);
  dims.push_back(p);
  TTVector h = TTVector::zeros(dims);
  detail::DivergenceMonitor monitor(cfg.divergence_patience, 1e-12 * y.squaredNorm());
  RecoveryReport rep;
  double last_objective = y.squaredNorm();
  for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
    if (!full_batch) load_batch(detail::sample_without_replacement(n, m, rng));
    const Matrix residual = y - tt_design_apply(design, h);
    const double objective = residual.squaredNorm();
    if (full_batch) {
      monitor.update(objective, it, "recover_tiht_tt");
    } else if (!std::isfinite(objective)) {
      throw DivergenceError("recover_tiht_tt: non-finite objective at iteration " +
                            std::to_string(it));
    }
    last_objective = objective;
    TTVector step = tt_scale(tt_design_apply_adjoint(design, residual), gamma);
    TTVector next = tt_round(tt_add(h, step), cfg.rank);
    const double diff = tt_norm(tt_add(next, tt_scale(h, -1.0)));
    const double norm = tt_norm(next);
    if (!std::isfinite(diff) || !std::isfinite(norm)) {
      throw DivergenceError("recover_tiht_tt: non-finite iterate at iteration " +
                            std::to_string(it));
    }
    h = std::move(next);
    rep.iterations = it;
    rep.step = gamma;
    if (observer) observer(it, h);
    const double change = diff == 0.0 ? 0.0 : diff / std::max(norm, std::numeric_limits<double>::min());
    if (change < cfg.rel_tol) {
      rep.converged = true;
      break;
    }
  }
  if (full_batch) {
    last_objective = (y - tt_design_apply(design, h)).squaredNorm();
  }
  rep.objective = last_objective;
  if (report) *report = rep;
  return h;
}

/// Dispatch on cfg.method for the dense methods.
inline DenseTensor recover_dense(const RegressionData& rd, const RecoveryConfig& cfg,
                                 RecoveryReport* report = nullptr) {
  switch (cfg.method) {
    case RecoveryMethod::LeastSquares: return recover_least_squares(rd, report);
    case RecoveryMethod::NuclearNorm: return recover_nuclear_norm(rd, cfg, report);
    case RecoveryMethod::IHT: return recover_iht(rd, cfg, report);
    case RecoveryMethod::TIHT: return recover_tiht(rd, cfg, report);
    case RecoveryMethod::TIHT_TT:
      throw std::invalid_argument("recover_dense: TIHT_TT works on datasets, use recover_tiht_tt");
  }
  throw std::invalid_argument("recover_dense: unknown method");
}

}  // namespace tt2rnn
