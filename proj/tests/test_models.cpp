#include "tt2rnn/models.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace tt2rnn;

namespace {

Vector random_vector(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vector v(static_cast<Eigen::Index>(d));
  for (auto& x : v) x = n(rng);
  return v;
}

std::vector<Vector> random_sequence(std::size_t len, std::size_t d, std::mt19937_64& rng) {
  std::vector<Vector> xs;
  for (std::size_t t = 0; t < len; ++t) xs.push_back(random_vector(d, rng));
  return xs;
}

VvWFA random_wfa(std::size_t n, std::size_t d, std::size_t p, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 0.5);
  VvWFA a;
  a.alpha = Vector::NullaryExpr(static_cast<Eigen::Index>(n), [&] { return g(rng); });
  for (std::size_t s = 0; s < d; ++s) {
    a.transitions.push_back(Matrix::NullaryExpr(static_cast<Eigen::Index>(n),
                                                static_cast<Eigen::Index>(n),
                                                [&] { return g(rng); }));
  }
  a.Omega = Matrix::NullaryExpr(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(n),
                                [&] { return g(rng); });
  return a;
}

// Running sum of (x[1] - x[0]) with a bias channel x[2] = 1.
Linear2RNN arithmetic_rnn() {
  DenseTensor A({2, 3, 2});
  A.at({0, 2, 0}) = 1;
  A.at({1, 1, 0}) = 1;
  A.at({1, 0, 0}) = -1;
  A.at({1, 2, 1}) = 1;
  Vector h0(2);
  h0 << 0, 1;
  Matrix omega(1, 2);
  omega << 1, 0;
  return {h0, A, omega};
}

std::vector<std::vector<std::size_t>> all_words(std::size_t d, std::size_t max_len) {
  std::vector<std::vector<std::size_t>> out = {{}};
  std::vector<std::vector<std::size_t>> frontier = {{}};
  for (std::size_t l = 1; l <= max_len; ++l) {
    std::vector<std::vector<std::size_t>> next;
    for (const auto& w : frontier)
      for (std::size_t s = 0; s < d; ++s) {
        auto v = w;
        v.push_back(s);
        next.push_back(v);
      }
    out.insert(out.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  return out;
}

}  // namespace

TEST(RnnEvaluate, EmptySequenceIsOmegaH0) {
  auto m = random_rnn(3, 2, 2, 0.5, std::uint64_t{1});
  EXPECT_LT((rnn_evaluate(m, std::vector<Vector>{}) - m.Omega * m.h0).norm(), 1e-15);
}

TEST(RnnEvaluate, ArithmeticExample) {
  std::vector<Vector> xs = {Vector(3), Vector(3)};
  xs[0] << 1, 2, 1;
  xs[1] << 3, 5, 1;
  EXPECT_NEAR(rnn_evaluate(arithmetic_rnn(), xs)[0], 3.0, 1e-14);
}

TEST(RnnEvaluate, ArithmeticMatchesClosedForm) {
  std::mt19937_64 rng(2);
  auto m = arithmetic_rnn();
  for (int trial = 0; trial < 100; ++trial) {
    auto xs = random_sequence(1 + static_cast<std::size_t>(trial % 7), 3, rng);
    double want = 0;
    for (auto& x : xs) {
      x[2] = 1.0;
      want += x[1] - x[0];
    }
    EXPECT_NEAR(rnn_evaluate(m, xs)[0], want, 1e-10);
  }
}

TEST(RnnEvaluate, DimensionMismatchThrows) {
  auto m = random_rnn(2, 3, 1, 1.0, std::uint64_t{3});
  std::vector<Vector> xs = {Vector::Ones(2)};
  EXPECT_THROW(rnn_evaluate(m, xs), std::invalid_argument);
}

TEST(RnnEvaluate, StepOutputsEndWithFinalOutput) {
  std::mt19937_64 rng(4);
  auto m = random_rnn(3, 2, 2, 0.5, rng);
  auto xs = random_sequence(4, 2, rng);
  auto ys = rnn_evaluate_steps(m, xs);
  ASSERT_EQ(ys.size(), 4u);
  for (std::size_t t = 0; t < 4; ++t) {
    std::vector<Vector> prefix(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(t + 1));
    EXPECT_LT((ys[t] - rnn_evaluate(m, prefix)).norm(), 1e-14);
  }
}

TEST(RnnEvaluate, Multilinear) {
  std::mt19937_64 rng(5);
  auto m = random_rnn(3, 3, 2, 0.6, rng);
  for (int trial = 0; trial < 50; ++trial) {
    auto xs = random_sequence(4, 3, rng);
    const std::size_t j = static_cast<std::size_t>(trial % 4);
    const Vector base = rnn_evaluate(m, xs);
    auto scaled = xs;
    scaled[j] *= -2.5;
    EXPECT_LT((rnn_evaluate(m, scaled) + 2.5 * base).norm(), 1e-9 * (1 + base.norm()));
    auto other = xs;
    other[j] = random_vector(3, rng);
    auto sum = xs;
    sum[j] = xs[j] + other[j];
    const Vector lhs = rnn_evaluate(m, sum);
    const Vector rhs = base + rnn_evaluate(m, other);
    EXPECT_LT((lhs - rhs).norm(), 1e-9 * (1 + rhs.norm()));
  }
}

TEST(WfaEvaluate, EmptyAndSingleSymbol) {
  std::mt19937_64 rng(6);
  auto a = random_wfa(3, 2, 2, rng);
  EXPECT_LT((wfa_evaluate(a, {}) - a.Omega * a.alpha).norm(), 1e-15);
  EXPECT_LT((wfa_evaluate(a, {1}) - a.Omega * a.transitions[1].transpose() * a.alpha).norm(),
            1e-14);
}

TEST(WfaEvaluate, MatrixChainOracle) {
  std::mt19937_64 rng(7);
  auto a = random_wfa(3, 3, 2, rng);
  Matrix chain = a.transitions[2] * a.transitions[0] * a.transitions[1] * a.transitions[2];
  Vector want = a.Omega * chain.transpose() * a.alpha;
  EXPECT_LT((wfa_evaluate(a, {2, 0, 1, 2}) - want).norm(), 1e-13);
}

TEST(WfaEvaluate, SymbolOutOfRangeThrows) {
  std::mt19937_64 rng(8);
  auto a = random_wfa(2, 2, 1, rng);
  EXPECT_THROW(wfa_evaluate(a, {0, 2}), std::invalid_argument);
}

TEST(Conversion, RoundTripIsExact) {
  std::mt19937_64 rng(9);
  auto a = random_wfa(3, 2, 2, rng);
  auto b = wfa_from_rnn(rnn_from_wfa(a));
  EXPECT_EQ(b.alpha, a.alpha);
  EXPECT_EQ(b.Omega, a.Omega);
  ASSERT_EQ(b.transitions.size(), a.transitions.size());
  for (std::size_t s = 0; s < a.d(); ++s) EXPECT_EQ(b.transitions[s], a.transitions[s]);
  auto m = random_rnn(3, 2, 2, 1.0, rng);
  auto m2 = rnn_from_wfa(wfa_from_rnn(m));
  EXPECT_EQ(m2.A, m.A);
}

TEST(Conversion, EquivalentOnAllShortWords) {
  std::mt19937_64 rng(10);
  auto a = random_wfa(3, 2, 2, rng);
  auto m = rnn_from_wfa(a);
  for (const auto& w : all_words(2, 4)) {
    const Vector fw = wfa_evaluate(a, w);
    const Vector fm = rnn_evaluate(m, one_hot_sequence(w, 2));
    EXPECT_LT((fw - fm).norm(), 1e-10);
  }
}

TEST(Conversion, OneStateLengthWeights) {
  // alpha = 1, A^0 = 2, A^1 = -1, Omega = 3: f(w) = 3 * 2^{#0} * (-1)^{#1}.
  VvWFA a;
  a.alpha = Vector::Ones(1);
  a.transitions = {Matrix::Constant(1, 1, 2.0), Matrix::Constant(1, 1, -1.0)};
  a.Omega = Matrix::Constant(1, 1, 3.0);
  auto m = rnn_from_wfa(a);
  for (const auto& w : all_words(2, 4)) {
    double want = 3.0;
    for (auto s : w) want *= s == 0 ? 2.0 : -1.0;
    EXPECT_DOUBLE_EQ(rnn_evaluate(m, one_hot_sequence(w, 2))[0], want);
  }
}

TEST(ChangeOfBasis, IdentityKeepsModel) {
  auto m = random_rnn(3, 2, 2, 1.0, std::uint64_t{11});
  auto m2 = change_of_basis(m, Matrix::Identity(3, 3));
  EXPECT_LT((m2.h0 - m.h0).norm(), 1e-15);
  EXPECT_LT(relative_error(m2.A, m.A), 1e-15);
  EXPECT_LT((m2.Omega - m.Omega).norm(), 1e-15);
}

TEST(ChangeOfBasis, ScaledAndOrthogonalPreserveOutputs) {
  std::mt19937_64 rng(12);
  auto m = random_rnn(4, 3, 2, 0.5, rng);
  Matrix q = Eigen::HouseholderQR<Matrix>(Matrix::NullaryExpr(4, 4, [&] {
               return std::normal_distribution<double>(0, 1)(rng);
             })).householderQ();
  for (const Matrix& P : {Matrix(2.0 * Matrix::Identity(4, 4)), q}) {
    auto m2 = change_of_basis(m, P);
    EXPECT_EQ(m2.n(), m.n());
    for (int trial = 0; trial < 20; ++trial) {
      auto xs = random_sequence(5, 3, rng);
      const Vector a = rnn_evaluate(m, xs);
      const Vector b = rnn_evaluate(m2, xs);
      EXPECT_LT((a - b).norm(), 1e-8 * a.norm());
    }
  }
}

TEST(ChangeOfBasis, SingularThrows) {
  auto m = random_rnn(2, 2, 1, 1.0, std::uint64_t{13});
  Matrix P(2, 2);
  P << 1, 2, 2, 4;
  EXPECT_THROW(change_of_basis(m, P), std::invalid_argument);
}

TEST(Hankel, LengthOneColumns) {
  auto m = random_rnn(3, 4, 2, 0.5, std::uint64_t{14});
  auto h = hankel_dense(m, 1);
  EXPECT_EQ(h.shape(), (Shape{4, 2}));
  for (std::size_t i = 0; i < 4; ++i) {
    const Vector f = rnn_evaluate(m, std::vector<Vector>{basis_vector(4, i)});
    for (std::size_t o = 0; o < 2; ++o) EXPECT_NEAR(h.at({i, o}), f[o], 1e-14);
  }
}

TEST(Hankel, LengthZeroIsEmptyWordValue) {
  auto m = random_rnn(3, 2, 2, 0.5, std::uint64_t{15});
  auto h = hankel_dense(m, 0);
  EXPECT_EQ(h.shape(), (Shape{2}));
  EXPECT_LT((h.as_vector() - m.Omega * m.h0).norm(), 1e-15);
}

TEST(Hankel, EnumerationOracle) {
  auto m = random_rnn(2, 2, 3, 0.8, std::uint64_t{16});
  auto tt = hankel_of_rnn(m, 3);
  EXPECT_LE(tt.max_rank(), 2u);
  auto h = tt_to_dense(tt);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t k = 0; k < 2; ++k) {
        std::vector<std::size_t> w = {i, j, k};
        const Vector f = rnn_evaluate(m, one_hot_sequence(w, 2));
        for (std::size_t o = 0; o < 3; ++o) EXPECT_NEAR(h.at({i, j, k, o}), f[o], 1e-13);
      }
}

TEST(Hankel, ContractionIdentityOnContinuousInputs) {
  std::mt19937_64 rng(17);
  auto m = random_rnn(3, 3, 2, 0.5, rng);
  const auto h = hankel_dense(m, 4);
  const Matrix hm = unfold(h, 4);
  for (int trial = 0; trial < 20; ++trial) {
    auto xs = random_sequence(4, 3, rng);
    const Vector want = rnn_evaluate(m, xs);
    const Vector got = hm.transpose() * kron(xs);
    EXPECT_LT((got - want).norm(), 1e-9 * (1 + want.norm()));
  }
}

TEST(RandomRnn, ZeroScaleAndDeterminism) {
  auto z = random_rnn(3, 2, 2, 0.0, std::uint64_t{18});
  EXPECT_EQ(z.A.norm(), 0.0);
  EXPECT_EQ(z.h0.norm(), 0.0);
  auto a = random_rnn(5, 3, 2, 0.2, std::uint64_t{19});
  auto b = random_rnn(5, 3, 2, 0.2, std::uint64_t{19});
  EXPECT_EQ(a.A, b.A);
  EXPECT_EQ(a.h0, b.h0);
  EXPECT_EQ(a.Omega, b.Omega);
}

TEST(RandomRnn, HankelMatricizationHasFullRank) {
  int full = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto m = random_rnn(5, 3, 2, 0.2, seed);
    Matrix hm = unfold(hankel_dense(m, 4), 2);
    if (numerical_rank(hm, 1e-10) == 5) ++full;
  }
  EXPECT_EQ(full, 20);
}

TEST(Gradients, ZeroResidualGivesZeroGradient) {
  std::mt19937_64 rng(20);
  auto m = random_rnn(3, 2, 2, 0.5, rng);
  std::vector<SequenceExample> batch;
  for (int i = 0; i < 5; ++i) {
    SequenceExample ex;
    ex.x = random_sequence(3, 2, rng);
    ex.y = rnn_evaluate(m, ex.x);
    batch.push_back(ex);
  }
  auto g = rnn_gradients(m, batch);
  EXPECT_LT(g.h0.norm() + g.A.norm() + g.Omega.norm(), 1e-14);
  EXPECT_LT(g.loss, 1e-28);
}

TEST(Gradients, SingleLengthOneOmegaForm) {
  std::mt19937_64 rng(21);
  auto m = random_rnn(3, 2, 2, 0.5, rng);
  SequenceExample ex;
  ex.x = {random_vector(2, rng)};
  ex.y = random_vector(2, rng);
  const auto hs = rnn_states(m, ex.x);
  const Vector r = m.Omega * hs[1] - ex.y;
  std::vector<SequenceExample> batch = {ex};
  auto g = rnn_gradients(m, batch);
  // loss = |r|^2 / p, so dLoss/dOmega = (2 / p) r h1^T
  EXPECT_LT((g.Omega - r * hs[1].transpose()).norm(), 1e-14);
}

namespace {

std::vector<double*> parameters(Linear2RNN& m) {
  std::vector<double*> ps;
  for (Eigen::Index i = 0; i < m.h0.size(); ++i) ps.push_back(&m.h0[i]);
  for (auto& v : m.A.data()) ps.push_back(&v);
  for (Eigen::Index i = 0; i < m.Omega.size(); ++i) ps.push_back(m.Omega.data() + i);
  return ps;
}

std::vector<double> flat_gradient(const RnnGradients& g) {
  std::vector<double> out(g.h0.data(), g.h0.data() + g.h0.size());
  out.insert(out.end(), g.A.values().begin(), g.A.values().end());
  out.insert(out.end(), g.Omega.data(), g.Omega.data() + g.Omega.size());
  return out;
}

}  // namespace

TEST(Gradients, MatchFiniteDifferences) {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 5; ++trial) {
    auto m = random_rnn(3, 2, 2, 0.6, rng);
    std::vector<SequenceExample> batch;
    for (int i = 0; i < 4; ++i) {
      SequenceExample ex;
      ex.x = random_sequence(1 + static_cast<std::size_t>(i), 2, rng);
      ex.y = random_vector(2, rng);
      if (trial % 2 == 1) {
        for (std::size_t t = 0; t < ex.x.size(); ++t) ex.y_steps.push_back(random_vector(2, rng));
        ex.y = ex.y_steps.back();
      }
      batch.push_back(ex);
    }
    const auto g = flat_gradient(rnn_gradients(m, batch));
    auto ps = parameters(m);
    ASSERT_EQ(ps.size(), g.size());
    std::vector<double> fd(ps.size());
    for (std::size_t k = 0; k < ps.size(); ++k) {
      const double orig = *ps[k];
      *ps[k] = orig + 1e-5;
      const double up = rnn_loss(m, batch);
      *ps[k] = orig - 1e-5;
      const double down = rnn_loss(m, batch);
      *ps[k] = orig;
      fd[k] = (up - down) / 2e-5;
    }
    double num = 0, den = 0;
    for (std::size_t k = 0; k < g.size(); ++k) {
      num += (g[k] - fd[k]) * (g[k] - fd[k]);
      den += fd[k] * fd[k];
    }
    EXPECT_LT(std::sqrt(num / den), 1e-4);
  }
}
