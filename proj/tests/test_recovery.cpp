#include "tt2rnn/data_io.hpp"
#include "tt2rnn/recovery.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace tt2rnn;

namespace {

SequenceDataset labelled(const Linear2RNN& m, std::size_t count, std::size_t l, double sigma2,
                         std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_dataset(count, l, m.d(), sigma2, rng,
                        [&](const std::vector<Vector>& xs) { return rnn_evaluate(m, xs); });
}

double hankel_error(const DenseTensor& est, const Linear2RNN& m, std::size_t l) {
  return relative_error(est, hankel_dense(m, l));
}

}  // namespace

TEST(BuildDesign, RowsAreKroneckerProducts) {
  const auto m = random_rnn(2, 3, 2, 0.5, 7);
  const auto ds = labelled(m, 5, 2, 0.0, 1);
  const auto rd = build_design(ds);
  ASSERT_EQ(rd.X.rows(), 5);
  ASSERT_EQ(rd.X.cols(), 9);
  EXPECT_EQ(rd.l, 2u);
  EXPECT_EQ(rd.p, 2u);
  for (std::size_t i = 0; i < 5; ++i) {
    const auto& x = ds[i].x;
    for (Eigen::Index a = 0; a < 3; ++a)
      for (Eigen::Index b = 0; b < 3; ++b)
        EXPECT_DOUBLE_EQ(rd.X(static_cast<Eigen::Index>(i), a * 3 + b), x[0][a] * x[1][b]);
  }
}

TEST(BuildDesign, RejectsMixedLengths) {
  const auto m = random_rnn(2, 2, 1, 0.5, 1);
  auto ds = labelled(m, 3, 2, 0.0, 1);
  const auto other = labelled(m, 1, 3, 0.0, 2);
  ds.push_back(other[0]);
  EXPECT_THROW(build_design(ds), std::invalid_argument);
}

TEST(BuildDesign, EmptySequencesGiveConstantColumn) {
  std::vector<SequenceExample> ex(3);
  for (auto& e : ex) e.y = Vector::Constant(1, 2.0);
  const auto rd = build_design(ex, 4);
  EXPECT_EQ(rd.X.cols(), 1);
  EXPECT_TRUE(rd.X.isApproxToConstant(1.0));
}

TEST(LeastSquares, ExactAtMinimalSampleSize) {
  const auto m = random_rnn(3, 2, 2, 0.5, 11);
  for (std::size_t l : {1u, 2u, 3u}) {
    const auto ds = labelled(m, ipow(2, l), l, 0.0, 100 + l);
    const auto est = recover_least_squares(build_design(ds));
    EXPECT_LT(hankel_error(est, m, l), 1e-8) << "l=" << l;
  }
}

TEST(LeastSquares, ZeroTargetsGiveZero) {
  const auto m = random_rnn(2, 2, 1, 0.5, 3);
  auto ds = labelled(m, 10, 2, 0.0, 4);
  for (auto& e : ds.examples()) e.y.setZero();
  const auto est = recover_least_squares(build_design(ds));
  EXPECT_DOUBLE_EQ(est.norm(), 0.0);
}

TEST(LeastSquares, UnderdeterminedInterpolates) {
  const auto m = random_rnn(3, 3, 2, 0.5, 5);
  const auto ds = labelled(m, 5, 3, 0.0, 6);
  const auto rd = build_design(ds);
  RecoveryReport rep;
  const auto est = recover_least_squares(rd, &rep);
  EXPECT_LT(rep.objective, 1e-20 + 1e-12 * rd.Y.squaredNorm());
}

TEST(NuclearNorm, MatchesLeastSquaresWhenOverdetermined) {
  const auto m = random_rnn(2, 2, 1, 0.5, 21);
  const auto ds = labelled(m, 40, 2, 0.0, 22);
  const auto rd = build_design(ds);
  RecoveryConfig cfg;
  cfg.method = RecoveryMethod::NuclearNorm;
  const auto nn = recover_nuclear_norm(rd, cfg);
  EXPECT_LT(relative_error(nn, recover_least_squares(rd)), 1e-6);
}

TEST(NuclearNorm, RecoversLowRankBelowFullSampleSize) {
  // d^l = 81 unknowns per output, rank 2 balanced matricization (9 x 9).
  const auto m = random_rnn(2, 3, 1, 0.6, 31);
  const auto ds = labelled(m, 60, 4, 0.0, 32);
  const auto rd = build_design(ds);
  RecoveryConfig cfg;
  cfg.method = RecoveryMethod::NuclearNorm;
  const auto nn = recover_nuclear_norm(rd, cfg);
  const auto ls = recover_least_squares(rd);
  EXPECT_LT(hankel_error(nn, m, 4), 1e-3);
  EXPECT_GT(hankel_error(ls, m, 4), 1e-2);
}

TEST(IterativeHardThresholding, ConvergesToLeastSquaresWithFullRank) {
  const auto m = random_rnn(2, 2, 2, 0.5, 41);
  const auto ds = labelled(m, 30, 2, 0.1, 42);
  const auto rd = build_design(ds);
  RecoveryConfig cfg;
  cfg.rank = 2;
  cfg.rel_tol = 1e-12;
  cfg.max_iters = 20000;
  const auto ls = recover_least_squares(rd);
  RecoveryReport rep;
  EXPECT_LT(relative_error(recover_iht(rd, cfg, &rep), ls), 1e-6);
  EXPECT_TRUE(rep.converged);
  EXPECT_LT(relative_error(recover_tiht(rd, cfg), ls), 1e-6);
}

TEST(IterativeHardThresholding, ZeroStepReturnsZero) {
  const auto m = random_rnn(2, 2, 1, 0.5, 43);
  const auto rd = build_design(labelled(m, 10, 2, 0.0, 44));
  RecoveryConfig cfg;
  cfg.step = 0.0;
  cfg.rank = 2;
  RecoveryReport rep;
  EXPECT_DOUBLE_EQ(recover_iht(rd, cfg, &rep).norm(), 0.0);
  EXPECT_DOUBLE_EQ(recover_tiht(rd, cfg).norm(), 0.0);
}

TEST(IterativeHardThresholding, RankOneTargetRecoveredExactly) {
  const auto m = random_rnn(1, 2, 1, 0.8, 51);
  const auto ds = labelled(m, 30, 3, 0.0, 52);
  const auto rd = build_design(ds);
  RecoveryConfig cfg;
  cfg.rank = 1;
  cfg.rel_tol = 1e-13;
  cfg.max_iters = 20000;
  EXPECT_LT(hankel_error(recover_tiht(rd, cfg), m, 3), 1e-6);
  EXPECT_LT(hankel_error(recover_iht(rd, cfg), m, 3), 1e-6);
}

TEST(IterativeHardThresholding, ObserverSeesEveryIterate) {
  const auto m = random_rnn(2, 2, 1, 0.5, 53);
  const auto rd = build_design(labelled(m, 10, 2, 0.0, 54));
  RecoveryConfig cfg;
  cfg.rank = 2;
  cfg.max_iters = 7;
  cfg.rel_tol = 0.0;
  std::size_t calls = 0;
  RecoveryReport rep;
  recover_iht(rd, cfg, &rep, [&](std::size_t it, const DenseTensor&) { EXPECT_EQ(it, ++calls); });
  EXPECT_EQ(calls, 7u);
  EXPECT_EQ(rep.iterations, 7u);
}

TEST(IterativeHardThresholding, LargeStepRaisesDivergence) {
  const auto m = random_rnn(2, 2, 1, 0.5, 61);
  const auto rd = build_design(labelled(m, 20, 2, 0.0, 62));
  RecoveryConfig cfg;
  cfg.rank = 4;
  cfg.step = 50.0;
  cfg.max_iters = 500;
  EXPECT_THROW(recover_iht(rd, cfg), DivergenceError);
}

TEST(TihtTT, FullBatchMatchesDenseTiht) {
  const auto m = random_rnn(2, 2, 2, 0.5, 71);
  const auto ds = labelled(m, 25, 3, 0.05, 72);
  const auto rd = build_design(ds);
  RecoveryConfig cfg;
  cfg.rank = 2;
  cfg.max_iters = 40;
  cfg.rel_tol = 0.0;
  const auto dense = recover_tiht(rd, cfg);
  RecoveryReport rep;
  const auto tt = recover_tiht_tt(ds, cfg, &rep);
  EXPECT_LE(tt.max_rank(), 2u);
  EXPECT_LT(relative_error(tt_to_dense(tt), dense), 1e-8);
  EXPECT_EQ(rep.iterations, 40u);
}

TEST(TihtTT, MinibatchConvergesOnNoiselessData) {
  const auto m = random_rnn(2, 2, 1, 0.6, 81);
  const auto ds = labelled(m, 200, 2, 0.0, 82);
  RecoveryConfig cfg;
  cfg.rank = 2;
  cfg.minibatch = 50;
  cfg.max_iters = 3000;
  cfg.rel_tol = 1e-10;
  cfg.seed = 3;
  const auto tt = recover_tiht_tt(ds, cfg);
  EXPECT_LT(hankel_error(tt_to_dense(tt), m, 2), 1e-4);
}

TEST(RecoveryMethodNames, RoundTrip) {
  for (auto m : {RecoveryMethod::LeastSquares, RecoveryMethod::NuclearNorm, RecoveryMethod::IHT,
                 RecoveryMethod::TIHT, RecoveryMethod::TIHT_TT}) {
    EXPECT_EQ(parse_recovery_method(to_string(m)), m);
  }
  EXPECT_THROW(parse_recovery_method("bogus"), std::invalid_argument);
}
