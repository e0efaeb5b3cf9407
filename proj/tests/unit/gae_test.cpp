#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "fixtures.hpp"

using namespace tabemb;

namespace {

struct Fixture {
  DenseMatrix propagation, target, weights;
};

// Random symmetric graph on n nodes, random target in (0, 1), random W.
Fixture random_fixture(std::size_t n, std::size_t d, std::uint64_t seed) {
  SplitMix64 rng(seed);
  DenseMatrix a = DenseMatrix::Zero(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j)
      if (rng.uniform() < 0.6) a(i, j) = a(j, i) = rng.uniform(0.1, 3.0);
  Fixture f{gcn_propagation(a), DenseMatrix(n, n), DenseMatrix(n, d)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) f.target(i, j) = rng.uniform(0.05, 0.95);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) f.weights(i, j) = rng.uniform(-1.5, 1.5);
  return f;
}

DenseMatrix toy_target() { return transition(adjacency(fixtures::build(fixtures::toy_table()).graph)).values; }
DenseMatrix toy_propagation() { return gcn_propagation(adjacency(fixtures::build(fixtures::toy_table()).graph)); }

}  // namespace

TEST(Forward, ZeroWeights) {
  GaeModel m{DenseMatrix::Identity(3, 3), DenseMatrix::Zero(3, 2)};
  const auto r = forward(m);
  EXPECT_TRUE(r.embeddings.isZero());
  EXPECT_TRUE(r.reconstruction.isApproxToConstant(0.5, 0.0));
}

TEST(Forward, Scalar) {
  GaeModel m{DenseMatrix::Ones(1, 1), DenseMatrix::Constant(1, 1, 1.5)};
  const auto r = forward(m);
  EXPECT_EQ(r.embeddings(0, 0), 1.5);
  EXPECT_DOUBLE_EQ(r.reconstruction(0, 0), 1.0 / (1.0 + std::exp(-2.25)));
}

TEST(Forward, MatchesStraightLineOracle) {
  const auto m = init_model(toy_propagation(), 3, 42);
  const auto r = forward(m);
  const auto z = fixtures::matmul(fixtures::to_grid(m.propagation), fixtures::to_grid(m.weights));
  for (std::size_t i = 0; i < z.size(); ++i) {
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(r.embeddings(i, k), z[i][k], 1e-14);
    for (std::size_t j = 0; j < z.size(); ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < 3; ++k) dot += z[i][k] * z[j][k];
      EXPECT_NEAR(r.reconstruction(i, j), 1.0 / (1.0 + std::exp(-dot)), 1e-14);
    }
  }
}

TEST(Forward, DecoderStaysInOpenUnitInterval) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    auto f = random_fixture(7, 3, s);
    const auto r = forward({f.propagation, f.weights});
    EXPECT_GT(r.reconstruction.minCoeff(), 0.0);
    EXPECT_LT(r.reconstruction.maxCoeff(), 1.0);
  }
}

TEST(Init, GlorotRangeAndDeterminism) {
  const auto a = init_model(toy_propagation(), 4, 9);
  const double s = std::sqrt(6.0 / (16 + 4));
  EXPECT_LE(a.weights.cwiseAbs().maxCoeff(), s);
  EXPECT_EQ(a.weights, init_model(toy_propagation(), 4, 9).weights);
  EXPECT_NE(a.weights, init_model(toy_propagation(), 4, 10).weights);
}

TEST(Loss, HandValues) {
  DenseMatrix t = DenseMatrix::Zero(2, 2), r(2, 2);
  r << 3, 4, 0, 0;
  EXPECT_EQ(loss(r, t, 0.0), 5.0);
  EXPECT_EQ(loss(r, t, 1.0), 7.0);
  EXPECT_EQ(loss(r, t, 0.5), 6.0);
  EXPECT_EQ(loss(t, t, 0.3), 0.0);
  EXPECT_THROW(loss(r, DenseMatrix::Zero(3, 3), 0.0), InvalidArgument);
}

TEST(Gradient, MatchesFiniteDifferences) {
  for (double alpha : {0.0, 0.5}) {
    for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
      const std::size_t n = 3 + seed, d = 1 + seed % 4;
      const auto f = random_fixture(n, d, seed);
      const auto analytic = gradient({f.propagation, f.weights}, f.target, alpha);
      const auto fd = fixtures::fd_gradient(fixtures::to_grid(f.propagation), fixtures::to_grid(f.weights),
                                            fixtures::to_grid(f.target), alpha);
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
          num += std::pow(analytic(i, j) - fd[i][j], 2);
          den += std::pow(fd[i][j], 2);
        }
      EXPECT_LT(std::sqrt(num / den), 1e-5) << "alpha " << alpha << " seed " << seed;
    }
  }
}

TEST(Gradient, ZeroAtExactReconstruction) {
  const auto f = random_fixture(5, 2, 8);
  GaeModel m{f.propagation, f.weights};
  const DenseMatrix t = forward(m).reconstruction;
  EXPECT_TRUE(gradient(m, t, 0.0).isZero());
  EXPECT_TRUE(gradient(m, t, 0.7).isZero());
}

TEST(Clip, Cases) {
  DenseMatrix g(1, 2);
  g << 0, 2;
  EXPECT_DOUBLE_EQ(clip_gradient(g, 1.0).norm(), 1.0);
  EXPECT_EQ(clip_gradient(g, 5.0), g);
  EXPECT_TRUE(clip_gradient(DenseMatrix::Zero(2, 2), 1e-6).isZero());
  EXPECT_THROW(clip_gradient(g, 0.0), InvalidArgument);
}

TEST(Train, ConfigValidation) {
  TrainConfig c;
  c.alpha = 1.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.learning_rate = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.dim = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.max_grad_norm = std::numeric_limits<double>::infinity();
  EXPECT_NO_THROW(c.validate());
}

TEST(Train, MaxEpochsZeroReturnsInitialModel) {
  TrainConfig c;
  c.max_epochs = 0;
  c.seed = 5;
  const auto r = train(toy_target(), toy_propagation(), c);
  EXPECT_EQ(r.trace.reason, StopReason::max_epochs);
  EXPECT_EQ(r.trace.final_epoch, 0u);
  EXPECT_EQ(r.model.weights, init_model(toy_propagation(), 3, 5).weights);
  ASSERT_EQ(r.trace.losses.size(), 1u);
}

TEST(Train, DeterministicTraces) {
  TrainConfig c;
  c.max_epochs = 3000;
  c.check_window = 1000;
  c.max_grad_norm = std::numeric_limits<double>::infinity();
  c.seed = 77;
  const auto a = train(toy_target(), toy_propagation(), c);
  const auto b = train(toy_target(), toy_propagation(), c);
  EXPECT_EQ(a.trace.losses, b.trace.losses);
  EXPECT_EQ(a.model.weights, b.model.weights);
}

TEST(Train, WindowLossesNonIncreasingAtDefaults) {
  TrainConfig c;
  c.seed = 3;
  c.check_window = 2000;
  c.rel_improvement_stop = 0.0;  // run every window
  c.max_epochs = 20000;
  const auto r = train(toy_target(), toy_propagation(), c);
  ASSERT_GE(r.trace.windows.size(), 9u);
  double prev = r.trace.losses.front().second;
  for (const auto& w : r.trace.windows) {
    EXPECT_LE(w.loss, prev);
    prev = w.loss;
  }
}

TEST(Train, UnclippedSmallStepsDecreaseMonotonically) {
  TrainConfig c;
  c.seed = 4;
  c.learning_rate = 1e-4;
  c.max_grad_norm = std::numeric_limits<double>::infinity();
  c.max_epochs = 100;
  c.log_every = 1;
  const auto r = train(toy_target(), toy_propagation(), c);
  ASSERT_EQ(r.trace.losses.size(), 101u);
  for (std::size_t i = 1; i < r.trace.losses.size(); ++i)
    EXPECT_LT(r.trace.losses[i].second, r.trace.losses[i - 1].second);
}

TEST(Train, StopsAtFirstSlowWindow) {
  TrainConfig c;
  c.seed = 6;
  c.max_grad_norm = std::numeric_limits<double>::infinity();
  c.learning_rate = 0.05;
  c.check_window = 500;
  const auto r = train(toy_target(), toy_propagation(), c);
  EXPECT_EQ(r.trace.reason, StopReason::converged);
  ASSERT_FALSE(r.trace.windows.empty());
  for (std::size_t i = 0; i + 1 < r.trace.windows.size(); ++i)
    EXPECT_GE(r.trace.windows[i].relative_improvement, c.rel_improvement_stop);
  EXPECT_LT(r.trace.windows.back().relative_improvement, c.rel_improvement_stop);
  EXPECT_EQ(r.trace.final_epoch, r.trace.windows.back().epoch);
}

TEST(Train, LossInvariantUnderNodeRelabeling) {
  const auto t = toy_target();
  const auto p = toy_propagation();
  const auto n = t.rows();
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(n);
  perm.setIdentity();
  SplitMix64 rng(12);
  for (Eigen::Index i = n; i > 1; --i) std::swap(perm.indices()[i - 1], perm.indices()[rng.below(i)]);
  const DenseMatrix w = init_model(p, 3, 1).weights;
  TrainConfig c;
  c.max_epochs = 500;
  c.max_grad_norm = std::numeric_limits<double>::infinity();
  const auto a = train(t, p, c, w);
  const DenseMatrix tp = perm * t * perm.transpose();
  const DenseMatrix pp = perm * p * perm.transpose();
  const DenseMatrix wp = perm * w;
  const auto b = train(tp, pp, c, wp);
  EXPECT_NEAR(a.trace.final_loss, b.trace.final_loss, 1e-10);
  EXPECT_TRUE((perm * a.model.weights).isApprox(b.model.weights, 1e-10));
}

TEST(Train, NonFiniteLossAborts) {
  DenseMatrix t = toy_target();
  t(0, 0) = std::numeric_limits<double>::quiet_NaN();
  TrainConfig c;
  try {
    train(t, toy_propagation(), c);
    FAIL();
  } catch (const NonFiniteLoss& e) {
    EXPECT_EQ(e.epoch(), 0u);
    EXPECT_EQ(e.trace().losses.size(), 1u);
  }
}

TEST(Trace, TextFormat) {
  TrainTrace t;
  t.losses = {{0, 1.5}, {100, 0.25}};
  std::ostringstream s;
  t.write(s);
  EXPECT_EQ(s.str(), "0\t1.5\n100\t0.25\n");
}

// sigma(ZZ^T) is symmetric, so no model gets closer to the transition target
// than its skew part.
TEST(Train, ResidualBoundedBySkewPartOfTarget) {
  const auto t = toy_target();
  const double floor = (0.5 * (t - t.transpose())).norm();
  EXPECT_GT(floor, 0.05);
  TrainConfig c;
  c.dim = 4;
  c.optimizer = Optimizer::adam;
  c.max_grad_norm = std::numeric_limits<double>::infinity();
  c.max_epochs = 3000;
  const auto r = train(t, toy_propagation(), c);
  const double residual = (forward(r.model).reconstruction - t).norm();
  EXPECT_GE(residual, floor);
  RecordProperty("skew_floor", std::to_string(floor));
  RecordProperty("residual", std::to_string(residual));
}
