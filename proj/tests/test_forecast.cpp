#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "ngrc/forecast.hpp"
#include "oracles.hpp"

using namespace ngrc;

namespace {

ReadoutWeights readout(ReadoutMode mode, std::size_t L, Eigen::MatrixXd W, FeatureConfig cfg = {}) {
  ReadoutWeights w;
  w.mode = mode;
  w.L = L;
  w.W = std::move(W);
  w.cfg = cfg;
  return w;
}

// Weights that keep a forecast bounded for a while: a mild pull toward the
// newest sample plus small random couplings.
ReadoutWeights gentle(ReadoutMode mode, std::size_t L, std::mt19937_64& rng) {
  const FeatureConfig cfg{};
  const Eigen::Index rows = mode == ReadoutMode::Shared ? 1 : static_cast<Eigen::Index>(L);
  Eigen::MatrixXd W = oracle::random_matrix(rows, 136, rng, 0.01);
  W.col(1 + 2).array() += 0.9;  // x_l(t_m)
  return readout(mode, L, W, cfg);
}

}  // namespace

TEST(OneStep, ZeroWeightsGiveZero) {
  const auto w = readout(ReadoutMode::PerLocation, 6, Eigen::MatrixXd::Zero(6, 136));
  const Eigen::VectorXd out = one_step_predict(w, Eigen::MatrixXd::Random(6, 3));
  EXPECT_EQ(out, Eigen::VectorXd::Zero(6));
}

TEST(OneStep, SharedKeepsUniformFieldUniform) {
  std::mt19937_64 rng(1);
  const auto w = readout(ReadoutMode::Shared, 8, oracle::random_matrix(1, 136, rng));
  Eigen::MatrixXd h(8, 3);
  for (int c = 0; c < 3; ++c) h.col(c).setConstant(0.3 * (c + 1));
  const Eigen::VectorXd out = one_step_predict(w, h);
  for (int l = 1; l < 8; ++l) EXPECT_EQ(out[l], out[0]);
}

TEST(OneStep, ChecksShapes) {
  const auto w = readout(ReadoutMode::PerLocation, 6, Eigen::MatrixXd::Zero(6, 136));
  EXPECT_THROW(one_step_predict(w, Eigen::MatrixXd::Zero(6, 2)), Error);
  try {
    one_step_predict(w, Eigen::MatrixXd::Zero(7, 3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Incompatible);
  }
  const auto bad = readout(ReadoutMode::PerLocation, 6, Eigen::MatrixXd::Zero(6, 100));
  EXPECT_THROW(one_step_predict(bad, Eigen::MatrixXd::Zero(6, 3)), Error);
}

TEST(OneStep, NonFiniteOutputIsReported) {
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(5, 136);
  W(0, 0) = INFINITY;
  try {
    one_step_predict(readout(ReadoutMode::PerLocation, 5, W), Eigen::MatrixXd::Ones(5, 3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NumericalBlowup);
  }
}

TEST(OneStep, MatchesFeatureDotProduct) {
  std::mt19937_64 rng(2);
  const auto w = readout(ReadoutMode::PerLocation, 7, oracle::random_matrix(7, 136, rng));
  const Eigen::MatrixXd h = oracle::random_matrix(7, 3, rng);
  TrajectoryGrid g;
  g.data = h;
  const Eigen::VectorXd out = one_step_predict(w, h);
  for (std::size_t l = 0; l < 7; ++l)
    EXPECT_NEAR(out[static_cast<Eigen::Index>(l)],
                w.W.row(static_cast<Eigen::Index>(l)).dot(total_features(g, l, 2, w.cfg)), 1e-12);
}

TEST(ClosedLoop, FirstStepEqualsOpenLoop) {
  std::mt19937_64 rng(3);
  for (auto mode : {ReadoutMode::PerLocation, ReadoutMode::Shared}) {
    const auto w = gentle(mode, 9, rng);
    const Eigen::MatrixXd warm = oracle::random_matrix(9, 3, rng);
    const ClosedLoopRun one = closed_loop_forecast(w, warm, 1);
    ASSERT_EQ(one.predicted.cols(), 1);
    EXPECT_EQ(Eigen::VectorXd(one.predicted.col(0)), one_step_predict(w, warm));
    const ClosedLoopRun many = closed_loop_forecast(w, warm, 20);
    EXPECT_EQ(Eigen::VectorXd(many.predicted.col(0)), one_step_predict(w, warm));
  }
}

TEST(ClosedLoop, FeedsOutputsBack) {
  std::mt19937_64 rng(4);
  const auto w = gentle(ReadoutMode::PerLocation, 6, rng);
  Eigen::MatrixXd hist = oracle::random_matrix(6, 3, rng);
  const ClosedLoopRun run = closed_loop_forecast(w, hist, 5);
  for (int s = 0; s < 5; ++s) {
    const Eigen::VectorXd next = one_step_predict(w, hist);
    EXPECT_EQ(Eigen::VectorXd(run.predicted.col(s)), next);
    hist.leftCols(2) = hist.rightCols(2).eval();
    hist.col(2) = next;
  }
}

TEST(ClosedLoop, SharedShiftCovariance) {
  std::mt19937_64 rng(5);
  const std::size_t L = 12;
  const auto w = gentle(ReadoutMode::Shared, L, rng);
  const Eigen::MatrixXd warm = oracle::random_matrix(static_cast<Eigen::Index>(L), 3, rng);
  const ClosedLoopRun base = closed_loop_forecast(w, warm, 200);
  ASSERT_FALSE(base.diverged);
  for (std::ptrdiff_t s : {1, 5, 11, -3}) {
    const ClosedLoopRun shifted = closed_loop_forecast(w, cyclic_shift_rows(warm, s), 200);
    EXPECT_EQ(shifted.predicted, cyclic_shift_rows(base.predicted, s)) << "shift " << s;
  }
}

TEST(ClosedLoop, Deterministic) {
  std::mt19937_64 rng(6);
  const auto w = gentle(ReadoutMode::PerLocation, 10, rng);
  const Eigen::MatrixXd warm = oracle::random_matrix(10, 3, rng);
  EXPECT_EQ(closed_loop_forecast(w, warm, 100).predicted, closed_loop_forecast(w, warm, 100).predicted);
}

TEST(ClosedLoop, DivergenceTruncates) {
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(1, 136);
  W(0, 1 + 2) = 2.0;  // doubles the newest sample every step
  const auto w = readout(ReadoutMode::Shared, 5, W);
  const ClosedLoopRun run = closed_loop_forecast(w, Eigen::MatrixXd::Ones(5, 3), 50);
  EXPECT_TRUE(run.diverged);
  EXPECT_EQ(run.diverged_step, 9u);  // 2^10 = 1024 is the first value past 1e3
  EXPECT_EQ(run.predicted.cols(), 9);
  EXPECT_EQ(run.predicted(0, 8), 512.0);
}

TEST(ClosedLoop, EarlyStop) {
  std::mt19937_64 rng(7);
  const auto w = gentle(ReadoutMode::PerLocation, 6, rng);
  const ClosedLoopRun run =
      closed_loop_forecast(w, Eigen::MatrixXd::Ones(6, 3), 30, [](std::size_t step, const Eigen::VectorXd&) {
        return step < 4;
      });
  EXPECT_TRUE(run.stopped_early);
  EXPECT_EQ(run.predicted.cols(), 5);
  EXPECT_THROW(closed_loop_forecast(w, Eigen::MatrixXd::Ones(6, 3), 0), Error);
}

TEST(Nrmse, Identities) {
  std::mt19937_64 rng(8);
  const Eigen::MatrixXd a = oracle::random_matrix(5, 7, rng);
  const Eigen::MatrixXd b = oracle::random_matrix(5, 7, rng);
  for (double v : nrmse(a, a).values) EXPECT_EQ(v, 0.0);
  for (double v : nrmse(a, (a.array() + 1.0).matrix()).values) EXPECT_NEAR(v, 1.0, 1e-15);
  EXPECT_EQ(nrmse(a, b).values, nrmse(b, a).values);
  EXPECT_THROW(nrmse(a, Eigen::MatrixXd::Zero(5, 6)), Error);
}

TEST(Nrmse, TwoSiteExample) {
  Eigen::MatrixXd truth = Eigen::MatrixXd::Zero(2, 1);
  Eigen::MatrixXd pred(2, 1);
  pred << 3, 4;
  const NrmseSeries s = nrmse(truth, pred);
  ASSERT_EQ(s.values.size(), 1u);
  EXPECT_DOUBLE_EQ(s.values[0], std::sqrt(12.5));
  EXPECT_NEAR(s.values[0], 3.5355, 1e-4);
}

TEST(Horizon, FirstCrossing) {
  const NrmseSeries s{{0.1, 0.2, 0.35, 0.5}, 0.01};
  const Horizon h = prediction_horizon(s, 0.3);
  EXPECT_DOUBLE_EQ(h.time, 0.02);
  EXPECT_EQ(h.index, 2u);
  EXPECT_FALSE(h.censored);
  EXPECT_EQ(prediction_horizon({{0.1, 0.3}, 0.01}, 0.3).index, 1u);  // >= counts
}

TEST(Horizon, CensoredAtDuration) {
  const Horizon h = prediction_horizon({{0.1, 0.1, 0.1}, 0.01}, 0.3);
  EXPECT_TRUE(h.censored);
  EXPECT_DOUBLE_EQ(h.time, 0.03);
  EXPECT_THROW(prediction_horizon({{}, 0.01}), Error);
  EXPECT_THROW(prediction_horizon({{0.1}, 0.01}, 0.0), Error);
}

TEST(Horizon, MonotoneInThreshold) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    NrmseSeries s{{}, 0.01};
    for (int i = 0; i < 100; ++i) s.values.push_back(u(rng));
    double prev = -1.0;
    for (double th = 0.05; th <= 1.2; th += 0.05) {
      const double h = prediction_horizon(s, th).time;
      EXPECT_GE(h, prev);
      prev = h;
    }
  }
}
