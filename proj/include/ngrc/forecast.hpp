#pragma once

// Closed-loop operation of the L parallel readouts and the error measures
// used to score forecasts. Everything here works in normalized units.

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ngrc/errors.hpp"
#include "ngrc/features.hpp"
#include "ngrc/ridge.hpp"

namespace ngrc {

// Attractor values are O(1) after normalization.
inline constexpr double kDivergenceThreshold = 1e3;
inline constexpr double kDefaultHorizonThreshold = 0.3;

namespace detail {

inline void check_history(const ReadoutWeights& w, const Eigen::MatrixXd& history) {
  require(static_cast<std::size_t>(history.cols()) == w.cfg.k, ErrorKind::InvalidInput,
          "history has " + std::to_string(history.cols()) + " columns, readout expects k=" +
              std::to_string(w.cfg.k));
  require(w.W.cols() == static_cast<Eigen::Index>(w.cfg.dims().d_total), ErrorKind::Incompatible,
          "weight rows do not match the feature configuration");
  if (w.mode == ReadoutMode::PerLocation)
    require(w.W.rows() == history.rows(), ErrorKind::Incompatible,
            "readout has " + std::to_string(w.W.rows()) + " rows but history has " +
                std::to_string(history.rows()) + " locations");
  w.cfg.validate(static_cast<std::size_t>(history.rows()));
}

// Next field from a history whose last column is the newest sample.
// `features` is d_total x L scratch.
inline void predict_into(const ReadoutWeights& w, const Eigen::MatrixXd& history, Eigen::MatrixXd& features,
                         Eigen::Ref<Eigen::VectorXd> out) {
  const Eigen::Index L = history.rows();
  const Eigen::Index d = features.rows();
  for (Eigen::Index l = 0; l < L; ++l)
    fill_features(w.cfg, grid_tap(history, static_cast<std::size_t>(l), w.cfg.k - 1),
                  std::span<double>(features.col(l).data(), d));
  // One dot product per site in both modes, so every site sums in the same
  // order and a shared readout commutes exactly with cyclic shifts.
  const bool shared = w.mode == ReadoutMode::Shared;
  for (Eigen::Index l = 0; l < L; ++l) out[l] = w.W.row(shared ? 0 : l).dot(features.col(l));
}

}  // namespace detail

// history: L x k, oldest column first.
inline Eigen::VectorXd one_step_predict(const ReadoutWeights& w, const Eigen::MatrixXd& history) {
  detail::check_history(w, history);
  Eigen::MatrixXd features(static_cast<Eigen::Index>(w.cfg.dims().d_total), history.rows());
  Eigen::VectorXd out(history.rows());
  detail::predict_into(w, history, features, out);
  require(out.allFinite(), ErrorKind::NumericalBlowup, "one-step prediction is not finite");
  return out;
}

struct ClosedLoopRun {
  Eigen::MatrixXd predicted;  // L x steps actually produced
  bool diverged = false;
  std::size_t diverged_step = 0;  // index of the first rejected step
  bool stopped_early = false;
};

// Feeds each predicted field back as the newest history column. keep_going
// is called after every accepted step with (step, field) and may end the run.
template <class KeepGoing>
ClosedLoopRun closed_loop_forecast(const ReadoutWeights& w, const Eigen::MatrixXd& warmup, std::size_t n_steps,
                                   KeepGoing&& keep_going) {
  detail::check_history(w, warmup);
  const Eigen::Index L = warmup.rows();
  const auto k = static_cast<Eigen::Index>(w.cfg.k);
  Eigen::MatrixXd history = warmup;
  Eigen::MatrixXd features(static_cast<Eigen::Index>(w.cfg.dims().d_total), L);
  Eigen::VectorXd next(L);

  ClosedLoopRun run;
  run.predicted.resize(L, static_cast<Eigen::Index>(n_steps));
  std::size_t produced = 0;
  for (; produced < n_steps; ++produced) {
    detail::predict_into(w, history, features, next);
    if (!next.allFinite() || next.cwiseAbs().maxCoeff() > kDivergenceThreshold) {
      run.diverged = true;
      run.diverged_step = produced;
      break;
    }
    run.predicted.col(static_cast<Eigen::Index>(produced)) = next;
    for (Eigen::Index c = 0; c + 1 < k; ++c) history.col(c) = history.col(c + 1);
    history.col(k - 1) = next;
    if (!keep_going(produced, next)) {
      ++produced;
      run.stopped_early = produced < n_steps;
      break;
    }
  }
  run.predicted.conservativeResize(L, static_cast<Eigen::Index>(produced));
  return run;
}

inline ClosedLoopRun closed_loop_forecast(const ReadoutWeights& w, const Eigen::MatrixXd& warmup,
                                          std::size_t n_steps) {
  require(n_steps >= 1, ErrorKind::InvalidInput, "n_steps must be >= 1");
  return closed_loop_forecast(w, warmup, n_steps, [](std::size_t, const Eigen::VectorXd&) { return true; });
}

struct ForecastResult {
  Eigen::MatrixXd predicted;
  Eigen::MatrixXd truth;
  double dt_save = 0.01;
};

struct NrmseSeries {
  std::vector<double> values;
  double dt_save = 0.01;

  double duration() const { return static_cast<double>(values.size()) * dt_save; }
};

inline double nrmse_at(const Eigen::Ref<const Eigen::VectorXd>& truth, const Eigen::Ref<const Eigen::VectorXd>& pred) {
  return std::sqrt((truth - pred).squaredNorm() / static_cast<double>(truth.size()));
}

inline NrmseSeries nrmse(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& pred, double dt_save = 0.01) {
  require(truth.rows() == pred.rows() && truth.cols() == pred.cols(), ErrorKind::InvalidInput,
          "truth and prediction shapes differ");
  require(truth.rows() > 0, ErrorKind::InvalidInput, "no locations");
  NrmseSeries s;
  s.dt_save = dt_save;
  s.values.resize(static_cast<std::size_t>(truth.cols()));
  for (Eigen::Index t = 0; t < truth.cols(); ++t) s.values[static_cast<std::size_t>(t)] = nrmse_at(truth.col(t), pred.col(t));
  return s;
}

struct Horizon {
  double time = 0.0;       // MTU
  std::size_t index = 0;   // first sample with NRMSE >= threshold
  bool censored = false;   // never crossed: time is the series duration
};

// First-crossing convention with >=, no interpolation: time = index * dt.
inline Horizon prediction_horizon(const NrmseSeries& series, double threshold = kDefaultHorizonThreshold) {
  require(!series.values.empty(), ErrorKind::InvalidInput, "empty NRMSE series");
  require(threshold > 0.0, ErrorKind::InvalidInput, "threshold must be positive");
  for (std::size_t i = 0; i < series.values.size(); ++i)
    if (series.values[i] >= threshold) return {static_cast<double>(i) * series.dt_save, i, false};
  return {series.duration(), series.values.size(), true};
}

}  // namespace ngrc
