#pragma once

// Experimental protocols: presets, deterministic train/test window selection
// from one long recording, trials, α and training-time sweeps, and training
// complexity accounting.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ngrc/errors.hpp"
#include "ngrc/features.hpp"
#include "ngrc/forecast.hpp"
#include "ngrc/lorenz96.hpp"
#include "ngrc/parallel.hpp"
#include "ngrc/ridge.hpp"
#include "ngrc/trajectory.hpp"

namespace ngrc {

struct ExperimentPreset {
  std::string name;
  ModelParams model;
  FeatureConfig features;
  IntegrationSettings integration;
  double t_test = 5.0;                  // truth window after the warm-up, MTU
  std::optional<double> lyapunov_time;  // MTU per Λ
};

inline ExperimentPreset preset_main() {
  ExperimentPreset p;
  p.name = "main";
  p.model = {36, 10, 10, 20.0, 1.0, 10.0, 10.0, 10.0, 10.0, 10.0};
  p.integration = {10.0, 2100.0, 0.001, 0.01};
  p.t_test = 5.0;
  return p;
}

inline ExperimentPreset preset_small() {
  ExperimentPreset p = preset_main();
  p.name = "small";
  p.model.L = p.model.J = p.model.I = 8;
  return p;
}

// Horizons here run to ~8 Λ ≈ 4.8 MTU, so the truth window is longer than
// the 5 MTU used for the multi-scale presets to keep censoring rare.
inline ExperimentPreset preset_flat() {
  ExperimentPreset p;
  p.name = "flat";
  p.model = {40, 0, 0, 8.0, 1.0, 10.0, 10.0, 10.0, 10.0, 10.0};
  p.integration = {10.0, 2100.0, 0.001, 0.01};
  p.t_test = 10.0;
  p.lyapunov_time = 1.0 / 1.68;
  return p;
}

inline ExperimentPreset preset_by_name(const std::string& name) {
  if (name == "main") return preset_main();
  if (name == "small") return preset_small();
  if (name == "flat") return preset_flat();
  fail(ErrorKind::Config, "unknown preset '" + name + "' (expected main, small or flat)");
}

inline std::size_t steps_in(double t, double dt) { return static_cast<std::size_t>(std::llround(t / dt)); }

// Unnormalized recording of the preset from the paper's initial condition.
inline TrajectoryGrid make_recording(const ExperimentPreset& preset) {
  return simulate(preset.model, default_init(preset.model), preset.integration);
}

// ---------------------------------------------------------------------------
// Window selection

struct ProtocolConfig {
  std::size_t n_train_sets = 10;
  std::size_t n_initial_conditions = 10;
  // Extra test windows reserved for held-out scoring of an optimized α.
  std::size_t n_heldout_conditions = 0;
  std::uint64_t layout_seed = 20220513;
  double threshold = kDefaultHorizonThreshold;
  std::size_t workers = 1;

  std::size_t n_test_slots() const { return n_initial_conditions + n_heldout_conditions; }
};

namespace detail {

inline std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[static_cast<std::size_t>(rng() % i)]);
  return p;
}

}  // namespace detail

// Layout of one recording: the leading region is cut into test slots
// (k warm-up samples followed by the truth window), the rest into training
// slots of M + k samples. Seeds index shuffled slot lists, so distinct seeds
// give disjoint windows and no training window ever touches a test window.
class WindowPlan {
 public:
  WindowPlan(std::size_t total_samples, std::size_t k, std::size_t test_steps, std::size_t n_test_slots,
             std::size_t train_pairs, std::uint64_t seed)
      : k_(k), test_steps_(test_steps), train_pairs_(train_pairs) {
    require(train_pairs >= 1, ErrorKind::InvalidWindow, "training time gives no training pairs");
    require(test_steps >= 1, ErrorKind::InvalidWindow, "test window is empty");
    test_len_ = k + test_steps;
    train_len_ = train_pairs + k;
    test_end_ = n_test_slots * test_len_;
    require(test_end_ <= total_samples, ErrorKind::InvalidWindow,
            "recording of " + std::to_string(total_samples) + " samples is too short for " +
                std::to_string(n_test_slots) + " test windows of " + std::to_string(test_len_) +
                " samples; record longer or lower protocol.n_initial_conditions");
    n_train_slots_ = (total_samples - test_end_) / train_len_;
    n_test_slots_ = n_test_slots;
    test_order_ = detail::permutation(n_test_slots_, seed);
    train_order_ = detail::permutation(n_train_slots_, seed ^ 0x9e3779b97f4a7c15ULL);
  }

  std::size_t train_slots() const { return n_train_slots_; }
  std::size_t test_slots() const { return n_test_slots_; }
  std::size_t test_steps() const { return test_steps_; }
  std::size_t k() const { return k_; }

  SampleWindow train_window(std::size_t train_seed) const {
    require(train_seed < n_train_slots_, ErrorKind::InvalidWindow,
            "train seed " + std::to_string(train_seed) + " exceeds the " + std::to_string(n_train_slots_) +
                " disjoint training windows available");
    const std::size_t begin = test_end_ + train_order_[train_seed] * train_len_;
    return {begin, begin + train_len_};
  }

  SampleWindow test_window(std::size_t ic_seed) const {
    require(ic_seed < n_test_slots_, ErrorKind::InvalidWindow,
            "ic seed " + std::to_string(ic_seed) + " exceeds the " + std::to_string(n_test_slots_) +
                " test windows available");
    const std::size_t begin = test_order_[ic_seed] * test_len_;
    return {begin, begin + test_len_};
  }

 private:
  std::size_t k_, test_steps_, train_pairs_;
  std::size_t test_len_ = 0, train_len_ = 0, test_end_ = 0;
  std::size_t n_train_slots_ = 0, n_test_slots_ = 0;
  std::vector<std::size_t> test_order_, train_order_;
};

inline bool overlaps(const SampleWindow& a, const SampleWindow& b) { return a.begin < b.end && b.begin < a.end; }

inline WindowPlan make_plan(const TrajectoryGrid& recording, const ExperimentPreset& preset, double t_train,
                            const ProtocolConfig& protocol) {
  const double dt = recording.dt_save;
  return WindowPlan(recording.samples(), preset.features.k, steps_in(preset.t_test, dt), protocol.n_test_slots(),
                    steps_in(t_train, dt), protocol.layout_seed);
}

// ---------------------------------------------------------------------------
// Trials

struct PreparedTrainingSet {
  SampleWindow window;
  NormStats norm;
  std::vector<NormalEquations> systems;
};

// Normalizes the training window by its own statistics and accumulates the
// per-site normal equations; α and mode are chosen later.
inline PreparedTrainingSet prepare_training_set(const TrajectoryGrid& recording, const ExperimentPreset& preset,
                                                const WindowPlan& plan, std::size_t train_seed,
                                                std::size_t workers = 1) {
  require(!recording.normalized, ErrorKind::InvalidInput, "recording must be unnormalized");
  PreparedTrainingSet set;
  set.window = plan.train_window(train_seed);
  const TrajectoryGrid train = normalize(slice(recording, set.window.begin, set.window.end));
  set.norm = train.norm;
  set.systems = accumulate_all_locations(train, preset.features, {0, train.samples()}, workers);
  return set;
}

inline ReadoutWeights solve_mode(const PreparedTrainingSet& set, const FeatureConfig& cfg, ReadoutMode mode,
                                 double alpha) {
  return mode == ReadoutMode::Shared ? solve_shared(set.systems, cfg, set.norm, alpha)
                                     : solve_independent(set.systems, cfg, set.norm, alpha);
}

struct TrialOutcome {
  double horizon = 0.0;  // MTU
  bool censored = false;
  bool diverged = false;
};

// Forecasts one test window and stops as soon as the NRMSE reaches the
// threshold; the horizon equals the one from the full series.
inline TrialOutcome forecast_horizon(const TrajectoryGrid& recording, const ReadoutWeights& w,
                                     const SampleWindow& test, std::size_t test_steps, double threshold) {
  const std::size_t k = w.cfg.k;
  require(test.size() == k + test_steps, ErrorKind::InvalidWindow, "test window has the wrong length");
  const Eigen::MatrixXd block =
      (recording.data.middleCols(static_cast<Eigen::Index>(test.begin), static_cast<Eigen::Index>(test.size()))
           .array() -
       w.norm.mean) /
      w.norm.std;
  const Eigen::MatrixXd warmup = block.leftCols(static_cast<Eigen::Index>(k));
  const auto truth = block.rightCols(static_cast<Eigen::Index>(test_steps));

  std::size_t crossed = test_steps;
  const ClosedLoopRun run = closed_loop_forecast(w, warmup, test_steps, [&](std::size_t step, const Eigen::VectorXd& x) {
    if (nrmse_at(truth.col(static_cast<Eigen::Index>(step)), x) >= threshold) {
      crossed = step;
      return false;
    }
    return true;
  });
  const double dt = recording.dt_save;
  if (crossed < test_steps) return {static_cast<double>(crossed) * dt, false, false};
  if (run.diverged) return {static_cast<double>(run.diverged_step) * dt, false, true};
  return {static_cast<double>(test_steps) * dt, true, false};
}

inline TrialOutcome run_trial(const TrajectoryGrid& recording, const ExperimentPreset& preset, ReadoutMode mode,
                              double alpha, double t_train, std::size_t train_seed, std::size_t ic_seed,
                              const ProtocolConfig& protocol = {}) {
  const WindowPlan plan = make_plan(recording, preset, t_train, protocol);
  const SampleWindow test = plan.test_window(ic_seed);
  require(!overlaps(plan.train_window(train_seed), test), ErrorKind::InvalidWindow,
          "training and test windows overlap");
  const PreparedTrainingSet set = prepare_training_set(recording, preset, plan, train_seed, protocol.workers);
  const ReadoutWeights w = solve_mode(set, preset.features, mode, alpha);
  return forecast_horizon(recording, w, test, plan.test_steps(), protocol.threshold);
}

// ---------------------------------------------------------------------------
// Statistics and sweeps

struct Summary {
  double mean = 0.0;
  double std_of_mean = 0.0;
};

// Sample mean and (n-1)-normalized standard deviation divided by sqrt(n).
inline Summary summarize(const std::vector<double>& samples) {
  require(samples.size() >= 2, ErrorKind::InvalidInput, "need at least two samples");
  const double n = static_cast<double>(samples.size());
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
  double ss = 0.0;
  for (double s : samples) ss += (s - mean) * (s - mean);
  return {mean, std::sqrt(ss / (n - 1.0)) / std::sqrt(n)};
}

struct SweepPoint {
  double axis = 0.0;   // α or t_train
  double alpha = 0.0;  // α actually used for `samples`
  bool failed = false;
  std::string error;
  // Ordered by (train_seed, ic_seed).
  std::vector<double> samples;
  std::size_t n_censored = 0;
  std::size_t n_diverged = 0;
  Summary summary;
  // Scored on windows not used to choose α; empty unless requested.
  std::vector<double> heldout_samples;
  Summary heldout_summary;
};

struct SweepResult {
  std::string axis_name;
  std::vector<SweepPoint> points;
  std::optional<std::size_t> best;  // argmax mean over non-failed points
};

inline std::vector<double> default_alpha_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 12; ++i) g.push_back(std::pow(10.0, -7.0 + 8.0 * i / 12.0));
  return g;
}

struct AlphaPolicy {
  bool optimize = false;
  double alpha = 1e-2;
  std::vector<double> grid = default_alpha_grid();

  static AlphaPolicy fixed(double a) { return {false, a, {}}; }
  static AlphaPolicy optimized(std::vector<double> g = default_alpha_grid()) { return {true, 0.0, std::move(g)}; }
};

namespace detail {

struct CellScores {
  std::vector<TrialOutcome> outcomes;  // [set * n_ic + ic]
  bool failed = false;
  std::string error;
};

// Scores every α in `alphas` on ic seeds [ic_begin, ic_begin + n_ic) for every
// prepared training set.
inline std::vector<CellScores> score_alphas(const TrajectoryGrid& recording, const ExperimentPreset& preset,
                                            const WindowPlan& plan, const std::vector<PreparedTrainingSet>& sets,
                                            ReadoutMode mode, const std::vector<double>& alphas,
                                            std::size_t ic_begin, std::size_t n_ic, const ProtocolConfig& protocol) {
  const std::size_t n_sets = sets.size();
  std::vector<CellScores> cells(alphas.size());
  for (auto& c : cells) c.outcomes.resize(n_sets * n_ic);

  // Solve all readouts first (cheap), then fan out the forecasts.
  std::vector<std::optional<ReadoutWeights>> weights(alphas.size() * n_sets);
  std::vector<std::string> errors(alphas.size() * n_sets);
  parallel_for(weights.size(), protocol.workers, [&](std::size_t job) {
    try {
      weights[job] = solve_mode(sets[job % n_sets], preset.features, mode, alphas[job / n_sets]);
    } catch (const Error& e) {
      errors[job] = e.what();
    }
  });
  for (std::size_t a = 0; a < alphas.size(); ++a)
    for (std::size_t s = 0; s < n_sets; ++s)
      if (!weights[a * n_sets + s]) {
        cells[a].failed = true;
        if (cells[a].error.empty()) cells[a].error = errors[a * n_sets + s];
      }

  const std::size_t per_alpha = n_sets * n_ic;
  parallel_for(alphas.size() * per_alpha, protocol.workers, [&](std::size_t job) {
    const std::size_t a = job / per_alpha;
    if (cells[a].failed) return;
    const std::size_t s = (job % per_alpha) / n_ic;
    const std::size_t ic = job % n_ic;
    const SampleWindow test = plan.test_window(ic_begin + ic);
    require(!overlaps(sets[s].window, test), ErrorKind::InvalidWindow, "training and test windows overlap");
    cells[a].outcomes[s * n_ic + ic] =
        forecast_horizon(recording, *weights[a * n_sets + s], test, plan.test_steps(), protocol.threshold);
  });
  return cells;
}

inline void fill_point(SweepPoint& pt, const CellScores& cell) {
  pt.failed = cell.failed;
  pt.error = cell.error;
  if (cell.failed) return;
  pt.samples.clear();
  for (const auto& o : cell.outcomes) {
    pt.samples.push_back(o.horizon);
    pt.n_censored += o.censored;
    pt.n_diverged += o.diverged;
  }
  if (pt.samples.size() >= 2) pt.summary = summarize(pt.samples);
}

// Argmax of the mean; ties go to the larger α.
inline std::optional<std::size_t> best_alpha_index(const std::vector<double>& alphas,
                                                   const std::vector<CellScores>& cells) {
  std::optional<std::size_t> best;
  double best_mean = -1.0;
  for (std::size_t a = 0; a < cells.size(); ++a) {
    if (cells[a].failed) continue;
    double sum = 0.0;
    for (const auto& o : cells[a].outcomes) sum += o.horizon;
    const double mean = sum / static_cast<double>(cells[a].outcomes.size());
    if (!best || mean > best_mean || (mean == best_mean && alphas[a] > alphas[*best])) {
      best = a;
      best_mean = mean;
    }
  }
  return best;
}

inline std::vector<PreparedTrainingSet> prepare_sets(const TrajectoryGrid& recording, const ExperimentPreset& preset,
                                                     const WindowPlan& plan, const ProtocolConfig& protocol) {
  std::vector<PreparedTrainingSet> sets(protocol.n_train_sets);
  parallel_for(sets.size(), protocol.workers,
               [&](std::size_t s) { sets[s] = prepare_training_set(recording, preset, plan, s, 1); });
  return sets;
}

inline std::optional<std::size_t> best_point(const std::vector<SweepPoint>& pts) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (!pts[i].failed && (!best || pts[i].summary.mean > pts[*best].summary.mean ||
                           (pts[i].summary.mean == pts[*best].summary.mean && pts[i].alpha > pts[*best].alpha)))
      best = i;
  return best;
}

}  // namespace detail

inline SweepResult sweep_alpha(const TrajectoryGrid& recording, const ExperimentPreset& preset, ReadoutMode mode,
                               double t_train, const std::vector<double>& alpha_grid,
                               const ProtocolConfig& protocol = {}) {
  require(!alpha_grid.empty(), ErrorKind::InvalidInput, "alpha grid is empty");
  for (double a : alpha_grid) require(a > 0.0, ErrorKind::InvalidInput, "alpha grid values must be positive");
  const WindowPlan plan = make_plan(recording, preset, t_train, protocol);
  const auto sets = detail::prepare_sets(recording, preset, plan, protocol);
  const auto cells =
      detail::score_alphas(recording, preset, plan, sets, mode, alpha_grid, 0, protocol.n_initial_conditions, protocol);

  SweepResult out;
  out.axis_name = "alpha";
  for (std::size_t a = 0; a < alpha_grid.size(); ++a) {
    SweepPoint pt;
    pt.axis = pt.alpha = alpha_grid[a];
    detail::fill_point(pt, cells[a]);
    out.points.push_back(std::move(pt));
  }
  out.best = detail::best_point(out.points);
  return out;
}

// Mean horizon against training time. With an optimized policy α is picked
// per point on ic seeds [0, n_ic); when held-out conditions are configured
// the chosen α is also scored on the remaining seeds.
inline SweepResult sweep_train_time(const TrajectoryGrid& recording, const ExperimentPreset& preset,
                                    ReadoutMode mode, const std::vector<double>& t_train_grid,
                                    const AlphaPolicy& policy, const ProtocolConfig& protocol = {}) {
  require(!t_train_grid.empty(), ErrorKind::InvalidInput, "training-time grid is empty");
  require(std::is_sorted(t_train_grid.begin(), t_train_grid.end()), ErrorKind::InvalidInput,
          "training-time grid must be ascending");
  const std::vector<double> alphas = policy.optimize ? policy.grid : std::vector<double>{policy.alpha};
  require(!alphas.empty(), ErrorKind::InvalidInput, "alpha grid is empty");

  SweepResult out;
  out.axis_name = "t_train";
  for (double t_train : t_train_grid) {
    SweepPoint pt;
    pt.axis = t_train;
    try {
      const WindowPlan plan = make_plan(recording, preset, t_train, protocol);
      const auto sets = detail::prepare_sets(recording, preset, plan, protocol);
      const auto cells = detail::score_alphas(recording, preset, plan, sets, mode, alphas, 0,
                                              protocol.n_initial_conditions, protocol);
      const auto best = detail::best_alpha_index(alphas, cells);
      if (!best) {
        pt.failed = true;
        pt.error = cells.front().error;
      } else {
        pt.alpha = alphas[*best];
        detail::fill_point(pt, cells[*best]);
        if (protocol.n_heldout_conditions > 0) {
          const auto held = detail::score_alphas(recording, preset, plan, sets, mode, {pt.alpha},
                                                 protocol.n_initial_conditions, protocol.n_heldout_conditions,
                                                 protocol);
          if (!held.front().failed) {
            for (const auto& o : held.front().outcomes) pt.heldout_samples.push_back(o.horizon);
            if (pt.heldout_samples.size() >= 2) pt.heldout_summary = summarize(pt.heldout_samples);
          }
        }
      }
    } catch (const Error& e) {
      pt.failed = true;
      pt.error = e.what();
    }
    out.points.push_back(std::move(pt));
  }
  out.best = detail::best_point(out.points);
  return out;
}

// ---------------------------------------------------------------------------
// Training complexity: cost = units · M · d_total²

struct ComplexityEntry {
  std::string label;
  std::string model;     // "NG-RC" or "RC"
  double m_points = 0;   // training points per unit, before concatenation
  double m_concat = 1;   // L for the shared readout, 1 otherwise
  double d_total = 0;
  std::size_t n_in = 0;
  std::size_t n_out = 0;
  std::size_t units = 1;

  double m_effective() const { return m_points * m_concat; }
  double cost() const { return static_cast<double>(units) * m_effective() * d_total * d_total; }
};

struct ComplexityRow {
  ComplexityEntry entry;
  double cost = 0.0;
  double speedup = 0.0;  // cost / reference cost
};

inline std::vector<ComplexityRow> complexity_report(const std::vector<ComplexityEntry>& entries,
                                                    const std::string& reference_label) {
  const auto ref = std::find_if(entries.begin(), entries.end(),
                                [&](const ComplexityEntry& e) { return e.label == reference_label; });
  require(ref != entries.end(), ErrorKind::InvalidInput, "reference '" + reference_label + "' not in table");
  const double ref_cost = ref->cost();
  require(ref_cost > 0.0, ErrorKind::InvalidInput, "reference cost is zero");
  std::vector<ComplexityRow> rows;
  for (const auto& e : entries) rows.push_back({e, e.cost(), e.cost() / ref_cost});
  return rows;
}

inline constexpr const char* kOursShared = "ours-shared";

// Extended Lorenz96, L = J = I = 8. Competitor rows are published
// configurations (Chattopadhyay et al. 2020; Pyle et al. 2021), not models run here.
inline std::vector<ComplexityEntry> complexity_table_small() {
  return {
      {kOursShared, "NG-RC", 400, 8, 136, 5, 1, 1},
      {"ours-independent", "NG-RC", 4000, 1, 136, 5, 1, 8},
      {"chattopadhyay", "RC", 500000, 1, 5000, 8, 8, 1},
      {"pyle", "NG-RC", 500000, 1, 495, 8, 8, 1},
  };
}

// Lorenz96 with L = 40, J = I = 0 (Vlachas et al. 2020; Platt et al. 2022).
inline std::vector<ComplexityEntry> complexity_table_flat() {
  return {
      {kOursShared, "NG-RC", 100, 40, 136, 5, 1, 1},
      {"ours-independent", "NG-RC", 6000, 1, 136, 5, 1, 40},
      {"vlachas", "RC", 100000, 1, 3000, 10, 2, 20},
      {"platt", "RC", 40000, 1, 720, 6, 2, 20},
  };
}

}  // namespace ngrc
