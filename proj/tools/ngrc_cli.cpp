// ngrc: generate Lorenz96 recordings, train NG-RC readouts, forecast, sweep.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#if __has_include(<CLI11.hpp>)
#include <CLI11.hpp>
#else
#include <CLI/CLI.hpp>
#endif

#include "ngrc/config.hpp"
#include "ngrc/errors.hpp"
#include "ngrc/experiment.hpp"
#include "ngrc/forecast.hpp"
#include "ngrc/io.hpp"
#include "ngrc/metadata.hpp"
#include "ngrc/ridge.hpp"

namespace fs = std::filesystem;
using namespace ngrc;

namespace {

using Clock = std::chrono::steady_clock;

double millis_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

struct CommonFlags {
  std::optional<std::string> config;
  std::optional<std::string> preset;
  std::optional<std::string> mode;
  std::optional<double> alpha;
  std::optional<double> t_train;
  std::optional<double> t_record;
  std::optional<std::size_t> seed_train;
  std::optional<std::size_t> seed_ic;
  std::optional<std::size_t> workers;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "INI file applied on top of the preset");
  cmd->add_option("--preset", f.preset, "main, small or flat");
  cmd->add_option("--mode", f.mode, "independent or shared");
  cmd->add_option("--alpha", f.alpha, "ridge parameter");
  cmd->add_option("--t-train", f.t_train, "training time, MTU");
  cmd->add_option("--t-record", f.t_record, "recorded time after the transient, MTU");
  cmd->add_option("--seed-train", f.seed_train, "training window index");
  cmd->add_option("--seed-ic", f.seed_ic, "test window index");
  cmd->add_option("--workers", f.workers, "worker threads (default: NGRC_WORKERS or hardware)");
  cmd->add_option("--out", f.out, "output directory");
}

// Preset, then config file, then individual flags.
RunConfig resolve(const CommonFlags& f) {
  RunConfig cfg;
  if (f.preset) cfg.preset = preset_by_name(*f.preset);
  if (f.config) {
    cfg = load_config(*f.config, cfg);
    if (f.preset && cfg.preset.name != *f.preset)
      fail(ErrorKind::Config, "--preset " + *f.preset + " conflicts with preset '" + cfg.preset.name +
                                  "' in " + *f.config);
  }
  if (f.mode) cfg.mode = parse_mode(*f.mode);
  if (f.alpha) cfg.ridge.alpha = *f.alpha;
  if (f.t_train) cfg.t_train = *f.t_train;
  if (f.t_record) cfg.preset.integration.t_record = *f.t_record;
  if (f.seed_train) cfg.seed_train = *f.seed_train;
  if (f.seed_ic) cfg.seed_ic = *f.seed_ic;
  if (f.workers) cfg.protocol.workers = *f.workers;
  if (f.out) cfg.out = *f.out;

  require(std::isfinite(cfg.ridge.alpha) && cfg.ridge.alpha >= 0.0, ErrorKind::Config, "alpha must be >= 0");
  require(cfg.t_train > 0.0, ErrorKind::Config, "t_train must be positive");
  require(cfg.preset.integration.t_record >= 0.0, ErrorKind::Config, "t_record must be >= 0");
  require(cfg.preset.t_test > 0.0, ErrorKind::Config, "t_test must be positive");
  require(cfg.protocol.workers >= 1, ErrorKind::Config, "workers must be >= 1");
  cfg.preset.model.validate();
  cfg.preset.features.validate(cfg.preset.model.L);
  return cfg;
}

fs::path or_default(const std::optional<std::string>& p, const RunConfig& cfg, const char* name) {
  return p ? fs::path(*p) : fs::path(cfg.out) / name;
}

// ---------------------------------------------------------------------------

int cmd_generate(const RunConfig& cfg, const std::optional<std::string>& trajectory) {
  const fs::path path = or_default(trajectory, cfg, "trajectory.l96t");
  const auto t0 = Clock::now();
  const TrajectoryGrid grid = make_recording(cfg.preset);
  const double ms = millis_since(t0);
  io::save_trajectory(path, grid);
  fs::path meta = path;
  meta.replace_extension(".json");
  io::save_metadata(meta, io::trajectory_metadata(cfg.preset, grid));
  std::printf("preset %s: %zu x %zu grid (t0 %.3f, dt %.3g) in %.1f s\n", cfg.preset.name.c_str(),
              grid.locations(), grid.samples(), grid.t0, grid.dt_save, ms / 1000.0);
  std::printf("wrote %s and %s\n", path.string().c_str(), meta.string().c_str());
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& trajectory, const std::optional<std::string>& weights,
              bool csv) {
  const TrajectoryGrid grid = io::load_trajectory(trajectory);
  require(!grid.normalized, ErrorKind::InvalidInput, "training expects an unnormalized recording");
  const WindowPlan plan = make_plan(grid, cfg.preset, cfg.t_train, cfg.protocol);

  const auto t0 = Clock::now();
  const PreparedTrainingSet set = prepare_training_set(grid, cfg.preset, plan, cfg.seed_train, cfg.protocol.workers);
  const ReadoutWeights w = solve_mode(set, cfg.preset.features, cfg.mode, cfg.ridge.alpha);
  const double ms = millis_since(t0);

  const fs::path path = or_default(weights, cfg, "weights.ngrw");
  io::save_weights(path, w);
  fs::path meta = path;
  meta.replace_extension(".json");
  io::save_metadata(meta, io::weights_metadata(w, set.window, cfg.t_train, trajectory));
  const auto dims = cfg.preset.features.dims();
  std::printf("mode %s: %zu readout%s over %zu locations\n", std::string(to_string(cfg.mode)).c_str(),
              static_cast<std::size_t>(w.W.rows()), w.W.rows() == 1 ? "" : "s", w.L);
  std::printf("d_total %zu (linear %zu, quadratic %zu)\n", dims.d_total, dims.d_lin, dims.d_nonlin);
  std::printf("M %zu training points per location, window [%zu, %zu), alpha %g\n", training_pairs(set.window, w.cfg),
              set.window.begin, set.window.end, w.alpha);
  std::printf("training wall time %.2f ms\n", ms);
  if (w.mode == ReadoutMode::PerLocation && w.L >= 2) {
    try {
      std::printf("weight correlation C %.4f\n", weight_correlation(w));
    } catch (const Error& e) {
      std::printf("weight correlation undefined: %s\n", e.what());
    }
  }
  if (csv) {
    fs::path p = path;
    p.replace_extension(".csv");
    auto os = io::detail::open_out(p);
    io::write_weights_csv(os, w);
    io::detail::finish(os, p);
  }
  std::printf("wrote %s and %s\n", path.string().c_str(), meta.string().c_str());
  return 0;
}

void check_compatible(const ReadoutWeights& w, const RunConfig& cfg, const TrajectoryGrid& grid) {
  const FeatureConfig& f = cfg.preset.features;
  auto mismatch = [](const std::string& field, const std::string& a, const std::string& b) {
    fail(ErrorKind::Incompatible, field + ": weights have " + a + ", configuration has " + b);
  };
  if (w.cfg.k != f.k) mismatch("k", std::to_string(w.cfg.k), std::to_string(f.k));
  if (w.cfg.n_nn != f.n_nn) mismatch("n_nn", std::to_string(w.cfg.n_nn), std::to_string(f.n_nn));
  if (w.cfg.c != f.c) mismatch("c", std::to_string(w.cfg.c), std::to_string(f.c));
  if (w.L != grid.locations())
    fail(ErrorKind::Incompatible, "L: weights serve " + std::to_string(w.L) + " locations, trajectory has " +
                                      std::to_string(grid.locations()));
  if (grid.normalized) {
    if (grid.norm.mean != w.norm.mean)
      fail(ErrorKind::Incompatible, "norm_mean: trajectory was normalized with different statistics");
    if (grid.norm.std != w.norm.std)
      fail(ErrorKind::Incompatible, "norm_std: trajectory was normalized with different statistics");
  }
}

int cmd_forecast(const RunConfig& cfg, const std::string& weights, const std::string& trajectory,
                 std::optional<std::size_t> steps) {
  const ReadoutWeights w = io::load_weights(weights);
  const TrajectoryGrid grid = io::load_trajectory(trajectory);
  check_compatible(w, cfg, grid);

  const WindowPlan plan = make_plan(grid, cfg.preset, cfg.t_train, cfg.protocol);
  const SampleWindow test = plan.test_window(cfg.seed_ic);
  const std::size_t k = w.cfg.k;
  const std::size_t n_steps = steps.value_or(plan.test_steps());
  require(test.begin + k + n_steps <= grid.samples(), ErrorKind::InvalidWindow,
          "forecast of " + std::to_string(n_steps) + " steps runs past the end of the trajectory");

  const auto cols = static_cast<Eigen::Index>(k + n_steps);
  Eigen::MatrixXd block = grid.data.middleCols(static_cast<Eigen::Index>(test.begin), cols);
  if (!grid.normalized) block = (block.array() - w.norm.mean) / w.norm.std;
  const Eigen::MatrixXd warmup = block.leftCols(static_cast<Eigen::Index>(k));

  ForecastResult result;
  result.dt_save = grid.dt_save;
  ClosedLoopRun run;
  double us_per = 0.0;
  if (n_steps > 0) {
    const auto t0 = Clock::now();
    run = closed_loop_forecast(w, warmup, n_steps);
    const double ms = millis_since(t0);
    const auto done = static_cast<double>(std::max<Eigen::Index>(run.predicted.cols(), 1));
    us_per = 1000.0 * ms / (done * static_cast<double>(grid.locations()));
  } else {
    run.predicted.resize(grid.data.rows(), 0);
  }
  result.predicted = run.predicted;
  result.truth = block.middleCols(static_cast<Eigen::Index>(k), run.predicted.cols());
  io::save_forecast_csvs(cfg.out, result);

  Horizon h{0.0, 0, true};
  if (result.truth.cols() > 0) h = prediction_horizon(nrmse(result.truth, result.predicted, grid.dt_save),
                                                      cfg.protocol.threshold);
  if (run.diverged && h.censored) h = {static_cast<double>(run.diverged_step) * grid.dt_save, run.diverged_step, false};

  std::printf("test window [%zu, %zu), warm-up %zu, %zu steps\n", test.begin, test.begin + k + n_steps, k, n_steps);
  std::printf("horizon %.4f MTU", h.time);
  if (cfg.preset.lyapunov_time) std::printf(" (%.3f Lyapunov times)", h.time / *cfg.preset.lyapunov_time);
  if (h.censored) std::printf(", censored");
  if (run.diverged) std::printf(", forecast diverged at step %zu", run.diverged_step);
  std::printf("\n");
  if (n_steps > 0) std::printf("forecast %.3f us per location per step\n", us_per);
  std::printf("wrote truth.csv, predicted.csv, difference.csv, nrmse.csv under %s\n", cfg.out.c_str());
  return 0;
}

struct SweepFlags {
  std::string axis;
  std::optional<std::string> trajectory;
  std::vector<double> grid;
  bool optimize_alpha = false;
  std::optional<std::size_t> train_sets, initial_conditions, heldout;
};

int cmd_sweep(RunConfig cfg, const SweepFlags& f) {
  if (f.train_sets) cfg.protocol.n_train_sets = *f.train_sets;
  if (f.initial_conditions) cfg.protocol.n_initial_conditions = *f.initial_conditions;
  if (f.heldout) cfg.protocol.n_heldout_conditions = *f.heldout;
  require(cfg.protocol.n_train_sets >= 1 && cfg.protocol.n_initial_conditions >= 1, ErrorKind::Config,
          "need at least one training set and one initial condition");

  TrajectoryGrid rec;
  if (f.trajectory) {
    rec = io::load_trajectory(*f.trajectory);
  } else {
    std::printf("generating %g MTU of preset %s\n", cfg.preset.integration.t_record, cfg.preset.name.c_str());
    rec = make_recording(cfg.preset);
  }

  SweepResult r;
  const auto t0 = Clock::now();
  if (f.axis == "alpha") {
    r = sweep_alpha(rec, cfg.preset, cfg.mode, cfg.t_train, f.grid.empty() ? default_alpha_grid() : f.grid,
                    cfg.protocol);
  } else {
    const std::vector<double> grid = f.grid.empty() ? std::vector<double>{1, 2, 5, 10, 20, 40, 60} : f.grid;
    const AlphaPolicy policy = f.optimize_alpha ? AlphaPolicy::optimized() : AlphaPolicy::fixed(cfg.ridge.alpha);
    r = sweep_train_time(rec, cfg.preset, cfg.mode, grid, policy, cfg.protocol);
  }
  const double ms = millis_since(t0);

  const std::string stem = "sweep_" + f.axis + "_" + std::string(to_string(cfg.mode));
  const fs::path main_csv = fs::path(cfg.out) / (stem + ".csv");
  const fs::path samples_csv = fs::path(cfg.out) / (stem + "_samples.csv");
  {
    auto os = io::detail::open_out(main_csv);
    io::write_sweep_csv(os, r);
    io::detail::finish(os, main_csv);
  }
  {
    auto os = io::detail::open_out(samples_csv);
    io::write_sweep_samples_csv(os, r, cfg.protocol);
    io::detail::finish(os, samples_csv);
  }

  std::printf("%-10s %-10s %-10s %-10s %s\n", r.axis_name.c_str(), "alpha", "mean", "std_mean", "n");
  std::size_t failed = 0;
  for (const auto& p : r.points) {
    if (p.failed) {
      ++failed;
      std::printf("%-10g FAILED     %s\n", p.axis, p.error.c_str());
      continue;
    }
    std::printf("%-10g %-10.3g %-10.4f %-10.4f %zu", p.axis, p.alpha, p.summary.mean, p.summary.std_of_mean,
                p.samples.size());
    if (p.n_censored) std::printf("  censored %zu", p.n_censored);
    if (p.n_diverged) std::printf("  diverged %zu", p.n_diverged);
    if (!p.heldout_samples.empty())
      std::printf("  heldout %.4f +- %.4f", p.heldout_summary.mean, p.heldout_summary.std_of_mean);
    std::printf("\n");
  }
  if (r.best) std::printf("best %s %g\n", r.axis_name.c_str(), r.points[*r.best].axis);
  std::printf("%.1f s; wrote %s and %s\n", ms / 1000.0, main_csv.string().c_str(), samples_csv.string().c_str());
  return failed == r.points.size() ? 3 : 0;
}

int cmd_report_complexity(const RunConfig& cfg, const std::string& table, const std::string& reference) {
  auto emit = [&](const char* name, const std::vector<ComplexityEntry>& entries) {
    const auto rows = complexity_report(entries, reference);
    const fs::path path = fs::path(cfg.out) / (std::string("complexity_") + name + ".csv");
    auto os = io::detail::open_out(path);
    io::write_complexity_csv(os, rows);
    io::detail::finish(os, path);
    std::printf("%s (reference %s)\n", name, reference.c_str());
    for (const auto& r : rows) std::printf("  %-18s cost %-12.4g speedup %.3g\n", r.entry.label.c_str(), r.cost, r.speedup);
    std::printf("  wrote %s\n", path.string().c_str());
  };
  if (table == "small" || table == "both") emit("small", complexity_table_small());
  if (table == "flat" || table == "both") emit("flat", complexity_table_flat());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NG-RC forecasting of the multi-scale Lorenz96 model"};
  app.require_subcommand(1);

  CommonFlags gen_f, train_f, fc_f, sweep_f, cx_f;

  auto* gen = app.add_subcommand("generate", "integrate a preset and write a trajectory file");
  add_common(gen, gen_f);
  std::optional<std::string> gen_path;
  gen->add_option("--trajectory", gen_path, "output file (default <out>/trajectory.l96t)");

  auto* train = app.add_subcommand("train", "fit readout weights on one training window");
  add_common(train, train_f);
  std::string train_traj;
  std::optional<std::string> train_weights;
  bool train_csv = false;
  train->add_option("--trajectory", train_traj, "recording to train on")->required();
  train->add_option("--weights", train_weights, "output file (default <out>/weights.ngrw)");
  train->add_flag("--csv", train_csv, "also write the weights as CSV");

  auto* fc = app.add_subcommand("forecast", "closed-loop forecast from one test window");
  add_common(fc, fc_f);
  std::string fc_weights, fc_traj;
  std::optional<std::size_t> fc_steps;
  fc->add_option("--weights", fc_weights, "readout weights")->required();
  fc->add_option("--trajectory", fc_traj, "recording holding the test window")->required();
  fc->add_option("--steps", fc_steps, "forecast length in samples (default: the preset's test window)");

  auto* sweep = app.add_subcommand("sweep", "mean horizon against alpha or training time");
  add_common(sweep, sweep_f);
  SweepFlags sf;
  sweep->add_option("--axis", sf.axis, "alpha or ttrain")->required()->check(CLI::IsMember({"alpha", "ttrain"}));
  sweep->add_option("--trajectory", sf.trajectory, "recording (default: generate from the preset)");
  sweep->add_option("--grid", sf.grid, "axis values")->delimiter(',');
  sweep->add_flag("--optimize-alpha", sf.optimize_alpha, "pick alpha per training time from the default grid");
  sweep->add_option("--train-sets", sf.train_sets, "training windows per point");
  sweep->add_option("--initial-conditions", sf.initial_conditions, "test windows per training window");
  sweep->add_option("--heldout", sf.heldout, "extra test windows scored with the chosen alpha");

  auto* cx = app.add_subcommand("report-complexity", "training cost table against published models");
  add_common(cx, cx_f);
  std::string cx_table = "both", cx_ref = kOursShared;
  cx->add_option("--table", cx_table, "small, flat or both")->check(CLI::IsMember({"small", "flat", "both"}));
  cx->add_option("--reference", cx_ref, "label of the row with speedup 1");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_generate(resolve(gen_f), gen_path);
    if (train->parsed()) return cmd_train(resolve(train_f), train_traj, train_weights, train_csv);
    if (fc->parsed()) return cmd_forecast(resolve(fc_f), fc_weights, fc_traj, fc_steps);
    if (sweep->parsed()) return cmd_sweep(resolve(sweep_f), sf);
    if (cx->parsed()) return cmd_report_complexity(resolve(cx_f), cx_table, cx_ref);
  } catch (const Error& e) {
    std::fprintf(stderr, "ngrc: %s\n", e.what());
    return exit_code(e.kind());
  } catch (const std::bad_alloc&) {
    std::fprintf(stderr, "ngrc: out of memory\n");
    return 3;
  }
  return 0;
}
