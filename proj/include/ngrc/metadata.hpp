#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "ngrc/errors.hpp"
#include "ngrc/experiment.hpp"
#include "ngrc/io.hpp"

namespace ngrc::io {

// Sidecar describing how a trajectory file was produced.
inline nlohmann::json trajectory_metadata(const ExperimentPreset& preset, const TrajectoryGrid& grid) {
  const auto& m = preset.model;
  const auto& in = preset.integration;
  nlohmann::json j;
  j["format"] = "L96T";
  j["format_version"] = kTrajectoryVersion;
  j["preset"] = preset.name;
  j["model"] = {{"L", m.L}, {"J", m.J}, {"I", m.I}, {"F", m.F}, {"h", m.h},
                {"b", m.b}, {"c", m.c}, {"d", m.d}, {"e", m.e}, {"g", m.g},
                {"boundary", m.boundary == FineBoundary::Chained ? "chained" : "sector"}};
  j["integrator"] = {{"method", "rk4"},          {"h_internal", in.h_internal}, {"dt_save", in.dt_save},
                     {"t_transient", in.t_transient}, {"t_record", in.t_record}};
  j["initial_condition"] = {{"x_1", m.F + 0.01}, {"x_other", m.F}, {"y", 0.0}, {"z", 0.0}};
  j["grid"] = {{"L", grid.locations()}, {"samples", grid.samples()}, {"t0", grid.t0}};
  if (preset.lyapunov_time) j["lyapunov_time"] = *preset.lyapunov_time;
  return j;
}

// Sidecar describing how a weights file was trained.
inline nlohmann::json weights_metadata(const ReadoutWeights& w, const SampleWindow& window, double t_train,
                                       const std::string& trajectory) {
  const auto dims = w.cfg.dims();
  nlohmann::json j;
  j["format"] = "NGRW";
  j["format_version"] = kWeightsVersion;
  j["mode"] = std::string(to_string(w.mode));
  j["features"] = {{"k", w.cfg.k}, {"n_nn", w.cfg.n_nn}, {"c", w.cfg.c}, {"d_total", dims.d_total}};
  j["ridge"] = {{"alpha", w.alpha}};
  j["normalization"] = {{"mean", w.norm.mean}, {"std", w.norm.std}};
  j["training"] = {{"trajectory", trajectory}, {"t_train", t_train}, {"window_begin", window.begin},
                   {"window_end", window.end}, {"points_per_location", training_pairs(window, w.cfg)}};
  j["shape"] = {{"L", w.L}, {"rows", w.W.rows()}};
  return j;
}

inline void save_metadata(const std::filesystem::path& path, const nlohmann::json& j) {
  auto os = detail::open_out(path);
  os << j.dump(2) << '\n';
  detail::finish(os, path);
}

}  // namespace ngrc::io
