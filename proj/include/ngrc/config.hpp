#pragma once

// Run configuration: a preset, optionally overridden by an INI file
//
//   [experiment]  preset mode alpha t_train t_record t_test seed_train seed_ic threshold
//   [model]       L J I F h b c d e g boundary (chained | sector)
//   [features]    k n_nn c
//   [integration] t_transient h_internal dt_save
//   [protocol]    n_train_sets n_initial_conditions n_heldout_conditions layout_seed
//   [run]         out workers
//
// Unknown sections or keys are errors.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "ngrc/errors.hpp"
#include "ngrc/experiment.hpp"
#include "ngrc/parallel.hpp"
#include "ngrc/ridge.hpp"

namespace ngrc {

struct RunConfig {
  ExperimentPreset preset = preset_main();
  ReadoutMode mode = ReadoutMode::PerLocation;
  RidgeConfig ridge;
  double t_train = 10.0;
  std::size_t seed_train = 0;
  std::size_t seed_ic = 0;
  ProtocolConfig protocol{.workers = default_workers()};
  std::string out = "out";
};

inline ReadoutMode parse_mode(const std::string& s) {
  if (s == "independent") return ReadoutMode::PerLocation;
  if (s == "shared") return ReadoutMode::Shared;
  fail(ErrorKind::Config, "unknown mode '" + s + "' (expected independent or shared)");
}

inline FineBoundary parse_boundary(const std::string& s) {
  if (s == "chained") return FineBoundary::Chained;
  if (s == "sector") return FineBoundary::PerSector;
  fail(ErrorKind::Config, "unknown boundary '" + s + "' (expected chained or sector)");
}

namespace detail {

template <class T>
T parse_value(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    T v{};
    if constexpr (std::is_same_v<T, double>) {
      v = std::stod(text, &used);
    } else {
      if (!text.empty() && text.front() == '-') throw std::invalid_argument("negative");
      v = static_cast<T>(std::stoull(text, &used));
    }
    if (used != text.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    fail(ErrorKind::Config, "bad value '" + text + "' for " + key);
  }
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

template <class T, class Get>
Setter field(Get get) {
  return [get](RunConfig& c, const std::string& key, const std::string& v) { get(c) = parse_value<T>(key, v); };
}

inline const std::map<std::string, Setter>& config_keys() {
  static const std::map<std::string, Setter> keys = {
      {"experiment.mode", [](RunConfig& c, const std::string&, const std::string& v) { c.mode = parse_mode(v); }},
      {"experiment.alpha", field<double>([](RunConfig& c) -> double& { return c.ridge.alpha; })},
      {"experiment.t_train", field<double>([](RunConfig& c) -> double& { return c.t_train; })},
      {"experiment.t_record", field<double>([](RunConfig& c) -> double& { return c.preset.integration.t_record; })},
      {"experiment.t_test", field<double>([](RunConfig& c) -> double& { return c.preset.t_test; })},
      {"experiment.seed_train", field<std::size_t>([](RunConfig& c) -> std::size_t& { return c.seed_train; })},
      {"experiment.seed_ic", field<std::size_t>([](RunConfig& c) -> std::size_t& { return c.seed_ic; })},
      {"experiment.threshold", field<double>([](RunConfig& c) -> double& { return c.protocol.threshold; })},
      {"model.L", field<std::size_t>([](RunConfig& c) -> std::size_t& { return c.preset.model.L; })},
      {"model.J", field<std::size_t>([](RunConfig& c) -> std::size_t& { return c.preset.model.J; })},
      {"model.I", field<std::size_t>([](RunConfig& c) -> std::size_t& { return c.preset.model.I; })},
      {"model.F", field<double>([](RunConfig& c) -> double& { return c.preset.model.F; })},
      {"model.h", field<double>([](RunConfig& c) -> double& { return c.preset.model.h; })},
      {"model.b", field<double>([](RunConfig& c) -> double& { return c.preset.model.b; })},
      {"model.c", field<double>([](RunConfig& c) -> double& { return c.preset.model.c; })},
      {"model.d", field<double>([](RunConfig& c) -> double& { return c.preset.model.d; })},
      {"model.e", field<double>([](RunConfig& c) -> double& { return c.preset.model.e; })},
      {"model.g", field<double>([](RunConfig& c) -> double& { return c.preset.model.g; })},
      {"model.boundary",
       [](RunConfig& c, const std::string&, const std::string& v) { c.preset.model.boundary = parse_boundary(v); }},
      {"features.k", field<std::size_t>([](RunConfig& c) -> std::size_t& { return c.preset.features.k; })},
      {"features.n_nn", field<std::size_t>([](RunConfig& c) -> std::size_t& { return c.preset.features.n_nn; })},
      {"features.c", field<double>([](RunConfig& c) -> double& { return c.preset.features.c; })},
      {"integration.t_transient",
       field<double>([](RunConfig& c) -> double& { return c.preset.integration.t_transient; })},
      {"integration.h_internal", field<double>([](RunConfig& c) -> double& { return c.preset.integration.h_internal; })},
      {"integration.dt_save", field<double>([](RunConfig& c) -> double& { return c.preset.integration.dt_save; })},
      {"protocol.n_train_sets",
       field<std::size_t>([](RunConfig& c) -> std::size_t& { return c.protocol.n_train_sets; })},
      {"protocol.n_initial_conditions",
       field<std::size_t>([](RunConfig& c) -> std::size_t& { return c.protocol.n_initial_conditions; })},
      {"protocol.n_heldout_conditions",
       field<std::size_t>([](RunConfig& c) -> std::size_t& { return c.protocol.n_heldout_conditions; })},
      {"protocol.layout_seed",
       field<std::uint64_t>([](RunConfig& c) -> std::uint64_t& { return c.protocol.layout_seed; })},
      {"run.out", [](RunConfig& c, const std::string&, const std::string& v) { c.out = v; }},
      {"run.workers", field<std::size_t>([](RunConfig& c) -> std::size_t& { return c.protocol.workers; })},
  };
  return keys;
}

}  // namespace detail

// Applies an INI document on top of `base`. A preset key resets every
// preset-derived field before the remaining keys are applied.
inline RunConfig apply_config(std::istream& is, RunConfig base) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    fail(ErrorKind::Config, e.what());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) fail(ErrorKind::Config, "key '" + section + "' outside a section");
    if (section == "experiment")
      if (const auto p = body.get_optional<std::string>("preset")) base.preset = preset_by_name(*p);
  }
  const auto& keys = detail::config_keys();
  for (const auto& [section, body] : tree) {
    for (const auto& [key, node] : body) {
      const std::string full = section + "." + key;
      if (full == "experiment.preset") continue;
      const auto it = keys.find(full);
      if (it == keys.end()) fail(ErrorKind::Config, "unknown config key '" + full + "'");
      it->second(base, full, node.data());
    }
  }
  base.preset.model.validate();
  base.preset.features.validate(base.preset.model.L);
  return base;
}

inline RunConfig load_config(const std::filesystem::path& path, RunConfig base = {}) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::Io, "cannot open config '" + path.string() + "'");
  return apply_config(is, std::move(base));
}

}  // namespace ngrc
