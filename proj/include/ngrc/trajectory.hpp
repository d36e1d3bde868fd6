#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include <Eigen/Dense>

#include "ngrc/errors.hpp"

namespace ngrc {

// Scalar statistics shared by every location: the shared readout mixes data
// from all sites, so the scale must be common. Population std (divide by N).
struct NormStats {
  double mean = 0.0;
  double std = 1.0;

  bool operator==(const NormStats&) const = default;
};

// Macroscopic field x_l(t_m): rows are locations, columns are saved samples.
struct TrajectoryGrid {
  Eigen::MatrixXd data;
  double dt_save = 0.01;
  double t0 = 0.0;
  NormStats norm;
  bool normalized = false;

  std::size_t locations() const { return static_cast<std::size_t>(data.rows()); }
  std::size_t samples() const { return static_cast<std::size_t>(data.cols()); }
  double time_at(std::size_t m) const { return t0 + static_cast<double>(m) * dt_save; }
};

inline NormStats compute_stats(const Eigen::MatrixXd& data) {
  require(data.size() > 0, ErrorKind::DegenerateData, "cannot compute statistics of an empty grid");
  const double n = static_cast<double>(data.size());
  const double mean = data.sum() / n;
  const double var = (data.array() - mean).square().sum() / n;
  return {mean, std::sqrt(var)};
}

// Applies externally supplied statistics, e.g. training-window stats to test data.
inline TrajectoryGrid normalize_with(const TrajectoryGrid& grid, const NormStats& stats) {
  require(!grid.normalized, ErrorKind::InvalidInput, "grid is already normalized");
  require(stats.std > 0.0 && std::isfinite(stats.std), ErrorKind::DegenerateData,
          "normalization std must be positive");
  TrajectoryGrid out = grid;
  out.data = (grid.data.array() - stats.mean) / stats.std;
  out.norm = stats;
  out.normalized = true;
  return out;
}

inline TrajectoryGrid normalize(const TrajectoryGrid& grid) {
  require(!grid.normalized, ErrorKind::InvalidInput, "grid is already normalized");
  const NormStats stats = compute_stats(grid.data);
  require(stats.std > 0.0, ErrorKind::DegenerateData, "zero variance data cannot be normalized");
  return normalize_with(grid, stats);
}

inline TrajectoryGrid denormalize(const TrajectoryGrid& grid) {
  require(grid.normalized, ErrorKind::InvalidInput, "grid is not normalized");
  TrajectoryGrid out = grid;
  out.data = grid.data.array() * grid.norm.std + grid.norm.mean;
  out.normalized = false;
  return out;
}

// Samples [begin, end) as a new grid with t0 adjusted.
inline TrajectoryGrid slice(const TrajectoryGrid& grid, std::size_t begin, std::size_t end) {
  require(begin <= end && end <= grid.samples(), ErrorKind::InvalidWindow,
          "slice [" + std::to_string(begin) + ", " + std::to_string(end) + ") outside grid of " +
              std::to_string(grid.samples()) + " samples");
  TrajectoryGrid out = grid;
  out.data = grid.data.middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin));
  out.t0 = grid.time_at(begin);
  return out;
}

// Result row l holds source row (l + s) mod L, so shift(g, s) at l equals g at l+s.
inline Eigen::MatrixXd cyclic_shift_rows(const Eigen::MatrixXd& data, std::ptrdiff_t s) {
  const auto L = data.rows();
  Eigen::MatrixXd out(L, data.cols());
  for (Eigen::Index l = 0; l < L; ++l) out.row(l) = data.row(((l + s) % L + L) % L);
  return out;
}

inline TrajectoryGrid cyclic_shift(const TrajectoryGrid& grid, std::ptrdiff_t s) {
  TrajectoryGrid out = grid;
  out.data = cyclic_shift_rows(grid.data, s);
  return out;
}

}  // namespace ngrc
