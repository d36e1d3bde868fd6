#pragma once

// NG-RC feature vector for one site: constant, linear stencil taps, and the
// unique quadratic monomials of the taps.
//
// Canonical ordering (frozen; weight files depend on it):
//   [0]                  constant c
//   [1 .. d_lin]         taps, time-major then space left-to-right:
//                        tau = 0 (newest) .. k-1, offset = -n_nn .. +n_nn
//   [1+d_lin .. d_total) lin[i]*lin[j] for i = 0..d_lin-1, j = i..d_lin-1

#include <cstddef>
#include <span>
#include <string>

#include <Eigen/Dense>

#include "ngrc/errors.hpp"
#include "ngrc/trajectory.hpp"

namespace ngrc {

struct FeatureDims {
  std::size_t d_lin = 0;
  std::size_t d_nonlin = 0;
  std::size_t d_total = 0;

  bool operator==(const FeatureDims&) const = default;
};

struct FeatureConfig {
  std::size_t k = 3;
  std::size_t n_nn = 2;
  double c = 1.0;

  std::size_t n_in() const { return 2 * n_nn + 1; }

  FeatureDims dims() const {
    const std::size_t lin = k * n_in();
    const std::size_t nonlin = lin * (lin + 1) / 2;
    return {lin, nonlin, 1 + lin + nonlin};
  }

  void validate(std::size_t L) const {
    require(k >= 1, ErrorKind::InvalidInput, "k must be >= 1");
    require(n_in() <= L, ErrorKind::InvalidInput,
            "stencil width " + std::to_string(n_in()) + " exceeds L=" + std::to_string(L));
  }

  bool operator==(const FeatureConfig&) const = default;
};

inline FeatureDims feature_dims(const FeatureConfig& cfg) { return cfg.dims(); }

using FeatureVector = Eigen::VectorXd;
// d_total x M, one column per instant.
using DesignMatrix = Eigen::MatrixXd;

// Fills `out` (length d_total) from tap(offset, tau) = x_{l+offset}(t_{m-tau}).
template <class Tap>
inline void fill_features(const FeatureConfig& cfg, Tap&& tap, std::span<double> out) {
  const auto n = static_cast<std::ptrdiff_t>(cfg.n_nn);
  const std::size_t d_lin = cfg.k * cfg.n_in();
  out[0] = cfg.c;
  std::size_t idx = 1;
  for (std::size_t tau = 0; tau < cfg.k; ++tau)
    for (std::ptrdiff_t off = -n; off <= n; ++off) out[idx++] = tap(off, tau);
  const double* lin = out.data() + 1;
  for (std::size_t i = 0; i < d_lin; ++i) {
    const double li = lin[i];
    for (std::size_t j = i; j < d_lin; ++j) out[idx++] = li * lin[j];
  }
}

namespace detail {

inline void check_window(const TrajectoryGrid& grid, std::size_t l, std::size_t m, const FeatureConfig& cfg) {
  cfg.validate(grid.locations());
  require(l < grid.locations(), ErrorKind::InvalidInput, "location " + std::to_string(l) + " out of range");
  require(m + 1 >= cfg.k, ErrorKind::InvalidWindow,
          "time index " + std::to_string(m) + " has fewer than k-1=" + std::to_string(cfg.k - 1) +
              " samples of history");
  require(m < grid.samples(), ErrorKind::InvalidWindow, "time index " + std::to_string(m) + " past end of grid");
}

// Stencil over a column-major L x M block; column m is the newest sample.
struct GridTap {
  const double* data;
  std::ptrdiff_t L;
  std::ptrdiff_t l;
  std::ptrdiff_t m;

  double operator()(std::ptrdiff_t off, std::size_t tau) const {
    const std::ptrdiff_t loc = ((l + off) % L + L) % L;
    return data[(m - static_cast<std::ptrdiff_t>(tau)) * L + loc];
  }
};

inline GridTap grid_tap(const Eigen::MatrixXd& data, std::size_t l, std::size_t m) {
  return {data.data(), static_cast<std::ptrdiff_t>(data.rows()), static_cast<std::ptrdiff_t>(l),
          static_cast<std::ptrdiff_t>(m)};
}

}  // namespace detail

inline Eigen::VectorXd linear_features(const TrajectoryGrid& grid, std::size_t l, std::size_t m,
                                       const FeatureConfig& cfg) {
  detail::check_window(grid, l, m, cfg);
  const auto tap = detail::grid_tap(grid.data, l, m);
  const auto n = static_cast<std::ptrdiff_t>(cfg.n_nn);
  Eigen::VectorXd lin(static_cast<Eigen::Index>(cfg.dims().d_lin));
  Eigen::Index idx = 0;
  for (std::size_t tau = 0; tau < cfg.k; ++tau)
    for (std::ptrdiff_t off = -n; off <= n; ++off) lin[idx++] = tap(off, tau);
  return lin;
}

// [c] ⊕ lin ⊕ upper-triangular products, from an explicit linear part.
inline FeatureVector features_from_linear(const Eigen::VectorXd& lin, double c) {
  const auto d = static_cast<std::size_t>(lin.size());
  FeatureVector out(static_cast<Eigen::Index>(1 + d + d * (d + 1) / 2));
  out[0] = c;
  out.segment(1, lin.size()) = lin;
  Eigen::Index idx = 1 + lin.size();
  for (Eigen::Index i = 0; i < lin.size(); ++i)
    for (Eigen::Index j = i; j < lin.size(); ++j) out[idx++] = lin[i] * lin[j];
  return out;
}

inline FeatureVector total_features(const TrajectoryGrid& grid, std::size_t l, std::size_t m,
                                    const FeatureConfig& cfg) {
  detail::check_window(grid, l, m, cfg);
  FeatureVector out(static_cast<Eigen::Index>(cfg.dims().d_total));
  fill_features(cfg, detail::grid_tap(grid.data, l, m), std::span<double>(out.data(), out.size()));
  return out;
}

// Columns for instants m_start..m_end inclusive at site l.
inline DesignMatrix design_matrix(const TrajectoryGrid& grid, std::size_t l, const FeatureConfig& cfg,
                                  std::size_t m_start, std::size_t m_end) {
  require(m_start <= m_end, ErrorKind::InvalidWindow, "empty design-matrix range");
  detail::check_window(grid, l, m_start, cfg);
  detail::check_window(grid, l, m_end, cfg);
  const auto d = static_cast<Eigen::Index>(cfg.dims().d_total);
  DesignMatrix out(d, static_cast<Eigen::Index>(m_end - m_start + 1));
  for (std::size_t m = m_start; m <= m_end; ++m)
    fill_features(cfg, detail::grid_tap(grid.data, l, m),
                  std::span<double>(out.col(static_cast<Eigen::Index>(m - m_start)).data(), d));
  return out;
}

}  // namespace ngrc
