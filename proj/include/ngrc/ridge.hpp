#pragma once

// Ridge (Tikhonov) readouts: per-location W_l and the shared,
// translation-symmetric W trained on all locations at once.
//
// The Gram matrix O·Oᵀ and cross term O·yᵀ are accumulated in fixed-size
// column blocks, so memory is O(d_total²) regardless of how many columns
// are streamed through. All of W, including the constant-feature weight,
// is penalized.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ngrc/errors.hpp"
#include "ngrc/features.hpp"
#include "ngrc/parallel.hpp"
#include "ngrc/trajectory.hpp"

namespace ngrc {

struct RidgeConfig {
  double alpha = 1e-2;
};

class NormalEquations {
 public:
  NormalEquations() = default;
  explicit NormalEquations(Eigen::Index d)
      : gram_(Eigen::MatrixXd::Zero(d, d)), rhs_(Eigen::VectorXd::Zero(d)) {}

  Eigen::Index dim() const { return rhs_.size(); }
  std::size_t count() const { return count_; }
  double target_sq() const { return target_sq_; }

  // block is d x B (one feature vector per column), y holds the B targets.
  template <class Block, class Targets>
  void add(const Eigen::MatrixBase<Block>& block, const Eigen::MatrixBase<Targets>& y) {
    require(block.rows() == dim() && block.cols() == y.size(), ErrorKind::InvalidInput,
            "block shape does not match accumulator");
    if (block.cols() == 0) return;
    gram_.selfadjointView<Eigen::Lower>().rankUpdate(block);
    rhs_.noalias() += block * y;
    target_sq_ += y.squaredNorm();
    count_ += static_cast<std::size_t>(block.cols());
  }

  void merge(const NormalEquations& other) {
    require(other.dim() == dim(), ErrorKind::InvalidInput, "accumulator dimensions differ");
    gram_ += other.gram_;
    rhs_ += other.rhs_;
    target_sq_ += other.target_sq_;
    count_ += other.count_;
  }

  Eigen::MatrixXd gram() const { return gram_.selfadjointView<Eigen::Lower>(); }
  const Eigen::VectorXd& rhs() const { return rhs_; }

  // Minimizer of ||W·O - y||² + alpha·||W||².
  Eigen::VectorXd solve(double alpha) const {
    require(alpha >= 0.0 && std::isfinite(alpha), ErrorKind::InvalidInput, "alpha must be finite and >= 0");
    require(count_ > 0, ErrorKind::InvalidWindow, "no training columns accumulated");
    const Eigen::Index d = dim();
    Eigen::MatrixXd A = gram();
    A.diagonal().array() += alpha;

    const double eps = std::numeric_limits<double>::epsilon();
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    const bool usable = llt.info() == Eigen::Success && (alpha > 0.0 || llt.rcond() > static_cast<double>(d) * eps);
    if (usable) {
      Eigen::VectorXd w = llt.solve(rhs_);
      const Eigen::VectorXd r = rhs_ - A * w;
      w += llt.solve(r);
      if (w.allFinite()) return w;
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram());
    require(eig.info() == Eigen::Success, ErrorKind::RankDeficient, "eigendecomposition failed");
    Eigen::VectorXd lambda = eig.eigenvalues().cwiseMax(0.0);
    const double lmax = lambda.maxCoeff();
    if (alpha == 0.0)
      require(lmax > 0.0 && lambda.minCoeff() > static_cast<double>(d) * eps * lmax, ErrorKind::RankDeficient,
              "normal matrix is singular at alpha=0; use alpha > 0");
    const Eigen::VectorXd proj = eig.eigenvectors().transpose() * rhs_;
    return eig.eigenvectors() * (proj.array() / (lambda.array() + alpha)).matrix();
  }

 private:
  Eigen::MatrixXd gram_;  // lower triangle only
  Eigen::VectorXd rhs_;
  double target_sq_ = 0.0;
  std::size_t count_ = 0;
};

// O is d_total x M, y has M entries; returns W as a row of length d_total.
inline Eigen::RowVectorXd ridge_solve(const Eigen::MatrixXd& O, const Eigen::VectorXd& y, double alpha) {
  require(O.cols() >= 1, ErrorKind::InvalidInput, "need at least one training column");
  require(O.cols() == y.size(), ErrorKind::InvalidInput,
          "design matrix has " + std::to_string(O.cols()) + " columns but " + std::to_string(y.size()) +
              " targets");
  NormalEquations ne(O.rows());
  ne.add(O, y);
  return ne.solve(alpha).transpose();
}

enum class ReadoutMode { PerLocation, Shared };

inline std::string_view to_string(ReadoutMode m) { return m == ReadoutMode::Shared ? "shared" : "independent"; }

struct ReadoutWeights {
  ReadoutMode mode = ReadoutMode::PerLocation;
  std::size_t L = 0;    // locations the readout serves
  Eigen::MatrixXd W;    // L x d_total, or 1 x d_total when shared
  FeatureConfig cfg;
  NormStats norm;
  double alpha = 0.0;

  auto row(std::size_t l) const { return W.row(mode == ReadoutMode::Shared ? 0 : static_cast<Eigen::Index>(l)); }
};

// Half-open range of saved samples used for training. The first k-1 samples
// are history only; instants m in [begin+k-1, end-2] are paired with x(m+1).
struct SampleWindow {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
};

inline std::size_t training_pairs(const SampleWindow& w, const FeatureConfig& cfg) {
  return w.size() > cfg.k ? w.size() - cfg.k : 0;
}

namespace detail {

inline constexpr Eigen::Index kAccumulateBlock = 256;

inline void check_training_input(const TrajectoryGrid& grid, const FeatureConfig& cfg, const SampleWindow& w) {
  require(grid.normalized, ErrorKind::InvalidInput, "training expects a normalized grid");
  cfg.validate(grid.locations());
  require(w.begin <= w.end && w.end <= grid.samples(), ErrorKind::InvalidWindow, "training window outside grid");
  require(training_pairs(w, cfg) >= 1, ErrorKind::InvalidWindow,
          "window of " + std::to_string(w.size()) + " samples gives no training pairs for k=" +
              std::to_string(cfg.k));
}

}  // namespace detail

// Normal equations of site l over the window, time-ordered.
inline NormalEquations accumulate_location(const TrajectoryGrid& grid, std::size_t l, const FeatureConfig& cfg,
                                           const SampleWindow& w) {
  const auto d = static_cast<Eigen::Index>(cfg.dims().d_total);
  NormalEquations ne(d);
  const std::size_t first = w.begin + cfg.k - 1;
  const std::size_t last = w.end - 2;
  Eigen::MatrixXd block(d, detail::kAccumulateBlock);
  Eigen::VectorXd y(detail::kAccumulateBlock);
  for (std::size_t m0 = first; m0 <= last; m0 += static_cast<std::size_t>(detail::kAccumulateBlock)) {
    const auto B = static_cast<Eigen::Index>(
        std::min<std::size_t>(static_cast<std::size_t>(detail::kAccumulateBlock), last - m0 + 1));
    for (Eigen::Index b = 0; b < B; ++b) {
      const std::size_t m = m0 + static_cast<std::size_t>(b);
      fill_features(cfg, detail::grid_tap(grid.data, l, m), std::span<double>(block.col(b).data(), d));
      y[b] = grid.data(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(m + 1));
    }
    ne.add(block.leftCols(B), y.head(B));
  }
  return ne;
}

// One accumulator per site. Both training modes are solved from these, so an
// experiment comparing modes on the same window builds them once.
inline std::vector<NormalEquations> accumulate_all_locations(const TrajectoryGrid& grid, const FeatureConfig& cfg,
                                                             const SampleWindow& w, std::size_t workers = 1) {
  detail::check_training_input(grid, cfg, w);
  std::vector<NormalEquations> out(grid.locations());
  parallel_for(out.size(), workers, [&](std::size_t l) { out[l] = accumulate_location(grid, l, cfg, w); });
  return out;
}

inline ReadoutWeights solve_independent(const std::vector<NormalEquations>& systems, const FeatureConfig& cfg,
                                        const NormStats& norm, double alpha, std::size_t workers = 1) {
  require(!systems.empty(), ErrorKind::InvalidInput, "no locations to train");
  ReadoutWeights w{ReadoutMode::PerLocation, systems.size(),
                   Eigen::MatrixXd(static_cast<Eigen::Index>(systems.size()), systems.front().dim()), cfg, norm,
                   alpha};
  parallel_for(systems.size(), workers, [&](std::size_t l) {
    try {
      w.W.row(static_cast<Eigen::Index>(l)) = systems[l].solve(alpha).transpose();
    } catch (const Error& e) {
      throw Error(e.kind(), "location " + std::to_string(l) + ": " + e.what());
    }
  });
  return w;
}

// Sums the per-site systems in ascending site order, then solves once.
inline ReadoutWeights solve_shared(const std::vector<NormalEquations>& systems, const FeatureConfig& cfg,
                                   const NormStats& norm, double alpha) {
  require(!systems.empty(), ErrorKind::InvalidInput, "no locations to train");
  NormalEquations total = systems.front();
  for (std::size_t l = 1; l < systems.size(); ++l) total.merge(systems[l]);
  return {ReadoutMode::Shared, systems.size(), total.solve(alpha).transpose(), cfg, norm, alpha};
}

inline ReadoutWeights train_independent(const TrajectoryGrid& grid, const FeatureConfig& cfg,
                                        const RidgeConfig& ridge, const SampleWindow& window,
                                        std::size_t workers = 1) {
  return solve_independent(accumulate_all_locations(grid, cfg, window, workers), cfg, grid.norm, ridge.alpha,
                           workers);
}

inline ReadoutWeights train_shared(const TrajectoryGrid& grid, const FeatureConfig& cfg, const RidgeConfig& ridge,
                                   const SampleWindow& window, std::size_t workers = 1) {
  return solve_shared(accumulate_all_locations(grid, cfg, window, workers), cfg, grid.norm, ridge.alpha);
}

// C = 1/(L(L-1)) Σ_l Σ_{l'≠l} (W_l·W_l') / ||W_l||². Not symmetric in l, l';
// rows of different magnitude can push C above 1.
inline double weight_correlation(const ReadoutWeights& w) {
  require(w.mode == ReadoutMode::PerLocation, ErrorKind::InvalidInput, "correlation needs per-location weights");
  const Eigen::Index L = w.W.rows();
  require(L >= 2, ErrorKind::InvalidInput, "correlation needs at least two rows");
  const Eigen::MatrixXd dots = w.W * w.W.transpose();
  double sum = 0.0;
  for (Eigen::Index l = 0; l < L; ++l) {
    const double n2 = dots(l, l);
    require(n2 > 0.0, ErrorKind::DegenerateWeights, "row " + std::to_string(l) + " has zero norm");
    sum += (dots.row(l).sum() - n2) / n2;
  }
  return sum / static_cast<double>(L * (L - 1));
}

}  // namespace ngrc
