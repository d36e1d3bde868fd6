#pragma once

// Multi-scale Lorenz96 model (one, two or three coupled scales) and a
// fixed-step RK4 integrator producing the macroscopic trajectory x_l(t).

#include <cmath>
#include <cstddef>
#include <string>

#include <Eigen/Dense>

#include "ngrc/errors.hpp"
#include "ngrc/trajectory.hpp"

namespace ngrc {

// How the fine (y) and finest (z) rings close. PerSector wraps j mod J
// inside each sector l (and i mod I inside each (j, l)). Chained joins the
// sectors into single rings, y_{J+1,l} = y_{1,l+1} and z_{I+1,j,l} = z_{1,j+1,l},
// as in the Thornes et al. three-level model; the published horizon and
// weight-similarity values are reproduced with this convention.
enum class FineBoundary { Chained, PerSector };

struct ModelParams {
  std::size_t L = 36;
  std::size_t J = 10;
  std::size_t I = 10;
  double F = 20.0;
  double h = 1.0;
  double b = 10.0;
  double c = 10.0;
  double d = 10.0;
  double e = 10.0;
  double g = 10.0;
  FineBoundary boundary = FineBoundary::Chained;

  bool has_fine() const { return J > 0; }
  bool has_finest() const { return I > 0; }
  std::size_t n_fine() const { return L * J; }
  std::size_t n_finest() const { return L * J * I; }

  void validate() const {
    require(L >= 4, ErrorKind::InvalidInput, "L must be >= 4, got " + std::to_string(L));
    require(!(I > 0 && J == 0), ErrorKind::InvalidInput, "I > 0 requires J > 0");
    require(J == 0 || J >= 4, ErrorKind::InvalidInput, "J must be 0 or >= 4, got " + std::to_string(J));
    require(I == 0 || I >= 4, ErrorKind::InvalidInput, "I must be 0 or >= 4, got " + std::to_string(I));
    if (J > 0) require(b != 0.0 && c != 0.0, ErrorKind::InvalidInput, "b and c must be nonzero when J > 0");
    if (I > 0)
      require(d != 0.0 && e != 0.0 && g != 0.0, ErrorKind::InvalidInput,
              "d, e and g must be nonzero when I > 0");
  }
};

// y is stored as y[l*J + j], z as z[(l*J + j)*I + i].
struct SimState {
  Eigen::VectorXd x;
  Eigen::VectorXd y;
  Eigen::VectorXd z;

  static SimState zeros(const ModelParams& p) {
    return {Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.L)),
            Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.n_fine())),
            Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.n_finest()))};
  }

  bool matches(const ModelParams& p) const {
    return static_cast<std::size_t>(x.size()) == p.L && static_cast<std::size_t>(y.size()) == p.n_fine() &&
           static_cast<std::size_t>(z.size()) == p.n_finest();
  }

  bool all_finite() const { return x.allFinite() && y.allFinite() && z.allFinite(); }

  double max_abs() const {
    double m = x.size() ? x.cwiseAbs().maxCoeff() : 0.0;
    if (y.size()) m = std::max(m, y.cwiseAbs().maxCoeff());
    if (z.size()) m = std::max(m, z.cwiseAbs().maxCoeff());
    return m;
  }
};

inline constexpr double kBlowupThreshold = 1e6;

namespace detail {

inline void check_dims(const SimState& s, const ModelParams& p) {
  require(s.matches(p), ErrorKind::InvalidInput,
          "state dimensions (" + std::to_string(s.x.size()) + ", " + std::to_string(s.y.size()) + ", " +
              std::to_string(s.z.size()) + ") do not match params (L=" + std::to_string(p.L) +
              ", J=" + std::to_string(p.J) + ", I=" + std::to_string(p.I) + ")");
}

// Neighbour indices on a ring of size n >= 4 without integer division.
struct Ring {
  std::size_t m2, m1, p1, p2;
  Ring(std::size_t i, std::size_t n)
      : m2(i >= 2 ? i - 2 : i + n - 2),
        m1(i ? i - 1 : n - 1),
        p1(i + 1 < n ? i + 1 : 0),
        p2(i + 2 < n ? i + 2 : i + 2 - n) {}
};

// out[i] = coef * v[i-1] * (v[i+1] - v[i-2]) on a ring of size n >= 4.
inline void advect_backward(const double* v, std::size_t n, double coef, double* out) {
  for (std::size_t i : {std::size_t{0}, std::size_t{1}, n - 1}) {
    const Ring r(i, n);
    out[i] = coef * v[r.m1] * (v[r.p1] - v[r.m2]);
  }
  for (std::size_t i = 2; i + 1 < n; ++i) out[i] = coef * v[i - 1] * (v[i + 1] - v[i - 2]);
}

// out[i] = coef * v[i+1] * (v[i+2] - v[i-1]) on a ring of size n >= 4.
inline void advect_forward(const double* v, std::size_t n, double coef, double* out) {
  for (std::size_t i : {std::size_t{0}, n - 2, n - 1}) {
    const Ring r(i, n);
    out[i] = coef * v[r.p1] * (v[r.p2] - v[r.m1]);
  }
  for (std::size_t i = 1; i + 2 < n; ++i) out[i] = coef * v[i + 1] * (v[i + 2] - v[i - 1]);
}

}  // namespace detail

// Writes the right-hand side into `out`, which must already have matching shape.
inline void derivative_into(const SimState& s, const ModelParams& p, SimState& out) {
  const std::size_t L = p.L, J = p.J, I = p.I;
  const double hcb = J ? p.h * p.c / p.b : 0.0;
  const double hed = I ? p.h * p.e / p.d : 0.0;
  const bool chained = p.boundary == FineBoundary::Chained;

  detail::advect_backward(s.x.data(), L, 1.0, out.x.data());
  for (std::size_t l = 0; l < L; ++l) {
    double dx = out.x[l] - s.x[l] + p.F;
    if (J) dx -= hcb * s.y.segment(static_cast<Eigen::Index>(l * J), static_cast<Eigen::Index>(J)).sum();
    out.x[l] = dx;
  }
  if (!J) return;

  const double cb = p.c * p.b;
  if (chained) {
    detail::advect_forward(s.y.data(), L * J, -cb, out.y.data());
  } else {
    for (std::size_t l = 0; l < L; ++l) detail::advect_forward(s.y.data() + l * J, J, -cb, out.y.data() + l * J);
  }
  for (std::size_t l = 0; l < L; ++l) {
    const double fx = hcb * s.x[l];
    for (std::size_t lj = l * J; lj < (l + 1) * J; ++lj) {
      double v = out.y[lj] - p.c * s.y[lj] + fx;
      if (I) {
        const double* z = s.z.data() + lj * I;
        double sz = 0.0;
        for (std::size_t i = 0; i < I; ++i) sz += z[i];
        v -= hed * sz;
      }
      out.y[lj] = v;
    }
  }
  if (!I) return;

  const double ed = p.e * p.d;
  const double ge = p.g * p.e;
  if (chained) {
    detail::advect_backward(s.z.data(), L * J * I, ed, out.z.data());
  } else {
    for (std::size_t lj = 0; lj < L * J; ++lj)
      detail::advect_backward(s.z.data() + lj * I, I, ed, out.z.data() + lj * I);
  }
  for (std::size_t lj = 0; lj < L * J; ++lj) {
    const double fy = hed * s.y[lj];
    for (std::size_t lji = lj * I; lji < (lj + 1) * I; ++lji) out.z[lji] += fy - ge * s.z[lji];
  }
}

inline SimState derivative(const SimState& state, const ModelParams& params) {
  detail::check_dims(state, params);
  SimState out = SimState::zeros(params);
  derivative_into(state, params, out);
  return out;
}

// Reusable RK4 workspace so long integrations do not allocate per step.
class Rk4Integrator {
 public:
  explicit Rk4Integrator(ModelParams params)
      : p_(params), k1_(SimState::zeros(p_)), k2_(k1_), k3_(k1_), k4_(k1_), tmp_(k1_) {
    p_.validate();
  }

  const ModelParams& params() const { return p_; }

  // Advances `s` in place by one step of size dt; step_index only labels errors.
  void step(SimState& s, double dt, long long step_index = 0) {
    derivative_into(s, p_, k1_);
    axpy(s, 0.5 * dt, k1_, tmp_);
    derivative_into(tmp_, p_, k2_);
    axpy(s, 0.5 * dt, k2_, tmp_);
    derivative_into(tmp_, p_, k3_);
    axpy(s, dt, k3_, tmp_);
    derivative_into(tmp_, p_, k4_);
    const double w = dt / 6.0;
    s.x += w * (k1_.x + 2.0 * k2_.x + 2.0 * k3_.x + k4_.x);
    if (s.y.size()) s.y += w * (k1_.y + 2.0 * k2_.y + 2.0 * k3_.y + k4_.y);
    if (s.z.size()) s.z += w * (k1_.z + 2.0 * k2_.z + 2.0 * k3_.z + k4_.z);

    if (!s.all_finite() || s.max_abs() > kBlowupThreshold)
      throw BlowupError(step_index, static_cast<double>(step_index + 1) * dt, "state left the attractor");
  }

 private:
  static void axpy(const SimState& s, double a, const SimState& k, SimState& out) {
    out.x = s.x + a * k.x;
    if (s.y.size()) out.y = s.y + a * k.y;
    if (s.z.size()) out.z = s.z + a * k.z;
  }

  ModelParams p_;
  SimState k1_, k2_, k3_, k4_, tmp_;
};

inline SimState rk4_step(const SimState& state, const ModelParams& params, double dt, long long step_index = 0) {
  require(dt > 0.0, ErrorKind::InvalidInput, "step size must be positive");
  detail::check_dims(state, params);
  Rk4Integrator integ(params);
  SimState next = state;
  integ.step(next, dt, step_index);
  return next;
}

inline SimState default_init(const ModelParams& params) {
  SimState s = SimState::zeros(params);
  s.x.setConstant(params.F);
  s.x[0] = params.F + 0.01;
  return s;
}

struct IntegrationSettings {
  double t_transient = 10.0;
  double t_record = 100.0;
  double h_internal = 0.001;
  double dt_save = 0.01;
};

namespace detail {
inline long long steps_for(double span, double h, const char* what) {
  const double n = span / h;
  const double r = std::round(n);
  require(std::abs(n - r) <= 1e-6 * std::max(1.0, r), ErrorKind::InvalidInput,
          std::string(what) + " must be an integer multiple of h_internal");
  return static_cast<long long>(r);
}
}  // namespace detail

// Integrates the transient, discards it, then records x every dt_save.
// Sample m of the grid is taken at t = t_transient + m*dt_save.
inline TrajectoryGrid simulate(const ModelParams& params, SimState state, const IntegrationSettings& cfg) {
  params.validate();
  detail::check_dims(state, params);
  require(cfg.h_internal > 0.0 && cfg.dt_save > 0.0, ErrorKind::InvalidInput, "step sizes must be positive");
  require(cfg.t_transient >= 0.0 && cfg.t_record >= 0.0, ErrorKind::InvalidInput, "durations must be >= 0");

  const long long stride = detail::steps_for(cfg.dt_save, cfg.h_internal, "dt_save");
  require(stride >= 1, ErrorKind::InvalidInput, "dt_save must be >= h_internal");
  const long long n_transient = static_cast<long long>(std::round(cfg.t_transient / cfg.h_internal));
  const auto n_samples = static_cast<Eigen::Index>(std::llround(cfg.t_record / cfg.dt_save));

  Rk4Integrator integ(params);
  long long step = 0;
  for (; step < n_transient; ++step) integ.step(state, cfg.h_internal, step);

  TrajectoryGrid grid;
  grid.dt_save = cfg.dt_save;
  grid.t0 = static_cast<double>(n_transient) * cfg.h_internal;
  grid.data.resize(static_cast<Eigen::Index>(params.L), n_samples);
  for (Eigen::Index m = 0; m < n_samples; ++m) {
    if (m > 0)
      for (long long s = 0; s < stride; ++s, ++step) integ.step(state, cfg.h_internal, step);
    grid.data.col(m) = state.x;
  }
  return grid;
}

}  // namespace ngrc
