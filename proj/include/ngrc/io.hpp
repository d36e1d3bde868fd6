#pragma once

// File formats. All numbers are little-endian; reals are IEEE-754 binary64.
//
// Trajectory (.l96t):
//   "L96T" | u32 version | u64 L | u64 M | f64 dt_save | f64 t0 |
//   f64 norm_mean | f64 norm_std | u8 normalized | f64 data[L][M]
//
// Readout weights (.ngrw):
//   "NGRW" | u32 version | u8 mode (0 independent, 1 shared) | u64 L |
//   u64 d_total | u64 k | u64 n_nn | f64 c | f64 alpha | f64 norm_mean |
//   f64 norm_std | f64 W[rows][d_total]   (rows = L, or 1 when shared)

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ngrc/errors.hpp"
#include "ngrc/experiment.hpp"
#include "ngrc/forecast.hpp"
#include "ngrc/ridge.hpp"
#include "ngrc/trajectory.hpp"

namespace ngrc::io {

inline constexpr std::uint32_t kTrajectoryVersion = 1;
inline constexpr std::uint32_t kWeightsVersion = 1;

namespace detail {

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}

  void magic(const char (&m)[5]) { os_.write(m, 4); }
  void u8(std::uint8_t v) { os_.put(static_cast<char>(v)); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }

 private:
  void le(std::uint64_t v, int n) {
    std::array<char, 8> b{};
    for (int i = 0; i < n; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xffu);
    os_.write(b.data(), n);
  }
  std::ostream& os_;
};

class Reader {
 public:
  Reader(std::istream& is, std::string what) : is_(is), what_(std::move(what)) {}

  void magic(const char (&m)[5]) {
    char b[4];
    read(b, 4);
    if (std::memcmp(b, m, 4) != 0) fail(ErrorKind::Format, what_ + ": bad magic bytes (expected " + m + ")");
  }
  std::uint8_t u8() {
    char b;
    read(&b, 1);
    return static_cast<std::uint8_t>(b);
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  double f64() { return std::bit_cast<double>(le(8)); }

  // Rejects a header promising more payload than a seekable stream holds,
  // before anything is allocated for it.
  void expect_payload(std::uint64_t count, std::uint64_t width) {
    const auto here = is_.tellg();
    if (here < 0) return;
    is_.seekg(0, std::ios::end);
    const auto end = is_.tellg();
    is_.seekg(here);
    const auto left = static_cast<std::uint64_t>(end - here);
    if (count > left / width) fail(ErrorKind::Format, what_ + ": truncated file");
  }

 private:
  void read(char* dst, std::streamsize n) {
    is_.read(dst, n);
    if (is_.gcount() != n) fail(ErrorKind::Format, what_ + ": truncated file");
  }
  std::uint64_t le(int n) {
    std::array<unsigned char, 8> b{};
    read(reinterpret_cast<char*>(b.data()), n);
    std::uint64_t v = 0;
    for (int i = n - 1; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
    return v;
  }
  std::istream& is_;
  std::string what_;
};

inline std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream os(path, mode | std::ios::trunc);
  if (!os) fail(ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
  return os;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Io, "cannot open '" + path.string() + "'");
  return is;
}

inline void finish(std::ostream& os, const std::filesystem::path& path) {
  os.flush();
  if (!os) fail(ErrorKind::Io, "write to '" + path.string() + "' failed");
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Trajectory

inline void write_trajectory(std::ostream& os, const TrajectoryGrid& g) {
  detail::Writer w(os);
  w.magic("L96T");
  w.u32(kTrajectoryVersion);
  w.u64(g.locations());
  w.u64(g.samples());
  w.f64(g.dt_save);
  w.f64(g.t0);
  w.f64(g.norm.mean);
  w.f64(g.norm.std);
  w.u8(g.normalized ? 1 : 0);
  for (Eigen::Index l = 0; l < g.data.rows(); ++l)
    for (Eigen::Index m = 0; m < g.data.cols(); ++m) w.f64(g.data(l, m));
}

inline TrajectoryGrid read_trajectory(std::istream& is, const std::string& what = "trajectory") {
  detail::Reader r(is, what);
  r.magic("L96T");
  const auto version = r.u32();
  require(version == kTrajectoryVersion, ErrorKind::Format,
          what + ": unsupported trajectory version " + std::to_string(version));
  TrajectoryGrid g;
  const auto L = r.u64();
  const auto M = r.u64();
  require(L < (1u << 24) && M < (1ull << 40), ErrorKind::Format, what + ": implausible dimensions");
  g.dt_save = r.f64();
  g.t0 = r.f64();
  g.norm.mean = r.f64();
  g.norm.std = r.f64();
  const auto flag = r.u8();
  require(flag <= 1, ErrorKind::Format, what + ": bad normalized flag");
  g.normalized = flag == 1;
  require(g.dt_save > 0.0, ErrorKind::Format, what + ": dt_save must be positive");
  r.expect_payload(L * M, 8);
  g.data.resize(static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(M));
  for (Eigen::Index l = 0; l < g.data.rows(); ++l)
    for (Eigen::Index m = 0; m < g.data.cols(); ++m) g.data(l, m) = r.f64();
  return g;
}

inline void save_trajectory(const std::filesystem::path& path, const TrajectoryGrid& g) {
  auto os = detail::open_out(path, std::ios::binary);
  write_trajectory(os, g);
  detail::finish(os, path);
}

inline TrajectoryGrid load_trajectory(const std::filesystem::path& path) {
  auto is = detail::open_in(path);
  return read_trajectory(is, path.string());
}

// ---------------------------------------------------------------------------
// Readout weights

inline void write_weights(std::ostream& os, const ReadoutWeights& rw) {
  detail::Writer w(os);
  w.magic("NGRW");
  w.u32(kWeightsVersion);
  w.u8(rw.mode == ReadoutMode::Shared ? 1 : 0);
  w.u64(rw.L);
  w.u64(static_cast<std::uint64_t>(rw.W.cols()));
  w.u64(rw.cfg.k);
  w.u64(rw.cfg.n_nn);
  w.f64(rw.cfg.c);
  w.f64(rw.alpha);
  w.f64(rw.norm.mean);
  w.f64(rw.norm.std);
  for (Eigen::Index i = 0; i < rw.W.rows(); ++i)
    for (Eigen::Index j = 0; j < rw.W.cols(); ++j) w.f64(rw.W(i, j));
}

inline ReadoutWeights read_weights(std::istream& is, const std::string& what = "weights") {
  detail::Reader r(is, what);
  r.magic("NGRW");
  const auto version = r.u32();
  require(version == kWeightsVersion, ErrorKind::Format, what + ": unsupported weights version " + std::to_string(version));
  ReadoutWeights rw;
  const auto mode = r.u8();
  require(mode <= 1, ErrorKind::Format, what + ": bad mode tag");
  rw.mode = mode == 1 ? ReadoutMode::Shared : ReadoutMode::PerLocation;
  rw.L = r.u64();
  const auto d_total = r.u64();
  rw.cfg.k = r.u64();
  rw.cfg.n_nn = r.u64();
  rw.cfg.c = r.f64();
  rw.alpha = r.f64();
  rw.norm.mean = r.f64();
  rw.norm.std = r.f64();
  require(rw.L < (1u << 24) && rw.cfg.k < 4096 && rw.cfg.n_nn < 4096, ErrorKind::Format,
          what + ": implausible header");
  require(rw.cfg.dims().d_total == d_total, ErrorKind::Format,
          what + ": d_total " + std::to_string(d_total) + " inconsistent with k and n_nn");
  const auto rows = static_cast<Eigen::Index>(rw.mode == ReadoutMode::Shared ? 1 : rw.L);
  r.expect_payload(static_cast<std::uint64_t>(rows) * d_total, 8);
  rw.W.resize(rows, static_cast<Eigen::Index>(d_total));
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < rw.W.cols(); ++j) rw.W(i, j) = r.f64();
  return rw;
}

inline void save_weights(const std::filesystem::path& path, const ReadoutWeights& rw) {
  auto os = detail::open_out(path, std::ios::binary);
  write_weights(os, rw);
  detail::finish(os, path);
}

inline ReadoutWeights load_weights(const std::filesystem::path& path) {
  auto is = detail::open_in(path);
  return read_weights(is, path.string());
}

// ---------------------------------------------------------------------------
// CSV

// Header t,x_1,...,x_L; one row per sample, time t0 + m*dt.
inline void write_field_csv(std::ostream& os, const Eigen::MatrixXd& data, double t0, double dt) {
  os << 't';
  for (Eigen::Index l = 0; l < data.rows(); ++l) os << ",x_" << (l + 1);
  os << '\n';
  for (Eigen::Index m = 0; m < data.cols(); ++m) {
    os << detail::fmt(t0 + static_cast<double>(m) * dt);
    for (Eigen::Index l = 0; l < data.rows(); ++l) os << ',' << detail::fmt(data(l, m));
    os << '\n';
  }
}

inline void save_field_csv(const std::filesystem::path& path, const Eigen::MatrixXd& data, double t0, double dt) {
  auto os = detail::open_out(path);
  write_field_csv(os, data, t0, dt);
  detail::finish(os, path);
}

inline void write_weights_csv(std::ostream& os, const ReadoutWeights& rw) {
  os << "row";
  for (Eigen::Index j = 0; j < rw.W.cols(); ++j) os << ",w_" << j;
  os << '\n';
  for (Eigen::Index i = 0; i < rw.W.rows(); ++i) {
    os << i;
    for (Eigen::Index j = 0; j < rw.W.cols(); ++j) os << ',' << detail::fmt(rw.W(i, j));
    os << '\n';
  }
}

inline void write_nrmse_csv(std::ostream& os, const NrmseSeries& s, double t0 = 0.0) {
  os << "t,nrmse\n";
  for (std::size_t i = 0; i < s.values.size(); ++i)
    os << detail::fmt(t0 + static_cast<double>(i) * s.dt_save) << ',' << detail::fmt(s.values[i]) << '\n';
}

// Truth, prediction, difference (truth - prediction) and NRMSE files under dir.
inline void save_forecast_csvs(const std::filesystem::path& dir, const ForecastResult& r) {
  const NrmseSeries s = r.truth.cols() ? nrmse(r.truth, r.predicted, r.dt_save) : NrmseSeries{{}, r.dt_save};
  save_field_csv(dir / "truth.csv", r.truth, 0.0, r.dt_save);
  save_field_csv(dir / "predicted.csv", r.predicted, 0.0, r.dt_save);
  const Eigen::MatrixXd diff = r.truth - r.predicted;
  save_field_csv(dir / "difference.csv", diff, 0.0, r.dt_save);
  auto os = detail::open_out(dir / "nrmse.csv");
  write_nrmse_csv(os, s);
  detail::finish(os, dir / "nrmse.csv");
}

// axis,mean,std_of_mean,n; failed cells carry nan statistics and n = 0.
inline void write_sweep_csv(std::ostream& os, const SweepResult& r) {
  os << "axis,mean,std_of_mean,n\n";
  for (const auto& p : r.points) {
    os << detail::fmt(p.axis) << ',';
    if (p.failed)
      os << "nan,nan,0\n";
    else
      os << detail::fmt(p.summary.mean) << ',' << detail::fmt(p.summary.std_of_mean) << ',' << p.samples.size()
         << '\n';
  }
}

// One row per trial; set is "in_sample" or "heldout".
inline void write_sweep_samples_csv(std::ostream& os, const SweepResult& r, const ProtocolConfig& protocol) {
  const std::size_t n_ic = protocol.n_initial_conditions;
  const std::size_t n_held = protocol.n_heldout_conditions;
  os << "axis,alpha,set,train_seed,ic_seed,horizon\n";
  for (const auto& p : r.points) {
    for (std::size_t i = 0; i < p.samples.size(); ++i)
      os << detail::fmt(p.axis) << ',' << detail::fmt(p.alpha) << ",in_sample," << i / n_ic << ',' << i % n_ic << ','
         << detail::fmt(p.samples[i]) << '\n';
    for (std::size_t i = 0; n_held && i < p.heldout_samples.size(); ++i)
      os << detail::fmt(p.axis) << ',' << detail::fmt(p.alpha) << ",heldout," << i / n_held << ','
         << n_ic + i % n_held << ',' << detail::fmt(p.heldout_samples[i]) << '\n';
  }
}

inline void write_complexity_csv(std::ostream& os, const std::vector<ComplexityRow>& rows) {
  os << "label,ml_model,M,d_total,N_in,N_out,parallel_units,cost,speedup\n";
  for (const auto& r : rows) {
    const auto& e = r.entry;
    os << e.label << ',' << e.model << ',' << detail::fmt(e.m_points);
    if (e.m_concat != 1.0) os << 'x' << detail::fmt(e.m_concat);
    os << ',' << detail::fmt(e.d_total) << ',' << e.n_in << ',' << e.n_out << ',' << e.units << ','
       << detail::fmt(r.cost) << ',' << detail::fmt(r.speedup) << '\n';
  }
}

}  // namespace ngrc::io
