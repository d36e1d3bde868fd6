#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <limits>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "ngrc/config.hpp"
#include "ngrc/io.hpp"
#include "ngrc/metadata.hpp"
#include "oracles.hpp"

using namespace ngrc;
namespace fs = std::filesystem;

namespace {

bool bit_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

TrajectoryGrid awkward_grid() {
  std::mt19937_64 rng(1);
  TrajectoryGrid g;
  g.data = oracle::random_matrix(5, 17, rng, 1e3);
  g.data(0, 0) = -0.0;
  g.data(1, 1) = std::numeric_limits<double>::denorm_min();
  g.data(2, 2) = std::numeric_limits<double>::max();
  g.data(3, 3) = 1.0 / 3.0;
  g.dt_save = 0.01;
  g.t0 = 10.000000000000002;
  g.norm = {0.1 + 0.2, std::sqrt(2.0)};
  g.normalized = true;
  return g;
}

ReadoutWeights some_weights(ReadoutMode mode) {
  std::mt19937_64 rng(2);
  ReadoutWeights w;
  w.mode = mode;
  w.L = 6;
  w.cfg = {2, 1, 0.75};
  w.W = oracle::random_matrix(mode == ReadoutMode::Shared ? 1 : 6, 28, rng);
  w.norm = {3.25, 4.5};
  w.alpha = 1e-2;
  return w;
}

std::string bytes_of(const TrajectoryGrid& g) {
  std::ostringstream os;
  io::write_trajectory(os, g);
  return os.str();
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error";
  return ErrorKind::InvalidInput;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "ngrc_test_io";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

// --- binary formats ---------------------------------------------------------

TEST(TrajectoryFile, RoundTripIsBitExact) {
  const TrajectoryGrid g = awkward_grid();
  const fs::path p = scratch("t.l96t");
  io::save_trajectory(p, g);
  const TrajectoryGrid back = io::load_trajectory(p);
  EXPECT_TRUE(bit_equal(g.data, back.data));
  EXPECT_EQ(std::bit_cast<std::uint64_t>(g.t0), std::bit_cast<std::uint64_t>(back.t0));
  EXPECT_EQ(g.dt_save, back.dt_save);
  EXPECT_EQ(g.norm, back.norm);
  EXPECT_EQ(g.normalized, back.normalized);
  EXPECT_EQ(fs::file_size(p), 4 + 4 + 8 + 8 + 4 * 8 + 1 + 5 * 17 * 8u);
}

TEST(TrajectoryFile, LittleEndianLocationMajorLayout) {
  TrajectoryGrid g;
  g.data.resize(2, 3);
  g.data << 1, 2, 3, 4, 5, 6;
  const std::string b = bytes_of(g);
  EXPECT_EQ(b.substr(0, 4), "L96T");
  EXPECT_EQ(b[4], 1);
  EXPECT_EQ(b[5], 0);
  EXPECT_EQ(b[8], 2);   // L
  EXPECT_EQ(b[16], 3);  // M
  const std::size_t data_at = 4 + 4 + 16 + 32 + 1;
  auto value_at = [&](std::size_t i) {
    std::uint64_t v = 0;
    for (int k = 7; k >= 0; --k) v = (v << 8) | static_cast<unsigned char>(b[data_at + 8 * i + static_cast<std::size_t>(k)]);
    return std::bit_cast<double>(v);
  };
  EXPECT_EQ(value_at(0), 1.0);
  EXPECT_EQ(value_at(1), 2.0);
  EXPECT_EQ(value_at(3), 4.0);
}

TEST(TrajectoryFile, EmptyGridRoundTrips) {
  TrajectoryGrid g;
  g.data.resize(40, 0);
  std::istringstream is(bytes_of(g));
  const TrajectoryGrid back = io::read_trajectory(is);
  EXPECT_EQ(back.locations(), 40u);
  EXPECT_EQ(back.samples(), 0u);
}

TEST(TrajectoryFile, RejectsCorruption) {
  std::string b = bytes_of(awkward_grid());
  std::string bad = b;
  bad[0] = 'X';
  EXPECT_EQ(kind_of([&] {
              std::istringstream is(bad);
              io::read_trajectory(is);
            }),
            ErrorKind::Format);
  EXPECT_EQ(kind_of([&] {
              std::istringstream is(b.substr(0, b.size() - 3));
              io::read_trajectory(is);
            }),
            ErrorKind::Format);
  std::string ver = b;
  ver[4] = 9;
  EXPECT_EQ(kind_of([&] {
              std::istringstream is(ver);
              io::read_trajectory(is);
            }),
            ErrorKind::Format);
  // Header claiming far more samples than the file holds.
  std::string big = b;
  big[16 + 4] = 0x7f;
  EXPECT_EQ(kind_of([&] {
              std::istringstream is(big);
              io::read_trajectory(is);
            }),
            ErrorKind::Format);
  EXPECT_EQ(kind_of([] { io::load_trajectory(scratch("does-not-exist.l96t")); }), ErrorKind::Io);
}

TEST(WeightsFile, RoundTripIsBitExact) {
  for (auto mode : {ReadoutMode::PerLocation, ReadoutMode::Shared}) {
    const ReadoutWeights w = some_weights(mode);
    const fs::path p = scratch("w.ngrw");
    io::save_weights(p, w);
    const ReadoutWeights back = io::load_weights(p);
    EXPECT_EQ(back.mode, mode);
    EXPECT_EQ(back.L, 6u);
    EXPECT_EQ(back.cfg, w.cfg);
    EXPECT_EQ(back.norm, w.norm);
    EXPECT_EQ(back.alpha, w.alpha);
    EXPECT_TRUE(bit_equal(back.W, w.W));
  }
}

TEST(WeightsFile, RejectsCorruption) {
  std::ostringstream os;
  io::write_weights(os, some_weights(ReadoutMode::PerLocation));
  const std::string b = os.str();
  std::string bad = b;
  bad.replace(0, 4, "L96T");
  EXPECT_EQ(kind_of([&] {
              std::istringstream is(bad);
              io::read_weights(is);
            }),
            ErrorKind::Format);
  std::string dims = b;
  dims[4 + 4 + 1 + 8] = 29;  // d_total no longer matches k, n_nn
  EXPECT_EQ(kind_of([&] {
              std::istringstream is(dims);
              io::read_weights(is);
            }),
            ErrorKind::Format);
  EXPECT_EQ(kind_of([&] {
              std::istringstream is(b.substr(0, 60));
              io::read_weights(is);
            }),
            ErrorKind::Format);
}

// --- CSV --------------------------------------------------------------------

TEST(Csv, FieldHeaderAndRows) {
  Eigen::MatrixXd d(2, 2);
  d << 1, 2, 3, 4;
  std::ostringstream os;
  io::write_field_csv(os, d, 10.0, 0.5);
  EXPECT_EQ(os.str(), "t,x_1,x_2\n10,1,3\n10.5,2,4\n");
}

TEST(Csv, NrmseHeader) {
  std::ostringstream os;
  io::write_nrmse_csv(os, {{0.25}, 0.01});
  EXPECT_EQ(os.str(), "t,nrmse\n0,0.25\n");
}

TEST(Csv, SweepSchemas) {
  SweepResult r;
  r.axis_name = "alpha";
  SweepPoint ok;
  ok.axis = ok.alpha = 0.5;
  ok.samples = {1.0, 3.0};
  ok.summary = summarize(ok.samples);
  SweepPoint bad;
  bad.axis = 2.0;
  bad.failed = true;
  r.points = {ok, bad};
  std::ostringstream os;
  io::write_sweep_csv(os, r);
  EXPECT_EQ(os.str(), "axis,mean,std_of_mean,n\n0.5,2,1,2\n2,nan,nan,0\n");

  ProtocolConfig pc;
  pc.n_train_sets = 1;
  pc.n_initial_conditions = 2;
  std::ostringstream ss;
  io::write_sweep_samples_csv(ss, r, pc);
  EXPECT_EQ(ss.str(), "axis,alpha,set,train_seed,ic_seed,horizon\n0.5,0.5,in_sample,0,0,1\n0.5,0.5,in_sample,0,1,3\n");
}

TEST(Csv, ComplexitySchema) {
  std::ostringstream os;
  io::write_complexity_csv(os, complexity_report(complexity_table_small(), kOursShared));
  std::istringstream is(os.str());
  std::string header, first, second;
  std::getline(is, header);
  std::getline(is, first);
  std::getline(is, second);
  EXPECT_EQ(header, "label,ml_model,M,d_total,N_in,N_out,parallel_units,cost,speedup");
  EXPECT_EQ(first, "ours-shared,NG-RC,400x8,136,5,1,1,59187200,1");
  EXPECT_EQ(second, "ours-independent,NG-RC,4000,136,5,1,8,591872000,10");
}

TEST(Csv, EmptyForecastWritesHeadersOnly) {
  ForecastResult r;
  r.predicted.resize(3, 0);
  r.truth.resize(3, 0);
  const fs::path dir = scratch("empty_forecast");
  io::save_forecast_csvs(dir, r);
  for (const char* f : {"truth.csv", "predicted.csv", "difference.csv"}) {
    std::ifstream is(dir / f);
    std::string all((std::istreambuf_iterator<char>(is)), {});
    EXPECT_EQ(all, "t,x_1,x_2,x_3\n") << f;
  }
  std::ifstream is(dir / "nrmse.csv");
  std::string all((std::istreambuf_iterator<char>(is)), {});
  EXPECT_EQ(all, "t,nrmse\n");
}

// --- config and metadata ------------------------------------------------------

TEST(Config, OverridesOnTopOfPreset) {
  std::istringstream is(
      "[experiment]\npreset = flat\nmode = shared\nalpha = 0.001\nt_train = 2.5\n"
      "[model]\nF = 10\nboundary = sector\n[protocol]\nn_heldout_conditions = 3\n[run]\nworkers = 2\nout = x\n");
  const RunConfig c = apply_config(is, RunConfig{});
  EXPECT_EQ(c.preset.name, "flat");
  EXPECT_EQ(c.preset.model.L, 40u);
  EXPECT_EQ(c.preset.model.F, 10.0);
  EXPECT_EQ(c.preset.model.boundary, FineBoundary::PerSector);
  EXPECT_EQ(c.mode, ReadoutMode::Shared);
  EXPECT_EQ(c.ridge.alpha, 0.001);
  EXPECT_EQ(c.t_train, 2.5);
  EXPECT_EQ(c.protocol.n_heldout_conditions, 3u);
  EXPECT_EQ(c.protocol.workers, 2u);
  EXPECT_EQ(c.out, "x");
}

TEST(Config, RejectsUnknownOrBadEntries) {
  for (const char* text : {"[experiment]\nalhpa = 1\n", "[nonsense]\nk = 1\n", "[experiment]\nalpha = fast\n",
                           "[experiment]\nmode = both\n", "[model]\nboundary = open\n", "[features]\nk = -1\n",
                           "[experiment]\npreset = giant\n", "stray = 1\n"}) {
    std::istringstream is(text);
    EXPECT_EQ(kind_of([&] { apply_config(is, RunConfig{}); }), ErrorKind::Config) << text;
  }
  std::istringstream small_l("[model]\nL = 3\n");
  EXPECT_THROW(apply_config(small_l, RunConfig{}), Error);
  EXPECT_EQ(kind_of([] { load_config(scratch("missing.ini")); }), ErrorKind::Io);
}

TEST(Metadata, DescribesRecording) {
  ExperimentPreset p = preset_flat();
  TrajectoryGrid g;
  g.data.resize(40, 7);
  g.t0 = 10.0;
  const auto j = io::trajectory_metadata(p, g);
  EXPECT_EQ(j["format"], "L96T");
  EXPECT_EQ(j["format_version"], 1);
  EXPECT_EQ(j["preset"], "flat");
  EXPECT_EQ(j["model"]["L"], 40);
  EXPECT_EQ(j["model"]["boundary"], "chained");
  EXPECT_EQ(j["integrator"]["h_internal"], 0.001);
  EXPECT_EQ(j["grid"]["samples"], 7);
  EXPECT_DOUBLE_EQ(j["lyapunov_time"].get<double>(), 1.0 / 1.68);
  EXPECT_FALSE(io::trajectory_metadata(preset_main(), g).contains("lyapunov_time"));
}

TEST(Metadata, DescribesWeights) {
  ReadoutWeights w;
  w.mode = ReadoutMode::Shared;
  w.L = 36;
  w.W = Eigen::MatrixXd::Zero(1, 136);
  w.alpha = 0.5;
  w.norm = {1.5, 2.0};
  const auto j = io::weights_metadata(w, {100, 1103}, 10.0, "run/trajectory.l96t");
  EXPECT_EQ(j["format"], "NGRW");
  EXPECT_EQ(j["mode"], "shared");
  EXPECT_EQ(j["features"]["d_total"], 136);
  EXPECT_EQ(j["ridge"]["alpha"], 0.5);
  EXPECT_EQ(j["normalization"]["std"], 2.0);
  EXPECT_EQ(j["training"]["points_per_location"], 1000);
  EXPECT_EQ(j["training"]["trajectory"], "run/trajectory.l96t");
  EXPECT_EQ(j["shape"]["rows"], 1);
}

TEST(Errors, ExitCodes) {
  EXPECT_EQ(exit_code(ErrorKind::Config), 2);
  EXPECT_EQ(exit_code(ErrorKind::InvalidInput), 2);
  EXPECT_EQ(exit_code(ErrorKind::Incompatible), 2);
  EXPECT_EQ(exit_code(ErrorKind::NumericalBlowup), 3);
  EXPECT_EQ(exit_code(ErrorKind::RankDeficient), 3);
  EXPECT_EQ(exit_code(ErrorKind::Format), 4);
  EXPECT_EQ(exit_code(ErrorKind::Io), 4);
}

TEST(Workers, EnvironmentDefault) {
  ::setenv("NGRC_WORKERS", "3", 1);
  EXPECT_EQ(default_workers(), 3u);
  ::setenv("NGRC_WORKERS", "zero", 1);
  EXPECT_GE(default_workers(), 1u);
  ::unsetenv("NGRC_WORKERS");
}

TEST(Workers, LowestFailingIndexWins) {
  try {
    parallel_for(20, 4, [](std::size_t i) {
      if (i == 7 || i == 13) fail(ErrorKind::InvalidInput, std::to_string(i));
    });
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("7"), std::string::npos);
  }
}
