#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ngrc {

enum class ErrorKind {
  InvalidInput,
  InvalidWindow,
  NumericalBlowup,
  DegenerateData,
  RankDeficient,
  DegenerateWeights,
  Incompatible,
  Format,
  Io,
  Config,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid input";
    case ErrorKind::InvalidWindow: return "invalid window";
    case ErrorKind::NumericalBlowup: return "numerical blow-up";
    case ErrorKind::DegenerateData: return "degenerate data";
    case ErrorKind::RankDeficient: return "rank deficient";
    case ErrorKind::DegenerateWeights: return "degenerate weights";
    case ErrorKind::Incompatible: return "incompatible";
    case ErrorKind::Format: return "format error";
    case ErrorKind::Io: return "io error";
    case ErrorKind::Config: return "config error";
  }
  return "error";
}

// Process exit status for a failure of this kind: 2 configuration or usage,
// 3 numerical, 4 file or format.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NumericalBlowup:
    case ErrorKind::DegenerateData:
    case ErrorKind::RankDeficient:
    case ErrorKind::DegenerateWeights: return 3;
    case ErrorKind::Format:
    case ErrorKind::Io: return 4;
    default: return 2;
  }
}

// Single exception type for the library; callers dispatch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Raised by the integrator; carries where it happened.
class BlowupError : public Error {
 public:
  BlowupError(long long step, double time, const std::string& what)
      : Error(ErrorKind::NumericalBlowup,
              what + " (step " + std::to_string(step) + ", t=" + std::to_string(time) + ")"),
        step_(step),
        time_(time) {}

  long long step() const noexcept { return step_; }
  double time() const noexcept { return time_; }

 private:
  long long step_;
  double time_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace ngrc
