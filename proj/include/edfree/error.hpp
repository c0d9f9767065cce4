#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace edfree {

enum class ErrorCode {
  InvalidInput,
  InvalidState,
  InvalidSpec,
  DegenerateInput,
  DegenerateWeights,
  DegenerateConic,
  DegeneratePose,
  DegenerateGeometry,
  DegenerateScene,
  DegenerateEigengap,
  NoConsensus,
  NotConverged,
  AbortNonFinite,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool cond, ErrorCode code, const char* what) {
  if (!cond) throw Error(code, what);
}

}  // namespace edfree
