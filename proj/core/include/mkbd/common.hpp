#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mkbd {

/// Identity ids are dense integers; the Master Face owner gets a reserved id
/// that no generated or imported benign store may use.
using IdentityId = std::uint64_t;
inline constexpr IdentityId kMasterFaceIdentity = 0xFFFF'FFFF'FFFF'FFFFULL;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SplitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PlanningError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed binary file. Carries the byte offset where decoding failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

using Rng = std::mt19937_64;

/// Independent, reproducible generator for (seed, stream, index). Distinct
/// streams keep e.g. poisoning draws from perturbing batch construction.
Rng make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0);

namespace streams {
inline constexpr std::uint64_t kUniverse = 1;
inline constexpr std::uint64_t kMasterFace = 2;
inline constexpr std::uint64_t kSplit = 3;
inline constexpr std::uint64_t kPlan = 4;
inline constexpr std::uint64_t kBuild = 5;
inline constexpr std::uint64_t kPoison = 6;
inline constexpr std::uint64_t kInit = 7;
inline constexpr std::uint64_t kBenchmark = 8;
}  // namespace streams

using WarningSink = std::function<void(std::string_view)>;

/// Replaces the warning sink (stderr by default). Returns the previous one.
WarningSink set_warning_sink(WarningSink sink);
void warn(std::string_view message);

/// Shortest decimal text that round-trips to the same double ("0.03", "0").
std::string format_number(double value);

}  // namespace mkbd
