#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace emot {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kPi = 3.14159265358979323846;

enum class ErrorCode {
  InvalidDimension,
  OverlappingSupports,
  InvalidInstance,
  BudgetExceeded,
  EmptyDensity,
  DimensionMismatch,
  InfeasibleSupport,
  NonConvergence,
  CoincidentAtoms,
  MonotoneInfeasible,
  NonConvergedInput,
  MarginalMismatch,
  SingularFit,
  UnbalancedMasses,
  InfiniteCostUnsupported,
  InvalidArgument,
  ParseError,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidDimension: return "InvalidDimension";
    case ErrorCode::OverlappingSupports: return "OverlappingSupports";
    case ErrorCode::InvalidInstance: return "InvalidInstance";
    case ErrorCode::BudgetExceeded: return "BudgetExceeded";
    case ErrorCode::EmptyDensity: return "EmptyDensity";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InfeasibleSupport: return "InfeasibleSupport";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::CoincidentAtoms: return "CoincidentAtoms";
    case ErrorCode::MonotoneInfeasible: return "MonotoneInfeasible";
    case ErrorCode::NonConvergedInput: return "NonConvergedInput";
    case ErrorCode::MarginalMismatch: return "MarginalMismatch";
    case ErrorCode::SingularFit: return "SingularFit";
    case ErrorCode::UnbalancedMasses: return "UnbalancedMasses";
    case ErrorCode::InfiniteCostUnsupported: return "InfiniteCostUnsupported";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& detail) {
  throw Error(code, detail);
}

// Pairwise summation with a fixed split so the result depends only on the
// input order, never on how the caller partitions work.
inline double pairwise_sum(std::span<const double> xs) {
  constexpr std::size_t kLeaf = 32;
  if (xs.size() <= kLeaf) {
    double acc = 0.0;
    for (double x : xs) acc += x;
    return acc;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

inline double pairwise_sum(const std::vector<double>& xs) {
  return pairwise_sum(std::span<const double>(xs));
}

// x log(x / ref) with 0 log 0 = 0; +inf when x > 0 and ref == 0.
inline double xlogx_rel(double x, double ref) {
  if (x <= 0.0) return 0.0;
  if (ref <= 0.0) return kInf;
  return x * std::log(x / ref);
}

// 17 significant digits, locale independent.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

// Stable combination of hashes (boost::hash_combine recipe, 64-bit).
inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) {
  return seed ^ (value + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2));
}

inline std::uint64_t hash_double(double x) {
  std::uint64_t bits = 0;
  static_assert(sizeof(bits) == sizeof(x));
  std::memcpy(&bits, &x, sizeof(x));
  return bits;
}

}  // namespace emot
