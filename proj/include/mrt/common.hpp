#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mrt {

/// Base class for all toolkit errors. Subclasses name the failure mode so
/// callers (and the CLI exit-code mapping) can tell validation problems from
/// runtime ones.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeMismatch : Error {
  using Error::Error;
};
struct DegenerateRotation : Error {
  using Error::Error;
};
struct NotARotation : Error {
  using Error::Error;
};
struct NonWatertightBody : Error {
  using Error::Error;
};
struct UnknownJoint : Error {
  using Error::Error;
};
struct SchemaViolation : Error {
  using Error::Error;
};
struct IOError : Error {
  using Error::Error;
};
struct DegenerateCamera : Error {
  using Error::Error;
};
struct ServiceUnavailable : Error {
  using Error::Error;
};
struct ServiceProtocolError : Error {
  using Error::Error;
};
struct EmbeddingWidthMismatch : Error {
  using Error::Error;
};
struct DataEmpty : Error {
  using Error::Error;
};
struct DivergenceDetected : Error {
  using Error::Error;
};
struct PairMismatch : Error {
  using Error::Error;
};
struct BackendNotDifferentiable : Error {
  using Error::Error;
};
struct InsufficientSamples : Error {
  using Error::Error;
};

/// Deterministic RNG. Wraps a fixed-algorithm engine and hand-rolled
/// uniform/normal draws so the sample stream is stable across standard
/// library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}

  std::uint64_t next_u64() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Integer in [0, n).
  std::uint64_t index(std::uint64_t n) { return n ? next_u64() % n : 0; }

  /// Standard normal via Box-Muller (no cached state).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  std::uint64_t state_;
};

}  // namespace mrt
