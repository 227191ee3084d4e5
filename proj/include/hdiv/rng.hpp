#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>

namespace hdiv {

/// Serializable identity of a random stream.
struct RngState {
  std::string algorithm;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

/// Seeded generator with explicit stream splitting.
///
/// The engine is std::mt19937_64 initialised through std::seed_seq from the
/// four 32-bit halves of (seed, stream); both are fully specified by the C++
/// standard. All derived variates (uniforms, bounded integers, normals,
/// shuffles) are implemented here rather than through the implementation-
/// defined <random> distributions, so a given (seed, stream) produces the
/// same draws on every conforming toolchain.
///
/// An Rng is single-owner. Parallel work should take independent children via
/// split(), never share an instance.
class Rng {
 public:
  static constexpr const char* kAlgorithm = "mt19937_64+seed_seq/polar-normal";

  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  RngState state() const { return {kAlgorithm, seed_, stream_}; }

  /// Child stream keyed by `index`. Deterministic, and does not advance *this.
  Rng split(std::uint64_t index) const;

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();

  /// Uniform integer in [0, bound), unbiased. bound must be positive.
  std::uint64_t uniform_index(std::uint64_t bound);

  /// Standard normal via the Marsaglia polar method.
  double normal();

  /// Fisher-Yates shuffle.
  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto k = static_cast<std::size_t>(uniform_index(i));
      std::swap(items[i - 1], items[k]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

/// splitmix64 finaliser; used to derive child stream ids.
std::uint64_t mix64(std::uint64_t x);

}  // namespace hdiv
