#pragma once

#include <cstdint>
#include <random>

namespace fieldest {

/// Bumped whenever the bit stream produced for a given seed changes.
inline constexpr std::uint32_t kRngVersion = 1;

/// Named sub-streams of a trial seed. Values are part of the reproducibility
/// contract; never renumber.
enum class Stream : std::uint64_t {
  kDeploy = 1,
  kObserve = 2,
  kChannel = 3,
  kInit = 4,
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Child seed for `stream` of `seed`. Distinct streams give decorrelated
/// generators even for adjacent parent seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept;
inline std::uint64_t derive_seed(std::uint64_t seed, Stream stream) noexcept {
  return derive_seed(seed, static_cast<std::uint64_t>(stream));
}

/// mt19937-64 with portable uniform and Gaussian transforms. The standard
/// distributions are implementation-defined, so they are not used here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Standard normal via the Marsaglia polar method.
  double normal() noexcept;

  Rng split(std::uint64_t stream) const { return Rng(derive_seed(seed_, stream)); }
  Rng split(Stream stream) const { return Rng(derive_seed(seed_, stream)); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace fieldest
