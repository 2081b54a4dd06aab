#pragma once

#include <cmath>
#include <cstdint>

namespace ctgest {

// SplitMix64. The whole generator is the 64-bit
// state plus the two functions below, so any implementation that follows
// them reproduces a cohort bit for bit from (seed, index).
inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

inline constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Domain tags keep patient streams and replication seeds disjoint.
enum class StreamDomain : std::uint64_t {
  patient = 0x50415449454E5431ULL,      // "PATIENT1"
  replication = 0x5245504C49434131ULL,  // "REPLICA1"
};

// Counter-based split: the child seed depends only on (seed, index, domain).
inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index,
                                           StreamDomain domain) noexcept {
  return mix64(seed ^ mix64(static_cast<std::uint64_t>(domain) + index * kGolden));
}

class SplitMix64 {
 public:
  explicit constexpr SplitMix64(std::uint64_t state) noexcept : state_(state) {}

  constexpr std::uint64_t next() noexcept {
    state_ += kGolden;
    return mix64(state_);
  }

  // Uniform on the open interval (0, 1): top 53 bits, offset by half a step.
  double uniform() noexcept {
    return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
  }

  double exponential(double rate) noexcept { return -std::log(uniform()) / rate; }

  constexpr std::uint64_t state() const noexcept { return state_; }

 private:
  std::uint64_t state_;
};

}  // namespace ctgest
