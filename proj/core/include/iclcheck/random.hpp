#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

namespace iclcheck {

/// Counter-based random stream (Philox4x32-10).
///
/// A stream is fully determined by its 64-bit key; the n-th output depends
/// only on (key, n), so streams can be created in any order on any thread.
/// Satisfies UniformRandomBitGenerator.
class Stream {
 public:
  using result_type = std::uint64_t;

  explicit Stream(std::uint64_t key) noexcept : key_(key) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }
  result_type operator()() noexcept { return next_u64(); }

  std::uint64_t next_u64() noexcept;

  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform01() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) noexcept {
    return lo + (hi - lo) * uniform01();
  }
  double normal() { return normal_(*this); }

  std::uint64_t key() const noexcept { return key_; }

 private:
  void refill() noexcept;

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int consumed_ = 4;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Hierarchical seed: a master seed plus a path of integer labels
/// (experiment -> task -> replicate -> step). Distinct paths give
/// independent streams; equal paths give identical streams.
class SeedSpec {
 public:
  explicit SeedSpec(std::uint64_t master) : master_(master) {}

  SeedSpec child(std::uint64_t label) const;
  Stream stream() const { return Stream(key()); }
  std::uint64_t key() const noexcept;

  std::uint64_t master() const noexcept { return master_; }
  const std::vector<std::uint64_t>& path() const noexcept { return path_; }

  friend bool operator==(const SeedSpec&, const SeedSpec&) = default;

 private:
  std::uint64_t master_;
  std::vector<std::uint64_t> path_;
};

/// SplitMix64 finalizer; a bijective 64-bit mixer.
std::uint64_t mix64(std::uint64_t x) noexcept;

}  // namespace iclcheck
