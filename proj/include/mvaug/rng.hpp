#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace mvaug {

/// Counter-based random stream (Philox4x32-10 keyed by a 64-bit seed).
///
/// A stream is a pure function of (key, counter), so child streams derived
/// with split() never overlap with the parent and results do not depend on
/// the order in which independent streams are consumed.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0) noexcept;

  /// Child stream for `index`; deterministic in (this stream's key, index).
  [[nodiscard]] RngStream split(std::uint64_t index) const noexcept;

  std::uint64_t next_u64() noexcept;
  /// Uniform on the open interval (0, 1).
  double uniform() noexcept;
  /// Standard normal via Box-Muller.
  double normal() noexcept;
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept;
  /// Index drawn from a discrete distribution (weights need not be normalized).
  std::size_t categorical(std::span<const double> weights) noexcept;

  [[nodiscard]] std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint32_t next_u32() noexcept;

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int used_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Philox4x32-10 block function, exposed for known-answer testing.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key) noexcept;

}  // namespace mvaug
