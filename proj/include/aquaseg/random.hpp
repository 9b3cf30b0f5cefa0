#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>

namespace aquaseg {

std::uint64_t splitmix64(std::uint64_t& state) noexcept;

/// xoshiro256++ stream seeded through splitmix64. All derived samplers are
/// implemented here (no <random> distributions) so sequences are identical
/// across standard libraries and platforms.
class Prng {
 public:
  explicit Prng(std::uint64_t seed = 0) noexcept;

  /// Independent stream for a given purpose (`tag`) derived from one user seed.
  static Prng derive(std::uint64_t seed, std::uint64_t tag) noexcept;

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept;
  /// Unbiased integer in [0, bound). `bound` must be nonzero.
  std::uint64_t below(std::uint64_t bound) noexcept;
  /// Standard normal via Box-Muller (one value per call, spare cached).
  double normal() noexcept;

  template <typename It>
  void shuffle(It first, It last) noexcept {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const auto j = below(i);
      std::swap(first[i - 1], first[j]);
    }
  }

  const std::array<std::uint64_t, 4>& state() const noexcept { return s_; }

 private:
  std::array<std::uint64_t, 4> s_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Stream tags. Baseline and combined training share the tags of the network
// they train so both consume identical random sequences.
namespace stream {
inline constexpr std::uint64_t init_vhr_net = 1;
inline constexpr std::uint64_t init_hr_net = 2;
inline constexpr std::uint64_t batches_hr = 3;
inline constexpr std::uint64_t batches_vhr_labelled = 4;
inline constexpr std::uint64_t batches_vhr_unlabelled = 5;
inline constexpr std::uint64_t ablation_subset = 6;
inline constexpr std::uint64_t synth = 7;
}  // namespace stream

}  // namespace aquaseg
