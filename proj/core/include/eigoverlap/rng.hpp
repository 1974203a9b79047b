#pragma once

#include <cstdint>
#include <random>

namespace eigoverlap {

/// Independent purposes drawing from the same master seed.
enum class StreamPurpose : std::uint64_t {
  Spectrum = 0x5350454354ULL,
  Interaction = 0x494e544552ULL,
  Phase = 0x5048415345ULL,
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// A reproducible random stream identified by (seed, purpose, index).
///
/// The underlying engine is `std::mt19937_64`, whose output sequence is fixed
/// by the standard; normals come from Box-Muller on 53-bit uniforms so every
/// draw consumes a fixed number of engine outputs on every platform.
class RngStream {
 public:
  RngStream(std::uint64_t seed, StreamPurpose purpose, std::uint64_t index = 0);

  static RngStream for_realization(std::uint64_t master_seed, std::uint64_t index) {
    return RngStream(master_seed, StreamPurpose::Interaction, index);
  }

  /// Uniform on [0, 1).
  double uniform() noexcept;
  /// Standard normal.
  double normal() noexcept;

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace eigoverlap
