#pragma once

#include <array>
#include <cstdint>

// Counter-based random number generation.
//
// Every random quantity in the toolkit is a pure function of
// (seed, stream, sample index, block index, lane). There is no mutable
// generator state shared between samples, so samples can be produced in any
// order, on any number of threads, with bit-identical results.
//
// The generator is Philox4x32-10. A 64-bit key is derived from (seed, stream)
// by a splitmix64-style mix; the 128-bit counter is
// (sample_lo, sample_hi, block, 0). Each block yields four 32-bit words,
// i.e. two 64-bit lanes. Uniform doubles take the top 53 bits of a lane;
// Gaussian pairs come from one block via Box-Muller. These choices are part
// of the output contract: changing any of them changes every simulated
// dataset, so they are fixed here and covered by known-answer tests.

namespace gac::rng {

/// One Philox output block: four 32-bit words.
using Block = std::array<std::uint32_t, 4>;

/// Philox4x32-10 keyed permutation of a 128-bit counter.
Block philox4x32(const Block& counter, std::array<std::uint32_t, 2> key);

/// splitmix64 finalizer (bijective 64-bit mix).
std::uint64_t mix64(std::uint64_t z) noexcept;

/// Key for a (seed, stream) pair. Distinct streams give statistically
/// independent sequences for the same seed.
std::uint64_t derive_key(std::uint64_t seed, std::uint64_t stream) noexcept;

/// Raw block for (key, sample, block_index).
Block sample_block(std::uint64_t key, std::uint64_t sample, std::uint32_t block_index);

/// 64-bit lane (0 or 1) of a block.
std::uint64_t lane64(const Block& b, int lane) noexcept;

/// Map a 64-bit word to a double in [0, 1) using the top 53 bits.
double to_unit_double(std::uint64_t bits) noexcept;

/// Uniform double in [0, 1) for (key, sample, block_index, lane).
double uniform(std::uint64_t key, std::uint64_t sample, std::uint32_t block_index, int lane);

struct GaussPair {
  double z0;
  double z1;
};

/// Pair of independent standard normals from one block (Box-Muller).
GaussPair gauss_pair(std::uint64_t key, std::uint64_t sample, std::uint32_t block_index);

/// Sequential convenience view over one sample's blocks. Used where a
/// variable number of draws is needed (optimizer restarts, initializers);
/// the underlying draws stay pure functions of (key, sample, block).
class SampleStream {
public:
  SampleStream(std::uint64_t key, std::uint64_t sample) noexcept
      : key_(key), sample_(sample) {}

  double next_uniform();
  double next_gauss();

private:
  std::uint64_t key_;
  std::uint64_t sample_;
  std::uint32_t block_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
  bool have_spare_u_ = false;
  std::uint64_t spare_u_ = 0;
};

} // namespace gac::rng
