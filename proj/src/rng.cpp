#include "gac/rng.hpp"

#include <cmath>
#include <numbers>

namespace gac::rng {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void round_once(Block& ctr, std::array<std::uint32_t, 2>& key) {
  const std::uint64_t p0 = std::uint64_t(kMul0) * ctr[0];
  const std::uint64_t p1 = std::uint64_t(kMul1) * ctr[2];
  const std::uint32_t hi0 = std::uint32_t(p0 >> 32), lo0 = std::uint32_t(p0);
  const std::uint32_t hi1 = std::uint32_t(p1 >> 32), lo1 = std::uint32_t(p1);
  ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  key[0] += kWeyl0;
  key[1] += kWeyl1;
}

} // namespace

Block philox4x32(const Block& counter, std::array<std::uint32_t, 2> key) {
  Block ctr = counter;
  for (int r = 0; r < 10; ++r) round_once(ctr, key);
  return ctr;
}

std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t derive_key(std::uint64_t seed, std::uint64_t stream) noexcept {
  // splitmix64 state after `stream + 1` advances from `seed`, finalized.
  return mix64(seed + 0x9E3779B97F4A7C15ull * (stream + 1));
}

Block sample_block(std::uint64_t key, std::uint64_t sample, std::uint32_t block_index) {
  const Block ctr = {std::uint32_t(sample), std::uint32_t(sample >> 32), block_index, 0u};
  const std::array<std::uint32_t, 2> k = {std::uint32_t(key), std::uint32_t(key >> 32)};
  return philox4x32(ctr, k);
}

std::uint64_t lane64(const Block& b, int lane) noexcept {
  const int i = 2 * lane;
  return std::uint64_t(b[i]) | (std::uint64_t(b[i + 1]) << 32);
}

double to_unit_double(std::uint64_t bits) noexcept {
  return double(bits >> 11) * 0x1.0p-53;
}

double uniform(std::uint64_t key, std::uint64_t sample, std::uint32_t block_index, int lane) {
  return to_unit_double(lane64(sample_block(key, sample, block_index), lane));
}

GaussPair gauss_pair(std::uint64_t key, std::uint64_t sample, std::uint32_t block_index) {
  const Block b = sample_block(key, sample, block_index);
  const double u1 = to_unit_double(lane64(b, 0));
  const double u2 = to_unit_double(lane64(b, 1));
  // 1 - u1 lies in (0, 1], so the log is finite.
  const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
  const double t = 2.0 * std::numbers::pi * u2;
  return {r * std::cos(t), r * std::sin(t)};
}

double SampleStream::next_uniform() {
  if (have_spare_u_) {
    have_spare_u_ = false;
    return to_unit_double(spare_u_);
  }
  const Block b = sample_block(key_, sample_, block_++);
  spare_u_ = lane64(b, 1);
  have_spare_u_ = true;
  return to_unit_double(lane64(b, 0));
}

double SampleStream::next_gauss() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  const GaussPair g = gauss_pair(key_, sample_, block_++);
  spare_ = g.z1;
  have_spare_ = true;
  return g.z0;
}

} // namespace gac::rng
