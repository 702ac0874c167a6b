#pragma once

#include <cstdint>
#include <string>
#include <string_view>

// FNV-1a 64-bit hashing over canonical text encodings, and the canonical
// double formatting used for every textual number the toolkit emits.

namespace gac {

/// Shortest-round-trip style formatting: %.17g. Round-trips to the same
/// double and is identical across runs and platforms with IEEE doubles.
std::string fmt_g17(double v);

struct Fnv1a {
  std::uint64_t state = 1469598103934665603ull;

  void absorb_bytes(const void* p, std::size_t n);
  void absorb(std::string_view s);
  void absorb_u64(std::uint64_t v); // little-endian bytes
  void absorb_i64(std::int64_t v);
  void absorb_f64(double v); // canonical %.17g text, then a separator

  std::uint64_t value() const { return state; }
};

} // namespace gac
