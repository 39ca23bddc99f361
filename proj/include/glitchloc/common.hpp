#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace glitchloc {

/// Mixes two 64-bit values into a new stream seed (splitmix64-based).
/// Stable across platforms so that derived RNG streams are reproducible.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

/// FNV-1a hash of a string, for deriving per-record seeds from ids.
std::uint64_t hash_str(std::string_view s);

/// Number of worker threads: GLITCHLOC_THREADS if set, else hardware
/// concurrency, always at least 1.
int worker_threads();

/// Runs fn(i) for i in [0, n). Work is split over worker_threads() threads
/// in contiguous chunks; results must be written by index so that the
/// outcome does not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

// Deterministic draws that do not depend on the standard library's
// distribution implementations.
inline double rng_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}
inline double rng_range(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * rng_unit(rng);
}
/// Integer in [lo, hi], inclusive.
inline int rng_int(std::mt19937_64& rng, int lo, int hi) {
  return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}
template <class T>
void rng_shuffle(std::mt19937_64& rng, std::vector<T>& v) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = rng() % i;
    std::swap(v[i - 1], v[j]);
  }
}

// Little-endian binary encoding used by the clip and checkpoint formats.
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v);
void put_f64(std::vector<std::uint8_t>& out, double v);
std::uint32_t get_u32(const std::uint8_t* p);
double get_f64(const std::uint8_t* p);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace glitchloc
