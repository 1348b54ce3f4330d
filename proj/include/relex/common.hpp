#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace relex {

// Raised for malformed inputs: files, config values, metric/test tokens.
// The CLI maps it to exit code 2.
struct parse_error : std::runtime_error {
  explicit parse_error(const std::string& what) : std::runtime_error(what) {}
};

// Raised when a computation degenerates (NaN loss, non-finite solver state).
// The CLI maps it to exit code 3.
struct numeric_error : std::runtime_error {
  explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t seed = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

// Counter-based seed stream: every random decision in a run draws its seed as
// derive_seed(master, stream_name, counter). Streams are independent by name,
// so adding a stream (e.g. a new analysis) does not shift any other stream.
inline std::uint64_t derive_seed(std::uint64_t master, const std::string& stream,
                                 std::uint64_t counter) {
  std::uint64_t h = fnv1a64(stream.data(), stream.size());
  return splitmix64(master ^ splitmix64(h) ^ splitmix64(counter * 0x9e3779b97f4a7c15ull + 1));
}

// Index-parallel loop. Results must be written to per-index slots so the
// outcome is independent of the thread count. threads == 0 picks hardware
// concurrency, threads == 1 runs inline.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body) {
  if (n == 0) return;
  unsigned want = threads > 0 ? static_cast<unsigned>(threads) : std::thread::hardware_concurrency();
  if (want == 0) want = 1;
  if (want > n) want = static_cast<unsigned>(n);
  if (want <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(want);
  for (unsigned t = 0; t < want; ++t) {
    pool.emplace_back([&, t]() {
      for (std::size_t i = t; i < n; i += want) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace relex
