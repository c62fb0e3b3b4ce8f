#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace sbcert::util {

// Index-parallel map: results must be written by index so the outcome is
// independent of the worker count.
inline void parallel_for(long n, int workers, const std::function<void(long)>& fn) {
  if (workers <= 1 || n < 2) {
    for (long i = 0; i < n; ++i) fn(i);
    return;
  }
  workers = static_cast<int>(std::min<long>(workers, n));
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::atomic<long> next{0};
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (;;) {
        long i = next.fetch_add(1);
        if (i >= n) return;
        fn(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

// FNV-1a over bytes, for config fingerprints.
struct Fnv1a {
  std::uint64_t state = 1469598103934665603ULL;
  void feed(const void* data, size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
      state ^= p[i];
      state *= 1099511628211ULL;
    }
  }
  void feed(const std::string& s) { feed(s.data(), s.size()); }
  void feed(double v) { feed(&v, sizeof(v)); }
  void feed(long v) { feed(&v, sizeof(v)); }
  std::string hex() const {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 0; i < 16; ++i) out[15 - i] = digits[(state >> (4 * i)) & 0xf];
    return out;
  }
};

// Counter-based RNG: a splitmix64 hash of (seed, stream, counter) giving
// reproducible streams regardless of thread scheduling.
struct CounterRng {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t raw(std::uint64_t counter) const {
    return mix(mix(mix(seed) ^ stream) ^ counter);
  }

  // uniform in [0, 1)
  double uniform(std::uint64_t counter) const {
    return (raw(counter) >> 11) * 0x1.0p-53;
  }

  // standard normal via Box-Muller on two derived uniforms
  double normal(std::uint64_t counter) const {
    double u1 = uniform(2 * counter);
    double u2 = uniform(2 * counter + 1);
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }
};

}  // namespace sbcert::util
