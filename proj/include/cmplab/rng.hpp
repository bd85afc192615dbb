#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace cmplab {

namespace detail {

// SplitMix64 finalizer.
inline std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ULL;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return z;
}

}  // namespace detail

// Counter-based random stream: the i-th draw is a pure function of
// (seed, i), so a stream can be restored from (seed, counter) alone and
// two streams with the same state yield the same sequence.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t counter = 0)
      : seed_(seed), counter_(counter) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64() {
    ++counter_;
    return detail::mix64(seed_ + counter_ * 0x9e3779b97f4a7c15ULL);
  }

  // Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n).
  int next_int(int n) {
    int v = static_cast<int>(next_double() * n);
    return v < n ? v : n - 1;
  }

  bool bernoulli(double p) { return next_double() < p; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // Standard normal via Box-Muller; one value per call, two draws consumed.
  double normal() {
    double u1 = 1.0 - next_double();
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      int j = next_int(i + 1);
      std::swap(v[i], v[static_cast<size_t>(j)]);
    }
  }

  // Independent substream keyed by id. Streams with distinct ids do not
  // overlap for any realistic draw count.
  static RngStream derive(std::uint64_t seed, std::uint64_t stream_id) {
    return RngStream(detail::mix64(seed ^ detail::mix64(stream_id + 0x632be59bd9b4e019ULL)));
  }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

}  // namespace cmplab
