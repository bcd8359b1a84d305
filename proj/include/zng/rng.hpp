#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace zng {

// Deterministic RNG wrapper. std::mt19937_64 output is pinned by the
// standard; the distribution helpers below are hand-rolled because the
// std distributions are implementation-defined and would break
// cross-platform reproducibility.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next() { return gen_(); }

  // Uniform in [0, bound) via rejection sampling.
  std::uint64_t below(std::uint64_t bound) {
    if (bound <= 1) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % bound;
  }

  // True with probability p.
  bool chance(double p) {
    if (p <= 0.0) return false;
    if (p >= 1.0) return true;
    const double u =
        static_cast<double>(gen_() >> 11) * (1.0 / 9007199254740992.0);
    return u < p;
  }

  double uniform01() {
    return static_cast<double>(gen_() >> 11) * (1.0 / 9007199254740992.0);
  }

 private:
  std::mt19937_64 gen_;
};

// Zipf(s) over ranks [0, n). Inverse-CDF with binary search; the CDF is
// precomputed once so sampling is O(log n).
class ZipfSampler {
 public:
  ZipfSampler(std::uint64_t n, double s) : cdf_(n) {
    double acc = 0.0;
    for (std::uint64_t i = 0; i < n; ++i) {
      acc += 1.0 / std::pow(static_cast<double>(i + 1), s);
      cdf_[i] = acc;
    }
    for (auto& v : cdf_) v /= acc;
  }

  std::uint64_t sample(Rng& rng) const {
    const double u = rng.uniform01();
    std::size_t lo = 0, hi = cdf_.size() - 1;
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (cdf_[mid] < u)
        lo = mid + 1;
      else
        hi = mid;
    }
    return lo;
  }

 private:
  std::vector<double> cdf_;
};

}  // namespace zng
