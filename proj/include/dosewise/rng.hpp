#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

namespace dosewise {

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Named stream families. Each component draws from its own family so that
// changing how many numbers one component consumes never perturbs another.
enum class Stream : std::uint64_t {
  kPrior = 1,
  kProcess = 2,
  kMeasurement = 3,
  kPlantProcess = 4,
  kPlantMeasurement = 5,
  kScenario = 6,
  kResample = 7,
  kPatient = 8,
  kToy = 9,
};

// Counter-based generator: output i is mix64(key + i * golden). The key is a
// hash of (seed, stream, substream), so any (stream, substream) can be
// materialized independently without advancing a shared state.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng() : CounterRng(0) {}
  explicit CounterRng(std::uint64_t seed, Stream stream = Stream::kScenario,
                      std::uint64_t substream = 0)
      : key_(mix64(mix64(seed) ^ mix64(static_cast<std::uint64_t>(stream) << 32) ^
                   mix64(substream + 0x632be59bd9b4e019ULL))) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() {
    return mix64(key_ + 0x9e3779b97f4a7c15ULL * counter_++);
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // Marsaglia polar method; deterministic across standard libraries.
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  // A child generator for a derived substream.
  CounterRng split(std::uint64_t index) const {
    CounterRng child;
    child.key_ = mix64(key_ ^ mix64(index + 0xd1b54a32d192ed03ULL));
    return child;
  }

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace dosewise
