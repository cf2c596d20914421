// Copyright 2026 Desep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DESEP_COMMON_H_
#define DESEP_COMMON_H_

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>

namespace desep {

// Raised when a solve or an optimization step goes numerically bad
// (singular normal equations, non-finite loss). Maps to CLI exit code 4.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised on malformed input files / manifests. Maps to CLI exit code 3.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

constexpr double kPi = 3.14159265358979323846;

// splitmix64, used to derive independent stream seeds from a master seed.
uint64_t mix_seed(uint64_t seed, uint64_t stream);

// Deterministic random source. Thin wrapper over mt19937_64 with
// fully specified uniform/normal draws so that snapshots stay stable.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(seed) {}

  // uniform in [0, 1), 53-bit resolution
  double uniform() { return (engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // uniform integer in [0, n)
  uint64_t below(uint64_t n) { return n ? engine_() % n : 0; }
  // raw engine output, e.g. for deriving child seeds
  uint64_t raw() { return engine_(); }
  // standard normal via Box-Muller (cosine branch, two uniforms per draw)
  double normal() {
    double u1 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // independent child stream
  Rng fork(uint64_t stream) const;

  std::string save_state() const;
  void load_state(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

// Runs fn(i) for i in [0, n) on up to `workers` threads. Each index is
// handled exactly once; callers must write to disjoint outputs.
void parallel_for(int64_t n, int workers, const std::function<void(int64_t)>& fn);

}  // namespace desep

#endif  // DESEP_COMMON_H_
