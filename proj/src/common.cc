// Copyright 2026 Desep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "desep/common.h"

#include <sstream>
#include <thread>
#include <vector>

namespace desep {

uint64_t mix_seed(uint64_t seed, uint64_t stream) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Rng Rng::fork(uint64_t stream) const {
  // hash the current engine state lightly: forks depend only on the seed
  // path, not on how many draws were taken (callers fork before drawing)
  std::ostringstream os;
  os << engine_;
  uint64_t h = 1469598103934665603ULL;
  for (char c : os.str()) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ULL;
  return Rng(mix_seed(h, stream));
}

std::string Rng::save_state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::load_state(const std::string& state) {
  std::istringstream is(state);
  is >> engine_;
  if (is.fail()) throw DataError("Rng: malformed engine state string");
}

void parallel_for(int64_t n, int workers, const std::function<void(int64_t)>& fn) {
  if (n <= 0) return;
  if (workers < 1) workers = 1;
  int64_t nthreads = std::min<int64_t>(workers, n);
  if (nthreads == 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(nthreads);
  for (int64_t w = 0; w < nthreads; ++w) {
    pool.emplace_back([&, w]() {
      for (int64_t i = w; i < n; i += nthreads) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace desep
