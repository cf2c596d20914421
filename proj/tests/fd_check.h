// Copyright 2026 Desep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DESEP_TESTS_FD_CHECK_H_
#define DESEP_TESTS_FD_CHECK_H_

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "desep/autodiff.h"
#include "desep/common.h"

namespace fdtest {

namespace ad = desep::ad;

inline ad::Tensor uniform_leaf(const ad::Shape& shape, desep::Rng* rng, double lo,
                               double hi, bool grad = true) {
  Eigen::ArrayXd v(ad::shape_size(shape));
  for (int64_t i = 0; i < v.size(); ++i) v(i) = lo + (hi - lo) * rng->uniform();
  return ad::Tensor::leaf(shape, v, grad);
}

// Magnitude in [lo, hi] with a random sign. Keeps values clear of the
// kinks in leaky_relu / clamp_min and of division by zero.
inline ad::Tensor signed_leaf(const ad::Shape& shape, desep::Rng* rng, double lo,
                              double hi) {
  Eigen::ArrayXd v(ad::shape_size(shape));
  for (int64_t i = 0; i < v.size(); ++i) {
    const double mag = lo + (hi - lo) * rng->uniform();
    v(i) = rng->uniform() < 0.5 ? -mag : mag;
  }
  return ad::Tensor::leaf(shape, v, true);
}

// Scalar readout with fixed pseudo-random weights so every output element
// contributes a distinct coefficient; plain sums would hide transposed or
// permuted gradients.
inline ad::Tensor pin(const ad::Tensor& t, uint64_t salt) {
  desep::Rng rng(0x9e3779b97f4a7c15ull ^ salt);
  Eigen::ArrayXd w(t.size());
  for (int64_t i = 0; i < w.size(); ++i) w(i) = 0.25 + rng.uniform();
  ad::Tensor wt = ad::Tensor::leaf(t.shape(), w, false);
  return ad::sum_all(ad::mul(t, wt));
}

using Builder = std::function<ad::Tensor(std::vector<ad::Tensor>&)>;

// Central finite differences against one backward sweep. Rebuilds the graph
// for every probe so leaf mutation feeds a fresh forward pass.
inline double max_fd_gap(std::vector<ad::Tensor>& leaves, const Builder& build,
                         double rel_eps = 1e-5) {
  ad::Tensor loss = build(leaves);
  ad::GradStore store = ad::backward(loss);
  double worst = 0.0;
  for (auto& leaf : leaves) {
    const Eigen::ArrayXd* g = store.find(leaf);
    Eigen::ArrayXd analytic = g ? *g : Eigen::ArrayXd::Zero(leaf.size());
    for (int64_t i = 0; i < leaf.size(); ++i) {
      const double saved = leaf.mutable_value()(i);
      const double eps = rel_eps * std::max(1.0, std::abs(saved));
      leaf.mutable_value()(i) = saved + eps;
      const double up = build(leaves).item();
      leaf.mutable_value()(i) = saved - eps;
      const double down = build(leaves).item();
      leaf.mutable_value()(i) = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double denom = std::max({1.0, std::abs(numeric), std::abs(analytic(i))});
      worst = std::max(worst, std::abs(analytic(i) - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace fdtest

#endif  // DESEP_TESTS_FD_CHECK_H_
