// Copyright 2026 Desep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "desep/losses.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace desep {

namespace {

void check_pair(Eigen::Index est_len, Eigen::Index ref_len, double ref_sq) {
  if (est_len < 1 || est_len != ref_len)
    throw std::invalid_argument("si_snr: length mismatch (" + std::to_string(est_len) +
                                " vs " + std::to_string(ref_len) + ")");
  if (ref_sq <= 0.0)
    throw std::invalid_argument("si_snr: reference is all zero");
}

// Best assignment over all permutations of a C x C score matrix where
// scores(i, j) rates estimate i against reference j. Returns (mean score,
// estimate -> reference map).
std::pair<double, std::vector<int>> best_permutation(const Eigen::MatrixXd& scores) {
  const int C = static_cast<int>(scores.rows());
  std::vector<int> perm(C), best(C);
  std::iota(perm.begin(), perm.end(), 0);
  double best_mean = -std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (int i = 0; i < C; ++i) total += scores(i, perm[i]);
    const double mean = total / C;
    if (mean > best_mean) {
      best_mean = mean;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return {best_mean, best};
}

}  // namespace

int speaker_count(TrackLabel label) { return label == TrackLabel::kSe ? 1 : 2; }

const char* track_name(TrackLabel label) {
  switch (label) {
    case TrackLabel::kSe: return "SE";
    case TrackLabel::kCss: return "CSS";
    case TrackLabel::kNss: return "NSS";
  }
  return "?";
}

double si_snr_db(const Eigen::VectorXd& estimate, const Eigen::VectorXd& reference,
                 double eps) {
  const double ref_sq = reference.squaredNorm();
  check_pair(estimate.size(), reference.size(), ref_sq);
  const double alpha = estimate.dot(reference) / ref_sq;
  const double target_sq = std::max(alpha * alpha * ref_sq, eps * eps);
  const double error_sq = std::max((estimate - alpha * reference).squaredNorm(), eps * eps);
  return 10.0 * std::log10(target_sq / error_sq);
}

std::pair<double, std::vector<int>> pit_si_snr_loss(
    const std::vector<Eigen::VectorXd>& estimates,
    const std::vector<Eigen::VectorXd>& references, double eps) {
  const int C = static_cast<int>(estimates.size());
  if (C < 1 || references.size() != estimates.size())
    throw std::invalid_argument("pit: need matching non-empty estimate/reference lists");
  Eigen::MatrixXd scores(C, C);
  for (int i = 0; i < C; ++i)
    for (int j = 0; j < C; ++j) scores(i, j) = si_snr_db(estimates[i], references[j], eps);
  auto [mean, perm] = best_permutation(scores);
  return {-mean, perm};
}

ad::Tensor si_snr_t(const ad::Tensor& estimate, const Eigen::VectorXd& reference,
                    double eps) {
  const double ref_sq = reference.squaredNorm();
  check_pair(estimate.size(), reference.size(), ref_sq);

  Eigen::ArrayXd ref_flat = reference.array();
  ad::Tensor ref = ad::Tensor::leaf(estimate.shape(), ref_flat, false);
  ad::Tensor alpha = ad::mul_scalar(ad::sum_all(ad::mul(estimate, ref)), 1.0 / ref_sq);
  ad::Tensor target = ad::mul(ref, alpha);
  ad::Tensor error = ad::sub(estimate, target);
  // Floor in the squared domain: sqrt(max(x, e^2)) = max(sqrt(x), e), and
  // the clamp also keeps the sqrt gradient finite at zero.
  ad::Tensor target_sq = ad::clamp_min(ad::sum_all(ad::mul(target, target)), eps * eps);
  ad::Tensor error_sq = ad::clamp_min(ad::sum_all(ad::mul(error, error)), eps * eps);
  ad::Tensor ratio = ad::sub(ad::log_t(target_sq), ad::log_t(error_sq));
  return ad::mul_scalar(ratio, 10.0 / std::log(10.0));
}

std::pair<ad::Tensor, std::vector<int>> pit_loss_t(
    const std::vector<ad::Tensor>& estimates,
    const std::vector<Eigen::VectorXd>& references, double eps) {
  const int C = static_cast<int>(estimates.size());
  if (C < 1 || references.size() != estimates.size())
    throw std::invalid_argument("pit: need matching non-empty estimate/reference lists");

  std::vector<std::vector<ad::Tensor>> pairwise(C, std::vector<ad::Tensor>(C));
  Eigen::MatrixXd scores(C, C);
  for (int i = 0; i < C; ++i)
    for (int j = 0; j < C; ++j) {
      pairwise[i][j] = si_snr_t(estimates[i], references[j], eps);
      scores(i, j) = pairwise[i][j].item();
    }
  auto [mean, perm] = best_permutation(scores);
  (void)mean;

  ad::Tensor total = pairwise[0][perm[0]];
  for (int i = 1; i < C; ++i) total = ad::add(total, pairwise[i][perm[i]]);
  return {ad::mul_scalar(total, -1.0 / C), perm};
}

ChunkLoss symphonic_chunk_loss(TrackLabel label,
                               const std::vector<ad::Tensor>& branch_waves,
                               const std::vector<Eigen::VectorXd>& references,
                               bool track_conditional, double eps) {
  if (branch_waves.empty())
    throw std::invalid_argument("symphonic: no output branches");
  const int expected = speaker_count(label);
  if (static_cast<int>(references.size()) != expected)
    throw std::invalid_argument(std::string("symphonic: ") + track_name(label) +
                                " chunk expects " + std::to_string(expected) +
                                " references, got " + std::to_string(references.size()));

  ChunkLoss out;
  if (label == TrackLabel::kSe) {
    if (track_conditional) {
      out.loss = ad::neg(si_snr_t(branch_waves[0], references[0], eps));
      out.permutation = {0};
    } else {
      // Ablation: no track conditioning, so score every branch and keep
      // the one that currently matches the lone reference best.
      int pick = 0;
      double best = -std::numeric_limits<double>::infinity();
      std::vector<ad::Tensor> scored(branch_waves.size());
      for (size_t b = 0; b < branch_waves.size(); ++b) {
        scored[b] = si_snr_t(branch_waves[b], references[0], eps);
        if (scored[b].item() > best) {
          best = scored[b].item();
          pick = static_cast<int>(b);
        }
      }
      out.loss = ad::neg(scored[pick]);
      out.permutation = {pick};
    }
    return out;
  }

  if (static_cast<int>(branch_waves.size()) < expected)
    throw std::invalid_argument("symphonic: separation chunk needs two output branches");
  std::vector<ad::Tensor> est(branch_waves.begin(), branch_waves.begin() + expected);
  auto [loss, perm] = pit_loss_t(est, references, eps);
  out.loss = loss;
  out.permutation = perm;
  return out;
}

}  // namespace desep
