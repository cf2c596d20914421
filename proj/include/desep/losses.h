// Copyright 2026 Desep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DESEP_LOSSES_H_
#define DESEP_LOSSES_H_

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "desep/autodiff.h"

namespace desep {

// Chunk category: one speaker plus noise, two clean speakers, or two
// speakers plus noise. Decides how many output branches carry a target.
enum class TrackLabel { kSe, kCss, kNss };

int speaker_count(TrackLabel label);
const char* track_name(TrackLabel label);

// Scale-invariant SNR in dB. The reference is scaled by
// alpha = <est, ref> / <ref, ref>; both the projection norm and the error
// norm are floored at eps before the log.
double si_snr_db(const Eigen::VectorXd& estimate, const Eigen::VectorXd& reference,
                 double eps = 1e-8);

// loss = -max over permutations of the mean pairwise SI-SNR; the returned
// permutation maps estimate index to the reference index it was scored
// against.
std::pair<double, std::vector<int>> pit_si_snr_loss(
    const std::vector<Eigen::VectorXd>& estimates,
    const std::vector<Eigen::VectorXd>& references, double eps = 1e-8);

// Differentiable counterparts; references are constants.
ad::Tensor si_snr_t(const ad::Tensor& estimate, const Eigen::VectorXd& reference,
                    double eps = 1e-8);
std::pair<ad::Tensor, std::vector<int>> pit_loss_t(
    const std::vector<ad::Tensor>& estimates,
    const std::vector<Eigen::VectorXd>& references, double eps = 1e-8);

// Track-conditional loss for one chunk. With track_conditional set, SE
// chunks train only branch 0 against their single reference, so nothing
// flows into the other branch; separation chunks use the permutation-
// invariant loss over both branches. With it cleared, SE chunks instead
// pick whichever branch currently scores best (ablation mode).
struct ChunkLoss {
  ad::Tensor loss;
  std::vector<int> permutation;  // branch -> reference assignment
};
ChunkLoss symphonic_chunk_loss(TrackLabel label,
                               const std::vector<ad::Tensor>& branch_waves,
                               const std::vector<Eigen::VectorXd>& references,
                               bool track_conditional = true, double eps = 1e-8);

}  // namespace desep

#endif  // DESEP_LOSSES_H_
