// Copyright 2026 Desep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DESEP_ATTENTION_H_
#define DESEP_ATTENTION_H_

#include <utility>
#include <vector>

#include "desep/autodiff.h"
#include "desep/common.h"
#include "desep/nnet.h"
#include "desep/spatial.h"

namespace desep {

struct AttentionConfig {
  int embedding_dim = 257;
  int num_angle = 36;
  int num_beam = 18;
  std::vector<std::pair<int, int>> pairs = default_mic_pairs();
  void validate() const;
};

// Embedding matrices att.wp (mask side, shared by both pathways), att.wa
// (angle candidates) and att.wb (beam candidates), each (num_bins, dim).
void init_attention(ad::ParameterSet* params, int num_bins, int embedding_dim,
                    Rng* rng);

// Per-frame embedding of a (num_bins, frames) map: feat^T w -> (frames, dim).
ad::Tensor embed_frames(const ad::Tensor& feat, const ad::Tensor& w);

// Pre-softmax candidate scores: mean over frames of the embedded dot
// product, scaled by 1/sqrt(dim). Shape (num_candidates,).
ad::Tensor attention_scores_t(const ad::Tensor& query_embed,
                              const std::vector<ad::Tensor>& candidate_embeds);
// softmax of the scores; rows sum to one by construction
ad::Tensor attention_weights_t(const ad::Tensor& query_embed,
                               const std::vector<ad::Tensor>& candidate_embeds);

// Convex combination of candidate maps under the attention weights.
ad::Tensor weighted_sum(const std::vector<ad::Tensor>& feats,
                        const ad::Tensor& weights);
ComplexPair weighted_sum_complex(const std::vector<ComplexPair>& feats,
                                 const ad::Tensor& weights);

}  // namespace desep

#endif  // DESEP_ATTENTION_H_
