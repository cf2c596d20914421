// Copyright 2026 Desep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "desep/attention.h"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace desep {

using ad::Tensor;

void AttentionConfig::validate() const {
  if (embedding_dim < 1)
    throw std::invalid_argument("attention: embedding_dim must be >= 1");
  if (num_angle < 1 || num_beam < 1)
    throw std::invalid_argument("attention: candidate grids must be >= 1");
  if (pairs.empty())
    throw std::invalid_argument("attention: at least one mic pair is required");
}

void init_attention(ad::ParameterSet* params, int num_bins, int embedding_dim,
                    Rng* rng) {
  params->add("att.wp", init_uniform({num_bins, embedding_dim}, num_bins, rng));
  params->add("att.wa", init_uniform({num_bins, embedding_dim}, num_bins, rng));
  params->add("att.wb", init_uniform({num_bins, embedding_dim}, num_bins, rng));
}

Tensor embed_frames(const Tensor& feat, const Tensor& w) {
  return ad::matmul(ad::transpose2d(feat), w);
}

Tensor attention_scores_t(const Tensor& query_embed,
                          const std::vector<Tensor>& candidate_embeds) {
  if (candidate_embeds.empty())
    throw std::invalid_argument("attention: no candidates to score");
  const int frames = query_embed.shape()[0];
  const int dim = query_embed.shape()[1];
  const double scale = 1.0 / (static_cast<double>(frames) * std::sqrt(dim));
  std::vector<Tensor> scores;
  scores.reserve(candidate_embeds.size());
  for (const Tensor& cand : candidate_embeds) {
    if (cand.shape() != query_embed.shape())
      throw std::invalid_argument("attention: candidate embedding shape " +
                                  ad::shape_str(cand.shape()) +
                                  " does not match the query " +
                                  ad::shape_str(query_embed.shape()));
    scores.push_back(ad::mul_scalar(ad::sum_all(ad::mul(query_embed, cand)), scale));
  }
  return ad::concat(scores, 0);
}

Tensor attention_weights_t(const Tensor& query_embed,
                           const std::vector<Tensor>& candidate_embeds) {
  return ad::softmax(attention_scores_t(query_embed, candidate_embeds), 0);
}

Tensor weighted_sum(const std::vector<Tensor>& feats, const Tensor& weights) {
  if (feats.empty()) throw std::invalid_argument("attention: nothing to combine");
  if (weights.size() != static_cast<int64_t>(feats.size()))
    throw std::invalid_argument("attention: " + std::to_string(weights.size()) +
                                " weights for " + std::to_string(feats.size()) +
                                " feature maps");
  Tensor acc;
  for (size_t i = 0; i < feats.size(); ++i) {
    Tensor term = ad::mul(feats[i], ad::slice(weights, 0, static_cast<int>(i), 1));
    acc = acc.defined() ? ad::add(acc, term) : term;
  }
  return acc;
}

ComplexPair weighted_sum_complex(const std::vector<ComplexPair>& feats,
                                 const Tensor& weights) {
  std::vector<Tensor> re, im;
  re.reserve(feats.size());
  im.reserve(feats.size());
  for (const ComplexPair& f : feats) {
    re.push_back(f.first);
    im.push_back(f.second);
  }
  return {weighted_sum(re, weights), weighted_sum(im, weights)};
}

}  // namespace desep
