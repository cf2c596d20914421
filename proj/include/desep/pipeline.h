// Copyright 2026 Desep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DESEP_PIPELINE_H_
#define DESEP_PIPELINE_H_

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "desep/attention.h"
#include "desep/autodiff.h"
#include "desep/geometry.h"
#include "desep/nnet.h"
#include "desep/spatial.h"
#include "desep/stft.h"
#include "desep/wav.h"
#include "desep/wpe.h"

namespace desep {

// Front-end dereverberation mode: none, the classic alternating solver on
// fixed statistics, or the trainable variance-network plugin.
enum class WpeMode { kOff, kIterative, kNetwork };

struct PipelineConfig {
  ArrayGeometry geometry = default_array();
  StftConfig stft;
  WpeConfig wpe;
  NetworkConfig network;
  AttentionConfig attention;
  WpeMode wpe_mode = WpeMode::kOff;
  bool beam_feature = true;

  void validate() const;
  // rows of the extraction input: unmix magnitude, optional steered-beam
  // magnitude, attended angle feature
  int extraction_rows() const {
    return (beam_feature ? 3 : 2) * stft.num_bins();
  }
};

struct SpeakerOutput {
  ad::Tensor wave;             // (num_samples,)
  ComplexPair unmix_spec;      // masked channel-0 spectrum (bins, frames)
  ComplexPair mask;            // complex ratio mask
  ad::Tensor extraction_mask;  // (bins, frames), sigmoid output
  ad::Tensor angle_weights;    // (num_angle,)
  ad::Tensor beam_weights;     // (num_beam,), undefined with the beam
                               // feature ablated
};

struct PipelineForward {
  std::vector<SpeakerOutput> speakers;
  ad::Tensor variance;         // variance-net map, network-WPE mode only
  Spectrogram input_spec;      // raw analysis transform of the mixture
};

// Parameters plus the graph builder for one chunk. All weights live in a
// flat named set so optimizers and checkpoints can walk them uniformly.
class Model {
 public:
  Model(PipelineConfig config, uint64_t seed);

  const PipelineConfig& config() const { return config_; }
  ad::ParameterSet& params() { return params_; }
  const ad::ParameterSet& params() const { return params_; }
  const BeamformerBank& bank() const { return bank_; }
  const std::vector<double>& angle_grid() const { return angle_grid_; }

  // Builds the differentiable graph for one chunk. train selects batch
  // statistics (and running-stat updates) in the normalization layers.
  PipelineForward forward(const Waveform& mixture, bool train);

 private:
  PipelineConfig config_;
  ad::ParameterSet params_;
  BeamformerBank bank_;
  std::vector<double> angle_grid_;
  // reference phase tables per direction and pair, (bins,) each
  std::vector<std::vector<Eigen::VectorXd>> ref_cos_, ref_sin_;
};

// Stable description of the shapes a checkpoint was trained with; loading
// refuses a mismatch.
std::string config_signature(const PipelineConfig& config);

}  // namespace desep

#endif  // DESEP_PIPELINE_H_
