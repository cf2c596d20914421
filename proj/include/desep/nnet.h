// Copyright 2026 Desep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DESEP_NNET_H_
#define DESEP_NNET_H_

#include <utility>
#include <vector>

#include "desep/autodiff.h"
#include "desep/common.h"
#include "desep/wpe.h"

namespace desep {

// Complex feature maps are carried as (real, imaginary) plane pairs.
using ComplexPair = std::pair<ad::Tensor, ad::Tensor>;

struct NetworkConfig {
  // Complex channel counts of the encoder stack; the decoder mirrors it.
  std::vector<int> encoder_channels{8, 16, 32};
  int kernel_freq = 5;
  int kernel_time = 2;
  int stride_freq = 2;
  int stride_time = 1;
  int recurrent_hidden = 64;
  int recurrent_layers = 2;
  int projection_dim = 64;
  int num_speakers = 2;
  double leaky_slope = 0.01;
  int extraction_hidden = 64;
  int extraction_layers = 2;
  int variance_hidden = 4;

  int depth() const { return static_cast<int>(encoder_channels.size()); }
  void validate() const;
  // Frequency size after the encoder pyramid; throws with the minimum
  // admissible bin count when the input cannot be halved cleanly.
  int bins_after_encoder(int num_bins) const;
};

// Fan-in scaled uniform draw, U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
ad::Tensor init_uniform(const ad::Shape& shape, int fan_in, Rng* rng);

// Parameter registration. Names are stable and form the checkpoint schema.
void init_dccrn(ad::ParameterSet* params, const NetworkConfig& config,
                int num_bins, Rng* rng);
void init_variance_net(ad::ParameterSet* params, const NetworkConfig& config,
                       Rng* rng);
void init_extraction(ad::ParameterSet* params, const NetworkConfig& config,
                     int feature_rows, int num_bins, Rng* rng);
// Snaps every parameter (and running statistic) to float32 so checkpoints
// round trip bit-exactly from the very first step.
void quantize_parameters(ad::ParameterSet* params);

// out_r = conv(xr, wr) - conv(xi, wi); out_i = conv(xi, wr) + conv(xr, wi).
ComplexPair complex_conv2d(const ComplexPair& x, const ad::Tensor& wr,
                           const ad::Tensor& wi, int stride_h, int stride_w,
                           int pad_h, int pad_w);
ComplexPair complex_deconv2d(const ComplexPair& x, const ad::Tensor& wr,
                             const ad::Tensor& wi, int stride_h, int stride_w,
                             int pad_h, int pad_w);

// Shared encoder + recurrent bottleneck + per-speaker projection and
// mirrored skip-connected decoders. Input planes are (num_bins, frames);
// output is one full-resolution (H_r, H_i) pair per speaker.
std::vector<ComplexPair> dccrn_forward(const ad::ParameterSet& params,
                                       const NetworkConfig& config,
                                       const ComplexPair& y0, bool train);

// Bounded complex ratio mask: magnitude tanh(|H|), phase of H.
ComplexPair crm_from_decoder(const ComplexPair& h);
// Complex elementwise product mask * spectrum.
ComplexPair apply_crm(const ComplexPair& mask, const ComplexPair& spec);

// Shared-weight two-layer CNN applied to each channel magnitude map, then
// softplus, channel mean and flooring. Output (num_bins, frames).
ad::Tensor variance_net_forward(const ad::ParameterSet& params,
                                const NetworkConfig& config,
                                const std::vector<ad::Tensor>& channel_mags,
                                double floor);

// Recurrent mask estimator: LSTM stack over the feature rows, linear head,
// sigmoid. Output (num_bins, frames) in (0, 1).
ad::Tensor extraction_forward(const ad::ParameterSet& params,
                              const NetworkConfig& config,
                              const ad::Tensor& features, int num_bins);

// One-shot prediction-error filtering as a differentiable op in the
// variance map; the input spectrogram is a constant. Returns real and
// imaginary plane stacks of shape (channels, num_bins, frames).
ComplexPair wpe_with_variance_t(const Spectrogram& spec, const ad::Tensor& variance,
                                const WpeConfig& config);

// |z| with a clamped radicand so gradients stay finite at zero.
ad::Tensor complex_magnitude(const ComplexPair& z, double floor_sq = 1e-24);

// LSTM stack helper: runs layers of single-direction recurrence over the
// columns of x (rows, frames) using parameters named
// <prefix>.lstm<l>.{wih,whh,bih,bhh}. Returns (hidden, frames).
ad::Tensor lstm_stack(const ad::ParameterSet& params, const std::string& prefix,
                      int layers, int hidden, const ad::Tensor& x);

}  // namespace desep

#endif  // DESEP_NNET_H_
