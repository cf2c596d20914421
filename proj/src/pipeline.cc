// Copyright 2026 Desep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "desep/pipeline.h"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace desep {

using ad::Tensor;

void PipelineConfig::validate() const {
  geometry.validate();
  stft.validate();
  wpe.validate();
  network.validate();
  attention.validate();
  for (const auto& [m, n] : attention.pairs) {
    if (m < 0 || n < 0 || m >= geometry.num_mics() || n >= geometry.num_mics() || m == n)
      throw std::invalid_argument("pipeline: mic pair (" + std::to_string(m) + ", " +
                                  std::to_string(n) + ") is outside the " +
                                  std::to_string(geometry.num_mics()) + "-mic rig");
  }
  network.bins_after_encoder(stft.num_bins());
}

Model::Model(PipelineConfig config, uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  const int bins = config_.stft.num_bins();
  angle_grid_ = doa_grid(config_.attention.num_angle);
  bank_ = design_das_bank(config_.geometry, doa_grid(config_.attention.num_beam),
                          config_.stft);

  ref_cos_.resize(angle_grid_.size());
  ref_sin_.resize(angle_grid_.size());
  for (size_t a = 0; a < angle_grid_.size(); ++a) {
    ref_cos_[a].reserve(config_.attention.pairs.size());
    ref_sin_[a].reserve(config_.attention.pairs.size());
    for (const auto& [m, n] : config_.attention.pairs) {
      Eigen::VectorXd c(bins), s(bins);
      for (int f = 0; f < bins; ++f) {
        const double r = reference_ipd(config_.geometry, angle_grid_[a], m, n,
                                       bin_frequency(f, config_.stft));
        c[f] = std::cos(r);
        s[f] = std::sin(r);
      }
      ref_cos_[a].push_back(std::move(c));
      ref_sin_[a].push_back(std::move(s));
    }
  }

  // parameter tensors are created (and therefore drawn) in a fixed order
  Rng rng(seed);
  init_dccrn(&params_, config_.network, bins, &rng);
  init_variance_net(&params_, config_.network, &rng);
  init_extraction(&params_, config_.network, config_.extraction_rows(), bins, &rng);
  init_attention(&params_, bins, config_.attention.embedding_dim, &rng);
  quantize_parameters(&params_);
}

namespace {

Tensor const_plane(const Eigen::MatrixXd& m) { return Tensor::from_matrix(m, false); }

Tensor const_vector(const Eigen::VectorXd& v) {
  Eigen::ArrayXd flat = v.array();
  return Tensor::leaf({static_cast<int>(v.size())}, flat, false);
}

}  // namespace

PipelineForward Model::forward(const Waveform& mixture, bool train) {
  mixture.validate();
  if (mixture.num_channels() != config_.geometry.num_mics())
    throw std::invalid_argument("pipeline: " + std::to_string(mixture.num_channels()) +
                                " input channels for a " +
                                std::to_string(config_.geometry.num_mics()) + "-mic rig");
  if (mixture.sample_rate != config_.stft.sample_rate)
    throw std::invalid_argument("pipeline: sample rate " +
                                std::to_string(mixture.sample_rate) +
                                " does not match the configured " +
                                std::to_string(config_.stft.sample_rate) +
                                " (resampling is out of scope)");

  PipelineForward result;
  result.input_spec = stft_multi(mixture.samples, config_.stft);
  const Spectrogram& spec = result.input_spec;
  const int mics = static_cast<int>(spec.size());
  const int bins = static_cast<int>(spec[0].rows());
  const int frames = static_cast<int>(spec[0].cols());
  const int num_samples = static_cast<int>(mixture.num_samples());

  // front end: per-channel complex planes, through the filter when enabled
  std::vector<ComplexPair> channels(mics);
  if (config_.wpe_mode == WpeMode::kNetwork) {
    std::vector<Tensor> mags;
    mags.reserve(mics);
    for (int m = 0; m < mics; ++m)
      mags.push_back(const_plane(spec[m].cwiseAbs()));
    result.variance = variance_net_forward(params_, config_.network, mags,
                                           config_.wpe.variance_floor);
    ComplexPair planes = wpe_with_variance_t(spec, result.variance, config_.wpe);
    for (int m = 0; m < mics; ++m) {
      channels[m] = {ad::reshape(ad::slice(planes.first, 0, m, 1), {bins, frames}),
                     ad::reshape(ad::slice(planes.second, 0, m, 1), {bins, frames})};
    }
  } else {
    Spectrogram base = spec;
    if (config_.wpe_mode == WpeMode::kIterative)
      base = iterative_wpe(spec, config_.wpe).first;
    for (int m = 0; m < mics; ++m)
      channels[m] = {const_plane(base[m].real()), const_plane(base[m].imag())};
  }

  // unmixing network on the reference channel
  std::vector<ComplexPair> decoded =
      dccrn_forward(params_, config_.network, channels[0], train);
  const int speakers = config_.network.num_speakers;

  // fixed beams and their magnitudes
  std::vector<ComplexPair> beams;
  std::vector<Tensor> beam_mags;
  if (config_.beam_feature) {
    beams.reserve(bank_.num_beams());
    for (int i = 0; i < bank_.num_beams(); ++i) {
      Tensor br, bi;
      for (int m = 0; m < mics; ++m) {
        Tensor wr = const_vector(bank_.weights[i].col(m).real());
        Tensor wi = const_vector(bank_.weights[i].col(m).imag());
        Tensor tr = ad::add(ad::mul_colvec(channels[m].first, wr),
                            ad::mul_colvec(channels[m].second, wi));
        Tensor ti = ad::sub(ad::mul_colvec(channels[m].second, wr),
                            ad::mul_colvec(channels[m].first, wi));
        br = br.defined() ? ad::add(br, tr) : tr;
        bi = bi.defined() ? ad::add(bi, ti) : ti;
      }
      beams.push_back({br, bi});
      beam_mags.push_back(complex_magnitude({br, bi}));
    }
  }

  // directional coherence features: mean over pairs of the cosine between
  // observed and reference phase differences
  const auto& pairs = config_.attention.pairs;
  const int num_angle = static_cast<int>(angle_grid_.size());
  std::vector<Tensor> angle_feats(num_angle);
  for (size_t p = 0; p < pairs.size(); ++p) {
    const auto& [m, n] = pairs[p];
    // cross spectrum y_m conj(y_n); its angle is the observed difference
    Tensor a = ad::add(ad::mul(channels[m].first, channels[n].first),
                       ad::mul(channels[m].second, channels[n].second));
    Tensor b = ad::sub(ad::mul(channels[m].second, channels[n].first),
                       ad::mul(channels[m].first, channels[n].second));
    Tensor norm = ad::sqrt_t(ad::clamp_min(ad::add(ad::mul(a, a), ad::mul(b, b)), 1e-24));
    Tensor ca = ad::div(a, norm);  // cos(observed)
    Tensor sb = ad::div(b, norm);  // sin(observed)
    for (int t = 0; t < num_angle; ++t) {
      Tensor contrib = ad::add(ad::mul_colvec(ca, const_vector(ref_cos_[t][p])),
                               ad::mul_colvec(sb, const_vector(ref_sin_[t][p])));
      angle_feats[t] =
          angle_feats[t].defined() ? ad::add(angle_feats[t], contrib) : contrib;
    }
  }
  const double pair_scale = 1.0 / static_cast<double>(pairs.size());
  for (Tensor& t : angle_feats) t = ad::mul_scalar(t, pair_scale);

  // attended selection and final extraction per speaker
  Tensor wp = params_.get("att.wp");
  Tensor wa = params_.get("att.wa");
  Tensor wb = params_.get("att.wb");
  std::vector<Tensor> angle_embeds;
  angle_embeds.reserve(num_angle);
  for (const Tensor& f : angle_feats) angle_embeds.push_back(embed_frames(f, wa));
  std::vector<Tensor> beam_embeds;
  beam_embeds.reserve(beam_mags.size());
  for (const Tensor& f : beam_mags) beam_embeds.push_back(embed_frames(f, wb));

  result.speakers.resize(speakers);
  for (int c = 0; c < speakers; ++c) {
    SpeakerOutput& out = result.speakers[c];
    out.mask = crm_from_decoder(decoded[c]);
    out.unmix_spec = apply_crm(out.mask, channels[0]);

    Tensor query = embed_frames(complex_magnitude(out.mask), wp);
    out.angle_weights = attention_weights_t(query, angle_embeds);
    Tensor attended_angle = weighted_sum(angle_feats, out.angle_weights);

    std::vector<Tensor> feat_rows;
    feat_rows.push_back(complex_magnitude(out.unmix_spec));
    if (config_.beam_feature) {
      out.beam_weights = attention_weights_t(query, beam_embeds);
      ComplexPair attended_beam = weighted_sum_complex(beams, out.beam_weights);
      feat_rows.push_back(complex_magnitude(attended_beam));
    }
    feat_rows.push_back(attended_angle);

    Tensor features = ad::concat(feat_rows, 0);
    out.extraction_mask =
        extraction_forward(params_, config_.network, features, bins);
    Tensor est_re = ad::mul(out.extraction_mask, out.unmix_spec.first);
    Tensor est_im = ad::mul(out.extraction_mask, out.unmix_spec.second);
    out.wave = ad::istft_t(est_re, est_im, config_.stft, num_samples);
  }
  return result;
}

std::string config_signature(const PipelineConfig& config) {
  std::ostringstream s;
  s << "v1|mics=" << config.geometry.num_mics() << "|fft=" << config.stft.fft_size
    << "|hop=" << config.stft.hop_size << "|rate=" << config.stft.sample_rate
    << "|enc=";
  for (size_t i = 0; i < config.network.encoder_channels.size(); ++i)
    s << (i ? "," : "") << config.network.encoder_channels[i];
  s << "|k=" << config.network.kernel_freq << "x" << config.network.kernel_time
    << "|rh=" << config.network.recurrent_hidden
    << "|rl=" << config.network.recurrent_layers
    << "|proj=" << config.network.projection_dim
    << "|spk=" << config.network.num_speakers
    << "|exh=" << config.network.extraction_hidden
    << "|exl=" << config.network.extraction_layers
    << "|vh=" << config.network.variance_hidden
    << "|dim=" << config.attention.embedding_dim
    << "|na=" << config.attention.num_angle << "|nb=" << config.attention.num_beam
    << "|pairs=";
  for (size_t i = 0; i < config.attention.pairs.size(); ++i)
    s << (i ? "," : "") << config.attention.pairs[i].first << "-"
      << config.attention.pairs[i].second;
  s << "|beam=" << (config.beam_feature ? 1 : 0)
    << "|wpe=" << static_cast<int>(config.wpe_mode)
    << "|taps=" << config.wpe.taps << "|delay=" << config.wpe.delay;
  return s.str();
}

}  // namespace desep
