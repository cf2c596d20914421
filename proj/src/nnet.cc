// Copyright 2026 Desep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "desep/nnet.h"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace desep {

namespace {

using ad::Shape;
using ad::Tensor;

std::string idx_name(const std::string& stem, int i) {
  return stem + std::to_string(i);
}

}  // namespace

void NetworkConfig::validate() const {
  if (encoder_channels.empty())
    throw std::invalid_argument("network: encoder_channels must not be empty");
  for (int c : encoder_channels)
    if (c < 1) throw std::invalid_argument("network: encoder channel counts must be >= 1");
  if (kernel_freq < 1 || kernel_freq % 2 == 0)
    throw std::invalid_argument("network: kernel_freq must be odd and >= 1");
  if (kernel_time < 1) throw std::invalid_argument("network: kernel_time must be >= 1");
  if (stride_freq < 1) throw std::invalid_argument("network: stride_freq must be >= 1");
  if (stride_time != 1)
    throw std::invalid_argument("network: stride_time must be 1 (time resolution is kept)");
  if (recurrent_hidden < 1 || recurrent_layers < 1)
    throw std::invalid_argument("network: recurrent stack sizes must be >= 1");
  if (projection_dim < 1) throw std::invalid_argument("network: projection_dim must be >= 1");
  if (num_speakers < 1) throw std::invalid_argument("network: num_speakers must be >= 1");
  if (leaky_slope < 0.0 || leaky_slope >= 1.0)
    throw std::invalid_argument("network: leaky_slope must be in [0, 1)");
  if (extraction_hidden < 1 || extraction_layers < 1)
    throw std::invalid_argument("network: extraction stack sizes must be >= 1");
  if (variance_hidden < 1)
    throw std::invalid_argument("network: variance_hidden must be >= 1");
}

int NetworkConfig::bins_after_encoder(int num_bins) const {
  const int pad = (kernel_freq - 1) / 2;
  int f = num_bins;
  for (int k = 0; k < depth(); ++k) {
    const int numer = f + 2 * pad - kernel_freq;
    if (f < 2 || numer < 0 || numer % stride_freq != 0) {
      // With the default 5/2 stack this reduces to (bins - 1) divisible
      // by 2^depth, minimum 2^depth + 1 (e.g. 9, 33, 257).
      throw std::invalid_argument(
          "network: " + std::to_string(num_bins) +
          " bins do not divide through the encoder; need (bins + 2*" +
          std::to_string(pad) + " - " + std::to_string(kernel_freq) +
          ") divisible by " + std::to_string(stride_freq) + " at each of " +
          std::to_string(depth()) + " levels (minimum " +
          std::to_string((1 << depth()) + 1) + " for the default stack)");
    }
    f = numer / stride_freq + 1;
  }
  return f;
}

Tensor init_uniform(const Shape& shape, int fan_in, Rng* rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(1, fan_in)));
  Eigen::ArrayXd v(ad::shape_size(shape));
  for (int64_t i = 0; i < v.size(); ++i) v[i] = rng->uniform(-bound, bound);
  return Tensor::leaf(shape, v, true);
}

namespace {

void add_bn_params(ad::ParameterSet* params, const std::string& stem, int planes) {
  params->add(stem + ".gamma", Tensor::full({planes}, 1.0, true));
  params->add(stem + ".beta", Tensor::zeros({planes}, true));
  params->add(stem + ".rmean", Tensor::zeros({planes}, false));
  params->add(stem + ".rvar", Tensor::full({planes}, 1.0, false));
}

void add_lstm_params(ad::ParameterSet* params, const std::string& stem, int input,
                     int hidden, Rng* rng) {
  params->add(stem + ".wih", init_uniform({4 * hidden, input}, input, rng));
  params->add(stem + ".whh", init_uniform({4 * hidden, hidden}, hidden, rng));
  params->add(stem + ".bih", Tensor::zeros({4 * hidden, 1}, true));
  params->add(stem + ".bhh", Tensor::zeros({4 * hidden, 1}, true));
}

}  // namespace

void init_dccrn(ad::ParameterSet* params, const NetworkConfig& config, int num_bins,
                Rng* rng) {
  config.validate();
  const int depth = config.depth();
  const int f_last = config.bins_after_encoder(num_bins);
  const int c_last = config.encoder_channels.back();
  const int rows = 2 * c_last * f_last;
  const int kf = config.kernel_freq;
  const int kt = config.kernel_time;

  for (int k = 0; k < depth; ++k) {
    const int in_c = k == 0 ? 1 : config.encoder_channels[k - 1];
    const int out_c = config.encoder_channels[k];
    const std::string stem = idx_name("unmix.enc", k);
    const int fan = in_c * kf * kt;
    params->add(stem + ".wr", init_uniform({out_c, in_c, kf, kt}, fan, rng));
    params->add(stem + ".wi", init_uniform({out_c, in_c, kf, kt}, fan, rng));
    add_bn_params(params, stem + ".bn", 2 * out_c);
  }
  for (int l = 0; l < config.recurrent_layers; ++l) {
    const int input = l == 0 ? rows : config.recurrent_hidden;
    add_lstm_params(params, idx_name("unmix.lstm", l), input,
                    config.recurrent_hidden, rng);
  }
  for (int c = 0; c < config.num_speakers; ++c) {
    const std::string proj = idx_name("unmix.proj", c);
    params->add(proj + ".w", init_uniform({config.projection_dim, config.recurrent_hidden},
                                          config.recurrent_hidden, rng));
    params->add(proj + ".b", Tensor::zeros({config.projection_dim, 1}, true));
    const std::string adapt = idx_name("unmix.adapt", c);
    params->add(adapt + ".w",
                init_uniform({rows, config.projection_dim}, config.projection_dim, rng));
    params->add(adapt + ".b", Tensor::zeros({rows, 1}, true));
    for (int k = 0; k < depth; ++k) {
      const int in_c = 2 * config.encoder_channels[depth - 1 - k];
      const int out_c = k == depth - 1 ? 1 : config.encoder_channels[depth - 2 - k];
      const std::string stem = idx_name("unmix.dec", c) + "." + std::to_string(k);
      const int fan = in_c * kf * kt;
      params->add(stem + ".wr", init_uniform({in_c, out_c, kf, kt}, fan, rng));
      params->add(stem + ".wi", init_uniform({in_c, out_c, kf, kt}, fan, rng));
      if (k != depth - 1) add_bn_params(params, stem + ".bn", 2 * out_c);
    }
  }
}

void init_variance_net(ad::ParameterSet* params, const NetworkConfig& config, Rng* rng) {
  const int h = config.variance_hidden;
  params->add("var.conv1.w", init_uniform({h, 1, 3, 3}, 9, rng));
  params->add("var.conv1.b", Tensor::zeros({h, 1}, true));
  params->add("var.conv2.w", init_uniform({1, h, 3, 3}, 9 * h, rng));
  params->add("var.conv2.b", Tensor::zeros({1, 1}, true));
}

void init_extraction(ad::ParameterSet* params, const NetworkConfig& config,
                     int feature_rows, int num_bins, Rng* rng) {
  for (int l = 0; l < config.extraction_layers; ++l) {
    const int input = l == 0 ? feature_rows : config.extraction_hidden;
    add_lstm_params(params, idx_name("ext.lstm", l), input, config.extraction_hidden,
                    rng);
  }
  params->add("ext.out.w", init_uniform({num_bins, config.extraction_hidden},
                                        config.extraction_hidden, rng));
  params->add("ext.out.b", Tensor::zeros({num_bins, 1}, true));
}

void quantize_parameters(ad::ParameterSet* params) {
  for (const std::string& name : params->names()) {
    Tensor t = params->get(name);
    ad::quantize_float32(&t.mutable_value());
  }
}

ComplexPair complex_conv2d(const ComplexPair& x, const Tensor& wr, const Tensor& wi,
                           int stride_h, int stride_w, int pad_h, int pad_w) {
  Tensor rr = ad::conv2d(x.first, wr, stride_h, stride_w, pad_h, pad_w);
  Tensor ii = ad::conv2d(x.second, wi, stride_h, stride_w, pad_h, pad_w);
  Tensor ri = ad::conv2d(x.first, wi, stride_h, stride_w, pad_h, pad_w);
  Tensor ir = ad::conv2d(x.second, wr, stride_h, stride_w, pad_h, pad_w);
  return {ad::sub(rr, ii), ad::add(ir, ri)};
}

ComplexPair complex_deconv2d(const ComplexPair& x, const Tensor& wr, const Tensor& wi,
                             int stride_h, int stride_w, int pad_h, int pad_w) {
  Tensor rr = ad::deconv2d(x.first, wr, stride_h, stride_w, pad_h, pad_w);
  Tensor ii = ad::deconv2d(x.second, wi, stride_h, stride_w, pad_h, pad_w);
  Tensor ri = ad::deconv2d(x.first, wi, stride_h, stride_w, pad_h, pad_w);
  Tensor ir = ad::deconv2d(x.second, wr, stride_h, stride_w, pad_h, pad_w);
  return {ad::sub(rr, ii), ad::add(ir, ri)};
}

Tensor lstm_stack(const ad::ParameterSet& params, const std::string& prefix, int layers,
                  int hidden, const Tensor& x) {
  Tensor cur = x;
  for (int l = 0; l < layers; ++l) {
    const std::string stem = prefix + idx_name(".lstm", l);
    Tensor wih = params.get(stem + ".wih");
    Tensor whh = params.get(stem + ".whh");
    Tensor bih = params.get(stem + ".bih");
    Tensor bhh = params.get(stem + ".bhh");
    ad::LstmState state{Tensor::zeros({hidden, 1}), Tensor::zeros({hidden, 1})};
    const int frames = cur.shape()[1];
    std::vector<Tensor> outs;
    outs.reserve(frames);
    for (int t = 0; t < frames; ++t) {
      state = ad::lstm_cell(ad::slice(cur, 1, t, 1), state, wih, whh, bih, bhh);
      outs.push_back(state.h);
    }
    cur = ad::concat(outs, 1);
  }
  return cur;
}

namespace {

// conv + BN over the stacked real/imag planes + leaky relu.
ComplexPair bn_act_block(const ad::ParameterSet& params, const std::string& bn_stem,
                         const ComplexPair& x, int out_c, double slope, bool train) {
  Tensor z = ad::concat({x.first, x.second}, 0);
  z = ad::batchnorm2d(z, params.get(bn_stem + ".gamma"), params.get(bn_stem + ".beta"),
                      params.get(bn_stem + ".rmean"), params.get(bn_stem + ".rvar"),
                      train);
  z = ad::leaky_relu(z, slope);
  return {ad::slice(z, 0, 0, out_c), ad::slice(z, 0, out_c, out_c)};
}

ComplexPair causal_time_pad(const ComplexPair& x, int channels, int bins, int cols) {
  if (cols == 0) return x;
  Tensor zr = Tensor::zeros({channels, bins, cols});
  Tensor zi = Tensor::zeros({channels, bins, cols});
  return {ad::concat({zr, x.first}, 2), ad::concat({zi, x.second}, 2)};
}

}  // namespace

std::vector<ComplexPair> dccrn_forward(const ad::ParameterSet& params,
                                       const NetworkConfig& config,
                                       const ComplexPair& y0, bool train) {
  config.validate();
  const int num_bins = y0.first.shape()[0];
  const int frames = y0.first.shape()[1];
  const int depth = config.depth();
  const int f_last = config.bins_after_encoder(num_bins);
  const int c_last = config.encoder_channels.back();
  const int rows = 2 * c_last * f_last;
  const int pad_h = (config.kernel_freq - 1) / 2;
  const int tpad = config.kernel_time - 1;

  ComplexPair cur{ad::reshape(y0.first, {1, num_bins, frames}),
                  ad::reshape(y0.second, {1, num_bins, frames})};
  int cur_f = num_bins;
  int cur_c = 1;
  std::vector<ComplexPair> skips;
  std::vector<int> level_bins;  // frequency size entering each encoder level
  skips.reserve(depth);
  for (int k = 0; k < depth; ++k) {
    const int out_c = config.encoder_channels[k];
    const std::string stem = idx_name("unmix.enc", k);
    level_bins.push_back(cur_f);
    ComplexPair padded = causal_time_pad(cur, cur_c, cur_f, tpad);
    ComplexPair conv = complex_conv2d(padded, params.get(stem + ".wr"),
                                      params.get(stem + ".wi"), config.stride_freq,
                                      config.stride_time, pad_h, 0);
    cur = bn_act_block(params, stem + ".bn", conv, out_c, config.leaky_slope, train);
    cur_f = (cur_f + 2 * pad_h - config.kernel_freq) / config.stride_freq + 1;
    cur_c = out_c;
    skips.push_back(cur);
  }

  Tensor flat = ad::concat({ad::reshape(cur.first, {c_last * f_last, frames}),
                            ad::reshape(cur.second, {c_last * f_last, frames})},
                           0);
  Tensor rec = lstm_stack(params, "unmix", config.recurrent_layers,
                          config.recurrent_hidden, flat);

  std::vector<ComplexPair> outputs;
  outputs.reserve(config.num_speakers);
  for (int c = 0; c < config.num_speakers; ++c) {
    const std::string proj = idx_name("unmix.proj", c);
    const std::string adapt = idx_name("unmix.adapt", c);
    Tensor p = ad::leaky_relu(
        ad::linear(rec, params.get(proj + ".w"), params.get(proj + ".b")),
        config.leaky_slope);
    Tensor a = ad::linear(p, params.get(adapt + ".w"), params.get(adapt + ".b"));
    ComplexPair dec{ad::reshape(ad::slice(a, 0, 0, rows / 2), {c_last, f_last, frames}),
                    ad::reshape(ad::slice(a, 0, rows / 2, rows / 2),
                                {c_last, f_last, frames})};
    int dec_f = f_last;
    for (int k = 0; k < depth; ++k) {
      const ComplexPair& skip = skips[depth - 1 - k];
      const int out_c = k == depth - 1 ? 1 : config.encoder_channels[depth - 2 - k];
      const std::string stem =
          idx_name("unmix.dec", c) + "." + std::to_string(k);
      ComplexPair cat{ad::concat({dec.first, skip.first}, 0),
                      ad::concat({dec.second, skip.second}, 0)};
      ComplexPair up = complex_deconv2d(cat, params.get(stem + ".wr"),
                                        params.get(stem + ".wi"), config.stride_freq,
                                        config.stride_time, pad_h, 0);
      // the transposed time kernel grows the tail; trimming it keeps the
      // layer causal and the frame count fixed
      up.first = ad::slice(up.first, 2, 0, frames);
      up.second = ad::slice(up.second, 2, 0, frames);
      dec_f = level_bins[depth - 1 - k];
      if (k != depth - 1) {
        dec = bn_act_block(params, stem + ".bn", up, out_c, config.leaky_slope, train);
      } else {
        dec = up;
      }
    }
    outputs.push_back({ad::reshape(dec.first, {num_bins, frames}),
                       ad::reshape(dec.second, {num_bins, frames})});
  }
  return outputs;
}

ComplexPair crm_from_decoder(const ComplexPair& h) {
  Tensor sq = ad::add(ad::mul(h.first, h.first), ad::mul(h.second, h.second));
  Tensor r = ad::sqrt_t(ad::clamp_min(sq, 1e-24));
  // magnitude tanh(|h|), phase kept: tanh(r)/r stays in (0, 1] and its
  // gradient is bounded, unlike the polar form at the origin
  Tensor scale = ad::div(ad::tanh_t(r), r);
  return {ad::mul(scale, h.first), ad::mul(scale, h.second)};
}

ComplexPair apply_crm(const ComplexPair& mask, const ComplexPair& spec) {
  Tensor re = ad::sub(ad::mul(mask.first, spec.first), ad::mul(mask.second, spec.second));
  Tensor im = ad::add(ad::mul(mask.first, spec.second), ad::mul(mask.second, spec.first));
  return {re, im};
}

Tensor complex_magnitude(const ComplexPair& z, double floor_sq) {
  Tensor sq = ad::add(ad::mul(z.first, z.first), ad::mul(z.second, z.second));
  return ad::sqrt_t(ad::clamp_min(sq, floor_sq));
}

Tensor variance_net_forward(const ad::ParameterSet& params, const NetworkConfig& config,
                            const std::vector<ad::Tensor>& channel_mags, double floor) {
  if (channel_mags.empty())
    throw std::invalid_argument("variance net: no channel magnitudes given");
  Tensor w1 = params.get("var.conv1.w");
  Tensor b1 = params.get("var.conv1.b");
  Tensor w2 = params.get("var.conv2.w");
  Tensor b2 = params.get("var.conv2.b");
  const int h = config.variance_hidden;
  Tensor acc;
  for (const Tensor& mag : channel_mags) {
    const int bins = mag.shape()[0];
    const int frames = mag.shape()[1];
    Tensor x = ad::reshape(mag, {1, bins, frames});
    Tensor h1 = ad::conv2d(x, w1, 1, 1, 1, 1);
    h1 = ad::reshape(ad::add_colvec(ad::reshape(h1, {h, bins * frames}), b1),
                     {h, bins, frames});
    h1 = ad::leaky_relu(h1, config.leaky_slope);
    Tensor h2 = ad::conv2d(h1, w2, 1, 1, 1, 1);
    Tensor lam = ad::softplus(ad::add(ad::reshape(h2, {bins, frames}), b2));
    acc = acc.defined() ? ad::add(acc, lam) : lam;
  }
  acc = ad::mul_scalar(acc, 1.0 / static_cast<double>(channel_mags.size()));
  return ad::clamp_min(acc, floor);
}

Tensor extraction_forward(const ad::ParameterSet& params, const NetworkConfig& config,
                          const Tensor& features, int num_bins) {
  Tensor rec = lstm_stack(params, "ext", config.extraction_layers,
                          config.extraction_hidden, features);
  Tensor logits = ad::linear(rec, params.get("ext.out.w"), params.get("ext.out.b"));
  (void)num_bins;
  return ad::sigmoid(logits);
}

ComplexPair wpe_with_variance_t(const Spectrogram& spec, const Tensor& variance,
                                const WpeConfig& config) {
  config.validate();
  if (spec.empty()) throw std::invalid_argument("wpe: empty spectrogram");
  const int channels = static_cast<int>(spec.size());
  const int bins = static_cast<int>(spec[0].rows());
  const int frames = static_cast<int>(spec[0].cols());
  if (variance.shape() != Shape{bins, frames})
    throw std::invalid_argument("wpe: variance shape " + ad::shape_str(variance.shape()) +
                                " does not match the spectrogram (" +
                                std::to_string(bins) + ", " + std::to_string(frames) + ")");

  Eigen::MatrixXd lam(bins, frames);
  const Eigen::ArrayXd& lv = variance.value();
  for (int f = 0; f < bins; ++f)
    for (int t = 0; t < frames; ++t) lam(f, t) = lv[f * frames + t];

  std::vector<Eigen::MatrixXcd> buffer = build_delayed_buffer(spec, config.delay,
                                                              config.taps);
  FilterTaps taps = estimate_taps(buffer, spec, lam, config.diagonal_loading,
                                  config.variance_floor);
  Spectrogram clean = apply_taps(spec, taps, config.delay, config.taps);

  auto node = std::make_shared<ad::Node>();
  node->shape = {2 * channels, bins, frames};
  node->value.resize(static_cast<int64_t>(2) * channels * bins * frames);
  for (int m = 0; m < channels; ++m)
    for (int f = 0; f < bins; ++f)
      for (int t = 0; t < frames; ++t) {
        const int64_t base = (static_cast<int64_t>(m) * bins + f) * frames + t;
        const int64_t half = static_cast<int64_t>(channels) * bins * frames;
        node->value[base] = clean[static_cast<size_t>(m)](f, t).real();
        node->value[base + half] = clean[static_cast<size_t>(m)](f, t).imag();
      }
  node->requires_grad = variance.requires_grad();
  if (node->requires_grad) {
    node->inputs = {variance.node()};
    ad::Node* self = node.get();
    // grabbed by value: the input spectrogram and the solved taps; the
    // context buffer is rebuilt on the way back instead of being cached
    Spectrogram spec_copy = spec;
    WpeConfig cfg = config;
    node->backprop = [self, spec_copy, taps, cfg, channels, bins, frames](
                         const Eigen::ArrayXd& grad, ad::GradStore* store) {
      const int mk = channels * cfg.taps;
      const Eigen::ArrayXd& lam_in = self->inputs[0]->value;
      Eigen::ArrayXd glam = Eigen::ArrayXd::Zero(static_cast<int64_t>(bins) * frames);
      std::vector<Eigen::MatrixXcd> buf = build_delayed_buffer(spec_copy, cfg.delay,
                                                               cfg.taps);
      const int64_t half = static_cast<int64_t>(channels) * bins * frames;
      for (int f = 0; f < bins; ++f) {
        const Eigen::MatrixXcd& b = buf[static_cast<size_t>(f)];
        // per-frame inverse variance weights, floored exactly like forward
        Eigen::VectorXd w(frames);
        double trace = 0.0;
        for (int t = 0; t < frames; ++t) {
          const double used = std::max(lam_in[static_cast<int64_t>(f) * frames + t],
                                       cfg.variance_floor);
          w[t] = 1.0 / used;
          trace += w[t] * b.col(t).squaredNorm();
        }
        if (!(trace > 0.0)) continue;  // zero context: output is the input

        // upstream gradient and forward output, as complex (M, T) maps
        Eigen::MatrixXcd gbar(channels, frames), out(channels, frames);
        for (int m = 0; m < channels; ++m)
          for (int t = 0; t < frames; ++t) {
            const int64_t base = (static_cast<int64_t>(m) * bins + f) * frames + t;
            gbar(m, t) = std::complex<double>(grad[base], grad[base + half]);
            out(m, t) = std::complex<double>(self->value[base], self->value[base + half]);
          }

        Eigen::MatrixXcd a = (b * w.asDiagonal()) * b.adjoint();
        const double load = cfg.diagonal_loading * trace / mk;
        a.diagonal().array() += load;
        Eigen::LDLT<Eigen::MatrixXcd> ldlt(a);
        if (ldlt.info() != Eigen::Success)
          throw NumericalError("wpe backward: normal equations not factorable at bin " +
                               std::to_string(f));
        // gradient of the solved taps is -sum_t b_t gbar_t^H; one extra
        // solve against the same loaded system gives the chain to the
        // per-frame weights
        Eigen::MatrixXcd z = ldlt.solve((-(b * gbar.adjoint())).eval());
        const Eigen::MatrixXcd& g = taps[static_cast<size_t>(f)];
        const double tr_zg = (z.adjoint() * g).trace().real();
        Eigen::MatrixXcd zhb = z.adjoint() * b;
        for (int t = 0; t < frames; ++t) {
          // dA/dw_t = b_t b_t^H + (delta/MK) |b_t|^2 I (the loading term
          // tracks the trace), dr/dw_t = b_t y_t^H; both collapse into
          // Re[out_t^H Z^H b_t] minus the loading correction
          const double direct = (out.col(t).adjoint() * zhb.col(t)).value().real();
          const double gw = direct - (cfg.diagonal_loading / mk) *
                                         b.col(t).squaredNorm() * tr_zg;
          const int64_t li = static_cast<int64_t>(f) * frames + t;
          if (lam_in[li] > cfg.variance_floor) {
            const double used = lam_in[li];
            glam[li] += -gw / (used * used);
          }
        }
      }
      store->add(self->inputs[0].get(), glam);
    };
  }
  Tensor stacked(node);
  Tensor re = ad::slice(stacked, 0, 0, channels);
  Tensor im = ad::slice(stacked, 0, channels, channels);
  return {re, im};
}

}  // namespace desep
