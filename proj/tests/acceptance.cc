// Copyright 2026 Desep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Release gate: one self-contained check per shipping requirement, each
// printing a single [PASS]/[FAIL] line plus indented details. Run with no
// arguments for the full battery, or pass criterion numbers (1..12) to
// select a subset. Exit status 0 only when every selected check passes.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "desep/attention.h"
#include "desep/autodiff.h"
#include "desep/common.h"
#include "desep/datasim.h"
#include "desep/geometry.h"
#include "desep/losses.h"
#include "desep/pipeline.h"
#include "desep/spatial.h"
#include "desep/stft.h"
#include "desep/training.h"
#include "desep/wav.h"
#include "desep/wpe.h"
#include "fd_check.h"

namespace {

namespace ad = desep::ad;
namespace fs = std::filesystem;
using desep::Rng;
using desep::TrackLabel;
using fdtest::pin;
using fdtest::signed_leaf;
using fdtest::uniform_leaf;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double power(const Eigen::VectorXd& x) { return x.squaredNorm(); }

desep::ArrayGeometry two_mic_rig() {
  desep::ArrayGeometry g;
  g.mic_positions.resize(2, 3);
  g.mic_positions << 0.05, 0.0, 0.0, -0.05, 0.0, 0.0;
  return g;
}

// Every pipeline stage present at toy dimensions; forward and backward run
// in milliseconds so exhaustive probing stays cheap.
desep::PipelineConfig tiny_pipeline(desep::WpeMode mode) {
  desep::PipelineConfig cfg;
  cfg.geometry = two_mic_rig();
  cfg.stft.fft_size = 32;
  cfg.stft.hop_size = 16;
  cfg.stft.sample_rate = 8000;
  cfg.wpe.taps = 2;
  cfg.wpe.delay = 1;
  cfg.network.encoder_channels = {2, 4};
  cfg.network.recurrent_hidden = 8;
  cfg.network.recurrent_layers = 1;
  cfg.network.projection_dim = 8;
  cfg.network.extraction_hidden = 8;
  cfg.network.extraction_layers = 1;
  cfg.network.variance_hidden = 2;
  cfg.attention.embedding_dim = 6;
  cfg.attention.num_angle = 6;
  cfg.attention.num_beam = 4;
  cfg.attention.pairs = {{0, 1}};
  cfg.wpe_mode = mode;
  cfg.beam_feature = true;
  return cfg;
}

desep::SimulatorConfig tiny_sim(double seconds) {
  desep::SimulatorConfig cfg;
  cfg.geometry = two_mic_rig();
  cfg.sample_rate = 8000;
  cfg.chunk_seconds = seconds;
  cfg.reverb = false;
  cfg.iso_noise = false;
  return cfg;
}

desep::SimulatedChunk make_chunk(const desep::ChunkSimulator& sim, TrackLabel label,
                                 double snr, double sdr, uint64_t seed) {
  Rng rng(seed);
  desep::MixtureSpec spec = sim.draw_spec({label, snr, sdr}, &rng);
  return sim.simulate(spec);
}

// Speaker branch index baked into a parameter name, or -1 for shared weights.
int branch_of(const std::string& name) {
  for (const std::string stem : {"unmix.proj", "unmix.adapt", "unmix.dec"}) {
    if (name.rfind(stem, 0) == 0 && name.size() > stem.size() &&
        std::isdigit(static_cast<unsigned char>(name[stem.size()])))
      return name[stem.size()] - '0';
  }
  return -1;
}

std::map<std::string, double> loss_grad_norms(desep::Model* model,
                                              const desep::SimulatedChunk& chunk) {
  desep::PipelineForward fwd = model->forward(chunk.mixture, true);
  std::vector<ad::Tensor> waves;
  for (const desep::SpeakerOutput& s : fwd.speakers) waves.push_back(s.wave);
  desep::ChunkLoss cl =
      desep::symphonic_chunk_loss(chunk.spec.label, waves, chunk.references, true);
  ad::GradStore store = ad::backward(cl.loss);
  auto grads = ad::gradients_by_name(model->params(), store, true);
  std::map<std::string, double> norms;
  for (const auto& [name, g] : grads) norms[name] = g.matrix().norm();
  return norms;
}

// ---------------------------------------------------------------------------
// criterion 1: analysis plus inverse transform reconstructs a random signal

bool c01_stft_round_trip() {
  const auto t0 = Clock::now();
  desep::StftConfig cfg;  // 512 / 256 at 16 kHz
  const int channels = 4;
  const int n = 2 * cfg.sample_rate;
  Rng rng(901);
  Eigen::MatrixXd x(channels, n);
  for (int c = 0; c < channels; ++c)
    for (int i = 0; i < n; ++i) x(c, i) = rng.normal();

  const std::vector<Eigen::MatrixXcd> spec = desep::stft_multi(x, cfg);
  const Eigen::MatrixXd back = desep::istft_multi(spec, cfg, n);
  const int skip = cfg.fft_size;
  const double err =
      (back - x).middleCols(skip, n - 2 * skip).cwiseAbs().maxCoeff();
  const double sec = seconds_since(t0);
  std::printf("  max interior error %.3e over %d channels x %d samples, %.2f s\n",
              err, channels, n, sec);
  return err < 1e-6 && sec < 1.0;
}

// ---------------------------------------------------------------------------
// criterion 2: every differentiable op and the whole short-chunk pipeline
// agree with central finite differences

bool c02_gradient_checks() {
  const auto t0 = Clock::now();
  bool ok = true;

  double worst_primitive = 0.0;
  std::string worst_name;
  auto run = [&](const char* name, std::vector<ad::Tensor> leaves,
                 const fdtest::Builder& build) {
    const double gap = fdtest::max_fd_gap(leaves, build);
    if (gap > worst_primitive) {
      worst_primitive = gap;
      worst_name = name;
    }
    if (!(gap < 1e-4)) {
      std::printf("  primitive %s: fd gap %.3e\n", name, gap);
      ok = false;
    }
  };

  Rng rng(1301);
  run("add", {uniform_leaf({2, 3}, &rng, -1.5, 1.5), uniform_leaf({2, 3}, &rng, -1.5, 1.5)},
      [](auto& l) { return pin(ad::add(l[0], l[1]), 1); });
  run("sub", {uniform_leaf({2, 3}, &rng, -1.5, 1.5), uniform_leaf({2, 3}, &rng, -1.5, 1.5)},
      [](auto& l) { return pin(ad::sub(l[0], l[1]), 2); });
  run("mul", {uniform_leaf({2, 3}, &rng, -1.5, 1.5), uniform_leaf({2, 3}, &rng, -1.5, 1.5)},
      [](auto& l) { return pin(ad::mul(l[0], l[1]), 3); });
  run("div", {uniform_leaf({2, 3}, &rng, -1.5, 1.5), signed_leaf({2, 3}, &rng, 0.5, 1.5)},
      [](auto& l) { return pin(ad::div(l[0], l[1]), 4); });
  run("neg", {uniform_leaf({2, 3}, &rng, -1.5, 1.5)},
      [](auto& l) { return pin(ad::neg(l[0]), 5); });
  run("add scalar operand",
      {uniform_leaf({2, 3}, &rng, -1.5, 1.5), uniform_leaf({1}, &rng, -1.5, 1.5)},
      [](auto& l) { return pin(ad::add(l[0], l[1]), 6); });
  run("div by scalar operand",
      {uniform_leaf({2, 3}, &rng, -1.5, 1.5), signed_leaf({1}, &rng, 0.5, 1.5)},
      [](auto& l) { return pin(ad::div(l[0], l[1]), 7); });
  run("add_scalar", {uniform_leaf({2, 3}, &rng, -1.5, 1.5)},
      [](auto& l) { return pin(ad::add_scalar(l[0], 0.7), 8); });
  run("mul_scalar", {uniform_leaf({2, 3}, &rng, -1.5, 1.5)},
      [](auto& l) { return pin(ad::mul_scalar(l[0], -1.3), 9); });
  run("add_rowvec",
      {uniform_leaf({3, 4}, &rng, -1.5, 1.5), uniform_leaf({4}, &rng, -1.5, 1.5)},
      [](auto& l) { return pin(ad::add_rowvec(l[0], l[1]), 10); });
  run("add_colvec",
      {uniform_leaf({3, 4}, &rng, -1.5, 1.5), uniform_leaf({3}, &rng, -1.5, 1.5)},
      [](auto& l) { return pin(ad::add_colvec(l[0], l[1]), 11); });
  run("mul_rowvec",
      {uniform_leaf({3, 4}, &rng, -1.5, 1.5), uniform_leaf({4}, &rng, -1.5, 1.5)},
      [](auto& l) { return pin(ad::mul_rowvec(l[0], l[1]), 12); });
  run("mul_colvec",
      {uniform_leaf({3, 4}, &rng, -1.5, 1.5), uniform_leaf({3}, &rng, -1.5, 1.5)},
      [](auto& l) { return pin(ad::mul_colvec(l[0], l[1]), 13); });
  run("matmul",
      {uniform_leaf({2, 3}, &rng, -1.5, 1.5), uniform_leaf({3, 4}, &rng, -1.5, 1.5)},
      [](auto& l) { return pin(ad::matmul(l[0], l[1]), 14); });
  run("transpose2d", {uniform_leaf({2, 3}, &rng, -1.5, 1.5)},
      [](auto& l) { return pin(ad::transpose2d(l[0]), 15); });
  run("reshape", {uniform_leaf({2, 6}, &rng, -1.5, 1.5)},
      [](auto& l) { return pin(ad::reshape(l[0], {3, 4}), 16); });
  run("concat axis 0",
      {uniform_leaf({2, 3}, &rng, -1.5, 1.5), uniform_leaf({1, 3}, &rng, -1.5, 1.5)},
      [](auto& l) { return pin(ad::concat({l[0], l[1]}, 0), 17); });
  run("concat axis 1",
      {uniform_leaf({2, 2}, &rng, -1.5, 1.5), uniform_leaf({2, 3}, &rng, -1.5, 1.5)},
      [](auto& l) { return pin(ad::concat({l[0], l[1]}, 1), 18); });
  run("slice axis 0", {uniform_leaf({4, 3}, &rng, -1.5, 1.5)},
      [](auto& l) { return pin(ad::slice(l[0], 0, 1, 2), 19); });
  run("slice axis 1", {uniform_leaf({4, 3}, &rng, -1.5, 1.5)},
      [](auto& l) { return pin(ad::slice(l[0], 1, 0, 2), 20); });
  run("sum_all", {uniform_leaf({2, 3}, &rng, -1.5, 1.5)},
      [](auto& l) { return ad::sum_all(ad::mul(l[0], l[0])); });
  run("mean_all", {uniform_leaf({2, 3}, &rng, -1.5, 1.5)},
      [](auto& l) { return ad::mean_all(ad::mul(l[0], l[0])); });
  run("sum_axis 0", {uniform_leaf({3, 4}, &rng, -1.5, 1.5)},
      [](auto& l) { return pin(ad::sum_axis(l[0], 0), 21); });
  run("sum_axis 1", {uniform_leaf({3, 4}, &rng, -1.5, 1.5)},
      [](auto& l) { return pin(ad::sum_axis(l[0], 1), 22); });
  run("mean_axis 0", {uniform_leaf({3, 4}, &rng, -1.5, 1.5)},
      [](auto& l) { return pin(ad::mean_axis(l[0], 0), 23); });
  run("mean_axis 1", {uniform_leaf({3, 4}, &rng, -1.5, 1.5)},
      [](auto& l) { return pin(ad::mean_axis(l[0], 1), 24); });
  run("tanh", {uniform_leaf({2, 3}, &rng, -1.5, 1.5)},
      [](auto& l) { return pin(ad::tanh_t(l[0]), 25); });
  run("sigmoid", {uniform_leaf({2, 3}, &rng, -1.5, 1.5)},
      [](auto& l) { return pin(ad::sigmoid(l[0]), 26); });
  run("exp", {uniform_leaf({2, 3}, &rng, -1.5, 1.5)},
      [](auto& l) { return pin(ad::exp_t(l[0]), 27); });
  run("log", {uniform_leaf({2, 3}, &rng, 0.3, 2.0)},
      [](auto& l) { return pin(ad::log_t(l[0]), 28); });
  run("sqrt", {uniform_leaf({2, 3}, &rng, 0.3, 2.0)},
      [](auto& l) { return pin(ad::sqrt_t(l[0]), 29); });
  run("cos", {uniform_leaf({2, 3}, &rng, -3.0, 3.0)},
      [](auto& l) { return pin(ad::cos_t(l[0]), 30); });
  run("sin", {uniform_leaf({2, 3}, &rng, -3.0, 3.0)},
      [](auto& l) { return pin(ad::sin_t(l[0]), 31); });
  run("softplus", {uniform_leaf({2, 3}, &rng, -2.0, 2.0)},
      [](auto& l) { return pin(ad::softplus(l[0]), 32); });
  run("leaky_relu", {signed_leaf({2, 4}, &rng, 0.2, 1.5)},
      [](auto& l) { return pin(ad::leaky_relu(l[0], 0.1), 33); });
  run("clamp_min", {signed_leaf({2, 4}, &rng, 0.6, 1.5)},
      [](auto& l) { return pin(ad::clamp_min(l[0], 0.3), 34); });
  run("atan2",
      {uniform_leaf({2, 3}, &rng, -1.0, 1.0), uniform_leaf({2, 3}, &rng, 0.4, 1.5)},
      [](auto& l) { return pin(ad::atan2_t(l[0], l[1]), 35); });
  run("softmax rank 1", {uniform_leaf({5}, &rng, -2.0, 2.0)},
      [](auto& l) { return pin(ad::softmax(l[0], 0), 36); });
  run("softmax rank 2 axis 0", {uniform_leaf({3, 4}, &rng, -2.0, 2.0)},
      [](auto& l) { return pin(ad::softmax(l[0], 0), 37); });
  run("softmax rank 2 axis 1", {uniform_leaf({3, 4}, &rng, -2.0, 2.0)},
      [](auto& l) { return pin(ad::softmax(l[0], 1), 38); });
  run("linear",
      {uniform_leaf({3, 2}, &rng, -1.0, 1.0), uniform_leaf({4, 3}, &rng, -1.0, 1.0),
       uniform_leaf({4, 1}, &rng, -1.0, 1.0)},
      [](auto& l) { return pin(ad::linear(l[0], l[1], l[2]), 39); });
  run("lstm_cell",
      {uniform_leaf({3, 1}, &rng, -1.0, 1.0), uniform_leaf({4, 1}, &rng, -1.0, 1.0),
       uniform_leaf({4, 1}, &rng, -1.0, 1.0), uniform_leaf({16, 3}, &rng, -0.8, 0.8),
       uniform_leaf({16, 4}, &rng, -0.8, 0.8), uniform_leaf({16, 1}, &rng, -0.5, 0.5),
       uniform_leaf({16, 1}, &rng, -0.5, 0.5)},
      [](auto& l) {
        ad::LstmState s = ad::lstm_cell(l[0], {l[1], l[2]}, l[3], l[4], l[5], l[6]);
        return ad::add(pin(s.h, 40), pin(s.c, 41));
      });
  run("conv2d",
      {uniform_leaf({2, 5, 4}, &rng, -1.0, 1.0), uniform_leaf({3, 2, 3, 2}, &rng, -1.0, 1.0)},
      [](auto& l) { return pin(ad::conv2d(l[0], l[1], 2, 1, 1, 0), 42); });
  run("deconv2d",
      {uniform_leaf({2, 3, 4}, &rng, -1.0, 1.0), uniform_leaf({2, 3, 3, 2}, &rng, -1.0, 1.0)},
      [](auto& l) { return pin(ad::deconv2d(l[0], l[1], 2, 1, 1, 0), 43); });
  run("batchnorm train",
      {uniform_leaf({2, 3, 4}, &rng, -1.0, 1.0), uniform_leaf({2}, &rng, 0.5, 1.5),
       uniform_leaf({2}, &rng, -0.5, 0.5)},
      [](auto& l) {
        ad::Tensor m0 = ad::Tensor::zeros({2});
        ad::Tensor v0 = ad::Tensor::full({2}, 1.0);
        return pin(ad::batchnorm2d(l[0], l[1], l[2], m0, v0, true), 44);
      });
  run("batchnorm eval",
      {uniform_leaf({2, 3, 4}, &rng, -1.0, 1.0), uniform_leaf({2}, &rng, 0.5, 1.5),
       uniform_leaf({2}, &rng, -0.5, 0.5)},
      [](auto& l) {
        ad::Tensor m0 = ad::Tensor::leaf({2}, (Eigen::ArrayXd(2) << 0.2, -0.1).finished(),
                                         false);
        ad::Tensor v0 = ad::Tensor::leaf({2}, (Eigen::ArrayXd(2) << 0.8, 1.7).finished(),
                                         false);
        return pin(ad::batchnorm2d(l[0], l[1], l[2], m0, v0, false), 45);
      });
  {
    desep::StftConfig cfg;
    cfg.fft_size = 8;
    cfg.hop_size = 4;
    cfg.sample_rate = 8000;
    run("istft",
        {uniform_leaf({5, 6}, &rng, -1.0, 1.0), uniform_leaf({5, 6}, &rng, -1.0, 1.0)},
        [cfg](auto& l) { return pin(ad::istft_t(l[0], l[1], cfg, 20), 46); });
  }
  std::printf("  worst primitive fd gap %.3e (%s)\n", worst_primitive,
              worst_name.c_str());

  // End to end: a tenth of a second through the whole dereverberation,
  // unmixing and extraction stack, probed parameter by parameter. Eval-mode
  // statistics and a fixed branch assignment keep the loss surface smooth
  // between probes.
  desep::PipelineConfig pcfg = tiny_pipeline(desep::WpeMode::kNetwork);
  desep::Model model(pcfg, 2026);
  desep::ChunkSimulator sim(tiny_sim(0.1));
  desep::SimulatedChunk chunk = make_chunk(sim, TrackLabel::kCss, 0.0, 1.5, 402);

  auto loss_tensor = [&]() {
    desep::PipelineForward fwd = model.forward(chunk.mixture, false);
    ad::Tensor t0_ = desep::si_snr_t(fwd.speakers[0].wave, chunk.references[0]);
    ad::Tensor t1_ = desep::si_snr_t(fwd.speakers[1].wave, chunk.references[1]);
    return ad::mul_scalar(ad::add(t0_, t1_), -0.5);
  };
  ad::Tensor loss = loss_tensor();
  ad::GradStore store = ad::backward(loss);
  auto grads = ad::gradients_by_name(model.params(), store, true);

  Rng probe_rng(873);
  double worst_e2e = 0.0;
  std::string worst_param;
  int probed = 0;
  for (const std::string& name : model.params().names()) {
    ad::Tensor p = model.params().get(name);
    if (!p.requires_grad()) continue;
    const Eigen::ArrayXd& g = grads.at(name);
    for (int probe = 0; probe < 2; ++probe) {
      const int64_t i = static_cast<int64_t>(probe_rng.below(p.size()));
      const double saved = p.mutable_value()(i);
      const double eps = 1e-5 * std::max(1.0, std::abs(saved));
      p.mutable_value()(i) = saved + eps;
      const double up = loss_tensor().item();
      p.mutable_value()(i) = saved - eps;
      const double down = loss_tensor().item();
      p.mutable_value()(i) = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double denom = std::max({1.0, std::abs(numeric), std::abs(g(i))});
      const double gap = std::abs(numeric - g(i)) / denom;
      ++probed;
      if (gap > worst_e2e) {
        worst_e2e = gap;
        worst_param = name;
      }
    }
  }
  const double sec = seconds_since(t0);
  std::printf("  worst end-to-end fd gap %.3e over %d probes (%s), %.1f s\n",
              worst_e2e, probed, worst_param.c_str(), sec);
  ok = ok && worst_primitive < 1e-4 && worst_e2e < 1e-3 && sec < 300.0;
  return ok;
}

// ---------------------------------------------------------------------------
// criterion 3: the linear-prediction filter strips a transform-domain echo

bool c03_echo_suppression() {
  const auto t0 = Clock::now();
  const int rate = 8000;
  const int n = 2 * rate;
  const int lag = 4;

  // Burst-modulated noise: strong level swings give the predictor a
  // signal whose echo is statistically visible.
  Rng rng(79);
  Eigen::VectorXd clean(n);
  double env = 1.0;
  for (int i = 0; i < n; ++i) {
    if (i % (rate / 12) == 0) env = std::pow(10.0, -rng.uniform());
    clean(i) = env * rng.normal();
  }
  desep::StftConfig scfg;
  scfg.fft_size = 256;
  scfg.hop_size = 128;
  scfg.sample_rate = rate;
  const Eigen::MatrixXcd S = desep::stft(clean, scfg);
  const Eigen::VectorXd direct = desep::istft(S, scfg, n);

  bool ok = true;
  for (int mics : {1, 2}) {
    desep::Spectrogram noisy(1, S);
    noisy[0].rightCols(S.cols() - lag) += 0.6 * S.leftCols(S.cols() - lag);
    if (mics == 2) noisy.push_back(std::polar(1.0, 0.7) * noisy[0]);

    desep::WpeConfig cfg;  // 10 taps, delay 3, 3 alternation rounds
    cfg.variance_floor = 1e-2;
    auto [out, taps] = desep::iterative_wpe(noisy, cfg);
    const double before = desep::si_snr_db(desep::istft(noisy[0], scfg, n), direct);
    const double after = desep::si_snr_db(desep::istft(out[0], scfg, n), direct);
    std::printf("  %d mic(s): %.2f dB -> %.2f dB (gain %.2f dB)\n", mics, before,
                after, after - before);
    ok = ok && (after - before >= 5.0);
  }
  const double sec = seconds_since(t0);
  std::printf("  %.1f s\n", sec);
  return ok && sec < 30.0;
}

// ---------------------------------------------------------------------------
// criterion 4: without loading the prediction residual is orthogonal to the
// weighted context

bool c04_residual_orthogonality() {
  const int M = 2, K = 3, delay = 2, bins = 4, frames = 48;
  Rng rng(53);
  desep::Spectrogram spec(M, Eigen::MatrixXcd(bins, frames));
  for (auto& ch : spec)
    for (Eigen::Index i = 0; i < ch.size(); ++i)
      ch.reshaped()(i) = std::complex<double>(rng.normal(), rng.normal());
  Eigen::MatrixXd variance(bins, frames);
  for (auto& v : variance.reshaped()) v = 0.5 + rng.uniform();

  const auto buffer = desep::build_delayed_buffer(spec, delay, K);
  const auto taps = desep::estimate_taps(buffer, spec, variance, 0.0);
  const desep::Spectrogram out = desep::apply_taps(spec, taps, delay, K);

  double worst = 0.0;
  for (int f = 0; f < bins; ++f) {
    Eigen::MatrixXcd residual(M, frames);
    for (int m = 0; m < M; ++m) residual.row(m) = out[m].row(f);
    Eigen::MatrixXcd cross = Eigen::MatrixXcd::Zero(M * K, M);
    for (int t = 0; t < frames; ++t)
      cross += buffer[f].col(t) * residual.col(t).adjoint() / variance(f, t);
    worst = std::max(worst, cross.cwiseAbs().maxCoeff());
  }
  std::printf("  max weighted cross correlation %.3e\n", worst);
  return worst < 1e-6;
}

// ---------------------------------------------------------------------------
// criterion 5: the permutation-invariant loss equals its own brute-force
// enumeration

bool c05_pit_matches_brute_force() {
  Rng rng(1105);
  bool ok = true;
  for (int C : {2, 3}) {
    int exact = 0;
    for (int trial = 0; trial < 100; ++trial) {
      const int n = 48;
      std::vector<Eigen::VectorXd> est(C, Eigen::VectorXd(n));
      std::vector<Eigen::VectorXd> ref(C, Eigen::VectorXd(n));
      for (int c = 0; c < C; ++c)
        for (int i = 0; i < n; ++i) {
          est[c](i) = rng.normal();
          ref[c](i) = rng.normal();
        }

      auto [loss, perm] = desep::pit_si_snr_loss(est, ref);

      std::vector<int> idx(C);
      std::iota(idx.begin(), idx.end(), 0);
      double best = -std::numeric_limits<double>::infinity();
      do {
        double total = 0.0;
        for (int i = 0; i < C; ++i) total += desep::si_snr_db(est[i], ref[idx[i]]);
        best = std::max(best, total / C);
      } while (std::next_permutation(idx.begin(), idx.end()));

      double perm_total = 0.0;
      for (int i = 0; i < C; ++i) perm_total += desep::si_snr_db(est[i], ref[perm[i]]);
      if (loss == -best && perm_total / C == best) ++exact;
    }
    std::printf("  C=%d: %d/100 fixtures equal the enumeration exactly\n", C, exact);
    ok = ok && exact == 100;
  }
  return ok;
}

// ---------------------------------------------------------------------------
// criterion 6: closed-form value and scale invariance of the metric

bool c06_si_snr_closed_form() {
  Eigen::VectorXd est(2), ref(2);
  est << 1.0, 0.0;
  ref << 1.0, 1.0;
  const double v = desep::si_snr_db(est, ref);
  std::printf("  si-snr([1,0],[1,1]) = %.3e dB\n", v);
  bool ok = std::abs(v) < 1e-9;

  Rng rng(606);
  Eigen::VectorXd e(256), r(256);
  for (int i = 0; i < 256; ++i) {
    e(i) = rng.normal();
    r(i) = rng.normal();
  }
  const double base = desep::si_snr_db(e, r);
  double worst = 0.0;
  for (double b : {0.1, 1.0, 10.0})
    for (double g : {0.1, 1.0, 10.0})
      worst = std::max(worst, std::abs(desep::si_snr_db(b * e, g * r) - base));
  std::printf("  worst scale deviation %.3e dB across 9 gain pairs\n", worst);
  return ok && worst < 1e-9;
}

// ---------------------------------------------------------------------------
// criterion 7: simulated mixtures land exactly on their target levels

bool c07_mixing_calibration() {
  const auto t0 = Clock::now();
  desep::SimulatorConfig cfg;
  cfg.geometry = two_mic_rig();
  cfg.sample_rate = 8000;
  cfg.chunk_seconds = 0.25;
  cfg.reverb = true;
  cfg.rt60_min = 0.2;
  cfg.rt60_max = 0.4;
  cfg.iso_noise = false;  // channel 0 minus the speaker images isolates the noise
  desep::ChunkSimulator sim(cfg);

  Rng rng(707);
  double worst = 0.0;
  int checked = 0;
  for (int i = 0; i < 1000; ++i) {
    const TrackLabel label = i % 3 == 0   ? TrackLabel::kSe
                             : i % 3 == 1 ? TrackLabel::kCss
                                          : TrackLabel::kNss;
    const double snr = -5.0 + 25.0 * rng.uniform();
    const double sdr = -5.0 + 10.0 * rng.uniform();
    const desep::MixtureSpec spec = sim.draw_spec({label, snr, sdr}, &rng);
    const desep::SimulatedChunk chunk = sim.simulate(spec);

    if (label != TrackLabel::kSe) {
      const double got =
          10.0 * std::log10(power(chunk.references[0]) / power(chunk.references[1]));
      worst = std::max(worst, std::abs(got - sdr));
      ++checked;
    }
    if (label != TrackLabel::kCss) {
      Eigen::VectorXd speakers = chunk.references[0];
      for (size_t c = 1; c < chunk.references.size(); ++c)
        speakers += chunk.references[c];
      const Eigen::VectorXd residual =
          chunk.mixture.samples.row(0).transpose() - speakers;
      const double got = 10.0 * std::log10(power(speakers) / power(residual));
      worst = std::max(worst, std::abs(got - snr));
      ++checked;
    }
  }
  std::printf("  worst level deviation %.3e dB over %d measurements, %.1f s\n",
              worst, checked, seconds_since(t0));
  return worst < 1e-6;
}

// ---------------------------------------------------------------------------
// criterion 8: the staged schedule matches its published table row for row

bool c08_curriculum_schedule() {
  struct Row {
    int first, last;
    double se_lo, se_hi;
    bool has_css;
    double css_lo, css_hi;
    bool has_nss;
    double nss_snr_lo, nss_snr_hi, nss_sdr_lo, nss_sdr_hi;
  };
  const Row table[4] = {
      {1, 5, 5.0, 10.0, true, -2.0, 2.0, false, 0.0, 0.0, 0.0, 0.0},
      {6, 10, 0.0, 10.0, false, 0.0, 0.0, true, 15.0, 20.0, -2.0, 2.0},
      {11, 15, -2.0, 10.0, false, 0.0, 0.0, true, 10.0, 20.0, -4.0, 4.0},
      {16, 20, -5.0, 10.0, false, 0.0, 0.0, true, 5.0, 20.0, -5.0, 5.0},
  };

  const std::vector<desep::StageRow> schedule = desep::default_schedule();
  bool ok = schedule.size() == 4;
  for (size_t r = 0; ok && r < 4; ++r) {
    const desep::StageRow& s = schedule[r];
    const Row& w = table[r];
    ok = s.first_epoch == w.first && s.last_epoch == w.last && s.se_lo == w.se_lo &&
         s.se_hi == w.se_hi && s.has_css == w.has_css && s.css_lo == w.css_lo &&
         s.css_hi == w.css_hi && s.has_nss == w.has_nss &&
         s.nss_snr_lo == w.nss_snr_lo && s.nss_snr_hi == w.nss_snr_hi &&
         s.nss_sdr_lo == w.nss_sdr_lo && s.nss_sdr_hi == w.nss_sdr_hi;
    if (!ok) std::printf("  schedule row %zu differs from the table\n", r);
  }
  if (ok) std::printf("  all 4 schedule rows match the table field for field\n");

  Rng rng(808);
  int draws = 0;
  for (int epoch = 1; epoch <= 20 && ok; ++epoch) {
    const Row& w = table[(epoch - 1) / 5];
    std::set<TrackLabel> seen;
    for (int d = 0; d < 200 && ok; ++d) {
      const desep::ChunkDraw c = desep::sample_stage(epoch, schedule, true, &rng);
      seen.insert(c.label);
      ++draws;
      switch (c.label) {
        case TrackLabel::kSe:
          ok = c.snr_db >= w.se_lo && c.snr_db <= w.se_hi;
          break;
        case TrackLabel::kCss:
          ok = w.has_css && c.sdr_db >= w.css_lo && c.sdr_db <= w.css_hi;
          break;
        case TrackLabel::kNss:
          ok = w.has_nss && c.snr_db >= w.nss_snr_lo && c.snr_db <= w.nss_snr_hi &&
               c.sdr_db >= w.nss_sdr_lo && c.sdr_db <= w.nss_sdr_hi;
          break;
      }
      if (!ok) std::printf("  epoch %d draw out of range\n", epoch);
    }
    const std::set<TrackLabel> want = {TrackLabel::kSe,
                                       w.has_css ? TrackLabel::kCss : TrackLabel::kNss};
    if (ok && seen != want) {
      std::printf("  epoch %d drew the wrong track mix\n", epoch);
      ok = false;
    }
  }
  if (ok) std::printf("  %d draws across 20 epochs all inside their ranges\n", draws);
  return ok;
}

// ---------------------------------------------------------------------------
// criterion 9: attention over the direction grid recovers both arrival
// angles from oracle masks

bool c09_attention_doa() {
  const auto t0 = Clock::now();
  const desep::ArrayGeometry geom = desep::default_array();
  desep::StftConfig scfg;  // 512 / 256 at 16 kHz
  const int n = scfg.sample_rate / 2;
  const std::vector<double> grid = desep::doa_grid(36);
  const auto pairs = desep::default_mic_pairs();
  const int bins = scfg.num_bins();
  const ad::Tensor eye =
      ad::Tensor::from_matrix(Eigen::MatrixXd::Identity(bins, bins));

  int hits = 0, total = 0;
  for (int trial = 0; trial < 50; ++trial) {
    Rng rng(2600 + trial);
    const double theta0 = 360.0 * rng.uniform();
    const double sep = 60.0 + 120.0 * rng.uniform();
    const double sign = rng.uniform() < 0.5 ? 1.0 : -1.0;
    const double theta1 = std::fmod(theta0 + sign * sep + 720.0, 360.0);
    const double doas[2] = {theta0, theta1};

    Eigen::MatrixXd mix;
    Eigen::MatrixXcd source_spec[2];
    for (int c = 0; c < 2; ++c) {
      const Eigen::VectorXd s = desep::synth_speech(n, scfg.sample_rate, &rng);
      const Eigen::MatrixXd rir =
          desep::synth_plane_rir(geom, doas[c], scfg.sample_rate, 0.0, nullptr);
      const Eigen::MatrixXd img = desep::convolve_rir(s, rir);
      if (c == 0)
        mix = img;
      else
        mix += img;
      source_spec[c] = desep::stft(img.row(0).transpose(), scfg);
    }
    const desep::Spectrogram spec = desep::stft_multi(mix, scfg);
    const desep::AngleFeatureSet feats =
        desep::angle_features(spec, geom, grid, pairs, scfg);

    std::vector<ad::Tensor> cand;
    for (const Eigen::MatrixXd& f : feats.features)
      cand.push_back(desep::embed_frames(ad::Tensor::from_matrix(f), eye));

    // Dominance masks with a low-energy gate: contested and near-silent
    // cells carry mixture phase, so they stay out of the query.
    const Eigen::MatrixXd mag0 = source_spec[0].cwiseAbs();
    const Eigen::MatrixXd mag1 = source_spec[1].cwiseAbs();
    const double gate = 0.01 * std::max(mag0.maxCoeff(), mag1.maxCoeff());
    for (int c = 0; c < 2; ++c) {
      const Eigen::MatrixXd& mine = c == 0 ? mag0 : mag1;
      const Eigen::MatrixXd& other = c == 0 ? mag1 : mag0;
      const Eigen::MatrixXd mask =
          ((mine.array() > other.array()) && (mine.array() > gate))
              .cast<double>()
              .matrix();
      const ad::Tensor q = desep::embed_frames(ad::Tensor::from_matrix(mask), eye);
      const ad::Tensor w = desep::attention_weights_t(q, cand);
      int argmax = 0;
      for (int a = 1; a < 36; ++a)
        if (w.value()(a) > w.value()(argmax)) argmax = a;
      const int want = static_cast<int>(std::lround(doas[c] / 10.0)) % 36;
      ++total;
      if (argmax == want) ++hits;
    }
  }
  const double sec = seconds_since(t0);
  std::printf("  %d/%d speaker directions recovered, %.1f s\n", hits, total, sec);
  return hits >= 95 && sec < 120.0;
}

// ---------------------------------------------------------------------------
// criterion 10: the desk-scale model overfits a fixed two-speaker set

bool c10_toy_overfit() {
  const auto t0 = Clock::now();
  desep::PipelineConfig pcfg;
  pcfg.geometry = two_mic_rig();
  pcfg.stft.fft_size = 128;
  pcfg.stft.hop_size = 64;
  pcfg.stft.sample_rate = 8000;
  pcfg.network.encoder_channels = {8, 16, 32};
  pcfg.network.recurrent_hidden = 64;
  pcfg.network.projection_dim = 64;
  pcfg.network.extraction_hidden = 64;
  pcfg.attention.embedding_dim = 32;
  pcfg.attention.num_angle = 12;
  pcfg.attention.num_beam = 6;
  pcfg.attention.pairs = {{0, 1}};
  pcfg.wpe_mode = desep::WpeMode::kOff;
  pcfg.beam_feature = true;
  desep::Model model(pcfg, 10241);

  desep::SimulatorConfig scfg = tiny_sim(1.0);
  desep::ChunkSimulator sim(scfg);
  Rng rng(424);
  std::vector<desep::SimulatedChunk> chunks;
  for (int i = 0; i < 20; ++i) {
    const double sdr = -2.0 + 4.0 * rng.uniform();
    chunks.push_back(sim.simulate(sim.draw_spec({TrackLabel::kCss, 0.0, sdr}, &rng)));
  }

  double baseline = 0.0;
  for (const auto& chunk : chunks) {
    const Eigen::VectorXd mix0 = chunk.mixture.samples.row(0).transpose();
    baseline += 0.5 * (desep::si_snr_db(mix0, chunk.references[0]) +
                       desep::si_snr_db(mix0, chunk.references[1]));
  }
  baseline /= chunks.size();

  auto mean_pit_si_snr = [&]() {
    double sum = 0.0;
    for (const auto& chunk : chunks) {
      desep::PipelineForward fwd = model.forward(chunk.mixture, false);
      std::vector<Eigen::VectorXd> est;
      for (const desep::SpeakerOutput& s : fwd.speakers)
        est.push_back(s.wave.value().matrix());
      auto [loss, perm] = desep::pit_si_snr_loss(est, chunk.references);
      sum -= loss;
    }
    return sum / chunks.size();
  };

  desep::TrainConfig tcfg;
  tcfg.workers = 4;
  desep::Trainer trainer(&model, tcfg, scfg);

  std::printf("  mixture baseline %.2f dB\n", baseline);
  double score = baseline;
  int step = 0;
  while (step < 2000) {
    std::vector<desep::SimulatedChunk> batch;
    for (int k = 0; k < 4; ++k) batch.push_back(chunks[(step * 4 + k) % chunks.size()]);
    trainer.train_batch(batch);
    ++step;
    if (step % 50 == 0) {
      score = mean_pit_si_snr();
      std::printf("  step %d: mean pit si-snr %.2f dB (%+.2f dB)\n", step, score,
                  score - baseline);
      std::fflush(stdout);
      if (score - baseline >= 5.5) break;
    }
  }
  if (step % 50 != 0) score = mean_pit_si_snr();
  const double sec = seconds_since(t0);
  std::printf("  final %+.2f dB over the mixture after %d steps, %.0f s\n",
              score - baseline, step, sec);
  return score - baseline >= 5.0 && sec < 1800.0;
}

// ---------------------------------------------------------------------------
// criterion 11: the track-conditional loss feeds exactly the branches that
// own a target

bool c11_loss_routing() {
  desep::PipelineConfig pcfg = tiny_pipeline(desep::WpeMode::kOff);
  desep::ChunkSimulator sim(tiny_sim(0.25));
  bool ok = true;

  {
    desep::Model model(pcfg, 5150);
    const auto norms =
        loss_grad_norms(&model, make_chunk(sim, TrackLabel::kSe, 5.0, 0.0, 31));
    int zero_branch1 = 0, live_branch0 = 0;
    for (const auto& [name, norm] : norms) {
      if (branch_of(name) == 1) {
        if (norm != 0.0) {
          std::printf("  SE chunk leaked gradient into %s (norm %.3e)\n",
                      name.c_str(), norm);
          ok = false;
        } else {
          ++zero_branch1;
        }
      }
      if (branch_of(name) == 0 && norm > 0.0) ++live_branch0;
    }
    std::printf("  SE: %d second-branch tensors at exactly zero, %d first-branch live\n",
                zero_branch1, live_branch0);
    ok = ok && zero_branch1 > 0 && live_branch0 > 0;
  }

  for (TrackLabel label : {TrackLabel::kCss, TrackLabel::kNss}) {
    desep::Model model(pcfg, 5151);
    const auto norms = loss_grad_norms(
        &model, make_chunk(sim, label, 8.0, 1.0, label == TrackLabel::kCss ? 33 : 35));
    int live[2] = {0, 0};
    for (const auto& [name, norm] : norms) {
      const int b = branch_of(name);
      if (b >= 0 && norm > 0.0) ++live[b];
      if (b >= 0 && norm == 0.0) {
        std::printf("  %s chunk left %s without gradient\n",
                    desep::track_name(label), name.c_str());
        ok = false;
      }
    }
    std::printf("  %s: %d + %d branch tensors live\n", desep::track_name(label),
                live[0], live[1]);
    ok = ok && live[0] > 0 && live[1] > 0;
  }
  return ok;
}

// ---------------------------------------------------------------------------
// criterion 12: the command-line tools are bit-identical across same-seed
// sequential runs

int run_cli(const std::string& args) {
  const std::string cmd =
      std::string(DESEP_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  if (status == -1 || !WIFEXITED(status)) return -1;
  return WEXITSTATUS(status);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

bool same_bytes(const std::string& a, const std::string& b, const char* what,
                bool* ok) {
  const std::string ca = read_file(a), cb = read_file(b);
  const bool same = !ca.empty() && ca == cb;
  if (!same) {
    std::printf("  %s differs between runs (%zu vs %zu bytes)\n", what, ca.size(),
                cb.size());
    *ok = false;
  }
  return same;
}

bool c12_cli_determinism() {
  const std::string root = std::string(DESEP_TEST_TMP) + "/acceptance";
  fs::remove_all(root);
  fs::create_directories(root);

  const std::string cfg = root + "/toolkit.cfg";
  std::ofstream(cfg) << "[geometry]\n"
                        "positions = 0.05 0 0; -0.05 0 0\n"
                        "[stft]\n"
                        "fft_size = 32\n"
                        "hop_size = 16\n"
                        "sample_rate = 8000\n"
                        "[wpe]\n"
                        "taps = 2\n"
                        "delay = 1\n"
                        "[network]\n"
                        "encoder_channels = 2, 4\n"
                        "recurrent_hidden = 8\n"
                        "recurrent_layers = 1\n"
                        "projection_dim = 8\n"
                        "extraction_hidden = 8\n"
                        "extraction_layers = 1\n"
                        "variance_hidden = 2\n"
                        "[attention]\n"
                        "embedding_dim = 6\n"
                        "angle_candidates = 6\n"
                        "beam_candidates = 4\n"
                        "pairs = 0-1\n"
                        "[datasim]\n"
                        "chunk_seconds = 0.25\n"
                        "reverb = off\n"
                        "iso_noise = off\n"
                        "[training]\n"
                        "epochs = 1\n"
                        "chunks_per_epoch = 2\n"
                        "batch_chunks = 2\n"
                        "validation_chunks = 1\n"
                        "workers = 1\n"
                        "seed = 77\n";

  bool ok = true;
  for (const char* r : {"a", "b"}) {
    const int code = run_cli("simulate --config " + cfg + " --out " + root + "/sim_" +
                             r + " --count 3 --track nss --seed 5 --early");
    if (code != 0) {
      std::printf("  simulate run %s exited with %d\n", r, code);
      ok = false;
    }
  }
  if (ok) {
    int files = 0;
    for (const auto& entry : fs::directory_iterator(root + "/sim_a")) {
      const std::string name = entry.path().filename().string();
      same_bytes(entry.path().string(), root + "/sim_b/" + name,
                 ("simulate " + name).c_str(), &ok);
      ++files;
    }
    std::printf("  simulate: %d files byte-compared\n", files);
    ok = ok && files > 0;
  }

  for (const char* r : {"a", "b"}) {
    const int code =
        run_cli("train --config " + cfg + " --out " + root + "/train_" + r);
    if (code != 0) {
      std::printf("  train run %s exited with %d\n", r, code);
      ok = false;
    }
  }
  if (ok) {
    for (const char* f : {"metrics.csv", "val_metrics.csv", "last.ckpt", "last.ckpt.bin"})
      same_bytes(root + "/train_a/" + std::string(f), root + "/train_b/" + std::string(f),
                 f, &ok);
    if (ok) std::printf("  train: metrics and checkpoint byte-identical\n");
  }

  if (ok) {
    for (const char* r : {"a", "b"}) {
      const int code = run_cli("evaluate --config " + cfg + " --checkpoint " + root +
                               "/train_a/last.ckpt --manifest " + root +
                               "/sim_a/manifest.txt --out " + root + "/eval_" + r +
                               ".csv");
      if (code != 0) {
        std::printf("  evaluate run %s exited with %d\n", r, code);
        ok = false;
      }
    }
    if (same_bytes(root + "/eval_a.csv", root + "/eval_b.csv", "evaluate csv", &ok))
      std::printf("  evaluate: report byte-identical\n");
  }
  return ok;
}

// ---------------------------------------------------------------------------

struct Criterion {
  int id;
  const char* what;
  bool (*fn)();
};

const Criterion kCriteria[] = {
    {1, "transform round trip on random multichannel audio", c01_stft_round_trip},
    {2, "finite-difference agreement for every op and the full pipeline",
     c02_gradient_checks},
    {3, "linear prediction removes a synthetic echo", c03_echo_suppression},
    {4, "prediction residual orthogonal to the weighted context",
     c04_residual_orthogonality},
    {5, "permutation-invariant loss equals brute-force enumeration",
     c05_pit_matches_brute_force},
    {6, "si-snr closed form and scale invariance", c06_si_snr_closed_form},
    {7, "mixture levels hit their targets", c07_mixing_calibration},
    {8, "staged curriculum reproduces its table", c08_curriculum_schedule},
    {9, "attention recovers both arrival directions", c09_attention_doa},
    {10, "desk-scale model overfits twenty mixtures", c10_toy_overfit},
    {11, "track-conditional loss routes gradients by branch", c11_loss_routing},
    {12, "command-line runs are bit-identical under a fixed seed",
     c12_cli_determinism},
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) {
    char* end = nullptr;
    const long id = std::strtol(argv[i], &end, 10);
    if (end == argv[i] || *end != '\0' || id < 1 || id > 12) {
      std::fprintf(stderr, "usage: %s [criterion numbers 1..12]\n", argv[0]);
      return 2;
    }
    wanted.insert(static_cast<int>(id));
  }

  int failures = 0;
  for (const Criterion& c : kCriteria) {
    if (!wanted.empty() && wanted.count(c.id) == 0) continue;
    bool ok = false;
    try {
      ok = c.fn();
    } catch (const std::exception& e) {
      std::printf("  unexpected error: %s\n", e.what());
    }
    std::printf("[%s] criterion %d: %s\n", ok ? "PASS" : "FAIL", c.id, c.what);
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
