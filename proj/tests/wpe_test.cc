// Copyright 2026 Desep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <complex>
#include <vector>

#include "desep/common.h"
#include "desep/datasim.h"
#include "desep/losses.h"
#include "desep/stft.h"
#include "desep/wpe.h"
#include "doctest.h"

using namespace desep;

namespace {

Spectrogram random_spec(int channels, int bins, int frames, uint64_t seed) {
  Rng rng(seed);
  Spectrogram spec(channels, Eigen::MatrixXcd(bins, frames));
  for (auto& ch : spec)
    for (Eigen::Index i = 0; i < ch.size(); ++i)
      ch.reshaped()(i) = std::complex<double>(rng.normal(), rng.normal());
  return spec;
}

// Dense reference solve for one bin, straight from the definition.
Eigen::MatrixXcd oracle_taps(const Eigen::MatrixXcd& buffer_bin,
                             const Eigen::RowVectorXd& variance_bin,
                             const Eigen::MatrixXcd& spec_bin, double loading) {
  const Eigen::Index mk = buffer_bin.rows();
  Eigen::MatrixXcd R = Eigen::MatrixXcd::Zero(mk, mk);
  Eigen::MatrixXcd r = Eigen::MatrixXcd::Zero(mk, spec_bin.rows());
  for (Eigen::Index t = 0; t < buffer_bin.cols(); ++t) {
    const double w = 1.0 / std::max(variance_bin(t), 1e-8);
    R += w * buffer_bin.col(t) * buffer_bin.col(t).adjoint();
    r += w * buffer_bin.col(t) * spec_bin.col(t).adjoint();
  }
  const double load = loading * R.trace().real() / static_cast<double>(mk);
  R += load * Eigen::MatrixXcd::Identity(mk, mk);
  return R.fullPivLu().solve(r);
}

}  // namespace

TEST_SUITE_BEGIN("wpe");

TEST_CASE("delayed buffer stacks the context with zero fill") {
  Spectrogram spec = random_spec(2, 1, 4, 41);
  const auto buffer = build_delayed_buffer(spec, 1, 2);
  REQUIRE(buffer.size() == 1);
  const Eigen::MatrixXcd& b = buffer[0];
  REQUIRE(b.rows() == 4);  // M * K
  REQUIRE(b.cols() == 4);
  // column t = [y_{t-1} (both mics); y_{t-2} (both mics)]
  CHECK(b.col(0).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  CHECK(std::abs(b(0, 1) - spec[0](0, 0)) == doctest::Approx(0.0));
  CHECK(std::abs(b(1, 1) - spec[1](0, 0)) == doctest::Approx(0.0));
  CHECK(std::abs(b(2, 1)) == doctest::Approx(0.0));  // t-2 runs off the front
  CHECK(std::abs(b(0, 3) - spec[0](0, 2)) == doctest::Approx(0.0));
  CHECK(std::abs(b(1, 3) - spec[1](0, 2)) == doctest::Approx(0.0));
  CHECK(std::abs(b(2, 3) - spec[0](0, 1)) == doctest::Approx(0.0));
  CHECK(std::abs(b(3, 3) - spec[1](0, 1)) == doctest::Approx(0.0));
}

TEST_CASE("delayed buffer requires enough frames") {
  Spectrogram spec = random_spec(1, 2, 4, 43);
  CHECK_THROWS_AS(build_delayed_buffer(spec, 2, 2), std::invalid_argument);
  CHECK_NOTHROW(build_delayed_buffer(spec, 1, 2));
}

TEST_CASE("single-channel single-tap solve matches the scalar closed form") {
  // one bin, frames [1, 2, 3], delay 1, one tap: the context is [0, 1, 2],
  // so R = 5, r = 0*1 + 1*2 + 2*3 = 8 and G = 8 / (5 (1 + loading))
  Spectrogram spec(1, Eigen::MatrixXcd(1, 3));
  spec[0] << 1.0, 2.0, 3.0;
  const auto buffer = build_delayed_buffer(spec, 1, 1);
  const Eigen::MatrixXd variance = Eigen::MatrixXd::Ones(1, 3);
  for (double loading : {0.0, 1e-5, 0.5}) {
    const auto taps = estimate_taps(buffer, spec, variance, loading);
    REQUIRE(taps.size() == 1);
    const double g = 8.0 / (5.0 * (1.0 + loading));
    CHECK(taps[0](0, 0).real() == doctest::Approx(g).epsilon(1e-12));
    CHECK(taps[0](0, 0).imag() == doctest::Approx(0.0));
    const Spectrogram out = apply_taps(spec, taps, 1, 1);
    CHECK(out[0](0, 0).real() == doctest::Approx(1.0));
    CHECK(out[0](0, 1).real() == doctest::Approx(2.0 - g * 1.0));
    CHECK(out[0](0, 2).real() == doctest::Approx(3.0 - g * 2.0));
  }
}

TEST_CASE("solver matches a dense per-bin reference") {
  const int M = 2, K = 3, delay = 2, bins = 4, frames = 16;
  Spectrogram spec = random_spec(M, bins, frames, 47);
  Eigen::MatrixXd variance(bins, frames);
  Rng rng(48);
  for (auto& v : variance.reshaped()) v = 0.2 + rng.uniform();
  const auto buffer = build_delayed_buffer(spec, delay, K);
  const double loading = 1e-5;
  const auto taps = estimate_taps(buffer, spec, variance, loading);
  REQUIRE(taps.size() == bins);
  for (int f = 0; f < bins; ++f) {
    Spectrogram one_bin;
    for (int m = 0; m < M; ++m) one_bin.push_back(spec[m].row(f));
    Eigen::MatrixXcd spec_bin(M, frames);
    for (int m = 0; m < M; ++m) spec_bin.row(m) = spec[m].row(f);
    const Eigen::MatrixXcd want =
        oracle_taps(buffer[f], variance.row(f), spec_bin, loading);
    CHECK((taps[f] - want).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("residual is orthogonal to the context without loading") {
  const int M = 2, K = 3, delay = 2, bins = 3, frames = 40;
  Spectrogram spec = random_spec(M, bins, frames, 53);
  Eigen::MatrixXd variance(bins, frames);
  Rng rng(54);
  for (auto& v : variance.reshaped()) v = 0.5 + rng.uniform();
  const auto buffer = build_delayed_buffer(spec, delay, K);
  const auto taps = estimate_taps(buffer, spec, variance, /*diagonal_loading=*/0.0);
  const Spectrogram out = apply_taps(spec, taps, delay, K);
  for (int f = 0; f < bins; ++f) {
    Eigen::MatrixXcd residual(M, frames);
    for (int m = 0; m < M; ++m) residual.row(m) = out[m].row(f);
    Eigen::MatrixXcd cross = Eigen::MatrixXcd::Zero(M * K, M);
    for (int t = 0; t < frames; ++t)
      cross += buffer[f].col(t) * residual.col(t).adjoint() / variance(f, t);
    CHECK(cross.cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("zero context keeps the filters at exactly zero") {
  Spectrogram spec = random_spec(2, 2, 8, 59);
  // wipe everything the buffer can see except the last frame
  for (auto& ch : spec) ch.leftCols(7).setZero();
  const auto buffer = build_delayed_buffer(spec, 3, 4);
  const auto taps =
      estimate_taps(buffer, spec, Eigen::MatrixXd::Ones(2, 8), 1e-5);
  for (const auto& g : taps) CHECK(g.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("no iterations returns the input untouched") {
  Spectrogram spec = random_spec(2, 5, 20, 61);
  WpeConfig cfg;
  cfg.iterations = 0;
  auto [out, taps] = iterative_wpe(spec, cfg);
  for (int m = 0; m < 2; ++m)
    CHECK((out[m] - spec[m]).cwiseAbs().maxCoeff() == 0.0);
  for (const auto& g : taps) CHECK(g.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("channel average power with floor") {
  Spectrogram spec(2, Eigen::MatrixXcd(1, 2));
  spec[0] << std::complex<double>(3.0, 4.0), 0.0;
  spec[1] << std::complex<double>(0.0, 1.0), 0.0;
  const Eigen::MatrixXd p = channel_average_power(spec, 1e-8);
  CHECK(p(0, 0) == doctest::Approx((25.0 + 1.0) / 2.0));
  CHECK(p(0, 1) == doctest::Approx(1e-8));
}

TEST_CASE("external variance path equals the first alternation round") {
  Spectrogram spec = random_spec(2, 6, 30, 67);
  WpeConfig cfg;
  cfg.taps = 4;
  cfg.delay = 2;
  cfg.iterations = 1;
  auto [iter_out, iter_taps] = iterative_wpe(spec, cfg);
  const Eigen::MatrixXd variance =
      channel_average_power(spec, cfg.variance_floor);
  auto [ext_out, ext_taps] = wpe_with_variance(spec, variance, cfg);
  for (size_t m = 0; m < 2; ++m)
    CHECK((iter_out[m] - ext_out[m]).cwiseAbs().maxCoeff() < 1e-12);
  for (size_t f = 0; f < iter_taps.size(); ++f)
    CHECK((iter_taps[f] - ext_taps[f]).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("bins are processed independently") {
  Spectrogram spec = random_spec(2, 5, 25, 71);
  WpeConfig cfg;
  cfg.taps = 3;
  cfg.delay = 2;
  auto [out, taps] = iterative_wpe(spec, cfg);
  // permute the bins, rerun, and compare against the permuted output
  const std::vector<int> perm = {4, 2, 0, 3, 1};
  Spectrogram shuffled = spec;
  for (int m = 0; m < 2; ++m)
    for (int f = 0; f < 5; ++f) shuffled[m].row(f) = spec[m].row(perm[f]);
  auto [out2, taps2] = iterative_wpe(shuffled, cfg);
  for (int m = 0; m < 2; ++m)
    for (int f = 0; f < 5; ++f)
      CHECK((out2[m].row(f) - out[m].row(perm[f])).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("worker count does not change the filters") {
  Spectrogram spec = random_spec(3, 9, 40, 73);
  WpeConfig cfg;
  auto [out1, taps1] = iterative_wpe(spec, cfg, /*workers=*/1);
  auto [out4, taps4] = iterative_wpe(spec, cfg, /*workers=*/4);
  for (int m = 0; m < 3; ++m)
    CHECK((out1[m] - out4[m]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fixed half-gain tap on a ramp") {
  Spectrogram spec(1, Eigen::MatrixXcd(2, 3));
  spec[0].row(0) << 1.0, 2.0, 3.0;
  spec[0].row(1) << 1.0, 2.0, 3.0;
  FilterTaps taps(2, Eigen::MatrixXcd::Constant(1, 1, 0.5));
  const Spectrogram out = apply_taps(spec, taps, 1, 1);
  for (int f = 0; f < 2; ++f) {
    CHECK(out[0](f, 0).real() == doctest::Approx(1.0));
    CHECK(out[0](f, 1).real() == doctest::Approx(1.5));
    CHECK(out[0](f, 2).real() == doctest::Approx(2.0));
  }
}

TEST_CASE("statistically white frames leave the filters small") {
  Spectrogram spec = random_spec(1, 8, 2000, 101);
  const auto buffer = build_delayed_buffer(spec, 3, 4);
  const auto taps =
      estimate_taps(buffer, spec, Eigen::MatrixXd::Ones(8, 2000), 1e-5);
  int small_bins = 0;
  for (const auto& g : taps)
    if (g.cwiseAbs().maxCoeff() < 0.1) ++small_bins;
  CHECK(small_bins >= 7);  // 95% of 8 bins, rounded down

  WpeConfig cfg;
  auto [out, itaps] = iterative_wpe(spec, cfg);
  const double ratio = out[0].squaredNorm() / spec[0].squaredNorm();
  CHECK(std::abs(10.0 * std::log10(ratio)) < 0.5);
}

TEST_CASE("a delayed echo is suppressed") {
  // direct signal: burst-modulated noise; echo injected per bin in the
  // transform domain at lag 4 frames, inside the prediction window
  const int rate = 8000;
  Rng rng(79);
  const int n = 2 * rate;
  Eigen::VectorXd clean(n);
  double env = 1.0;
  for (int i = 0; i < n; ++i) {
    if (i % (rate / 12) == 0) env = std::pow(10.0, -rng.uniform());
    clean(i) = env * rng.normal();
  }
  StftConfig stft_cfg;
  stft_cfg.fft_size = 256;
  stft_cfg.hop_size = 128;
  stft_cfg.sample_rate = rate;
  const Eigen::MatrixXcd S = stft(clean, stft_cfg);
  const int lag = 4;
  Spectrogram noisy(1, S);
  noisy[0].rightCols(S.cols() - lag) += 0.6 * S.leftCols(S.cols() - lag);

  WpeConfig cfg;
  cfg.variance_floor = 1e-2;  // scaled to the unit-level fixture
  auto [out_spec, taps] = iterative_wpe(noisy, cfg);
  const Eigen::VectorXd direct = istft(S, stft_cfg, n);
  const double before = si_snr_db(istft(noisy[0], stft_cfg, n), direct);
  const double after = si_snr_db(istft(out_spec[0], stft_cfg, n), direct);
  CHECK(after - before >= 5.0);
}

TEST_CASE("config validation") {
  WpeConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.taps = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = WpeConfig{};
  cfg.delay = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = WpeConfig{};
  cfg.iterations = -1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = WpeConfig{};
  cfg.variance_floor = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = WpeConfig{};
  cfg.diagonal_loading = -1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_SUITE_END();
