// Copyright 2026 Desep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "desep/wpe.h"

#include <stdexcept>
#include <string>

#include "desep/common.h"

namespace desep {

namespace {

void check_spec(const Spectrogram& spec) {
  if (spec.empty()) throw std::invalid_argument("wpe: empty spectrogram");
  for (const auto& ch : spec)
    if (ch.rows() != spec[0].rows() || ch.cols() != spec[0].cols())
      throw std::invalid_argument("wpe: ragged channel shapes");
}

// (M, T) view of one frequency bin across channels.
Eigen::MatrixXcd bin_matrix(const Spectrogram& spec, Eigen::Index f) {
  Eigen::MatrixXcd y(spec.size(), spec[0].cols());
  for (size_t m = 0; m < spec.size(); ++m) y.row(m) = spec[m].row(f);
  return y;
}

}  // namespace

void WpeConfig::validate() const {
  if (taps < 1) throw std::invalid_argument("wpe: taps must be >= 1");
  if (delay < 1) throw std::invalid_argument("wpe: delay must be >= 1");
  if (iterations < 0) throw std::invalid_argument("wpe: iterations must be >= 0");
  if (variance_floor <= 0.0) throw std::invalid_argument("wpe: variance floor must be > 0");
  if (diagonal_loading < 0.0) throw std::invalid_argument("wpe: loading must be >= 0");
}

std::vector<Eigen::MatrixXcd> build_delayed_buffer(const Spectrogram& spec,
                                                   int delay, int taps) {
  check_spec(spec);
  const int M = static_cast<int>(spec.size());
  const Eigen::Index F = spec[0].rows();
  const Eigen::Index T = spec[0].cols();
  if (delay < 1 || taps < 1) throw std::invalid_argument("wpe: delay and taps must be >= 1");
  if (T <= delay + taps)
    throw std::invalid_argument("wpe: need more frames than delay + taps");

  std::vector<Eigen::MatrixXcd> buffer(F);
  for (Eigen::Index f = 0; f < F; ++f) {
    Eigen::MatrixXcd b = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(M) * taps, T);
    for (Eigen::Index t = 0; t < T; ++t) {
      for (int k = 0; k < taps; ++k) {
        const Eigen::Index src = t - delay - k;
        if (src < 0) continue;
        for (int m = 0; m < M; ++m) b(static_cast<Eigen::Index>(k) * M + m, t) = spec[m](f, src);
      }
    }
    buffer[f] = std::move(b);
  }
  return buffer;
}

FilterTaps estimate_taps(const std::vector<Eigen::MatrixXcd>& buffer,
                         const Spectrogram& spec, const Eigen::MatrixXd& variance,
                         double diagonal_loading, double variance_floor,
                         int workers) {
  check_spec(spec);
  const int M = static_cast<int>(spec.size());
  const Eigen::Index F = spec[0].rows();
  const Eigen::Index T = spec[0].cols();
  if (static_cast<Eigen::Index>(buffer.size()) != F)
    throw std::invalid_argument("wpe: buffer/spec bin mismatch");
  if (variance.rows() != F || variance.cols() != T)
    throw std::invalid_argument("wpe: variance must be (num_bins, num_frames)");
  const Eigen::Index MK = buffer[0].rows();

  FilterTaps taps(F);
  parallel_for(F, workers, [&](int64_t f) {
    const Eigen::MatrixXcd& b = buffer[f];
    const Eigen::MatrixXcd y = bin_matrix(spec, f);
    Eigen::VectorXd w(T);
    for (Eigen::Index t = 0; t < T; ++t)
      w(t) = 1.0 / std::max(variance(f, t), variance_floor);

    const Eigen::MatrixXcd bw = b * w.asDiagonal();
    Eigen::MatrixXcd corr = bw * b.adjoint();           // (MK, MK)
    const Eigen::MatrixXcd cross = bw * y.adjoint();    // (MK, M)

    const double trace = corr.trace().real();
    Eigen::MatrixXcd g(MK, M);
    if (trace <= 0.0) {
      g.setZero();  // silent context: nothing to predict from
    } else {
      corr.diagonal().array() += diagonal_loading * trace / static_cast<double>(MK);
      Eigen::LDLT<Eigen::MatrixXcd> solver(corr);
      g = solver.solve(cross);
      if (solver.info() != Eigen::Success || !g.allFinite())
        throw NumericalError("wpe: ill-conditioned normal equations at bin " +
                             std::to_string(f));
    }
    taps[f] = std::move(g);
  });
  return taps;
}

Spectrogram apply_taps(const Spectrogram& spec, const FilterTaps& taps,
                       int delay, int num_taps) {
  check_spec(spec);
  const int M = static_cast<int>(spec.size());
  const Eigen::Index F = spec[0].rows();
  if (static_cast<Eigen::Index>(taps.size()) != F)
    throw std::invalid_argument("wpe: taps/spec bin mismatch");
  const auto buffer = build_delayed_buffer(spec, delay, num_taps);

  Spectrogram out(M, Eigen::MatrixXcd(F, spec[0].cols()));
  for (Eigen::Index f = 0; f < F; ++f) {
    if (taps[f].rows() != static_cast<Eigen::Index>(M) * num_taps || taps[f].cols() != M)
      throw std::invalid_argument("wpe: filter shape mismatch at bin " + std::to_string(f));
    const Eigen::MatrixXcd clean = bin_matrix(spec, f) - taps[f].adjoint() * buffer[f];
    for (int m = 0; m < M; ++m) out[m].row(f) = clean.row(m);
  }
  return out;
}

Eigen::MatrixXd channel_average_power(const Spectrogram& spec, double floor) {
  check_spec(spec);
  Eigen::MatrixXd power = Eigen::MatrixXd::Zero(spec[0].rows(), spec[0].cols());
  for (const auto& ch : spec) power += ch.cwiseAbs2();
  power /= static_cast<double>(spec.size());
  return power.cwiseMax(floor);
}

std::pair<Spectrogram, FilterTaps> iterative_wpe(const Spectrogram& spec,
                                                 const WpeConfig& config,
                                                 int workers) {
  config.validate();
  check_spec(spec);
  const int M = static_cast<int>(spec.size());
  const Eigen::Index F = spec[0].rows();

  if (config.iterations == 0) {
    FilterTaps zero(F, Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(M) * config.taps, M));
    return {spec, zero};
  }

  const auto buffer = build_delayed_buffer(spec, config.delay, config.taps);
  Eigen::MatrixXd variance = channel_average_power(spec, config.variance_floor);
  Spectrogram out;
  FilterTaps taps;
  for (int it = 0; it < config.iterations; ++it) {
    taps = estimate_taps(buffer, spec, variance, config.diagonal_loading,
                         config.variance_floor, workers);
    out = apply_taps(spec, taps, config.delay, config.taps);
    variance = channel_average_power(out, config.variance_floor);
  }
  return {std::move(out), std::move(taps)};
}

std::pair<Spectrogram, FilterTaps> wpe_with_variance(const Spectrogram& spec,
                                                     const Eigen::MatrixXd& variance,
                                                     const WpeConfig& config,
                                                     int workers) {
  config.validate();
  const auto buffer = build_delayed_buffer(spec, config.delay, config.taps);
  FilterTaps taps = estimate_taps(buffer, spec, variance, config.diagonal_loading,
                                  config.variance_floor, workers);
  Spectrogram out = apply_taps(spec, taps, config.delay, config.taps);
  return {std::move(out), std::move(taps)};
}

}  // namespace desep
