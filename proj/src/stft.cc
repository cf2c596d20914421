// Copyright 2026 Desep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "desep/stft.h"

#include <cmath>
#include <stdexcept>

#include "desep/common.h"
#include "desep/fft.h"

namespace desep {

namespace {

// Mirror an out-of-range index back into [0, n) without repeating the edge
// sample, i.e. numpy-style "reflect" with period 2n - 2.
Eigen::Index reflect_index(Eigen::Index i, Eigen::Index n) {
  if (n == 1) return 0;
  const Eigen::Index period = 2 * (n - 1);
  i = ((i % period) + period) % period;
  return i < n ? i : period - i;
}

}  // namespace

void StftConfig::validate() const {
  if (!is_power_of_two(fft_size))
    throw std::invalid_argument("stft: fft_size must be a power of two");
  if (hop_size < 1 || hop_size >= fft_size || fft_size % hop_size != 0)
    throw std::invalid_argument(
        "stft: hop_size must divide fft_size and be smaller than it");
  if (sample_rate < 1) throw std::invalid_argument("stft: bad sample rate");
}

std::vector<double> periodic_hann(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / n);
  return w;
}

Eigen::MatrixXcd stft(const Eigen::VectorXd& signal, const StftConfig& config) {
  config.validate();
  const Eigen::Index len = signal.size();
  if (len < 1) throw std::invalid_argument("stft: empty signal");

  const int nfft = config.fft_size;
  const int hop = config.hop_size;
  const int pad = nfft / 2;
  const int frames = config.num_frames(static_cast<int>(len));
  const auto window = periodic_hann(nfft);

  Eigen::MatrixXcd out(config.num_bins(), frames);
  std::vector<double> frame(nfft);
  for (int t = 0; t < frames; ++t) {
    const Eigen::Index start = static_cast<Eigen::Index>(t) * hop - pad;
    for (int i = 0; i < nfft; ++i) {
      const Eigen::Index idx = start + i;
      double v;
      if (idx < 0) {
        v = signal(reflect_index(idx, len));
      } else if (idx < len) {
        v = signal(idx);
      } else if (idx < len + pad) {
        v = signal(reflect_index(idx, len));
      } else {
        v = 0.0;  // past the right pad: zero-fill to the frame grid
      }
      frame[i] = v * window[i];
    }
    const auto spec = rfft(frame);
    for (int f = 0; f < config.num_bins(); ++f) out(f, t) = spec[f];
  }
  return out;
}

std::vector<Eigen::MatrixXcd> stft_multi(const Eigen::MatrixXd& signals,
                                         const StftConfig& config) {
  std::vector<Eigen::MatrixXcd> out;
  out.reserve(signals.rows());
  for (Eigen::Index m = 0; m < signals.rows(); ++m)
    out.push_back(stft(signals.row(m).transpose(), config));
  return out;
}

Eigen::VectorXd istft(const Eigen::MatrixXcd& spectrum, const StftConfig& config,
                      int num_samples) {
  config.validate();
  const int nfft = config.fft_size;
  const int hop = config.hop_size;
  const int pad = nfft / 2;
  const int frames = static_cast<int>(spectrum.cols());
  if (spectrum.rows() != config.num_bins())
    throw std::invalid_argument("istft: spectrum rows must equal fft_size/2+1");
  if (frames < 1) throw std::invalid_argument("istft: no frames");

  const auto window = periodic_hann(nfft);
  const Eigen::Index padded = static_cast<Eigen::Index>(frames - 1) * hop + nfft;
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(padded);
  Eigen::VectorXd wsum = Eigen::VectorXd::Zero(padded);

  std::vector<std::complex<double>> bins(config.num_bins());
  for (int t = 0; t < frames; ++t) {
    for (int f = 0; f < config.num_bins(); ++f) bins[f] = spectrum(f, t);
    const auto frame = irfft(bins, nfft);
    const Eigen::Index start = static_cast<Eigen::Index>(t) * hop;
    for (int i = 0; i < nfft; ++i) {
      acc(start + i) += frame[i] * window[i];
      wsum(start + i) += window[i] * window[i];
    }
  }

  if (num_samples < 0) num_samples = (frames - 1) * hop;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(num_samples);
  const Eigen::Index stop = std::min<Eigen::Index>(num_samples, padded - pad);
  for (Eigen::Index i = 0; i < stop; ++i) {
    const double w = wsum(pad + i);
    if (w <= 1e-8)
      throw NumericalError("istft: window normalizer underflow");
    out(i) = acc(pad + i) / w;
  }
  return out;
}

Eigen::MatrixXd istft_multi(const std::vector<Eigen::MatrixXcd>& spectra,
                            const StftConfig& config, int num_samples) {
  if (spectra.empty()) throw std::invalid_argument("istft: no channels");
  Eigen::VectorXd first = istft(spectra[0], config, num_samples);
  Eigen::MatrixXd out(spectra.size(), first.size());
  out.row(0) = first.transpose();
  for (size_t m = 1; m < spectra.size(); ++m)
    out.row(m) = istft(spectra[m], config, static_cast<int>(first.size())).transpose();
  return out;
}

}  // namespace desep
