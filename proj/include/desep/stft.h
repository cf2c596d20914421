// Copyright 2026 Desep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DESEP_STFT_H_
#define DESEP_STFT_H_

#include <Eigen/Dense>
#include <vector>

namespace desep {

struct StftConfig {
  int fft_size = 512;
  int hop_size = 256;
  int sample_rate = 16000;

  int num_bins() const { return fft_size / 2 + 1; }
  // Full-coverage frame count: every input sample is windowed by at least
  // one frame, so the overlap-add inverse is exact end to end.
  int num_frames(int num_samples) const {
    return static_cast<int>((num_samples + hop_size - 1) / hop_size) + 1;
  }
  void validate() const;
};

// Hann window of the periodic flavor: w[i] = 0.5 - 0.5 cos(2 pi i / n).
std::vector<double> periodic_hann(int n);

// Analysis transform of one channel. Input is reflect-padded by fft_size/2
// on both sides, then sliced into frames of fft_size every hop_size samples
// (zero-filled past the end). Output is (num_bins, num_frames).
Eigen::MatrixXcd stft(const Eigen::VectorXd& signal, const StftConfig& config);

// Per-channel transform of (num_channels, num_samples) audio.
std::vector<Eigen::MatrixXcd> stft_multi(const Eigen::MatrixXd& signals,
                                         const StftConfig& config);

// Overlap-add inverse with window-square normalization. num_samples < 0
// selects the default length (num_frames - 1) * hop_size; otherwise the
// output is truncated or zero-padded to the requested length.
Eigen::VectorXd istft(const Eigen::MatrixXcd& spectrum, const StftConfig& config,
                      int num_samples = -1);

Eigen::MatrixXd istft_multi(const std::vector<Eigen::MatrixXcd>& spectra,
                            const StftConfig& config, int num_samples = -1);

}  // namespace desep

#endif  // DESEP_STFT_H_
