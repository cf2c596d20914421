// Copyright 2026 Desep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DESEP_WAV_H_
#define DESEP_WAV_H_

#include <Eigen/Core>
#include <string>

namespace desep {

// Multi-channel time-domain audio. samples is (num_channels, num_samples),
// nominal range [-1, 1].
struct Waveform {
  Eigen::MatrixXd samples;
  int sample_rate = 16000;

  int num_channels() const { return static_cast<int>(samples.rows()); }
  Eigen::Index num_samples() const { return samples.cols(); }

  // throws std::invalid_argument on empty or non-finite data
  void validate() const;
};

enum class WavEncoding { kPcm16, kFloat32 };

// RIFF/WAVE reader. Accepts 16-bit PCM and 32-bit IEEE float, any channel
// count, little-endian only.
Waveform read_wav(const std::string& path);

void write_wav(const std::string& path, const Waveform& wave,
               WavEncoding encoding = WavEncoding::kFloat32);

}  // namespace desep

#endif  // DESEP_WAV_H_
