// Copyright 2026 Desep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DESEP_DATASIM_H_
#define DESEP_DATASIM_H_

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "desep/common.h"
#include "desep/geometry.h"
#include "desep/losses.h"
#include "desep/wav.h"

namespace desep {

struct SimulatorConfig {
  ArrayGeometry geometry = default_array();
  int sample_rate = 16000;
  double chunk_seconds = 4.0;
  bool reverb = true;             // synthetic echo tails behind the direct path
  double rt60_min = 0.2;
  double rt60_max = 0.5;
  bool iso_noise = true;          // diffuse wash on the noisy tracks
  double iso_snr_min = 15.0;
  double iso_snr_max = 20.0;
  double min_separation_deg = 20.0;
  std::string corpus;             // optional clip manifest; empty = synthetic
  std::string noise_corpus;       // optional noise manifest; empty = synthetic

  int chunk_samples() const {
    return static_cast<int>(sample_rate * chunk_seconds + 0.5);
  }
  void validate() const;
};

// Everything needed to rebuild one chunk bit for bit.
struct MixtureSpec {
  TrackLabel label = TrackLabel::kSe;
  std::vector<double> source_doas_deg;
  std::vector<int> source_ids;    // manifest rows, or synthetic stream ids
  double noise_doa_deg = 0.0;
  int noise_id = -1;
  bool use_noise = false;         // directional noise (the SE / NSS tracks)
  bool use_iso = false;
  double snr_db = 10.0;           // speakers vs directional noise, channel 0
  double sdr_db = 0.0;            // speaker 0 vs speaker 1, channel 0
  double iso_snr_db = 17.5;
  uint64_t seed = 0;

  void validate(const SimulatorConfig& config) const;
};

struct SimulatedChunk {
  Waveform mixture;                               // (mics, samples)
  std::vector<Eigen::VectorXd> references;        // channel-0 reverberant images
  std::vector<Eigen::VectorXd> early_references;  // direct + 50 ms reflections
  MixtureSpec spec;
};

struct CorpusEntry {
  std::string id;
  std::string path;
  double seconds = 0.0;
};
// Line-oriented manifest: "<id> <path> <seconds>" per clip, '#' comments.
std::vector<CorpusEntry> read_manifest(const std::string& path);

// Plane-wave impulse responses for every mic: windowed-sinc fractional
// delays around a common offset, plus an exponentially decaying diffuse
// tail when rt60 > 0. Rows are mics.
Eigen::MatrixXd synth_plane_rir(const ArrayGeometry& geom, double azimuth_deg,
                                int sample_rate, double rt60, Rng* rng);

// Image of a source through a multi-channel response: full convolution
// per channel, truncated to the source length.
Eigen::MatrixXd convolve_rir(const Eigen::VectorXd& source,
                             const Eigen::MatrixXd& rir);

// Zeroes every tap later than the per-channel direct-path peak plus the
// early window.
Eigen::MatrixXd early_part(const Eigen::MatrixXd& rir, int sample_rate,
                           double early_ms = 50.0);

// Scale on the noise that lands the requested SNR: sqrt(P_s / (P_n 10^(snr/10))).
double gain_for_snr(double signal_power, double noise_power, double snr_db);

// Deterministic speech-shaped test signal: harmonic bursts with moving
// pitch and spectral tilt plus a weak noise floor, peak-normalized.
Eigen::VectorXd synth_speech(int num_samples, int sample_rate, Rng* rng);

// Curriculum: per-epoch SNR/SDR ranges and which tracks are drawn.
struct StageRow {
  int first_epoch = 1;
  int last_epoch = 1;
  double se_lo = 0.0, se_hi = 0.0;          // SE noise SNR
  bool has_css = false;
  double css_lo = 0.0, css_hi = 0.0;        // CSS speaker SDR
  bool has_nss = false;
  double nss_snr_lo = 0.0, nss_snr_hi = 0.0;
  double nss_sdr_lo = 0.0, nss_sdr_hi = 0.0;
};
// The staged schedule over 20 epochs; later rows widen the ranges and swap
// the clean two-speaker track for the noisy one.
std::vector<StageRow> default_schedule();

struct ChunkDraw {
  TrackLabel label = TrackLabel::kSe;
  double snr_db = 0.0;
  double sdr_db = 0.0;
};
// Draws a track (even coin) and its SNR/SDR from the row covering `epoch`
// (1-based). With staged cleared, every epoch uses the final row. Epochs
// past the table clamp to the last row.
ChunkDraw sample_stage(int epoch, const std::vector<StageRow>& schedule, bool staged,
                       Rng* rng);

class ChunkSimulator {
 public:
  explicit ChunkSimulator(SimulatorConfig config);

  const SimulatorConfig& config() const { return config_; }

  // Fills directions, clip choices and the chunk seed for one draw.
  MixtureSpec draw_spec(const ChunkDraw& draw, Rng* rng) const;
  // Pure function of the spec; safe to run concurrently.
  SimulatedChunk simulate(const MixtureSpec& spec) const;

 private:
  Eigen::VectorXd fetch_clip(const std::vector<CorpusEntry>& corpus, int id,
                             bool speech, Rng* rng) const;

  SimulatorConfig config_;
  std::vector<CorpusEntry> corpus_;
  std::vector<CorpusEntry> noise_corpus_;
};

}  // namespace desep

#endif  // DESEP_DATASIM_H_
