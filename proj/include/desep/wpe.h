// Copyright 2026 Desep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DESEP_WPE_H_
#define DESEP_WPE_H_

#include <Eigen/Dense>
#include <utility>
#include <vector>

namespace desep {

// Multi-channel spectrogram, one (num_bins, num_frames) matrix per channel.
using Spectrogram = std::vector<Eigen::MatrixXcd>;
// Prediction filters, one (M*K, M) matrix per frequency bin.
using FilterTaps = std::vector<Eigen::MatrixXcd>;

struct WpeConfig {
  int taps = 10;                    // K, filter length in frames
  int delay = 3;                    // prediction delay in frames
  int iterations = 3;               // alternation rounds in iterative mode
  double variance_floor = 1e-8;     // lower bound on the variance weights
  double diagonal_loading = 1e-5;   // relative to trace(R)/(M*K)
  void validate() const;
};

// Stacked delayed context per bin: column t holds
// [y_{t-delay}; y_{t-delay-1}; ...; y_{t-delay-taps+1}] across channels,
// zero-filled where the index runs off the front of the signal.
// Result is one (M*taps, T) matrix per bin. Requires T > delay + taps.
std::vector<Eigen::MatrixXcd> build_delayed_buffer(const Spectrogram& spec,
                                                   int delay, int taps);

// Per-bin weighted normal equations: R_f G_f = r_f with
//   R_f = sum_t b(t,f) b(t,f)^H / var(f,t)
//   r_f = sum_t b(t,f) y(t,f)^H / var(f,t)
// solved with diagonal loading delta * trace(R)/(M*K). Zero buffer yields
// exactly zero taps. variance is (num_bins, num_frames) and gets floored.
FilterTaps estimate_taps(const std::vector<Eigen::MatrixXcd>& buffer,
                         const Spectrogram& spec, const Eigen::MatrixXd& variance,
                         double diagonal_loading, double variance_floor = 1e-8,
                         int workers = 1);

// y'_{t,f} = y_{t,f} - G_f^H b(t,f); same shape as the input.
Spectrogram apply_taps(const Spectrogram& spec, const FilterTaps& taps,
                       int delay, int num_taps);

// (num_bins, num_frames) mean over channels of |Y|^2, floored.
Eigen::MatrixXd channel_average_power(const Spectrogram& spec, double floor);

// Classic alternating estimate: variance from the input power, then
// re-estimated from the output of each round. Filters are always applied
// to the original input. iterations = 0 returns the input untouched.
std::pair<Spectrogram, FilterTaps> iterative_wpe(const Spectrogram& spec,
                                                 const WpeConfig& config,
                                                 int workers = 1);

// One-shot solve with an externally supplied variance map (the network
// plugin path). The variance is floored at config.variance_floor.
std::pair<Spectrogram, FilterTaps> wpe_with_variance(const Spectrogram& spec,
                                                     const Eigen::MatrixXd& variance,
                                                     const WpeConfig& config,
                                                     int workers = 1);

}  // namespace desep

#endif  // DESEP_WPE_H_
