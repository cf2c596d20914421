// Copyright 2026 Desep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DESEP_SPATIAL_H_
#define DESEP_SPATIAL_H_

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "desep/geometry.h"
#include "desep/stft.h"
#include "desep/wpe.h"

namespace desep {

// Fixed delay-and-sum beams toward a grid of candidate directions.
struct BeamformerBank {
  // weights[i] is (num_bins, num_mics) for direction directions_deg[i];
  // each row f holds w_{i,f} with w^H d(theta_i, f) = 1.
  std::vector<Eigen::MatrixXcd> weights;
  std::vector<double> directions_deg;

  int num_beams() const { return static_cast<int>(weights.size()); }
};

// One (num_bins, num_frames) complex map per beam direction.
using BeamSet = std::vector<Eigen::MatrixXcd>;

// One (num_bins, num_frames) real map per candidate direction, values in
// [-1, 1] by construction (mean of cosines).
struct AngleFeatureSet {
  std::vector<Eigen::MatrixXd> features;
  std::vector<double> directions_deg;
  std::vector<std::pair<int, int>> pairs;
};

// Default mic pairs for the 4-mic rig.
std::vector<std::pair<int, int>> default_mic_pairs();

BeamformerBank design_das_bank(const ArrayGeometry& geom,
                               const std::vector<double>& grid_deg,
                               const StftConfig& stft_config);

// b_{i,t,f} = w_{i,f}^H y_{t,f} for every direction in the bank.
BeamSet beamform(const Spectrogram& spec, const BeamformerBank& bank);

// Raw angle(channel m) - angle(channel n) per time-frequency cell.
Eigen::MatrixXd observed_ipd(const Spectrogram& spec, int mic_m, int mic_n);

// a_{theta,f,t} = mean over pairs of cos(observed - reference) where the
// reference phase difference comes from the steering geometry.
AngleFeatureSet angle_features(const Spectrogram& spec, const ArrayGeometry& geom,
                               const std::vector<double>& grid_deg,
                               const std::vector<std::pair<int, int>>& pairs,
                               const StftConfig& stft_config);

// Center frequency of bin f in Hz.
double bin_frequency(int bin, const StftConfig& stft_config);

}  // namespace desep

#endif  // DESEP_SPATIAL_H_
