// Copyright 2026 Desep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "desep/spatial.h"

#include <cmath>
#include <stdexcept>

#include "desep/common.h"

namespace desep {

std::vector<std::pair<int, int>> default_mic_pairs() {
  return {{0, 1}, {0, 2}, {1, 3}};
}

double bin_frequency(int bin, const StftConfig& stft_config) {
  return static_cast<double>(bin) * stft_config.sample_rate / stft_config.fft_size;
}

BeamformerBank design_das_bank(const ArrayGeometry& geom,
                               const std::vector<double>& grid_deg,
                               const StftConfig& stft_config) {
  geom.validate();
  if (grid_deg.empty()) throw std::invalid_argument("spatial: empty beam grid");
  const int F = stft_config.num_bins();
  const int M = geom.num_mics();

  BeamformerBank bank;
  bank.directions_deg = grid_deg;
  bank.weights.reserve(grid_deg.size());
  for (double theta : grid_deg) {
    Eigen::MatrixXcd w(F, M);
    for (int f = 0; f < F; ++f)
      w.row(f) = steering_vector(geom, theta, bin_frequency(f, stft_config)).transpose() /
                 static_cast<double>(M);
    bank.weights.push_back(std::move(w));
  }
  return bank;
}

BeamSet beamform(const Spectrogram& spec, const BeamformerBank& bank) {
  if (spec.empty()) throw std::invalid_argument("spatial: empty spectrogram");
  const Eigen::Index F = spec[0].rows();
  const Eigen::Index T = spec[0].cols();
  const int M = static_cast<int>(spec.size());
  if (bank.num_beams() == 0) throw std::invalid_argument("spatial: empty beam bank");
  if (bank.weights[0].cols() != M || bank.weights[0].rows() != F)
    throw std::invalid_argument("spatial: bank/spectrogram shape mismatch");

  BeamSet beams(bank.num_beams(), Eigen::MatrixXcd::Zero(F, T));
  for (int i = 0; i < bank.num_beams(); ++i) {
    for (int m = 0; m < M; ++m)
      beams[i] += bank.weights[i].col(m).conjugate().asDiagonal() * spec[m];
  }
  return beams;
}

Eigen::MatrixXd observed_ipd(const Spectrogram& spec, int mic_m, int mic_n) {
  const int M = static_cast<int>(spec.size());
  if (mic_m < 0 || mic_m >= M || mic_n < 0 || mic_n >= M || mic_m == mic_n)
    throw std::invalid_argument("spatial: bad mic pair");
  Eigen::MatrixXd ipd(spec[0].rows(), spec[0].cols());
  for (Eigen::Index f = 0; f < ipd.rows(); ++f)
    for (Eigen::Index t = 0; t < ipd.cols(); ++t)
      ipd(f, t) = std::arg(spec[mic_m](f, t)) - std::arg(spec[mic_n](f, t));
  return ipd;
}

AngleFeatureSet angle_features(const Spectrogram& spec, const ArrayGeometry& geom,
                               const std::vector<double>& grid_deg,
                               const std::vector<std::pair<int, int>>& pairs,
                               const StftConfig& stft_config) {
  if (pairs.empty()) throw std::invalid_argument("spatial: empty mic pair list");
  if (grid_deg.empty()) throw std::invalid_argument("spatial: empty direction grid");
  const Eigen::Index F = spec.empty() ? 0 : spec[0].rows();
  const Eigen::Index T = spec.empty() ? 0 : spec[0].cols();
  if (F != stft_config.num_bins())
    throw std::invalid_argument("spatial: spectrogram bins disagree with stft config");

  std::vector<Eigen::MatrixXd> observed;
  observed.reserve(pairs.size());
  for (const auto& [m, n] : pairs) observed.push_back(observed_ipd(spec, m, n));

  AngleFeatureSet set;
  set.directions_deg = grid_deg;
  set.pairs = pairs;
  set.features.reserve(grid_deg.size());
  for (double theta : grid_deg) {
    // Reference phase differences depend only on (direction, pair, bin),
    // so build them once per direction.
    Eigen::MatrixXd ref(pairs.size(), F);
    for (size_t p = 0; p < pairs.size(); ++p)
      for (Eigen::Index f = 0; f < F; ++f)
        ref(p, f) = reference_ipd(geom, theta, pairs[p].first, pairs[p].second,
                                  bin_frequency(static_cast<int>(f), stft_config));

    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(F, T);
    for (size_t p = 0; p < pairs.size(); ++p)
      for (Eigen::Index f = 0; f < F; ++f)
        for (Eigen::Index t = 0; t < T; ++t)
          a(f, t) += std::cos(observed[p](f, t) - ref(p, f));
    a /= static_cast<double>(pairs.size());
    set.features.push_back(std::move(a));
  }
  return set;
}

}  // namespace desep
