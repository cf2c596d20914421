// Copyright 2026 Desep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "desep/geometry.h"

#include <cmath>
#include <stdexcept>

#include "desep/common.h"

namespace desep {

void ArrayGeometry::validate() const {
  if (mic_positions.rows() < 2 || mic_positions.cols() != 3)
    throw std::invalid_argument("geometry: need at least two mics with 3-D positions");
  if (!mic_positions.allFinite())
    throw std::invalid_argument("geometry: non-finite mic position");
  if (speed_of_sound <= 0.0)
    throw std::invalid_argument("geometry: speed of sound must be positive");
  for (Eigen::Index a = 0; a < mic_positions.rows(); ++a)
    for (Eigen::Index b = a + 1; b < mic_positions.rows(); ++b)
      if ((mic_positions.row(a) - mic_positions.row(b)).norm() < 1e-12)
        throw std::invalid_argument("geometry: duplicate mic positions");
}

ArrayGeometry circular_array(int num_mics, double radius_m) {
  if (num_mics < 2) throw std::invalid_argument("geometry: need at least two mics");
  if (radius_m <= 0.0) throw std::invalid_argument("geometry: radius must be positive");
  ArrayGeometry geom;
  geom.mic_positions.resize(num_mics, 3);
  for (int m = 0; m < num_mics; ++m) {
    const double az = 2.0 * kPi * m / num_mics;
    geom.mic_positions(m, 0) = radius_m * std::cos(az);
    geom.mic_positions(m, 1) = radius_m * std::sin(az);
    geom.mic_positions(m, 2) = 0.0;
  }
  return geom;
}

ArrayGeometry default_array() { return circular_array(4, 0.05); }

std::vector<double> doa_grid(int num_angles) {
  if (num_angles < 1) throw std::invalid_argument("geometry: empty direction grid");
  std::vector<double> grid(num_angles);
  for (int i = 0; i < num_angles; ++i) grid[i] = 360.0 * i / num_angles;
  return grid;
}

double wrap_angle(double radians) {
  double w = std::fmod(radians, 2.0 * kPi);
  if (w <= -kPi) w += 2.0 * kPi;
  if (w > kPi) w -= 2.0 * kPi;
  return w;
}

double normalize_azimuth(double degrees) {
  double w = std::fmod(degrees, 360.0);
  if (w < 0.0) w += 360.0;
  return w;
}

Eigen::VectorXcd steering_vector(const ArrayGeometry& geom, double azimuth_deg,
                                 double freq_hz) {
  geom.validate();
  if (!std::isfinite(azimuth_deg) || !std::isfinite(freq_hz) || freq_hz < 0.0)
    throw std::invalid_argument("steering_vector: bad azimuth or frequency");

  const double az = normalize_azimuth(azimuth_deg) * kPi / 180.0;
  const Eigen::RowVector3d toward(std::cos(az), std::sin(az), 0.0);
  const Eigen::RowVector3d ref = geom.centroid();

  const int M = geom.num_mics();
  Eigen::VectorXcd d(M);
  for (int m = 0; m < M; ++m) {
    // A wavefront reaches mics that sit farther along the source direction
    // first, so the delay relative to the centroid is negative there.
    const double tau = -((geom.mic_positions.row(m) - ref).dot(toward)) / geom.speed_of_sound;
    const double phase = -2.0 * kPi * freq_hz * tau;
    d(m) = std::complex<double>(std::cos(phase), std::sin(phase));
  }
  return d;
}

double reference_ipd(const ArrayGeometry& geom, double azimuth_deg,
                     int mic_m, int mic_n, double freq_hz) {
  const int M = geom.num_mics();
  if (mic_m < 0 || mic_m >= M || mic_n < 0 || mic_n >= M || mic_m == mic_n)
    throw std::invalid_argument("reference_ipd: bad mic pair");
  const Eigen::VectorXcd d = steering_vector(geom, azimuth_deg, freq_hz);
  return wrap_angle(std::arg(d(mic_m)) - std::arg(d(mic_n)));
}

}  // namespace desep
