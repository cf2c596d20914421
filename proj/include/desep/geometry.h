// Copyright 2026 Desep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DESEP_GEOMETRY_H_
#define DESEP_GEOMETRY_H_

#include <Eigen/Dense>
#include <vector>

namespace desep {

// Microphone positions in meters, rows are mics. All steering math is
// far-field with the array centroid as the phase reference and elevation 0.
struct ArrayGeometry {
  Eigen::MatrixXd mic_positions;  // (num_mics, 3)
  double speed_of_sound = 343.0;

  int num_mics() const { return static_cast<int>(mic_positions.rows()); }
  Eigen::RowVector3d centroid() const { return mic_positions.colwise().mean(); }
  void validate() const;
};

// num_mics equally spaced on a circle of the given radius in the z=0 plane,
// mic m at azimuth m * 360 / num_mics degrees.
ArrayGeometry circular_array(int num_mics, double radius_m);

// Default recording rig: 4 mics on a 0.05 m circle.
ArrayGeometry default_array();

// Uniformly spaced azimuth grid over [0, 360) degrees, starting at 0.
std::vector<double> doa_grid(int num_angles);

// Wrap into (-pi, pi].
double wrap_angle(double radians);
// Wrap into [0, 360).
double normalize_azimuth(double degrees);

// Unit propagation-plane direction toward the source, counter-clockwise
// from +x. Element m of the result is exp(-j 2 pi freq tau_m) where tau_m
// is the plane-wave delay of mic m relative to the centroid.
Eigen::VectorXcd steering_vector(const ArrayGeometry& geom, double azimuth_deg,
                                 double freq_hz);

// angle(d_m) - angle(d_n) wrapped to (-pi, pi].
double reference_ipd(const ArrayGeometry& geom, double azimuth_deg,
                     int mic_m, int mic_n, double freq_hz);

}  // namespace desep

#endif  // DESEP_GEOMETRY_H_
