#pragma once

#include <cmath>
#include <optional>

#include "mskteach/arm_model.hpp"

namespace msk {

// Series nonlinear elastic element, f = k1*s + k2*s^2 for stretch s > 0 [mm].

inline double element_tension(double k1, double k2, double stretch) {
  return stretch > 0.0 ? (k1 + k2 * stretch) * stretch : 0.0;
}

/// Positive root of k2*s^2 + k1*s - f = 0, written to stay exact as k2 -> 0.
inline double element_stretch(double k1, double k2, double tension) {
  if (tension <= 0.0) return 0.0;
  return 2.0 * tension / (k1 + std::sqrt(k1 * k1 + 4.0 * k2 * tension));
}

/// Integral of the tension law over stretch [N*mm].
inline double element_energy(double k1, double k2, double stretch) {
  return stretch > 0.0 ? stretch * stretch * (0.5 * k1 + k2 * stretch / 3.0) : 0.0;
}

MuscleTensions elastic_tension(const ArmModel& model, const MuscleVector& stretch);
MuscleVector elastic_stretch_inverse(const ArmModel& model, const MuscleTensions& tension);

/// Tension and stored energy of one muscle as a function of its extension
/// e = path_length - commanded_length.
///
/// Without stiffness control the wire ends at the commanded motor length and
/// the element stretch is e. With muscle stiffness control the motor servo
/// lets out -l_comp(f) = (f - f_bias)/K extra wire, so the element stretch s
/// solves s + (f(s) - f_bias)/K = e. The servo acts as a spring in series
/// with the element and the pair stays conservative.
struct MuscleDrive {
  double k1;
  double k2;
  std::optional<StiffnessParams> servo;

  double stretch(double extension) const;
  double tension(double extension) const { return element_tension(k1, k2, stretch(extension)); }
  /// d tension / d extension.
  double stiffness(double extension) const;
  double energy(double extension) const;  // N*mm
  /// Motor-side wire length for a commanded length and current tension.
  double motor_length(double commanded, double tension) const;
};

MuscleDrive muscle_drive(const Muscle& muscle, const std::optional<StiffnessParams>& servo);

}  // namespace msk
