#include "mskteach/elastic.hpp"

namespace msk {

MuscleTensions elastic_tension(const ArmModel& model, const MuscleVector& stretch) {
  if (stretch.size() != model.muscle_count()) throw DomainError("stretch vector has the wrong muscle count");
  MuscleTensions f(stretch.size());
  for (int i = 0; i < stretch.size(); ++i) {
    if (!std::isfinite(stretch(i))) throw DomainError("stretch must be finite");
    const Muscle& m = model.muscles()[i];
    f(i) = element_tension(m.k1, m.k2, stretch(i));
  }
  return f;
}

MuscleVector elastic_stretch_inverse(const ArmModel& model, const MuscleTensions& tension) {
  if (tension.size() != model.muscle_count()) throw DomainError("tension vector has the wrong muscle count");
  if (!tension.allFinite() || (tension.array() < 0.0).any()) throw DomainError("tensions must be finite and >= 0");
  MuscleVector s(tension.size());
  for (int i = 0; i < tension.size(); ++i) {
    const Muscle& m = model.muscles()[i];
    s(i) = element_stretch(m.k1, m.k2, tension(i));
  }
  return s;
}

double MuscleDrive::stretch(double extension) const {
  if (!servo) return extension > 0.0 ? extension : 0.0;
  const double c = extension + servo->f_bias / servo->K;
  if (c <= 0.0) return 0.0;
  const double a = k2 / servo->K;
  const double b = 1.0 + k1 / servo->K;
  return 2.0 * c / (b + std::sqrt(b * b + 4.0 * a * c));
}

double MuscleDrive::stiffness(double extension) const {
  const double s = stretch(extension);
  if (s <= 0.0) return 0.0;
  const double element = k1 + 2.0 * k2 * s;
  return servo ? element / (1.0 + element / servo->K) : element;
}

double MuscleDrive::energy(double extension) const {
  const double s = stretch(extension);
  const double stored = element_energy(k1, k2, s);
  if (!servo) return stored;
  const double f = element_tension(k1, k2, s);
  return stored + f * f / (2.0 * servo->K);
}

double MuscleDrive::motor_length(double commanded, double tension) const {
  return servo ? commanded + (tension - servo->f_bias) / servo->K : commanded;
}

MuscleDrive muscle_drive(const Muscle& muscle, const std::optional<StiffnessParams>& servo) {
  if (servo && !(servo->K > 0.0)) throw DomainError("stiffness coefficient K must be positive");
  return {muscle.k1, muscle.k2, servo};
}

}  // namespace msk
