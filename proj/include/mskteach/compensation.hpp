#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mskteach/intersensory.hpp"
#include "mskteach/trajectory.hpp"

namespace msk {

/// Muscle stiffness control offset, -(f - f_bias) / K [mm].
MuscleVector l_comp(const MuscleTensions& f, const StiffnessParams& p);

/// l_ref = h_l(theta_ref, f_ref) + l_comp(f_ref).
MuscleLengths target_muscle_length(const IntersensoryModel& model, const JointVector& theta_ref,
                                   const MuscleTensions& f_ref, const StiffnessParams& p);

struct LimiterParams {
  double f_max = 100.0;   // N
  double c_minus = 0.001;  // mm/N, relaxation release rate
  double c_plus = 0.003;   // mm/N, relaxation rate
  double c_gain = 2.0;     // mm/N, cap on the relaxation
  double period = kControlPeriod;  // s, one update per control tick
};

/// Muscle tension limiter: delta_e >= 0 is added to the commanded length so
/// that tension settles near f_max instead of growing without bound.
struct LimiterState {
  LimiterParams params;
  MuscleVector delta_e;

  LimiterState() = default;
  LimiterState(LimiterParams p, int muscles) : params(p), delta_e(MuscleVector::Zero(muscles)) {}
};

/// One update with the sensed tensions f.
LimiterState limiter_step(const LimiterState& state, const MuscleTensions& f);
void limiter_update(LimiterState& state, const MuscleTensions& f);

/// Length given back to re-create the taught tensions at the estimated pose:
/// -(h_l(theta_est, f_data) - h_l(theta_est, f_ref)), theta_est = h_theta(l_data, f_data).
MuscleVector delta_h(const IntersensoryModel& model, const TimedFrame& frame,
                     const std::optional<JointVector>& seed = std::nullopt);

/// Stiffness-control part of the taught elongation, (f_data - f_ref) / K.
MuscleVector delta_s(const TimedFrame& frame, const StiffnessParams& p);

enum class MethodVariant { ALL, W_HS, W_ES, W_HE, W_H, W_E, W_S, NONE, THETA };

inline constexpr MethodVariant kAllVariants[] = {MethodVariant::ALL,  MethodVariant::W_HS, MethodVariant::W_ES,
                                                 MethodVariant::W_HE, MethodVariant::W_H,  MethodVariant::W_E,
                                                 MethodVariant::W_S,  MethodVariant::NONE, MethodVariant::THETA};

/// "ALL", "W-HS", ..., "THETA".
std::string variant_name(MethodVariant v);
/// Accepts the names above; '_' may stand for '-' and case is ignored.
MethodVariant parse_variant(const std::string& name);

struct VariantTerms {
  bool e = false, h = false, s = false;
};
/// Which elongation terms an additive variant adds. Not meaningful for THETA.
VariantTerms variant_terms(MethodVariant v);

/// Per-frame elongation terms of a taught trajectory.
struct Elongations {
  std::vector<MuscleVector> e, h, s;
  std::vector<JointVector> theta_est;
};

Elongations compute_elongations(const Trajectory& taught, const IntersensoryModel& model, const StiffnessParams& p);

/// Per-frame reproduction commands. Muscles whose mask entry is false keep
/// the original l_ref.
std::vector<MuscleLengths> assemble_reproduction(const Trajectory& taught, MethodVariant variant,
                                                 const IntersensoryModel& model, const StiffnessParams& p,
                                                 const std::vector<bool>& mask = {});

/// Same, reusing precomputed elongation terms.
std::vector<MuscleLengths> assemble_reproduction(const Trajectory& taught, MethodVariant variant,
                                                 const IntersensoryModel& model, const StiffnessParams& p,
                                                 const Elongations& terms, const std::vector<bool>& mask = {});

}  // namespace msk
