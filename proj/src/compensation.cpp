#include "mskteach/compensation.hpp"

#include <algorithm>
#include <cctype>

namespace msk {

MuscleVector l_comp(const MuscleTensions& f, const StiffnessParams& p) {
  if (!(p.K > 0.0)) throw DomainError("stiffness coefficient K must be positive");
  return -(f.array() - p.f_bias).matrix() / p.K;
}

MuscleLengths target_muscle_length(const IntersensoryModel& model, const JointVector& theta_ref,
                                   const MuscleTensions& f_ref, const StiffnessParams& p) {
  return model.eval_hl(theta_ref, f_ref) + l_comp(f_ref, p);
}

void limiter_update(LimiterState& state, const MuscleTensions& f) {
  const LimiterParams& c = state.params;
  if (f.size() != state.delta_e.size()) throw DomainError("limiter tension vector has the wrong size");
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    double& dl = state.delta_e(i);
    const double d = std::abs(f(i) - c.f_max);
    if (f(i) > c.f_max)
      dl += std::min(c.c_gain * d - dl, c.c_plus * d);
    else
      dl += std::max(-dl, -c.c_minus * d);
  }
}

LimiterState limiter_step(const LimiterState& state, const MuscleTensions& f) {
  LimiterState next = state;
  limiter_update(next, f);
  return next;
}

MuscleVector delta_h(const IntersensoryModel& model, const TimedFrame& frame, const std::optional<JointVector>& seed) {
  const JointVector est = model.eval_htheta(frame.l_data, frame.f_data, seed ? seed : frame.theta_ref);
  return -(model.eval_hl(est, frame.f_data) - model.eval_hl(est, frame.f_ref));
}

MuscleVector delta_s(const TimedFrame& frame, const StiffnessParams& p) {
  if (!(p.K > 0.0)) throw DomainError("stiffness coefficient K must be positive");
  return (frame.f_data - frame.f_ref) / p.K;
}

std::string variant_name(MethodVariant v) {
  switch (v) {
    case MethodVariant::ALL: return "ALL";
    case MethodVariant::W_HS: return "W-HS";
    case MethodVariant::W_ES: return "W-ES";
    case MethodVariant::W_HE: return "W-HE";
    case MethodVariant::W_H: return "W-H";
    case MethodVariant::W_E: return "W-E";
    case MethodVariant::W_S: return "W-S";
    case MethodVariant::NONE: return "NONE";
    case MethodVariant::THETA: return "THETA";
  }
  return "?";
}

MethodVariant parse_variant(const std::string& name) {
  std::string key;
  for (char c : name) key += (c == '_') ? '-' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  for (MethodVariant v : kAllVariants)
    if (variant_name(v) == key) return v;
  throw DomainError("unknown method variant '" + name + "'");
}

VariantTerms variant_terms(MethodVariant v) {
  switch (v) {
    case MethodVariant::ALL: return {true, true, true};
    case MethodVariant::W_HS: return {false, true, true};
    case MethodVariant::W_ES: return {true, false, true};
    case MethodVariant::W_HE: return {true, true, false};
    case MethodVariant::W_H: return {false, true, false};
    case MethodVariant::W_E: return {true, false, false};
    case MethodVariant::W_S: return {false, false, true};
    case MethodVariant::NONE:
    case MethodVariant::THETA: return {};
  }
  return {};
}

Elongations compute_elongations(const Trajectory& taught, const IntersensoryModel& model, const StiffnessParams& p) {
  taught.validate();
  Elongations out;
  for (const TimedFrame& fr : taught.frames) {
    if (fr.l_data.size() != model.muscle_count())
      throw DataError("frame " + std::to_string(fr.t) + ": muscle count does not match the model");
    JointVector est;
    try {
      est = model.eval_htheta(fr.l_data, fr.f_data, fr.theta_ref);
    } catch (const SolverError& e) {
      throw e.within("frame " + std::to_string(fr.t));
    }
    out.theta_est.push_back(est);
    out.e.push_back(fr.delta_e);
    out.h.push_back(-(model.eval_hl(est, fr.f_data) - model.eval_hl(est, fr.f_ref)));
    out.s.push_back(delta_s(fr, p));
  }
  return out;
}

std::vector<MuscleLengths> assemble_reproduction(const Trajectory& taught, MethodVariant variant,
                                                 const IntersensoryModel& model, const StiffnessParams& p,
                                                 const Elongations& terms, const std::vector<bool>& mask) {
  taught.validate();
  const std::size_t m = static_cast<std::size_t>(taught.frames.front().l_ref.size());
  if (!mask.empty() && mask.size() != m) throw DomainError("compensation mask needs one entry per muscle");
  if (terms.e.size() != taught.size()) throw DataError("elongation terms do not match the trajectory");

  std::vector<MuscleLengths> out;
  out.reserve(taught.size());
  const VariantTerms use = variant_terms(variant);
  for (std::size_t k = 0; k < taught.size(); ++k) {
    const TimedFrame& fr = taught.frames[k];
    MuscleLengths cmd;
    if (variant == MethodVariant::THETA) {
      cmd = target_muscle_length(model, terms.theta_est[k], fr.f_ref, p);
    } else {
      cmd = fr.l_ref;
      if (use.e) cmd += terms.e[k];
      if (use.h) cmd += terms.h[k];
      if (use.s) cmd += terms.s[k];
    }
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (!mask[i]) cmd(static_cast<Eigen::Index>(i)) = fr.l_ref(static_cast<Eigen::Index>(i));
    out.push_back(std::move(cmd));
  }
  return out;
}

std::vector<MuscleLengths> assemble_reproduction(const Trajectory& taught, MethodVariant variant,
                                                 const IntersensoryModel& model, const StiffnessParams& p,
                                                 const std::vector<bool>& mask) {
  if (variant == MethodVariant::NONE) {
    taught.validate();
    std::vector<MuscleLengths> out;
    for (const TimedFrame& fr : taught.frames) out.push_back(fr.l_ref);
    return out;
  }
  return assemble_reproduction(taught, variant, model, p, compute_elongations(taught, model, p), mask);
}

}  // namespace msk
