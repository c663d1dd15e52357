#include "mskteach/plant.hpp"

#include <cmath>

#include <Eigen/Cholesky>
#include <unsupported/Eigen/AutoDiff>

#include "mskteach/kinematics.hpp"

namespace msk {
namespace {

using Derivatives = Eigen::Matrix<double, kJointCount, 1>;
using Dual = Eigen::AutoDiffScalar<Derivatives>;

JointVectorT<Dual> seed_duals(const JointVector& q) {
  JointVectorT<Dual> qd;
  for (int j = 0; j < kJointCount; ++j) qd(j) = Dual(q(j), kJointCount, j);
  return qd;
}

/// First-order expansion of everything the energy depends on.
struct Linearization {
  MuscleLengths lengths;
  MomentArmMatrix G;
  JointVector potential_gradient;
  Vector3 attach;
  Eigen::Matrix<double, 3, kJointCount> attach_jacobian;
};

Linearization linearize(const ArmModel& model, const JointVector& q, const Anchor& attach) {
  const JointVectorT<Dual> qd = seed_duals(q);
  Linearization lin;
  const int m = model.muscle_count();
  lin.lengths.resize(m);
  lin.G.resize(m, kJointCount);
  for (int i = 0; i < m; ++i) {
    const Dual p = muscle_path_length(model, qd, model.muscles()[i]);
    lin.lengths(i) = p.value();
    lin.G.row(i) = p.derivatives().transpose();
  }
  const Dual u = gravity_potential(model, qd);
  lin.potential_gradient = u.derivatives();
  const Vector3T<Dual> x = anchor_position(model, qd, attach);
  for (int r = 0; r < 3; ++r) {
    lin.attach(r) = x(r).value();
    lin.attach_jacobian.row(r) = x(r).derivatives().transpose();
  }
  return lin;
}

constexpr double kMillimeter = 1e-3;  // m per mm; also J per N*mm

}  // namespace

void validate_wrench(const ArmModel& model, const ExternalWrench& wrench) {
  if (!wrench.force.allFinite()) throw DomainError("external force must be finite");
  if (wrench.force.norm() > model.wrench_cap() * (1.0 + 1e-12))
    throw DomainError("external force exceeds the safety cap");
  model.attachment(wrench.attachment);
}

MuscleLengths path_lengths(const ArmModel& model, const JointVector& q) {
  model.require_within_limits(q);
  return chain_path_lengths(model, q);
}

MomentArmMatrix muscle_jacobian(const ArmModel& model, const JointVector& q) {
  model.require_within_limits(q);
  const JointVectorT<Dual> qd = seed_duals(q);
  MomentArmMatrix G(model.muscle_count(), kJointCount);
  for (int i = 0; i < model.muscle_count(); ++i)
    G.row(i) = muscle_path_length(model, qd, model.muscles()[i]).derivatives().transpose();
  return G;
}

JointVector gravity_torque(const ArmModel& model, const JointVector& q) {
  model.require_within_limits(q);
  return -gravity_potential(model, seed_duals(q)).derivatives();
}

Vector3 attachment_position(const ArmModel& model, const JointVector& q, const std::string& name) {
  return anchor_position(model, q, model.attachment(name));
}

Eigen::Matrix<double, 3, kJointCount> attachment_jacobian(const ArmModel& model, const JointVector& q,
                                                          const std::string& name) {
  const Vector3T<Dual> x = anchor_position(model, seed_duals(q), model.attachment(name));
  Eigen::Matrix<double, 3, kJointCount> J;
  for (int r = 0; r < 3; ++r) J.row(r) = x(r).derivatives().transpose();
  return J;
}

// ---------------------------------------------------------------------------

EnergyLandscape::EnergyLandscape(const ArmModel& model, MuscleLengths commanded, ExternalWrench wrench,
                                 PlantPhysics physics)
    : model_(&model), commanded_(std::move(commanded)), wrench_(std::move(wrench)), physics_(std::move(physics)) {
  if (commanded_.size() != model.muscle_count() || !commanded_.allFinite())
    throw DomainError("commanded muscle lengths must be finite, one per muscle");
  validate_wrench(model, wrench_);
  drives_.reserve(model.muscle_count());
  for (const Muscle& m : model.muscles()) drives_.push_back(muscle_drive(m, physics_.servo));
}

double EnergyLandscape::energy(const JointVector& q) const {
  const MuscleLengths p = chain_path_lengths(*model_, q);
  double stored = 0.0;
  for (int i = 0; i < p.size(); ++i) stored += drives_[i].energy(p(i) - commanded_(i));
  double e = stored * kMillimeter + gravity_potential(*model_, q);
  const Vector3 x = anchor_position(*model_, q, model_->attachment(wrench_.attachment));
  e -= wrench_.force.dot(x);
  if (physics_.contact) {
    const Vector3 ee = anchor_position(*model_, q, model_->attachment("end_effector"));
    const double depth = -physics_.contact->normal.dot(ee - physics_.contact->point);
    if (depth > 0.0) e += 0.5 * physics_.contact->stiffness * depth * depth;
  }
  return e;
}

JointVector EnergyLandscape::gradient(const JointVector& q) const {
  const Linearization lin = linearize(*model_, q, model_->attachment(wrench_.attachment));
  MuscleTensions f(lin.lengths.size());
  for (int i = 0; i < f.size(); ++i) f(i) = drives_[i].tension(lin.lengths(i) - commanded_(i));
  JointVector g = kMillimeter * lin.G.transpose() * f + lin.potential_gradient -
                  lin.attach_jacobian.transpose() * wrench_.force;
  if (physics_.contact) {
    const ContactPlane& plane = *physics_.contact;
    const Anchor& ee = model_->attachment("end_effector");
    const Vector3T<Dual> x = anchor_position(*model_, seed_duals(q), ee);
    Dual depth = -(plane.normal.cast<Dual>().dot(x - plane.point.cast<Dual>()));
    if (depth.value() > 0.0) g += plane.stiffness * depth.value() * depth.derivatives();
  }
  return g;
}

JointVector EnergyLandscape::projected_gradient(const JointVector& q) const {
  JointVector g = gradient(q);
  const JointVector lo = model_->lower_limits();
  const JointVector hi = model_->upper_limits();
  for (int j = 0; j < kJointCount; ++j) {
    if (q(j) <= lo(j) && g(j) > 0.0) g(j) = 0.0;
    if (q(j) >= hi(j) && g(j) < 0.0) g(j) = 0.0;
  }
  return g;
}

MuscleTensions EnergyLandscape::tensions(const JointVector& q) const {
  const MuscleLengths p = chain_path_lengths(*model_, q);
  MuscleTensions f(p.size());
  for (int i = 0; i < p.size(); ++i) f(i) = drives_[i].tension(p(i) - commanded_(i));
  return f;
}

double EnergyLandscape::contact_force(const JointVector& q) const {
  if (!physics_.contact) return 0.0;
  const Vector3 ee = anchor_position(*model_, q, model_->attachment("end_effector"));
  const double depth = -physics_.contact->normal.dot(ee - physics_.contact->point);
  return depth > 0.0 ? physics_.contact->stiffness * depth : 0.0;
}

// ---------------------------------------------------------------------------

EquilibriumResult solve_equilibrium(const EnergyLandscape& landscape, const JointVector& q_seed,
                                    const EquilibriumOptions& options) {
  const ArmModel& model = landscape.model();
  model.require_within_limits(q_seed);
  const JointVector lo = model.lower_limits();
  const JointVector hi = model.upper_limits();

  JointVector q = model.clamp(q_seed);
  double e = landscape.energy(q);
  double residual = 0.0;
  for (int it = 0; it < options.max_iterations; ++it) {
    const JointVector g = landscape.gradient(q);
    JointVector pg = g;
    std::array<bool, kJointCount> free{};
    for (int j = 0; j < kJointCount; ++j) {
      const bool blocked = (q(j) <= lo(j) && g(j) > 0.0) || (q(j) >= hi(j) && g(j) < 0.0);
      free[j] = !blocked;
      if (blocked) pg(j) = 0.0;
    }
    residual = pg.lpNorm<Eigen::Infinity>();
    if (residual <= options.tolerance) return {q, residual, it};

    // Hessian by central differences of the exact gradient.
    constexpr double h = 1e-6;
    Eigen::Matrix<double, kJointCount, kJointCount> H;
    for (int j = 0; j < kJointCount; ++j) {
      JointVector qp = q, qm = q;
      qp(j) += h;
      qm(j) -= h;
      H.col(j) = (landscape.gradient(qp) - landscape.gradient(qm)) / (2.0 * h);
    }
    H = (0.5 * (H + H.transpose())).eval();
    for (int j = 0; j < kJointCount; ++j) {
      if (free[j]) continue;
      H.row(j).setZero();
      H.col(j).setZero();
      H(j, j) = 1.0;
    }

    // Levenberg-style damping until the model is positive definite.
    const double scale = std::max(H.diagonal().cwiseAbs().maxCoeff(), 1e-9);
    double damping = 0.0;
    JointVector step;
    for (int attempt = 0; attempt < 40; ++attempt) {
      Eigen::LLT<Eigen::Matrix<double, kJointCount, kJointCount>> llt(
          H + damping * Eigen::Matrix<double, kJointCount, kJointCount>::Identity());
      if (llt.info() == Eigen::Success) {
        step = -llt.solve(pg);
        break;
      }
      damping = damping == 0.0 ? 1e-8 * scale : damping * 10.0;
    }

    // Backtracking along the projected path.
    double alpha = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      const JointVector trial = (q + alpha * step).cwiseMax(lo).cwiseMin(hi);
      const double e_trial = landscape.energy(trial);
      if (e_trial < e && e_trial <= e + 1e-4 * g.dot(trial - q)) {
        q = trial;
        e = e_trial;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      // Energy differences are below rounding; accept a step that lowers the residual.
      double a = 1.0;
      for (int ls = 0; ls < 30 && !accepted; ++ls, a *= 0.5) {
        const JointVector trial = (q + a * step).cwiseMax(lo).cwiseMin(hi);
        if (landscape.projected_gradient(trial).lpNorm<Eigen::Infinity>() < residual) {
          q = trial;
          e = landscape.energy(q);
          accepted = true;
        }
      }
      if (!accepted) break;
    }
  }
  residual = landscape.projected_gradient(q).lpNorm<Eigen::Infinity>();
  if (residual <= options.tolerance) return {q, residual, options.max_iterations};
  throw SolverError("equilibrium solver did not converge", residual);
}

JointVector solve_equilibrium(const ArmModel& model, const MuscleLengths& l_cmd, const ExternalWrench& wrench,
                              const JointVector& q_seed, const PlantPhysics& physics,
                              const EquilibriumOptions& options) {
  const EnergyLandscape landscape(model, l_cmd, wrench, physics);
  return solve_equilibrium(landscape, q_seed, options).q;
}

// ---------------------------------------------------------------------------

Plant::Plant(ArmModel model, PlantConfig config, const JointVector& q_initial)
    : model_(std::move(model)), config_(std::move(config)), q_(q_initial), rng_(config_.seed) {
  model_.require_within_limits(q_initial);
  q_ = model_.clamp(q_initial);
  if (!(config_.relaxation_time >= 0.0)) throw DomainError("relaxation time must be >= 0");
  if (!(config_.tension_noise >= 0.0) || !(config_.length_noise >= 0.0))
    throw DomainError("noise levels must be >= 0");
}

PlantReading Plant::settle(const MuscleLengths& l_cmd) {
  const EnergyLandscape landscape(model_, l_cmd, ExternalWrench{}, physics());
  q_ = solve_equilibrium(landscape, q_, config_.solver).q;
  return read(landscape);
}

PlantReading Plant::step(const MuscleLengths& l_cmd, const ExternalWrench& wrench, double dt) {
  const EnergyLandscape landscape(model_, l_cmd, wrench, physics());
  const JointVector target = solve_equilibrium(landscape, q_, config_.solver).q;
  if (config_.relaxation_time > 0.0) {
    const double keep = std::exp(-dt / config_.relaxation_time);
    q_ = target + keep * (q_ - target);
  } else {
    q_ = target;
  }
  time_ += dt;
  return read(landscape);
}

PlantReading Plant::read(const EnergyLandscape& landscape) {
  PlantReading r;
  r.q_true = q_;
  const MuscleTensions f = landscape.tensions(q_);
  r.f = f;
  r.l.resize(f.size());
  for (int i = 0; i < f.size(); ++i)
    r.l(i) = muscle_drive(model_.muscles()[i], config_.stiffness_control).motor_length(landscape.commanded()(i), f(i));
  if (config_.tension_noise > 0.0) {
    std::normal_distribution<double> noise(0.0, config_.tension_noise);
    for (int i = 0; i < f.size(); ++i) r.f(i) = std::max(0.0, r.f(i) + noise(rng_));
  }
  if (config_.length_noise > 0.0) {
    std::normal_distribution<double> noise(0.0, config_.length_noise);
    for (int i = 0; i < f.size(); ++i) r.l(i) += noise(rng_);
  }
  r.contact_force = landscape.contact_force(q_);
  return r;
}

}  // namespace msk
