#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>

#include "mskteach/arm_model.hpp"
#include "mskteach/elastic.hpp"

namespace msk {

/// External force applied at a named attachment point, world frame [N].
struct ExternalWrench {
  Vector3 force = Vector3::Zero();
  std::string attachment = "end_effector";
};

/// Throws DomainError for non-finite forces or forces above the model's cap.
void validate_wrench(const ArmModel& model, const ExternalWrench& wrench);

/// One-sided penalty plane acting on the end effector, used by the contact
/// task scenarios. The plane pushes along `normal` with stiffness [N/m].
struct ContactPlane {
  Vector3 point = Vector3::Zero();
  Vector3 normal = Vector3::UnitZ();
  double stiffness = 2.0e4;
};

/// Muscle path lengths [mm].
MuscleLengths path_lengths(const ArmModel& model, const JointVector& q);

/// G = d(path_lengths)/dq [mm/rad], exact by forward-mode differentiation.
MomentArmMatrix muscle_jacobian(const ArmModel& model, const JointVector& q);

/// Joint torques produced by the link weights, -dU/dq [N*m].
JointVector gravity_torque(const ArmModel& model, const JointVector& q);

Vector3 attachment_position(const ArmModel& model, const JointVector& q, const std::string& name);
Eigen::Matrix<double, 3, kJointCount> attachment_jacobian(const ArmModel& model, const JointVector& q,
                                                          const std::string& name);

/// Everything that shapes the static energy landscape besides the commands.
struct PlantPhysics {
  std::optional<StiffnessParams> servo;  // motor-level muscle stiffness control
  std::optional<ContactPlane> contact;
};

struct EquilibriumOptions {
  int max_iterations = 500;
  double tolerance = 1e-6;  // N*m, infinity norm of the projected energy gradient
};

/// Static energy landscape for fixed commands:
/// E(q) = sum_i Psi_i(p_i(q) - l_i) + U(q) - F . x(q) [+ contact penalty].
class EnergyLandscape {
 public:
  EnergyLandscape(const ArmModel& model, MuscleLengths commanded, ExternalWrench wrench, PlantPhysics physics = {});

  double energy(const JointVector& q) const;  // J
  JointVector gradient(const JointVector& q) const;  // N*m
  /// Gradient with the components pushing against an active joint limit removed.
  JointVector projected_gradient(const JointVector& q) const;

  /// Muscle tensions at configuration q [N].
  MuscleTensions tensions(const JointVector& q) const;
  /// Contact normal force at configuration q [N], zero without a plane.
  double contact_force(const JointVector& q) const;

  const ArmModel& model() const { return *model_; }
  const MuscleLengths& commanded() const { return commanded_; }

 private:
  const ArmModel* model_;
  MuscleLengths commanded_;
  ExternalWrench wrench_;
  PlantPhysics physics_;
  std::vector<MuscleDrive> drives_;
};

struct EquilibriumResult {
  JointVector q;
  double residual = 0.0;
  int iterations = 0;
};

/// Minimizes the energy landscape over the joint-limit box by projected
/// damped Newton steps. Throws SolverError when the residual does not reach
/// the tolerance within the iteration budget.
EquilibriumResult solve_equilibrium(const EnergyLandscape& landscape, const JointVector& q_seed,
                                    const EquilibriumOptions& options = {});

JointVector solve_equilibrium(const ArmModel& model, const MuscleLengths& l_cmd, const ExternalWrench& wrench,
                              const JointVector& q_seed, const PlantPhysics& physics = {},
                              const EquilibriumOptions& options = {});

struct PlantConfig {
  /// Low-level muscle stiffness control in the motor servo; disabled means
  /// the motor holds exactly the commanded length.
  std::optional<StiffnessParams> stiffness_control = StiffnessParams{};
  /// First-order relaxation time constant toward equilibrium [s]. Zero
  /// settles to the static equilibrium within every tick.
  double relaxation_time = 0.0;
  double tension_noise = 0.0;  // N, standard deviation of sensed tension noise
  double length_noise = 0.0;   // mm, standard deviation of encoder noise
  std::uint64_t seed = 0;
  std::optional<ContactPlane> contact;
  EquilibriumOptions solver;
};

/// Sensor readings after one plant step. `q_true` is ground truth, kept for
/// evaluation only.
struct PlantReading {
  MuscleLengths l;
  MuscleTensions f;
  JointVector q_true;
  double contact_force = 0.0;
};

/// Quasi-static tendon-driven arm advanced in fixed control ticks.
class Plant {
 public:
  Plant(ArmModel model, PlantConfig config, const JointVector& q_initial);

  /// Places the arm at the equilibrium for `l_cmd` with no external force.
  PlantReading settle(const MuscleLengths& l_cmd);

  PlantReading step(const MuscleLengths& l_cmd, const ExternalWrench& wrench, double dt = kControlPeriod);

  const JointVector& q() const { return q_; }
  double time() const { return time_; }
  const ArmModel& model() const { return model_; }
  const PlantConfig& config() const { return config_; }
  PlantPhysics physics() const { return {config_.stiffness_control, config_.contact}; }

 private:
  PlantReading read(const EnergyLandscape& landscape);

  ArmModel model_;
  PlantConfig config_;
  JointVector q_;
  double time_ = 0.0;
  std::mt19937_64 rng_;
};

}  // namespace msk
