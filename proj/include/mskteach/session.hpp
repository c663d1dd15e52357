#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mskteach/compensation.hpp"
#include "mskteach/plant.hpp"
#include "mskteach/trajectory.hpp"

#include <json.hpp>

namespace msk {

/// Piecewise-linear joint path, held constant outside its knots.
class JointPath {
 public:
  struct Knot {
    double time;
    JointVector q;
  };

  JointPath() = default;
  explicit JointPath(std::vector<Knot> knots);

  JointVector at(double t) const;
  double duration() const { return knots_.empty() ? 0.0 : knots_.back().time; }
  const std::vector<Knot>& knots() const { return knots_; }
  /// Number of 0.2 s frames covering [0, duration].
  int frame_count() const;

 private:
  std::vector<Knot> knots_;
};

/// Piecewise-linear force schedule at one attachment point, held at the end
/// values outside the knots. Scripted stand-in for the teacher's hand.
class WrenchProfile {
 public:
  struct Knot {
    double time;
    Vector3 force;
  };

  WrenchProfile() = default;
  explicit WrenchProfile(std::vector<Knot> knots, std::string attachment = "end_effector");

  ExternalWrench at(double t) const;
  const std::vector<Knot>& knots() const { return knots_; }
  const std::string& attachment() const { return attachment_; }
  bool empty() const { return knots_.empty(); }
  void validate(const ArmModel& arm) const;

  /// Zero before t0, linear ramp to `force` over `ramp`, hold until t1, ramp down.
  static WrenchProfile pulse(const Vector3& force, double t0, double t1, double ramp = 0.5,
                             std::string attachment = "end_effector");

 private:
  std::vector<Knot> knots_;
  std::string attachment_ = "end_effector";
};

struct SessionConfig {
  StiffnessParams stiffness;  // muscle stiffness control, applied in the motor servo
  TensionOptions tension;
  std::optional<LimiterParams> limiter;  // teaching-time tension limiter
  double relaxation_time = 0.0;          // s, plant first-order lag
  double tension_noise = 0.0;            // N
  double length_noise = 0.0;             // mm
  std::optional<ContactPlane> contact;
  std::vector<bool> compensation_mask;   // empty: every muscle compensated
  std::string scenario;
  std::uint64_t seed = 0;

  PlantConfig plant_config() const;
};

/// Sample produced by one control tick.
struct TickSample {
  double time = 0.0;      // s, at the start of the tick
  MuscleLengths command;  // sent to the motors, limiter relaxation included
  PlantReading reading;
  MuscleVector delta_e;   // limiter relaxation that was applied this tick
  ExternalWrench wrench;
};

/// One plant plus the tension limiter, advanced in 8 ms ticks. Shared by the
/// headless phase runs and the live bridge.
class TickRunner {
 public:
  TickRunner(const ArmModel& arm, const SessionConfig& config, const MuscleLengths& initial_command,
             const JointVector& q_seed, bool limiter_enabled);

  TickSample tick(const MuscleLengths& command, const ExternalWrench& wrench);

  const Plant& plant() const { return plant_; }
  const std::optional<LimiterState>& limiter() const { return limiter_; }
  long ticks() const { return ticks_; }
  double time() const { return ticks_ * kControlPeriod; }
  const PlantReading& last_reading() const { return last_; }

 private:
  Plant plant_;
  std::optional<LimiterState> limiter_;
  PlantReading last_;
  long ticks_ = 0;
};

/// Commands of the original pipeline at every frame of the path.
struct FrameCommands {
  std::vector<JointVector> theta_ref;
  std::vector<MuscleTensions> f_ref;
  std::vector<MuscleLengths> l_ref;
  int infeasible_frames = 0;
};

FrameCommands plan_commands(const ArmModel& arm, const IntersensoryModel& model, const JointPath& path,
                            const SessionConfig& config);

using TickObserver = std::function<void(const TickSample&)>;

/// One phase run advanced a tick at a time: per-frame commands linearly
/// interpolated over the ticks, a TimedFrame recorded at every frame
/// boundary. The headless runs below and the live bridge both drive one, so
/// the two paths produce identical trajectories for identical wrenches.
class PhaseRunner {
 public:
  /// Original or teaching pipeline; the limiter runs if configured.
  static PhaseRunner commanded(const ArmModel& arm, const IntersensoryModel& model, const JointPath& path,
                               const SessionConfig& config);
  /// Replays `commands`, one per taught frame, without limiter.
  static PhaseRunner replay(const ArmModel& arm, const Trajectory& taught, std::vector<MuscleLengths> commands,
                            const SessionConfig& config);

  TickSample step(const ExternalWrench& wrench);
  bool finished() const { return next_tick_ >= total_ticks_; }
  long ticks_done() const { return next_tick_; }
  long total_ticks() const { return total_ticks_; }
  /// Simulated time of the next tick [s].
  double time() const { return next_tick_ * kControlPeriod; }
  const PlantReading& last_reading() const { return runner_.last_reading(); }
  const std::optional<LimiterState>& limiter() const { return runner_.limiter(); }
  const Trajectory& trajectory() const { return trajectory_; }
  Trajectory take_trajectory() { return std::move(trajectory_); }

 private:
  PhaseRunner(const ArmModel& arm, const SessionConfig& config, FrameCommands frames, bool limiter);

  FrameCommands frames_;
  std::vector<MuscleLengths> recorded_l_ref_;  // replay only
  TickRunner runner_;
  Trajectory trajectory_;
  long next_tick_ = 0;
  long total_ticks_ = 0;
};

/// Original motion: CTRL at every frame, commands linearly interpolated
/// between frames, limiter if configured, no external force.
Trajectory run_original(const ArmModel& arm, const IntersensoryModel& model, const JointPath& path,
                        const SessionConfig& config, const TickObserver& observer = {});

/// Same command pipeline with the teaching wrench on the plant.
Trajectory run_teaching(const ArmModel& arm, const IntersensoryModel& model, const JointPath& path,
                        const WrenchProfile& wrench, const SessionConfig& config, const TickObserver& observer = {});

/// Replays per-frame muscle commands, linearly interpolated between frames,
/// without limiter or external force. theta_true is the reproduced motion.
Trajectory run_reproduction(const ArmModel& arm, const Trajectory& taught, const std::vector<MuscleLengths>& commands,
                            const SessionConfig& config, const TickObserver& observer = {});

Trajectory run_reproduction(const ArmModel& arm, const IntersensoryModel& model, const Trajectory& taught,
                            MethodVariant variant, const SessionConfig& config, const TickObserver& observer = {});

struct ErrorReport {
  double E = 0.0;                      // rad, mean over frames and joints
  double E_norm = 0.0;                 // rad, mean over frames of the joint-vector 2-norm
  JointVector per_joint = JointVector::Zero();  // rad, mean over frames
  std::vector<JointVector> per_frame;  // |theta_taught - theta_rep|

  double E_degrees() const;
};

ErrorReport metric_E(const Trajectory& taught, const Trajectory& reproduced);

/// Mean over frames of the per-frame 2-norm of each elongation term [mm].
struct InfluenceMagnitudes {
  double e = 0.0, h = 0.0, s = 0.0;
};

InfluenceMagnitudes influence_magnitudes(const Elongations& terms);

struct VariantResult {
  MethodVariant variant;
  std::optional<ErrorReport> error;  // empty when the run failed
  std::string failure;
  Trajectory reproduced;
};

struct ComparisonReport {
  std::string scenario;
  bool limiter = false;
  double f_max = 0.0;
  std::string model;
  std::uint64_t seed = 0;
  Trajectory original;
  Trajectory taught;
  Elongations terms;
  InfluenceMagnitudes influence;
  std::vector<VariantResult> variants;
  double peak_deviation = 0.0;       // rad, max over frames of |theta_taught - theta_original|_inf
  double max_teaching_tension = 0.0; // N

  const VariantResult& result(MethodVariant v) const;
  double E(MethodVariant v) const;
};

struct ComparisonSpec {
  JointPath path;
  WrenchProfile wrench;
  SessionConfig config;
  std::vector<MethodVariant> variants{std::begin(kAllVariants), std::end(kAllVariants)};
  std::string model_id = "oracle";
};

/// Original -> one teaching run -> reproduction under every requested variant.
ComparisonReport comparison_experiment(const ArmModel& arm, const IntersensoryModel& model, const ComparisonSpec& spec);

nlohmann::json report_json(const ComparisonReport& report, bool include_curves = true);
/// variant, E_rad, E_deg, E_norm, per-joint E columns.
void save_report(const ComparisonReport& report, const std::string& json_path, const std::string& csv_path);

}  // namespace msk
