#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mskteach/session.hpp"

#include <json.hpp>

namespace msk {

/// Pass/fail rule for the geometric task scenarios, evaluated on the
/// attachment path between `window` times [s].
struct TaskSpec {
  enum class Kind { contact, path };
  Kind kind = Kind::contact;
  double t_begin = 0.0, t_end = 0.0;
  double max_distance = 0.005;  // m, contact: distance to the plane
  double min_force = 2.0;       // N, contact: normal force
  double max_hausdorff = 0.010; // m, path: distance to the taught path
  std::string attachment = "end_effector";
};

struct TaskScore {
  bool success = false;
  double max_distance = 0.0;  // m, contact
  double min_force = 0.0;     // N, contact
  double hausdorff = 0.0;     // m, path
};

/// Everything needed to run one experiment, as read from a JSON document.
/// Paths to the arm description and model weights are relative to the
/// config file.
struct ScenarioConfig {
  std::string name;
  std::string arm = "default";     // "default" or a path to an arm JSON file
  std::string model = "oracle";    // "oracle" or a path to learned weights
  std::string path_name;           // named built-in path, used when keyframes is empty
  std::vector<JointPath::Knot> keyframes;
  WrenchProfile wrench;
  SessionConfig session;
  std::vector<MethodVariant> variants{std::begin(kAllVariants), std::end(kAllVariants)};
  std::optional<TaskSpec> task;
  std::string output_dir = "out";
};

/// {"attachment", "knots": [{"t", "force"}]} or {"attachment", "pulse": {"force", "t0", "t1", "ramp"}}.
nlohmann::json to_json(const WrenchProfile& wrench);
/// Throws DataError on malformed values.
WrenchProfile wrench_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const ScenarioConfig& config);
/// Missing keys take the defaults above. Throws DataError on malformed values.
ScenarioConfig scenario_from_json(const nlohmann::json& doc);
ScenarioConfig load_scenario(const std::string& path);
void save_scenario(const ScenarioConfig& config, const std::string& path);

/// "arm-sweep", "arm-sweep-limiter", "plane-wipe", "square-to-circle".
std::vector<std::string> builtin_scenario_names();
/// Throws DomainError for unknown names.
ScenarioConfig builtin_scenario(const std::string& name);

/// "arm-sweep", "plane-wipe", "square".
std::vector<std::string> builtin_path_names();
JointPath builtin_path(const ArmModel& arm, const std::string& name);

/// A config with its arm, model and path loaded, ready to run.
struct Scenario {
  std::string name;
  ArmModel arm;
  IntersensoryModel model;
  ComparisonSpec spec;
  std::optional<TaskSpec> task;
};

/// `base_dir` resolves relative file references in the config.
Scenario resolve_scenario(const ScenarioConfig& config, const std::string& base_dir = "");

/// Damped least-squares position IK for one attachment point, pulled toward
/// `rest` in the null space. Stays inside the joint limits.
JointVector solve_ik(const ArmModel& arm, const Vector3& target, const JointVector& seed, const JointVector& rest,
                     const std::string& attachment = "end_effector");

/// World position of an attachment at every frame, from theta_true.
std::vector<Vector3> attachment_path(const ArmModel& arm, const Trajectory& trajectory,
                                     const std::string& attachment = "end_effector");

double hausdorff_distance(const std::vector<Vector3>& a, const std::vector<Vector3>& b);

/// Contact tasks need the plane; path tasks compare against `taught`.
TaskScore score_task(const TaskSpec& task, const ArmModel& arm, const Trajectory& reproduced, const Trajectory& taught,
                     const std::optional<ContactPlane>& plane);

}  // namespace msk
