#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mskteach/types.hpp"

namespace msk {

/// Index of the fixed base body. Body k >= 0 is the frame after joint k.
inline constexpr int kBaseBody = -1;

struct Joint {
  std::string name;
  Vector3 offset = Vector3::Zero();  // joint origin in the previous body frame [m]
  Vector3 axis = Vector3::UnitZ();   // unit rotation axis in the previous body frame
  double lower = -1.57;              // rad
  double upper = 1.57;               // rad
};

/// A point fixed in a body frame.
struct Anchor {
  int body = kBaseBody;
  Vector3 point = Vector3::Zero();  // m
};

/// A wire routed as a polyline through ordered via-points, ending in a
/// nonlinear elastic element with tension k1*s + k2*s^2 for stretch s > 0.
struct Muscle {
  std::string name;
  std::vector<Anchor> path;
  double k1 = 5.0;  // N/mm
  double k2 = 0.5;  // N/mm^2
};

struct PointMass {
  int body = 0;
  Vector3 point = Vector3::Zero();  // m
  double mass = 0.0;                // kg
};

/// Kinematic chain of five revolute joints actuated by redundant muscles.
///
/// The constructor validates the structural invariants and caches the muscle
/// path lengths at the neutral pose q = 0.
class ArmModel {
 public:
  struct Description {
    std::array<Joint, kJointCount> joints;
    std::vector<Muscle> muscles;
    std::vector<PointMass> masses;
    Vector3 gravity{0.0, 0.0, -9.81};
    std::map<std::string, Anchor> attachments;  // must contain "end_effector"
    double wrench_cap = 200.0;                  // N
  };

  explicit ArmModel(Description description, bool require_full_rank = true);

  const Description& description() const { return desc_; }
  const std::array<Joint, kJointCount>& joints() const { return desc_.joints; }
  const std::vector<Muscle>& muscles() const { return desc_.muscles; }
  const std::vector<PointMass>& masses() const { return desc_.masses; }
  const Vector3& gravity() const { return desc_.gravity; }
  double wrench_cap() const { return desc_.wrench_cap; }
  int muscle_count() const { return static_cast<int>(desc_.muscles.size()); }

  const Anchor& attachment(const std::string& name) const;

  /// Path lengths at q = 0 [mm].
  const MuscleLengths& neutral_lengths() const { return neutral_lengths_; }

  JointVector lower_limits() const;
  JointVector upper_limits() const;
  bool within_limits(const JointVector& q, double slack = 1e-12) const;
  JointVector clamp(const JointVector& q) const;

  /// Throws DomainError when q violates the joint limits.
  void require_within_limits(const JointVector& q) const;

  /// True when muscle i has a path segment crossing joint j.
  bool spans(int muscle, int joint) const;

  /// Element-wise scaling of every muscle's elastic coefficients. Used to
  /// inject model error between a plant and the controller's nominal model.
  ArmModel with_elastic_scale(double scale) const;
  ArmModel with_gravity(const Vector3& gravity) const;

 private:
  Description desc_;
  MuscleLengths neutral_lengths_;
};

/// Human-arm-scale default: 0.25 m links, 1.5 kg / 1.0 kg, ten muscles
/// arranged as antagonistic pairs around each degree of freedom.
ArmModel default_arm();

inline constexpr int kArmSchemaVersion = 1;

nlohmann::json to_json(const ArmModel& model);
ArmModel arm_from_json(const nlohmann::json& doc);

ArmModel load_arm(const std::string& path);
void save_arm(const ArmModel& model, const std::string& path);

}  // namespace msk
