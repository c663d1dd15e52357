#include "mskteach/arm_model.hpp"

#include <cmath>
#include <fstream>

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "mskteach/kinematics.hpp"
#include "mskteach/plant.hpp"

namespace msk {
namespace {

bool finite(const Vector3& v) { return v.allFinite(); }

void validate(const ArmModel::Description& d) {
  for (const Joint& j : d.joints) {
    if (!finite(j.offset) || !finite(j.axis) || std::abs(j.axis.norm() - 1.0) > 1e-9)
      throw DomainError("joint '" + j.name + "' needs a finite offset and a unit axis");
    if (!(j.lower < j.upper)) throw DomainError("joint '" + j.name + "' has an empty range");
  }
  if (d.muscles.empty()) throw DomainError("arm model has no muscles");
  for (const Muscle& m : d.muscles) {
    if (m.path.size() < 2) throw DomainError("muscle '" + m.name + "' needs at least two path points");
    for (const Anchor& a : m.path)
      if (a.body < kBaseBody || a.body >= kJointCount || !finite(a.point))
        throw DomainError("muscle '" + m.name + "' has an invalid path point");
    if (!(m.k1 > 0.0) || !(m.k2 >= 0.0) || !std::isfinite(m.k2))
      throw DomainError("muscle '" + m.name + "' needs k1 > 0 and k2 >= 0");
  }
  for (const PointMass& pm : d.masses)
    if (pm.body < kBaseBody || pm.body >= kJointCount || !finite(pm.point) || !(pm.mass >= 0.0))
      throw DomainError("invalid point mass");
  if (!finite(d.gravity)) throw DomainError("gravity must be finite");
  if (d.attachments.count("end_effector") == 0) throw DomainError("arm model needs an 'end_effector' attachment");
  if (!(d.wrench_cap > 0.0)) throw DomainError("wrench cap must be positive");
}

}  // namespace

ArmModel::ArmModel(Description description, bool require_full_rank) : desc_(std::move(description)) {
  validate(desc_);
  for (int i = 0; i < muscle_count(); ++i) {
    bool any = false;
    for (int j = 0; j < kJointCount; ++j) any = any || spans(i, j);
    if (!any) throw DomainError("muscle '" + desc_.muscles[i].name + "' does not span any joint");
  }
  const JointVector neutral = JointVector::Zero();
  neutral_lengths_ = path_lengths(*this, neutral);
  if (require_full_rank) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(muscle_jacobian(*this, neutral));
    if (svd.rank() < kJointCount) throw DomainError("moment-arm matrix at the neutral pose is rank deficient");
  }
}

const Anchor& ArmModel::attachment(const std::string& name) const {
  auto it = desc_.attachments.find(name);
  if (it == desc_.attachments.end()) throw DomainError("unknown attachment point '" + name + "'");
  return it->second;
}

JointVector ArmModel::lower_limits() const {
  JointVector v;
  for (int j = 0; j < kJointCount; ++j) v(j) = desc_.joints[j].lower;
  return v;
}

JointVector ArmModel::upper_limits() const {
  JointVector v;
  for (int j = 0; j < kJointCount; ++j) v(j) = desc_.joints[j].upper;
  return v;
}

bool ArmModel::within_limits(const JointVector& q, double slack) const {
  return q.allFinite() && (q.array() >= lower_limits().array() - slack).all() &&
         (q.array() <= upper_limits().array() + slack).all();
}

JointVector ArmModel::clamp(const JointVector& q) const {
  return q.cwiseMax(lower_limits()).cwiseMin(upper_limits());
}

void ArmModel::require_within_limits(const JointVector& q) const {
  if (!within_limits(q, 1e-9)) throw DomainError("joint configuration outside the joint limits");
}

bool ArmModel::spans(int muscle, int joint) const {
  const auto& path = desc_.muscles.at(muscle).path;
  for (std::size_t k = 0; k + 1 < path.size(); ++k) {
    const int lo = std::min(path[k].body, path[k + 1].body);
    const int hi = std::max(path[k].body, path[k + 1].body);
    if (lo < joint && joint <= hi) return true;
  }
  return false;
}

ArmModel ArmModel::with_elastic_scale(double scale) const {
  Description d = desc_;
  for (Muscle& m : d.muscles) {
    m.k1 *= scale;
    m.k2 *= scale;
  }
  return ArmModel(std::move(d), false);
}

ArmModel ArmModel::with_gravity(const Vector3& gravity) const {
  Description d = desc_;
  d.gravity = gravity;
  return ArmModel(std::move(d), false);
}

ArmModel default_arm() {
  ArmModel::Description d;
  const Vector3 pitch_axis(0.0, -1.0, 0.0);  // positive pitch swings the distal link forward (+x)
  d.joints[0] = {"S-p", Vector3::Zero(), pitch_axis, -1.57, 1.57};
  d.joints[1] = {"S-r", Vector3::Zero(), Vector3::UnitX(), -1.57, 1.57};
  d.joints[2] = {"S-y", Vector3::Zero(), Vector3::UnitZ(), -1.57, 1.57};
  d.joints[3] = {"E-p", Vector3(0.0, 0.0, -0.25), pitch_axis, 0.0, 2.3};
  d.joints[4] = {"E-y", Vector3::Zero(), Vector3::UnitZ(), -1.57, 1.57};

  d.masses = {{2, Vector3(0.0, 0.0, -0.125), 1.5}, {4, Vector3(0.0, 0.0, -0.125), 1.0}};
  d.attachments["end_effector"] = {4, Vector3(0.03, 0.0, -0.25)};
  d.attachments["elbow"] = {2, Vector3(0.0, 0.0, -0.25)};

  // One antagonistic pair per joint axis. Each wire leaves its origin on the
  // proximal body along the tangent of a circle of radius r about the axis and
  // inserts on that circle, so the moment arm stays near r over the central
  // part of the range and keeps its sign to about 1.37 rad either side.
  struct Pair {
    double r;       // m
    double center;  // rad, angle at which the moment arm equals r
    Vector3 radial; // insertion direction at `center`, proximal frame
  };
  const Pair pairs[kJointCount] = {{0.12, 0.0, Vector3(0.0, 0.0, -1.0)},
                                   {0.12, 0.0, Vector3(0.0, 0.0, -1.0)},
                                   {0.08, 0.0, Vector3(1.0, 0.0, 0.0)},
                                   {0.06, 1.15, Vector3(0.0, 0.0, -1.0)},
                                   {0.04, 0.0, Vector3(1.0, 0.0, 0.0)}};
  constexpr double kReach = 5.0;  // origin distance along the tangent, in units of r
  for (int j = 0; j < kJointCount; ++j) {
    const Joint& joint = d.joints[j];
    const Pair& p = pairs[j];
    const Vector3 tangent = joint.axis.cross(p.radial);
    const Vector3 insertion = Eigen::AngleAxisd(-p.center, joint.axis) * (p.r * p.radial);
    // The origin on the +tangent side shortens for positive rotation: its
    // tension produces positive torque.
    for (const int side : {+1, -1}) {
      const Vector3 origin = joint.offset + p.r * p.radial + side * kReach * p.r * tangent;
      d.muscles.push_back({joint.name + (side > 0 ? "+" : "-"), {{j - 1, origin}, {j, insertion}}, 5.0, 0.5});
    }
  }
  return ArmModel(std::move(d));
}

// ---------------------------------------------------------------------------
// JSON

namespace {

nlohmann::json vec_json(const Vector3& v) { return {v.x(), v.y(), v.z()}; }

Vector3 vec_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw DataError("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

nlohmann::json anchor_json(const Anchor& a) { return {{"body", a.body}, {"point", vec_json(a.point)}}; }

Anchor anchor_from(const nlohmann::json& j) { return {j.at("body").get<int>(), vec_from(j.at("point"))}; }

}  // namespace

nlohmann::json to_json(const ArmModel& model) {
  const auto& d = model.description();
  nlohmann::json doc;
  doc["schema_version"] = kArmSchemaVersion;
  for (const Joint& j : d.joints)
    doc["joints"].push_back({{"name", j.name}, {"offset", vec_json(j.offset)}, {"axis", vec_json(j.axis)},
                             {"lower", j.lower}, {"upper", j.upper}});
  for (const Muscle& m : d.muscles) {
    nlohmann::json path = nlohmann::json::array();
    for (const Anchor& a : m.path) path.push_back(anchor_json(a));
    doc["muscles"].push_back({{"name", m.name}, {"path", path}, {"k1", m.k1}, {"k2", m.k2}});
  }
  doc["masses"] = nlohmann::json::array();
  for (const PointMass& pm : d.masses)
    doc["masses"].push_back({{"body", pm.body}, {"point", vec_json(pm.point)}, {"mass", pm.mass}});
  doc["gravity"] = vec_json(d.gravity);
  for (const auto& [name, a] : d.attachments) doc["attachments"][name] = anchor_json(a);
  doc["wrench_cap"] = d.wrench_cap;
  return doc;
}

ArmModel arm_from_json(const nlohmann::json& doc) {
  try {
    const int version = doc.at("schema_version").get<int>();
    if (version != kArmSchemaVersion)
      throw DataError("unsupported arm model schema_version " + std::to_string(version));
    ArmModel::Description d;
    const auto& joints = doc.at("joints");
    if (joints.size() != kJointCount) throw DataError("arm model needs exactly 5 joints");
    for (int k = 0; k < kJointCount; ++k) {
      const auto& j = joints[k];
      d.joints[k] = {j.at("name").get<std::string>(), vec_from(j.at("offset")), vec_from(j.at("axis")),
                     j.at("lower").get<double>(), j.at("upper").get<double>()};
    }
    for (const auto& m : doc.at("muscles")) {
      Muscle muscle{m.at("name").get<std::string>(), {}, m.at("k1").get<double>(), m.at("k2").get<double>()};
      for (const auto& a : m.at("path")) muscle.path.push_back(anchor_from(a));
      d.muscles.push_back(std::move(muscle));
    }
    for (const auto& pm : doc.at("masses"))
      d.masses.push_back({pm.at("body").get<int>(), vec_from(pm.at("point")), pm.at("mass").get<double>()});
    d.gravity = vec_from(doc.at("gravity"));
    for (const auto& [name, a] : doc.at("attachments").items()) d.attachments[name] = anchor_from(a);
    d.wrench_cap = doc.value("wrench_cap", 200.0);
    return ArmModel(std::move(d));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed arm model: ") + e.what());
  }
}

ArmModel load_arm(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open arm model '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("cannot parse '" + path + "': " + e.what());
  }
  return arm_from_json(doc);
}

void save_arm(const ArmModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << to_json(model).dump(2) << '\n';
}

}  // namespace msk
