#include "mskteach/scenario.hpp"

#include <Eigen/LU>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

namespace msk {

namespace {

using nlohmann::json;

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

template <int N>
Eigen::Matrix<double, N, 1> fixed_from(const json& j, const char* what) {
  if (!j.is_array() || j.size() != N) throw DataError(std::string(what) + " needs " + std::to_string(N) + " numbers");
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) v(i) = j[i].get<double>();
  return v;
}

const char* task_kind_name(TaskSpec::Kind k) { return k == TaskSpec::Kind::contact ? "contact" : "path"; }

json limiter_json(const LimiterParams& p) {
  return {{"enabled", true}, {"f_max", p.f_max}, {"c_minus", p.c_minus}, {"c_plus", p.c_plus}, {"c_gain", p.c_gain}};
}

std::optional<LimiterParams> limiter_from(const json& j) {
  if (j.is_null() || !j.value("enabled", true)) return std::nullopt;
  LimiterParams p;
  p.f_max = j.value("f_max", p.f_max);
  p.c_minus = j.value("c_minus", p.c_minus);
  p.c_plus = j.value("c_plus", p.c_plus);
  p.c_gain = j.value("c_gain", p.c_gain);
  if (!(p.f_max > 0.0)) throw DataError("limiter f_max must be positive");
  return p;
}

JointVector rest_pose() { return (JointVector() << 0.4, 0.0, 0.0, 1.2, 0.0).finished(); }

// Hand stroke side to side in y at the rest height.
JointPath wipe_path(const ArmModel& arm) {
  const JointVector rest = rest_pose();
  const Vector3 centre = attachment_position(arm, rest, "end_effector");
  const double half = 0.08;  // m
  const double times[] = {0.0, 2.0, 5.0, 8.0, 11.0, 13.0};
  const double offsets[] = {0.0, -half, half, -half, half, 0.0};
  std::vector<JointPath::Knot> knots;
  JointVector q = rest;
  for (int k = 0; k < 6; ++k) {
    q = solve_ik(arm, centre + Vector3(0.0, offsets[k], 0.0), q, rest);
    knots.push_back({times[k], q});
  }
  return JointPath(std::move(knots));
}

// Square in the y-z plane through the rest hand position: 1 s lead-in from
// the centre, four 2 s sides starting at the right midpoint, 1 s lead-out.
constexpr double kSquareHalf = 0.05;
constexpr double kSquareLead = 1.0;
constexpr double kSquareSide = 2.0;

Eigen::Vector2d square_point(double s) {
  const double a = kSquareHalf;
  const double u = std::fmod(s, 4.0);
  if (u < 0.5) return {a, 2 * a * u};
  if (u < 1.5) return {a - 2 * a * (u - 0.5), a};
  if (u < 2.5) return {-a, a - 2 * a * (u - 1.5)};
  if (u < 3.5) return {-a + 2 * a * (u - 2.5), -a};
  return {a, -a + 2 * a * (u - 3.5)};
}

// In-plane offsets of the square and of the circle it is taught into, per frame.
void square_offsets(int frames, std::vector<Eigen::Vector2d>& square, std::vector<Eigen::Vector2d>& circle) {
  const double T = 2 * kSquareLead + 4 * kSquareSide;
  for (int k = 0; k < frames; ++k) {
    const double t = k * kFramePeriod;
    Eigen::Vector2d p;
    if (t <= kSquareLead)
      p = {kSquareHalf * t / kSquareLead, 0.0};
    else if (t >= T - kSquareLead)
      p = {kSquareHalf * (T - t) / kSquareLead, 0.0};
    else
      p = square_point((t - kSquareLead) / kSquareSide);
    square.push_back(p);
    const bool looping = t > kSquareLead && t < T - kSquareLead;
    circle.push_back(looping ? Eigen::Vector2d(kSquareHalf * p.normalized()) : p);
  }
}

int square_frames() {
  return static_cast<int>(std::floor((2 * kSquareLead + 4 * kSquareSide) / kFramePeriod + 1e-9)) + 1;
}

JointPath square_path(const ArmModel& arm) {
  const JointVector rest = rest_pose();
  const Vector3 centre = attachment_position(arm, rest, "end_effector");
  std::vector<Eigen::Vector2d> square, circle;
  square_offsets(square_frames(), square, circle);
  std::vector<JointPath::Knot> knots;
  JointVector q = rest;
  for (std::size_t k = 0; k < square.size(); ++k) {
    q = solve_ik(arm, centre + Vector3(0.0, square[k].x(), square[k].y()), q, rest);
    knots.push_back({static_cast<double>(k) * kFramePeriod, q});
  }
  return JointPath(std::move(knots));
}

// Teaching force that bends the square into the circle, found by a few
// passes of iterative learning on the simulated teaching run.
WrenchProfile rounding_wrench(const ArmModel& arm, const JointPath& path, const SessionConfig& config) {
  const IntersensoryModel model = IntersensoryModel::oracle(arm);
  const Vector3 centre = attachment_position(arm, rest_pose(), "end_effector");
  std::vector<Eigen::Vector2d> square, circle;
  const int frames = path.frame_count();
  square_offsets(frames, square, circle);
  constexpr double kGain = 1000.0;  // N/m, roughly the hand stiffness
  std::vector<Vector3> force(frames, Vector3::Zero());
  WrenchProfile wrench;
  for (int pass = 0; pass <= 5; ++pass) {
    std::vector<WrenchProfile::Knot> knots;
    for (int k = 0; k < frames; ++k) knots.push_back({k * kFramePeriod, force[k]});
    wrench = WrenchProfile(std::move(knots));
    if (pass == 5) break;
    const Trajectory taught = run_teaching(arm, model, path, wrench, config);
    for (int k = 0; k < frames; ++k) {
      const Vector3 target = centre + Vector3(0.0, circle[k].x(), circle[k].y());
      force[k] += kGain * (target - attachment_position(arm, taught.frames[k].theta_true, "end_effector"));
    }
  }
  return wrench;
}

ScenarioConfig arm_sweep(bool limiter) {
  ScenarioConfig c;
  c.path_name = "arm-sweep";
  const Vector3 dir = Vector3(1.0, 1.0, 0.0).normalized();
  if (limiter) {
    c.name = "arm-sweep-limiter";
    c.session.stiffness = {30.0, 30.0};
    c.session.tension.f_min = 75.0;
    c.session.limiter = LimiterParams{};
    c.wrench = WrenchProfile::pulse(70.0 * dir, 2.0, 11.0);
  } else {
    c.name = "arm-sweep";
    c.session.stiffness = {30.0, 3.0};
    c.session.tension.f_min = 120.0;
    c.wrench = WrenchProfile::pulse(100.0 * dir, 2.0, 11.0);
  }
  return c;
}

ScenarioConfig plane_wipe() {
  ScenarioConfig c;
  c.name = "plane-wipe";
  c.path_name = "plane-wipe";
  c.session.stiffness = {30.0, 30.0};
  c.session.tension.f_min = 75.0;
  const ArmModel arm = default_arm();
  ContactPlane plane;
  plane.point = attachment_position(arm, rest_pose(), "end_effector") - Vector3(0.0, 0.0, 0.010);
  plane.normal = Vector3::UnitZ();
  plane.stiffness = 3000.0;
  c.session.contact = plane;
  c.wrench = WrenchProfile::pulse(Vector3(0.0, 0.0, -30.0), 1.0, 12.0);
  TaskSpec task;
  task.kind = TaskSpec::Kind::contact;
  task.t_begin = 2.0;
  task.t_end = 11.0;
  c.task = task;
  return c;
}

ScenarioConfig square_to_circle() {
  ScenarioConfig c;
  c.name = "square-to-circle";
  c.path_name = "square";
  c.session.stiffness = {30.0, 30.0};
  c.session.tension.f_min = 75.0;
  LimiterParams limiter;
  limiter.f_max = 200.0;
  c.session.limiter = limiter;
  const ArmModel arm = default_arm();
  c.wrench = rounding_wrench(arm, square_path(arm), c.session);
  TaskSpec task;
  task.kind = TaskSpec::Kind::path;
  task.t_begin = kSquareLead;
  task.t_end = kSquareLead + 4 * kSquareSide;
  c.task = task;
  return c;
}

std::string resolve_file(const std::string& file, const std::string& base_dir) {
  const std::filesystem::path p(file);
  if (p.is_absolute() || base_dir.empty()) return file;
  return (std::filesystem::path(base_dir) / p).string();
}

}  // namespace

// ---------------------------------------------------------------------------
// JSON

json to_json(const WrenchProfile& w) {
  json knots = json::array();
  for (const WrenchProfile::Knot& k : w.knots()) knots.push_back({{"t", k.time}, {"force", vec_json(k.force)}});
  return {{"attachment", w.attachment()}, {"knots", knots}};
}

WrenchProfile wrench_from_json(const json& w) {
  if (!w.is_object()) throw DataError("wrench profile must be a JSON object");
  try {
    const std::string attachment = w.value("attachment", std::string("end_effector"));
    if (w.contains("pulse")) {
      const json& p = w.at("pulse");
      return WrenchProfile::pulse(fixed_from<3>(p.at("force"), "pulse force"), p.at("t0").get<double>(),
                                  p.at("t1").get<double>(), p.value("ramp", 0.5), attachment);
    }
    std::vector<WrenchProfile::Knot> knots;
    for (const json& k : w.value("knots", json::array()))
      knots.push_back({k.at("t").get<double>(), fixed_from<3>(k.at("force"), "wrench force")});
    return WrenchProfile(std::move(knots), attachment);
  } catch (const json::exception& e) {
    throw DataError(std::string("wrench profile: ") + e.what());
  } catch (const DomainError& e) {
    throw DataError(std::string("wrench profile: ") + e.what());
  }
}

json to_json(const ScenarioConfig& c) {
  json doc;
  doc["name"] = c.name;
  doc["arm"] = c.arm;
  doc["model"] = c.model;
  if (c.keyframes.empty()) {
    doc["path"] = c.path_name;
  } else {
    json knots = json::array();
    for (const JointPath::Knot& k : c.keyframes) knots.push_back({{"t", k.time}, {"q", vec_json(k.q)}});
    doc["path"] = {{"keyframes", knots}};
  }
  doc["wrench"] = to_json(c.wrench);

  const SessionConfig& s = c.session;
  doc["stiffness"] = {{"K", s.stiffness.K}, {"f_bias", s.stiffness.f_bias}};
  doc["tension"] = {{"f_min", s.tension.f_min}, {"regularization", s.tension.regularization}};
  doc["limiter"] = s.limiter ? limiter_json(*s.limiter) : json{{"enabled", false}};
  doc["noise"] = {{"tension", s.tension_noise}, {"length", s.length_noise}};
  doc["relaxation_time"] = s.relaxation_time;
  if (s.contact)
    doc["contact"] = {{"point", vec_json(s.contact->point)},
                      {"normal", vec_json(s.contact->normal)},
                      {"stiffness", s.contact->stiffness}};
  if (!s.compensation_mask.empty()) doc["compensation_mask"] = s.compensation_mask;
  doc["seed"] = s.seed;
  json variants = json::array();
  for (MethodVariant v : c.variants) variants.push_back(variant_name(v));
  doc["variants"] = variants;
  if (c.task) {
    const TaskSpec& t = *c.task;
    doc["task"] = {{"kind", task_kind_name(t.kind)}, {"window", {t.t_begin, t.t_end}},
                   {"max_distance", t.max_distance}, {"min_force", t.min_force},
                   {"max_hausdorff", t.max_hausdorff}, {"attachment", t.attachment}};
  }
  doc["output_dir"] = c.output_dir;
  return doc;
}

ScenarioConfig scenario_from_json(const json& doc) {
  if (!doc.is_object()) throw DataError("scenario config must be a JSON object");
  try {
    ScenarioConfig c;
    c.name = doc.value("name", std::string());
    c.arm = doc.value("arm", c.arm);
    c.model = doc.value("model", c.model);
    if (doc.contains("path")) {
      const json& p = doc.at("path");
      if (p.is_string()) {
        c.path_name = p.get<std::string>();
      } else {
        for (const json& k : p.at("keyframes"))
          c.keyframes.push_back({k.at("t").get<double>(), fixed_from<kJointCount>(k.at("q"), "keyframe q")});
      }
    } else {
      c.path_name = "arm-sweep";
    }
    if (doc.contains("wrench")) c.wrench = wrench_from_json(doc.at("wrench"));

    SessionConfig& s = c.session;
    if (doc.contains("stiffness")) {
      s.stiffness.K = doc["stiffness"].value("K", s.stiffness.K);
      s.stiffness.f_bias = doc["stiffness"].value("f_bias", s.stiffness.f_bias);
      if (!(s.stiffness.K > 0.0)) throw DataError("stiffness K must be positive");
    }
    if (doc.contains("tension")) {
      s.tension.f_min = doc["tension"].value("f_min", s.tension.f_min);
      s.tension.regularization = doc["tension"].value("regularization", s.tension.regularization);
    }
    if (doc.contains("limiter")) s.limiter = limiter_from(doc.at("limiter"));
    if (doc.contains("noise")) {
      s.tension_noise = doc["noise"].value("tension", 0.0);
      s.length_noise = doc["noise"].value("length", 0.0);
    }
    s.relaxation_time = doc.value("relaxation_time", 0.0);
    if (doc.contains("contact")) {
      const json& p = doc.at("contact");
      ContactPlane plane;
      plane.point = fixed_from<3>(p.at("point"), "contact point");
      plane.normal = fixed_from<3>(p.value("normal", json{0.0, 0.0, 1.0}), "contact normal").normalized();
      plane.stiffness = p.value("stiffness", plane.stiffness);
      s.contact = plane;
    }
    if (doc.contains("compensation_mask")) s.compensation_mask = doc.at("compensation_mask").get<std::vector<bool>>();
    s.seed = doc.value("seed", std::uint64_t{0});
    s.scenario = c.name;
    if (doc.contains("variants")) {
      c.variants.clear();
      for (const json& v : doc.at("variants")) c.variants.push_back(parse_variant(v.get<std::string>()));
    }
    if (doc.contains("task")) {
      const json& t = doc.at("task");
      TaskSpec task;
      const std::string kind = t.at("kind").get<std::string>();
      if (kind == "contact")
        task.kind = TaskSpec::Kind::contact;
      else if (kind == "path")
        task.kind = TaskSpec::Kind::path;
      else
        throw DataError("unknown task kind '" + kind + "'");
      const auto window = t.at("window").get<std::vector<double>>();
      if (window.size() != 2 || !(window[1] > window[0])) throw DataError("task window needs [begin, end]");
      task.t_begin = window[0];
      task.t_end = window[1];
      task.max_distance = t.value("max_distance", task.max_distance);
      task.min_force = t.value("min_force", task.min_force);
      task.max_hausdorff = t.value("max_hausdorff", task.max_hausdorff);
      task.attachment = t.value("attachment", task.attachment);
      c.task = task;
    }
    c.output_dir = doc.value("output_dir", c.output_dir);
    return c;
  } catch (const json::exception& e) {
    throw DataError(std::string("scenario config: ") + e.what());
  } catch (const DomainError& e) {
    throw DataError(std::string("scenario config: ") + e.what());
  }
}

ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open scenario config '" + path + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw DataError("'" + path + "' is not valid JSON: " + e.what());
  }
  return scenario_from_json(doc);
}

void save_scenario(const ScenarioConfig& config, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << to_json(config).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Built-ins

std::vector<std::string> builtin_scenario_names() {
  return {"arm-sweep", "arm-sweep-limiter", "plane-wipe", "square-to-circle"};
}

ScenarioConfig builtin_scenario(const std::string& name) {
  ScenarioConfig c;
  if (name == "arm-sweep")
    c = arm_sweep(false);
  else if (name == "arm-sweep-limiter")
    c = arm_sweep(true);
  else if (name == "plane-wipe")
    c = plane_wipe();
  else if (name == "square-to-circle")
    c = square_to_circle();
  else
    throw DomainError("unknown built-in scenario '" + name + "'");
  c.session.scenario = c.name;
  return c;
}

std::vector<std::string> builtin_path_names() { return {"arm-sweep", "plane-wipe", "square"}; }

JointPath builtin_path(const ArmModel& arm, const std::string& name) {
  if (name == "arm-sweep") {
    const JointVector a = (JointVector() << 0.0, 0.0, 0.0, 0.5, 0.0).finished();
    const JointVector b = (JointVector() << 0.3, 0.15, 0.3, 1.0, 0.2).finished();
    const JointVector c = (JointVector() << -0.1, -0.15, -0.3, 1.3, -0.2).finished();
    return JointPath({{0.0, a}, {4.0, b}, {8.0, c}, {14.0, a}});
  }
  if (name == "plane-wipe") return wipe_path(arm);
  if (name == "square") return square_path(arm);
  throw DomainError("unknown built-in path '" + name + "'");
}

Scenario resolve_scenario(const ScenarioConfig& config, const std::string& base_dir) {
  ArmModel arm = config.arm == "default" ? default_arm() : load_arm(resolve_file(config.arm, base_dir));
  IntersensoryModel model =
      config.model == "oracle" ? IntersensoryModel::oracle(arm) : load_model(resolve_file(config.model, base_dir));
  if (model.muscle_count() != arm.muscle_count()) throw DataError("model and arm disagree on the muscle count");
  ComparisonSpec spec;
  spec.path = config.keyframes.empty() ? builtin_path(arm, config.path_name) : JointPath(config.keyframes);
  spec.wrench = config.wrench;
  spec.config = config.session;
  spec.config.scenario = config.name;
  spec.variants = config.variants;
  spec.model_id = config.model;
  if (!spec.wrench.empty()) spec.wrench.validate(arm);
  if (config.task && config.task->kind == TaskSpec::Kind::contact && !config.session.contact)
    throw DataError("contact task needs a contact plane");
  return {config.name, std::move(arm), std::move(model), std::move(spec), config.task};
}

// ---------------------------------------------------------------------------
// Geometry helpers

JointVector solve_ik(const ArmModel& arm, const Vector3& target, const JointVector& seed, const JointVector& rest,
                     const std::string& attachment) {
  const JointVector lo = arm.lower_limits(), hi = arm.upper_limits();
  JointVector q = seed.cwiseMax(lo).cwiseMin(hi);
  for (int it = 0; it < 200; ++it) {
    const Vector3 err = target - attachment_position(arm, q, attachment);
    if (err.norm() < 1e-10) break;
    const Eigen::Matrix<double, 3, kJointCount> J = attachment_jacobian(arm, q, attachment);
    const Eigen::Matrix3d A = J * J.transpose() + 1e-6 * Eigen::Matrix3d::Identity();
    const Eigen::Matrix<double, kJointCount, 3> pinv = J.transpose() * A.inverse();
    const Eigen::Matrix<double, kJointCount, kJointCount> null =
        Eigen::Matrix<double, kJointCount, kJointCount>::Identity() - pinv * J;
    q = (q + pinv * err + 0.1 * null * (rest - q)).cwiseMax(lo).cwiseMin(hi);
  }
  return q;
}

std::vector<Vector3> attachment_path(const ArmModel& arm, const Trajectory& trajectory, const std::string& attachment) {
  std::vector<Vector3> out;
  out.reserve(trajectory.size());
  for (const TimedFrame& fr : trajectory.frames) out.push_back(attachment_position(arm, fr.theta_true, attachment));
  return out;
}

double hausdorff_distance(const std::vector<Vector3>& a, const std::vector<Vector3>& b) {
  if (a.empty() || b.empty()) throw DataError("Hausdorff distance of an empty point set");
  auto directed = [](const std::vector<Vector3>& p, const std::vector<Vector3>& q) {
    double h = 0.0;
    for (const Vector3& x : p) {
      double nearest = std::numeric_limits<double>::infinity();
      for (const Vector3& y : q) nearest = std::min(nearest, (x - y).squaredNorm());
      h = std::max(h, nearest);
    }
    return std::sqrt(h);
  };
  return std::max(directed(a, b), directed(b, a));
}

TaskScore score_task(const TaskSpec& task, const ArmModel& arm, const Trajectory& reproduced, const Trajectory& taught,
                     const std::optional<ContactPlane>& plane) {
  auto window = [&](const Trajectory& tr) {
    std::vector<Vector3> pts;
    for (const TimedFrame& fr : tr.frames)
      if (fr.time() >= task.t_begin - 1e-9 && fr.time() <= task.t_end + 1e-9)
        pts.push_back(attachment_position(arm, fr.theta_true, task.attachment));
    if (pts.empty()) throw DataError("task window contains no frames");
    return pts;
  };
  TaskScore score;
  if (task.kind == TaskSpec::Kind::contact) {
    if (!plane) throw DataError("contact task needs a contact plane");
    const Vector3 n = plane->normal.normalized();
    score.min_force = std::numeric_limits<double>::infinity();
    for (const Vector3& x : window(reproduced)) {
      const double d = n.dot(x - plane->point);
      score.max_distance = std::max(score.max_distance, std::abs(d));
      score.min_force = std::min(score.min_force, plane->stiffness * std::max(0.0, -d));
    }
    score.success = score.max_distance <= task.max_distance && score.min_force >= task.min_force;
  } else {
    score.hausdorff = hausdorff_distance(window(reproduced), window(taught));
    score.success = score.hausdorff <= task.max_hausdorff;
  }
  return score;
}

}  // namespace msk
