#include "mskteach/bridge.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <utility>

namespace msk::bridge {

using nlohmann::json;

std::string phase_name(Phase p) {
  switch (p) {
    case Phase::idle: return "idle";
    case Phase::original: return "original";
    case Phase::teaching: return "teaching";
    case Phase::reproduction: return "reproduction";
  }
  return "idle";
}

Phase parse_phase(const std::string& name) {
  for (Phase p : {Phase::idle, Phase::original, Phase::teaching, Phase::reproduction})
    if (phase_name(p) == name) return p;
  throw ProtocolError("unknown phase '" + name + "' (idle, original, teaching, reproduction)");
}

// ---------------------------------------------------------------------------
// Codec

namespace {

template <int N>
Eigen::Matrix<double, N, 1> fixed_vector(const json& v, const char* what) {
  if (!v.is_array() || v.size() != N) throw ProtocolError(std::string(what) + " must be an array of " + std::to_string(N));
  Eigen::Matrix<double, N, 1> out;
  for (int i = 0; i < N; ++i) {
    if (!v[i].is_number()) throw ProtocolError(std::string(what) + " must hold numbers");
    out(i) = v[i].get<double>();
  }
  if (!out.allFinite()) throw ProtocolError(std::string(what) + " must be finite");
  return out;
}

json array_of(const Eigen::VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Eigen::VectorXd dynamic_vector(const json& v) {
  const std::vector<double> x = v.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
}

std::string variant_list() {
  std::string out;
  for (MethodVariant v : kAllVariants) out += (out.empty() ? "" : ", ") + variant_name(v);
  return out;
}

}  // namespace

std::string command_name(const Command& command) {
  static const char* names[] = {"ApplyWrench", "SetPhase", "LoadScenario", "SaveSession", "StepRate"};
  return names[command.index()];
}

Inbound parse_inbound(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ProtocolError("message must be a JSON object");
  if (!doc.contains("protocol_version") || doc["protocol_version"] != kProtocolVersion)
    throw ProtocolError("protocol_version must be " + std::to_string(kProtocolVersion));
  if (!doc.contains("seq") || !doc["seq"].is_number_integer()) throw ProtocolError("integer seq is required");
  if (!doc.contains("type") || !doc["type"].is_string()) throw ProtocolError("string type is required");

  Inbound in;
  in.seq = doc["seq"].get<long>();
  const std::string type = doc["type"];
  try {
    if (type == "ApplyWrench") {
      in.command = ApplyWrench{fixed_vector<3>(doc.at("force"), "force")};
    } else if (type == "SetPhase") {
      SetPhase c;
      c.phase = parse_phase(doc.at("phase").get<std::string>());
      if (doc.contains("variant")) {
        try {
          c.variant = parse_variant(doc["variant"].get<std::string>());
        } catch (const DomainError&) {
          throw ProtocolError("unknown variant " + doc["variant"].dump() + " (" + variant_list() + ")");
        }
      }
      in.command = c;
    } else if (type == "LoadScenario") {
      const json& c = doc.at("config");
      if (!c.is_string() && !c.is_object()) throw ProtocolError("config must be a scenario name or object");
      in.command = LoadScenario{c};
    } else if (type == "SaveSession") {
      const std::string path = doc.at("path").get<std::string>();
      if (path.empty()) throw ProtocolError("path must not be empty");
      in.command = SaveSession{path};
    } else if (type == "StepRate") {
      const double f = doc.at("factor").get<double>();
      if (!(f > 0.0 && f <= kMaxStepRate)) throw ProtocolError("factor must lie in (0, 50]");
      in.command = StepRate{f};
    } else {
      throw ProtocolError("unknown message type '" + type + "'");
    }
  } catch (const json::exception& e) {
    throw ProtocolError(type + ": " + e.what());
  }
  return in;
}

std::string encode_inbound(long seq, const Command& command) {
  json doc{{"type", command_name(command)}};
  std::visit(
      [&](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, ApplyWrench>) {
          doc["force"] = array_of(c.force);
        } else if constexpr (std::is_same_v<T, SetPhase>) {
          doc["phase"] = phase_name(c.phase);
          if (c.phase == Phase::reproduction) doc["variant"] = variant_name(c.variant);
        } else if constexpr (std::is_same_v<T, LoadScenario>) {
          doc["config"] = c.config;
        } else if constexpr (std::is_same_v<T, SaveSession>) {
          doc["path"] = c.path;
        } else {
          doc["factor"] = c.factor;
        }
      },
      command);
  return envelope(std::move(doc), seq);
}

std::string envelope(json body, long seq) {
  body["protocol_version"] = kProtocolVersion;
  body["seq"] = seq;
  return body.dump();
}

json to_json(const StateSnapshot& s) {
  json j{{"type", "state"},
         {"sim_time", s.sim_time},
         {"phase", phase_name(s.phase)},
         {"theta_true", array_of(s.theta_true)},
         {"end_effector", array_of(s.end_effector)},
         {"f", array_of(s.f)},
         {"delta_e", array_of(s.delta_e)},
         {"wrench", array_of(s.wrench)}};
  j["variant"] = s.variant ? json(variant_name(*s.variant)) : json(nullptr);
  return j;
}

StateSnapshot snapshot_from_json(const json& body) {
  try {
    StateSnapshot s;
    s.sim_time = body.at("sim_time").get<double>();
    s.phase = parse_phase(body.at("phase").get<std::string>());
    if (body.contains("variant") && !body["variant"].is_null()) s.variant = parse_variant(body["variant"]);
    s.theta_true = fixed_vector<kJointCount>(body.at("theta_true"), "theta_true");
    s.end_effector = fixed_vector<3>(body.at("end_effector"), "end_effector");
    s.f = dynamic_vector(body.at("f"));
    s.delta_e = dynamic_vector(body.at("delta_e"));
    s.wrench = fixed_vector<3>(body.at("wrench"), "wrench");
    return s;
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("state message: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Live session

LiveSession::LiveSession(ScenarioConfig config, std::string base_dir)
    : base_dir_(std::move(base_dir)), config_(std::move(config)), scenario_(resolve_scenario(config_, base_dir_)) {
  start(Phase::original, MethodVariant::ALL);
}

void LiveSession::load(ScenarioConfig config) {
  Scenario next = resolve_scenario(config, base_dir_);
  runner_.reset();
  config_ = std::move(config);
  scenario_ = std::move(next);
  original_.reset();
  taught_.reset();
  reproduced_.clear();
  held_force_.setZero();
  start(Phase::original, MethodVariant::ALL);
}

void LiveSession::start(Phase phase, MethodVariant variant) {
  if (phase == Phase::reproduction && !taught_) throw ProtocolError("no teaching run recorded yet");
  runner_.reset();
  phase_ = Phase::idle;
  const Scenario& s = scenario_;
  if (phase == Phase::original || phase == Phase::teaching) {
    runner_.emplace(PhaseRunner::commanded(s.arm, s.model, s.spec.path, s.spec.config));
  } else if (phase == Phase::reproduction) {
    runner_.emplace(PhaseRunner::replay(
        s.arm, *taught_,
        assemble_reproduction(*taught_, variant, s.model, s.spec.config.stiffness, s.spec.config.compensation_mask),
        s.spec.config));
  } else {
    return;
  }
  phase_ = phase;
  variant_ = variant;
  sim_time_ = 0.0;
  last_ = runner_->last_reading();
  last_delta_e_ = MuscleVector::Zero(s.arm.muscle_count());
  last_force_.setZero();
}

Vector3 LiveSession::applied_force() const {
  if (static_cast<double>(clock_ticks_ - wrench_tick_) * kControlPeriod >= kWrenchHold) return Vector3::Zero();
  return held_force_;
}

void LiveSession::release_wrench() { held_force_.setZero(); }

void LiveSession::tick() {
  if (runner_) {
    ExternalWrench w{Vector3::Zero(), scenario_.spec.wrench.attachment()};
    if (phase_ == Phase::teaching) w.force = applied_force();
    const TickSample s = runner_->step(w);
    last_ = s.reading;
    last_delta_e_ = s.delta_e;
    last_force_ = w.force;
    sim_time_ = runner_->time();
    if (runner_->finished()) finish();
  }
  ++clock_ticks_;
}

void LiveSession::finish() {
  Trajectory tr = runner_->take_trajectory();
  runner_.reset();
  const std::string model = scenario_.model.kind() == ModelKind::oracle ? "oracle" : "learned";
  json event{{"type", "phase_complete"}, {"phase", phase_name(phase_)}, {"frames", tr.size()}};
  switch (phase_) {
    case Phase::original:
      tr.meta.phase = "original";
      tr.meta.model = model;
      original_ = std::move(tr);
      break;
    case Phase::teaching:
      tr.meta.phase = "teaching";
      tr.meta.model = model;
      taught_ = std::move(tr);
      reproduced_.clear();
      break;
    case Phase::reproduction: {
      tr.meta.phase = "reproduction:" + variant_name(variant_);
      tr.meta.model = taught_->meta.model;
      const ErrorReport e = metric_E(*taught_, tr);
      event["variant"] = variant_name(variant_);
      event["E"] = e.E;
      event["E_deg"] = e.E_degrees();
      reproduced_.insert_or_assign(variant_, std::move(tr));
      break;
    }
    case Phase::idle: break;
  }
  events_.push_back(std::move(event));
  phase_ = Phase::idle;
}

StateSnapshot LiveSession::snapshot() const {
  StateSnapshot s;
  s.sim_time = sim_time_;
  s.phase = phase_;
  if (phase_ == Phase::reproduction) s.variant = variant_;
  s.theta_true = last_.q_true;
  s.end_effector = attachment_position(scenario_.arm, last_.q_true, "end_effector");
  s.f = last_.f;
  s.delta_e = last_delta_e_;
  s.wrench = last_force_;
  return s;
}

std::vector<json> LiveSession::take_events() { return std::exchange(events_, {}); }

json LiveSession::save(const std::string& dir) const {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  json files = json::array();
  auto write = [&](const Trajectory& tr, const std::string& name) {
    const std::string path = (fs::path(dir) / name).string();
    save_trajectory(tr, path);
    files.push_back(path);
  };
  if (original_) write(*original_, "original.csv");
  if (taught_) write(*taught_, "teaching.csv");
  for (const auto& [v, tr] : reproduced_) write(tr, "reproduction_" + variant_name(v) + ".csv");
  const std::string scenario_path = (fs::path(dir) / "scenario.json").string();
  save_scenario(config_, scenario_path);
  files.push_back(scenario_path);
  return json{{"type", "saved"}, {"files", files}};
}

json LiveSession::apply(const Command& command) {
  json ack{{"type", "ack"}, {"command", command_name(command)}};
  try {
    if (const auto* c = std::get_if<ApplyWrench>(&command)) {
      Vector3 f = c->force;
      if (!f.allFinite()) throw ProtocolError("force must be finite");
      const double cap = scenario_.arm.wrench_cap();
      const bool clamped = f.norm() > cap;
      if (clamped) f *= cap / f.norm();
      held_force_ = f;
      wrench_tick_ = clock_ticks_;
      ack["force"] = array_of(f);
      ack["clamped"] = clamped;
    } else if (const auto* c = std::get_if<SetPhase>(&command)) {
      start(c->phase, c->variant);
      ack["phase"] = phase_name(c->phase);
    } else if (const auto* c = std::get_if<LoadScenario>(&command)) {
      if (c->config.is_string()) {
        const std::string name = c->config.get<std::string>();
        const std::vector<std::string> names = builtin_scenario_names();
        const bool builtin = std::find(names.begin(), names.end(), name) != names.end();
        load(builtin ? builtin_scenario(name) : load_scenario(name));
      } else {
        load(scenario_from_json(c->config));
      }
      ack["scenario"] = scenario_.name;
    } else if (const auto* c = std::get_if<SaveSession>(&command)) {
      return save(c->path);
    } else if (const auto* c = std::get_if<StepRate>(&command)) {
      if (!(c->factor > 0.0 && c->factor <= kMaxStepRate)) throw ProtocolError("factor must lie in (0, 50]");
      step_rate_ = c->factor;
    }
  } catch (const std::exception& e) {
    return json{{"type", "error"}, {"message", e.what()}};
  }
  return ack;
}

}  // namespace msk::bridge
