#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mskteach/scenario.hpp"

#include <json.hpp>

namespace msk::bridge {

// Wire protocol, version 1. Every message in either direction is one JSON
// object in one WebSocket text frame:
//
//   {"protocol_version": 1, "seq": <int>, "type": <string>, ...fields}
//
// Inbound seq must increase strictly per connection. Outbound seq counts
// 1, 2, 3, ... per connection with no gaps.
//
// Inbound types and fields:
//   ApplyWrench   force [N, N, N]           held for 250 ms of simulated time
//   SetPhase      phase "idle" | "original" | "teaching" | "reproduction",
//                 variant (reproduction only, default "ALL")
//   LoadScenario  config: built-in name or scenario JSON object
//   SaveSession   path: directory for the recorded trajectories
//   StepRate      factor: simulated seconds per wall-clock second, (0, 50]
//
// Outbound types:
//   hello          role "controller" | "observer", scenario, variants, tick_s, snapshot_hz
//   state          sim_time s, phase, variant, theta_true rad[5], end_effector m[3],
//                  f N[10], delta_e mm[10], wrench N[3]
//   ack            in_reply_to, command
//   error          in_reply_to (when known), message
//   saved          in_reply_to, files
//   phase_complete phase, variant, frames, and for reproduction E rad, E_deg
inline constexpr int kProtocolVersion = 1;
inline constexpr double kSnapshotPeriod = 0.05;  // s, wall clock
inline constexpr double kWrenchHold = 0.25;      // s, simulated
inline constexpr double kMaxStepRate = 50.0;

class ProtocolError : public DataError {
 public:
  using DataError::DataError;
};

enum class Phase { idle, original, teaching, reproduction };
std::string phase_name(Phase p);
/// Throws ProtocolError for unknown names.
Phase parse_phase(const std::string& name);

struct ApplyWrench {
  Vector3 force = Vector3::Zero();
};
struct SetPhase {
  Phase phase = Phase::idle;
  MethodVariant variant = MethodVariant::ALL;
};
struct LoadScenario {
  nlohmann::json config;
};
struct SaveSession {
  std::string path;
};
struct StepRate {
  double factor = 1.0;
};
using Command = std::variant<ApplyWrench, SetPhase, LoadScenario, SaveSession, StepRate>;

struct Inbound {
  long seq = 0;
  Command command;
};

/// Throws ProtocolError on malformed JSON, a wrong protocol_version, a
/// missing seq, an unknown type or bad fields.
Inbound parse_inbound(const std::string& text);
std::string encode_inbound(long seq, const Command& command);
std::string command_name(const Command& command);

struct StateSnapshot {
  double sim_time = 0.0;  // s since the current phase started
  Phase phase = Phase::idle;
  std::optional<MethodVariant> variant;
  JointVector theta_true = JointVector::Zero();
  Vector3 end_effector = Vector3::Zero();
  MuscleTensions f;
  MuscleVector delta_e;
  Vector3 wrench = Vector3::Zero();
};

/// Message body without the protocol_version/seq envelope.
nlohmann::json to_json(const StateSnapshot& s);
StateSnapshot snapshot_from_json(const nlohmann::json& body);

/// Adds protocol_version and seq to a message body.
std::string envelope(nlohmann::json body, long seq);

/// The simulation side of a live session. Owns the plant through a
/// PhaseRunner; commands take effect at tick boundaries. Single-threaded:
/// the server calls it from its simulation loop only.
///
/// A new session (and every LoadScenario) starts the original phase right
/// away, so with no input it records exactly what run_original records.
/// Finished phases are kept; starting a phase aborts an unfinished one
/// without recording it. The session idles between phases.
class LiveSession {
 public:
  /// `base_dir` resolves relative file references in the config, here and
  /// in later LoadScenario commands.
  explicit LiveSession(ScenarioConfig config, std::string base_dir = "");

  /// Returns the reply body ("ack", "saved" or "error").
  nlohmann::json apply(const Command& command);
  /// One 8 ms tick of the running phase. Idle ticks only advance the wrench clock.
  void tick();
  /// Zeroes the held wrench, as when the controlling client disconnects.
  void release_wrench();

  StateSnapshot snapshot() const;
  Phase phase() const { return phase_; }
  bool running() const { return runner_.has_value(); }
  double step_rate() const { return step_rate_; }
  const Scenario& scenario() const { return scenario_; }
  /// The force the next tick applies to the plant.
  Vector3 applied_force() const;

  const std::optional<Trajectory>& original() const { return original_; }
  const std::optional<Trajectory>& taught() const { return taught_; }
  const std::map<MethodVariant, Trajectory>& reproduced() const { return reproduced_; }

  /// phase_complete bodies since the last call.
  std::vector<nlohmann::json> take_events();

 private:
  void load(ScenarioConfig config);
  void start(Phase phase, MethodVariant variant);
  void finish();
  nlohmann::json save(const std::string& dir) const;

  std::string base_dir_;
  ScenarioConfig config_;
  Scenario scenario_;
  std::optional<PhaseRunner> runner_;
  Phase phase_ = Phase::idle;
  MethodVariant variant_ = MethodVariant::ALL;
  double sim_time_ = 0.0;
  PlantReading last_;
  MuscleVector last_delta_e_;
  Vector3 last_force_ = Vector3::Zero();

  Vector3 held_force_ = Vector3::Zero();
  long wrench_tick_ = 0;  // clock tick at which held_force_ arrived
  long clock_ticks_ = 0;  // every tick() call, idle included

  double step_rate_ = 1.0;
  std::optional<Trajectory> original_, taught_;
  std::map<MethodVariant, Trajectory> reproduced_;
  std::vector<nlohmann::json> events_;
};

struct ServerOptions {
  std::string bind = "127.0.0.1";
  unsigned short port = 8765;  // 0 picks a free port
  bool handle_signals = false; // stop on SIGINT / SIGTERM
};

/// Thrown when the listening socket cannot be opened (port in use, bad address).
class BindError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// WebSocket front end for one LiveSession. The first client to connect
/// controls the session; later clients are read-only observers until the
/// controller leaves. Network I/O runs on a worker thread and talks to the
/// simulation loop only through an inbound and an outbound queue.
class Server {
 public:
  /// Binds immediately; throws BindError.
  Server(LiveSession& session, ServerOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  unsigned short port() const;
  /// Runs the simulation loop in the calling thread until stop().
  void run();
  /// Thread-safe.
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace msk::bridge
