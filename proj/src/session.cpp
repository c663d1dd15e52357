#include "mskteach/session.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

namespace msk {

// ---------------------------------------------------------------------------
// Schedules

JointPath::JointPath(std::vector<Knot> knots) : knots_(std::move(knots)) {
  if (knots_.empty()) throw DomainError("joint path needs at least one knot");
  if (knots_.front().time != 0.0) throw DomainError("joint path must start at t = 0");
  for (std::size_t k = 1; k < knots_.size(); ++k)
    if (!(knots_[k].time > knots_[k - 1].time)) throw DomainError("joint path knot times must increase strictly");
}

JointVector JointPath::at(double t) const {
  if (knots_.empty()) throw DomainError("empty joint path");
  if (t <= knots_.front().time) return knots_.front().q;
  if (t >= knots_.back().time) return knots_.back().q;
  auto hi = std::upper_bound(knots_.begin(), knots_.end(), t, [](double x, const Knot& k) { return x < k.time; });
  auto lo = hi - 1;
  const double a = (t - lo->time) / (hi->time - lo->time);
  return lo->q + a * (hi->q - lo->q);
}

int JointPath::frame_count() const { return static_cast<int>(std::floor(duration() / kFramePeriod + 1e-9)) + 1; }

WrenchProfile::WrenchProfile(std::vector<Knot> knots, std::string attachment)
    : knots_(std::move(knots)), attachment_(std::move(attachment)) {
  for (std::size_t k = 1; k < knots_.size(); ++k)
    if (!(knots_[k].time > knots_[k - 1].time)) throw DomainError("wrench knot times must increase strictly");
  for (const Knot& k : knots_)
    if (!k.force.allFinite() || !std::isfinite(k.time)) throw DomainError("wrench knots must be finite");
}

ExternalWrench WrenchProfile::at(double t) const {
  ExternalWrench w{Vector3::Zero(), attachment_};
  if (knots_.empty()) return w;
  if (t <= knots_.front().time) {
    w.force = knots_.front().force;
  } else if (t >= knots_.back().time) {
    w.force = knots_.back().force;
  } else {
    auto hi = std::upper_bound(knots_.begin(), knots_.end(), t, [](double x, const Knot& k) { return x < k.time; });
    auto lo = hi - 1;
    const double a = (t - lo->time) / (hi->time - lo->time);
    w.force = lo->force + a * (hi->force - lo->force);
  }
  return w;
}

void WrenchProfile::validate(const ArmModel& arm) const {
  for (const Knot& k : knots_) validate_wrench(arm, {k.force, attachment_});
}

WrenchProfile WrenchProfile::pulse(const Vector3& force, double t0, double t1, double ramp, std::string attachment) {
  if (!(t1 > t0 + 2.0 * ramp) || !(ramp > 0.0) || t0 < 0.0) throw DomainError("pulse needs t0 >= 0 and room for ramps");
  std::vector<Knot> knots;
  if (t0 > 0.0) knots.push_back({0.0, Vector3::Zero()});
  knots.push_back({t0, Vector3::Zero()});
  knots.push_back({t0 + ramp, force});
  knots.push_back({t1 - ramp, force});
  knots.push_back({t1, Vector3::Zero()});
  return WrenchProfile(std::move(knots), std::move(attachment));
}

PlantConfig SessionConfig::plant_config() const {
  PlantConfig pc;
  pc.stiffness_control = stiffness;
  pc.relaxation_time = relaxation_time;
  pc.tension_noise = tension_noise;
  pc.length_noise = length_noise;
  pc.seed = seed;
  pc.contact = contact;
  return pc;
}

// ---------------------------------------------------------------------------
// Tick runner

TickRunner::TickRunner(const ArmModel& arm, const SessionConfig& config, const MuscleLengths& initial_command,
                       const JointVector& q_seed, bool limiter_enabled)
    : plant_(arm, config.plant_config(), arm.clamp(q_seed)) {
  if (limiter_enabled && config.limiter) limiter_.emplace(*config.limiter, arm.muscle_count());
  last_ = plant_.settle(initial_command);
}

TickSample TickRunner::tick(const MuscleLengths& command, const ExternalWrench& wrench) {
  TickSample s;
  s.time = time();
  s.wrench = wrench;
  s.delta_e = limiter_ ? limiter_->delta_e : MuscleVector::Zero(command.size());
  s.command = limiter_ ? MuscleLengths(command + s.delta_e) : command;
  try {
    s.reading = plant_.step(s.command, wrench);
  } catch (const SolverError& e) {
    throw e.within("tick " + std::to_string(ticks_));
  }
  if (limiter_) limiter_update(*limiter_, s.reading.f);
  last_ = s.reading;
  ++ticks_;
  return s;
}

// ---------------------------------------------------------------------------
// Phases

FrameCommands plan_commands(const ArmModel& arm, const IntersensoryModel& model, const JointPath& path,
                            const SessionConfig& config) {
  const int frames = path.frame_count();
  if (frames < 2) throw DataError("a trajectory needs at least 2 frames; path lasts " +
                                  std::to_string(path.duration()) + " s");
  FrameCommands out;
  for (int k = 0; k < frames; ++k) {
    const JointVector q = path.at(k * kFramePeriod);
    if (!arm.within_limits(q, 1e-9)) throw DomainError("reference path leaves the joint limits at frame " + std::to_string(k));
    const TensionSolution f = solve_f_ref(arm, q, config.tension);
    if (!f.feasible) ++out.infeasible_frames;
    out.theta_ref.push_back(q);
    out.l_ref.push_back(target_muscle_length(model, q, f.f, config.stiffness));
    out.f_ref.push_back(f.f);
  }
  return out;
}

namespace {

MuscleLengths interpolate(const std::vector<MuscleLengths>& frames, long tick) {
  const long k = tick / kTicksPerFrame;
  const long j = tick % kTicksPerFrame;
  if (j == 0) return frames[k];
  const double a = static_cast<double>(j) / kTicksPerFrame;
  return frames[k] + a * (frames[k + 1] - frames[k]);
}

}  // namespace

PhaseRunner::PhaseRunner(const ArmModel& arm, const SessionConfig& config, FrameCommands frames, bool limiter)
    : frames_(std::move(frames)),
      runner_(arm, config, frames_.l_ref.front(), frames_.theta_ref.front(), limiter),
      total_ticks_(static_cast<long>(frames_.l_ref.size() - 1) * kTicksPerFrame + 1) {
  trajectory_.meta.scenario = config.scenario;
  trajectory_.meta.limiter = limiter && config.limiter.has_value();
  trajectory_.meta.f_max = config.limiter ? config.limiter->f_max : 0.0;
  trajectory_.meta.seed = config.seed;
}

PhaseRunner PhaseRunner::commanded(const ArmModel& arm, const IntersensoryModel& model, const JointPath& path,
                                   const SessionConfig& config) {
  return PhaseRunner(arm, config, plan_commands(arm, model, path, config), true);
}

PhaseRunner PhaseRunner::replay(const ArmModel& arm, const Trajectory& taught, std::vector<MuscleLengths> commands,
                                const SessionConfig& config) {
  taught.validate();
  if (commands.size() != taught.size()) throw DataError("one reproduction command per taught frame is required");
  FrameCommands frames;
  for (const TimedFrame& f : taught.frames) {
    frames.theta_ref.push_back(f.theta_ref);
    frames.f_ref.push_back(f.f_ref);
  }
  frames.l_ref = std::move(commands);
  PhaseRunner run(arm, config, std::move(frames), false);
  // The recorded l_ref stays the original one; the replayed commands only drive the plant.
  run.recorded_l_ref_.reserve(taught.size());
  for (const TimedFrame& f : taught.frames) run.recorded_l_ref_.push_back(f.l_ref);
  return run;
}

TickSample PhaseRunner::step(const ExternalWrench& wrench) {
  if (finished()) throw DomainError("phase run already finished");
  const long n = next_tick_;
  const TickSample s = runner_.tick(interpolate(frames_.l_ref, n), wrench);
  if (n % kTicksPerFrame == 0) {
    const int k = static_cast<int>(n / kTicksPerFrame);
    TimedFrame fr;
    fr.t = k;
    fr.theta_ref = frames_.theta_ref[k];
    fr.l_ref = recorded_l_ref_.empty() ? frames_.l_ref[k] : recorded_l_ref_[k];
    fr.f_ref = frames_.f_ref[k];
    fr.l_data = s.reading.l;
    fr.f_data = s.reading.f;
    fr.delta_e = s.delta_e;
    fr.theta_true = s.reading.q_true;
    trajectory_.frames.push_back(std::move(fr));
  }
  ++next_tick_;
  return s;
}

namespace {

Trajectory drive(PhaseRunner run, const WrenchProfile* wrench, const TickObserver& observer) {
  while (!run.finished()) {
    const ExternalWrench w = wrench ? wrench->at(run.time()) : ExternalWrench{};
    const TickSample s = run.step(w);
    if (observer) observer(s);
  }
  return run.take_trajectory();
}

Trajectory run_commanded(const ArmModel& arm, const IntersensoryModel& model, const JointPath& path,
                         const WrenchProfile* wrench, const SessionConfig& config, const TickObserver& observer) {
  PhaseRunner run = PhaseRunner::commanded(arm, model, path, config);
  if (wrench) wrench->validate(arm);
  return drive(std::move(run), wrench, observer);
}

std::string model_label(const IntersensoryModel& model) {
  return model.kind() == ModelKind::oracle ? "oracle" : "learned";
}

}  // namespace

Trajectory run_original(const ArmModel& arm, const IntersensoryModel& model, const JointPath& path,
                        const SessionConfig& config, const TickObserver& observer) {
  Trajectory tr = run_commanded(arm, model, path, nullptr, config, observer);
  tr.meta.phase = "original";
  tr.meta.model = model_label(model);
  return tr;
}

Trajectory run_teaching(const ArmModel& arm, const IntersensoryModel& model, const JointPath& path,
                        const WrenchProfile& wrench, const SessionConfig& config, const TickObserver& observer) {
  Trajectory tr = run_commanded(arm, model, path, &wrench, config, observer);
  tr.meta.phase = "teaching";
  tr.meta.model = model_label(model);
  return tr;
}

Trajectory run_reproduction(const ArmModel& arm, const Trajectory& taught, const std::vector<MuscleLengths>& commands,
                            const SessionConfig& config, const TickObserver& observer) {
  Trajectory tr = drive(PhaseRunner::replay(arm, taught, commands, config), nullptr, observer);
  tr.meta.phase = "reproduction";
  tr.meta.model = taught.meta.model;
  return tr;
}

Trajectory run_reproduction(const ArmModel& arm, const IntersensoryModel& model, const Trajectory& taught,
                            MethodVariant variant, const SessionConfig& config, const TickObserver& observer) {
  Trajectory tr = run_reproduction(
      arm, taught, assemble_reproduction(taught, variant, model, config.stiffness, config.compensation_mask), config,
      observer);
  tr.meta.phase = "reproduction:" + variant_name(variant);
  return tr;
}

// ---------------------------------------------------------------------------
// Evaluation

double ErrorReport::E_degrees() const { return E * 180.0 / M_PI; }

ErrorReport metric_E(const Trajectory& taught, const Trajectory& reproduced) {
  if (taught.size() != reproduced.size())
    throw DataError("trajectories differ in length: " + std::to_string(taught.size()) + " vs " +
                    std::to_string(reproduced.size()));
  if (taught.size() == 0) throw DataError("cannot compare empty trajectories");
  ErrorReport r;
  for (std::size_t k = 0; k < taught.size(); ++k) {
    if (taught.frames[k].t != reproduced.frames[k].t) throw DataError("frame indices differ at frame " + std::to_string(k));
    const JointVector d = (taught.frames[k].theta_true - reproduced.frames[k].theta_true).cwiseAbs();
    r.per_frame.push_back(d);
    r.per_joint += d;
    r.E_norm += d.norm();
  }
  const double n = static_cast<double>(taught.size());
  r.per_joint /= n;
  r.E_norm /= n;
  r.E = r.per_joint.mean();
  return r;
}

InfluenceMagnitudes influence_magnitudes(const Elongations& terms) {
  InfluenceMagnitudes m;
  const double n = static_cast<double>(terms.e.size());
  if (n == 0) return m;
  for (std::size_t k = 0; k < terms.e.size(); ++k) {
    m.e += terms.e[k].norm();
    m.h += terms.h[k].norm();
    m.s += terms.s[k].norm();
  }
  m.e /= n;
  m.h /= n;
  m.s /= n;
  return m;
}

const VariantResult& ComparisonReport::result(MethodVariant v) const {
  for (const VariantResult& r : variants)
    if (r.variant == v) return r;
  throw DomainError("variant " + variant_name(v) + " was not run");
}

double ComparisonReport::E(MethodVariant v) const {
  const VariantResult& r = result(v);
  if (!r.error) throw SolverError("variant " + variant_name(v) + " failed: " + r.failure, NAN);
  return r.error->E;
}

ComparisonReport comparison_experiment(const ArmModel& arm, const IntersensoryModel& model, const ComparisonSpec& spec) {
  ComparisonReport rep;
  rep.scenario = spec.config.scenario;
  rep.limiter = spec.config.limiter.has_value();
  rep.f_max = spec.config.limiter ? spec.config.limiter->f_max : 0.0;
  rep.model = spec.model_id;
  rep.seed = spec.config.seed;

  rep.original = run_original(arm, model, spec.path, spec.config);
  rep.taught = run_teaching(arm, model, spec.path, spec.wrench, spec.config);
  rep.original.meta.model = rep.taught.meta.model = spec.model_id;
  for (std::size_t k = 0; k < rep.taught.size(); ++k) {
    const double dev =
        (rep.taught.frames[k].theta_true - rep.original.frames[k].theta_true).lpNorm<Eigen::Infinity>();
    rep.peak_deviation = std::max(rep.peak_deviation, dev);
    rep.max_teaching_tension = std::max(rep.max_teaching_tension, rep.taught.frames[k].f_data.maxCoeff());
  }
  rep.terms = compute_elongations(rep.taught, model, spec.config.stiffness);
  rep.influence = influence_magnitudes(rep.terms);

  for (MethodVariant v : spec.variants) {
    VariantResult r{v, std::nullopt, {}, {}};
    try {
      const auto commands =
          assemble_reproduction(rep.taught, v, model, spec.config.stiffness, rep.terms, spec.config.compensation_mask);
      r.reproduced = run_reproduction(arm, rep.taught, commands, spec.config);
      r.reproduced.meta.phase = "reproduction:" + variant_name(v);
      r.reproduced.meta.model = spec.model_id;
      r.error = metric_E(rep.taught, r.reproduced);
    } catch (const std::exception& e) {
      r.failure = e.what();
    }
    rep.variants.push_back(std::move(r));
  }
  return rep;
}

namespace {

nlohmann::json joints_json(const JointVector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace

nlohmann::json report_json(const ComparisonReport& rep, bool include_curves) {
  nlohmann::json doc;
  doc["scenario"] = rep.scenario;
  doc["limiter"] = rep.limiter;
  if (rep.limiter) doc["f_max"] = rep.f_max;
  doc["model"] = rep.model;
  doc["seed"] = rep.seed;
  doc["frames"] = rep.taught.size();
  doc["frame_period"] = kFramePeriod;
  doc["peak_deviation_rad"] = rep.peak_deviation;
  doc["max_teaching_tension"] = rep.max_teaching_tension;
  doc["influence_mm"] = {{"delta_e", rep.influence.e}, {"delta_h", rep.influence.h}, {"delta_s", rep.influence.s}};
  nlohmann::json table = nlohmann::json::object();
  for (const VariantResult& r : rep.variants) {
    nlohmann::json row;
    if (r.error) {
      row["E_rad"] = r.error->E;
      row["E_deg"] = r.error->E_degrees();
      row["E_norm_rad"] = r.error->E_norm;
      row["per_joint_rad"] = joints_json(r.error->per_joint);
      if (include_curves) {
        nlohmann::json curve = nlohmann::json::array();
        for (const JointVector& d : r.error->per_frame) curve.push_back(joints_json(d));
        row["per_frame_rad"] = curve;
      }
    } else {
      row["error"] = r.failure;
    }
    table[variant_name(r.variant)] = row;
  }
  doc["variants"] = table;
  if (include_curves) {
    nlohmann::json taught = nlohmann::json::array(), original = nlohmann::json::array();
    for (const TimedFrame& f : rep.taught.frames) taught.push_back(joints_json(f.theta_true));
    for (const TimedFrame& f : rep.original.frames) original.push_back(joints_json(f.theta_true));
    doc["theta_taught"] = taught;
    doc["theta_original"] = original;
  }
  return doc;
}

void save_report(const ComparisonReport& rep, const std::string& json_path, const std::string& csv_path) {
  {
    std::ofstream out(json_path);
    if (!out) throw DataError("cannot write '" + json_path + "'");
    out << report_json(rep).dump(2) << '\n';
  }
  std::ofstream out(csv_path);
  if (!out) throw DataError("cannot write '" + csv_path + "'");
  out << "variant,E_rad,E_deg,E_norm_rad";
  for (int j = 1; j <= kJointCount; ++j) out << ",E_joint" << j;
  out << ",status\n" << std::setprecision(17);
  for (const VariantResult& r : rep.variants) {
    out << variant_name(r.variant);
    if (r.error) {
      out << ',' << r.error->E << ',' << r.error->E_degrees() << ',' << r.error->E_norm;
      for (int j = 0; j < kJointCount; ++j) out << ',' << r.error->per_joint(j);
      out << ",ok\n";
    } else {
      for (int j = 0; j < 3 + kJointCount; ++j) out << ',';
      out << ",failed\n";
    }
  }
}

}  // namespace msk
