#include "mskteach/session.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "mskteach/scenario.hpp"

namespace msk {
namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("mskteach_" + name)).string();
}

JointVector pose(double a, double b, double c, double d, double e) { return (JointVector() << a, b, c, d, e).finished(); }

JointPath short_path() {
  return JointPath({{0.0, pose(0.0, 0.0, 0.0, 0.5, 0.0)}, {1.0, pose(0.2, 0.1, 0.0, 0.8, 0.1)},
                    {2.0, pose(0.1, -0.1, 0.1, 0.9, 0.0)}});
}

Trajectory offset_copy(const Trajectory& tr, int joint, double offset) {
  Trajectory out = tr;
  for (TimedFrame& f : out.frames) f.theta_true(joint) += offset;
  return out;
}

// ---------------------------------------------------------------------------
// Paths and wrench profiles

TEST(JointPath, InterpolatesAndHolds) {
  const JointPath p = short_path();
  EXPECT_EQ(p.frame_count(), 11);
  EXPECT_DOUBLE_EQ(p.duration(), 2.0);
  EXPECT_LT((p.at(0.5) - pose(0.1, 0.05, 0.0, 0.65, 0.05)).norm(), 1e-15);
  EXPECT_EQ(p.at(-1.0), p.knots().front().q);
  EXPECT_EQ(p.at(5.0), p.knots().back().q);
  EXPECT_EQ(JointPath({{0.0, pose(0, 0, 0, 0.5, 0)}, {14.0, pose(0, 0, 0, 0.5, 0)}}).frame_count(), 71);
  EXPECT_THROW(JointPath({{0.0, JointVector::Zero()}, {0.0, JointVector::Zero()}}), DomainError);
  EXPECT_THROW(JointPath({{0.5, JointVector::Zero()}}), DomainError);
  EXPECT_THROW(JointPath(std::vector<JointPath::Knot>{}), DomainError);
}

TEST(WrenchProfile, PulseShape) {
  const WrenchProfile w = WrenchProfile::pulse(Vector3(0.0, 20.0, 0.0), 2.0, 6.0, 0.5);
  EXPECT_EQ(w.at(1.0).force, Vector3::Zero());
  EXPECT_NEAR(w.at(2.25).force.y(), 10.0, 1e-12);
  EXPECT_EQ(w.at(4.0).force, Vector3(0.0, 20.0, 0.0));
  EXPECT_NEAR(w.at(5.75).force.y(), 10.0, 1e-12);
  EXPECT_EQ(w.at(9.0).force, Vector3::Zero());
  EXPECT_EQ(w.at(4.0).attachment, "end_effector");
  EXPECT_EQ(WrenchProfile().at(3.0).force, Vector3::Zero());
  EXPECT_THROW(WrenchProfile::pulse(Vector3::UnitX(), 2.0, 2.5, 0.5), DomainError);

  WrenchProfile too_strong({{0.0, Vector3(0.0, 0.0, 500.0)}});
  EXPECT_THROW(too_strong.validate(default_arm()), DomainError);
  WrenchProfile nowhere({{0.0, Vector3::UnitX()}}, "tail");
  EXPECT_THROW(nowhere.validate(default_arm()), DomainError);
}

// ---------------------------------------------------------------------------
// Metric

TEST(MetricE, WorkedExamples) {
  const ArmModel arm = default_arm();
  const Trajectory tr = run_original(arm, IntersensoryModel::oracle(arm), short_path(), SessionConfig{});
  const ErrorReport same = metric_E(tr, tr);
  EXPECT_EQ(same.E, 0.0);
  EXPECT_EQ(same.E_norm, 0.0);

  const ErrorReport shifted = metric_E(tr, offset_copy(tr, 2, 0.1));
  EXPECT_NEAR(shifted.E, 0.02, 1e-12);
  EXPECT_NEAR(shifted.E_norm, 0.1, 1e-12);
  EXPECT_NEAR(shifted.per_joint(2), 0.1, 1e-12);
  EXPECT_EQ(shifted.per_joint(0), 0.0);
  EXPECT_EQ(shifted.per_frame.size(), tr.size());
  EXPECT_NEAR(shifted.E_degrees(), 0.02 * 180.0 / M_PI, 1e-12);
}

TEST(MetricE, SymmetricAndTriangle) {
  const ArmModel arm = default_arm();
  const Trajectory a = run_original(arm, IntersensoryModel::oracle(arm), short_path(), SessionConfig{});
  Trajectory b = a, c = a;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> noise(0.0, 0.05);
  for (std::size_t k = 0; k < a.size(); ++k)
    for (int j = 0; j < kJointCount; ++j) {
      b.frames[k].theta_true(j) += noise(rng);
      c.frames[k].theta_true(j) += noise(rng);
    }
  EXPECT_EQ(metric_E(a, b).E, metric_E(b, a).E);
  const ErrorReport ab = metric_E(a, b), bc = metric_E(b, c), ac = metric_E(a, c);
  EXPECT_GE(ab.E, 0.0);
  for (std::size_t k = 0; k < a.size(); ++k)
    EXPECT_TRUE((ac.per_frame[k].array() <= ab.per_frame[k].array() + bc.per_frame[k].array() + 1e-15).all());
}

TEST(MetricE, RejectsMismatchedTrajectories) {
  const ArmModel arm = default_arm();
  const Trajectory a = run_original(arm, IntersensoryModel::oracle(arm), short_path(), SessionConfig{});
  Trajectory shorter = a;
  shorter.frames.pop_back();
  EXPECT_THROW(metric_E(a, shorter), DataError);
  EXPECT_THROW(metric_E(Trajectory{}, Trajectory{}), DataError);
  Trajectory renumbered = a;
  renumbered.frames[3].t = 7;
  EXPECT_THROW(metric_E(a, renumbered), DataError);
}

// ---------------------------------------------------------------------------
// Phase runs

TEST(PlanCommands, MatchesControlPipeline) {
  const ArmModel arm = default_arm();
  const IntersensoryModel model = IntersensoryModel::oracle(arm);
  const SessionConfig config;
  const FrameCommands plan = plan_commands(arm, model, short_path(), config);
  ASSERT_EQ(plan.l_ref.size(), 11u);
  for (int k = 0; k < 11; ++k) {
    const JointVector q = short_path().at(k * kFramePeriod);
    EXPECT_EQ(plan.theta_ref[k], q);
    const MuscleTensions f = solve_f_ref(arm, q, config.tension).f;
    EXPECT_LT((plan.f_ref[k] - f).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((plan.l_ref[k] - target_muscle_length(model, q, f, config.stiffness)).cwiseAbs().maxCoeff(), 1e-12);
  }
  EXPECT_THROW(plan_commands(arm, model, JointPath({{0.0, pose(0, 0, 0, 0.5, 0)}, {0.1, pose(0, 0, 0, 0.5, 0)}}), config),
               DataError);
  EXPECT_THROW(plan_commands(arm, model, JointPath({{0.0, pose(0, 0, 0, -0.3, 0)}, {1.0, pose(0, 0, 0, 0.5, 0)}}), config),
               DomainError);
}

TEST(RunOriginal, HoldsConstantReference) {
  const ArmModel arm = default_arm();
  const JointVector q = pose(0.3, 0.1, -0.2, 0.9, 0.1);
  const Trajectory tr = run_original(arm, IntersensoryModel::oracle(arm), JointPath({{0.0, q}, {2.0, q}}), SessionConfig{});
  EXPECT_LE((tr.frames.back().theta_true - q).lpNorm<Eigen::Infinity>(), 0.02);
  EXPECT_EQ(tr.meta.phase, "original");
  EXPECT_EQ(tr.meta.model, "oracle");
}

TEST(RunOriginal, TimingAndDeterminism) {
  const ArmModel arm = default_arm();
  const IntersensoryModel model = IntersensoryModel::oracle(arm);
  SessionConfig config;
  config.tension_noise = 0.5;
  config.length_noise = 0.01;
  config.seed = 4;
  std::vector<double> times;
  const Trajectory a = run_original(arm, model, short_path(), config, [&](const TickSample& s) { times.push_back(s.time); });
  ASSERT_EQ(times.size(), 10u * kTicksPerFrame + 1);
  for (std::size_t n = 0; n < times.size(); ++n) EXPECT_NEAR(times[n], n * kControlPeriod, 1e-12);
  ASSERT_EQ(a.size(), 11u);
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a.frames[k].t, static_cast<int>(k));

  const Trajectory b = run_original(arm, model, short_path(), config);
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a.frames[k].theta_true, b.frames[k].theta_true);
    EXPECT_EQ(a.frames[k].f_data, b.frames[k].f_data);
    EXPECT_EQ(a.frames[k].l_data, b.frames[k].l_data);
  }
  config.seed = 5;
  const Trajectory c = run_original(arm, model, short_path(), config);
  EXPECT_NE(a.frames[5].f_data, c.frames[5].f_data);
}

TEST(RunTeaching, NullWrenchEqualsOriginal) {
  const ArmModel arm = default_arm();
  const IntersensoryModel model = IntersensoryModel::oracle(arm);
  const Trajectory original = run_original(arm, model, short_path(), SessionConfig{});
  const Trajectory taught = run_teaching(arm, model, short_path(), WrenchProfile{}, SessionConfig{});
  ASSERT_EQ(taught.size(), original.size());
  for (std::size_t k = 0; k < taught.size(); ++k) {
    EXPECT_EQ(taught.frames[k].theta_true, original.frames[k].theta_true);
    EXPECT_EQ(taught.frames[k].l_data, original.frames[k].l_data);
    EXPECT_EQ(taught.frames[k].f_data, original.frames[k].f_data);
  }
  EXPECT_EQ(taught.meta.phase, "teaching");
}

TEST(RunTeaching, CommandsAreThoseOfTheOriginal) {
  const ArmModel arm = default_arm();
  const IntersensoryModel model = IntersensoryModel::oracle(arm);
  SessionConfig config;
  config.limiter = LimiterParams{};
  const Trajectory original = run_original(arm, model, short_path(), config);
  const Trajectory taught =
      run_teaching(arm, model, short_path(), WrenchProfile::pulse(Vector3(0.0, 15.0, 0.0), 0.2, 1.8, 0.3), config);
  double moved = 0.0;
  for (std::size_t k = 0; k < taught.size(); ++k) {
    EXPECT_EQ(taught.frames[k].l_ref, original.frames[k].l_ref);
    EXPECT_EQ(taught.frames[k].f_ref, original.frames[k].f_ref);
    EXPECT_EQ(taught.frames[k].theta_ref, original.frames[k].theta_ref);
    moved = std::max(moved, (taught.frames[k].theta_true - original.frames[k].theta_true).norm());
  }
  EXPECT_GT(moved, 0.01);
}

// 15 N sideways at the hand for 3 s in the middle of the sweep.
WrenchProfile lateral_push() {
  const Vector3 F(0.0, 15.0, 0.0);
  return WrenchProfile({{5.5, Vector3::Zero()}, {5.6, F}, {8.5, F}, {8.6, Vector3::Zero()}});
}

TEST(RunTeaching, LateralPushIsVisible) {
  const Scenario s = resolve_scenario(builtin_scenario("arm-sweep"));
  ASSERT_FALSE(s.spec.config.limiter.has_value());
  const Trajectory taught = run_teaching(s.arm, s.model, s.spec.path, lateral_push(), s.spec.config);
  double peak = 0.0;
  for (const TimedFrame& f : taught.frames) peak = std::max(peak, (f.theta_true - f.theta_ref).lpNorm<Eigen::Infinity>());
  EXPECT_GE(peak, 0.1);
}

TEST(RunTeaching, LimiterBoundsTension) {
  const Scenario s = resolve_scenario(builtin_scenario("arm-sweep-limiter"));
  ASSERT_EQ(s.spec.config.limiter->f_max, 100.0);
  double peak = 0.0, steady = 0.0, relaxed = 0.0;
  run_teaching(s.arm, s.model, s.spec.path, lateral_push(), s.spec.config, [&](const TickSample& t) {
    const double f = t.reading.f.maxCoeff();
    peak = std::max(peak, f);
    if (t.time > 7.5 && t.time < 8.5) steady = std::max(steady, f);  // last second of the push
    relaxed = std::max(relaxed, t.delta_e.maxCoeff());
  });
  EXPECT_GT(relaxed, 0.0);
  EXPECT_LE(peak, 100.0 + 15.0);
  EXPECT_LE(steady, 102.0);
}

// ---------------------------------------------------------------------------
// Reproduction

TEST(RunReproduction, NullTeachingIsAFixedPoint) {
  const ArmModel arm = default_arm();
  const IntersensoryModel model = IntersensoryModel::oracle(arm);
  ComparisonSpec spec;
  spec.path = short_path();
  const ComparisonReport rep = comparison_experiment(arm, model, spec);
  for (const VariantResult& r : rep.variants) {
    ASSERT_TRUE(r.error.has_value()) << r.failure;
    if (r.variant == MethodVariant::THETA)
      EXPECT_LE(r.error->E, 0.005);
    else
      EXPECT_LE(r.error->E, 1e-6) << variant_name(r.variant);
  }
  const auto all = assemble_reproduction(rep.taught, MethodVariant::ALL, model, spec.config.stiffness);
  for (std::size_t k = 0; k < all.size(); ++k)
    EXPECT_LT((all[k] - rep.taught.frames[k].l_ref).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(RunReproduction, NoneOnNullTeachingMatchesOriginal) {
  const ArmModel arm = default_arm();
  const IntersensoryModel model = IntersensoryModel::oracle(arm);
  const Trajectory original = run_original(arm, model, short_path(), SessionConfig{});
  const Trajectory taught = run_teaching(arm, model, short_path(), WrenchProfile{}, SessionConfig{});
  const Trajectory rep = run_reproduction(arm, model, taught, MethodVariant::NONE, SessionConfig{});
  EXPECT_LE(metric_E(original, rep).E, 1e-9);
  EXPECT_EQ(rep.meta.phase, "reproduction:NONE");
}

TEST(RunReproduction, RejectsWrongCommandCount) {
  const ArmModel arm = default_arm();
  const Trajectory taught = run_original(arm, IntersensoryModel::oracle(arm), short_path(), SessionConfig{});
  std::vector<MuscleLengths> commands(3, taught.frames[0].l_ref);
  EXPECT_THROW(run_reproduction(arm, taught, commands, SessionConfig{}), DataError);
}

// ---------------------------------------------------------------------------
// Comparison report and persistence

TEST(Comparison, DeterministicReport) {
  const Scenario s = resolve_scenario(builtin_scenario("arm-sweep-limiter"));
  ComparisonSpec spec = s.spec;
  spec.path = short_path();
  spec.wrench = WrenchProfile::pulse(Vector3(30.0, 30.0, 0.0), 0.2, 1.6, 0.3);
  const ComparisonReport a = comparison_experiment(s.arm, s.model, spec);
  const ComparisonReport b = comparison_experiment(s.arm, s.model, spec);
  EXPECT_EQ(report_json(a), report_json(b));
  const nlohmann::json doc = report_json(a);
  EXPECT_EQ(doc["variants"].size(), 9u);
  EXPECT_EQ(doc["f_max"], 100.0);
  EXPECT_EQ(doc["limiter"], true);
  EXPECT_EQ(doc["frames"], 11);
  EXPECT_FALSE(report_json(a, false).contains("theta_taught"));
}

TEST(Comparison, SavesJsonAndCsv) {
  const ArmModel arm = default_arm();
  ComparisonSpec spec;
  spec.path = short_path();
  spec.variants = {MethodVariant::ALL, MethodVariant::NONE};
  const ComparisonReport rep = comparison_experiment(arm, IntersensoryModel::oracle(arm), spec);
  const std::string json_path = temp_path("report.json"), csv_path = temp_path("report.csv");
  save_report(rep, json_path, csv_path);
  std::ifstream csv(csv_path);
  std::string header, row;
  std::getline(csv, header);
  EXPECT_EQ(header, "variant,E_rad,E_deg,E_norm_rad,E_joint1,E_joint2,E_joint3,E_joint4,E_joint5,status");
  std::getline(csv, row);
  EXPECT_EQ(row.rfind("ALL,", 0), 0u);
  std::ifstream js(json_path);
  const nlohmann::json doc = nlohmann::json::parse(js);
  EXPECT_DOUBLE_EQ(doc["variants"]["NONE"]["E_rad"].get<double>(), rep.E(MethodVariant::NONE));
  EXPECT_THROW(rep.result(MethodVariant::THETA), DomainError);
  std::filesystem::remove(json_path);
  std::filesystem::remove(csv_path);
}

TEST(TrajectoryFiles, RoundTripIsExact) {
  const ArmModel arm = default_arm();
  SessionConfig config;
  config.limiter = LimiterParams{};
  config.scenario = "round-trip";
  config.seed = 9;
  Trajectory tr = run_teaching(arm, IntersensoryModel::oracle(arm), short_path(),
                               WrenchProfile::pulse(Vector3(0.0, 40.0, 0.0), 0.2, 1.6, 0.3), config);
  const std::string path = temp_path("trajectory.csv");
  save_trajectory(tr, path);
  const Trajectory back = load_trajectory(path);
  ASSERT_EQ(back.size(), tr.size());
  for (std::size_t k = 0; k < tr.size(); ++k) {
    const TimedFrame &a = tr.frames[k], &b = back.frames[k];
    EXPECT_EQ(a.t, b.t);
    EXPECT_EQ(a.theta_ref, b.theta_ref);
    EXPECT_EQ(a.l_ref, b.l_ref);
    EXPECT_EQ(a.f_ref, b.f_ref);
    EXPECT_EQ(a.l_data, b.l_data);
    EXPECT_EQ(a.f_data, b.f_data);
    EXPECT_EQ(a.delta_e, b.delta_e);
    EXPECT_EQ(a.theta_true, b.theta_true);
  }
  EXPECT_EQ(back.meta.scenario, "round-trip");
  EXPECT_EQ(back.meta.phase, "teaching");
  EXPECT_TRUE(back.meta.limiter);
  EXPECT_EQ(back.meta.f_max, 100.0);
  EXPECT_EQ(back.meta.seed, 9u);
  std::filesystem::remove(path);
  std::filesystem::remove(sidecar_path(path));
}

}  // namespace
}  // namespace msk
