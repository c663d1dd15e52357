// Acceptance run: one PASS/FAIL line per primary criterion. Exit status is
// the number of failed criteria.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mskteach/compensation.hpp"
#include "mskteach/elastic.hpp"
#include "mskteach/intersensory.hpp"
#include "mskteach/kinematics.hpp"
#include "mskteach/plant.hpp"
#include "mskteach/scenario.hpp"
#include "mskteach/session.hpp"

namespace {

using namespace msk;

struct Outcome {
  bool pass = true;
  std::string detail;
};

void require(Outcome& o, bool ok, const std::string& what) {
  if (!ok) {
    o.pass = false;
    o.detail += (o.detail.empty() ? "" : "; ") + std::string("failed: ") + what;
  }
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

JointVector random_pose(const ArmModel& arm, std::mt19937_64& rng, double margin) {
  JointVector q;
  for (int j = 0; j < kJointCount; ++j) {
    std::uniform_real_distribution<double> u(arm.joints()[j].lower + margin, arm.joints()[j].upper - margin);
    q(j) = u(rng);
  }
  return q;
}

template <typename F>
Eigen::MatrixXd central_difference(F&& fn, const JointVector& q, double h) {
  const Eigen::VectorXd f0 = fn(q);
  Eigen::MatrixXd D(f0.size(), kJointCount);
  for (int j = 0; j < kJointCount; ++j) {
    JointVector qp = q, qm = q;
    qp(j) += h;
    qm(j) -= h;
    D.col(j) = (fn(qp) - fn(qm)) / (2.0 * h);
  }
  return D;
}

// ---------------------------------------------------------------------------

Outcome p1_equations() {
  Outcome o;
  double worst = 0.0;
  auto near = [&](double got, double want, const std::string& what) {
    worst = std::max(worst, std::abs(got - want));
    require(o, std::abs(got - want) <= 1e-9, what);
  };

  StiffnessParams p;
  p.K = 10.0;
  p.f_bias = 30.0;
  near(l_comp(MuscleTensions::Constant(1, 130.0), p)(0), -10.0, "l_comp(130 N)");
  near(l_comp(MuscleTensions::Constant(1, 30.0), p)(0), 0.0, "l_comp(f_bias)");

  TimedFrame fr;
  fr.f_data = MuscleTensions::Constant(1, 150.0);
  fr.f_ref = MuscleTensions::Constant(1, 100.0);
  near(delta_s(fr, p)(0), 5.0, "delta_s(+50 N)");
  std::swap(fr.f_data, fr.f_ref);
  near(delta_s(fr, p)(0), -5.0, "delta_s antisymmetry");

  const LimiterParams lp;
  require(o, lp.c_minus == 0.001 && lp.c_plus == 0.003 && lp.c_gain == 2.0 && lp.period == 0.008,
          "limiter constants");
  LimiterState s(lp, 1);
  near(limiter_step(s, MuscleTensions::Constant(1, 150.0)).delta_e(0), 0.15, "limiter tense step");
  s.delta_e(0) = 0.5;
  near(limiter_step(s, MuscleTensions::Constant(1, 90.0)).delta_e(0), 0.49, "limiter release step");
  near(limiter_step(s, MuscleTensions::Constant(1, 100.0)).delta_e(0), 0.5, "limiter at f_max");

  o.detail = fmt("max abs error %.1e mm", worst) + (o.detail.empty() ? "" : "; " + o.detail);
  return o;
}

Outcome p2_oracle_consistency() {
  Outcome o;
  const ArmModel arm = default_arm();
  const IntersensoryModel model = IntersensoryModel::oracle(arm);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> tension(0.0, 200.0);
  double roundtrip = 0.0, h2 = -1e300;
  for (int k = 0; k < 100; ++k) {
    const JointVector q = random_pose(arm, rng, 0.0);
    MuscleTensions f(arm.muscle_count());
    for (Eigen::Index i = 0; i < f.size(); ++i) f(i) = tension(rng);
    const JointVector back = model.eval_htheta(model.eval_hl(q, f), f);
    roundtrip = std::max(roundtrip, (back - q).lpNorm<Eigen::Infinity>());
    h2 = std::max(h2, model.eval_h2(q, f).maxCoeff());
  }
  require(o, roundtrip <= 1e-6, "round trip");
  require(o, h2 <= 0.0, "h2 sign");
  o.detail = fmt("round trip %.1e rad over 100 poses, max h2 %.3g mm", roundtrip, h2) +
             (o.detail.empty() ? "" : "; " + o.detail);
  return o;
}

Outcome p3_plant() {
  Outcome o;
  const ArmModel arm = default_arm();
  std::mt19937_64 rng(3);
  double jac = 0.0, grav = 0.0, residual = 0.0;
  for (int k = 0; k < 100; ++k) {
    const JointVector q = random_pose(arm, rng, 1e-4);
    const MomentArmMatrix G = muscle_jacobian(arm, q);
    const Eigen::MatrixXd fd =
        central_difference([&](const JointVector& x) { return chain_path_lengths(arm, x); }, q, 1e-5);
    jac = std::max(jac, (G - fd).cwiseAbs().maxCoeff() / G.cwiseAbs().maxCoeff());
    const Eigen::MatrixXd dU = central_difference(
        [&](const JointVector& x) { return Eigen::VectorXd::Constant(1, gravity_potential(arm, x)); }, q, 1e-6);
    grav = std::max(grav, (gravity_torque(arm, q) + dU.row(0).transpose()).cwiseAbs().maxCoeff());
  }
  for (int k = 0; k < 10; ++k) {
    const JointVector q = random_pose(arm, rng, 0.3);
    const MuscleLengths l_cmd = path_lengths(arm, q) - elastic_stretch_inverse(arm, solve_f_ref(arm, q).f);
    const EnergyLandscape landscape(arm, l_cmd, ExternalWrench{});
    residual = std::max(residual, solve_equilibrium(landscape, q + JointVector::Constant(0.05)).residual);
  }
  require(o, jac <= 1e-4, "muscle Jacobian");
  require(o, grav <= 1e-6, "gravity torque");
  require(o, residual <= 1e-6, "equilibrium residual");

  const Scenario sc = resolve_scenario(builtin_scenario("arm-sweep"));
  SessionConfig noisy = sc.spec.config;
  noisy.tension_noise = 1.0;
  noisy.length_noise = 0.05;
  noisy.relaxation_time = 0.06;
  noisy.seed = 9;
  const Trajectory a = run_teaching(sc.arm, sc.model, sc.spec.path, sc.spec.wrench, noisy);
  const Trajectory b = run_teaching(sc.arm, sc.model, sc.spec.path, sc.spec.wrench, noisy);
  bool same = a.size() == b.size();
  for (std::size_t k = 0; same && k < a.size(); ++k)
    same = a.frames[k].theta_true == b.frames[k].theta_true && a.frames[k].f_data == b.frames[k].f_data &&
           a.frames[k].l_data == b.frames[k].l_data;
  require(o, same, "determinism");
  o.detail = fmt("Jacobian rel %.1e, gravity %.1e N*m, equilibrium %.1e N*m, ", jac, grav, residual) +
             (same ? "bit-exact rerun" : "rerun differs") + (o.detail.empty() ? "" : "; " + o.detail);
  return o;
}

Outcome p4_headline() {
  Outcome o;
  const Scenario sc = resolve_scenario(builtin_scenario("arm-sweep"));
  require(o, !sc.spec.config.limiter && sc.model.kind() == ModelKind::oracle && sc.spec.config.tension_noise == 0.0 &&
                 sc.spec.config.length_noise == 0.0,
          "scenario setup");
  const ComparisonReport rep = comparison_experiment(sc.arm, sc.model, sc.spec);
  const double all = rep.E(MethodVariant::ALL), none = rep.E(MethodVariant::NONE);
  require(o, all <= 0.02, "E(ALL) <= 0.02");
  require(o, none >= 0.10, "E(NONE) >= 0.10");
  // With the oracle model and noise off, THETA rebuilds the ALL commands through
  // an exact pose estimate, so the two agree to rounding.
  constexpr double kTie = 1e-12;  // rad
  for (const VariantResult& r : rep.variants)
    require(o, r.error && all <= r.error->E + kTie, "ALL <= " + variant_name(r.variant));
  o.detail = fmt("E(ALL) %.4f rad, E(NONE) %.4f rad, E(ALL) - E(THETA) %.1e rad", all, none,
                 all - rep.E(MethodVariant::THETA)) +
             (o.detail.empty() ? "" : "; " + o.detail);
  return o;
}

Outcome p5_learned_ranking() {
  Outcome o;
  const ArmModel arm = default_arm();
  const Surrogate trained = train_surrogate(sample_training_set(arm, 20000, 1), arm.lower_limits(), arm.upper_limits());

  const Scenario off = resolve_scenario(builtin_scenario("arm-sweep"));
  ComparisonSpec spec = off.spec;
  spec.model_id = "learned";
  const ComparisonReport a = comparison_experiment(off.arm, trained.model, spec);
  const double all = a.E(MethodVariant::ALL), theta = a.E(MethodVariant::THETA), none = a.E(MethodVariant::NONE);
  require(o, all <= theta, "limiter off: ALL <= THETA");
  require(o, all <= none, "limiter off: ALL <= NONE");

  const Scenario on = resolve_scenario(builtin_scenario("arm-sweep-limiter"));
  require(o, on.spec.config.limiter && on.spec.config.limiter->f_max == 100.0, "limiter scenario f_max");
  spec = on.spec;
  spec.model_id = "learned";
  const ComparisonReport b = comparison_experiment(on.arm, trained.model, spec);
  const double all_on = b.E(MethodVariant::ALL);
  double runner_up = 1e300;
  for (const VariantResult& r : b.variants) {
    require(o, r.error.has_value(), variant_name(r.variant) + " ran");
    if (r.variant != MethodVariant::ALL && r.error) runner_up = std::min(runner_up, r.error->E);
  }
  require(o, all_on <= runner_up, "limiter on: ALL is row minimum");
  o.detail = fmt("off: ALL %.4f THETA %.4f NONE %.4f; ", all, theta, none) +
             fmt("on: ALL %.4f next best %.4f rad", all_on, runner_up) + (o.detail.empty() ? "" : "; " + o.detail);
  return o;
}

Outcome p6_limiter() {
  Outcome o;
  const ArmModel arm = default_arm();
  const IntersensoryModel model = IntersensoryModel::oracle(arm);
  const JointVector q = (JointVector() << 0.0, 0.0, 0.0, 0.5, 0.0).finished();
  SessionConfig config;
  config.stiffness = {30.0, 30.0};
  config.tension.f_min = 75.0;
  config.limiter = LimiterParams{};
  const double t_on = 1.0, t_off = 26.0, t_end = 45.0;
  const WrenchProfile push = WrenchProfile::pulse(30.0 * Vector3(1.0, 1.0, 0.0).normalized(), t_on, t_off, 0.5);
  double steady = 0.0, last_relaxed = t_off;
  run_teaching(arm, model, JointPath({{0.0, q}, {t_end, q}}), push, config, [&](const TickSample& s) {
    if (s.time > t_off - 1.5 && s.time <= t_off - 0.5) steady = std::max(steady, s.reading.f.maxCoeff());
    if (s.time >= t_off && s.delta_e.maxCoeff() > 0.0) last_relaxed = s.time;
  });
  const double release = last_relaxed - t_off;
  require(o, config.limiter->f_max == 100.0, "f_max");
  require(o, steady <= 102.0, "steady tension <= 102 N");
  require(o, release <= 10.0, "release within 10 s");
  o.detail = fmt("steady max tension %.2f N, delta_e back to 0 after %.2f s", steady, release) +
             (o.detail.empty() ? "" : "; " + o.detail);
  return o;
}

Outcome p7_null_teaching() {
  Outcome o;
  const Scenario sc = resolve_scenario(builtin_scenario("arm-sweep"));
  ComparisonSpec spec = sc.spec;
  spec.wrench = WrenchProfile{};
  const ComparisonReport rep = comparison_experiment(sc.arm, sc.model, spec);
  double worst = 0.0;
  for (const VariantResult& r : rep.variants) {
    if (r.variant == MethodVariant::THETA) continue;
    require(o, r.error.has_value(), variant_name(r.variant) + " ran");
    if (r.error) worst = std::max(worst, metric_E(rep.original, r.reproduced).E);
  }
  require(o, worst <= 1e-6, "E <= 1e-6");
  o.detail = fmt("max E over additive variants %.1e rad", worst) + (o.detail.empty() ? "" : "; " + o.detail);
  return o;
}

Outcome p8_influence() {
  Outcome o;
  const Scenario sc = resolve_scenario(builtin_scenario("arm-sweep-limiter"));
  const ComparisonReport rep = comparison_experiment(sc.arm, sc.model, sc.spec);
  const InfluenceMagnitudes& m = rep.influence;
  require(o, m.e > m.h && m.h > m.s, "e > h > s");
  o.detail = fmt("mean |dl_e| %.3f > |dl_h| %.3f > |dl_s| %.3f mm", m.e, m.h, m.s) +
             (o.detail.empty() ? "" : "; " + o.detail);
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    const char* id;
    const char* name;
    Outcome (*run)();
  };
  const Criterion criteria[] = {
      {"P1", "equation fidelity", p1_equations},
      {"P2", "oracle intersensory consistency", p2_oracle_consistency},
      {"P3", "plant soundness", p3_plant},
      {"P4", "headline reproduction", p4_headline},
      {"P5", "learned-model ranking", p5_learned_ranking},
      {"P6", "limiter behavior", p6_limiter},
      {"P7", "null-teaching fixed point", p7_null_teaching},
      {"P8", "influence ordering", p8_influence},
  };
  int failed = 0;
  for (const Criterion& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %s  %s  (%s, %.1f s)\n", c.id, o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed;
}
