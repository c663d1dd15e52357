#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mskteach/arm_model.hpp"
#include "mskteach/mlp.hpp"

namespace msk {

// ---------------------------------------------------------------------------
// Target tensions

struct TensionOptions {
  double f_min = 10.0;           // N
  double regularization = 1e-4;  // weight on |f|^2, objective measured in N*mm
  double infeasible_residual = 0.5;  // N*m
};

struct TensionSolution {
  MuscleTensions f;
  double residual = 0.0;  // |1e-3 G^T f - tau|, N*m
  bool feasible = true;
  int iterations = 0;
};

/// Tensions f >= f_min whose muscle torque balances `tau`:
/// minimizes |G^T f - 1000 tau|^2 + lambda |f|^2 with G in mm/rad. Exact
/// box-constrained QP solve by projected Newton steps.
TensionSolution distribute_tension(const MomentArmMatrix& G, const JointVector& tau, const TensionOptions& options = {});

/// Gravity-compensating tensions at q.
TensionSolution solve_f_ref(const ArmModel& arm, const JointVector& q, const TensionOptions& options = {});

// ---------------------------------------------------------------------------
// Intersensory model

enum class ModelKind { oracle, learned };

struct EstimateOptions {
  int max_iterations = 200;
  double tolerance = 1e-12;  // rad, step size at convergence
};

/// Static maps between joint angles, muscle lengths and tensions:
/// l = h_l(q, f) and q = h_theta(l, f). Immutable once built.
class IntersensoryModel {
 public:
  static IntersensoryModel oracle(ArmModel arm);
  static IntersensoryModel learned(JointVector lower, JointVector upper, Mlp hl, Mlp htheta);

  ModelKind kind() const { return kind_; }
  int muscle_count() const { return muscles_; }
  const JointVector& lower_limits() const { return lower_; }
  const JointVector& upper_limits() const { return upper_; }
  /// Oracle only.
  const ArmModel& arm() const;
  /// Learned only.
  const Mlp& hl_net() const { return hl_; }
  const Mlp& htheta_net() const { return htheta_; }

  MuscleLengths eval_hl(const JointVector& q, const MuscleTensions& f) const;
  /// h_l(q, f) - h_l(q, 0), the length the elastic elements give up under f.
  MuscleVector eval_h2(const JointVector& q, const MuscleTensions& f) const;
  /// Oracle: damped least squares on path_lengths(q) = l + stretch(f) from
  /// `seed` (neutral if absent), restarted from fixed seeds on failure.
  JointVector eval_htheta(const MuscleLengths& l, const MuscleTensions& f,
                          const std::optional<JointVector>& seed = std::nullopt,
                          const EstimateOptions& options = {}) const;

 private:
  IntersensoryModel() = default;
  void check_pose(const JointVector& q) const;
  void check_tensions(const MuscleTensions& f) const;

  ModelKind kind_ = ModelKind::oracle;
  int muscles_ = 0;
  JointVector lower_, upper_;
  std::shared_ptr<const ArmModel> arm_;
  Mlp hl_, htheta_;
};

inline constexpr int kModelSchemaVersion = 1;

nlohmann::json to_json(const IntersensoryModel& model);
IntersensoryModel model_from_json(const nlohmann::json& doc);
IntersensoryModel load_model(const std::string& path);
void save_model(const IntersensoryModel& model, const std::string& path);

// ---------------------------------------------------------------------------
// Training data and surrogate

/// Input row of the learned h_l: [sin q, cos q, f].
Eigen::VectorXd hl_features(const JointVector& q, const MuscleTensions& f);

struct TrainingSet {
  std::vector<JointVector> q;
  std::vector<MuscleTensions> f;
  std::vector<MuscleLengths> l;
  std::uint64_t seed = 0;

  std::size_t size() const { return q.size(); }
};

struct SamplingOptions {
  double tension_spread = 30.0;  // N, uniform offset added to the target tensions
  /// Target tensions are clipped here before the offset. Where a moment arm
  /// nearly vanishes the balancing tensions run into the kilonewtons.
  double tension_cap = 200.0;
};

/// Static triples from the oracle relation: q uniform in the limits,
/// f = min(solve_f_ref(q), cap) plus uniform offsets in [0, tension_spread].
TrainingSet sample_training_set(const ArmModel& arm, int n, std::uint64_t seed, const SamplingOptions& options = {});

void save_training_set(const TrainingSet& data, const std::string& path);
TrainingSet load_training_set(const std::string& path, int muscle_count);

struct SurrogateOptions {
  TrainOptions net;
  std::vector<int> htheta_hidden;  // empty: same layers as net.hidden
  double holdout_fraction = 0.1;
};

struct HeldOutErrors {
  int samples = 0;
  double hl_max = 0.0;            // mm
  double hl_rms = 0.0;            // mm
  double htheta_max = 0.0;        // rad
  double htheta_mean = 0.0;       // rad, mean of per-sample max-abs error
  double roundtrip_max = 0.0;     // rad, |h_theta(h_l(q, f), f) - q|_inf
  double roundtrip_mean = 0.0;
  double roundtrip_median = 0.0;
};

struct Surrogate {
  IntersensoryModel model;
  HeldOutErrors held_out;
};

/// Trains both regressors on the leading (1 - holdout) share of the rows and
/// reports errors on the rest. Deterministic for fixed options.
Surrogate train_surrogate(const TrainingSet& data, const JointVector& lower, const JointVector& upper,
                          const SurrogateOptions& options = {});

HeldOutErrors evaluate_surrogate(const IntersensoryModel& model, const TrainingSet& data, std::size_t begin,
                                 std::size_t end);

}  // namespace msk
