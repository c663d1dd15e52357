#include "mskteach/intersensory.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

#include <Eigen/Cholesky>

#include "mskteach/elastic.hpp"
#include "mskteach/plant.hpp"

namespace msk {

// ---------------------------------------------------------------------------
// Target tensions

TensionSolution distribute_tension(const MomentArmMatrix& G, const JointVector& tau, const TensionOptions& opt) {
  if (!(opt.f_min >= 0.0) || !(opt.regularization > 0.0)) throw DomainError("need f_min >= 0 and lambda > 0");
  if (!G.allFinite() || !tau.allFinite()) throw DomainError("non-finite moment arms or torque demand");
  const Eigen::Index m = G.rows();
  const Eigen::MatrixXd H = G * G.transpose() + opt.regularization * Eigen::MatrixXd::Identity(m, m);
  const Eigen::VectorXd c = G * (1000.0 * tau);
  auto objective = [&](const Eigen::VectorXd& f) { return 0.5 * f.dot(H * f) - c.dot(f); };

  Eigen::VectorXd f = Eigen::VectorXd::Constant(m, opt.f_min);
  int it = 0;
  for (; it < 100; ++it) {
    const Eigen::VectorXd g = H * f - c;
    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < m; ++i)
      if (f(i) > opt.f_min || g(i) < 0.0) free.push_back(i);
    if (free.empty()) break;

    const Eigen::Index k = static_cast<Eigen::Index>(free.size());
    Eigen::MatrixXd Hf(k, k);
    Eigen::VectorXd gf(k);
    for (Eigen::Index a = 0; a < k; ++a) {
      gf(a) = g(free[a]);
      for (Eigen::Index b = 0; b < k; ++b) Hf(a, b) = H(free[a], free[b]);
    }
    const Eigen::VectorXd d = Hf.ldlt().solve(-gf);

    // Projected search along the Newton direction; the full step is exact on
    // the current face, shorter steps only happen when bounds become active.
    const double e0 = objective(f);
    Eigen::VectorXd next = f;
    double alpha = 1.0;
    for (int ls = 0; ls < 60; ++ls, alpha *= 0.5) {
      next = f;
      for (Eigen::Index a = 0; a < k; ++a) next(free[a]) = std::max(opt.f_min, f(free[a]) + alpha * d(a));
      if (objective(next) <= e0) break;
    }
    const double change = (next - f).lpNorm<Eigen::Infinity>();
    f = next;
    if (change <= 1e-13 * (1.0 + f.lpNorm<Eigen::Infinity>())) break;
  }

  TensionSolution out;
  out.f = f;
  out.iterations = it;
  out.residual = (1e-3 * G.transpose() * f - tau).norm();
  out.feasible = out.residual <= opt.infeasible_residual;
  return out;
}

TensionSolution solve_f_ref(const ArmModel& arm, const JointVector& q, const TensionOptions& options) {
  arm.require_within_limits(q);
  return distribute_tension(muscle_jacobian(arm, q), gravity_torque(arm, q), options);
}

// ---------------------------------------------------------------------------
// Intersensory model

IntersensoryModel IntersensoryModel::oracle(ArmModel arm) {
  IntersensoryModel m;
  m.kind_ = ModelKind::oracle;
  m.muscles_ = arm.muscle_count();
  m.lower_ = arm.lower_limits();
  m.upper_ = arm.upper_limits();
  m.arm_ = std::make_shared<const ArmModel>(std::move(arm));
  return m;
}

IntersensoryModel IntersensoryModel::learned(JointVector lower, JointVector upper, Mlp hl, Mlp htheta) {
  const int muscles = hl.outputs();
  if (hl.inputs() != 2 * kJointCount + muscles || htheta.inputs() != 2 * muscles || htheta.outputs() != kJointCount)
    throw DataError("regressor shapes do not match a " + std::to_string(kJointCount) + "-joint, " +
                    std::to_string(muscles) + "-muscle model");
  IntersensoryModel m;
  m.kind_ = ModelKind::learned;
  m.muscles_ = muscles;
  m.lower_ = lower;
  m.upper_ = upper;
  m.hl_ = std::move(hl);
  m.htheta_ = std::move(htheta);
  return m;
}

const ArmModel& IntersensoryModel::arm() const {
  if (!arm_) throw DomainError("learned intersensory model has no arm geometry");
  return *arm_;
}

void IntersensoryModel::check_pose(const JointVector& q) const {
  if (!q.allFinite() || (q.array() < lower_.array() - 1e-9).any() || (q.array() > upper_.array() + 1e-9).any())
    throw DomainError("joint configuration outside the joint limits");
}

void IntersensoryModel::check_tensions(const MuscleTensions& f) const {
  if (f.size() != muscles_) throw DomainError("tension vector has the wrong size");
  if (!f.allFinite() || (f.array() < 0.0).any()) throw DomainError("tensions must be finite and nonnegative");
}

MuscleLengths IntersensoryModel::eval_hl(const JointVector& q, const MuscleTensions& f) const {
  check_pose(q);
  check_tensions(f);
  if (kind_ == ModelKind::oracle) return path_lengths(*arm_, q) - elastic_stretch_inverse(*arm_, f);
  return hl_.predict(hl_features(q, f));
}

MuscleVector IntersensoryModel::eval_h2(const JointVector& q, const MuscleTensions& f) const {
  if (kind_ == ModelKind::oracle) {
    check_pose(q);
    check_tensions(f);
    return -elastic_stretch_inverse(*arm_, f);
  }
  return eval_hl(q, f) - eval_hl(q, MuscleTensions::Zero(muscles_));
}

namespace {

struct Fit {
  JointVector q;
  double residual;  // mm, infinity norm
  bool converged;
};

// Levenberg-Marquardt on path_lengths(q) = target with steps projected onto the joint box.
Fit damped_least_squares(const ArmModel& arm, const MuscleLengths& target, JointVector q,
                         const EstimateOptions& opt) {
  const JointVector lo = arm.lower_limits(), hi = arm.upper_limits();
  q = arm.clamp(q);
  Eigen::VectorXd r = path_lengths(arm, q) - target;
  double cost = r.squaredNorm();
  double mu = 1e-3;
  for (int it = 0; it < opt.max_iterations; ++it) {
    const MomentArmMatrix J = muscle_jacobian(arm, q);
    const Eigen::Matrix<double, kJointCount, kJointCount> JtJ = J.transpose() * J;
    const JointVector g = J.transpose() * r;
    bool accepted = false;
    for (int tries = 0; tries < 30 && !accepted; ++tries) {
      Eigen::Matrix<double, kJointCount, kJointCount> A = JtJ;
      A.diagonal() += mu * (JtJ.diagonal().array() + 1e-9).matrix();
      const JointVector trial = (q - A.ldlt().solve(g)).cwiseMax(lo).cwiseMin(hi);
      const Eigen::VectorXd rt = path_lengths(arm, trial) - target;
      const double ct = rt.squaredNorm();
      if (ct <= cost) {
        const double step = (trial - q).lpNorm<Eigen::Infinity>();
        q = trial;
        r = rt;
        cost = ct;
        mu = std::max(mu / 3.0, 1e-12);
        accepted = true;
        if (step <= opt.tolerance) return {q, r.lpNorm<Eigen::Infinity>(), true};
      } else {
        mu *= 4.0;
      }
    }
    if (!accepted) return {q, r.lpNorm<Eigen::Infinity>(), true};  // no descent left: local minimum
  }
  return {q, r.lpNorm<Eigen::Infinity>(), false};
}

}  // namespace

JointVector IntersensoryModel::eval_htheta(const MuscleLengths& l, const MuscleTensions& f,
                                           const std::optional<JointVector>& seed,
                                           const EstimateOptions& options) const {
  check_tensions(f);
  if (l.size() != muscles_ || !l.allFinite()) throw DomainError("muscle lengths must be finite with one per muscle");
  if (kind_ == ModelKind::learned) {
    Eigen::VectorXd x(2 * muscles_);
    x << l, f;
    return JointVector(htheta_.predict(x)).cwiseMax(lower_).cwiseMin(upper_);
  }

  const MuscleLengths target = l + elastic_stretch_inverse(*arm_, f);
  std::vector<JointVector> seeds;
  if (seed) seeds.push_back(*seed);
  seeds.push_back(JointVector::Zero());
  seeds.push_back(0.5 * (lower_ + upper_));
  std::mt19937_64 rng(0x5eed);
  for (int k = 0; k < 8; ++k) {
    JointVector s;
    for (int j = 0; j < kJointCount; ++j) s(j) = std::uniform_real_distribution<double>(lower_(j), upper_(j))(rng);
    seeds.push_back(s);
  }

  std::optional<Fit> best;
  for (const JointVector& s : seeds) {
    const Fit fit = damped_least_squares(*arm_, target, s, options);
    if (fit.converged && (!best || fit.residual < best->residual)) best = fit;
    if (best && best->residual <= 1e-7) break;
  }
  if (!best) throw SolverError("joint angle estimation did not converge", std::numeric_limits<double>::quiet_NaN());
  return best->q;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

nlohmann::json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

JointVector joints_from(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != kJointCount) throw DataError("expected one value per joint");
  return Eigen::Map<const JointVector>(v.data());
}

}  // namespace

nlohmann::json to_json(const IntersensoryModel& model) {
  nlohmann::json doc;
  doc["schema_version"] = kModelSchemaVersion;
  doc["joint_count"] = kJointCount;
  doc["muscle_count"] = model.muscle_count();
  doc["lower"] = vec_json(model.lower_limits());
  doc["upper"] = vec_json(model.upper_limits());
  if (model.kind() == ModelKind::oracle) {
    doc["kind"] = "oracle";
    doc["arm"] = to_json(model.arm());
  } else {
    doc["kind"] = "learned";
    doc["h_l"] = to_json(model.hl_net());
    doc["h_theta"] = to_json(model.htheta_net());
  }
  return doc;
}

IntersensoryModel model_from_json(const nlohmann::json& doc) {
  try {
    const int version = doc.at("schema_version").get<int>();
    if (version != kModelSchemaVersion) throw DataError("unsupported model schema_version " + std::to_string(version));
    if (doc.at("joint_count").get<int>() != kJointCount) throw DataError("model was built for a different joint count");
    const std::string kind = doc.at("kind").get<std::string>();
    if (kind == "oracle") return IntersensoryModel::oracle(arm_from_json(doc.at("arm")));
    if (kind == "learned")
      return IntersensoryModel::learned(joints_from(doc.at("lower")), joints_from(doc.at("upper")),
                                        mlp_from_json(doc.at("h_l")), mlp_from_json(doc.at("h_theta")));
    throw DataError("unknown model kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed model document: ") + e.what());
  }
}

IntersensoryModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("cannot parse '" + path + "': " + e.what());
  }
  return model_from_json(doc);
}

void save_model(const IntersensoryModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << to_json(model).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Training data

TrainingSet sample_training_set(const ArmModel& arm, int n, std::uint64_t seed, const SamplingOptions& options) {
  if (n < 1) throw DomainError("training set needs at least one sample");
  TrainingSet data;
  data.seed = seed;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const JointVector lo = arm.lower_limits(), hi = arm.upper_limits();
  for (int k = 0; k < n; ++k) {
    JointVector q;
    for (int j = 0; j < kJointCount; ++j) q(j) = lo(j) + (hi(j) - lo(j)) * unit(rng);
    MuscleTensions f = solve_f_ref(arm, q).f.cwiseMin(options.tension_cap);
    for (Eigen::Index i = 0; i < f.size(); ++i) f(i) += options.tension_spread * unit(rng);
    data.l.push_back(path_lengths(arm, q) - elastic_stretch_inverse(arm, f));
    data.q.push_back(q);
    data.f.push_back(std::move(f));
  }
  return data;
}

void save_training_set(const TrainingSet& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  const Eigen::Index m = data.f.empty() ? 0 : data.f.front().size();
  out << "# seed=" << data.seed << " samples=" << data.size() << '\n';
  for (int j = 1; j <= kJointCount; ++j) out << "theta" << j << ',';
  for (Eigen::Index i = 1; i <= m; ++i) out << 'f' << i << ',';
  for (Eigen::Index i = 1; i <= m; ++i) out << 'l' << i << (i == m ? "\n" : ",");
  out << std::setprecision(17);
  for (std::size_t r = 0; r < data.size(); ++r) {
    for (int j = 0; j < kJointCount; ++j) out << data.q[r](j) << ',';
    for (Eigen::Index i = 0; i < m; ++i) out << data.f[r](i) << ',';
    for (Eigen::Index i = 0; i < m; ++i) out << data.l[r](i) << (i + 1 == m ? "\n" : ",");
  }
}

TrainingSet load_training_set(const std::string& path, int muscle_count) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open training set '" + path + "'");
  TrainingSet data;
  std::string line;
  bool header = false;
  const std::size_t width = kJointCount + 2 * static_cast<std::size_t>(muscle_count);
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto pos = line.find("seed=");
      if (pos != std::string::npos) data.seed = std::stoull(line.substr(pos + 5));
      continue;
    }
    if (!header) {
      header = true;
      continue;
    }
    std::vector<double> v;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        v.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw DataError(path + ":" + std::to_string(lineno) + ": not a number '" + cell + "'");
      }
    }
    if (v.size() != width) throw DataError(path + ":" + std::to_string(lineno) + ": expected " +
                                           std::to_string(width) + " columns");
    data.q.push_back(Eigen::Map<const JointVector>(v.data()));
    data.f.push_back(Eigen::Map<const Eigen::VectorXd>(v.data() + kJointCount, muscle_count));
    data.l.push_back(Eigen::Map<const Eigen::VectorXd>(v.data() + kJointCount + muscle_count, muscle_count));
  }
  if (data.size() == 0) throw DataError("training set '" + path + "' has no rows");
  return data;
}

// ---------------------------------------------------------------------------
// Surrogate

HeldOutErrors evaluate_surrogate(const IntersensoryModel& model, const TrainingSet& data, std::size_t begin,
                                 std::size_t end) {
  HeldOutErrors e;
  std::vector<double> roundtrip;
  double hl_sq = 0.0, ht_sum = 0.0;
  for (std::size_t r = begin; r < end; ++r) {
    const Eigen::VectorXd dl = model.eval_hl(data.q[r], data.f[r]) - data.l[r];
    e.hl_max = std::max(e.hl_max, dl.lpNorm<Eigen::Infinity>());
    hl_sq += dl.squaredNorm() / static_cast<double>(dl.size());
    const double dq = (model.eval_htheta(data.l[r], data.f[r]) - data.q[r]).lpNorm<Eigen::Infinity>();
    e.htheta_max = std::max(e.htheta_max, dq);
    ht_sum += dq;
    const JointVector back = model.eval_htheta(model.eval_hl(data.q[r], data.f[r]), data.f[r]);
    roundtrip.push_back((back - data.q[r]).lpNorm<Eigen::Infinity>());
  }
  e.samples = static_cast<int>(roundtrip.size());
  if (e.samples == 0) return e;
  e.hl_rms = std::sqrt(hl_sq / e.samples);
  e.htheta_mean = ht_sum / e.samples;
  std::sort(roundtrip.begin(), roundtrip.end());
  e.roundtrip_max = roundtrip.back();
  double sum = 0.0;
  for (double v : roundtrip) sum += v;
  e.roundtrip_mean = sum / e.samples;
  e.roundtrip_median = roundtrip[roundtrip.size() / 2];
  return e;
}

Eigen::VectorXd hl_features(const JointVector& q, const MuscleTensions& f) {
  Eigen::VectorXd x(2 * kJointCount + f.size());
  x << q.array().sin(), q.array().cos(), f;
  return x;
}

Surrogate train_surrogate(const TrainingSet& data, const JointVector& lower, const JointVector& upper,
                          const SurrogateOptions& options) {
  if (data.size() == 0) throw DataError("cannot train on an empty training set");
  if (!(options.holdout_fraction >= 0.0 && options.holdout_fraction < 1.0))
    throw DomainError("holdout fraction must lie in [0, 1)");
  const std::size_t n = data.size();
  const auto m = data.f.front().size();
  std::size_t n_train = n - static_cast<std::size_t>(std::llround(options.holdout_fraction * static_cast<double>(n)));
  n_train = std::max<std::size_t>(n_train, 1);

  Eigen::MatrixXd Xl(2 * kJointCount + m, n_train), Yl(m, n_train), Xt(2 * m, n_train), Yt(kJointCount, n_train);
  for (std::size_t r = 0; r < n_train; ++r) {
    const auto c = static_cast<Eigen::Index>(r);
    Xl.col(c) = hl_features(data.q[r], data.f[r]);
    Yl.col(c) = data.l[r];
    Xt.col(c) << data.l[r], data.f[r];
    Yt.col(c) = data.q[r];
  }
  TrainOptions hl_opt = options.net, ht_opt = options.net;
  ht_opt.seed = options.net.seed + 1;
  if (!options.htheta_hidden.empty()) ht_opt.hidden = options.htheta_hidden;
  Surrogate out{IntersensoryModel::learned(lower, upper, fit_mlp(Xl, Yl, hl_opt), fit_mlp(Xt, Yt, ht_opt)), {}};
  out.held_out = evaluate_surrogate(out.model, data, n_train, n);
  return out;
}

}  // namespace msk
