#include "mskteach/trajectory.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace msk {

void Trajectory::validate(int min_frames) const {
  if (static_cast<int>(frames.size()) < min_frames)
    throw DataError("trajectory needs at least " + std::to_string(min_frames) + " frames, has " +
                    std::to_string(frames.size()));
  const Eigen::Index m = frames.front().l_ref.size();
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const TimedFrame& fr = frames[k];
    const std::string where = "frame " + std::to_string(k);
    if (fr.t != static_cast<int>(k)) throw DataError(where + ": frame indices must be 0, 1, 2, ...");
    for (const auto* v : {&fr.l_ref, &fr.f_ref, &fr.l_data, &fr.f_data, &fr.delta_e}) {
      if (v->size() == 0) throw DataError(where + ": missing muscle field");
      if (v->size() != m) throw DataError(where + ": muscle fields disagree in length");
      if (!v->allFinite()) throw DataError(where + ": non-finite value");
    }
    if (!fr.theta_ref.allFinite() || !fr.theta_true.allFinite()) throw DataError(where + ": non-finite joint angle");
  }
}

std::string sidecar_path(const std::string& csv_path) {
  return std::filesystem::path(csv_path).replace_extension(".json").string();
}

namespace {

template <typename V>
void put(std::ostream& out, const V& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) out << ',' << v(i);
}

void header(std::ostream& out, const char* name, Eigen::Index n) {
  for (Eigen::Index i = 1; i <= n; ++i) out << ',' << name << i;
}

}  // namespace

void save_trajectory(const Trajectory& tr, const std::string& csv_path) {
  tr.validate(1);
  const Eigen::Index m = tr.frames.front().l_ref.size();
  std::ofstream out(csv_path);
  if (!out) throw DataError("cannot write '" + csv_path + "'");
  out << 't';
  header(out, "theta_ref", kJointCount);
  header(out, "l_ref", m);
  header(out, "f_ref", m);
  header(out, "l_data", m);
  header(out, "f_data", m);
  header(out, "delta_e", m);
  header(out, "theta_true", kJointCount);
  out << '\n' << std::setprecision(17);
  for (const TimedFrame& fr : tr.frames) {
    out << fr.t;
    put(out, fr.theta_ref);
    put(out, fr.l_ref);
    put(out, fr.f_ref);
    put(out, fr.l_data);
    put(out, fr.f_data);
    put(out, fr.delta_e);
    put(out, fr.theta_true);
    out << '\n';
  }

  nlohmann::json meta = {{"scenario", tr.meta.scenario}, {"phase", tr.meta.phase},   {"limiter", tr.meta.limiter},
                         {"f_max", tr.meta.f_max},       {"model", tr.meta.model},   {"seed", tr.meta.seed},
                         {"frame_period", kFramePeriod}, {"frames", tr.frames.size()}, {"muscles", m}};
  std::ofstream side(sidecar_path(csv_path));
  if (!side) throw DataError("cannot write '" + sidecar_path(csv_path) + "'");
  side << meta.dump(2) << '\n';
}

Trajectory load_trajectory(const std::string& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw DataError("cannot open trajectory '" + csv_path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + csv_path + "' is empty");
  const auto columns = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ',') + 1);
  const Eigen::Index m = (columns - 1 - 2 * kJointCount) / 5;
  if (m <= 0 || 1 + 2 * kJointCount + 5 * m != columns)
    throw DataError("'" + csv_path + "' does not have a trajectory header");

  Trajectory tr;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> v;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        v.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw DataError(csv_path + ":" + std::to_string(lineno) + ": not a number '" + cell + "'");
      }
    }
    if (static_cast<Eigen::Index>(v.size()) != columns)
      throw DataError(csv_path + ":" + std::to_string(lineno) + ": expected " + std::to_string(columns) + " columns");
    TimedFrame fr;
    const double* p = v.data();
    fr.t = static_cast<int>(*p++);
    auto take = [&](Eigen::Index n) {
      Eigen::VectorXd out = Eigen::Map<const Eigen::VectorXd>(p, n);
      p += n;
      return out;
    };
    fr.theta_ref = take(kJointCount);
    fr.l_ref = take(m);
    fr.f_ref = take(m);
    fr.l_data = take(m);
    fr.f_data = take(m);
    fr.delta_e = take(m);
    fr.theta_true = take(kJointCount);
    tr.frames.push_back(std::move(fr));
  }

  std::ifstream side(sidecar_path(csv_path));
  if (side) {
    try {
      nlohmann::json meta;
      side >> meta;
      tr.meta.scenario = meta.value("scenario", "");
      tr.meta.phase = meta.value("phase", "");
      tr.meta.limiter = meta.value("limiter", false);
      tr.meta.f_max = meta.value("f_max", 100.0);
      tr.meta.model = meta.value("model", "");
      tr.meta.seed = meta.value("seed", std::uint64_t{0});
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed trajectory sidecar: " + std::string(e.what()));
    }
  }
  tr.validate(1);
  return tr;
}

}  // namespace msk
