#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mskteach/types.hpp"

namespace msk {

/// One recorded frame. Commands (theta_ref, l_ref, f_ref) come from the
/// original pipeline; l_data, f_data and delta_e are what the robot sensed
/// and applied; theta_true is simulator ground truth for evaluation.
struct TimedFrame {
  int t = 0;  // frame index, kFramePeriod apart
  JointVector theta_ref = JointVector::Zero();
  MuscleLengths l_ref;
  MuscleTensions f_ref;
  MuscleLengths l_data;
  MuscleTensions f_data;
  MuscleVector delta_e;
  JointVector theta_true = JointVector::Zero();

  double time() const { return t * kFramePeriod; }
};

struct TrajectoryMeta {
  std::string scenario;
  std::string phase;  // original | teaching | reproduction:<variant>
  bool limiter = false;
  double f_max = 100.0;
  std::string model;
  std::uint64_t seed = 0;
};

struct Trajectory {
  std::vector<TimedFrame> frames;
  TrajectoryMeta meta;

  std::size_t size() const { return frames.size(); }
  /// Throws DataError when frames are missing fields, have mismatched
  /// muscle counts, or indices that are not 0, 1, 2, ...
  void validate(int min_frames = 2) const;
};

/// CSV with one row per frame plus a JSON sidecar next to it (same stem,
/// ".json"). Doubles are written with round-trip precision.
void save_trajectory(const Trajectory& trajectory, const std::string& csv_path);
Trajectory load_trajectory(const std::string& csv_path);
std::string sidecar_path(const std::string& csv_path);

}  // namespace msk
