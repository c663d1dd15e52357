#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace msk {

inline constexpr int kJointCount = 5;

/// Control loop period of the low-level muscle controllers [s].
inline constexpr double kControlPeriod = 0.008;
/// Spacing of recorded trajectory frames [s].
inline constexpr double kFramePeriod = 0.2;
/// Number of control ticks per recorded frame.
inline constexpr int kTicksPerFrame = 25;

template <typename Scalar>
using JointVectorT = Eigen::Matrix<Scalar, kJointCount, 1>;

/// Joint angles [rad], ordered shoulder pitch, roll, yaw, elbow pitch, yaw.
using JointVector = JointVectorT<double>;

/// Per-muscle quantity; lengths in mm, tensions in N.
using MuscleVector = Eigen::VectorXd;
using MuscleLengths = MuscleVector;
using MuscleTensions = MuscleVector;

using Vector3 = Eigen::Vector3d;
using MomentArmMatrix = Eigen::Matrix<double, Eigen::Dynamic, kJointCount>;

/// Input outside the admissible domain of a function (joint limits, negative tension, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// An iterative solver failed to reach its tolerance.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double residual)
      : std::runtime_error(what + " (residual " + format(residual) + ")"), residual_(residual) {}
  double residual() const { return residual_; }

  /// Same failure with `where` prefixed to the message.
  SolverError within(const std::string& where) const { return SolverError(where + ": " + what(), residual_, 0); }

 private:
  SolverError(const std::string& message, double residual, int) : std::runtime_error(message), residual_(residual) {}
  static std::string format(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
  }
  double residual_;
};

/// Malformed or incomplete recorded data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Regressor training produced a non-finite loss.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Muscle stiffness control parameters: l_comp(f) = -(f - f_bias) / K.
struct StiffnessParams {
  double f_bias = 30.0;  // N
  double K = 10.0;       // N/mm
};

}  // namespace msk
