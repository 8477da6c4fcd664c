#pragma once

#include <Eigen/Core>
#include <vector>

#include "multiflex/kin.hpp"

namespace multiflex::traj {

using kin::JointPath;

struct JointMotionLimits {
  Eigen::VectorXd v_max;
  Eigen::VectorXd a_max;
};

JointMotionLimits motion_limits(const kin::RobotModel& model);

struct Sample {
  Eigen::VectorXd q;
  Eigen::VectorXd qd;
};

// Piecewise-quadratic joint trajectory. Each joint holds its own piece list;
// piece boundaries inside one path segment differ per joint (blend times),
// while segment boundaries are shared.
class Trajectory {
 public:
  struct Piece {
    double t_start{0.0};
    double t_end{0.0};
    double q0{0.0};
    double v0{0.0};
    double acc{0.0};
  };

  Trajectory() = default;
  Trajectory(std::vector<std::vector<Piece>> joint_pieces, double duration, JointPath source);

  double duration() const { return duration_; }
  int dof() const { return static_cast<int>(joint_pieces_.size()); }
  const JointPath& source_path() const { return source_; }
  const std::vector<std::vector<Piece>>& pieces() const { return joint_pieces_; }
  // Shared segment boundary times (one entry per source waypoint).
  const std::vector<double>& waypoint_times() const { return waypoint_times_; }
  void set_waypoint_times(std::vector<double> t) { waypoint_times_ = std::move(t); }

  // Exact piecewise evaluation; t past the end clamps to the final waypoint
  // at rest.
  Sample sample(double t) const;

 private:
  std::vector<std::vector<Piece>> joint_pieces_;
  double duration_{0.0};
  JointPath source_;
  std::vector<double> waypoint_times_;
};

// Joint-synchronized trapezoidal profile through all waypoints, at rest at
// every waypoint. Segment duration is the max over joints of the minimal
// trapezoid time; each joint's profile is stretched to that duration.
// Throws std::invalid_argument on an empty path.
Trajectory lspb_rest_to_rest(const JointPath& path, const JointMotionLimits& limits);

// Trajectory starting exactly at (q0, qd0), passing through all path
// waypoints, ending at rest. Intermediate waypoint velocities come from the
// sign-agreement slope heuristic; each segment solves a two-point boundary
// value problem per joint, synchronized to the slowest joint.
Trajectory replan_from_state(const JointPath& path, const Eigen::VectorXd& q0,
                             const Eigen::VectorXd& qd0, const JointMotionLimits& limits);

// Stand-alone profile that ramps qd0 to rest at max deceleration and holds.
Trajectory decelerate_to_rest(const Eigen::VectorXd& q0, const Eigen::VectorXd& qd0,
                              const JointMotionLimits& limits);

// Constant trajectory holding `q` forever (duration 0).
Trajectory hold(const Eigen::VectorXd& q);

// Uniform time reparameterization to `new_duration` (>= the current
// duration keeps limits satisfied: velocities scale by d/new_duration).
Trajectory scaled_to_duration(const Trajectory& t, double new_duration);

}  // namespace multiflex::traj
