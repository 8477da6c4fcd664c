#pragma once

#include <Eigen/Core>
#include <limits>
#include <utility>
#include <vector>

#include "multiflex/geom.hpp"
#include "multiflex/kin.hpp"
#include "multiflex/traj.hpp"

namespace multiflex::localqp {

struct AvoidanceParams {
  double d_react{0.20};  // activation distance
  double d_eq{0.05};     // equilibrium distance, the safety floor
  double alpha{0.10};    // approach-speed scale of the log barrier
  double mu{1e-4};       // clearance test slack
  int max_pairs{24};
};

struct QPGains {
  Eigen::VectorXd kp;
  Eigen::VectorXd kd;
  double epsilon{1e-3};
  double dt{0.016};
};

// coeffs . u <= bound
struct LinearRow {
  Eigen::VectorXd coeffs;
  double bound{0.0};
};

// min u'Hu + linear'u  s.t.  ineq rows <= bound, eq rows = value.
// H is diagonal; u = [qd[k+1], qdd[k+1]].
struct QPStepProblem {
  int dof{0};
  Eigen::VectorXd h_diag;
  Eigen::VectorXd linear;
  std::vector<LinearRow> ineq;
  std::vector<std::pair<Eigen::VectorXd, double>> eq;
};

// One active avoidance constraint source: closest point pair between a
// robot capsule and a world obstacle, populated only when the surface
// distance is below d_react. `direction` points from the robot-side point
// toward the obstacle-side point.
struct ClosestPair {
  int robot_link{0};
  geom::Vec3 point_robot{geom::Vec3::Zero()};
  geom::Vec3 point_obstacle{geom::Vec3::Zero()};
  double distance{0.0};
  geom::Vec3 direction{geom::Vec3::UnitX()};
  geom::Vec3 obstacle_velocity{geom::Vec3::Zero()};
  Eigen::Matrix3Xd jacobian;
  int obstacle_index{0};
};

// Moving capsule obstacle; the velocity field along the segment is linear,
// so endpoint velocities determine the velocity of any axis point.
struct WorldCapsule {
  geom::Capsule capsule;
  geom::Vec3 v_p0{geom::Vec3::Zero()};
  geom::Vec3 v_p1{geom::Vec3::Zero()};
};

struct WorldView {
  std::vector<WorldCapsule> capsules;
  std::vector<geom::SweptSphere> swept_spheres;  // static
};

std::vector<ClosestPair> gather_pairs(const kin::RobotModel& model, const kin::JointConfig& q,
                                      const WorldView& world, const AvoidanceParams& params);

// Right-hand side of the velocity constraint for one pair:
//   direction . v_r - alpha * ln((d_react - max(d,0)) / (d_react - d_eq))
double avoidance_bound(const ClosestPair& pair, const AvoidanceParams& params);

std::vector<LinearRow> avoidance_rows(const std::vector<ClosestPair>& pairs,
                                      const AvoidanceParams& params, int dof);

QPStepProblem build_problem(const kin::RobotState& state, const Eigen::VectorXd& q_d,
                            const Eigen::VectorXd& qd_d, const QPGains& gains,
                            const std::vector<LinearRow>& rows, const kin::RobotModel& model);

enum class QPStatus { Optimal, Infeasible };

struct QPSolution {
  QPStatus status{QPStatus::Infeasible};
  Eigen::VectorXd u;
  double objective{0.0};
  std::vector<int> active;  // inequality rows active at the solution
};

// Dense dual active-set solve. Deterministic: constraint selection is
// most-violated with lowest-index tie breaking; `warm_hint` rows are tried
// first when violated.
QPSolution solve_qp(const QPStepProblem& problem, const std::vector<int>& warm_hint = {});

enum class StepMode { Reactive, NonReactive };

struct StepResult {
  Eigen::VectorXd q_cmd;
  Eigen::VectorXd qd_cmd;
  QPStatus status{QPStatus::Optimal};
  bool fallback{false};
  bool bypassed_qp{false};
  int active_pairs{0};
  double min_pair_distance{std::numeric_limits<double>::infinity()};
  std::vector<int> active_set;
};

// One control tick: sample the reference at t+dt, assemble and solve the
// QP, and integrate the command. NonReactive passes the sample through
// unchanged whenever it is within limits, so a declared trajectory is
// reproduced exactly.
StepResult step(const kin::RobotState& state, const traj::Trajectory& trajectory, double t,
                const WorldView& world, StepMode mode, const QPGains& gains,
                const AvoidanceParams& params, const kin::RobotModel& model,
                const std::vector<int>& warm_hint = {});

}  // namespace multiflex::localqp
