#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <string>
#include <vector>

#include "multiflex/geom.hpp"

namespace multiflex::kin {

using JointConfig = Eigen::VectorXd;

struct JointLimits {
  double q_min{0.0};
  double q_max{0.0};
  double v_max{0.0};
  double a_max{0.0};
};

// Denavit-Hartenberg style frame parameters for one revolute joint:
// T = RotZ(q + theta_offset) * TransZ(d) * TransX(a) * RotX(alpha).
struct DhJoint {
  double a{0.0};
  double alpha{0.0};
  double d{0.0};
  double theta_offset{0.0};
};

struct RobotModel {
  std::string name;
  int dof{0};
  std::vector<DhJoint> joints;
  std::vector<JointLimits> limits;
  Eigen::Isometry3d base_pose{Eigen::Isometry3d::Identity()};
  // link_capsules[i] are attached to the frame after joint i+1,
  // expressed in that frame.
  std::vector<std::vector<geom::Capsule>> link_capsules;

  // Copy with every capsule radius grown by `margin` (claim inflation).
  RobotModel inflated(double margin) const;
};

struct RobotState {
  JointConfig q;
  Eigen::VectorXd qd;
  Eigen::VectorXd qdd;
};

struct PlacedCapsule {
  geom::Capsule capsule;
  int link{0};  // 1-based joint frame the capsule is attached to
};

// World poses of frames 0..dof (0 = base).
std::vector<Eigen::Isometry3d> forward_kinematics(const RobotModel& model, const JointConfig& q);

std::vector<PlacedCapsule> place_capsules(const RobotModel& model, const JointConfig& q);
std::vector<PlacedCapsule> place_capsules(const RobotModel& model,
                                          const std::vector<Eigen::Isometry3d>& poses);

// Translational Jacobian of a world point rigidly attached to `link_index`
// (0 = base, columns for joints beyond the link are zero).
Eigen::Matrix3Xd point_jacobian(const RobotModel& model, const JointConfig& q, int link_index,
                                const geom::Vec3& world_point);
Eigen::Matrix3Xd point_jacobian(const RobotModel& model,
                                const std::vector<Eigen::Isometry3d>& poses, int link_index,
                                const geom::Vec3& world_point);

struct LimitViolation {
  enum class Kind { Position, Velocity, Acceleration };
  int joint{0};
  Kind kind{Kind::Position};
  double value{0.0};
  double bound{0.0};
};

// Empty iff q within [q_min, q_max], |qd| <= v_max, |qdd| <= a_max
// componentwise (closed intervals).
std::vector<LimitViolation> check_limits(const RobotModel& model, const RobotState& state);

bool within_position_limits(const RobotModel& model, const JointConfig& q);

struct JointPath {
  std::vector<JointConfig> waypoints;
};

// Union of voxelized link capsules over the path densified so consecutive
// samples differ by at most `step` in max-norm joint distance.
// Throws std::invalid_argument for an empty path or out-of-limit waypoints.
geom::VoxelSet swept_volume_voxels(const RobotModel& model, const JointPath& path,
                                   const geom::VoxelGridSpec& grid, double step);

// Voxelized body occupancy at one configuration.
geom::VoxelSet pose_occupancy(const RobotModel& model, const JointConfig& q,
                              const geom::VoxelGridSpec& grid);

// Generic six-axis elbow arm used by tests and as the default workcell robot.
RobotModel default_arm(const std::string& name = "arm");

}  // namespace multiflex::kin
