#include "multiflex/kin.hpp"

#include <cmath>
#include <stdexcept>

namespace multiflex::kin {

RobotModel RobotModel::inflated(double margin) const {
  RobotModel copy = *this;
  for (auto& link : copy.link_capsules) {
    for (auto& cap : link) {
      cap.radius += margin;
    }
  }
  return copy;
}

namespace {

Eigen::Isometry3d dh_transform(const DhJoint& j, double q) {
  const double ct = std::cos(q + j.theta_offset);
  const double st = std::sin(q + j.theta_offset);
  const double ca = std::cos(j.alpha);
  const double sa = std::sin(j.alpha);
  Eigen::Matrix4d m;
  m << ct, -st * ca, st * sa, j.a * ct,
       st, ct * ca, -ct * sa, j.a * st,
       0.0, sa, ca, j.d,
       0.0, 0.0, 0.0, 1.0;
  Eigen::Isometry3d t;
  t.matrix() = m;
  return t;
}

}  // namespace

std::vector<Eigen::Isometry3d> forward_kinematics(const RobotModel& model, const JointConfig& q) {
  if (q.size() != model.dof) {
    throw std::invalid_argument("forward_kinematics: configuration size " +
                                std::to_string(q.size()) + " != dof " +
                                std::to_string(model.dof));
  }
  std::vector<Eigen::Isometry3d> poses(model.dof + 1);
  poses[0] = model.base_pose;
  for (int i = 0; i < model.dof; ++i) {
    poses[i + 1] = poses[i] * dh_transform(model.joints[i], q[i]);
  }
  return poses;
}

std::vector<PlacedCapsule> place_capsules(const RobotModel& model,
                                          const std::vector<Eigen::Isometry3d>& poses) {
  std::vector<PlacedCapsule> placed;
  for (int link = 1; link <= model.dof; ++link) {
    for (const auto& cap : model.link_capsules[link - 1]) {
      PlacedCapsule p;
      p.link = link;
      p.capsule.p0 = poses[link] * cap.p0;
      p.capsule.p1 = poses[link] * cap.p1;
      p.capsule.radius = cap.radius;
      placed.push_back(p);
    }
  }
  return placed;
}

std::vector<PlacedCapsule> place_capsules(const RobotModel& model, const JointConfig& q) {
  return place_capsules(model, forward_kinematics(model, q));
}

Eigen::Matrix3Xd point_jacobian(const RobotModel& model,
                                const std::vector<Eigen::Isometry3d>& poses, int link_index,
                                const geom::Vec3& world_point) {
  if (link_index < 0 || link_index > model.dof) {
    throw std::out_of_range("point_jacobian: link index " + std::to_string(link_index));
  }
  Eigen::Matrix3Xd jac = Eigen::Matrix3Xd::Zero(3, model.dof);
  for (int j = 0; j < link_index; ++j) {
    const geom::Vec3 axis = poses[j].rotation().col(2);
    const geom::Vec3 origin = poses[j].translation();
    jac.col(j) = axis.cross(world_point - origin);
  }
  return jac;
}

Eigen::Matrix3Xd point_jacobian(const RobotModel& model, const JointConfig& q, int link_index,
                                const geom::Vec3& world_point) {
  return point_jacobian(model, forward_kinematics(model, q), link_index, world_point);
}

std::vector<LimitViolation> check_limits(const RobotModel& model, const RobotState& state) {
  std::vector<LimitViolation> out;
  for (int j = 0; j < model.dof; ++j) {
    const auto& lim = model.limits[j];
    if (state.q.size() == model.dof && (state.q[j] < lim.q_min || state.q[j] > lim.q_max)) {
      out.push_back({j, LimitViolation::Kind::Position, state.q[j],
                     state.q[j] < lim.q_min ? lim.q_min : lim.q_max});
    }
    if (state.qd.size() == model.dof && std::abs(state.qd[j]) > lim.v_max) {
      out.push_back({j, LimitViolation::Kind::Velocity, state.qd[j], lim.v_max});
    }
    if (state.qdd.size() == model.dof && std::abs(state.qdd[j]) > lim.a_max) {
      out.push_back({j, LimitViolation::Kind::Acceleration, state.qdd[j], lim.a_max});
    }
  }
  return out;
}

bool within_position_limits(const RobotModel& model, const JointConfig& q) {
  for (int j = 0; j < model.dof; ++j) {
    if (q[j] < model.limits[j].q_min || q[j] > model.limits[j].q_max) {
      return false;
    }
  }
  return true;
}

geom::VoxelSet swept_volume_voxels(const RobotModel& model, const JointPath& path,
                                   const geom::VoxelGridSpec& grid, double step) {
  if (path.waypoints.empty()) {
    throw std::invalid_argument("swept_volume_voxels: empty path");
  }
  if (step <= 0.0) {
    throw std::invalid_argument("swept_volume_voxels: step must be positive");
  }
  for (const auto& wp : path.waypoints) {
    if (!within_position_limits(model, wp)) {
      throw std::invalid_argument("swept_volume_voxels: waypoint out of joint limits");
    }
  }

  geom::VoxelSet out(grid);
  auto add_pose = [&](const JointConfig& q) {
    for (const auto& placed : place_capsules(model, q)) {
      const geom::VoxelSet vs = geom::voxelize_capsule(placed.capsule, grid);
      for (std::uint32_t idx : vs.indices()) {
        out.push(idx);
      }
    }
  };

  add_pose(path.waypoints.front());
  for (std::size_t i = 0; i + 1 < path.waypoints.size(); ++i) {
    const JointConfig& a = path.waypoints[i];
    const JointConfig& b = path.waypoints[i + 1];
    const double dist = (b - a).lpNorm<Eigen::Infinity>();
    const int n = std::max(1, static_cast<int>(std::ceil(dist / step)));
    for (int k = 1; k <= n; ++k) {
      add_pose(a + (static_cast<double>(k) / n) * (b - a));
    }
  }
  out.finalize();
  return out;
}

geom::VoxelSet pose_occupancy(const RobotModel& model, const JointConfig& q,
                              const geom::VoxelGridSpec& grid) {
  geom::VoxelSet out(grid);
  for (const auto& pc : place_capsules(model, q)) {
    const geom::VoxelSet vs = geom::voxelize_capsule(pc.capsule, grid);
    for (std::uint32_t idx : vs.indices()) {
      out.push(idx);
    }
  }
  out.finalize();
  return out;
}

RobotModel default_arm(const std::string& name) {
  RobotModel m;
  m.name = name;
  m.dof = 6;
  m.joints = {
      {0.060, -M_PI / 2, 0.300, 0.0},
      {0.300, 0.0, 0.0, 0.0},
      {0.060, -M_PI / 2, 0.0, 0.0},
      {0.0, M_PI / 2, 0.250, 0.0},
      {0.0, -M_PI / 2, 0.0, 0.0},
      {0.0, 0.0, 0.080, 0.0},
  };
  m.limits = {
      {-2.9, 2.9, 1.0, 3.0},
      {-1.9, 1.9, 1.0, 3.0},
      {-2.4, 2.4, 1.0, 3.0},
      {-2.9, 2.9, 1.5, 4.0},
      {-2.0, 2.0, 1.5, 4.0},
      {-3.0, 3.0, 1.5, 4.0},
  };
  const double radii[6] = {0.060, 0.055, 0.045, 0.045, 0.040, 0.035};
  m.link_capsules.resize(6);
  for (int i = 0; i < 6; ++i) {
    const DhJoint& j = m.joints[i];
    geom::Capsule cap;
    // Previous joint origin expressed in this link frame.
    cap.p0 = geom::Vec3(-j.a, -j.d * std::sin(j.alpha), -j.d * std::cos(j.alpha));
    cap.p1 = geom::Vec3::Zero();
    cap.radius = radii[i];
    m.link_capsules[i].push_back(cap);
  }
  return m;
}

}  // namespace multiflex::kin
