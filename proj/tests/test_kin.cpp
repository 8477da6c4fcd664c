#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "multiflex/kin.hpp"
#include "multiflex/rng.hpp"
#include "oracles.hpp"

using namespace multiflex;
using kin::RobotModel;

namespace {

Eigen::VectorXd random_config(const RobotModel& m, Rng& rng) {
  Eigen::VectorXd q(m.dof);
  for (int j = 0; j < m.dof; ++j) {
    q[j] = rng.uniform(m.limits[j].q_min, m.limits[j].q_max);
  }
  return q;
}

RobotModel planar_two_link() {
  RobotModel m;
  m.name = "planar2";
  m.dof = 2;
  m.joints = {{1.0, 0.0, 0.0, 0.0}, {1.0, 0.0, 0.0, 0.0}};
  m.limits = {{-3.0, 3.0, 1.0, 2.0}, {-3.0, 3.0, 1.0, 2.0}};
  m.link_capsules = {{{{-1, 0, 0}, {0, 0, 0}, 0.05}}, {{{-1, 0, 0}, {0, 0, 0}, 0.05}}};
  return m;
}

}  // namespace

TEST_CASE("zero configuration matches the offset chain") {
  const RobotModel m = kin::default_arm();
  const auto poses = kin::forward_kinematics(m, Eigen::VectorXd::Zero(6));
  const Eigen::Matrix4d oracle = oracles::chain_fk_oracle(m, Eigen::VectorXd::Zero(6));
  CHECK((poses.back().matrix() - oracle).norm() < 1e-12);
}

TEST_CASE("random configurations match the matrix-chain oracle") {
  const RobotModel m = kin::default_arm();
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const Eigen::VectorXd q = random_config(m, rng);
    const auto poses = kin::forward_kinematics(m, q);
    const Eigen::Matrix4d oracle = oracles::chain_fk_oracle(m, q);
    CHECK((poses.back().matrix() - oracle).norm() < 1e-10);
  }
}

TEST_CASE("pi rotation of the base joint negates downstream x,y") {
  const RobotModel m = kin::default_arm();
  Eigen::VectorXd q = Eigen::VectorXd::Zero(6);
  const auto base = kin::forward_kinematics(m, q);
  q[0] = M_PI;
  const auto rotated = kin::forward_kinematics(m, q);
  for (int link = 1; link <= 6; ++link) {
    const geom::Vec3 p0 = base[link].translation();
    const geom::Vec3 p1 = rotated[link].translation();
    CHECK(p1.x() == doctest::Approx(-p0.x()).epsilon(1e-9));
    CHECK(p1.y() == doctest::Approx(-p0.y()).epsilon(1e-9));
    CHECK(p1.z() == doctest::Approx(p0.z()).epsilon(1e-9));
  }
}

TEST_CASE("forward kinematics is deterministic") {
  const RobotModel m = kin::default_arm();
  Rng rng(11);
  const Eigen::VectorXd q = random_config(m, rng);
  const auto a = kin::forward_kinematics(m, q);
  const auto b = kin::forward_kinematics(m, q);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].matrix() == b[i].matrix());
  }
}

TEST_CASE("dimension mismatch throws") {
  const RobotModel m = kin::default_arm();
  CHECK_THROWS_AS(kin::forward_kinematics(m, Eigen::VectorXd::Zero(4)), std::invalid_argument);
}

TEST_CASE("point jacobian: base link is zero, out of range throws") {
  const RobotModel m = kin::default_arm();
  const Eigen::VectorXd q = Eigen::VectorXd::Zero(6);
  const auto jac = kin::point_jacobian(m, q, 0, {0.1, 0.2, 0.0});
  CHECK(jac.norm() == 0.0);
  CHECK_THROWS_AS(kin::point_jacobian(m, q, 7, {0, 0, 0}), std::out_of_range);
}

TEST_CASE("point jacobian matches finite differences") {
  const RobotModel m = kin::default_arm();
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const Eigen::VectorXd q = random_config(m, rng);
    const int link = 1 + static_cast<int>(rng.uniform_index(6));
    const auto poses = kin::forward_kinematics(m, q);
    const geom::Vec3 point =
        poses[link] * geom::Vec3(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1),
                                 rng.uniform(-0.1, 0.1));
    const auto jac = kin::point_jacobian(m, q, link, point);
    const auto fd = oracles::fd_point_jacobian(m, q, link, point);
    CHECK((jac - fd).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("planar two-link tip jacobian") {
  const RobotModel m = planar_two_link();
  const Eigen::VectorXd q = Eigen::VectorXd::Zero(2);
  const auto poses = kin::forward_kinematics(m, q);
  CHECK(poses[2].translation().isApprox(geom::Vec3(2, 0, 0), 1e-12));
  const auto jac = kin::point_jacobian(m, q, 2, {2, 0, 0});
  CHECK(jac.col(0).isApprox(geom::Vec3(0, 2, 0), 1e-12));
  CHECK(jac.col(1).isApprox(geom::Vec3(0, 1, 0), 1e-12));
  const auto fd = oracles::fd_point_jacobian(m, q, 2, {2, 0, 0});
  CHECK((jac - fd).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("limit checks") {
  const RobotModel m = kin::default_arm();
  kin::RobotState state;
  state.q = Eigen::VectorXd::Zero(6);
  state.qd = Eigen::VectorXd::Zero(6);
  state.qdd = Eigen::VectorXd::Zero(6);
  CHECK(kin::check_limits(m, state).empty());

  state.q[3] = m.limits[3].q_max + 0.01;
  const auto violations = kin::check_limits(m, state);
  REQUIRE(violations.size() == 1);
  CHECK(violations[0].joint == 3);
  CHECK(violations[0].kind == kin::LimitViolation::Kind::Position);

  // Closed intervals: exactly at the limits is fine.
  for (int j = 0; j < 6; ++j) {
    state.q[j] = m.limits[j].q_max;
    state.qd[j] = m.limits[j].v_max;
    state.qdd[j] = -m.limits[j].a_max;
  }
  CHECK(kin::check_limits(m, state).empty());
}

TEST_CASE("capsule placement distances are rigid-transform invariant") {
  RobotModel m = kin::default_arm();
  Rng rng(17);
  const Eigen::VectorXd q = random_config(m, rng);
  const auto placed = kin::place_capsules(m, q);
  const double d0 =
      geom::capsule_capsule_distance(placed[1].capsule, placed[4].capsule).distance;

  Eigen::Isometry3d world = Eigen::Isometry3d::Identity();
  world.translation() = geom::Vec3(0.3, -0.7, 0.2);
  world.linear() = Eigen::AngleAxisd(1.1, geom::Vec3(1, 2, 3).normalized()).toRotationMatrix();
  m.base_pose = world * m.base_pose;
  const auto moved = kin::place_capsules(m, q);
  const double d1 =
      geom::capsule_capsule_distance(moved[1].capsule, moved[4].capsule).distance;
  CHECK(d0 == doctest::Approx(d1).epsilon(1e-9));
}

TEST_CASE("swept volume voxels") {
  const RobotModel m = kin::default_arm();
  geom::VoxelGridSpec grid{{-1.0, -1.0, -0.3}, 0.05, {40, 40, 30}};

  kin::JointPath single;
  single.waypoints.push_back(Eigen::VectorXd::Zero(6));
  const auto vs = kin::swept_volume_voxels(m, single, grid, 0.1);
  const auto pose = kin::pose_occupancy(m, Eigen::VectorXd::Zero(6), grid);
  CHECK(vs.indices() == pose.indices());

  kin::JointPath empty;
  CHECK_THROWS_AS(kin::swept_volume_voxels(m, empty, grid, 0.1), std::invalid_argument);

  kin::JointPath bad;
  Eigen::VectorXd q = Eigen::VectorXd::Zero(6);
  q[0] = 10.0;
  bad.waypoints.push_back(q);
  CHECK_THROWS_AS(kin::swept_volume_voxels(m, bad, grid, 0.1), std::invalid_argument);
}

TEST_CASE("swept volume: halving the step only erodes a one-voxel shell") {
  const RobotModel m = kin::default_arm();
  geom::VoxelGridSpec grid{{-1.0, -1.0, -0.3}, 0.05, {40, 40, 30}};
  kin::JointPath path;
  Eigen::VectorXd a = Eigen::VectorXd::Zero(6);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(6);
  b << 0.8, 0.4, -0.5, 0.3, 0.6, 0.0;
  path.waypoints = {a, b};

  // Refining the step only adds volume: whatever the coarse sweep claimed
  // stays within one voxel of the finer sweep.
  auto within_shell = [&](const geom::VoxelSet& subset, const geom::VoxelSet& cover) {
    for (std::uint32_t idx : subset.indices()) {
      const Eigen::Vector3i c = grid.unpack(idx);
      bool ok = false;
      for (int dz = -1; dz <= 1 && !ok; ++dz) {
        for (int dy = -1; dy <= 1 && !ok; ++dy) {
          for (int dx = -1; dx <= 1 && !ok; ++dx) {
            const Eigen::Vector3i n = c + Eigen::Vector3i(dx, dy, dz);
            if ((n.array() >= 0).all() && (n.array() < grid.dims.array()).all() &&
                cover.contains(grid.linear_index(n.x(), n.y(), n.z()))) {
              ok = true;
            }
          }
        }
      }
      if (!ok) {
        return false;
      }
    }
    return true;
  };
  for (const double step : {0.4, 0.2, 0.1}) {
    const auto coarse = kin::swept_volume_voxels(m, path, grid, step);
    const auto halved = kin::swept_volume_voxels(m, path, grid, step / 2.0);
    CHECK(within_shell(coarse, halved));
  }
  const auto coarse = kin::swept_volume_voxels(m, path, grid, 0.4);
  const auto fine10 = kin::swept_volume_voxels(m, path, grid, 0.04);
  CHECK(within_shell(coarse, fine10));
}
