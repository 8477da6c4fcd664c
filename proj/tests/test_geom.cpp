#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "multiflex/geom.hpp"
#include "multiflex/rng.hpp"
#include "oracles.hpp"

using namespace multiflex;
using geom::Capsule;
using geom::SweptSphere;
using geom::Vec3;
using geom::VoxelGridSpec;

namespace {

Capsule random_capsule(Rng& rng, double extent) {
  Capsule c;
  for (int k = 0; k < 3; ++k) {
    c.p0[k] = rng.uniform(-extent, extent);
    c.p1[k] = rng.uniform(-extent, extent);
  }
  c.radius = rng.uniform(0.02, 0.15);
  return c;
}

}  // namespace

TEST_CASE("parallel unit segments at 0.30 m separation") {
  Capsule a{{0, 0, 0}, {1, 0, 0}, 0.05};
  Capsule b{{0, 0.3, 0}, {1, 0.3, 0}, 0.05};
  const auto r = geom::capsule_capsule_distance(a, b);
  CHECK(r.distance == doctest::Approx(0.20).epsilon(1e-12));
  CHECK(r.distance ==
        doctest::Approx(oracles::sampled_capsule_distance(a, b)).epsilon(1e-4));
  // Parallel tie resolves to midpoint parameters.
  CHECK(r.point_a.x() == doctest::Approx(0.5));
  CHECK(r.point_b.x() == doctest::Approx(0.5));
  CHECK(r.d_hat.isApprox(Vec3(0, -1, 0), 1e-12));
}

TEST_CASE("identical capsules fully penetrate") {
  Capsule a{{0.1, 0.2, 0.3}, {0.4, 0.2, 0.3}, 0.07};
  const auto r = geom::capsule_capsule_distance(a, a);
  CHECK(r.distance == doctest::Approx(-0.14).epsilon(1e-12));
  CHECK(r.d_hat == Vec3::UnitX());
}

TEST_CASE("collinear spheres") {
  Capsule a{{0, 0, 0}, {0, 0, 0}, 0.1};
  Capsule b{{1, 0, 0}, {1, 0, 0}, 0.2};
  const auto r = geom::capsule_capsule_distance(a, b);
  CHECK(r.distance == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(r.d_hat.isApprox(Vec3(-1, 0, 0), 1e-12));
}

TEST_CASE("distance symmetry and sampling-oracle consistency") {
  Rng rng(42);
  for (int i = 0; i < 1000; ++i) {
    const Capsule a = random_capsule(rng, 0.8);
    const Capsule b = random_capsule(rng, 0.8);
    const auto rab = geom::capsule_capsule_distance(a, b);
    const auto rba = geom::capsule_capsule_distance(b, a);
    CHECK(rab.distance == doctest::Approx(rba.distance).epsilon(1e-9));
    if (rab.distance > 1e-6) {
      CHECK((rab.d_hat + rba.d_hat).norm() < 1e-9);
    }
    const double oracle = oracles::sampled_capsule_distance(a, b);
    const double pitch = oracles::sampling_pitch(a, b);
    CHECK(std::abs(rab.distance - oracle) <= 2.0 * pitch);
    CHECK(rab.distance <= oracle + 1e-12);  // analytic min is a true min
  }
}

TEST_CASE("swept sphere reduces to capsule for a single point path") {
  Capsule c{{0, 0, 0}, {1, 0, 0}, 0.05};
  SweptSphere s;
  s.path = {{0.5, 0.4, 0.0}};
  s.radius = 0.1;
  Capsule as_capsule{{0.5, 0.4, 0.0}, {0.5, 0.4, 0.0}, 0.1};
  const auto r1 = geom::capsule_sweptsphere_distance(c, s);
  const auto r2 = geom::capsule_capsule_distance(c, as_capsule);
  CHECK(r1.distance == doctest::Approx(r2.distance).epsilon(1e-12));
}

TEST_CASE("L-shaped path takes the minimum over segments") {
  Capsule c{{0, 0, 0}, {1, 0, 0}, 0.05};
  SweptSphere s;
  s.path = {{0.5, 0.5, 0}, {0.5, 0.2, 0}, {1.5, 0.2, 0}};
  s.radius = 0.05;
  const auto r = geom::capsule_sweptsphere_distance(c, s);
  Capsule seg1{{0.5, 0.5, 0}, {0.5, 0.2, 0}, 0.05};
  Capsule seg2{{0.5, 0.2, 0}, {1.5, 0.2, 0}, 0.05};
  const double expect = std::min(geom::capsule_capsule_distance(c, seg1).distance,
                                 geom::capsule_capsule_distance(c, seg2).distance);
  CHECK(r.distance == doctest::Approx(expect).epsilon(1e-12));
  CHECK(std::abs(r.distance - std::min(oracles::sampled_capsule_distance(c, seg1),
                                       oracles::sampled_capsule_distance(c, seg2))) <= 1e-3);
}

TEST_CASE("far-field path clears the reaction distance") {
  Capsule c{{0, 0, 0}, {1, 0, 0}, 0.05};
  SweptSphere s;
  s.path = {{0, 5, 0}, {1, 5, 0}};
  s.radius = 0.05;
  CHECK(geom::capsule_sweptsphere_distance(c, s).distance > 0.2);
}

TEST_CASE("voxelize: capsule outside the grid is empty") {
  VoxelGridSpec grid{{0, 0, 0}, 0.05, {10, 10, 10}};
  Capsule c{{5, 5, 5}, {6, 5, 5}, 0.1};
  CHECK(geom::voxelize_capsule(c, grid).empty());
}

TEST_CASE("voxelize: axis-aligned spine is covered and conservative") {
  VoxelGridSpec grid{{0, 0, 0}, 0.1, {20, 20, 20}};
  // Axis through the centers of voxels (5..7, 10, 10).
  Capsule c{{0.55, 1.05, 1.05}, {0.85, 1.05, 1.05}, 0.1};
  const auto vs = geom::voxelize_capsule(c, grid);
  for (int ix = 5; ix <= 8; ++ix) {
    CHECK(vs.contains(grid.linear_index(ix, 10, 10)));
  }
  // Conservative: every definitely-intersecting voxel is present.
  const double pitch = 1e-4;
  for (std::uint32_t idx = 0; idx < grid.voxel_count(); ++idx) {
    const Eigen::Vector3i cell = grid.unpack(idx);
    const Vec3 lo = grid.origin + grid.resolution * cell.cast<double>();
    const Vec3 hi = lo + Vec3::Constant(grid.resolution);
    const double d = oracles::sampled_segment_box_distance(c.p0, c.p1, lo, hi, 3000);
    if (d <= c.radius - pitch) {
      CHECK(vs.contains(idx));
    }
  }
}

TEST_CASE("voxelize: conservativeness on random capsules") {
  VoxelGridSpec grid{{-0.5, -0.5, -0.5}, 0.05, {20, 20, 20}};
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Capsule c = random_capsule(rng, 0.45);
    const auto vs = geom::voxelize_capsule(c, grid);
    for (std::uint32_t idx = 0; idx < grid.voxel_count(); ++idx) {
      if (vs.contains(idx)) {
        continue;
      }
      const Eigen::Vector3i cell = grid.unpack(idx);
      const Vec3 lo = grid.origin + grid.resolution * cell.cast<double>();
      const Vec3 hi = lo + Vec3::Constant(grid.resolution);
      const double d = oracles::sampled_segment_box_distance(c.p0, c.p1, lo, hi, 500);
      CHECK(d > c.radius - 2e-4);
    }
  }
}

TEST_CASE("voxelize: sphere at a voxel center includes that voxel") {
  VoxelGridSpec grid{{0, 0, 0}, 0.1, {10, 10, 10}};
  const Vec3 center = grid.voxel_center(4, 4, 4);
  Capsule c{center, center, 0.04};
  CHECK(geom::voxelize_capsule(c, grid).contains(grid.linear_index(4, 4, 4)));
}

TEST_CASE("voxel set operations") {
  VoxelGridSpec grid{{0, 0, 0}, 0.1, {4, 4, 4}};
  geom::VoxelSet a(grid);
  a.push(3);
  a.push(1);
  a.push(3);
  a.finalize();
  CHECK(a.size() == 2);
  CHECK(a.contains(1));
  geom::VoxelSet b(grid);
  b.push(2);
  b.finalize();
  CHECK_FALSE(a.intersects(b));
  b.push(3);
  b.finalize();
  CHECK(a.intersects(b));
  a.unite(b);
  CHECK(a.size() == 3);
}
