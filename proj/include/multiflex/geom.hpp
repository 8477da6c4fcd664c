#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

namespace multiflex::geom {

using Vec3 = Eigen::Vector3d;

// Line-segment-with-radius primitive used for robot links.
// p0 == p1 degenerates to a sphere.
struct Capsule {
  Vec3 p0{Vec3::Zero()};
  Vec3 p1{Vec3::Zero()};
  double radius{0.0};
};

// Polyline-with-radius primitive used for static workspace objects.
struct SweptSphere {
  std::vector<Vec3> path;
  double radius{0.0};
};

// Surface-to-surface distance between two primitives.
// `distance` is negative on penetration (depth along `d_hat`).
// `point_a`/`point_b` are the closest points on the two axis polylines;
// the radii are already subtracted from `distance`.
// `d_hat` is the unit vector from the b-side point toward the a-side point.
// Coincident axes fall back to +x so callers always get a direction.
struct DistanceResult {
  double distance{0.0};
  Vec3 point_a{Vec3::Zero()};
  Vec3 point_b{Vec3::Zero()};
  Vec3 d_hat{Vec3::UnitX()};
};

struct VoxelGridSpec {
  Vec3 origin{Vec3::Zero()};
  double resolution{0.05};
  Eigen::Vector3i dims{Eigen::Vector3i::Ones()};

  bool same_as(const VoxelGridSpec& other) const {
    return origin == other.origin && resolution == other.resolution && dims == other.dims;
  }
  std::uint32_t linear_index(int ix, int iy, int iz) const {
    return static_cast<std::uint32_t>((iz * dims.y() + iy) * dims.x() + ix);
  }
  Eigen::Vector3i unpack(std::uint32_t idx) const {
    const int nx = dims.x();
    const int ny = dims.y();
    const int ix = static_cast<int>(idx) % nx;
    const int iy = (static_cast<int>(idx) / nx) % ny;
    const int iz = static_cast<int>(idx) / (nx * ny);
    return {ix, iy, iz};
  }
  Vec3 voxel_center(int ix, int iy, int iz) const {
    return origin + resolution * Vec3(ix + 0.5, iy + 0.5, iz + 0.5);
  }
  Vec3 voxel_center(std::uint32_t idx) const {
    const Eigen::Vector3i c = unpack(idx);
    return voxel_center(c.x(), c.y(), c.z());
  }
  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims.x()) * dims.y() * dims.z();
  }
};

// Set of voxel indices over one grid, kept sorted and unique.
class VoxelSet {
 public:
  VoxelSet() = default;
  explicit VoxelSet(VoxelGridSpec grid) : grid_(std::move(grid)) {}

  const VoxelGridSpec& grid() const { return grid_; }
  const std::vector<std::uint32_t>& indices() const { return indices_; }
  bool empty() const { return indices_.empty(); }
  std::size_t size() const { return indices_.size(); }

  // Append without maintaining order; call finalize() before queries.
  void push(std::uint32_t idx) { indices_.push_back(idx); }
  void finalize();

  bool contains(std::uint32_t idx) const;
  bool intersects(const VoxelSet& other) const;
  void unite(const VoxelSet& other);

 private:
  VoxelGridSpec grid_;
  std::vector<std::uint32_t> indices_;
};

// Closest points between two segments with clamped parameters.
// Parallel-overlap ties resolve to the midpoint of the overlap interval.
std::pair<double, double> closest_segment_params(const Vec3& a0, const Vec3& a1,
                                                 const Vec3& b0, const Vec3& b1);

double point_segment_distance(const Vec3& p, const Vec3& s0, const Vec3& s1);

DistanceResult capsule_capsule_distance(const Capsule& a, const Capsule& b);

// Minimum over the polyline segments of b treated as capsules of s.radius.
DistanceResult capsule_sweptsphere_distance(const Capsule& c, const SweptSphere& s);

// Conservative voxelization: a voxel is included iff its center lies within
// radius + (sqrt(3)/2)*resolution of the axis segment. Portions outside the
// grid are clipped.
VoxelSet voxelize_capsule(const Capsule& c, const VoxelGridSpec& grid);

}  // namespace multiflex::geom
