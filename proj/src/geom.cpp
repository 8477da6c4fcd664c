#include "multiflex/geom.hpp"

#include <algorithm>
#include <cmath>

namespace multiflex::geom {

namespace {
double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }
}  // namespace

void VoxelSet::finalize() {
  std::sort(indices_.begin(), indices_.end());
  indices_.erase(std::unique(indices_.begin(), indices_.end()), indices_.end());
}

bool VoxelSet::contains(std::uint32_t idx) const {
  return std::binary_search(indices_.begin(), indices_.end(), idx);
}

bool VoxelSet::intersects(const VoxelSet& other) const {
  auto a = indices_.begin();
  auto b = other.indices_.begin();
  while (a != indices_.end() && b != other.indices_.end()) {
    if (*a < *b) {
      ++a;
    } else if (*b < *a) {
      ++b;
    } else {
      return true;
    }
  }
  return false;
}

void VoxelSet::unite(const VoxelSet& other) {
  std::vector<std::uint32_t> merged;
  merged.reserve(indices_.size() + other.indices_.size());
  std::set_union(indices_.begin(), indices_.end(), other.indices_.begin(), other.indices_.end(),
                 std::back_inserter(merged));
  indices_ = std::move(merged);
}

std::pair<double, double> closest_segment_params(const Vec3& a0, const Vec3& a1,
                                                 const Vec3& b0, const Vec3& b1) {
  const Vec3 d1 = a1 - a0;
  const Vec3 d2 = b1 - b0;
  const Vec3 r = a0 - b0;
  const double la = d1.squaredNorm();
  const double lb = d2.squaredNorm();
  const double f = d2.dot(r);

  constexpr double kTiny = 1e-18;
  if (la <= kTiny && lb <= kTiny) {
    return {0.0, 0.0};
  }
  if (la <= kTiny) {
    return {0.0, clamp01(f / lb)};
  }
  const double c = d1.dot(r);
  if (lb <= kTiny) {
    return {clamp01(-c / la), 0.0};
  }

  const double b = d1.dot(d2);
  const double denom = la * lb - b * b;

  double s;
  if (denom > 1e-12 * la * lb) {
    s = clamp01((b * f - c * lb) / denom);
  } else {
    // Parallel: pick the midpoint of the interval of a-parameters that face
    // segment b, so ties resolve deterministically.
    const double t0 = clamp01(-c / la);
    const double t1 = clamp01((b - c) / la);
    s = 0.5 * (t0 + t1);
  }
  double t = (b * s + f) / lb;
  if (t < 0.0) {
    t = 0.0;
    s = clamp01(-c / la);
  } else if (t > 1.0) {
    t = 1.0;
    s = clamp01((b - c) / la);
  }
  return {s, t};
}

double point_segment_distance(const Vec3& p, const Vec3& s0, const Vec3& s1) {
  const Vec3 d = s1 - s0;
  const double len2 = d.squaredNorm();
  if (len2 <= 1e-18) {
    return (p - s0).norm();
  }
  const double t = clamp01((p - s0).dot(d) / len2);
  return (p - (s0 + t * d)).norm();
}

namespace {

DistanceResult segment_pair_result(const Vec3& a0, const Vec3& a1, double ra,
                                   const Vec3& b0, const Vec3& b1, double rb) {
  const auto [s, t] = closest_segment_params(a0, a1, b0, b1);
  DistanceResult out;
  out.point_a = a0 + s * (a1 - a0);
  out.point_b = b0 + t * (b1 - b0);
  const Vec3 diff = out.point_a - out.point_b;
  const double n = diff.norm();
  out.d_hat = n > 1e-12 ? Vec3(diff / n) : Vec3::UnitX();
  out.distance = n - ra - rb;
  return out;
}

}  // namespace

DistanceResult capsule_capsule_distance(const Capsule& a, const Capsule& b) {
  return segment_pair_result(a.p0, a.p1, a.radius, b.p0, b.p1, b.radius);
}

DistanceResult capsule_sweptsphere_distance(const Capsule& c, const SweptSphere& s) {
  DistanceResult best;
  best.distance = std::numeric_limits<double>::infinity();
  if (s.path.empty()) {
    return best;
  }
  const std::size_t nseg = s.path.size() > 1 ? s.path.size() - 1 : 1;
  for (std::size_t i = 0; i < nseg; ++i) {
    const Vec3& b0 = s.path[i];
    const Vec3& b1 = s.path[std::min(i + 1, s.path.size() - 1)];
    DistanceResult r = segment_pair_result(c.p0, c.p1, c.radius, b0, b1, s.radius);
    if (r.distance < best.distance) {
      best = r;
    }
  }
  return best;
}

VoxelSet voxelize_capsule(const Capsule& c, const VoxelGridSpec& grid) {
  VoxelSet out(grid);
  const double res = grid.resolution;
  const double reach = c.radius + 0.5 * std::sqrt(3.0) * res;

  const Vec3 lo = c.p0.cwiseMin(c.p1).array() - reach;
  const Vec3 hi = c.p0.cwiseMax(c.p1).array() + reach;

  Eigen::Vector3i ilo, ihi;
  for (int k = 0; k < 3; ++k) {
    ilo[k] = std::max(0, static_cast<int>(std::floor((lo[k] - grid.origin[k]) / res)));
    ihi[k] = std::min(grid.dims[k] - 1, static_cast<int>(std::floor((hi[k] - grid.origin[k]) / res)));
  }
  if ((ilo.array() > ihi.array()).any()) {
    return out;
  }
  for (int iz = ilo.z(); iz <= ihi.z(); ++iz) {
    for (int iy = ilo.y(); iy <= ihi.y(); ++iy) {
      for (int ix = ilo.x(); ix <= ihi.x(); ++ix) {
        const Vec3 center = grid.voxel_center(ix, iy, iz);
        if (point_segment_distance(center, c.p0, c.p1) <= reach) {
          out.push(grid.linear_index(ix, iy, iz));
        }
      }
    }
  }
  out.finalize();
  return out;
}

}  // namespace multiflex::geom
