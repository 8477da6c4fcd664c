#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "multiflex/geom.hpp"
#include "multiflex/kin.hpp"

namespace multiflex::roadmap {

using kin::JointPath;

struct RoadmapParams {
  int n_vertices{60};
  int k_neighbors{6};
  double edge_check_step{0.05};  // max-norm rad between edge collision samples
};

struct Edge {
  std::uint32_t u{0};
  std::uint32_t v{0};
  double cost{0.0};  // joint-space Euclidean length
};

// Joint-space graph with a voxel -> graph incidence map for fast runtime
// invalidation. Immutable after build; queries attach temporary vertices
// without mutating it.
struct Roadmap {
  kin::RobotModel model;
  std::vector<geom::SweptSphere> static_world;
  geom::VoxelGridSpec grid;
  std::uint64_t build_seed{0};

  std::vector<kin::JointConfig> vertices;
  std::vector<Edge> edges;
  // voxel linear index -> sorted ids of edges/vertices whose swept/static
  // volume intersects that voxel.
  std::map<std::uint32_t, std::vector<std::uint32_t>> voxel_edges;
  std::map<std::uint32_t, std::vector<std::uint32_t>> voxel_vertices;

  // adjacency[v] = (neighbor, edge id), sorted by neighbor id.
  std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> adjacency;
  void rebuild_adjacency();
};

struct ValidityMask {
  std::vector<bool> vertex_valid;
  std::vector<bool> edge_valid;
};

struct BuildError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Offline roadmap generation: uniform seeded sampling in the joint-limit
// box, rejection against the static world, k-nearest connection with
// discretized edge checks, then the voxel incidence map.
Roadmap build_roadmap(const kin::RobotModel& model,
                      const std::vector<geom::SweptSphere>& static_world,
                      const RoadmapParams& params, const geom::VoxelGridSpec& grid,
                      std::uint64_t seed);

// An edge/vertex is invalid iff any of its mapped voxels is occupied.
// Cost proportional to |occupied| lookups, not to |E|.
ValidityMask update_validity(const Roadmap& rm, const geom::VoxelSet& occupied);

// Temporary start/goal attachment for one query; ids continue past the
// persistent vertex ids.
struct QueryAttachment {
  std::uint32_t id{0};
  kin::JointConfig q;
  std::vector<std::pair<std::uint32_t, double>> links;  // (vertex id, cost)
};

// Link q to up to k nearest valid vertices with edges checked against the
// occupied set and the static world. Returns nullopt when no collision-free
// link exists (or q itself is occupied).
std::optional<QueryAttachment> connect_query(const Roadmap& rm, const kin::JointConfig& q,
                                             const ValidityMask& mask,
                                             const geom::VoxelSet& occupied, int k,
                                             std::uint32_t attachment_id);

// Discretized check of the straight joint-space segment a-b against the
// static world and the occupied voxel set.
bool edge_clear_against(const Roadmap& rm, const kin::JointConfig& a, const kin::JointConfig& b,
                        const geom::VoxelSet& occupied);

// Minimal-cost path over valid edges; heuristic is joint-space Euclidean
// distance to the goal. Ties break on (f, g, vertex id). Returns nullopt
// when the goal is unreachable in the valid subgraph.
std::optional<JointPath> astar(const Roadmap& rm, const ValidityMask& mask, std::uint32_t start,
                               std::uint32_t goal,
                               const std::vector<QueryAttachment>& attachments = {});

// Cache file round-trip. The key identifies (model, grid, params, static
// world, seed); loading verifies it and the format version.
std::uint64_t cache_key(const kin::RobotModel& model,
                        const std::vector<geom::SweptSphere>& static_world,
                        const RoadmapParams& params, const geom::VoxelGridSpec& grid,
                        std::uint64_t seed);

struct CacheError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void save_cache(const Roadmap& rm, std::uint64_t key, const std::string& path);
// Returns nullopt when the file does not exist; throws CacheError when it
// exists but is corrupt or keyed differently.
std::optional<Roadmap> load_cache(const std::string& path, std::uint64_t expected_key,
                                  const kin::RobotModel& model,
                                  const std::vector<geom::SweptSphere>& static_world);

}  // namespace multiflex::roadmap
