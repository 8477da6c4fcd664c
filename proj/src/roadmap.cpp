#include "multiflex/roadmap.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <queue>
#include <set>
#include <tuple>

#include "multiflex/rng.hpp"

namespace multiflex::roadmap {

namespace {

bool config_collides(const kin::RobotModel& model, const kin::JointConfig& q,
                     const std::vector<geom::SweptSphere>& world) {
  if (world.empty()) {
    return false;
  }
  const auto placed = kin::place_capsules(model, q);
  for (const auto& pc : placed) {
    for (const auto& ss : world) {
      if (geom::capsule_sweptsphere_distance(pc.capsule, ss).distance <= 0.0) {
        return true;
      }
    }
  }
  return false;
}

}  // namespace

bool edge_clear_against(const Roadmap& rm, const kin::JointConfig& a, const kin::JointConfig& b,
                        const geom::VoxelSet& occupied) {
  const double span = (b - a).lpNorm<Eigen::Infinity>();
  const int steps = std::max(1, static_cast<int>(std::ceil(span / 0.05)));
  for (int s = 0; s <= steps; ++s) {
    const kin::JointConfig q = a + (static_cast<double>(s) / steps) * (b - a);
    if (config_collides(rm.model, q, rm.static_world)) {
      return false;
    }
    if (!occupied.empty() && kin::pose_occupancy(rm.model, q, rm.grid).intersects(occupied)) {
      return false;
    }
  }
  return true;
}

void Roadmap::rebuild_adjacency() {
  adjacency.assign(vertices.size(), {});
  for (std::uint32_t e = 0; e < edges.size(); ++e) {
    adjacency[edges[e].u].emplace_back(edges[e].v, e);
    adjacency[edges[e].v].emplace_back(edges[e].u, e);
  }
  for (auto& nbrs : adjacency) {
    std::sort(nbrs.begin(), nbrs.end());
  }
}

Roadmap build_roadmap(const kin::RobotModel& model,
                      const std::vector<geom::SweptSphere>& static_world,
                      const RoadmapParams& params, const geom::VoxelGridSpec& grid,
                      std::uint64_t seed) {
  if (params.n_vertices <= 0 || params.k_neighbors <= 0 || params.edge_check_step <= 0.0) {
    throw std::invalid_argument("build_roadmap: parameters must be positive");
  }

  Roadmap rm;
  rm.model = model;
  rm.static_world = static_world;
  rm.grid = grid;
  rm.build_seed = seed;

  Rng rng(seed);
  const int budget = 10 * params.n_vertices;
  int attempts = 0;
  while (static_cast<int>(rm.vertices.size()) < params.n_vertices && attempts < budget) {
    ++attempts;
    kin::JointConfig q(model.dof);
    for (int j = 0; j < model.dof; ++j) {
      q[j] = rng.uniform(model.limits[j].q_min, model.limits[j].q_max);
    }
    if (!config_collides(model, q, static_world)) {
      rm.vertices.push_back(q);
    }
  }
  if (rm.vertices.empty()) {
    throw BuildError("build_roadmap: no collision-free vertices after " +
                     std::to_string(budget) + " attempts");
  }

  const std::uint32_t n = static_cast<std::uint32_t>(rm.vertices.size());
  std::set<std::pair<std::uint32_t, std::uint32_t>> candidates;
  for (std::uint32_t u = 0; u < n; ++u) {
    std::vector<std::pair<double, std::uint32_t>> dist;
    for (std::uint32_t v = 0; v < n; ++v) {
      if (v != u) {
        dist.emplace_back((rm.vertices[u] - rm.vertices[v]).norm(), v);
      }
    }
    std::sort(dist.begin(), dist.end());
    const int k = std::min<int>(params.k_neighbors, static_cast<int>(dist.size()));
    for (int i = 0; i < k; ++i) {
      const std::uint32_t v = dist[i].second;
      candidates.emplace(std::min(u, v), std::max(u, v));
    }
  }

  auto edge_clear = [&](const kin::JointConfig& a, const kin::JointConfig& b) {
    const double span = (b - a).lpNorm<Eigen::Infinity>();
    const int steps = std::max(1, static_cast<int>(std::ceil(span / params.edge_check_step)));
    for (int s = 0; s <= steps; ++s) {
      const kin::JointConfig q = a + (static_cast<double>(s) / steps) * (b - a);
      if (config_collides(model, q, static_world)) {
        return false;
      }
    }
    return true;
  };

  for (const auto& [u, v] : candidates) {
    if (edge_clear(rm.vertices[u], rm.vertices[v])) {
      rm.edges.push_back({u, v, (rm.vertices[u] - rm.vertices[v]).norm()});
    }
  }

  for (std::uint32_t v = 0; v < n; ++v) {
    const geom::VoxelSet occ = kin::pose_occupancy(model, rm.vertices[v], grid);
    for (std::uint32_t idx : occ.indices()) {
      rm.voxel_vertices[idx].push_back(v);
    }
  }
  for (std::uint32_t e = 0; e < rm.edges.size(); ++e) {
    kin::JointPath seg;
    seg.waypoints = {rm.vertices[rm.edges[e].u], rm.vertices[rm.edges[e].v]};
    const geom::VoxelSet swept =
        kin::swept_volume_voxels(model, seg, grid, params.edge_check_step);
    for (std::uint32_t idx : swept.indices()) {
      rm.voxel_edges[idx].push_back(e);
    }
  }

  rm.rebuild_adjacency();
  return rm;
}

ValidityMask update_validity(const Roadmap& rm, const geom::VoxelSet& occupied) {
  if (!occupied.grid().same_as(rm.grid)) {
    throw std::invalid_argument("update_validity: occupancy grid does not match roadmap grid");
  }
  ValidityMask mask;
  mask.vertex_valid.assign(rm.vertices.size(), true);
  mask.edge_valid.assign(rm.edges.size(), true);
  for (std::uint32_t idx : occupied.indices()) {
    if (auto it = rm.voxel_edges.find(idx); it != rm.voxel_edges.end()) {
      for (std::uint32_t e : it->second) {
        mask.edge_valid[e] = false;
      }
    }
    if (auto it = rm.voxel_vertices.find(idx); it != rm.voxel_vertices.end()) {
      for (std::uint32_t v : it->second) {
        mask.vertex_valid[v] = false;
      }
    }
  }
  return mask;
}

std::optional<QueryAttachment> connect_query(const Roadmap& rm, const kin::JointConfig& q,
                                             const ValidityMask& mask,
                                             const geom::VoxelSet& occupied, int k,
                                             std::uint32_t attachment_id) {
  if (!kin::within_position_limits(rm.model, q)) {
    throw std::invalid_argument("connect_query: configuration out of joint limits");
  }
  if (config_collides(rm.model, q, rm.static_world)) {
    return std::nullopt;
  }
  if (!occupied.empty() && kin::pose_occupancy(rm.model, q, rm.grid).intersects(occupied)) {
    return std::nullopt;
  }

  std::vector<std::pair<double, std::uint32_t>> dist;
  for (std::uint32_t v = 0; v < rm.vertices.size(); ++v) {
    if (mask.vertex_valid[v]) {
      dist.emplace_back((rm.vertices[v] - q).norm(), v);
    }
  }
  std::sort(dist.begin(), dist.end());

  QueryAttachment att;
  att.id = attachment_id;
  att.q = q;
  const int k_try = std::min<int>(k, static_cast<int>(dist.size()));
  for (int i = 0; i < k_try; ++i) {
    const std::uint32_t v = dist[i].second;
    if (dist[i].first < 1e-12 || edge_clear_against(rm, q, rm.vertices[v], occupied)) {
      att.links.emplace_back(v, dist[i].first);
    }
  }
  if (att.links.empty()) {
    return std::nullopt;
  }
  return att;
}

std::optional<JointPath> astar(const Roadmap& rm, const ValidityMask& mask, std::uint32_t start,
                               std::uint32_t goal,
                               const std::vector<QueryAttachment>& attachments) {
  const std::uint32_t n = static_cast<std::uint32_t>(rm.vertices.size());
  const std::uint32_t total = n + static_cast<std::uint32_t>(attachments.size());
  if (start >= total || goal >= total) {
    throw std::out_of_range("astar: vertex id out of range");
  }
  auto config_of = [&](std::uint32_t id) -> const kin::JointConfig& {
    return id < n ? rm.vertices[id] : attachments[id - n].q;
  };
  auto is_valid = [&](std::uint32_t id) { return id >= n || mask.vertex_valid[id]; };

  if (!is_valid(start) || !is_valid(goal)) {
    return std::nullopt;
  }
  if (start == goal) {
    JointPath path;
    path.waypoints.push_back(config_of(start));
    return path;
  }

  const kin::JointConfig& goal_q = config_of(goal);
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> g(total, inf);
  std::vector<std::uint32_t> parent(total, total);
  using Node = std::tuple<double, double, std::uint32_t>;  // (f, g, id)
  std::priority_queue<Node, std::vector<Node>, std::greater<Node>> open;

  g[start] = 0.0;
  open.emplace((config_of(start) - goal_q).norm(), 0.0, start);

  auto relax = [&](std::uint32_t from, std::uint32_t to, double cost) {
    const double cand = g[from] + cost;
    if (cand < g[to]) {
      g[to] = cand;
      parent[to] = from;
      open.emplace(cand + (config_of(to) - goal_q).norm(), cand, to);
    }
  };

  std::vector<bool> closed(total, false);
  while (!open.empty()) {
    const auto [f, gc, id] = open.top();
    open.pop();
    if (closed[id] || gc > g[id]) {
      continue;
    }
    if (id == goal) {
      break;
    }
    closed[id] = true;

    if (id < n) {
      for (const auto& [nbr, edge_id] : rm.adjacency[id]) {
        if (mask.edge_valid[edge_id] && mask.vertex_valid[nbr] && !closed[nbr]) {
          relax(id, nbr, rm.edges[edge_id].cost);
        }
      }
      for (std::uint32_t a = 0; a < attachments.size(); ++a) {
        for (const auto& [v, cost] : attachments[a].links) {
          if (v == id && !closed[n + a]) {
            relax(id, n + a, cost);
          }
        }
      }
    } else {
      for (const auto& [v, cost] : attachments[id - n].links) {
        if (mask.vertex_valid[v] && !closed[v]) {
          relax(id, v, cost);
        }
      }
    }
  }

  if (g[goal] == inf) {
    return std::nullopt;
  }

  std::vector<std::uint32_t> chain;
  for (std::uint32_t id = goal; id != total; id = parent[id]) {
    chain.push_back(id);
    if (id == start) {
      break;
    }
  }
  std::reverse(chain.begin(), chain.end());

  JointPath path;
  for (std::uint32_t id : chain) {
    const kin::JointConfig& q = config_of(id);
    if (path.waypoints.empty() ||
        (path.waypoints.back() - q).lpNorm<Eigen::Infinity>() > 1e-12) {
      path.waypoints.push_back(q);
    }
  }
  return path;
}

// ---------------------------------------------------------------------------
// Cache serialization

namespace {

class Fnv1a {
 public:
  void feed(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      hash_ ^= p[i];
      hash_ *= 0x100000001b3ull;
    }
  }
  void feed_double(double v) { feed(&v, sizeof(v)); }
  void feed_u64(std::uint64_t v) { feed(&v, sizeof(v)); }
  void feed_i32(std::int32_t v) { feed(&v, sizeof(v)); }
  std::uint64_t value() const { return hash_; }

 private:
  std::uint64_t hash_{0xcbf29ce484222325ull};
};

constexpr char kMagic[8] = {'M', 'F', 'R', 'M', '0', '0', '0', '1'};

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) {
    throw CacheError("roadmap cache truncated; rebuild with build-roadmap");
  }
  return v;
}

void write_index_map(std::ostream& os,
                     const std::map<std::uint32_t, std::vector<std::uint32_t>>& m) {
  write_pod(os, static_cast<std::uint32_t>(m.size()));
  for (const auto& [key, ids] : m) {
    write_pod(os, key);
    write_pod(os, static_cast<std::uint32_t>(ids.size()));
    for (std::uint32_t id : ids) {
      write_pod(os, id);
    }
  }
}

std::map<std::uint32_t, std::vector<std::uint32_t>> read_index_map(std::istream& is) {
  std::map<std::uint32_t, std::vector<std::uint32_t>> m;
  const std::uint32_t n = read_pod<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint32_t key = read_pod<std::uint32_t>(is);
    const std::uint32_t count = read_pod<std::uint32_t>(is);
    std::vector<std::uint32_t> ids(count);
    for (auto& id : ids) {
      id = read_pod<std::uint32_t>(is);
    }
    m.emplace(key, std::move(ids));
  }
  return m;
}

}  // namespace

std::uint64_t cache_key(const kin::RobotModel& model,
                        const std::vector<geom::SweptSphere>& static_world,
                        const RoadmapParams& params, const geom::VoxelGridSpec& grid,
                        std::uint64_t seed) {
  Fnv1a h;
  h.feed(model.name.data(), model.name.size());
  h.feed_i32(model.dof);
  for (const auto& j : model.joints) {
    h.feed_double(j.a);
    h.feed_double(j.alpha);
    h.feed_double(j.d);
    h.feed_double(j.theta_offset);
  }
  for (const auto& l : model.limits) {
    h.feed_double(l.q_min);
    h.feed_double(l.q_max);
    h.feed_double(l.v_max);
    h.feed_double(l.a_max);
  }
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) {
      h.feed_double(model.base_pose.matrix()(r, c));
    }
  }
  for (const auto& link : model.link_capsules) {
    h.feed_i32(static_cast<std::int32_t>(link.size()));
    for (const auto& cap : link) {
      for (int i = 0; i < 3; ++i) h.feed_double(cap.p0[i]);
      for (int i = 0; i < 3; ++i) h.feed_double(cap.p1[i]);
      h.feed_double(cap.radius);
    }
  }
  for (const auto& ss : static_world) {
    h.feed_i32(static_cast<std::int32_t>(ss.path.size()));
    for (const auto& p : ss.path) {
      for (int i = 0; i < 3; ++i) h.feed_double(p[i]);
    }
    h.feed_double(ss.radius);
  }
  h.feed_i32(params.n_vertices);
  h.feed_i32(params.k_neighbors);
  h.feed_double(params.edge_check_step);
  for (int i = 0; i < 3; ++i) h.feed_double(grid.origin[i]);
  h.feed_double(grid.resolution);
  for (int i = 0; i < 3; ++i) h.feed_i32(grid.dims[i]);
  h.feed_u64(seed);
  return h.value();
}

void save_cache(const Roadmap& rm, std::uint64_t key, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) {
    throw CacheError("cannot open roadmap cache for writing: " + path);
  }
  os.write(kMagic, sizeof(kMagic));
  write_pod(os, key);
  write_pod(os, static_cast<std::uint32_t>(rm.model.dof));
  write_pod(os, rm.build_seed);

  for (int i = 0; i < 3; ++i) write_pod(os, rm.grid.origin[i]);
  write_pod(os, rm.grid.resolution);
  for (int i = 0; i < 3; ++i) write_pod(os, static_cast<std::int32_t>(rm.grid.dims[i]));

  write_pod(os, static_cast<std::uint32_t>(rm.vertices.size()));
  for (const auto& v : rm.vertices) {
    for (int j = 0; j < v.size(); ++j) {
      write_pod(os, v[j]);
    }
  }
  write_pod(os, static_cast<std::uint32_t>(rm.edges.size()));
  for (const auto& e : rm.edges) {
    write_pod(os, e.u);
    write_pod(os, e.v);
    write_pod(os, e.cost);
  }
  write_index_map(os, rm.voxel_edges);
  write_index_map(os, rm.voxel_vertices);
  if (!os) {
    throw CacheError("failed writing roadmap cache: " + path);
  }
}

std::optional<Roadmap> load_cache(const std::string& path, std::uint64_t expected_key,
                                  const kin::RobotModel& model,
                                  const std::vector<geom::SweptSphere>& static_world) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    return std::nullopt;
  }
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw CacheError("roadmap cache corrupt (bad header): " + path +
                     "; delete it or rerun build-roadmap");
  }
  const std::uint64_t key = read_pod<std::uint64_t>(is);
  if (key != expected_key) {
    throw CacheError("roadmap cache key mismatch (stale parameters): " + path +
                     "; rerun build-roadmap");
  }
  Roadmap rm;
  rm.model = model;
  rm.static_world = static_world;
  const std::uint32_t dof = read_pod<std::uint32_t>(is);
  if (dof != static_cast<std::uint32_t>(model.dof)) {
    throw CacheError("roadmap cache dof mismatch: " + path);
  }
  rm.build_seed = read_pod<std::uint64_t>(is);
  for (int i = 0; i < 3; ++i) rm.grid.origin[i] = read_pod<double>(is);
  rm.grid.resolution = read_pod<double>(is);
  for (int i = 0; i < 3; ++i) rm.grid.dims[i] = read_pod<std::int32_t>(is);

  const std::uint32_t nv = read_pod<std::uint32_t>(is);
  rm.vertices.resize(nv);
  for (auto& v : rm.vertices) {
    v.resize(dof);
    for (std::uint32_t j = 0; j < dof; ++j) {
      v[j] = read_pod<double>(is);
    }
  }
  const std::uint32_t ne = read_pod<std::uint32_t>(is);
  rm.edges.resize(ne);
  for (auto& e : rm.edges) {
    e.u = read_pod<std::uint32_t>(is);
    e.v = read_pod<std::uint32_t>(is);
    e.cost = read_pod<double>(is);
    if (e.u >= nv || e.v >= nv) {
      throw CacheError("roadmap cache corrupt (edge out of range): " + path);
    }
  }
  rm.voxel_edges = read_index_map(is);
  rm.voxel_vertices = read_index_map(is);
  rm.rebuild_adjacency();
  return rm;
}

}  // namespace multiflex::roadmap
