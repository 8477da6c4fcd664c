#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <fstream>
#include <numeric>

#include "multiflex/rng.hpp"
#include "multiflex/roadmap.hpp"
#include "oracles.hpp"

using namespace multiflex;
using roadmap::Roadmap;
using roadmap::RoadmapParams;

namespace {

geom::VoxelGridSpec test_grid() {
  return {{-1.0, -1.0, -0.3}, 0.05, {40, 40, 30}};
}

Roadmap small_roadmap(std::uint64_t seed = 7, int n = 50, int k = 5) {
  RoadmapParams params;
  params.n_vertices = n;
  params.k_neighbors = k;
  params.edge_check_step = 0.1;
  return roadmap::build_roadmap(kin::default_arm(), {}, params, test_grid(), seed);
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace

TEST_CASE("same seed builds a bit-identical roadmap") {
  const auto a = small_roadmap(123);
  const auto b = small_roadmap(123);
  REQUIRE(a.vertices.size() == b.vertices.size());
  for (std::size_t i = 0; i < a.vertices.size(); ++i) {
    CHECK(a.vertices[i] == b.vertices[i]);
  }
  const std::uint64_t key = 42;
  roadmap::save_cache(a, key, "/tmp/mf_rm_a.bin");
  roadmap::save_cache(b, key, "/tmp/mf_rm_b.bin");
  CHECK(file_bytes("/tmp/mf_rm_a.bin") == file_bytes("/tmp/mf_rm_b.bin"));
}

TEST_CASE("empty world gives a well-connected graph") {
  const auto rm = small_roadmap(7, 50, 5);
  REQUIRE(rm.vertices.size() == 50);
  UnionFind uf(50);
  for (const auto& e : rm.edges) {
    uf.unite(static_cast<int>(e.u), static_cast<int>(e.v));
  }
  std::map<int, int> comp;
  for (int v = 0; v < 50; ++v) {
    comp[uf.find(v)]++;
  }
  int largest = 0;
  for (const auto& [root, count] : comp) {
    largest = std::max(largest, count);
  }
  CHECK(largest >= 40);  // >= 80% of vertices
}

TEST_CASE("engulfing obstacle fails the build") {
  geom::SweptSphere blob;
  blob.path = {geom::Vec3(0, 0, 0.2)};
  blob.radius = 5.0;
  RoadmapParams params;
  params.n_vertices = 10;
  CHECK_THROWS_AS(
      roadmap::build_roadmap(kin::default_arm(), {blob}, params, test_grid(), 1),
      roadmap::BuildError);
}

TEST_CASE("update_validity: empty and full occupancy") {
  const auto rm = small_roadmap();
  geom::VoxelSet none(rm.grid);
  const auto mask = roadmap::update_validity(rm, none);
  CHECK(std::all_of(mask.vertex_valid.begin(), mask.vertex_valid.end(),
                    [](bool b) { return b; }));
  CHECK(std::all_of(mask.edge_valid.begin(), mask.edge_valid.end(),
                    [](bool b) { return b; }));

  geom::VoxelSet everything(rm.grid);
  for (std::uint32_t idx = 0; idx < rm.grid.voxel_count(); ++idx) {
    everything.push(idx);
  }
  everything.finalize();
  const auto full = roadmap::update_validity(rm, everything);
  CHECK(std::none_of(full.vertex_valid.begin(), full.vertex_valid.end(),
                     [](bool b) { return b; }));
  CHECK(std::none_of(full.edge_valid.begin(), full.edge_valid.end(),
                     [](bool b) { return b; }));

  geom::VoxelSet wrong(geom::VoxelGridSpec{{0, 0, 0}, 0.1, {2, 2, 2}});
  CHECK_THROWS_AS(roadmap::update_validity(rm, wrong), std::invalid_argument);
}

TEST_CASE("update_validity: occupying one edge's sweep invalidates exactly the touched graph") {
  const auto rm = small_roadmap();
  REQUIRE(!rm.edges.empty());
  const std::uint32_t target = 0;
  kin::JointPath seg;
  seg.waypoints = {rm.vertices[rm.edges[target].u], rm.vertices[rm.edges[target].v]};
  const auto occupied = kin::swept_volume_voxels(rm.model, seg, rm.grid, 0.1);

  const auto mask = roadmap::update_validity(rm, occupied);
  CHECK_FALSE(mask.edge_valid[target]);

  // Brute-force recheck of every edge and vertex against the same occupancy.
  for (std::uint32_t e = 0; e < rm.edges.size(); ++e) {
    kin::JointPath es;
    es.waypoints = {rm.vertices[rm.edges[e].u], rm.vertices[rm.edges[e].v]};
    const bool hit =
        kin::swept_volume_voxels(rm.model, es, rm.grid, 0.1).intersects(occupied);
    CHECK(mask.edge_valid[e] == !hit);
  }
  for (std::uint32_t v = 0; v < rm.vertices.size(); ++v) {
    const bool hit = kin::pose_occupancy(rm.model, rm.vertices[v], rm.grid).intersects(occupied);
    CHECK(mask.vertex_valid[v] == !hit);
  }
}

TEST_CASE("update_validity: random occupancy agrees with brute force") {
  const auto rm = small_roadmap(11);
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    geom::VoxelSet occupied(rm.grid);
    const int blobs = 1 + static_cast<int>(rng.uniform_index(40));
    for (int b = 0; b < blobs; ++b) {
      occupied.push(static_cast<std::uint32_t>(rng.uniform_index(rm.grid.voxel_count())));
    }
    // bias toward voxels that actually map to something
    if (!rm.voxel_edges.empty()) {
      auto it = rm.voxel_edges.begin();
      std::advance(it, rng.uniform_index(rm.voxel_edges.size()));
      occupied.push(it->first);
    }
    occupied.finalize();

    const auto mask = roadmap::update_validity(rm, occupied);
    for (std::uint32_t e = 0; e < rm.edges.size(); ++e) {
      kin::JointPath es;
      es.waypoints = {rm.vertices[rm.edges[e].u], rm.vertices[rm.edges[e].v]};
      const bool hit =
          kin::swept_volume_voxels(rm.model, es, rm.grid, 0.1).intersects(occupied);
      CHECK(mask.edge_valid[e] == !hit);
    }
  }
}

TEST_CASE("astar: start equals goal") {
  const auto rm = small_roadmap();
  geom::VoxelSet none(rm.grid);
  const auto mask = roadmap::update_validity(rm, none);
  const auto path = roadmap::astar(rm, mask, 3, 3);
  REQUIRE(path.has_value());
  CHECK(path->waypoints.size() == 1);
  CHECK(path->waypoints[0] == rm.vertices[3]);
}

TEST_CASE("astar: invalid goal yields no path") {
  const auto rm = small_roadmap();
  geom::VoxelSet none(rm.grid);
  auto mask = roadmap::update_validity(rm, none);
  mask.vertex_valid[5] = false;
  CHECK_FALSE(roadmap::astar(rm, mask, 0, 5).has_value());
}

TEST_CASE("astar: cost matches Dijkstra on random queries and masks") {
  const auto rm = small_roadmap(31, 50, 5);
  Rng rng(77);
  geom::VoxelSet none(rm.grid);
  for (int trial = 0; trial < 100; ++trial) {
    auto mask = roadmap::update_validity(rm, none);
    // knock out a random subset of edges
    for (auto&& valid : mask.edge_valid) {
      if (rng.uniform() < 0.2) {
        valid = false;
      }
    }
    const auto start = static_cast<std::uint32_t>(rng.uniform_index(rm.vertices.size()));
    const auto goal = static_cast<std::uint32_t>(rng.uniform_index(rm.vertices.size()));
    const auto path = roadmap::astar(rm, mask, start, goal);
    const auto oracle = oracles::dijkstra_cost(rm, mask, start, goal);
    REQUIRE(path.has_value() == oracle.has_value());
    if (path) {
      double cost = 0.0;
      for (std::size_t i = 0; i + 1 < path->waypoints.size(); ++i) {
        cost += (path->waypoints[i + 1] - path->waypoints[i]).norm();
      }
      CHECK(cost == doctest::Approx(*oracle).epsilon(1e-9));
    }
  }
}

TEST_CASE("connect_query behaviors") {
  const auto rm = small_roadmap();
  geom::VoxelSet none(rm.grid);
  const auto mask = roadmap::update_validity(rm, none);
  const auto n = static_cast<std::uint32_t>(rm.vertices.size());

  // existing vertex connects at zero cost
  const auto att = roadmap::connect_query(rm, rm.vertices[4], mask, none, 5, n);
  REQUIRE(att.has_value());
  bool zero_link = false;
  for (const auto& [v, cost] : att->links) {
    if (v == 4 && cost < 1e-12) {
      zero_link = true;
    }
  }
  CHECK(zero_link);

  // a configuration whose own occupancy is marked occupied cannot connect
  const Eigen::VectorXd q = Eigen::VectorXd::Zero(6);
  const auto occ = kin::pose_occupancy(rm.model, q, rm.grid);
  CHECK_FALSE(roadmap::connect_query(rm, q, mask, occ, 5, n).has_value());

  // random free configurations connect, and the resulting start/goal path
  // samples are verified collision-free against the occupancy oracle
  Rng rng(9);
  geom::VoxelSet occupied(rm.grid);
  occupied.push(rm.grid.linear_index(1, 1, 1));
  occupied.finalize();
  const auto mask2 = roadmap::update_validity(rm, occupied);
  int connected = 0;
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd qr(6);
    for (int j = 0; j < 6; ++j) {
      qr[j] = rng.uniform(rm.model.limits[j].q_min * 0.5, rm.model.limits[j].q_max * 0.5);
    }
    const auto a = roadmap::connect_query(rm, qr, mask2, occupied, 5, n);
    if (!a) {
      continue;
    }
    ++connected;
    for (const auto& [v, cost] : a->links) {
      const Eigen::VectorXd& target = rm.vertices[v];
      for (int s = 0; s <= 20; ++s) {
        const Eigen::VectorXd sample = qr + (s / 20.0) * (target - qr);
        CHECK_FALSE(kin::pose_occupancy(rm.model, sample, rm.grid).intersects(occupied));
      }
    }
  }
  CHECK(connected > 0);
}

TEST_CASE("queries leave the roadmap untouched") {
  const auto rm = small_roadmap(55);
  roadmap::save_cache(rm, 1, "/tmp/mf_rm_before.bin");
  geom::VoxelSet none(rm.grid);
  const auto mask = roadmap::update_validity(rm, none);
  const auto n = static_cast<std::uint32_t>(rm.vertices.size());
  const auto att = roadmap::connect_query(rm, rm.vertices[0], mask, none, 3, n);
  REQUIRE(att.has_value());
  (void)roadmap::astar(rm, mask, n, 10, {*att});
  roadmap::save_cache(rm, 1, "/tmp/mf_rm_after.bin");
  CHECK(file_bytes("/tmp/mf_rm_before.bin") == file_bytes("/tmp/mf_rm_after.bin"));
}

TEST_CASE("cache round trip, key mismatch, corruption") {
  const auto rm = small_roadmap(99, 20, 4);
  const auto key = roadmap::cache_key(rm.model, rm.static_world,
                                      {20, 4, 0.1}, rm.grid, 99);
  const std::string path = "/tmp/mf_rm_cache.bin";
  roadmap::save_cache(rm, key, path);

  const auto loaded = roadmap::load_cache(path, key, rm.model, rm.static_world);
  REQUIRE(loaded.has_value());
  REQUIRE(loaded->vertices.size() == rm.vertices.size());
  for (std::size_t i = 0; i < rm.vertices.size(); ++i) {
    CHECK(loaded->vertices[i] == rm.vertices[i]);
  }
  CHECK(loaded->edges.size() == rm.edges.size());
  CHECK(loaded->voxel_edges == rm.voxel_edges);

  CHECK_THROWS_AS(roadmap::load_cache(path, key + 1, rm.model, rm.static_world),
                  roadmap::CacheError);

  CHECK_FALSE(roadmap::load_cache("/tmp/mf_rm_missing.bin", key, rm.model, rm.static_world)
                  .has_value());

  std::ofstream bad("/tmp/mf_rm_bad.bin", std::ios::binary);
  bad << "not a roadmap";
  bad.close();
  CHECK_THROWS_AS(roadmap::load_cache("/tmp/mf_rm_bad.bin", key, rm.model, rm.static_world),
                  roadmap::CacheError);
}
