#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "multiflex/geom.hpp"
#include "multiflex/kin.hpp"
#include "multiflex/localqp.hpp"
#include "multiflex/roadmap.hpp"
#include "multiflex/taskplan.hpp"

namespace multiflex::config {

// Parse/validation failure with a JSON-pointer-style field path in the
// message.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CoordinatorParams {
  double period{0.1};        // planning cycle, decoupled from the control tick
  double claim_margin{0.02}; // extra capsule radius when voxelizing claims
  taskplan::PriorityMode priority{taskplan::PriorityMode::LowestRobotId};
};

struct PlannerParams {
  localqp::QPGains gains;
  localqp::AvoidanceParams avoidance;
  roadmap::RoadmapParams roadmap;
  CoordinatorParams coordinator;
};

struct RobotSpec {
  kin::RobotModel model;  // base pose already applied
  Eigen::VectorXd home;
};

struct WorkcellConfig {
  geom::VoxelGridSpec grid;
  std::vector<RobotSpec> robots;
  std::vector<geom::SweptSphere> static_obstacles;
  PlannerParams planner;
};

// Units throughout: meters, radians, seconds. Unknown keys are rejected.
WorkcellConfig parse_workcell(const std::string& json_text);
WorkcellConfig load_workcell(const std::string& path);
std::string serialize_workcell(const WorkcellConfig& cfg);

// Seed resolves duration_range/verdict draws (duration = lo + u*(hi-lo) with
// the substream derived from seed and draw_key).
taskplan::TaskGraph parse_taskgraph(const std::string& json_text, std::uint64_t seed);
taskplan::TaskGraph load_taskgraph(const std::string& path, std::uint64_t seed);
std::string serialize_taskgraph(const taskplan::TaskGraph& graph);

// Cross-checks a task graph against a workcell (robot ids, goal dimensions,
// joint limits of declared paths).
void validate_compat(const WorkcellConfig& cfg, const taskplan::TaskGraph& graph);

std::string read_file(const std::string& path);

}  // namespace multiflex::config
