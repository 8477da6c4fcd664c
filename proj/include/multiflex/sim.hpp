#pragma once

#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "multiflex/config.hpp"
#include "multiflex/coord.hpp"
#include "multiflex/roadmap.hpp"
#include "multiflex/taskplan.hpp"

namespace multiflex::sim {

struct Scenario {
  config::WorkcellConfig workcell;
  taskplan::TaskGraph graph;
  std::uint64_t seed{0};
  double dt{0.016};
  double max_time{300.0};
};

struct EventRecord {
  std::string type;
  int robot{-1};
  std::string task;
  int subtask{-1};
  std::uint64_t reservation{0};
  std::string detail;
};

struct RobotTickRecord {
  Eigen::VectorXd q;
  Eigen::VectorXd qd;
  std::string task;     // empty when unassigned
  int subtask{-1};
  std::string kind;     // Idle | RM | NRM | NMA, empty when unassigned
  std::string verdict;  // Proceed | Wait, empty when unassigned
  bool qp_fallback{false};
};

struct SeparationRecord {
  std::string a;
  std::string b;
  double distance{std::numeric_limits<double>::infinity()};
};

struct TraceRecord {
  std::uint64_t tick{0};
  double t{0.0};
  std::vector<RobotTickRecord> robots;
  std::vector<SeparationRecord> separations;
  std::vector<EventRecord> events;
};

struct Metrics {
  bool completed{false};
  std::string exit_reason;  // complete | timeout | deadlock
  double cycle_time{0.0};
  double min_clearance{std::numeric_limits<double>::infinity()};
  double clearance_floor{0.0};  // d_eq - mu
  int clearance_violations{0};
  bool deadlock{false};
  std::map<std::string, double> task_duration;
  std::map<std::string, double> wait_time;  // per robot name
  std::uint64_t ticks{0};
  std::uint64_t seed{0};
};

using TraceSink = std::function<void(const TraceRecord&)>;

struct RunOptions {
  TraceSink sink;
  // Per-robot prebuilt roadmaps (cache path); built from scratch when empty.
  std::vector<roadmap::Roadmap> roadmaps;
  bool stop_on_deadlock{true};
  int deadlock_window{50};  // coordinator cycles
};

// Fixed-step deterministic run: per tick the loop refreshes occupancy,
// runs the coordinator at its own period, steps every robot's local planner
// against an immutable snapshot, integrates commands as the next state, and
// logs one trace record.
Metrics run(const Scenario& scenario, const RunOptions& options = {});

// Min surface distance per robot pair and per robot against the static set;
// a robot's own link pairs are excluded.
std::vector<SeparationRecord> min_separation(
    const std::vector<std::vector<kin::PlacedCapsule>>& placed,
    const std::vector<std::string>& names,
    const std::vector<geom::SweptSphere>& static_obstacles);

// One coordinator cycle's progress snapshot for deadlock detection.
struct CycleProgress {
  std::vector<bool> waiting;          // per robot: verdict Wait this cycle
  std::vector<double> config_delta;   // per robot: max-norm joint motion since last cycle
  std::vector<bool> timed_subtask;    // per robot: executing a timed Idle/NMA
  bool tasks_remaining{false};
};

// True iff >= 2 robots made no progress (waiting or stationary, and not in a
// timed sub-task) for the entire window while tasks remain.
bool detect_deadlock(const std::deque<CycleProgress>& window, int min_cycles = 50);

// Seeded scenario seed -> roadmap build seed for one robot.
std::uint64_t roadmap_seed(std::uint64_t scenario_seed, int robot);

}  // namespace multiflex::sim
