#include "multiflex/sim.hpp"

#include <algorithm>
#include <cmath>

#include "multiflex/localqp.hpp"
#include "multiflex/rng.hpp"
#include "multiflex/traj.hpp"

namespace multiflex::sim {

std::uint64_t roadmap_seed(std::uint64_t scenario_seed, int robot) {
  return derive_seed(scenario_seed, 0x524d0000ull + static_cast<std::uint64_t>(robot));
}

std::vector<SeparationRecord> min_separation(
    const std::vector<std::vector<kin::PlacedCapsule>>& placed,
    const std::vector<std::string>& names,
    const std::vector<geom::SweptSphere>& static_obstacles) {
  std::vector<SeparationRecord> out;
  const std::size_t n = placed.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      SeparationRecord rec;
      rec.a = names[i];
      rec.b = names[j];
      for (const auto& ca : placed[i]) {
        for (const auto& cb : placed[j]) {
          rec.distance = std::min(
              rec.distance, geom::capsule_capsule_distance(ca.capsule, cb.capsule).distance);
        }
      }
      out.push_back(rec);
    }
  }
  if (!static_obstacles.empty()) {
    for (std::size_t i = 0; i < n; ++i) {
      SeparationRecord rec;
      rec.a = names[i];
      rec.b = "static";
      for (const auto& ca : placed[i]) {
        for (const auto& ss : static_obstacles) {
          rec.distance = std::min(
              rec.distance, geom::capsule_sweptsphere_distance(ca.capsule, ss).distance);
        }
      }
      out.push_back(rec);
    }
  }
  return out;
}

bool detect_deadlock(const std::deque<CycleProgress>& window, int min_cycles) {
  if (static_cast<int>(window.size()) < min_cycles || window.empty()) {
    return false;
  }
  if (!window.back().tasks_remaining) {
    return false;
  }
  const std::size_t n_robots = window.back().waiting.size();
  int stuck_robots = 0;
  for (std::size_t r = 0; r < n_robots; ++r) {
    bool stuck_everywhere = true;
    auto it = window.rbegin();
    for (int c = 0; c < min_cycles; ++c, ++it) {
      const CycleProgress& cp = *it;
      const bool stuck =
          (cp.waiting[r] || cp.config_delta[r] < 1e-4) && !cp.timed_subtask[r];
      if (!stuck) {
        stuck_everywhere = false;
        break;
      }
    }
    if (stuck_everywhere) {
      ++stuck_robots;
    }
  }
  return stuck_robots >= 2;
}

namespace {

using taskplan::SubTask;
using taskplan::SubTaskKind;
using taskplan::Task;

enum class Phase { Unassigned, AwaitCoord, Executing };

struct RobotRuntime {
  kin::RobotState state;
  std::string task;
  int subtask{-1};
  Phase phase{Phase::Unassigned};
  SubTaskKind kind{SubTaskKind::Idle};
  traj::Trajectory trajectory;
  double traj_start{0.0};
  double subtask_start{0.0};
  Eigen::VectorXd hold_q;
  bool waiting{false};
  bool subtask_done{false};
  std::string verdict;
  bool qp_fallback_tick{false};
  std::vector<int> warm;
  std::map<int, std::uint64_t> sub_res;     // subtask index -> reservation
  std::map<int, std::uint64_t> bundle_res;  // bundle first index -> reservation
  Eigen::VectorXd last_cycle_q;
  double wait_time{0.0};
};

std::optional<std::pair<int, int>> bundle_of(const Task& task, int idx) {
  for (const auto& b : task.bundles) {
    if (b.first <= idx && idx <= b.second) {
      return b;
    }
  }
  return std::nullopt;
}

class Engine {
 public:
  Engine(const Scenario& scenario, const RunOptions& options)
      : scenario_(scenario),
        options_(options),
        graph_(scenario.graph),
        params_(scenario.workcell.planner) {
    params_.gains.dt = scenario_.dt;
    n_robots_ = static_cast<int>(scenario_.workcell.robots.size());
    board_.grid = scenario_.workcell.grid;

    for (int i = 0; i < n_robots_; ++i) {
      const auto& spec = scenario_.workcell.robots[i];
      models_.push_back(spec.model);
      claim_models_.push_back(spec.model.inflated(params_.coordinator.claim_margin));
      limits_.push_back(traj::motion_limits(spec.model));
      RobotRuntime rt;
      rt.state.q = spec.home;
      rt.state.qd = Eigen::VectorXd::Zero(spec.model.dof);
      rt.state.qdd = Eigen::VectorXd::Zero(spec.model.dof);
      rt.hold_q = spec.home;
      rt.trajectory = traj::hold(spec.home);
      rt.last_cycle_q = spec.home;
      robots_.push_back(std::move(rt));
    }

    if (!options_.roadmaps.empty()) {
      if (static_cast<int>(options_.roadmaps.size()) != n_robots_) {
        throw std::invalid_argument("run: prebuilt roadmap count != robot count");
      }
      roadmaps_ = options_.roadmaps;
    } else {
      for (int i = 0; i < n_robots_; ++i) {
        roadmaps_.push_back(roadmap::build_roadmap(
            models_[i], scenario_.workcell.static_obstacles, params_.roadmap,
            scenario_.workcell.grid, roadmap_seed(scenario_.seed, i)));
      }
    }
  }

  Metrics run() {
    Metrics metrics;
    metrics.seed = scenario_.seed;
    metrics.clearance_floor = params_.avoidance.d_eq - params_.avoidance.mu;

    const double dt = scenario_.dt;
    const int coord_every =
        std::max(1, static_cast<int>(std::llround(params_.coordinator.period / dt)));
    const std::uint64_t max_ticks =
        static_cast<std::uint64_t>(std::ceil(scenario_.max_time / dt));

    bool deadlock = false;
    std::uint64_t tick = 0;
    for (; tick < max_ticks; ++tick) {
      const double t = static_cast<double>(tick) * dt;
      if (tick % coord_every == 0) {
        coordinator_cycle(t);
        deadlock = detect_deadlock(progress_window_, options_.deadlock_window);
        if (deadlock) {
          push_event({"deadlock", -1, "", -1, 0, ""});
        }
      }

      step_all(t);
      const double t_next = t + dt;
      check_completion(t_next);

      TraceRecord rec;
      rec.tick = tick;
      rec.t = t_next;
      for (int i = 0; i < n_robots_; ++i) {
        RobotTickRecord rr;
        rr.q = robots_[i].state.q;
        rr.qd = robots_[i].state.qd;
        rr.task = robots_[i].task;
        rr.subtask = robots_[i].task.empty() ? -1 : robots_[i].subtask;
        rr.kind = robots_[i].task.empty() ? "" : taskplan::kind_name(robots_[i].kind);
        rr.verdict = robots_[i].verdict;
        rr.qp_fallback = robots_[i].qp_fallback_tick;
        rec.robots.push_back(std::move(rr));
      }
      std::vector<std::vector<kin::PlacedCapsule>> placed;
      std::vector<std::string> names;
      for (int i = 0; i < n_robots_; ++i) {
        placed.push_back(kin::place_capsules(models_[i], robots_[i].state.q));
        names.push_back(models_[i].name);
      }
      rec.separations = min_separation(placed, names, scenario_.workcell.static_obstacles);
      for (const auto& sep : rec.separations) {
        metrics.min_clearance = std::min(metrics.min_clearance, sep.distance);
      }
      if (std::any_of(rec.separations.begin(), rec.separations.end(), [&](const auto& s) {
            return s.distance < metrics.clearance_floor;
          })) {
        ++metrics.clearance_violations;
      }
      rec.events = std::move(pending_events_);
      pending_events_.clear();
      if (options_.sink) {
        options_.sink(rec);
      }

      if (graph_.all_terminal()) {
        metrics.completed = true;
        metrics.exit_reason = "complete";
        metrics.cycle_time = t_next;
        ++tick;
        break;
      }
      if (deadlock && options_.stop_on_deadlock) {
        metrics.exit_reason = "deadlock";
        metrics.cycle_time = t_next;
        ++tick;
        break;
      }
    }

    if (metrics.exit_reason.empty()) {
      metrics.exit_reason = deadlock ? "deadlock" : "timeout";
      metrics.cycle_time = static_cast<double>(tick) * dt;
    }
    metrics.deadlock = deadlock;
    metrics.ticks = tick;
    for (const auto& [id, t0] : task_start_) {
      auto it = task_done_.find(id);
      if (it != task_done_.end()) {
        metrics.task_duration[id] = it->second - t0;
      }
    }
    for (int i = 0; i < n_robots_; ++i) {
      metrics.wait_time[models_[i].name] = robots_[i].wait_time;
    }
    return metrics;
  }

 private:
  void push_event(EventRecord ev) { pending_events_.push_back(std::move(ev)); }

  geom::VoxelSet claim_for_subtask(int robot, const SubTask& sub,
                                   const Eigen::VectorXd& at_config,
                                   Eigen::VectorXd* end_config) const {
    const auto& claim_model = claim_models_[robot];
    const auto& grid = scenario_.workcell.grid;
    geom::VoxelSet claim(grid);
    Eigen::VectorXd end = at_config;
    switch (sub.kind) {
      case SubTaskKind::Idle:
        break;
      case SubTaskKind::RM:
        claim = kin::pose_occupancy(claim_model, sub.rm_goal, grid);
        end = sub.rm_goal;
        break;
      case SubTaskKind::NRM: {
        claim = kin::swept_volume_voxels(claim_model, sub.nrm_path, grid,
                                         params_.roadmap.edge_check_step);
        end = sub.nrm_path.waypoints.back();
        break;
      }
      case SubTaskKind::NMA:
        claim = kin::pose_occupancy(claim_model, at_config, grid);
        break;
    }
    if (end_config) {
      *end_config = end;
    }
    return claim;
  }

  geom::VoxelSet bundle_claim(int robot, const Task& task, int first, int last) const {
    geom::VoxelSet claim(scenario_.workcell.grid);
    Eigen::VectorXd expected = robots_[robot].state.q;
    for (int idx = first; idx <= last; ++idx) {
      Eigen::VectorXd end = expected;
      claim.unite(claim_for_subtask(robot, task.subtasks[idx], expected, &end));
      expected = end;
    }
    return claim;
  }

  traj::Trajectory declared_nrm_trajectory(int robot, const SubTask& sub) const {
    if (sub.nrm_speed_scale) {
      traj::JointMotionLimits scaled = limits_[robot];
      scaled.v_max *= *sub.nrm_speed_scale;
      scaled.a_max *= (*sub.nrm_speed_scale) * (*sub.nrm_speed_scale);
      return traj::lspb_rest_to_rest(sub.nrm_path, scaled);
    }
    traj::Trajectory base = traj::lspb_rest_to_rest(sub.nrm_path, limits_[robot]);
    if (*sub.nrm_duration > base.duration()) {
      return traj::scaled_to_duration(base, *sub.nrm_duration);
    }
    return base;
  }

  std::optional<kin::JointPath> plan_rm(int robot, const Eigen::VectorXd& goal,
                                        const geom::VoxelSet& constraints) {
    const auto& rm = roadmaps_[robot];
    const Eigen::VectorXd& q = robots_[robot].state.q;

    if ((goal - q).lpNorm<Eigen::Infinity>() < 1e-9) {
      kin::JointPath path;
      path.waypoints.push_back(q);
      return path;
    }
    if (roadmap::edge_clear_against(rm, q, goal, constraints)) {
      kin::JointPath path;
      path.waypoints = {q, goal};
      return path;
    }

    const roadmap::ValidityMask mask = roadmap::update_validity(rm, constraints);
    const std::uint32_t n = static_cast<std::uint32_t>(rm.vertices.size());
    const auto att_start = roadmap::connect_query(rm, q, mask, constraints,
                                                  params_.roadmap.k_neighbors, n);
    if (!att_start) {
      return std::nullopt;
    }
    const auto att_goal = roadmap::connect_query(rm, goal, mask, constraints,
                                                 params_.roadmap.k_neighbors, n + 1);
    if (!att_goal) {
      return std::nullopt;
    }
    return roadmap::astar(rm, mask, n, n + 1, {*att_start, *att_goal});
  }

  void begin_wait(int robot, double t, const std::string& reason) {
    RobotRuntime& rt = robots_[robot];
    if (!rt.waiting) {
      push_event({"wait", robot, rt.task, rt.subtask, 0, reason});
    }
    rt.waiting = true;
    rt.verdict = "Wait";
    rt.hold_q = rt.state.q;
    rt.trajectory = traj::hold(rt.hold_q);
    rt.traj_start = t;
  }

  void start_execution(int robot, const SubTask& sub, double t,
                       const std::optional<kin::JointPath>& rm_path) {
    RobotRuntime& rt = robots_[robot];
    rt.kind = sub.kind;
    rt.phase = Phase::Executing;
    rt.waiting = false;
    rt.verdict = "Proceed";
    rt.subtask_start = t;
    rt.traj_start = t;
    switch (sub.kind) {
      case SubTaskKind::Idle:
        rt.hold_q = rt.state.q;
        rt.trajectory = traj::hold(rt.hold_q);
        break;
      case SubTaskKind::RM:
        rt.trajectory = traj::replan_from_state(*rm_path, rt.state.q, rt.state.qd,
                                                limits_[robot]);
        break;
      case SubTaskKind::NRM:
        rt.trajectory = declared_nrm_trajectory(robot, sub);
        break;
      case SubTaskKind::NMA:
        rt.hold_q = rt.state.q;
        rt.trajectory = traj::hold(rt.hold_q);
        break;
    }
    push_event({"subtask_start", robot, rt.task, rt.subtask, 0,
                taskplan::kind_name(sub.kind)});
  }

  void try_start_subtask(int robot, double t) {
    RobotRuntime& rt = robots_[robot];
    const Task& task = graph_.task(rt.task);
    const SubTask& sub = task.subtasks[rt.subtask];
    const auto bundle = bundle_of(task, rt.subtask);
    const bool bundle_held = bundle && rt.bundle_res.count(bundle->first);

    // A bundle claims its whole volume before its first sub-task begins.
    if (bundle && !bundle_held) {
      coord::ClaimRequest request;
      request.robot = robot;
      request.kind = SubTaskKind::NRM;
      request.task = rt.task;
      request.subtask = rt.subtask;
      request.claim = bundle_claim(robot, task, bundle->first, bundle->second);
      if (coord::detect_overlap(request, board_)) {
        begin_wait(robot, t, "bundle overlap");
        return;
      }
      std::optional<kin::JointPath> rm_path;
      if (sub.kind == SubTaskKind::RM) {
        rm_path = plan_rm(robot, sub.rm_goal, coord::constraints_for(board_, robot));
        if (!rm_path) {
          begin_wait(robot, t, "no feasible path");
          return;
        }
      }
      coord::CoordDecision decision = coord::coordinate(board_, request, nullptr);
      rt.bundle_res[bundle->first] = decision.reservation_id;
      push_event({"reserve", robot, rt.task, rt.subtask, decision.reservation_id, "Bundle"});
      start_execution(robot, sub, t, rm_path);
      return;
    }

    if (bundle_held) {
      // Inside a reserved bundle: no further coordination, but RM still
      // needs a path.
      std::optional<kin::JointPath> rm_path;
      if (sub.kind == SubTaskKind::RM) {
        rm_path = plan_rm(robot, sub.rm_goal, coord::constraints_for(board_, robot));
        if (!rm_path) {
          begin_wait(robot, t, "no feasible path");
          return;
        }
      }
      start_execution(robot, sub, t, rm_path);
      return;
    }

    coord::ClaimRequest request;
    request.robot = robot;
    request.kind = sub.kind;
    request.task = rt.task;
    request.subtask = rt.subtask;
    Eigen::VectorXd end;
    request.claim = claim_for_subtask(robot, sub, rt.state.q, &end);

    std::optional<kin::JointPath> rm_path;
    std::function<bool(const geom::VoxelSet&)> feasible;
    if (sub.kind == SubTaskKind::RM) {
      feasible = [&](const geom::VoxelSet& constraints) {
        rm_path = plan_rm(robot, sub.rm_goal, constraints);
        return rm_path.has_value();
      };
    }
    const coord::CoordDecision decision = coord::coordinate(board_, request, feasible);
    if (decision.verdict == coord::Verdict::Wait) {
      begin_wait(robot, t, decision.reason);
      return;
    }
    if (decision.reservation_id != 0) {
      rt.sub_res[rt.subtask] = decision.reservation_id;
      push_event({"reserve", robot, rt.task, rt.subtask, decision.reservation_id,
                  coord::reservation_kind_name(
                      sub.kind == SubTaskKind::RM ? coord::ReservationKind::GoalPose
                      : sub.kind == SubTaskKind::NRM ? coord::ReservationKind::SweptPath
                                                     : coord::ReservationKind::CurrentPose)});
    }
    start_execution(robot, sub, t, rm_path);
  }

  void rm_cycle_replan(int robot, double t) {
    RobotRuntime& rt = robots_[robot];
    const Task& task = graph_.task(rt.task);
    const SubTask& sub = task.subtasks[rt.subtask];
    const geom::VoxelSet constraints = coord::constraints_for(board_, robot);
    const auto path = plan_rm(robot, sub.rm_goal, constraints);
    if (!path) {
      begin_wait(robot, t, "replan blocked");
      return;
    }
    if (rt.waiting) {
      push_event({"resume", robot, rt.task, rt.subtask, 0, ""});
    }
    rt.waiting = false;
    rt.verdict = "Proceed";
    rt.trajectory = traj::replan_from_state(*path, rt.state.q, rt.state.qd, limits_[robot]);
    rt.traj_start = t;
  }

  void release_id(std::uint64_t id, int robot) {
    coord::release(board_, id);
    push_event({"release", robot, robots_[robot].task, robots_[robot].subtask, id, ""});
  }

  void finish_subtask(int robot, double t) {
    RobotRuntime& rt = robots_[robot];
    const Task& task = graph_.task(rt.task);
    const int idx = rt.subtask;

    if (auto it = rt.sub_res.find(idx); it != rt.sub_res.end()) {
      release_id(it->second, robot);
      rt.sub_res.erase(it);
    }
    if (const auto bundle = bundle_of(task, idx); bundle && idx == bundle->second) {
      if (auto it = rt.bundle_res.find(bundle->first); it != rt.bundle_res.end()) {
        release_id(it->second, robot);
        rt.bundle_res.erase(it);
      }
    }

    push_event({"subtask_done", robot, rt.task, idx, 0, ""});
    const std::string task_id = rt.task;
    rt.subtask_done = false;

    if (idx + 1 == static_cast<int>(task.subtasks.size())) {
      const std::string verdict = task.resolved_verdict;
      graph_.mark_subtask_complete(task_id, idx);
      task_done_[task_id] = t;
      push_event({"task_done", robot, task_id, -1, 0, verdict});
      // Abort safety: release anything left for this task.
      for (std::uint64_t id : coord::reservations_for_task(board_, robot, task_id)) {
        release_id(id, robot);
      }
      rt.sub_res.clear();
      rt.bundle_res.clear();
      rt.task.clear();
      rt.subtask = -1;
      rt.phase = Phase::Unassigned;
      rt.verdict.clear();
      rt.waiting = false;
      rt.hold_q = rt.state.q;
      rt.trajectory = traj::hold(rt.hold_q);
    } else {
      graph_.mark_subtask_complete(task_id, idx);
      rt.subtask = idx + 1;
      rt.phase = Phase::AwaitCoord;
      rt.waiting = false;
    }
  }

  void coordinator_cycle(double t) {
    // Live occupancy refresh.
    for (int i = 0; i < n_robots_; ++i) {
      board_.live[i] = kin::pose_occupancy(models_[i], robots_[i].state.q,
                                           scenario_.workcell.grid);
    }

    // Sub-task advancement.
    for (int i = 0; i < n_robots_; ++i) {
      if (!robots_[i].task.empty() && robots_[i].subtask_done) {
        finish_subtask(i, t);
      }
    }

    // Dispatch.
    std::vector<int> idle;
    for (int i = 0; i < n_robots_; ++i) {
      if (robots_[i].task.empty()) {
        idle.push_back(i);
      }
    }
    if (!idle.empty()) {
      for (const auto& [robot, task_id] :
           graph_.next_assignments(idle, params_.coordinator.priority)) {
        graph_.mark_running(task_id, robot);
        robots_[robot].task = task_id;
        robots_[robot].subtask = 0;
        robots_[robot].phase = Phase::AwaitCoord;
        task_start_.emplace(task_id, t);
        push_event({"task_start", robot, task_id, -1, 0, ""});
      }
    }

    // Requests in robot-id order: earlier robots' fresh reservations are
    // visible to later ones within the same cycle.
    for (int i = 0; i < n_robots_; ++i) {
      RobotRuntime& rt = robots_[i];
      if (rt.task.empty()) {
        continue;
      }
      if (rt.phase == Phase::AwaitCoord) {
        try_start_subtask(i, t);
      } else if (rt.phase == Phase::Executing && rt.kind == SubTaskKind::RM &&
                 !rt.subtask_done) {
        rm_cycle_replan(i, t);
      }
    }

    // Deadlock window bookkeeping.
    CycleProgress cp;
    cp.tasks_remaining = !graph_.all_terminal();
    for (int i = 0; i < n_robots_; ++i) {
      RobotRuntime& rt = robots_[i];
      cp.waiting.push_back(rt.waiting);
      cp.config_delta.push_back((rt.state.q - rt.last_cycle_q).lpNorm<Eigen::Infinity>());
      const bool timed = !rt.task.empty() && rt.phase == Phase::Executing &&
                         (rt.kind == SubTaskKind::Idle || rt.kind == SubTaskKind::NMA);
      cp.timed_subtask.push_back(timed);
      rt.last_cycle_q = rt.state.q;
    }
    progress_window_.push_back(std::move(cp));
    while (static_cast<int>(progress_window_.size()) >
           std::max(options_.deadlock_window, 1)) {
      progress_window_.pop_front();
    }
  }

  void step_all(double t) {
    const double dt = scenario_.dt;

    // Immutable snapshot: placed capsules and axis-point velocities.
    std::vector<std::vector<kin::PlacedCapsule>> placed(n_robots_);
    std::vector<std::vector<std::pair<geom::Vec3, geom::Vec3>>> end_vel(n_robots_);
    for (int i = 0; i < n_robots_; ++i) {
      const auto poses = kin::forward_kinematics(models_[i], robots_[i].state.q);
      placed[i] = kin::place_capsules(models_[i], poses);
      for (const auto& pc : placed[i]) {
        const Eigen::Matrix3Xd j0 =
            kin::point_jacobian(models_[i], poses, pc.link, pc.capsule.p0);
        const Eigen::Matrix3Xd j1 =
            kin::point_jacobian(models_[i], poses, pc.link, pc.capsule.p1);
        end_vel[i].emplace_back(j0 * robots_[i].state.qd, j1 * robots_[i].state.qd);
      }
    }

    std::vector<localqp::StepResult> results(n_robots_);
    for (int i = 0; i < n_robots_; ++i) {
      RobotRuntime& rt = robots_[i];

      localqp::WorldView world;
      for (int j = 0; j < n_robots_; ++j) {
        if (j == i) {
          continue;
        }
        for (std::size_t c = 0; c < placed[j].size(); ++c) {
          localqp::WorldCapsule wc;
          wc.capsule = placed[j][c].capsule;
          wc.v_p0 = end_vel[j][c].first;
          wc.v_p1 = end_vel[j][c].second;
          world.capsules.push_back(std::move(wc));
        }
      }
      world.swept_spheres = scenario_.workcell.static_obstacles;

      localqp::StepMode mode = localqp::StepMode::Reactive;
      const traj::Trajectory* reference = &rt.trajectory;
      double tau = t - rt.traj_start;
      if (rt.task.empty() || rt.waiting) {
        mode = localqp::StepMode::Reactive;
        tau = 0.0;
      } else {
        switch (rt.kind) {
          case SubTaskKind::Idle:
            mode = localqp::StepMode::Reactive;
            break;
          case SubTaskKind::RM:
            mode = localqp::StepMode::Reactive;
            break;
          case SubTaskKind::NRM:
          case SubTaskKind::NMA:
            mode = localqp::StepMode::NonReactive;
            break;
        }
      }

      results[i] = localqp::step(rt.state, *reference, tau, world, mode, params_.gains,
                                 params_.avoidance, models_[i], rt.warm);
      rt.warm = results[i].active_set;
      rt.qp_fallback_tick = results[i].fallback;
      if (results[i].fallback) {
        push_event({"qp_fallback", i, rt.task, rt.subtask, 0, ""});
      }
    }

    for (int i = 0; i < n_robots_; ++i) {
      RobotRuntime& rt = robots_[i];
      rt.state.qdd = (results[i].qd_cmd - rt.state.qd) / dt;
      rt.state.q = results[i].q_cmd;
      rt.state.qd = results[i].qd_cmd;
      if (rt.waiting) {
        rt.wait_time += dt;
      }
    }
  }

  void check_completion(double t_next) {
    for (int i = 0; i < n_robots_; ++i) {
      RobotRuntime& rt = robots_[i];
      if (rt.task.empty() || rt.phase != Phase::Executing || rt.waiting || rt.subtask_done) {
        continue;
      }
      const Task& task = graph_.task(rt.task);
      const SubTask& sub = task.subtasks[rt.subtask];
      const double tau = t_next - rt.traj_start;
      switch (sub.kind) {
        case SubTaskKind::Idle:
          if (t_next - rt.subtask_start >= sub.duration) {
            rt.subtask_done = true;
          }
          break;
        case SubTaskKind::RM: {
          const bool traj_done = tau >= rt.trajectory.duration();
          const bool at_goal =
              (rt.state.q - sub.rm_goal).lpNorm<Eigen::Infinity>() <= 2e-3 &&
              rt.state.qd.lpNorm<Eigen::Infinity>() <= 1e-2;
          if (traj_done && at_goal) {
            rt.subtask_done = true;
          }
          break;
        }
        case SubTaskKind::NRM:
          if (tau >= rt.trajectory.duration()) {
            rt.subtask_done = true;
          }
          break;
        case SubTaskKind::NMA:
          if (t_next - rt.subtask_start >= sub.duration) {
            rt.subtask_done = true;
          }
          break;
      }
    }
  }

  const Scenario& scenario_;
  const RunOptions& options_;
  taskplan::TaskGraph graph_;
  config::PlannerParams params_;
  int n_robots_{0};

  std::vector<kin::RobotModel> models_;
  std::vector<kin::RobotModel> claim_models_;
  std::vector<traj::JointMotionLimits> limits_;
  std::vector<roadmap::Roadmap> roadmaps_;
  std::vector<RobotRuntime> robots_;
  coord::OccupancyBoard board_;

  std::vector<EventRecord> pending_events_;
  std::deque<CycleProgress> progress_window_;
  std::map<std::string, double> task_start_;
  std::map<std::string, double> task_done_;
};

}  // namespace

Metrics run(const Scenario& scenario, const RunOptions& options) {
  scenario.graph.validate();
  config::validate_compat(scenario.workcell, scenario.graph);
  Engine engine(scenario, options);
  return engine.run();
}

}  // namespace multiflex::sim
