#pragma once

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "multiflex/kin.hpp"
#include "multiflex/traj.hpp"

namespace multiflex::taskplan {

enum class SubTaskKind { Idle, RM, NRM, NMA };

const char* kind_name(SubTaskKind kind);

struct SubTask {
  SubTaskKind kind{SubTaskKind::Idle};
  // Idle / NMA
  double duration{0.0};
  std::string action;  // NMA end-effector action label
  // RM
  std::optional<kin::JointConfig> rm_start;  // defaults to current
  kin::JointConfig rm_goal;
  // NRM: declared path plus either a fixed duration or a speed scale.
  kin::JointPath nrm_path;
  std::optional<double> nrm_duration;
  std::optional<double> nrm_speed_scale;
};

struct Task {
  std::string id;
  std::vector<std::string> depends_on;
  std::vector<SubTask> subtasks;
  // Inclusive [first, last] subtask index ranges, non-overlapping, length >= 2.
  std::vector<std::pair<int, int>> bundles;
  std::vector<int> eligible_robots;
  // Branch selection: completing this task with a verdict keeps the listed
  // dependents eligible and skips the ones listed under other verdicts.
  std::map<std::string, std::vector<std::string>> branches;
  // Verdict this run will report on completion (resolved from the seeded
  // draw at load time); empty when the task has no branches.
  std::string resolved_verdict;
};

enum class TaskStatus { Pending, Ready, Running, Done, DoneSkipped };

const char* status_name(TaskStatus status);

struct CycleError : std::runtime_error {
  explicit CycleError(std::string cycle_desc)
      : std::runtime_error("dependency cycle: " + cycle_desc), cycle(std::move(cycle_desc)) {}
  std::string cycle;
};

struct RefError : std::runtime_error {
  explicit RefError(const std::string& what) : std::runtime_error(what) {}
};

enum class PriorityMode { LowestRobotId, RoundRobin };

class TaskGraph {
 public:
  TaskGraph() = default;

  void add_task(Task task);
  bool has_task(const std::string& id) const { return tasks_.count(id) != 0; }
  const Task& task(const std::string& id) const;
  const std::map<std::string, Task>& tasks() const { return tasks_; }
  TaskStatus status(const std::string& id) const;
  std::optional<int> running_robot(const std::string& id) const;

  // Detects dependency cycles and dangling task references.
  void validate() const;

  // BFS dispatch over the dependency DAG: a Ready task goes to an eligible
  // idle robot, one task per robot per call. Ties between robots follow the
  // priority mode.
  std::vector<std::pair<int, std::string>> next_assignments(const std::vector<int>& idle_robots,
                                                            PriorityMode mode =
                                                                PriorityMode::LowestRobotId);

  // The ordered subtask list with its bundle annotations.
  const Task& decompose(const std::string& id) const { return task(id); }

  void mark_running(const std::string& id, int robot);
  // Subtasks complete strictly in order; the final one completes the task.
  void mark_subtask_complete(const std::string& id, int index);
  void mark_complete(const std::string& id, const std::string& verdict = "");
  int next_subtask(const std::string& id) const;

  bool all_terminal() const;
  std::size_t count_with_status(TaskStatus s) const;

 private:
  void refresh_ready();
  void skip_recursively(const std::string& id);
  std::vector<std::string> bfs_order() const;

  std::map<std::string, Task> tasks_;
  std::map<std::string, TaskStatus> status_;
  std::map<std::string, int> running_robot_;
  std::map<std::string, int> progress_;  // next subtask index per running task
  int round_robin_cursor_{0};
};

}  // namespace multiflex::taskplan
