#include "multiflex/taskplan.hpp"

#include <algorithm>
#include <deque>

namespace multiflex::taskplan {

const char* kind_name(SubTaskKind kind) {
  switch (kind) {
    case SubTaskKind::Idle: return "Idle";
    case SubTaskKind::RM: return "RM";
    case SubTaskKind::NRM: return "NRM";
    case SubTaskKind::NMA: return "NMA";
  }
  return "?";
}

const char* status_name(TaskStatus status) {
  switch (status) {
    case TaskStatus::Pending: return "Pending";
    case TaskStatus::Ready: return "Ready";
    case TaskStatus::Running: return "Running";
    case TaskStatus::Done: return "Done";
    case TaskStatus::DoneSkipped: return "DoneSkipped";
  }
  return "?";
}

void TaskGraph::add_task(Task task) {
  const std::string id = task.id;
  if (tasks_.count(id)) {
    throw RefError("duplicate task id: " + id);
  }
  std::sort(task.depends_on.begin(), task.depends_on.end());
  task.depends_on.erase(std::unique(task.depends_on.begin(), task.depends_on.end()),
                        task.depends_on.end());
  std::sort(task.eligible_robots.begin(), task.eligible_robots.end());
  tasks_.emplace(id, std::move(task));
  status_[id] = TaskStatus::Pending;
  refresh_ready();
}

const Task& TaskGraph::task(const std::string& id) const {
  auto it = tasks_.find(id);
  if (it == tasks_.end()) {
    throw RefError("unknown task id: " + id);
  }
  return it->second;
}

TaskStatus TaskGraph::status(const std::string& id) const {
  auto it = status_.find(id);
  if (it == status_.end()) {
    throw RefError("unknown task id: " + id);
  }
  return it->second;
}

std::optional<int> TaskGraph::running_robot(const std::string& id) const {
  auto it = running_robot_.find(id);
  if (it == running_robot_.end()) {
    return std::nullopt;
  }
  return it->second;
}

void TaskGraph::validate() const {
  std::vector<std::string> missing;
  for (const auto& [id, task] : tasks_) {
    for (const auto& dep : task.depends_on) {
      if (!tasks_.count(dep)) {
        missing.push_back(id + " -> " + dep);
      }
    }
    if (task.eligible_robots.empty()) {
      throw RefError("task " + id + " has no eligible robots");
    }
    for (const auto& [verdict, targets] : task.branches) {
      for (const auto& target : targets) {
        if (!tasks_.count(target)) {
          missing.push_back(id + " branch '" + verdict + "' -> " + target);
        }
      }
    }
    for (const auto& [first, last] : task.bundles) {
      if (first < 0 || last >= static_cast<int>(task.subtasks.size()) || last - first < 1) {
        throw RefError("task " + id + " has an invalid bundle range [" +
                       std::to_string(first) + "," + std::to_string(last) + "]");
      }
    }
    for (std::size_t b = 1; b < task.bundles.size(); ++b) {
      if (task.bundles[b].first <= task.bundles[b - 1].second) {
        throw RefError("task " + id + " has overlapping bundle ranges");
      }
    }
  }
  if (!missing.empty()) {
    std::string what = "missing task references:";
    for (const auto& m : missing) {
      what += " " + m + ";";
    }
    throw RefError(what);
  }

  // Cycle detection via DFS coloring; reports one cycle.
  std::map<std::string, int> color;  // 0 white, 1 gray, 2 black
  std::vector<std::string> stack;
  auto dfs = [&](auto&& self, const std::string& id) -> void {
    color[id] = 1;
    stack.push_back(id);
    for (const auto& dep : tasks_.at(id).depends_on) {
      if (color[dep] == 1) {
        std::string desc = dep;
        for (auto it = stack.rbegin(); it != stack.rend(); ++it) {
          desc += " -> " + *it;
          if (*it == dep) break;
        }
        throw CycleError(desc);
      }
      if (color[dep] == 0) {
        self(self, dep);
      }
    }
    stack.pop_back();
    color[id] = 2;
  };
  for (const auto& [id, _] : tasks_) {
    if (color[id] == 0) {
      dfs(dfs, id);
    }
  }
}

void TaskGraph::refresh_ready() {
  for (const auto& [id, task] : tasks_) {
    if (status_[id] != TaskStatus::Pending) {
      continue;
    }
    bool ready = true;
    for (const auto& dep : task.depends_on) {
      auto it = status_.find(dep);
      if (it == status_.end() || it->second != TaskStatus::Done) {
        ready = false;
        break;
      }
    }
    if (ready) {
      status_[id] = TaskStatus::Ready;
    }
  }
}

std::vector<std::string> TaskGraph::bfs_order() const {
  // Breadth-first over the dependency DAG starting from the roots, both in
  // ascending id order.
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::string>> dependents;
  std::deque<std::string> queue;
  std::set<std::string> seen;
  for (const auto& [id, task] : tasks_) {
    for (const auto& dep : task.depends_on) {
      dependents[dep].push_back(id);
    }
  }
  for (const auto& [id, task] : tasks_) {
    if (task.depends_on.empty()) {
      queue.push_back(id);
      seen.insert(id);
    }
  }
  while (!queue.empty()) {
    const std::string id = queue.front();
    queue.pop_front();
    order.push_back(id);
    auto it = dependents.find(id);
    if (it == dependents.end()) {
      continue;
    }
    std::vector<std::string> next = it->second;
    std::sort(next.begin(), next.end());
    for (const auto& child : next) {
      if (seen.insert(child).second) {
        queue.push_back(child);
      }
    }
  }
  return order;
}

std::vector<std::pair<int, std::string>> TaskGraph::next_assignments(
    const std::vector<int>& idle_robots, PriorityMode mode) {
  refresh_ready();
  std::set<int> available(idle_robots.begin(), idle_robots.end());
  std::vector<std::pair<int, std::string>> out;

  for (const auto& id : bfs_order()) {
    if (status_[id] != TaskStatus::Ready || available.empty()) {
      continue;
    }
    const Task& task = tasks_.at(id);
    std::vector<int> eligible;
    for (int r : task.eligible_robots) {
      if (available.count(r)) {
        eligible.push_back(r);
      }
    }
    if (eligible.empty()) {
      continue;
    }
    int robot = eligible.front();
    if (mode == PriorityMode::RoundRobin) {
      robot = eligible[round_robin_cursor_ % eligible.size()];
      ++round_robin_cursor_;
    }
    available.erase(robot);
    out.emplace_back(robot, id);
  }
  return out;
}

void TaskGraph::mark_running(const std::string& id, int robot) {
  refresh_ready();
  if (status(id) != TaskStatus::Ready) {
    throw RefError("task " + id + " is not Ready (" + status_name(status(id)) + ")");
  }
  status_[id] = TaskStatus::Running;
  running_robot_[id] = robot;
  progress_[id] = 0;
}

int TaskGraph::next_subtask(const std::string& id) const {
  auto it = progress_.find(id);
  return it == progress_.end() ? 0 : it->second;
}

void TaskGraph::mark_subtask_complete(const std::string& id, int index) {
  if (status(id) != TaskStatus::Running) {
    throw RefError("task " + id + " is not Running");
  }
  if (index != progress_[id]) {
    throw RefError("task " + id + ": subtask " + std::to_string(index) +
                   " completed out of order (expected " + std::to_string(progress_[id]) + ")");
  }
  ++progress_[id];
  if (progress_[id] == static_cast<int>(tasks_.at(id).subtasks.size())) {
    mark_complete(id, tasks_.at(id).resolved_verdict);
  }
}

void TaskGraph::skip_recursively(const std::string& id) {
  if (status_[id] == TaskStatus::Done || status_[id] == TaskStatus::DoneSkipped) {
    return;
  }
  status_[id] = TaskStatus::DoneSkipped;
  // A skipped dependency can never become Done, so dependents are skipped too.
  for (const auto& [other_id, task] : tasks_) {
    if (status_[other_id] == TaskStatus::Pending || status_[other_id] == TaskStatus::Ready) {
      if (std::find(task.depends_on.begin(), task.depends_on.end(), id) !=
          task.depends_on.end()) {
        skip_recursively(other_id);
      }
    }
  }
}

void TaskGraph::mark_complete(const std::string& id, const std::string& verdict) {
  const TaskStatus st = status(id);
  if (st != TaskStatus::Running && st != TaskStatus::Ready) {
    throw RefError("task " + id + " cannot complete from state " + status_name(st));
  }
  status_[id] = TaskStatus::Done;
  running_robot_.erase(id);

  const Task& task = tasks_.at(id);
  if (!task.branches.empty()) {
    auto selected = task.branches.find(verdict);
    if (selected == task.branches.end()) {
      throw RefError("task " + id + " completed with unknown verdict '" + verdict + "'");
    }
    for (const auto& [label, targets] : task.branches) {
      if (label == verdict) {
        continue;
      }
      for (const auto& target : targets) {
        skip_recursively(target);
      }
    }
  }
  refresh_ready();
}

bool TaskGraph::all_terminal() const {
  for (const auto& [id, st] : status_) {
    if (st != TaskStatus::Done && st != TaskStatus::DoneSkipped) {
      return false;
    }
  }
  return true;
}

std::size_t TaskGraph::count_with_status(TaskStatus s) const {
  std::size_t n = 0;
  for (const auto& [id, st] : status_) {
    if (st == s) {
      ++n;
    }
  }
  return n;
}

}  // namespace multiflex::taskplan
