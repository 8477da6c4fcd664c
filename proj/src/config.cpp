#include "multiflex/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "multiflex/rng.hpp"

namespace multiflex::config {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError(path + ": " + what);
}

const json& expect_object(const json& j, const std::string& path) {
  if (!j.is_object()) {
    fail(path, "expected an object");
  }
  return j;
}

void reject_unknown(const json& j, const std::string& path,
                    const std::set<std::string>& allowed) {
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) {
      fail(path + "." + key, "unknown key");
    }
  }
}

double get_number(const json& j, const std::string& path) {
  if (!j.is_number()) {
    fail(path, "expected a number");
  }
  return j.get<double>();
}

int get_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) {
    fail(path, "expected an integer");
  }
  return j.get<int>();
}

std::string get_string(const json& j, const std::string& path) {
  if (!j.is_string()) {
    fail(path, "expected a string");
  }
  return j.get<std::string>();
}

const json& require(const json& j, const std::string& key, const std::string& path) {
  auto it = j.find(key);
  if (it == j.end()) {
    fail(path + "." + key, "required field missing");
  }
  return *it;
}

Eigen::VectorXd get_vector(const json& j, const std::string& path, int expected = -1) {
  if (!j.is_array()) {
    fail(path, "expected an array of numbers");
  }
  if (expected >= 0 && static_cast<int>(j.size()) != expected) {
    fail(path, "expected " + std::to_string(expected) + " entries, got " +
                   std::to_string(j.size()));
  }
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    v[i] = get_number(j[i], path + "[" + std::to_string(i) + "]");
  }
  return v;
}

geom::Vec3 get_vec3(const json& j, const std::string& path) {
  const Eigen::VectorXd v = get_vector(j, path, 3);
  return {v[0], v[1], v[2]};
}

json vec_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) {
    a.push_back(v[i]);
  }
  return a;
}

json vec3_to_json(const geom::Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Eigen::VectorXd broadcast(const json& j, const std::string& path, int dof) {
  if (j.is_number()) {
    return Eigen::VectorXd::Constant(dof, j.get<double>());
  }
  return get_vector(j, path, dof);
}

geom::SweptSphere parse_swept_sphere(const json& j, const std::string& path) {
  expect_object(j, path);
  reject_unknown(j, path, {"path", "radius"});
  geom::SweptSphere ss;
  const json& pts = require(j, "path", path);
  if (!pts.is_array() || pts.empty()) {
    fail(path + ".path", "expected a non-empty array of points");
  }
  for (std::size_t i = 0; i < pts.size(); ++i) {
    ss.path.push_back(get_vec3(pts[i], path + ".path[" + std::to_string(i) + "]"));
  }
  ss.radius = get_number(require(j, "radius", path), path + ".radius");
  if (ss.radius <= 0.0) {
    fail(path + ".radius", "must be positive");
  }
  return ss;
}

json swept_sphere_to_json(const geom::SweptSphere& ss) {
  json pts = json::array();
  for (const auto& p : ss.path) {
    pts.push_back(vec3_to_json(p));
  }
  return json{{"path", pts}, {"radius", ss.radius}};
}

kin::RobotModel parse_model(const json& j, const std::string& path, const std::string& name) {
  expect_object(j, path);
  reject_unknown(j, path, {"joints", "link_capsules"});
  kin::RobotModel m;
  m.name = name;

  const json& joints = require(j, "joints", path);
  if (!joints.is_array() || joints.empty()) {
    fail(path + ".joints", "expected a non-empty array");
  }
  m.dof = static_cast<int>(joints.size());
  for (std::size_t i = 0; i < joints.size(); ++i) {
    const std::string jp = path + ".joints[" + std::to_string(i) + "]";
    expect_object(joints[i], jp);
    reject_unknown(joints[i], jp,
                   {"a", "alpha", "d", "theta_offset", "q_min", "q_max", "v_max", "a_max"});
    kin::DhJoint dh;
    dh.a = get_number(require(joints[i], "a", jp), jp + ".a");
    dh.alpha = get_number(require(joints[i], "alpha", jp), jp + ".alpha");
    dh.d = get_number(require(joints[i], "d", jp), jp + ".d");
    dh.theta_offset = joints[i].contains("theta_offset")
                          ? get_number(joints[i]["theta_offset"], jp + ".theta_offset")
                          : 0.0;
    kin::JointLimits lim;
    lim.q_min = get_number(require(joints[i], "q_min", jp), jp + ".q_min");
    lim.q_max = get_number(require(joints[i], "q_max", jp), jp + ".q_max");
    lim.v_max = get_number(require(joints[i], "v_max", jp), jp + ".v_max");
    lim.a_max = get_number(require(joints[i], "a_max", jp), jp + ".a_max");
    if (lim.q_min >= lim.q_max) {
      fail(jp, "q_min must be < q_max");
    }
    if (lim.v_max <= 0.0 || lim.a_max <= 0.0) {
      fail(jp, "v_max and a_max must be positive");
    }
    m.joints.push_back(dh);
    m.limits.push_back(lim);
  }

  const json& caps = require(j, "link_capsules", path);
  if (!caps.is_array() || static_cast<int>(caps.size()) != m.dof) {
    fail(path + ".link_capsules", "expected one capsule list per joint");
  }
  std::size_t total = 0;
  for (std::size_t i = 0; i < caps.size(); ++i) {
    const std::string lp = path + ".link_capsules[" + std::to_string(i) + "]";
    if (!caps[i].is_array()) {
      fail(lp, "expected an array of capsules");
    }
    std::vector<geom::Capsule> link;
    for (std::size_t c = 0; c < caps[i].size(); ++c) {
      const std::string cp = lp + "[" + std::to_string(c) + "]";
      expect_object(caps[i][c], cp);
      reject_unknown(caps[i][c], cp, {"p0", "p1", "radius"});
      geom::Capsule cap;
      cap.p0 = get_vec3(require(caps[i][c], "p0", cp), cp + ".p0");
      cap.p1 = get_vec3(require(caps[i][c], "p1", cp), cp + ".p1");
      cap.radius = get_number(require(caps[i][c], "radius", cp), cp + ".radius");
      if (cap.radius <= 0.0) {
        fail(cp + ".radius", "must be positive");
      }
      link.push_back(cap);
      ++total;
    }
    m.link_capsules.push_back(std::move(link));
  }
  if (total == 0) {
    fail(path + ".link_capsules", "at least one capsule required");
  }
  return m;
}

json model_to_json(const kin::RobotModel& m) {
  json joints = json::array();
  for (int i = 0; i < m.dof; ++i) {
    joints.push_back(json{{"a", m.joints[i].a},
                          {"alpha", m.joints[i].alpha},
                          {"d", m.joints[i].d},
                          {"theta_offset", m.joints[i].theta_offset},
                          {"q_min", m.limits[i].q_min},
                          {"q_max", m.limits[i].q_max},
                          {"v_max", m.limits[i].v_max},
                          {"a_max", m.limits[i].a_max}});
  }
  json caps = json::array();
  for (const auto& link : m.link_capsules) {
    json lc = json::array();
    for (const auto& cap : link) {
      lc.push_back(json{{"p0", vec3_to_json(cap.p0)},
                        {"p1", vec3_to_json(cap.p1)},
                        {"radius", cap.radius}});
    }
    caps.push_back(lc);
  }
  return json{{"joints", joints}, {"link_capsules", caps}};
}

Eigen::Isometry3d parse_base(const json& j, const std::string& path) {
  expect_object(j, path);
  reject_unknown(j, path, {"xyz", "rpy"});
  const geom::Vec3 xyz = get_vec3(require(j, "xyz", path), path + ".xyz");
  const geom::Vec3 rpy = get_vec3(require(j, "rpy", path), path + ".rpy");
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  t.translation() = xyz;
  t.linear() = (Eigen::AngleAxisd(rpy.z(), geom::Vec3::UnitZ()) *
                Eigen::AngleAxisd(rpy.y(), geom::Vec3::UnitY()) *
                Eigen::AngleAxisd(rpy.x(), geom::Vec3::UnitX()))
                   .toRotationMatrix();
  return t;
}

}  // namespace

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open file: " + path);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

WorkcellConfig parse_workcell(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("workcell JSON parse error: ") + e.what());
  }
  expect_object(root, "$");
  reject_unknown(root, "$", {"schema", "grid", "robots", "static_obstacles", "planner"});
  const std::string schema = get_string(require(root, "schema", "$"), "$.schema");
  if (schema != "multiflex-workcell/1") {
    fail("$.schema", "unsupported schema '" + schema + "'");
  }

  WorkcellConfig cfg;
  {
    const json& g = require(root, "grid", "$");
    expect_object(g, "$.grid");
    reject_unknown(g, "$.grid", {"origin", "resolution", "dims"});
    cfg.grid.origin = get_vec3(require(g, "origin", "$.grid"), "$.grid.origin");
    cfg.grid.resolution = get_number(require(g, "resolution", "$.grid"), "$.grid.resolution");
    if (cfg.grid.resolution <= 0.0) {
      fail("$.grid.resolution", "must be positive");
    }
    const json& dims = require(g, "dims", "$.grid");
    if (!dims.is_array() || dims.size() != 3) {
      fail("$.grid.dims", "expected 3 integers");
    }
    for (int i = 0; i < 3; ++i) {
      cfg.grid.dims[i] = get_int(dims[i], "$.grid.dims");
      if (cfg.grid.dims[i] < 1) {
        fail("$.grid.dims", "entries must be >= 1");
      }
    }
  }

  const json& robots = require(root, "robots", "$");
  if (!robots.is_array() || robots.empty()) {
    fail("$.robots", "expected a non-empty array");
  }
  for (std::size_t i = 0; i < robots.size(); ++i) {
    const std::string rp = "$.robots[" + std::to_string(i) + "]";
    expect_object(robots[i], rp);
    reject_unknown(robots[i], rp, {"name", "base", "home", "model"});
    RobotSpec spec;
    const std::string name = get_string(require(robots[i], "name", rp), rp + ".name");
    spec.model = parse_model(require(robots[i], "model", rp), rp + ".model", name);
    spec.model.base_pose = parse_base(require(robots[i], "base", rp), rp + ".base");
    spec.home = get_vector(require(robots[i], "home", rp), rp + ".home", spec.model.dof);
    for (int j = 0; j < spec.model.dof; ++j) {
      if (spec.home[j] < spec.model.limits[j].q_min || spec.home[j] > spec.model.limits[j].q_max) {
        fail(rp + ".home", "joint " + std::to_string(j) + " outside limits");
      }
    }
    cfg.robots.push_back(std::move(spec));
  }

  if (root.contains("static_obstacles")) {
    const json& obs = root["static_obstacles"];
    if (!obs.is_array()) {
      fail("$.static_obstacles", "expected an array");
    }
    for (std::size_t i = 0; i < obs.size(); ++i) {
      cfg.static_obstacles.push_back(
          parse_swept_sphere(obs[i], "$.static_obstacles[" + std::to_string(i) + "]"));
    }
  }

  // Planner defaults apply wherever a section or field is omitted.
  const int dof = cfg.robots.front().model.dof;
  cfg.planner.gains.kp = Eigen::VectorXd::Constant(dof, 100.0);
  cfg.planner.gains.kd = Eigen::VectorXd::Constant(dof, 20.0);
  if (root.contains("planner")) {
    const json& pl = root["planner"];
    expect_object(pl, "$.planner");
    reject_unknown(pl, "$.planner", {"gains", "avoidance", "roadmap", "coordinator"});
    if (pl.contains("gains")) {
      const json& g = pl["gains"];
      const std::string gp = "$.planner.gains";
      expect_object(g, gp);
      reject_unknown(g, gp, {"kp", "kd", "epsilon", "dt"});
      if (g.contains("kp")) cfg.planner.gains.kp = broadcast(g["kp"], gp + ".kp", dof);
      if (g.contains("kd")) cfg.planner.gains.kd = broadcast(g["kd"], gp + ".kd", dof);
      if (g.contains("epsilon")) cfg.planner.gains.epsilon = get_number(g["epsilon"], gp + ".epsilon");
      if (g.contains("dt")) cfg.planner.gains.dt = get_number(g["dt"], gp + ".dt");
      if (cfg.planner.gains.epsilon <= 0.0 || cfg.planner.gains.epsilon >= 1.0) {
        fail(gp + ".epsilon", "must be in (0, 1)");
      }
      if (cfg.planner.gains.dt <= 0.0) {
        fail(gp + ".dt", "must be positive");
      }
    }
    if (pl.contains("avoidance")) {
      const json& a = pl["avoidance"];
      const std::string ap = "$.planner.avoidance";
      expect_object(a, ap);
      reject_unknown(a, ap, {"d_react", "d_eq", "alpha", "mu", "max_pairs"});
      auto& av = cfg.planner.avoidance;
      if (a.contains("d_react")) av.d_react = get_number(a["d_react"], ap + ".d_react");
      if (a.contains("d_eq")) av.d_eq = get_number(a["d_eq"], ap + ".d_eq");
      if (a.contains("alpha")) av.alpha = get_number(a["alpha"], ap + ".alpha");
      if (a.contains("mu")) av.mu = get_number(a["mu"], ap + ".mu");
      if (a.contains("max_pairs")) av.max_pairs = get_int(a["max_pairs"], ap + ".max_pairs");
      if (!(0.0 < av.d_eq && av.d_eq < av.d_react)) {
        fail(ap, "requires 0 < d_eq < d_react");
      }
      if (av.alpha <= 0.0 || av.mu <= 0.0 || av.mu >= av.d_eq) {
        fail(ap, "requires alpha > 0 and 0 < mu << d_eq");
      }
    }
    if (pl.contains("roadmap")) {
      const json& r = pl["roadmap"];
      const std::string rp = "$.planner.roadmap";
      expect_object(r, rp);
      reject_unknown(r, rp, {"n_vertices", "k_neighbors", "edge_check_step"});
      auto& rmp = cfg.planner.roadmap;
      if (r.contains("n_vertices")) rmp.n_vertices = get_int(r["n_vertices"], rp + ".n_vertices");
      if (r.contains("k_neighbors")) rmp.k_neighbors = get_int(r["k_neighbors"], rp + ".k_neighbors");
      if (r.contains("edge_check_step"))
        rmp.edge_check_step = get_number(r["edge_check_step"], rp + ".edge_check_step");
      if (rmp.n_vertices <= 0 || rmp.k_neighbors <= 0 || rmp.edge_check_step <= 0.0) {
        fail(rp, "parameters must be positive");
      }
    }
    if (pl.contains("coordinator")) {
      const json& c = pl["coordinator"];
      const std::string cp = "$.planner.coordinator";
      expect_object(c, cp);
      reject_unknown(c, cp, {"period", "claim_margin", "priority"});
      auto& co = cfg.planner.coordinator;
      if (c.contains("period")) co.period = get_number(c["period"], cp + ".period");
      if (c.contains("claim_margin"))
        co.claim_margin = get_number(c["claim_margin"], cp + ".claim_margin");
      if (c.contains("priority")) {
        const std::string p = get_string(c["priority"], cp + ".priority");
        if (p == "robot-id") {
          co.priority = taskplan::PriorityMode::LowestRobotId;
        } else if (p == "round-robin") {
          co.priority = taskplan::PriorityMode::RoundRobin;
        } else {
          fail(cp + ".priority", "expected 'robot-id' or 'round-robin'");
        }
      }
      if (co.period <= 0.0 || co.claim_margin < 0.0) {
        fail(cp, "period must be positive and claim_margin non-negative");
      }
    }
  }

  for (const auto& spec : cfg.robots) {
    if (spec.model.dof != dof) {
      fail("$.robots", "all robots must share the same dof in this engine");
    }
  }
  return cfg;
}

WorkcellConfig load_workcell(const std::string& path) {
  return parse_workcell(read_file(path));
}

std::string serialize_workcell(const WorkcellConfig& cfg) {
  json root;
  root["schema"] = "multiflex-workcell/1";
  root["grid"] = json{{"origin", vec3_to_json(cfg.grid.origin)},
                      {"resolution", cfg.grid.resolution},
                      {"dims", json::array({cfg.grid.dims[0], cfg.grid.dims[1], cfg.grid.dims[2]})}};
  json robots = json::array();
  for (const auto& spec : cfg.robots) {
    const Eigen::Matrix3d r = spec.model.base_pose.rotation();
    const geom::Vec3 rpy = {std::atan2(r(2, 1), r(2, 2)),
                            std::asin(std::clamp(-r(2, 0), -1.0, 1.0)),
                            std::atan2(r(1, 0), r(0, 0))};
    robots.push_back(json{{"name", spec.model.name},
                          {"base", json{{"xyz", vec3_to_json(spec.model.base_pose.translation())},
                                        {"rpy", vec3_to_json(rpy)}}},
                          {"home", vec_to_json(spec.home)},
                          {"model", model_to_json(spec.model)}});
  }
  root["robots"] = robots;
  json obs = json::array();
  for (const auto& ss : cfg.static_obstacles) {
    obs.push_back(swept_sphere_to_json(ss));
  }
  root["static_obstacles"] = obs;
  root["planner"] =
      json{{"gains", json{{"kp", vec_to_json(cfg.planner.gains.kp)},
                          {"kd", vec_to_json(cfg.planner.gains.kd)},
                          {"epsilon", cfg.planner.gains.epsilon},
                          {"dt", cfg.planner.gains.dt}}},
           {"avoidance", json{{"d_react", cfg.planner.avoidance.d_react},
                              {"d_eq", cfg.planner.avoidance.d_eq},
                              {"alpha", cfg.planner.avoidance.alpha},
                              {"mu", cfg.planner.avoidance.mu},
                              {"max_pairs", cfg.planner.avoidance.max_pairs}}},
           {"roadmap", json{{"n_vertices", cfg.planner.roadmap.n_vertices},
                            {"k_neighbors", cfg.planner.roadmap.k_neighbors},
                            {"edge_check_step", cfg.planner.roadmap.edge_check_step}}},
           {"coordinator",
            json{{"period", cfg.planner.coordinator.period},
                 {"claim_margin", cfg.planner.coordinator.claim_margin},
                 {"priority", cfg.planner.coordinator.priority ==
                                      taskplan::PriorityMode::LowestRobotId
                                  ? "robot-id"
                                  : "round-robin"}}}};
  return root.dump(2) + "\n";
}

namespace {

double resolve_duration(const json& j, const std::string& path, std::uint64_t seed) {
  const bool has_fixed = j.contains("duration");
  const bool has_range = j.contains("duration_range");
  if (has_fixed == has_range) {
    fail(path, "exactly one of 'duration' or 'duration_range' required");
  }
  if (has_fixed) {
    const double d = get_number(j["duration"], path + ".duration");
    if (d < 0.0) {
      fail(path + ".duration", "must be non-negative");
    }
    return d;
  }
  const json& range = j["duration_range"];
  if (!range.is_array() || range.size() != 2) {
    fail(path + ".duration_range", "expected [lo, hi]");
  }
  const double lo = get_number(range[0], path + ".duration_range[0]");
  const double hi = get_number(range[1], path + ".duration_range[1]");
  if (lo < 0.0 || hi < lo) {
    fail(path + ".duration_range", "expected 0 <= lo <= hi");
  }
  if (!j.contains("draw_key")) {
    fail(path + ".draw_key", "required with duration_range");
  }
  const int key = get_int(j["draw_key"], path + ".draw_key");
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(key)));
  return lo + rng.uniform() * (hi - lo);
}

kin::JointPath parse_joint_path(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() < 2) {
    fail(path, "expected an array of at least two waypoints");
  }
  kin::JointPath jp;
  for (std::size_t i = 0; i < j.size(); ++i) {
    jp.waypoints.push_back(get_vector(j[i], path + "[" + std::to_string(i) + "]"));
  }
  return jp;
}

}  // namespace

taskplan::TaskGraph parse_taskgraph(const std::string& json_text, std::uint64_t seed) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("task graph JSON parse error: ") + e.what());
  }
  expect_object(root, "$");
  reject_unknown(root, "$", {"schema", "tasks"});
  const std::string schema = get_string(require(root, "schema", "$"), "$.schema");
  if (schema != "multiflex-taskgraph/1") {
    fail("$.schema", "unsupported schema '" + schema + "'");
  }

  taskplan::TaskGraph graph;
  const json& tasks = require(root, "tasks", "$");
  if (!tasks.is_array()) {
    fail("$.tasks", "expected an array");
  }
  for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
    const std::string tp = "$.tasks[" + std::to_string(ti) + "]";
    expect_object(tasks[ti], tp);
    reject_unknown(tasks[ti], tp,
                   {"id", "depends_on", "eligible_robots", "subtasks", "bundles", "branches",
                    "verdict"});
    taskplan::Task task;
    task.id = get_string(require(tasks[ti], "id", tp), tp + ".id");
    if (tasks[ti].contains("depends_on")) {
      for (const auto& d : tasks[ti]["depends_on"]) {
        task.depends_on.push_back(get_string(d, tp + ".depends_on"));
      }
    }
    const json& eligible = require(tasks[ti], "eligible_robots", tp);
    if (!eligible.is_array() || eligible.empty()) {
      fail(tp + ".eligible_robots", "expected a non-empty array of robot ids");
    }
    for (const auto& r : eligible) {
      task.eligible_robots.push_back(get_int(r, tp + ".eligible_robots"));
    }

    const json& subtasks = require(tasks[ti], "subtasks", tp);
    if (!subtasks.is_array() || subtasks.empty()) {
      fail(tp + ".subtasks", "expected a non-empty array");
    }
    for (std::size_t si = 0; si < subtasks.size(); ++si) {
      const std::string sp = tp + ".subtasks[" + std::to_string(si) + "]";
      const json& sj = subtasks[si];
      expect_object(sj, sp);
      const std::string kind = get_string(require(sj, "kind", sp), sp + ".kind");
      taskplan::SubTask sub;
      if (kind == "Idle") {
        reject_unknown(sj, sp, {"kind", "duration", "duration_range", "draw_key"});
        sub.kind = taskplan::SubTaskKind::Idle;
        sub.duration = resolve_duration(sj, sp, seed);
      } else if (kind == "RM") {
        reject_unknown(sj, sp, {"kind", "goal", "start"});
        sub.kind = taskplan::SubTaskKind::RM;
        sub.rm_goal = get_vector(require(sj, "goal", sp), sp + ".goal");
        if (sj.contains("start")) {
          sub.rm_start = get_vector(sj["start"], sp + ".start");
        }
      } else if (kind == "NRM") {
        reject_unknown(sj, sp, {"kind", "path", "duration", "speed_scale"});
        sub.kind = taskplan::SubTaskKind::NRM;
        sub.nrm_path = parse_joint_path(require(sj, "path", sp), sp + ".path");
        const bool has_dur = sj.contains("duration");
        const bool has_scale = sj.contains("speed_scale");
        if (has_dur == has_scale) {
          fail(sp, "exactly one of 'duration' or 'speed_scale' required for NRM");
        }
        if (has_dur) {
          sub.nrm_duration = get_number(sj["duration"], sp + ".duration");
          if (*sub.nrm_duration <= 0.0) {
            fail(sp + ".duration", "must be positive");
          }
        } else {
          sub.nrm_speed_scale = get_number(sj["speed_scale"], sp + ".speed_scale");
          if (*sub.nrm_speed_scale <= 0.0 || *sub.nrm_speed_scale > 1.0) {
            fail(sp + ".speed_scale", "must be in (0, 1]");
          }
        }
      } else if (kind == "NMA") {
        reject_unknown(sj, sp, {"kind", "duration", "duration_range", "draw_key", "action"});
        sub.kind = taskplan::SubTaskKind::NMA;
        sub.duration = resolve_duration(sj, sp, seed);
        sub.action = get_string(require(sj, "action", sp), sp + ".action");
      } else {
        fail(sp + ".kind", "expected Idle | RM | NRM | NMA");
      }
      task.subtasks.push_back(std::move(sub));
    }

    if (tasks[ti].contains("bundles")) {
      const json& bundles = tasks[ti]["bundles"];
      if (!bundles.is_array()) {
        fail(tp + ".bundles", "expected an array of [first, last] pairs");
      }
      for (const auto& b : bundles) {
        if (!b.is_array() || b.size() != 2) {
          fail(tp + ".bundles", "expected [first, last] pairs");
        }
        task.bundles.emplace_back(get_int(b[0], tp + ".bundles"),
                                  get_int(b[1], tp + ".bundles"));
      }
      std::sort(task.bundles.begin(), task.bundles.end());
    }

    if (tasks[ti].contains("branches")) {
      const json& branches = tasks[ti]["branches"];
      expect_object(branches, tp + ".branches");
      for (const auto& [label, targets] : branches.items()) {
        if (!targets.is_array()) {
          fail(tp + ".branches." + label, "expected an array of task ids");
        }
        for (const auto& t : targets) {
          task.branches[label].push_back(get_string(t, tp + ".branches." + label));
        }
      }
      const json& verdict = require(tasks[ti], "verdict", tp);
      const std::string vp = tp + ".verdict";
      expect_object(verdict, vp);
      reject_unknown(verdict, vp, {"draw_key", "options"});
      const int key = get_int(require(verdict, "draw_key", vp), vp + ".draw_key");
      const json& options = require(verdict, "options", vp);
      if (!options.is_array() || options.empty()) {
        fail(vp + ".options", "expected a non-empty array");
      }
      std::vector<std::pair<std::string, double>> opts;
      double total = 0.0;
      for (const auto& o : options) {
        expect_object(o, vp + ".options[]");
        reject_unknown(o, vp + ".options[]", {"label", "weight"});
        const std::string label = get_string(require(o, "label", vp), vp + ".options[].label");
        const double weight = get_number(require(o, "weight", vp), vp + ".options[].weight");
        if (weight < 0.0) {
          fail(vp + ".options[].weight", "must be non-negative");
        }
        if (!task.branches.count(label)) {
          fail(vp, "option label '" + label + "' has no branch entry");
        }
        opts.emplace_back(label, weight);
        total += weight;
      }
      if (total <= 0.0) {
        fail(vp + ".options", "weights must not all be zero");
      }
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(key)));
      double u = rng.uniform() * total;
      task.resolved_verdict = opts.back().first;
      for (const auto& [label, weight] : opts) {
        if (u < weight) {
          task.resolved_verdict = label;
          break;
        }
        u -= weight;
      }
    } else if (tasks[ti].contains("verdict")) {
      fail(tp + ".verdict", "requires 'branches'");
    }

    graph.add_task(std::move(task));
  }
  return graph;
}

taskplan::TaskGraph load_taskgraph(const std::string& path, std::uint64_t seed) {
  return parse_taskgraph(read_file(path), seed);
}

std::string serialize_taskgraph(const taskplan::TaskGraph& graph) {
  json tasks = json::array();
  for (const auto& [id, task] : graph.tasks()) {
    json tj;
    tj["id"] = id;
    tj["depends_on"] = task.depends_on;
    tj["eligible_robots"] = task.eligible_robots;
    json subs = json::array();
    for (const auto& sub : task.subtasks) {
      json sj;
      sj["kind"] = taskplan::kind_name(sub.kind);
      switch (sub.kind) {
        case taskplan::SubTaskKind::Idle:
          sj["duration"] = sub.duration;
          break;
        case taskplan::SubTaskKind::RM:
          sj["goal"] = vec_to_json(sub.rm_goal);
          if (sub.rm_start) {
            sj["start"] = vec_to_json(*sub.rm_start);
          }
          break;
        case taskplan::SubTaskKind::NRM: {
          json wp = json::array();
          for (const auto& w : sub.nrm_path.waypoints) {
            wp.push_back(vec_to_json(w));
          }
          sj["path"] = wp;
          if (sub.nrm_duration) {
            sj["duration"] = *sub.nrm_duration;
          } else {
            sj["speed_scale"] = *sub.nrm_speed_scale;
          }
          break;
        }
        case taskplan::SubTaskKind::NMA:
          sj["duration"] = sub.duration;
          sj["action"] = sub.action;
          break;
      }
      subs.push_back(std::move(sj));
    }
    tj["subtasks"] = subs;
    if (!task.bundles.empty()) {
      json bundles = json::array();
      for (const auto& [first, last] : task.bundles) {
        bundles.push_back(json::array({first, last}));
      }
      tj["bundles"] = bundles;
    }
    if (!task.branches.empty()) {
      json branches = json::object();
      for (const auto& [label, targets] : task.branches) {
        branches[label] = targets;
      }
      tj["branches"] = branches;
      tj["verdict"] = json{{"draw_key", 0},
                           {"options", json::array({json{{"label", task.resolved_verdict},
                                                         {"weight", 1.0}}})}};
    }
    tasks.push_back(std::move(tj));
  }
  json root;
  root["schema"] = "multiflex-taskgraph/1";
  root["tasks"] = tasks;
  return root.dump(2) + "\n";
}

void validate_compat(const WorkcellConfig& cfg, const taskplan::TaskGraph& graph) {
  const int dof = cfg.robots.front().model.dof;
  const int n_robots = static_cast<int>(cfg.robots.size());
  for (const auto& [id, task] : graph.tasks()) {
    for (int r : task.eligible_robots) {
      if (r < 0 || r >= n_robots) {
        throw ConfigError("task " + id + ": eligible robot " + std::to_string(r) +
                          " out of range [0," + std::to_string(n_robots - 1) + "]");
      }
    }
    for (std::size_t si = 0; si < task.subtasks.size(); ++si) {
      const auto& sub = task.subtasks[si];
      const std::string where = "task " + id + " subtask " + std::to_string(si);
      auto check_config = [&](const kin::JointConfig& q, const std::string& label) {
        if (q.size() != dof) {
          throw ConfigError(where + ": " + label + " has " + std::to_string(q.size()) +
                            " entries, expected " + std::to_string(dof));
        }
        for (int r : task.eligible_robots) {
          if (!kin::within_position_limits(cfg.robots[r].model, q)) {
            throw ConfigError(where + ": " + label + " violates joint limits of robot " +
                              std::to_string(r));
          }
        }
      };
      if (sub.kind == taskplan::SubTaskKind::RM) {
        check_config(sub.rm_goal, "goal");
        if (sub.rm_start) {
          check_config(*sub.rm_start, "start");
        }
      }
      if (sub.kind == taskplan::SubTaskKind::NRM) {
        for (std::size_t wi = 0; wi < sub.nrm_path.waypoints.size(); ++wi) {
          check_config(sub.nrm_path.waypoints[wi], "path[" + std::to_string(wi) + "]");
        }
      }
    }
  }
}

}  // namespace multiflex::config
