#include "multiflex/localqp.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace multiflex::localqp {

namespace {

geom::Vec3 capsule_point_velocity(const WorldCapsule& wc, const geom::Vec3& point) {
  const geom::Vec3 axis = wc.capsule.p1 - wc.capsule.p0;
  const double len2 = axis.squaredNorm();
  if (len2 <= 1e-18) {
    return wc.v_p0;
  }
  const double s = std::clamp((point - wc.capsule.p0).dot(axis) / len2, 0.0, 1.0);
  return wc.v_p0 + s * (wc.v_p1 - wc.v_p0);
}

}  // namespace

std::vector<ClosestPair> gather_pairs(const kin::RobotModel& model, const kin::JointConfig& q,
                                      const WorldView& world, const AvoidanceParams& params) {
  const auto poses = kin::forward_kinematics(model, q);
  const auto placed = kin::place_capsules(model, poses);

  std::vector<ClosestPair> pairs;
  for (const auto& link_cap : placed) {
    int obstacle_index = 0;
    for (const auto& wc : world.capsules) {
      const geom::DistanceResult d =
          geom::capsule_capsule_distance(link_cap.capsule, wc.capsule);
      if (d.distance < params.d_react) {
        ClosestPair pair;
        pair.robot_link = link_cap.link;
        pair.point_robot = d.point_a;
        pair.point_obstacle = d.point_b;
        pair.distance = d.distance;
        pair.direction = -d.d_hat;
        pair.obstacle_velocity = capsule_point_velocity(wc, d.point_b);
        pair.jacobian = kin::point_jacobian(model, poses, link_cap.link, d.point_a);
        pair.obstacle_index = obstacle_index;
        pairs.push_back(std::move(pair));
      }
      ++obstacle_index;
    }
    for (const auto& ss : world.swept_spheres) {
      const geom::DistanceResult d = geom::capsule_sweptsphere_distance(link_cap.capsule, ss);
      if (d.distance < params.d_react) {
        ClosestPair pair;
        pair.robot_link = link_cap.link;
        pair.point_robot = d.point_a;
        pair.point_obstacle = d.point_b;
        pair.distance = d.distance;
        pair.direction = -d.d_hat;
        pair.jacobian = kin::point_jacobian(model, poses, link_cap.link, d.point_a);
        pair.obstacle_index = obstacle_index;
        pairs.push_back(std::move(pair));
      }
      ++obstacle_index;
    }
  }

  std::sort(pairs.begin(), pairs.end(), [](const ClosestPair& a, const ClosestPair& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    if (a.robot_link != b.robot_link) return a.robot_link < b.robot_link;
    return a.obstacle_index < b.obstacle_index;
  });
  if (static_cast<int>(pairs.size()) > params.max_pairs) {
    pairs.resize(params.max_pairs);
  }
  return pairs;
}

double avoidance_bound(const ClosestPair& pair, const AvoidanceParams& params) {
  const double d = std::max(pair.distance, 0.0);
  const double arg = (params.d_react - d) / (params.d_react - params.d_eq);
  return pair.direction.dot(pair.obstacle_velocity) - params.alpha * std::log(arg);
}

std::vector<LinearRow> avoidance_rows(const std::vector<ClosestPair>& pairs,
                                      const AvoidanceParams& params, int dof) {
  std::vector<LinearRow> rows;
  rows.reserve(pairs.size());
  for (const auto& pair : pairs) {
    LinearRow row;
    row.coeffs = Eigen::VectorXd::Zero(2 * dof);
    row.coeffs.head(dof) = (pair.direction.transpose() * pair.jacobian).transpose();
    row.bound = avoidance_bound(pair, params);
    rows.push_back(std::move(row));
  }
  return rows;
}

QPStepProblem build_problem(const kin::RobotState& state, const Eigen::VectorXd& q_d,
                            const Eigen::VectorXd& qd_d, const QPGains& gains,
                            const std::vector<LinearRow>& rows, const kin::RobotModel& model) {
  const int dof = model.dof;
  const double dt = gains.dt;
  QPStepProblem p;
  p.dof = dof;
  p.h_diag.resize(2 * dof);
  p.h_diag.head(dof).setConstant(gains.epsilon);
  p.h_diag.tail(dof).setOnes();

  const Eigen::VectorXd dq = q_d - state.q;
  const Eigen::VectorXd dqd = qd_d - state.qd;
  p.linear = Eigen::VectorXd::Zero(2 * dof);
  p.linear.tail(dof) = -2.0 * (gains.kp.cwiseProduct(dq) + gains.kd.cwiseProduct(dqd));

  p.ineq = rows;
  for (int j = 0; j < dof; ++j) {
    const auto& lim = model.limits[j];
    LinearRow row;

    row.coeffs = Eigen::VectorXd::Zero(2 * dof);
    row.coeffs[dof + j] = 1.0;
    row.bound = lim.a_max;
    p.ineq.push_back(row);
    row.coeffs[dof + j] = -1.0;
    p.ineq.push_back(row);

    row.coeffs = Eigen::VectorXd::Zero(2 * dof);
    row.coeffs[j] = 1.0;
    row.bound = lim.v_max;
    p.ineq.push_back(row);
    row.coeffs[j] = -1.0;
    p.ineq.push_back(row);

    row.coeffs = Eigen::VectorXd::Zero(2 * dof);
    row.coeffs[j] = dt;
    row.bound = lim.q_max - state.q[j];
    p.ineq.push_back(row);
    row.coeffs[j] = -dt;
    row.bound = state.q[j] - lim.q_min;
    p.ineq.push_back(row);
  }

  // Semi-implicit Euler coupling: qd[k+1] = qd[k] + dt * qdd[k+1].
  for (int j = 0; j < dof; ++j) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(2 * dof);
    c[j] = 1.0;
    c[dof + j] = -dt;
    p.eq.emplace_back(std::move(c), state.qd[j]);
  }
  return p;
}

QPSolution solve_qp(const QPStepProblem& problem, const std::vector<int>& warm_hint) {
  const int n = static_cast<int>(problem.h_diag.size());
  const int m = static_cast<int>(problem.ineq.size());
  const int me = static_cast<int>(problem.eq.size());

  QPSolution out;

  // Eliminate equality constraints: u = u_p + Z w.
  Eigen::VectorXd u_p = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd Z = Eigen::MatrixXd::Identity(n, n);
  if (me > 0) {
    Eigen::MatrixXd A(me, n);
    Eigen::VectorXd be(me);
    for (int i = 0; i < me; ++i) {
      A.row(i) = problem.eq[i].first.transpose();
      be[i] = problem.eq[i].second;
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    u_p = lu.solve(be);
    if ((A * u_p - be).lpNorm<Eigen::Infinity>() > 1e-9 * (1.0 + be.lpNorm<Eigen::Infinity>())) {
      out.status = QPStatus::Infeasible;
      return out;
    }
    Z = lu.kernel();
  }
  const int nz = static_cast<int>(Z.cols());

  const Eigen::MatrixXd twoH = 2.0 * problem.h_diag.asDiagonal();
  auto objective_of = [&](const Eigen::VectorXd& u) {
    return u.dot(problem.h_diag.asDiagonal() * u) + problem.linear.dot(u);
  };

  if (nz == 0) {
    for (int i = 0; i < m; ++i) {
      if (problem.ineq[i].coeffs.dot(u_p) > problem.ineq[i].bound + 1e-9) {
        out.status = QPStatus::Infeasible;
        return out;
      }
    }
    out.status = QPStatus::Optimal;
    out.u = u_p;
    out.objective = objective_of(u_p);
    return out;
  }

  const Eigen::MatrixXd Q = Z.transpose() * twoH * Z;
  const Eigen::VectorXd c = Z.transpose() * (problem.linear + twoH * u_p);
  Eigen::LLT<Eigen::MatrixXd> llt(Q);
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument("solve_qp: objective not positive definite on the feasible set");
  }

  Eigen::MatrixXd G(m, nz);
  Eigen::VectorXd h(m);
  for (int i = 0; i < m; ++i) {
    G.row(i) = problem.ineq[i].coeffs.transpose() * Z;
    h[i] = problem.ineq[i].bound - problem.ineq[i].coeffs.dot(u_p);
  }

  Eigen::VectorXd w = -llt.solve(c);
  std::vector<int> active;
  std::vector<double> lambda;

  auto finish = [&](QPStatus status) {
    out.status = status;
    if (status == QPStatus::Optimal) {
      out.u = u_p + Z * w;
      out.objective = objective_of(out.u);
      out.active = active;
      std::sort(out.active.begin(), out.active.end());
    }
    return out;
  };

  const int max_outer = 40 + 12 * (m + 1);
  bool first_pick = true;
  for (int iter = 0; iter < max_outer; ++iter) {
    // Most violated inactive constraint; warm-hinted rows take precedence
    // on the first pick.
    int p_idx = -1;
    double worst = 1e-10;
    auto consider = [&](int i) {
      if (std::find(active.begin(), active.end(), i) != active.end()) return;
      const double v = G.row(i).dot(w) - h[i];
      const double tol = 1e-10 * (1.0 + std::abs(h[i]));
      if (v > tol && v > worst) {
        worst = v;
        p_idx = i;
      }
    };
    if (first_pick && !warm_hint.empty()) {
      for (int i : warm_hint) {
        if (i >= 0 && i < m) consider(i);
      }
    }
    if (p_idx < 0) {
      for (int i = 0; i < m; ++i) consider(i);
    }
    first_pick = false;
    if (p_idx < 0) {
      return finish(QPStatus::Optimal);
    }

    const Eigen::VectorXd gp = G.row(p_idx).transpose();
    double viol = gp.dot(w) - h[p_idx];
    double lambda_p = 0.0;

    const int max_inner = 2 * (m + 1);
    bool added = false;
    for (int inner = 0; inner < max_inner; ++inner) {
      const Eigen::VectorXd d = llt.solve(gp);
      Eigen::VectorXd r;
      Eigen::VectorXd z = d;
      const int q_act = static_cast<int>(active.size());
      if (q_act > 0) {
        Eigen::MatrixXd N(nz, q_act);
        for (int k = 0; k < q_act; ++k) {
          N.col(k) = G.row(active[k]).transpose();
        }
        const Eigen::MatrixXd B = llt.solve(N);
        const Eigen::MatrixXd M = N.transpose() * B;
        r = M.llt().solve(N.transpose() * d);
        z = d - B * r;
      }

      const double gz = gp.dot(z);
      double t1 = std::numeric_limits<double>::infinity();
      int k1 = -1;
      for (int k = 0; k < q_act; ++k) {
        if (r.size() > k && r[k] > 1e-12) {
          const double cand = lambda[k] / r[k];
          if (cand < t1) {
            t1 = cand;
            k1 = k;
          }
        }
      }
      const double t2 = gz > 1e-13 * (1.0 + gp.squaredNorm())
                            ? viol / gz
                            : std::numeric_limits<double>::infinity();
      const double t = std::min(t1, t2);
      if (!std::isfinite(t)) {
        return finish(QPStatus::Infeasible);
      }

      w -= t * z;
      viol -= t * gz;
      for (int k = 0; k < q_act; ++k) {
        lambda[k] -= t * (r.size() > k ? r[k] : 0.0);
      }
      lambda_p += t;

      if (t == t2) {
        active.push_back(p_idx);
        lambda.push_back(lambda_p);
        added = true;
        break;
      }
      active.erase(active.begin() + k1);
      lambda.erase(lambda.begin() + k1);
    }
    if (!added && active.empty()) {
      return finish(QPStatus::Infeasible);
    }
  }
  return finish(QPStatus::Infeasible);
}

StepResult step(const kin::RobotState& state, const traj::Trajectory& trajectory, double t,
                const WorldView& world, StepMode mode, const QPGains& gains,
                const AvoidanceParams& params, const kin::RobotModel& model,
                const std::vector<int>& warm_hint) {
  const int dof = model.dof;
  const double dt = gains.dt;
  const traj::Sample ref = trajectory.sample(t + dt);

  StepResult result;

  if (mode == StepMode::NonReactive) {
    bool within = true;
    for (int j = 0; j < dof; ++j) {
      const auto& lim = model.limits[j];
      if (ref.q[j] < lim.q_min - 1e-9 || ref.q[j] > lim.q_max + 1e-9 ||
          std::abs(ref.qd[j]) > lim.v_max + 1e-9) {
        within = false;
      }
    }
    if (within) {
      result.q_cmd = ref.q;
      result.qd_cmd = ref.qd;
      result.bypassed_qp = true;
      return result;
    }
  }

  std::vector<LinearRow> rows;
  std::vector<ClosestPair> pairs;
  if (mode == StepMode::Reactive) {
    pairs = gather_pairs(model, state.q, world, params);
    rows = avoidance_rows(pairs, params, dof);
    result.active_pairs = static_cast<int>(pairs.size());
    for (const auto& pair : pairs) {
      result.min_pair_distance = std::min(result.min_pair_distance, pair.distance);
    }
  }

  const QPStepProblem problem = build_problem(state, ref.q, ref.qd, gains, rows, model);
  const QPSolution sol = solve_qp(problem, warm_hint);

  if (sol.status == QPStatus::Infeasible) {
    // Brake toward rest within acceleration limits; never throws the loop.
    result.status = QPStatus::Infeasible;
    result.fallback = true;
    result.qd_cmd.resize(dof);
    for (int j = 0; j < dof; ++j) {
      const double a = std::clamp(-state.qd[j] / dt, -model.limits[j].a_max,
                                  model.limits[j].a_max);
      result.qd_cmd[j] = state.qd[j] + dt * a;
    }
    result.q_cmd = state.q + dt * result.qd_cmd;
    return result;
  }

  result.qd_cmd = sol.u.head(dof);
  result.q_cmd = state.q + dt * result.qd_cmd;
  result.active_set = sol.active;
  return result;
}

}  // namespace multiflex::localqp
