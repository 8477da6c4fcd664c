#include "multiflex/traj.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace multiflex::traj {

namespace {
constexpr double kTinyTime = 1e-13;
}

JointMotionLimits motion_limits(const kin::RobotModel& model) {
  JointMotionLimits lim;
  lim.v_max.resize(model.dof);
  lim.a_max.resize(model.dof);
  for (int j = 0; j < model.dof; ++j) {
    lim.v_max[j] = model.limits[j].v_max;
    lim.a_max[j] = model.limits[j].a_max;
  }
  return lim;
}

Trajectory::Trajectory(std::vector<std::vector<Piece>> joint_pieces, double duration,
                       JointPath source)
    : joint_pieces_(std::move(joint_pieces)), duration_(duration), source_(std::move(source)) {}

Sample Trajectory::sample(double t) const {
  const int n = dof();
  Sample s;
  s.q.resize(n);
  s.qd.resize(n);
  for (int j = 0; j < n; ++j) {
    const auto& pieces = joint_pieces_[j];
    if (t >= duration_) {
      const Piece& last = pieces.back();
      const double tau = last.t_end - last.t_start;
      s.q[j] = last.q0 + last.v0 * tau + 0.5 * last.acc * tau * tau;
      s.qd[j] = 0.0;
      continue;
    }
    // Last piece whose start is <= t.
    std::size_t idx = 0;
    while (idx + 1 < pieces.size() && pieces[idx + 1].t_start <= t) {
      ++idx;
    }
    const Piece& p = pieces[idx];
    const double tau = t - p.t_start;
    s.q[j] = p.q0 + p.v0 * tau + 0.5 * p.acc * tau * tau;
    s.qd[j] = p.v0 + p.acc * tau;
  }
  return s;
}

namespace {

// Minimal duration of a rest-to-rest trapezoid covering |delta|.
double min_trapezoid_time(double delta, double v_max, double a_max) {
  const double d = std::abs(delta);
  if (d == 0.0) {
    return 0.0;
  }
  const double d_ramp = v_max * v_max / a_max;
  if (d <= d_ramp) {
    return 2.0 * std::sqrt(d / a_max);
  }
  return d / v_max + v_max / a_max;
}

// Rest-to-rest trapezoid stretched to duration T: full a_max ramps with the
// peak velocity solved from v*T - v^2/a = |delta| (smaller root).
void append_stretched_trapezoid(std::vector<Trajectory::Piece>& pieces, double t0, double q_start,
                                double delta, double T, double a_max) {
  if (T <= kTinyTime || delta == 0.0) {
    pieces.push_back({t0, t0 + T, q_start, 0.0, 0.0});
    return;
  }
  const double d = std::abs(delta);
  const double sign = delta > 0.0 ? 1.0 : -1.0;
  const double disc = std::max(0.0, a_max * T * a_max * T - 4.0 * a_max * d);
  const double v = (a_max * T - std::sqrt(disc)) / 2.0;
  const double tb = v / a_max;

  pieces.push_back({t0, t0 + tb, q_start, 0.0, sign * a_max});
  const double q_blend = q_start + sign * 0.5 * v * tb;
  if (T - 2.0 * tb > kTinyTime) {
    pieces.push_back({t0 + tb, t0 + T - tb, q_blend, sign * v, 0.0});
  }
  const double q_decel = q_start + sign * (d - 0.5 * v * tb);
  pieces.push_back({t0 + T - tb, t0 + T, q_decel, sign * v, -sign * a_max});
}

// Max displacement reachable in time T from velocity va to vb under limits.
double max_displacement(double T, double va, double vb, double v_max, double a_max) {
  double vp = (a_max * T + va + vb) / 2.0;
  if (vp <= v_max) {
    const double t1 = (vp - va) / a_max;
    const double t3 = (vp - vb) / a_max;
    return 0.5 * (va + vp) * t1 + 0.5 * (vp + vb) * t3;
  }
  vp = v_max;
  const double t1 = (vp - va) / a_max;
  const double t3 = (vp - vb) / a_max;
  const double t2 = T - t1 - t3;
  return 0.5 * (va + vp) * t1 + vp * t2 + 0.5 * (vp + vb) * t3;
}

double min_displacement(double T, double va, double vb, double v_max, double a_max) {
  return -max_displacement(T, -va, -vb, v_max, a_max);
}

// Smallest duration able to cover `delta` between boundary velocities.
double min_segment_time(double delta, double va, double vb, double v_max, double a_max) {
  const double t_lb = std::abs(vb - va) / a_max;
  auto feasible = [&](double T) {
    return min_displacement(T, va, vb, v_max, a_max) <= delta &&
           delta <= max_displacement(T, va, vb, v_max, a_max);
  };
  if (feasible(t_lb)) {
    return t_lb;
  }
  double hi = std::max(t_lb, 1e-4);
  int guard = 0;
  while (!feasible(hi) && guard++ < 128) {
    hi *= 2.0;
  }
  double lo = t_lb;
  for (int i = 0; i < 120; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (feasible(mid)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

double profile_displacement(double vc, double T, double va, double vb, double a_max) {
  const double t1 = std::abs(vc - va) / a_max;
  const double t3 = std::abs(vc - vb) / a_max;
  const double t2 = std::max(0.0, T - t1 - t3);
  return 0.5 * (va + vc) * t1 + vc * t2 + 0.5 * (vc + vb) * t3;
}

// Cruise velocity such that the ramp-cruise-ramp profile covers delta in T.
double solve_cruise_velocity(double delta, double T, double va, double vb, double v_max,
                             double a_max) {
  double lo = std::max(-v_max, (va + vb - a_max * T) / 2.0);
  double hi = std::min(v_max, (va + vb + a_max * T) / 2.0);
  for (int i = 0; i < 140; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (profile_displacement(mid, T, va, vb, a_max) < delta) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Emit ramp-cruise-ramp pieces; returns the achieved end position.
double append_bvp_profile(std::vector<Trajectory::Piece>& pieces, double t0, double q_start,
                          double vc, double T, double va, double vb, double a_max) {
  const double t1 = std::abs(vc - va) / a_max;
  const double t3 = std::abs(vc - vb) / a_max;
  const double t2 = std::max(0.0, T - t1 - t3);
  double t = t0;
  double q = q_start;
  if (t1 > kTinyTime) {
    const double a1 = (vc > va ? 1.0 : -1.0) * a_max;
    pieces.push_back({t, t + t1, q, va, a1});
    q += va * t1 + 0.5 * a1 * t1 * t1;
    t += t1;
  }
  if (t2 > kTinyTime) {
    pieces.push_back({t, t + t2, q, vc, 0.0});
    q += vc * t2;
    t += t2;
  }
  const double rem = (t0 + T) - t;
  if (rem > kTinyTime || pieces.empty() || pieces.back().t_end < t0 + T - kTinyTime) {
    const double a3 = t3 > kTinyTime ? (vb > vc ? 1.0 : -1.0) * a_max : 0.0;
    pieces.push_back({t, t0 + T, q, vc, a3});
    q += vc * rem + 0.5 * a3 * rem * rem;
  }
  return q;
}

// Synchronized rest-to-rest minimal duration of one path segment.
double sync_segment_time(const Eigen::VectorXd& delta, const JointMotionLimits& lim) {
  double T = 0.0;
  for (int j = 0; j < delta.size(); ++j) {
    T = std::max(T, min_trapezoid_time(delta[j], lim.v_max[j], lim.a_max[j]));
  }
  return T;
}

}  // namespace

Trajectory lspb_rest_to_rest(const JointPath& path, const JointMotionLimits& limits) {
  if (path.waypoints.empty()) {
    throw std::invalid_argument("lspb_rest_to_rest: empty path");
  }
  const int dof = static_cast<int>(path.waypoints.front().size());
  std::vector<std::vector<Trajectory::Piece>> pieces(dof);
  std::vector<double> wp_times{0.0};
  double t = 0.0;

  if (path.waypoints.size() == 1) {
    for (int j = 0; j < dof; ++j) {
      pieces[j].push_back({0.0, 0.0, path.waypoints[0][j], 0.0, 0.0});
    }
    Trajectory out(std::move(pieces), 0.0, path);
    out.set_waypoint_times(std::move(wp_times));
    return out;
  }

  for (std::size_t i = 0; i + 1 < path.waypoints.size(); ++i) {
    const Eigen::VectorXd delta = path.waypoints[i + 1] - path.waypoints[i];
    const double T = sync_segment_time(delta, limits);
    for (int j = 0; j < dof; ++j) {
      append_stretched_trapezoid(pieces[j], t, path.waypoints[i][j], delta[j], T,
                                 limits.a_max[j]);
    }
    t += T;
    wp_times.push_back(t);
  }
  Trajectory out(std::move(pieces), t, path);
  out.set_waypoint_times(std::move(wp_times));
  return out;
}

Trajectory decelerate_to_rest(const Eigen::VectorXd& q0, const Eigen::VectorXd& qd0,
                              const JointMotionLimits& limits) {
  const int dof = static_cast<int>(q0.size());
  double T = 0.0;
  for (int j = 0; j < dof; ++j) {
    T = std::max(T, std::abs(qd0[j]) / limits.a_max[j]);
  }
  std::vector<std::vector<Trajectory::Piece>> pieces(dof);
  JointPath src;
  src.waypoints.push_back(q0);
  if (T <= kTinyTime) {
    for (int j = 0; j < dof; ++j) {
      pieces[j].push_back({0.0, 0.0, q0[j], 0.0, 0.0});
    }
    return Trajectory(std::move(pieces), 0.0, src);
  }
  for (int j = 0; j < dof; ++j) {
    pieces[j].push_back({0.0, T, q0[j], qd0[j], -qd0[j] / T});
  }
  return Trajectory(std::move(pieces), T, src);
}

Trajectory hold(const Eigen::VectorXd& q) {
  const int dof = static_cast<int>(q.size());
  std::vector<std::vector<Trajectory::Piece>> pieces(dof);
  for (int j = 0; j < dof; ++j) {
    pieces[j].push_back({0.0, 0.0, q[j], 0.0, 0.0});
  }
  JointPath src;
  src.waypoints.push_back(q);
  return Trajectory(std::move(pieces), 0.0, src);
}

Trajectory scaled_to_duration(const Trajectory& t, double new_duration) {
  if (t.duration() <= kTinyTime || new_duration <= 0.0) {
    return t;
  }
  const double s = new_duration / t.duration();
  std::vector<std::vector<Trajectory::Piece>> pieces(t.dof());
  for (int j = 0; j < t.dof(); ++j) {
    for (Trajectory::Piece p : t.pieces()[j]) {
      p.t_start *= s;
      p.t_end *= s;
      p.v0 /= s;
      p.acc /= s * s;
      pieces[j].push_back(p);
    }
  }
  Trajectory out(std::move(pieces), new_duration, t.source_path());
  std::vector<double> wp_times;
  for (double wt : t.waypoint_times()) {
    wp_times.push_back(wt * s);
  }
  out.set_waypoint_times(std::move(wp_times));
  return out;
}

Trajectory replan_from_state(const JointPath& path, const Eigen::VectorXd& q0,
                             const Eigen::VectorXd& qd0, const JointMotionLimits& limits) {
  if (path.waypoints.empty()) {
    throw std::invalid_argument("replan_from_state: empty path");
  }
  const int dof = static_cast<int>(q0.size());

  bool velocity_ok = true;
  for (int j = 0; j < dof; ++j) {
    if (std::abs(qd0[j]) > limits.v_max[j] + 1e-12) {
      velocity_ok = false;
    }
  }
  if (!velocity_ok) {
    // Boundary beyond limits: brake to rest, then run the rest-to-rest plan
    // from wherever braking ends.
    Eigen::VectorXd qd_clamped = qd0;
    for (int j = 0; j < dof; ++j) {
      qd_clamped[j] = std::clamp(qd0[j], -limits.v_max[j], limits.v_max[j]);
    }
    Trajectory prefix = decelerate_to_rest(q0, qd_clamped, limits);
    const Eigen::VectorXd q_stop = prefix.sample(prefix.duration()).q;
    JointPath rest;
    rest.waypoints.push_back(q_stop);
    for (std::size_t i = 1; i < path.waypoints.size(); ++i) {
      rest.waypoints.push_back(path.waypoints[i]);
    }
    Trajectory tail = lspb_rest_to_rest(rest, limits);
    // Concatenate prefix + tail.
    std::vector<std::vector<Trajectory::Piece>> pieces(dof);
    const double t_off = prefix.duration();
    for (int j = 0; j < dof; ++j) {
      pieces[j] = prefix.pieces()[j];
      for (Trajectory::Piece p : tail.pieces()[j]) {
        p.t_start += t_off;
        p.t_end += t_off;
        pieces[j].push_back(p);
      }
    }
    std::vector<double> wp_times;
    for (double wt : tail.waypoint_times()) {
      wp_times.push_back(wt + t_off);
    }
    Trajectory out(std::move(pieces), t_off + tail.duration(), rest);
    out.set_waypoint_times(std::move(wp_times));
    return out;
  }

  // Effective waypoints: the current state replaces the path start.
  std::vector<Eigen::VectorXd> wp;
  wp.push_back(q0);
  for (std::size_t i = 1; i < path.waypoints.size(); ++i) {
    wp.push_back(path.waypoints[i]);
  }
  const std::size_t n = wp.size();

  if (n == 1) {
    if (qd0.lpNorm<Eigen::Infinity>() < 1e-12) {
      return hold(q0);
    }
    return decelerate_to_rest(q0, qd0, limits);
  }

  // Estimated segment durations for the slope heuristic.
  std::vector<double> t_est(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    t_est[i] = std::max(sync_segment_time(wp[i + 1] - wp[i], limits), 1e-9);
  }

  // Waypoint velocities: boundary exact, interior from the sign-agreement
  // average-slope rule scaled by 0.9.
  std::vector<Eigen::VectorXd> wv(n, Eigen::VectorXd::Zero(dof));
  wv[0] = qd0;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    for (int j = 0; j < dof; ++j) {
      const double d_prev = wp[i][j] - wp[i - 1][j];
      const double d_next = wp[i + 1][j] - wp[i][j];
      if (d_prev * d_next > 0.0) {
        const double slope = 0.5 * (d_prev / t_est[i - 1] + d_next / t_est[i]);
        const double sign = slope > 0.0 ? 1.0 : -1.0;
        wv[i][j] = 0.9 * sign * std::min(std::abs(slope), limits.v_max[j]);
      }
    }
  }

  std::vector<std::vector<Trajectory::Piece>> pieces(dof);
  std::vector<double> wp_times{0.0};
  std::vector<double> q_cur(dof);
  for (int j = 0; j < dof; ++j) {
    q_cur[j] = wp[0][j];
  }
  double t = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    double T = 0.0;
    for (int j = 0; j < dof; ++j) {
      const double delta = wp[i + 1][j] - q_cur[j];
      T = std::max(T, min_segment_time(delta, wv[i][j], wv[i + 1][j], limits.v_max[j],
                                       limits.a_max[j]));
    }
    if (T <= kTinyTime) {
      continue;
    }
    for (int j = 0; j < dof; ++j) {
      const double delta = wp[i + 1][j] - q_cur[j];
      const double vc = solve_cruise_velocity(delta, T, wv[i][j], wv[i + 1][j], limits.v_max[j],
                                              limits.a_max[j]);
      q_cur[j] = append_bvp_profile(pieces[j], t, q_cur[j], vc, T, wv[i][j], wv[i + 1][j],
                                    limits.a_max[j]);
    }
    t += T;
    wp_times.push_back(t);
  }
  if (pieces.front().empty()) {
    return hold(q0);
  }

  JointPath src;
  src.waypoints = wp;
  Trajectory out(std::move(pieces), t, src);
  out.set_waypoint_times(std::move(wp_times));
  return out;
}

}  // namespace multiflex::traj
