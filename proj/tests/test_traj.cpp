#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "multiflex/rng.hpp"
#include "multiflex/traj.hpp"

using namespace multiflex;
using traj::JointMotionLimits;
using traj::JointPath;
using traj::Trajectory;

namespace {

JointMotionLimits uniform_limits(int dof, double v, double a) {
  JointMotionLimits lim;
  lim.v_max = Eigen::VectorXd::Constant(dof, v);
  lim.a_max = Eigen::VectorXd::Constant(dof, a);
  return lim;
}

Eigen::VectorXd vec1(double v) {
  Eigen::VectorXd x(1);
  x[0] = v;
  return x;
}

// Position from velocity samples by trapezoidal integration.
double integrate_velocity(const Trajectory& t, double t_end, int n = 20000) {
  double q = t.sample(0.0).q[0];
  double prev = t.sample(0.0).qd[0];
  for (int i = 1; i <= n; ++i) {
    const double ti = t_end * i / n;
    const double v = t.sample(ti).qd[0];
    q += 0.5 * (prev + v) * (t_end / n);
    prev = v;
  }
  return q;
}

void check_profile_properties(const Trajectory& t, const JointMotionLimits& lim) {
  const double T = t.duration();
  const int dof = t.dof();
  const int n = 400;
  for (int i = 0; i <= n; ++i) {
    const double ti = T * i / n;
    const auto s = t.sample(ti);
    for (int j = 0; j < dof; ++j) {
      CHECK(std::abs(s.qd[j]) <= lim.v_max[j] + 1e-9);
    }
    // velocity equals the derivative of position
    const double h = 1e-7;
    if (ti > h && ti < T - h) {
      const auto sp = t.sample(ti + h);
      const auto sm = t.sample(ti - h);
      for (int j = 0; j < dof; ++j) {
        const double fd = (sp.q[j] - sm.q[j]) / (2.0 * h);
        CHECK(std::abs(fd - s.qd[j]) <= 1e-6 * lim.v_max[j] + 1e-9);
      }
    }
  }
  // acceleration bound piecewise
  for (int j = 0; j < dof; ++j) {
    for (const auto& piece : t.pieces()[j]) {
      CHECK(std::abs(piece.acc) <= lim.a_max[j] + 1e-9);
      CHECK(piece.t_end >= piece.t_start - 1e-12);
    }
  }
}

}  // namespace

TEST_CASE("single waypoint path holds forever") {
  JointPath path;
  path.waypoints.push_back(vec1(0.7));
  const auto t = traj::lspb_rest_to_rest(path, uniform_limits(1, 1.0, 2.0));
  CHECK(t.duration() == 0.0);
  CHECK(t.sample(0.0).q[0] == 0.7);
  CHECK(t.sample(3.0).q[0] == 0.7);
  CHECK(t.sample(3.0).qd[0] == 0.0);
}

TEST_CASE("empty path throws") {
  JointPath path;
  CHECK_THROWS_AS(traj::lspb_rest_to_rest(path, uniform_limits(1, 1.0, 2.0)),
                  std::invalid_argument);
}

TEST_CASE("unit trapezoid: 0 to 1 rad at v=1, a=2") {
  JointPath path;
  path.waypoints = {vec1(0.0), vec1(1.0)};
  const auto lim = uniform_limits(1, 1.0, 2.0);
  const auto t = traj::lspb_rest_to_rest(path, lim);

  CHECK(t.duration() == doctest::Approx(1.5).epsilon(1e-12));
  // blend 0.5 s, cruise 0.5 s
  CHECK(t.sample(0.25).qd[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(t.sample(0.75).qd[0] == doctest::Approx(1.0).epsilon(1e-12));
  // trapezoid symmetry: halfway in time is halfway in position
  CHECK(t.sample(0.75).q[0] == doctest::Approx(0.5).epsilon(1e-12));
  // numeric integration of the velocity profile closes at 1 rad
  CHECK(integrate_velocity(t, 1.5) == doctest::Approx(1.0).epsilon(1e-6));
  check_profile_properties(t, lim);
}

TEST_CASE("joint synchronization stretches the fast joint") {
  JointPath path;
  Eigen::VectorXd a(2), b(2);
  a << 0.0, 0.0;
  b << 1.0, 0.1;
  path.waypoints = {a, b};
  const auto lim = uniform_limits(2, 1.0, 2.0);
  const auto t = traj::lspb_rest_to_rest(path, lim);
  CHECK(t.duration() == doctest::Approx(1.5).epsilon(1e-12));

  // both joints land together at t = 1.5
  const auto end = t.sample(1.5);
  CHECK(end.q[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(end.q[1] == doctest::Approx(0.1).epsilon(1e-9));

  // the short joint's peak velocity drops below its solo profile's peak
  double peak = 0.0;
  for (int i = 0; i <= 300; ++i) {
    peak = std::max(peak, std::abs(t.sample(1.5 * i / 300.0).qd[1]));
  }
  const double solo_peak = std::sqrt(0.1 * 2.0);  // triangular solo profile
  CHECK(peak < solo_peak);
  CHECK(peak == doctest::Approx((3.0 - std::sqrt(9.0 - 0.8)) / 2.0).epsilon(1e-9));
  check_profile_properties(t, lim);
}

TEST_CASE("sampling clamps to the endpoint at rest") {
  JointPath path;
  path.waypoints = {vec1(0.0), vec1(1.0)};
  const auto t = traj::lspb_rest_to_rest(path, uniform_limits(1, 1.0, 2.0));
  const auto s = t.sample(t.duration() + 10.0);
  CHECK(s.q[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.qd[0] == 0.0);
  CHECK(t.sample(0.0).q[0] == 0.0);
  CHECK(t.sample(0.0).qd[0] == 0.0);
}

TEST_CASE("replan at rest reduces to the rest-to-rest profile") {
  JointPath path;
  path.waypoints = {vec1(0.2), vec1(1.2)};
  const auto lim = uniform_limits(1, 1.0, 2.0);
  const auto a = traj::lspb_rest_to_rest(path, lim);
  const auto b = traj::replan_from_state(path, vec1(0.2), vec1(0.0), lim);
  CHECK(std::abs(a.duration() - b.duration()) <= 1e-9);
  for (int i = 0; i <= 100; ++i) {
    const double ti = a.duration() * i / 100.0;
    CHECK(a.sample(ti).q[0] == doctest::Approx(b.sample(ti).q[0]).epsilon(1e-9));
  }
}

TEST_CASE("replan honors a nonzero initial velocity exactly") {
  JointPath path;
  path.waypoints = {vec1(0.0), vec1(1.0)};
  const auto lim = uniform_limits(1, 1.0, 2.0);
  const auto t = traj::replan_from_state(path, vec1(0.0), vec1(0.5), lim);

  CHECK(t.sample(0.0).qd[0] == doctest::Approx(0.5).epsilon(1e-12));
  const double h = 1e-7;
  const double fd = (t.sample(h).q[0] - t.sample(0.0).q[0]) / h;
  CHECK(fd == doctest::Approx(0.5).epsilon(1e-5));

  // monotone toward the goal, ends at rest on it
  double prev = t.sample(0.0).q[0];
  for (int i = 1; i <= 200; ++i) {
    const double cur = t.sample(t.duration() * i / 200.0).q[0];
    CHECK(cur >= prev - 1e-9);
    prev = cur;
  }
  CHECK(t.sample(t.duration()).q[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(t.sample(t.duration()).qd[0] == 0.0);
  check_profile_properties(t, lim);
}

TEST_CASE("replan with adverse initial velocity brakes first") {
  JointPath path;
  path.waypoints = {vec1(0.0), vec1(1.0)};
  const auto lim = uniform_limits(1, 1.0, 2.0);
  const auto t = traj::replan_from_state(path, vec1(0.0), vec1(-0.5), lim);

  CHECK(t.sample(0.0).qd[0] == doctest::Approx(-0.5).epsilon(1e-12));
  bool saw_negative = false;
  bool saw_positive = false;
  for (int i = 0; i <= 400; ++i) {
    const double v = t.sample(t.duration() * i / 400.0).qd[0];
    if (v < -1e-6) saw_negative = true;
    if (v > 1e-6) saw_positive = true;
  }
  CHECK(saw_negative);
  CHECK(saw_positive);
  CHECK(t.sample(t.duration()).q[0] == doctest::Approx(1.0).epsilon(1e-9));
  check_profile_properties(t, lim);
}

TEST_CASE("interior waypoints with agreeing slopes are blended through") {
  JointPath path;
  path.waypoints = {vec1(0.0), vec1(0.5), vec1(1.0)};
  const auto lim = uniform_limits(1, 1.0, 2.0);
  const auto t = traj::replan_from_state(path, vec1(0.0), vec1(0.0), lim);
  // waypoint velocity nonzero at the middle waypoint
  REQUIRE(t.waypoint_times().size() == 3);
  const double t_mid = t.waypoint_times()[1];
  CHECK(t.sample(t_mid).q[0] == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(t.sample(t_mid).qd[0] > 0.1);
  // faster than stopping at every waypoint
  const auto stop_each = traj::lspb_rest_to_rest(path, lim);
  CHECK(t.duration() < stop_each.duration());
}

TEST_CASE("velocity beyond limits falls back to brake plus rest-to-rest") {
  JointPath path;
  path.waypoints = {vec1(0.0), vec1(1.0)};
  const auto lim = uniform_limits(1, 1.0, 2.0);
  const auto t = traj::replan_from_state(path, vec1(0.0), vec1(1.8), lim);
  // starts at the clamped velocity, ends at rest on the goal, stays in limits
  CHECK(t.sample(t.duration()).q[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(t.sample(t.duration()).qd[0] == 0.0);
  check_profile_properties(t, lim);
}

TEST_CASE("scaled_to_duration slows a profile uniformly") {
  JointPath path;
  path.waypoints = {vec1(0.0), vec1(1.0)};
  const auto lim = uniform_limits(1, 1.0, 2.0);
  const auto base = traj::lspb_rest_to_rest(path, lim);
  const auto slow = traj::scaled_to_duration(base, 3.0);
  CHECK(slow.duration() == doctest::Approx(3.0));
  CHECK(slow.sample(1.5).q[0] == doctest::Approx(base.sample(0.75).q[0]).epsilon(1e-12));
  CHECK(slow.sample(1.5).qd[0] == doctest::Approx(base.sample(0.75).qd[0] / 2.0).epsilon(1e-12));
  check_profile_properties(slow, lim);
}

TEST_CASE("property battery: random paths satisfy the trajectory contract") {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const int dof = 1 + static_cast<int>(rng.uniform_index(6));
    const int n_wp = 2 + static_cast<int>(rng.uniform_index(4));
    JointMotionLimits lim;
    lim.v_max.resize(dof);
    lim.a_max.resize(dof);
    for (int j = 0; j < dof; ++j) {
      lim.v_max[j] = rng.uniform(0.5, 2.0);
      lim.a_max[j] = rng.uniform(1.0, 5.0);
    }
    JointPath path;
    for (int w = 0; w < n_wp; ++w) {
      Eigen::VectorXd q(dof);
      for (int j = 0; j < dof; ++j) {
        q[j] = rng.uniform(-1.5, 1.5);
      }
      if (!path.waypoints.empty() &&
          (q - path.waypoints.back()).lpNorm<Eigen::Infinity>() < 1e-6) {
        q[0] += 0.1;
      }
      path.waypoints.push_back(q);
    }

    const bool use_replan = trial % 2 == 1;
    Trajectory t;
    Eigen::VectorXd qd0 = Eigen::VectorXd::Zero(dof);
    if (use_replan) {
      for (int j = 0; j < dof; ++j) {
        qd0[j] = rng.uniform(-lim.v_max[j], lim.v_max[j]);
      }
      t = traj::replan_from_state(path, path.waypoints.front(), qd0, lim);
      CHECK((t.sample(0.0).qd - qd0).lpNorm<Eigen::Infinity>() < 1e-12);
    } else {
      t = traj::lspb_rest_to_rest(path, lim);
    }

    // waypoint interpolation at the recorded waypoint times
    const auto& wt = t.waypoint_times();
    REQUIRE(wt.size() == path.waypoints.size());
    for (std::size_t w = 0; w < wt.size(); ++w) {
      const auto s = t.sample(std::min(wt[w], t.duration()));
      CHECK((s.q - path.waypoints[w]).lpNorm<Eigen::Infinity>() <= 1e-9);
    }
    // strictly increased segment times
    for (std::size_t w = 1; w < wt.size(); ++w) {
      CHECK(wt[w] > wt[w - 1]);
    }

    // limits + derivative consistency on a sparser grid than the dedicated
    // cases above (200 trials)
    const int n = 120;
    for (int i = 0; i <= n; ++i) {
      const double ti = t.duration() * i / n;
      const auto s = t.sample(ti);
      for (int j = 0; j < dof; ++j) {
        CHECK(std::abs(s.qd[j]) <= lim.v_max[j] + 1e-9);
      }
      const double h = 1e-7;
      if (ti > h && ti < t.duration() - h) {
        const auto sp = t.sample(ti + h);
        const auto sm = t.sample(ti - h);
        for (int j = 0; j < dof; ++j) {
          CHECK(std::abs((sp.q[j] - sm.q[j]) / (2.0 * h) - s.qd[j]) <=
                1e-6 * lim.v_max[j] + 1e-9);
        }
      }
    }
    for (int j = 0; j < dof; ++j) {
      for (const auto& piece : t.pieces()[j]) {
        CHECK(std::abs(piece.acc) <= lim.a_max[j] + 1e-9);
      }
    }
  }
}
