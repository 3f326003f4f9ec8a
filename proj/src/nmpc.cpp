// Copyright 2026 The scenenmpc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "scenenmpc/nmpc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>

namespace scenenmpc {

namespace {

double sq_excess(double v, double lo, double hi, double * d)
{
  if (v > hi) {
    *d = 2.0 * (v - hi);
    return (v - hi) * (v - hi);
  }
  if (v < lo) {
    *d = 2.0 * (v - lo);
    return (v - lo) * (v - lo);
  }
  *d = 0.0;
  return 0.0;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct Box {
  double lo[2];
  double hi[2];
};

Box box_of(const NmpcConfig & cfg) { return {{cfg.u_min.v_cmd, cfg.u_min.delta_cmd}, {cfg.u_max.v_cmd, cfg.u_max.delta_cmd}}; }

std::vector<ControlInput> decode(const Eigen::VectorXd & th, const Box & b)
{
  std::vector<ControlInput> u(static_cast<size_t>(th.size() / 2));
  for (size_t k = 0; k < u.size(); ++k) {
    u[k].v_cmd = b.lo[0] + (b.hi[0] - b.lo[0]) * sigmoid(th[2 * k]);
    u[k].delta_cmd = b.lo[1] + (b.hi[1] - b.lo[1]) * sigmoid(th[2 * k + 1]);
  }
  return u;
}

Eigen::VectorXd encode(const std::vector<ControlInput> & u, const Box & b)
{
  Eigen::VectorXd th(2 * static_cast<Eigen::Index>(u.size()));
  const double eps = 1e-6;
  for (size_t k = 0; k < u.size(); ++k) {
    const double val[2] = {u[k].v_cmd, u[k].delta_cmd};
    for (int j = 0; j < 2; ++j) {
      double f = (val[j] - b.lo[j]) / (b.hi[j] - b.lo[j]);
      if (!std::isfinite(f)) f = 0.5;
      f = std::clamp(f, eps, 1.0 - eps);
      th[2 * static_cast<Eigen::Index>(k) + j] = std::log(f / (1.0 - f));
    }
  }
  return th;
}

DynamicsCompensation comp_at(const NmpcProblem & p, const NmpcConfig & cfg, size_t k)
{
  if (!cfg.predict_with_compensation || k >= p.comps.size()) return {};
  return p.comps[k];
}

}  // namespace

void NmpcConfig::validate() const
{
  for (double q : Q) {
    if (!(q >= 0.0)) throw std::invalid_argument("nmpc: Q weights must be >= 0");
  }
  for (double r : R) {
    if (!(r > 0.0)) throw std::invalid_argument("nmpc: R weights must be > 0");
  }
  for (double w : S) {
    if (!(w >= 0.0)) throw std::invalid_argument("nmpc: S weights must be >= 0");
  }
  if (tau_o <= 0 || !(dt > 0.0)) throw std::invalid_argument("nmpc: tau_o and dt must be positive");
  if (!(u_min.v_cmd < u_max.v_cmd && u_min.delta_cmd < u_max.delta_cmd)) {
    throw std::invalid_argument("nmpc: u_min must be < u_max componentwise");
  }
  for (int j = 0; j < 2; ++j) {
    if (!(du_min[j] < du_max[j])) throw std::invalid_argument("nmpc: du_min must be < du_max");
  }
  for (int d = 0; d < 3; ++d) {
    if (!(e_min[d] < e_max[d])) throw std::invalid_argument("nmpc: e_min must be < e_max");
  }
  if (!(penalty_mu >= 0.0) || !(terminal_weight >= 0.0)) throw std::invalid_argument("nmpc: bad penalty weights");
  if (solver.max_iters <= 0 || !(solver.wolfe_c1 > 0.0 && solver.wolfe_c1 < solver.wolfe_c2 && solver.wolfe_c2 < 1.0)) {
    throw std::invalid_argument("nmpc: bad solver settings (need 0 < c1 < c2 < 1)");
  }
}

NmpcConfig NmpcConfig::for_vehicle(const VehicleParams & v)
{
  NmpcConfig c;
  c.u_min = {v.v_min, -v.delta_max};
  c.u_max = {v.v_max, v.delta_max};
  return c;
}

double cost(
  const std::vector<VehicleState> & z_pred, const SetPointTrajectory & z_d, const std::vector<ControlInput> & u_seq,
  const NmpcConfig & cfg, const std::vector<ControlInput> * u_ref)
{
  if (z_pred.size() != z_d.size() || u_seq.size() != z_d.size() || (u_ref && u_ref->size() != u_seq.size())) {
    throw std::invalid_argument("nmpc cost: horizon length mismatch");
  }
  double j = 0.0;
  for (size_t k = 0; k < z_d.size(); ++k) {
    const double e[3] = {z_pred[k].x - z_d[k].x, z_pred[k].y - z_d[k].y, angle_diff(z_pred[k].rho, z_d[k].rho)};
    const double wk = 1.0 + (k + 1 == z_d.size() ? cfg.terminal_weight : 0.0);
    for (int d = 0; d < 3; ++d) j += wk * cfg.Q[d] * e[d] * e[d];
    const double du[2] = {u_seq[k].v_cmd - (u_ref ? (*u_ref)[k].v_cmd : 0.0),
                          u_seq[k].delta_cmd - (u_ref ? (*u_ref)[k].delta_cmd : 0.0)};
    for (int i = 0; i < 2; ++i) j += cfg.R[i] * du[i] * du[i];
  }
  return j;
}

double objective(const NmpcProblem & p, const std::vector<ControlInput> & u, const NmpcConfig & cfg,
                 std::vector<std::array<double, 2>> * grad)
{
  const size_t n = p.z_d.size();
  if (u.size() != n) throw std::invalid_argument("nmpc objective: horizon length mismatch");
  if (!p.u_ref.empty() && p.u_ref.size() != n) throw std::invalid_argument("nmpc objective: u_ref length mismatch");
  std::vector<VehicleState> z(n + 1);
  z[0] = p.z0;
  for (size_t k = 0; k < n; ++k) z[k + 1] = step_combined(z[k], u[k], comp_at(p, cfg, k), p.vehicle, cfg.dt);

  double j = 0.0;
  std::vector<std::array<double, 3>> dz(n + 1, {0.0, 0.0, 0.0});
  std::vector<std::array<double, 2>> du(n, {0.0, 0.0});
  for (size_t k = 0; k < n; ++k) {
    const VehicleState & zk = z[k + 1];
    const double e[3] = {zk.x - p.z_d[k].x, zk.y - p.z_d[k].y, angle_diff(zk.rho, p.z_d[k].rho)};
    const double wk = 1.0 + (k + 1 == n ? cfg.terminal_weight : 0.0);
    for (int d = 0; d < 3; ++d) {
      j += wk * cfg.Q[d] * e[d] * e[d];
      dz[k + 1][d] += 2.0 * wk * cfg.Q[d] * e[d];
      // cross-track e_ct = z_d - z must stay inside [e_min, e_max]
      double dpen = 0.0;
      j += cfg.penalty_mu * sq_excess(-e[d], cfg.e_min[d], cfg.e_max[d], &dpen);
      dz[k + 1][d] -= cfg.penalty_mu * dpen;
    }
    const double uk[2] = {u[k].v_cmd, u[k].delta_cmd};
    const double ur[2] = {p.u_ref.empty() ? 0.0 : p.u_ref[k].v_cmd, p.u_ref.empty() ? 0.0 : p.u_ref[k].delta_cmd};
    const ControlInput & prev = k == 0 ? p.u_prev : u[k - 1];
    const double up[2] = {prev.v_cmd, prev.delta_cmd};
    for (int i = 0; i < 2; ++i) {
      j += cfg.R[i] * (uk[i] - ur[i]) * (uk[i] - ur[i]);
      du[k][i] += 2.0 * cfg.R[i] * (uk[i] - ur[i]);
      j += cfg.S[i] * (uk[i] - up[i]) * (uk[i] - up[i]);
      du[k][i] += 2.0 * cfg.S[i] * (uk[i] - up[i]);
      if (k > 0) du[k - 1][i] -= 2.0 * cfg.S[i] * (uk[i] - up[i]);
      double dpen = 0.0;
      j += cfg.penalty_mu * sq_excess((uk[i] - up[i]) / cfg.dt, cfg.du_min[i], cfg.du_max[i], &dpen);
      du[k][i] += cfg.penalty_mu * dpen / cfg.dt;
      if (k > 0) du[k - 1][i] -= cfg.penalty_mu * dpen / cfg.dt;
    }
  }
  if (grad) {
    std::array<double, 3> lam = dz[n];
    grad->assign(n, {0.0, 0.0});
    for (size_t kk = n; kk-- > 0;) {
      const StepJacobian J = step_combined_jacobian(z[kk], u[kk], comp_at(p, cfg, kk), p.vehicle, cfg.dt);
      for (int i = 0; i < 2; ++i) {
        double g = du[kk][i];
        for (int r = 0; r < 3; ++r) g += J.du[r][i] * lam[r];
        (*grad)[kk][i] = g;
      }
      std::array<double, 3> next = dz[kk];
      for (int c = 0; c < 3; ++c) {
        for (int r = 0; r < 3; ++r) next[c] += J.dz[r][c] * lam[r];
      }
      lam = next;
    }
  }
  return j;
}

NmpcSolution solve(const NmpcProblem & p, const NmpcConfig & cfg, const std::optional<std::vector<ControlInput>> & warm_start)
{
  cfg.validate();
  const size_t n = p.z_d.size();
  if (n == 0) throw std::invalid_argument("nmpc solve: empty set-point trajectory");
  const Box box = box_of(cfg);
  std::vector<ControlInput> u0;
  if (warm_start && warm_start->size() == n) {
    u0 = *warm_start;
  } else if (!p.u_ref.empty()) {
    u0 = p.u_ref;
  } else {
    u0.assign(n, p.u_prev);
  }
  for (auto & u : u0) {
    if (!std::isfinite(u.v_cmd)) u.v_cmd = 0.5 * (box.lo[0] + box.hi[0]);
    if (!std::isfinite(u.delta_cmd)) u.delta_cmd = 0.0;
  }

  std::vector<std::array<double, 2>> gu;
  auto eval = [&](const Eigen::VectorXd & th, Eigen::VectorXd & g) {
    const auto u = decode(th, box);
    const double f = objective(p, u, cfg, &gu);
    g.resize(th.size());
    for (size_t k = 0; k < n; ++k) {
      for (int j = 0; j < 2; ++j) {
        const double s = sigmoid(th[2 * static_cast<Eigen::Index>(k) + j]);
        g[2 * static_cast<Eigen::Index>(k) + j] = gu[k][j] * (box.hi[j] - box.lo[j]) * s * (1.0 - s);
      }
    }
    return f;
  };

  Eigen::VectorXd th = encode(u0, box);
  Eigen::VectorXd g;
  double f = eval(th, g);
  if (!std::isfinite(f)) throw std::runtime_error("nmpc solve: non-finite cost at the warm start");
  const Eigen::Index dim = th.size();
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(dim, dim);
  bool scaled = false;
  NmpcSolution sol;
  const SolverConfig & sc = cfg.solver;

  int it = 0;
  for (; it < sc.max_iters; ++it) {
    if (g.lpNorm<Eigen::Infinity>() < sc.grad_tol) {
      sol.converged = true;
      break;
    }
    Eigen::VectorXd dir = -H * g;
    double g0 = g.dot(dir);
    if (!(g0 < 0.0)) {
      H.setIdentity();
      dir = -g;
      g0 = g.dot(dir);
    }
    // strong Wolfe line search with bisection zoom
    double a_prev = 0.0, f_prev = f, a = 1.0;
    double a_ok = -1.0, f_ok = f;
    Eigen::VectorXd g_ok, g_a;
    auto zoom = [&](double lo, double hi, double f_lo) {
      for (int z = 0; z < sc.max_line_search; ++z) {
        const double am = 0.5 * (lo + hi);
        const double fm = eval(th + am * dir, g_a);
        const double dm = g_a.dot(dir);
        if (fm > f + sc.wolfe_c1 * am * g0 || fm >= f_lo) {
          hi = am;
        } else {
          if (fm < f_ok) {
            a_ok = am;
            f_ok = fm;
            g_ok = g_a;
          }
          if (std::abs(dm) <= -sc.wolfe_c2 * g0) return;
          if (dm * (hi - lo) >= 0.0) hi = lo;
          lo = am;
          f_lo = fm;
        }
      }
    };
    for (int ls = 0; ls < sc.max_line_search; ++ls) {
      const double fa = eval(th + a * dir, g_a);
      const double da = g_a.dot(dir);
      if (!std::isfinite(fa) || fa > f + sc.wolfe_c1 * a * g0 || (ls > 0 && fa >= f_prev)) {
        zoom(a_prev, a, f_prev);
        break;
      }
      if (fa < f_ok) {
        a_ok = a;
        f_ok = fa;
        g_ok = g_a;
      }
      if (std::abs(da) <= -sc.wolfe_c2 * g0) break;
      if (da >= 0.0) {
        zoom(a, a_prev, fa);
        break;
      }
      a_prev = a;
      f_prev = fa;
      a *= 2.0;
    }
    if (a_ok <= 0.0) {
      // no decrease along this direction
      if (H.isIdentity()) {
        sol.converged = g.lpNorm<Eigen::Infinity>() < std::sqrt(sc.grad_tol);
        break;
      }
      H.setIdentity();
      continue;
    }
    const Eigen::VectorXd s = a_ok * dir;
    const Eigen::VectorXd y = g_ok - g;
    th += s;
    const double f_old = f;
    f = f_ok;
    g = g_ok;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm() && sy > 0.0) {
      if (!scaled) {
        H *= sy / y.dot(y);
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(dim, dim);
      H = (I - rho * s * y.transpose()) * H * (I - rho * y * s.transpose()) + rho * s * s.transpose();
    } else {
      H.setIdentity();
      scaled = false;
    }
    if (std::abs(f_old - f) <= 1e-16 * std::max(1.0, std::abs(f)) && g.lpNorm<Eigen::Infinity>() < std::sqrt(sc.grad_tol)) {
      sol.converged = true;
      ++it;
      break;
    }
  }
  sol.iterations = it;

  std::vector<ControlInput> u = decode(th, box);
  // coordinates pressed against a bound are tried exactly on it
  for (size_t k = 0; k < n; ++k) {
    for (int j = 0; j < 2; ++j) {
      double & v = j == 0 ? u[k].v_cmd : u[k].delta_cmd;
      const double span = box.hi[j] - box.lo[j];
      for (double bound : {box.lo[j], box.hi[j]}) {
        if (std::abs(v - bound) <= sc.bound_snap * span) {
          const double keep = v;
          v = bound;
          const double fb = objective(p, u, cfg);
          if (fb <= f) {
            f = fb;
          } else {
            v = keep;
          }
        }
      }
    }
  }
  if (!std::isfinite(f)) throw std::runtime_error("nmpc solve: non-finite cost");
  sol.u_sequence = u;
  sol.cost = f;
  sol.predicted_states.resize(n);
  VehicleState z = p.z0;
  for (size_t k = 0; k < n; ++k) {
    z = step_combined(z, u[k], comp_at(p, cfg, k), p.vehicle, cfg.dt);
    sol.predicted_states[k] = z;
  }
  return sol;
}

NmpcSolution solve(const JointState & s_now, const SetPointTrajectory & z_d,
                   const std::vector<DynamicsCompensation> & comps, const NmpcConfig & cfg,
                   const VehicleParams & vehicle, const ControlInput & u_prev,
                   const std::optional<std::vector<ControlInput>> & warm_start, const std::vector<ControlInput> & u_ref)
{
  if (s_now.size() == 0) throw std::invalid_argument("nmpc solve: empty window");
  NmpcProblem p{s_now.latest(), z_d, comps, u_ref, u_prev, vehicle};
  return solve(p, cfg, warm_start);
}

nlohmann::json ControlStep::log() const
{
  nlohmann::json zd = nlohmann::json::array();
  for (const auto & z : z_d) zd.push_back({z.x, z.y, z.rho});
  nlohmann::json h = nlohmann::json::array();
  for (const auto & c : comps) h.push_back({c.h_v, c.h_delta});
  return {{"z_d", zd},
          {"comps", h},
          {"u_ff", {u_ff.v_cmd, u_ff.delta_cmd}},
          {"u_opt", {u.v_cmd, u.delta_cmd}},
          {"cost", solution.cost},
          {"iterations", solution.iterations},
          {"converged", solution.converged}};
}

ControlStep control_step(
  const AugmentedMemory & memory, double t, const Polyline & route, const NetworkParams & net,
  const NmpcConfig & cfg, const PolicyInputConfig & policy, const WindowQuery & window,
  const std::optional<std::vector<ControlInput>> & warm_start)
{
  WindowQuery q = window;
  q.t = t;
  const JointState s = memory.window(q);
  const PolicyInput pi = make_policy_input(net.cfg, s, route, policy);
  const ForwardResult fr = forward(net, pi.input, false, nullptr);
  ControlStep st;
  st.z_d = fr.z_d;
  st.comps = fr.comps;
  st.u_ff = pi.u_ff;
  NmpcConfig c = cfg;
  c.tau_o = static_cast<int>(fr.z_d.size());
  const std::vector<ControlInput> u_ref =
    cfg.control_relative_to_feedforward ? std::vector<ControlInput>(fr.z_d.size(), pi.u_ff) : std::vector<ControlInput>{};
  st.solution = solve(s, fr.z_d, fr.comps, c, net.cfg.vehicle, s.controls.back(), warm_start, u_ref);
  st.u = st.solution.u_sequence.front();
  return st;
}

NmpcController::NmpcController(NetworkParams net, NmpcConfig cfg, PolicyInputConfig policy, WindowQuery window,
                               std::string name)
: net_(std::move(net)), cfg_(cfg), policy_(policy), window_(window), name_(std::move(name))
{
  cfg_.validate();
}

void NmpcController::reset(const Scenario & scenario, std::uint64_t)
{
  sc_ = &scenario;
  prev_.reset();
}

ControlResult NmpcController::act(const Observation & obs)
{
  ControlResult res;
  try {
    std::optional<std::vector<ControlInput>> warm;
    if (prev_ && !prev_->empty()) {
      std::vector<ControlInput> w(prev_->begin() + 1, prev_->end());
      w.push_back(prev_->back());
      warm = std::move(w);
    }
    const ControlStep st = control_step(obs.memory, obs.t, sc_->route, net_, cfg_, policy_, window_, warm);
    prev_ = st.solution.u_sequence;
    res.u = st.u;
    res.log = st.log();
    if (!st.solution.converged) {
      res.flagged = true;
      res.flag = "solver_not_converged";
    }
  } catch (const InsufficientHistory &) {
    res.u = pure_pursuit(sc_->route, obs.observed, policy_.feedforward, sc_->config.vehicle);
    res.flagged = true;
    res.flag = "warmup";
  }
  return res;
}

}  // namespace scenenmpc
