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

#include "scenenmpc/irl_training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "scenenmpc/rng.hpp"

namespace scenenmpc {

namespace {

void check_lengths(const SetPointTrajectory & a, const SetPointTrajectory & b, const char * what)
{
  if (a.size() != b.size()) {
    throw std::invalid_argument(std::string(what) + ": trajectory length mismatch (" + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()) + ")");
  }
}

double dot3(const std::array<double, 3> & a, const std::array<double, 3> & b)
{
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

std::array<double, 3> loss_weights(const RewardWeights & w) { return {1.0 + w.w[0], 1.0 + w.w[1], 1.0 + w.w[2]}; }

SetPointTrajectory perturb(const SetPointTrajectory & z, double sigma, std::mt19937_64 & rng)
{
  std::normal_distribution<double> n(0.0, sigma);
  SetPointTrajectory out = z;
  for (auto & p : out) {
    p.x += n(rng);
    p.y += n(rng);
    p.rho = wrap_angle(p.rho + n(rng));
  }
  return out;
}

// Expert states following the next window, t' + k * dt for k = 1..tau_o.
SetPointTrajectory expert_after(const AugmentedMemory & ep, double t_next, const BatchSpec & spec)
{
  SetPointTrajectory z;
  for (int k = 1; k <= spec.tau_o; ++k) z.push_back(ep.state_at(t_next + k * spec.output_dt));
  return z;
}

AnchorIndex training_anchors(const Dataset & data, const BatchSpec & spec)
{
  // leave room for the expert continuation after s'
  BatchSpec wide = spec;
  wide.tau_o = 2 * spec.tau_o;
  auto a = build_anchor_index(data, wide);
  if (a.empty()) throw std::invalid_argument("train: dataset too short for the configured horizons");
  return a;
}

void check_dataset(const Dataset & data)
{
  if (data.episodes.empty()) throw std::invalid_argument("train: empty dataset");
  if (data.routes.size() != data.episodes.size()) throw std::invalid_argument("train: dataset has no routes");
}

}  // namespace

std::array<double, 3> deviation_features(const SetPointTrajectory & z_d, const SetPointTrajectory & z_ref)
{
  check_lengths(z_d, z_ref, "reward");
  std::array<double, 3> f{0.0, 0.0, 0.0};
  for (size_t k = 0; k < z_d.size(); ++k) {
    const double dx = z_d[k].x - z_ref[k].x;
    const double dy = z_d[k].y - z_ref[k].y;
    const double dp = std::hypot(dx, dy);
    if (dp > 0.0) {
      f[0] += dx * dx / dp;
      f[1] += dy * dy / dp;
    }
    f[2] += std::abs(angle_diff(z_d[k].rho, z_ref[k].rho));
  }
  return f;
}

double reward(const SetPointTrajectory & z_d, const SetPointTrajectory & z_ref, const RewardWeights & w)
{
  return -dot3(w.w, deviation_features(z_d, z_ref));
}

double reward_raw(const SetPointTrajectory & z_d, const SetPointTrajectory & z_ref, const RewardWeights & w)
{
  return dot3(w.w, deviation_features(z_d, z_ref));
}

double discounted_return(const std::vector<double> & rewards, double gamma, size_t t_hat)
{
  if (t_hat >= rewards.size()) throw std::out_of_range("discounted_return: t_hat past the end");
  double g = 0.0;
  double f = 1.0;
  for (size_t t = t_hat; t < rewards.size(); ++t) {
    g += f * rewards[t];
    f *= gamma;
  }
  return g;
}

void TrainConfig::validate() const
{
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("train: gamma must be in [0, 1)");
  if (K1 < 0 || K2 < 0) throw std::invalid_argument("train: K1, K2 must be >= 0");
  if (batch_size <= 0 || epochs <= 0 || fit_steps <= 0 || probe_batch <= 0 || target_refresh <= 0 ||
      checkpoint_every <= 0 || tau_o <= 0) {
    throw std::invalid_argument("train: counts must be positive");
  }
  if (n_perturbed < 0 || perturb_sigma < 0.0) throw std::invalid_argument("train: bad perturbation settings");
  if (!(lr > 0.0 && alpha1 >= 0.0 && alpha2 > 0.0 && l2_lambda >= 0.0)) {
    throw std::invalid_argument("train: learning rates must be positive");
  }
  for (double v : w0.w) {
    if (!std::isfinite(v)) throw std::invalid_argument("train: w0 must be finite");
  }
}

BellmanTarget bellman_target(double r, const std::vector<double> & q, double gamma)
{
  if (q.empty()) throw std::invalid_argument("bellman_target: no candidates");
  BellmanTarget t;
  t.q = q;
  t.best = static_cast<size_t>(std::max_element(q.begin(), q.end()) - q.begin());
  t.value = r + gamma * q[t.best];
  return t;
}

BellmanTarget bellman_target(
  double r, const std::vector<SetPointTrajectory> & candidates, double gamma,
  const std::function<double(const SetPointTrajectory &)> & q_fn)
{
  std::vector<double> q;
  q.reserve(candidates.size());
  for (const auto & c : candidates) q.push_back(q_fn(c));
  BellmanTarget t = bellman_target(r, q, gamma);
  t.best_trajectory = candidates[t.best];
  return t;
}

BellmanTarget bellman_target(
  double r, const NetInput & next_s, const NetworkParams & frozen, const std::vector<SetPointTrajectory> & candidates,
  double gamma, const RewardWeights & w)
{
  const SetPointTrajectory roll = forward(frozen, next_s, false, nullptr).z_d;
  return bellman_target(r, candidates, gamma, [&](const SetPointTrajectory & c) { return reward(roll, c, w); });
}

double trajectory_loss(
  const SetPointTrajectory & z, const SetPointTrajectory & target, const std::array<double, 3> & lambda,
  std::vector<std::array<double, 3>> * dz)
{
  check_lengths(z, target, "loss");
  double l = 0.0;
  if (dz) dz->assign(z.size(), {0.0, 0.0, 0.0});
  for (size_t k = 0; k < z.size(); ++k) {
    const double e[3] = {z[k].x - target[k].x, z[k].y - target[k].y, angle_diff(z[k].rho, target[k].rho)};
    for (int d = 0; d < 3; ++d) {
      l += lambda[d] * e[d] * e[d];
      if (dz) (*dz)[k][d] = 2.0 * lambda[d] * e[d];
    }
  }
  return l;
}

nlohmann::json IterationMetrics::to_json() const
{
  return {{"phase", phase},         {"iter", iter},
          {"loss", loss},           {"probe_loss", probe_loss},
          {"reward", reward},       {"reward_raw", reward_raw},
          {"bellman_error", bellman_error}, {"w", w.w}};
}

RewardLearningResult learn_reward_weights(
  const Dataset & data, const NetworkParams & net_init, const TrainConfig & cfg, const MetricsSink & sink)
{
  cfg.validate();
  RewardLearningResult res{cfg.w0, net_init, {}};
  if (cfg.K1 == 0) return res;
  check_dataset(data);
  const BatchSpec spec = cfg.batch_spec();
  const AnchorIndex anchors = training_anchors(data, spec);
  NetworkParams & net = res.net;
  nn::AdamState adam = nn::make_adam_state(net.p);
  const std::array<double, 3> fit_lambda{1.0, 1.0, 1.0};

  struct Prepared {
    PolicyInput pi;
    SetPointTrajectory expert;
  };
  auto prepare = [&](const std::vector<Sample> & batch) {
    std::vector<Prepared> out;
    out.reserve(batch.size());
    for (const auto & s : batch) {
      out.push_back({make_policy_input(net.cfg, s.s, data.routes[s.episode], cfg.policy), s.z_d});
    }
    return out;
  };
  const auto probe = prepare(sample_batch(data, anchors, cfg.probe_batch, spec, mix_seed(cfg.rng_seed, 0x9e0beULL)));

  for (int it = 0; it < cfg.K1; ++it) {
    const auto batch = prepare(sample_batch(data, anchors, cfg.batch_size, spec, mix_seed(cfg.rng_seed, it)));
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    IterationMetrics m;
    m.phase = "reward";
    m.iter = it;
    for (int step = 0; step < cfg.fit_steps; ++step) {
      nn::ParamSet grads = net.p.zeros_like();
      std::mt19937_64 rng(mix_seed(mix_seed(cfg.rng_seed, it), 0x5eedULL + step));
      double loss = 0.0;
      for (const auto & b : batch) {
        auto out = forward(net, b.pi.input, true, &rng);
        OutputGradient g;
        loss += trajectory_loss(out.z_d, b.expert, fit_lambda, &g.dz) * inv_b;
        for (auto & d : g.dz) {
          for (double & v : d) v *= inv_b;
        }
        backward_accumulate(net, out.trace, g, grads);
      }
      if (!std::isfinite(loss)) {
        throw std::runtime_error("train reward: non-finite supervised loss at iteration " + std::to_string(it));
      }
      if (step == 0) m.loss = loss;
      adam_step(net, grads, adam, cfg.lr, cfg.l2_lambda);
    }

    // reward-weight step on the post-fit network
    std::array<double, 3> grad{0.0, 0.0, 0.0};
    for (const auto & b : batch) {
      const auto z = forward(net, b.pi.input, false, nullptr).z_d;
      const auto phi = deviation_features(z, b.pi.z_ref);
      const auto psi = deviation_features(b.expert, b.pi.z_ref);
      if (cfg.literal_w_gradient) {
        for (size_t k = 0; k < z.size(); ++k) {
          const double zk[3] = {z[k].x, z[k].y, z[k].rho};
          const double rk[3] = {b.pi.z_ref[k].x, b.pi.z_ref[k].y, b.pi.z_ref[k].rho};
          for (int d = 0; d < 3; ++d) grad[d] += std::log(std::max(std::abs(zk[d]), 1e-9)) * rk[d] * inv_b;
        }
      } else {
        for (int d = 0; d < 3; ++d) grad[d] += std::log1p(phi[d]) * (psi[d] - phi[d]) * inv_b;
      }
      m.reward += reward(z, b.pi.z_ref, res.w) * inv_b;
      m.reward_raw += reward_raw(z, b.pi.z_ref, res.w) * inv_b;
    }
    for (int d = 0; d < 3; ++d) res.w.w[d] = std::max(0.0, res.w.w[d] - cfg.alpha1 * grad[d]);
    for (double v : res.w.w) {
      if (!std::isfinite(v)) throw std::runtime_error("train reward: non-finite weights at iteration " + std::to_string(it));
    }

    for (const auto & b : probe) {
      const auto z = forward(net, b.pi.input, false, nullptr).z_d;
      m.probe_loss += trajectory_loss(z, b.expert, fit_lambda, nullptr) / static_cast<double>(probe.size());
    }
    m.w = res.w;
    res.history.push_back(m);
    if (sink) sink(m);
  }
  return res;
}

DynamicsResult train_dynamics(
  const Dataset & data, const NetworkParams & net_init, const RewardWeights & w, const TrainConfig & cfg,
  const MetricsSink & sink, std::optional<DynamicsState> resume,
  const std::function<void(const DynamicsState &)> & checkpoint)
{
  cfg.validate();
  DynamicsState st;
  if (resume) {
    st = std::move(*resume);
  } else {
    st.net = net_init;
    st.frozen = net_init;
    st.adam = nn::make_adam_state(net_init.p);
  }
  DynamicsResult res;
  if (st.iter >= cfg.K2) {
    res.net = st.net;
    return res;
  }
  check_dataset(data);
  const BatchSpec spec = cfg.batch_spec();
  const AnchorIndex anchors = training_anchors(data, spec);
  const auto lambda = loss_weights(w);

  for (; st.iter < cfg.K2;) {
    const int it = st.iter;
    if (it % cfg.target_refresh == 0) st.frozen = st.net;
    const auto batch = sample_batch(data, anchors, cfg.batch_size, spec, mix_seed(cfg.rng_seed ^ 0xd7ULL, it));
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    nn::ParamSet grads = st.net.p.zeros_like();
    std::mt19937_64 drop_rng(mix_seed(cfg.rng_seed ^ 0xd70ULL, it));
    IterationMetrics m;
    m.phase = "dynamics";
    m.iter = it;
    for (size_t bi = 0; bi < batch.size(); ++bi) {
      const Sample & s = batch[bi];
      const Polyline & route = data.routes[s.episode];
      const AugmentedMemory & ep = *data.episodes[s.episode];
      std::mt19937_64 rng(mix_seed(mix_seed(cfg.rng_seed, it), bi));

      const PolicyInput pi = make_policy_input(st.net.cfg, s.s, route, cfg.policy);
      const PolicyInput pn = make_policy_input(st.net.cfg, s.s_next, route, cfg.policy);

      // regression target at s: the best-rewarded of the expert and its perturbations
      std::vector<SetPointTrajectory> here{s.z_d};
      for (int p = 0; p < cfg.n_perturbed; ++p) here.push_back(perturb(s.z_d, cfg.perturb_sigma, rng));
      size_t best = 0;
      double r = -std::numeric_limits<double>::infinity();
      for (size_t c = 0; c < here.size(); ++c) {
        const double rc = reward(here[c], pi.z_ref, w);
        if (rc > r) {
          r = rc;
          best = c;
        }
      }
      const SetPointTrajectory & target = here[best];

      // bootstrap at s' with the frozen copy
      const SetPointTrajectory frozen_roll = forward(st.frozen, pn.input, false, nullptr).z_d;
      const SetPointTrajectory expert_next = expert_after(ep, s.t + spec.tau_o * spec.output_dt, spec);
      std::vector<SetPointTrajectory> next{frozen_roll, expert_next};
      for (int p = 0; p < cfg.n_perturbed; ++p) next.push_back(perturb(expert_next, cfg.perturb_sigma, rng));
      const BellmanTarget bt = bellman_target(
        r, next, cfg.gamma, [&](const SetPointTrajectory & c) { return reward(frozen_roll, c, w); });

      auto out = forward(st.net, pi.input, true, &drop_rng);
      OutputGradient g;
      const double l = trajectory_loss(out.z_d, target, lambda, &g.dz);
      if (!std::isfinite(l)) {
        throw std::runtime_error("train dynamics: non-finite loss in batch " + std::to_string(it));
      }
      for (auto & d : g.dz) {
        for (double & v : d) v *= inv_b;
      }
      backward_accumulate(st.net, out.trace, g, grads);
      const double q_here = reward(out.z_d, target, w);
      m.loss += l * inv_b;
      m.bellman_error += (bt.value - q_here) * (bt.value - q_here) * inv_b;
      m.reward += reward(out.z_d, pi.z_ref, w) * inv_b;
      m.reward_raw += reward_raw(out.z_d, pi.z_ref, w) * inv_b;
    }
    adam_step(st.net, grads, st.adam, cfg.alpha2, cfg.l2_lambda);
    ++st.iter;
    m.w = w;
    res.history.push_back(m);
    if (sink) sink(m);
    if (checkpoint && (st.iter % cfg.checkpoint_every == 0 || st.iter == cfg.K2)) checkpoint(st);
  }
  res.net = st.net;
  return res;
}

DynamicsEval evaluate_dynamics(
  const Dataset & data, const NetworkParams & net, const RewardWeights & w, const TrainConfig & cfg, int samples,
  std::uint64_t seed)
{
  check_dataset(data);
  const BatchSpec spec = cfg.batch_spec();
  const auto batch = sample_batch(data, training_anchors(data, spec), static_cast<size_t>(samples), spec, seed);
  const auto lambda = loss_weights(w);
  DynamicsEval ev;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const auto & s : batch) {
    const PolicyInput pi = make_policy_input(net.cfg, s.s, data.routes[s.episode], cfg.policy);
    const PolicyInput pn = make_policy_input(net.cfg, s.s_next, data.routes[s.episode], cfg.policy);
    const auto z = forward(net, pi.input, false, nullptr).z_d;
    const double r = reward(s.z_d, pi.z_ref, w);
    const auto roll = forward(net, pn.input, false, nullptr).z_d;
    const auto expert_next = expert_after(*data.episodes[s.episode], s.t + spec.tau_o * spec.output_dt, spec);
    const auto bt = bellman_target(r, {roll, expert_next}, cfg.gamma,
                                   [&](const SetPointTrajectory & c) { return reward(roll, c, w); });
    const double q = reward(z, s.z_d, w);
    ev.loss += trajectory_loss(z, s.z_d, lambda, nullptr) * inv;
    ev.bellman_error += (bt.value - q) * (bt.value - q) * inv;
    ev.predicted.push_back(z);
    ev.expert.push_back(s.z_d);
  }
  return ev;
}

void save_dynamics_state(const std::string & path, const DynamicsState & st, const RewardWeights & w)
{
  nn::Checkpoint ck;
  ck.tag = "dynamics_state";
  ck.architecture = {{"net", st.net.cfg.to_json()}, {"iter", st.iter}, {"w", w.w}, {"adam_t", st.adam.t}};
  auto add = [&](const nn::ParamSet & p, const std::string & prefix) {
    auto t = nn::prefixed(p, prefix);
    ck.tensors.insert(ck.tensors.end(), t.begin(), t.end());
  };
  add(st.net.p, "net.");
  add(st.frozen.p, "frozen.");
  add(st.adam.m, "adam_m.");
  add(st.adam.v, "adam_v.");
  nn::write_checkpoint(path, ck);
}

DynamicsState load_dynamics_state(const std::string & path, RewardWeights * w)
{
  const nn::Checkpoint ck = nn::read_checkpoint(path);
  if (ck.tag != "dynamics_state") {
    throw std::runtime_error("checkpoint: manifest tag '" + ck.tag + "', expected 'dynamics_state'");
  }
  DynamicsState st;
  const NetConfig cfg = NetConfig::from_json(ck.architecture.at("net"));
  st.net = make_network(cfg);
  st.frozen = make_network(cfg);
  st.adam = nn::make_adam_state(st.net.p);
  nn::load_tensors(st.net.p, ck.tensors, "net.");
  nn::load_tensors(st.frozen.p, ck.tensors, "frozen.");
  nn::load_tensors(st.adam.m, ck.tensors, "adam_m.");
  nn::load_tensors(st.adam.v, ck.tensors, "adam_v.");
  st.adam.t = ck.architecture.at("adam_t").get<long long>();
  st.iter = ck.architecture.at("iter").get<int>();
  touch(st.net);
  touch(st.frozen);
  if (w) w->w = ck.architecture.at("w").get<std::array<double, 3>>();
  return st;
}

void save_reward_weights(const std::string & path, const RewardWeights & w)
{
  nn::Checkpoint ck;
  ck.tag = "reward_weights";
  ck.architecture = {{"w", w.w}};
  nn::write_checkpoint(path, ck);
}

RewardWeights load_reward_weights(const std::string & path)
{
  const nn::Checkpoint ck = nn::read_checkpoint(path);
  if (ck.tag != "reward_weights") {
    throw std::runtime_error("checkpoint: manifest tag '" + ck.tag + "', expected 'reward_weights'");
  }
  RewardWeights w;
  w.w = ck.architecture.at("w").get<std::array<double, 3>>();
  return w;
}

}  // namespace scenenmpc
