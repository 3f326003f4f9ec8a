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

#include "scenenmpc/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "scenenmpc/rng.hpp"

namespace scenenmpc {

std::string to_string(DiscreteAction a)
{
  switch (a) {
    case DiscreteAction::accelerate: return "accelerate";
    case DiscreteAction::turn_left: return "turn_left";
    case DiscreteAction::turn_right: return "turn_right";
    case DiscreteAction::no_action: return "no_action";
    case DiscreteAction::brake: return "brake";
    case DiscreteAction::accel_left: return "accel_left";
    case DiscreteAction::accel_right: return "accel_right";
    case DiscreteAction::reverse: return "reverse";
  }
  return "unknown";
}

std::string to_string(BcCommand c)
{
  switch (c) {
    case BcCommand::left: return "left";
    case BcCommand::right: return "right";
    case BcCommand::accelerate: return "accelerate";
    case BcCommand::decelerate: return "decelerate";
  }
  return "unknown";
}

ControlInput apply_action(const ControlInput & cmd, DiscreteAction a, const IncrementConfig & inc,
                          const VehicleParams & vehicle)
{
  const double dv = inc.speed_fraction * vehicle.v_max;
  ControlInput u = cmd;
  switch (a) {
    case DiscreteAction::accelerate: u.v_cmd += dv; break;
    case DiscreteAction::turn_left: u.delta_cmd -= inc.steer; break;
    case DiscreteAction::turn_right: u.delta_cmd += inc.steer; break;
    case DiscreteAction::no_action: break;
    case DiscreteAction::brake: u.v_cmd -= inc.brake_factor * dv; break;
    case DiscreteAction::accel_left:
      u.v_cmd += dv;
      u.delta_cmd -= inc.steer;
      break;
    case DiscreteAction::accel_right:
      u.v_cmd += dv;
      u.delta_cmd += inc.steer;
      break;
    case DiscreteAction::reverse: u.v_cmd -= dv; break;
  }
  return clamp_control(u, vehicle);
}

ControlInput apply_command(const ControlInput & cmd, BcCommand c, const IncrementConfig & inc,
                           const VehicleParams & vehicle)
{
  const double dv = inc.speed_fraction * vehicle.v_max;
  ControlInput u = cmd;
  switch (c) {
    case BcCommand::left: u.delta_cmd -= inc.steer; break;
    case BcCommand::right: u.delta_cmd += inc.steer; break;
    case BcCommand::accelerate: u.v_cmd += dv; break;
    case BcCommand::decelerate: u.v_cmd -= dv; break;
  }
  return clamp_control(u, vehicle);
}

int argmax_tiebreak(const Eigen::Ref<const Eigen::VectorXd> & v, std::mt19937_64 * rng)
{
  if (v.size() == 0) throw std::invalid_argument("argmax: empty vector");
  const double m = v.maxCoeff();
  std::vector<int> ties;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (v[i] == m) ties.push_back(static_cast<int>(i));
  }
  if (ties.size() == 1 || !rng) return ties.front();
  std::uniform_int_distribution<size_t> pick(0, ties.size() - 1);
  return ties[pick(*rng)];
}

// ---------------------------------------------------------------------------
// DWA

void DwaConfig::validate() const
{
  if (v_samples < 2 || delta_samples < 2) throw std::invalid_argument("dwa: samples must be >= 2");
  if (!(delta_min < delta_max)) throw std::invalid_argument("dwa: delta_min must be < delta_max");
  if (!(horizon > 0.0) || !(sim_dt > 0.0)) throw std::invalid_argument("dwa: horizon and sim_dt must be positive");
  if (w_heading < 0.0 || w_clearance < 0.0 || w_velocity < 0.0) throw std::invalid_argument("dwa: weights must be >= 0");
  if (!(clearance_cap > 0.0) || margin < 0.0) throw std::invalid_argument("dwa: clearance_cap > 0, margin >= 0");
}

std::vector<Vec2> ray_points(const std::vector<RayHit> & rays, const VehicleState & ego, double max_range)
{
  std::vector<Vec2> out;
  for (const auto & r : rays) {
    if (r.distance >= max_range - 1e-9) continue;
    const double a = ego.rho + r.angle;
    out.push_back({ego.x + r.distance * std::cos(a), ego.y + r.distance * std::sin(a)});
  }
  return out;
}

namespace {

// Distance from p to the footprint rectangle of pose (0 inside).
double footprint_distance(const VehicleState & pose, Vec2 p, double length, double width)
{
  const double c = std::cos(pose.rho), s = std::sin(pose.rho);
  const double dx = p.x - pose.x, dy = p.y - pose.y;
  const double lx = c * dx + s * dy;
  const double ly = -s * dx + c * dy;
  const double ex = std::max(std::abs(lx) - 0.5 * length, 0.0);
  const double ey = std::max(std::abs(ly) - 0.5 * width, 0.0);
  return std::hypot(ex, ey);
}

}  // namespace

DwaResult dwa_step(const std::vector<Vec2> & obstacles, const VehicleState & ego, double speed, const Polyline & route,
                   const DwaConfig & cfg, const VehicleParams & vehicle, double dt)
{
  cfg.validate();
  double v_lo = std::clamp(speed - vehicle.accel_max * dt, vehicle.v_min, vehicle.v_max);
  double v_hi = std::clamp(speed + vehicle.accel_max * dt, vehicle.v_min, vehicle.v_max);
  const double d_lo = std::max(cfg.delta_min, -vehicle.delta_max);
  const double d_hi = std::min(cfg.delta_max, vehicle.delta_max);
  const int n_steps = std::max(1, static_cast<int>(std::lround(cfg.horizon / cfg.sim_dt)));

  DwaResult res;
  for (int i = 0; i < cfg.v_samples; ++i) {
    const double v = v_lo + (v_hi - v_lo) * i / (cfg.v_samples - 1);
    for (int j = 0; j < cfg.delta_samples; ++j) {
      const double d = d_lo + (d_hi - d_lo) * j / (cfg.delta_samples - 1);
      DwaCandidate c;
      c.u = {v, d};
      double clear = cfg.clearance_cap;
      VehicleState z = ego;
      for (int k = 0; k < n_steps; ++k) {
        z = step_nominal(z, c.u, vehicle, cfg.sim_dt);
        for (const Vec2 & p : obstacles) {
          const double dist = footprint_distance(z, p, vehicle.length, vehicle.width);
          if (dist < cfg.margin) c.collides = true;
          clear = std::min(clear, dist);
        }
      }
      const Vec2 target = route.point_at(route.project({z.x, z.y}).s + cfg.lookahead);
      const double alpha = angle_diff(std::atan2(target.y - z.y, target.x - z.x), z.rho);
      c.heading = 1.0 - std::abs(alpha) / M_PI;
      c.clearance = clear;
      c.velocity = vehicle.v_max > 0.0 ? v / vehicle.v_max : 0.0;
      c.score = cfg.w_heading * c.heading + cfg.w_clearance * (clear / cfg.clearance_cap) + cfg.w_velocity * c.velocity;
      res.candidates.push_back(c);
    }
  }
  for (size_t i = 0; i < res.candidates.size(); ++i) {
    const auto & c = res.candidates[i];
    if (c.collides) continue;
    if (res.chosen < 0) {
      res.chosen = static_cast<int>(i);
      continue;
    }
    const auto & b = res.candidates[static_cast<size_t>(res.chosen)];
    const bool better = c.score > b.score ||
                        (c.score == b.score && (std::abs(c.u.delta_cmd) < std::abs(b.u.delta_cmd) ||
                                                (std::abs(c.u.delta_cmd) == std::abs(b.u.delta_cmd) &&
                                                 c.u.v_cmd < b.u.v_cmd)));
    if (better) res.chosen = static_cast<int>(i);
  }
  if (res.chosen < 0) {
    res.u = {vehicle.v_min, 0.0};
    res.flagged = true;
  } else {
    res.u = res.candidates[static_cast<size_t>(res.chosen)].u;
  }
  return res;
}

void DwaController::reset(const Scenario & scenario, std::uint64_t) { sc_ = &scenario; }

ControlResult DwaController::act(const Observation & obs)
{
  const auto & sc = sc_->config;
  const auto pts = ray_points(obs.rays, obs.observed, sc.max_range);
  const DwaResult d = dwa_step(pts, obs.observed, obs.speed, sc_->route, cfg_, sc.vehicle, obs.dt);
  ControlResult r;
  r.u = d.u;
  if (d.flagged) {
    r.flagged = true;
    r.flag = "all_candidates_collide";
  }
  return r;
}

// ---------------------------------------------------------------------------
// Frames

std::vector<float> ego_view(const OccupancyGrid & grid, const VehicleState & ego, const ViewConfig & cfg)
{
  std::vector<float> out(static_cast<size_t>(cfg.side) * cfg.side);
  const double c = std::cos(ego.rho), s = std::sin(ego.rho);
  const double fstep = (cfg.ahead + cfg.behind) / cfg.side;
  const double lstep = 2.0 * cfg.half_width / cfg.side;
  for (int r = 0; r < cfg.side; ++r) {
    const double f = cfg.ahead - (r + 0.5) * fstep;
    for (int k = 0; k < cfg.side; ++k) {
      const double l = -cfg.half_width + (k + 0.5) * lstep;
      const Vec2 p{ego.x + f * c - l * s, ego.y + f * s + l * c};
      out[static_cast<size_t>(r) * cfg.side + k] = grid.query(p);
    }
  }
  return out;
}

nn::Feature stack_frames(const std::vector<const std::vector<float> *> & history, const ViewConfig & cfg)
{
  if (history.empty()) throw std::invalid_argument("stack_frames: empty history");
  const size_t px = static_cast<size_t>(cfg.side) * cfg.side;
  nn::Feature x;
  x.c = cfg.frames;
  x.h = cfg.side;
  x.w = cfg.side;
  x.data.resize(cfg.frames, static_cast<Eigen::Index>(px));
  const long long last = static_cast<long long>(history.size()) - 1;
  for (int f = 0; f < cfg.frames; ++f) {
    const long long idx = std::max(0LL, last - static_cast<long long>(f) * cfg.gap);
    const auto & v = *history[static_cast<size_t>(idx)];
    if (v.size() != px) throw std::invalid_argument("stack_frames: frame size mismatch");
    for (size_t i = 0; i < px; ++i) x.data(f, static_cast<Eigen::Index>(i)) = v[i];
  }
  return x;
}

// ---------------------------------------------------------------------------
// Policy network

namespace {

enum PIdx : size_t { kC1W, kC1b, kC2W, kC2b, kFcW, kFcb, kOutW, kOutb };

int side_after(const PolicyNetConfig & c, int stage)
{
  int s = nn::conv_out(c.side, c.conv1.kernel, c.conv1.stride);
  if (stage == 0) return s;
  s /= 2;
  if (stage == 1) return s;
  s = nn::conv_out(s, c.conv2.kernel, c.conv2.stride);
  if (stage == 2) return s;
  return s / 2;
}

}  // namespace

int PolicyNetConfig::conv_features() const { return conv2.filters * side_after(*this, 3) * side_after(*this, 3); }

void PolicyNetConfig::validate() const
{
  if (frames <= 0 || side <= 0 || hidden <= 0 || n_out <= 0 || n_scalar < 0) {
    throw std::invalid_argument("policy net: sizes must be positive");
  }
  if (side_after(*this, 3) <= 0) throw std::invalid_argument("policy net: input too small for the conv stack");
}

nlohmann::json PolicyNetConfig::to_json() const
{
  return {{"frames", frames},
          {"side", side},
          {"conv1", {conv1.filters, conv1.kernel, conv1.stride}},
          {"conv2", {conv2.filters, conv2.kernel, conv2.stride}},
          {"hidden", hidden},
          {"n_scalar", n_scalar},
          {"n_out", n_out}};
}

PolicyNetConfig PolicyNetConfig::from_json(const nlohmann::json & j)
{
  PolicyNetConfig c;
  c.frames = j.at("frames");
  c.side = j.at("side");
  c.conv1 = {j.at("conv1").at(0), j.at("conv1").at(1), j.at("conv1").at(2)};
  c.conv2 = {j.at("conv2").at(0), j.at("conv2").at(1), j.at("conv2").at(2)};
  c.hidden = j.at("hidden");
  c.n_scalar = j.at("n_scalar");
  c.n_out = j.at("n_out");
  c.validate();
  return c;
}

PolicyNet init_policy_net(const PolicyNetConfig & cfg, std::uint64_t seed)
{
  cfg.validate();
  PolicyNet net;
  net.cfg = cfg;
  auto & p = net.p;
  p.add("conv1_W", cfg.conv1.filters, cfg.frames * cfg.conv1.kernel * cfg.conv1.kernel);
  p.add("conv1_b", cfg.conv1.filters, 1);
  p.add("conv2_W", cfg.conv2.filters, cfg.conv1.filters * cfg.conv2.kernel * cfg.conv2.kernel);
  p.add("conv2_b", cfg.conv2.filters, 1);
  p.add("fc_W", cfg.hidden, cfg.conv_features() + cfg.n_scalar);
  p.add("fc_b", cfg.hidden, 1);
  p.add("out_W", cfg.n_out, cfg.hidden);
  p.add("out_b", cfg.n_out, 1);
  std::mt19937_64 rng(mix_seed(seed, 0x9011c7ULL));
  nn::init_he_uniform(p[kC1W], static_cast<int>(p[kC1W].cols()), rng);
  nn::init_he_uniform(p[kC2W], static_cast<int>(p[kC2W].cols()), rng);
  nn::init_he_uniform(p[kFcW], static_cast<int>(p[kFcW].cols()), rng);
  nn::init_uniform(p[kOutW], 1.0 / std::sqrt(static_cast<double>(cfg.hidden)), rng);
  return net;
}

Eigen::VectorXd policy_forward(const PolicyNet & net, const nn::Feature & x, const Eigen::VectorXd & scalars,
                               PolicyTrace * trace)
{
  const auto & c = net.cfg;
  const auto & p = net.p;
  if (x.c != c.frames || x.h != c.side || x.w != c.side) throw std::invalid_argument("policy net: input shape mismatch");
  if (scalars.size() != c.n_scalar) throw std::invalid_argument("policy net: scalar input size mismatch");
  PolicyTrace local;
  PolicyTrace & t = trace ? *trace : local;
  nn::Feature a = nn::conv_forward(p[kC1W], p[kC1b].col(0), x, c.conv1.kernel, c.conv1.stride, t.c1);
  nn::relu_forward(a, t.m1);
  a = nn::maxpool2_forward(a, t.p1);
  a = nn::conv_forward(p[kC2W], p[kC2b].col(0), a, c.conv2.kernel, c.conv2.stride, t.c2);
  nn::relu_forward(a, t.m2);
  a = nn::maxpool2_forward(a, t.p2);
  const Eigen::Index nf = a.data.size();
  t.flat.resize(nf + c.n_scalar);
  t.flat.head(nf) = Eigen::Map<const Eigen::VectorXd>(a.data.data(), nf);
  t.flat.tail(c.n_scalar) = scalars;
  t.h = nn::dense_forward(p[kFcW], p[kFcb].col(0), t.flat);
  nn::relu_forward(t.h, t.m3);
  return nn::dense_forward(p[kOutW], p[kOutb].col(0), t.h);
}

void policy_backward(const PolicyNet & net, const PolicyTrace & t, const Eigen::VectorXd & dout, nn::ParamSet & g)
{
  const auto & c = net.cfg;
  const auto & p = net.p;
  Eigen::VectorXd dh = nn::dense_backward(p[kOutW], t.h, dout, g[kOutW], g[kOutb].col(0));
  nn::relu_backward(dh, t.m3);
  const Eigen::VectorXd dflat = nn::dense_backward(p[kFcW], t.flat, dh, g[kFcW], g[kFcb].col(0));
  const int s3 = side_after(c, 3);
  nn::Feature d;
  d.c = c.conv2.filters;
  d.h = s3;
  d.w = s3;
  d.data = Eigen::Map<const nn::Mat>(dflat.data(), d.c, static_cast<Eigen::Index>(s3) * s3);
  d = nn::maxpool2_backward(d, t.p2);
  nn::relu_backward(d, t.m2);
  nn::Feature d1;
  nn::conv_backward(p[kC2W], t.c2, d, c.conv2.kernel, c.conv2.stride, g[kC2W], g[kC2b].col(0), &d1);
  d1 = nn::maxpool2_backward(d1, t.p1);
  nn::relu_backward(d1, t.m1);
  nn::conv_backward(p[kC1W], t.c1, d1, c.conv1.kernel, c.conv1.stride, g[kC1W], g[kC1b].col(0), nullptr);
}

nn::Checkpoint policy_checkpoint(const PolicyNet & net, const std::string & tag)
{
  nn::Checkpoint ck;
  ck.tag = tag;
  ck.architecture = net.cfg.to_json();
  ck.tensors = net.p.tensors();
  return ck;
}

PolicyNet policy_from_checkpoint(const nn::Checkpoint & ck, const std::string & tag)
{
  if (ck.tag != tag) throw std::runtime_error("checkpoint tag '" + ck.tag + "' where '" + tag + "' was expected");
  PolicyNet net = init_policy_net(PolicyNetConfig::from_json(ck.architecture), 0);
  nn::load_tensors(net.p, ck.tensors);
  return net;
}

void save_policy_net(const std::string & path, const PolicyNet & net, const std::string & tag)
{
  nn::write_checkpoint(path, policy_checkpoint(net, tag));
}

PolicyNet load_policy_net(const std::string & path, const std::string & tag)
{
  return policy_from_checkpoint(nn::read_checkpoint(path), tag);
}

Eigen::VectorXd command_scalars(const ControlInput & cmd, const VehicleParams & vehicle)
{
  Eigen::VectorXd s(2);
  s << cmd.v_cmd / vehicle.v_max, cmd.delta_cmd / vehicle.delta_max;
  return s;
}

// ---------------------------------------------------------------------------
// End2End

void BcConfig::validate() const
{
  net.validate();
  if (net.n_out != kBcCommands) throw std::invalid_argument("bc: the classifier needs 4 outputs");
  if (net.frames != view.frames || net.side != view.side) throw std::invalid_argument("bc: view and net shapes differ");
  if (epochs < 0 || batch_size <= 0 || !(lr > 0.0) || l2_lambda < 0.0) throw std::invalid_argument("bc: bad optimiser settings");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw std::invalid_argument("bc: val_fraction must be in [0, 1)");
  if (!(label_threshold >= 0.0)) throw std::invalid_argument("bc: label_threshold must be >= 0");
  if (label_horizon < 1) throw std::invalid_argument("bc: label_horizon must be >= 1");
}

BcCommand bc_label(const ControlInput & prev, const ControlInput & next, double threshold)
{
  const double dd = next.delta_cmd - prev.delta_cmd;
  if (std::abs(dd) > threshold) return dd < 0.0 ? BcCommand::left : BcCommand::right;
  return next.v_cmd - prev.v_cmd < 0.0 ? BcCommand::decelerate : BcCommand::accelerate;
}

nn::Feature BcEpisode::input(size_t k, const ViewConfig & view) const
{
  std::vector<const std::vector<float> *> h;
  h.reserve(k + 1);
  for (size_t i = 0; i <= k; ++i) h.push_back(&views[i]);
  return stack_frames(h, view);
}

BcEpisode make_bc_episode(const AugmentedMemory & episode, const VehicleParams & vehicle, const BcConfig & cfg)
{
  BcEpisode out;
  const auto recs = episode.records();
  for (const auto & r : recs) {
    if (!r.grid) throw std::invalid_argument("bc: record without a grid");
    out.views.push_back(ego_view(*r.grid, r.ego_state, cfg.view));
  }
  const size_t h = static_cast<size_t>(cfg.label_horizon);
  for (size_t k = 0; k + h < recs.size(); ++k) {
    out.scalars.push_back(command_scalars(recs[k].control, vehicle));
    out.labels.push_back(static_cast<int>(bc_label(recs[k].control, recs[k + h].control, cfg.label_threshold)));
  }
  return out;
}

double bc_accuracy(const PolicyNet & net, const std::vector<BcEpisode> & episodes, const ViewConfig & view)
{
  size_t hit = 0, total = 0;
  for (const auto & ep : episodes) {
    for (size_t k = 0; k < ep.size(); ++k) {
      const Eigen::VectorXd out = policy_forward(net, ep.input(k, view), ep.scalars[k]);
      hit += argmax_tiebreak(out, nullptr) == ep.labels[k];
      ++total;
    }
  }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

BcModel train_bc(const Dataset & data, const VehicleParams & vehicle, const BcConfig & cfg)
{
  cfg.validate();
  if (data.episodes.empty()) throw std::invalid_argument("bc: empty dataset");
  std::vector<BcEpisode> eps;
  for (const auto & e : data.episodes) eps.push_back(make_bc_episode(*e, vehicle, cfg));
  size_t n_val = static_cast<size_t>(std::ceil(cfg.val_fraction * static_cast<double>(eps.size())));
  if (n_val >= eps.size()) n_val = eps.size() - 1;
  const std::vector<BcEpisode> train(eps.begin(), eps.end() - static_cast<long>(n_val));
  const std::vector<BcEpisode> val(eps.end() - static_cast<long>(n_val), eps.end());

  BcModel m;
  m.net = init_policy_net(cfg.net, cfg.seed);
  std::vector<std::pair<size_t, size_t>> index;
  for (size_t e = 0; e < train.size(); ++e) {
    for (size_t k = 0; k < train[e].size(); ++k) {
      index.emplace_back(e, k);
      ++m.label_counts[static_cast<size_t>(train[e].labels[k])];
    }
  }
  if (index.empty()) throw std::invalid_argument("bc: no training samples");
  nn::AdamState adam = nn::make_adam_state(m.net.p);
  std::mt19937_64 rng(mix_seed(cfg.seed, 0xbcULL));
  PolicyTrace tr;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(index.begin(), index.end(), rng);
    double loss_sum = 0.0;
    for (size_t b0 = 0; b0 < index.size(); b0 += static_cast<size_t>(cfg.batch_size)) {
      const size_t b1 = std::min(index.size(), b0 + static_cast<size_t>(cfg.batch_size));
      nn::ParamSet g = m.net.p.zeros_like();
      for (size_t i = b0; i < b1; ++i) {
        const auto & ep = train[index[i].first];
        const size_t k = index[i].second;
        const Eigen::VectorXd z = policy_forward(m.net, ep.input(k, cfg.view), ep.scalars[k], &tr);
        const double zmax = z.maxCoeff();
        Eigen::VectorXd pr = (z.array() - zmax).exp();
        const double sum = pr.sum();
        pr /= sum;
        const int y = ep.labels[k];
        loss_sum += -(z[y] - zmax - std::log(sum));
        Eigen::VectorXd dz = pr;
        dz[y] -= 1.0;
        dz /= static_cast<double>(b1 - b0);
        policy_backward(m.net, tr, dz, g);
      }
      nn::adam_step(m.net.p, g, adam, cfg.lr, cfg.l2_lambda);
    }
    m.train_loss.push_back(loss_sum / static_cast<double>(index.size()));
    if (!std::isfinite(m.train_loss.back())) throw std::runtime_error("bc: non-finite loss in epoch " + std::to_string(epoch));
  }
  m.train_accuracy = bc_accuracy(m.net, train, cfg.view);
  m.val_accuracy = val.empty() ? 0.0 : bc_accuracy(m.net, val, cfg.view);
  return m;
}

End2EndController::End2EndController(PolicyNet net, BcConfig cfg, std::string name)
: net_(std::move(net)), cfg_(std::move(cfg)), name_(std::move(name))
{
}

void End2EndController::reset(const Scenario & scenario, std::uint64_t seed)
{
  sc_ = &scenario;
  cmd_.reset();
  frames_.clear();
  rng_.seed(mix_seed(seed, 0xe2eULL));
}

namespace {

nn::Feature push_and_stack(std::deque<std::vector<float>> & frames, std::vector<float> view, const ViewConfig & cfg)
{
  frames.push_back(std::move(view));
  const size_t keep = static_cast<size_t>(cfg.gap) * static_cast<size_t>(cfg.frames - 1) + 1;
  while (frames.size() > keep) frames.pop_front();
  std::vector<const std::vector<float> *> h;
  for (const auto & f : frames) h.push_back(&f);
  return stack_frames(h, cfg);
}

}  // namespace

ControlResult End2EndController::act(const Observation & obs)
{
  const VehicleParams & vp = sc_->config.vehicle;
  if (!cmd_) cmd_ = obs.last_u;
  const nn::Feature x = push_and_stack(frames_, ego_view(*obs.grid, obs.observed, cfg_.view), cfg_.view);
  const Eigen::VectorXd z = policy_forward(net_, x, command_scalars(*cmd_, vp));
  const int c = argmax_tiebreak(z, &rng_);
  cmd_ = apply_command(*cmd_, static_cast<BcCommand>(c), cfg_.increments, vp);
  ControlResult r;
  r.u = *cmd_;
  r.log = {{"command", to_string(static_cast<BcCommand>(c))}};
  return r;
}

// ---------------------------------------------------------------------------
// DQN

void DqnConfig::validate() const
{
  net.validate();
  if (net.n_out != kDiscreteActions) throw std::invalid_argument("dqn: the Q head needs 8 outputs");
  if (net.frames != view.frames || net.side != view.side) throw std::invalid_argument("dqn: view and net shapes differ");
  if (episodes < 0 || max_steps < 0 || batch_size <= 0 || replay_capacity == 0) {
    throw std::invalid_argument("dqn: bad loop sizes");
  }
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("dqn: gamma must be in [0, 1)");
  if (!(lr > 0.0) || l2_lambda < 0.0) throw std::invalid_argument("dqn: bad optimiser settings");
  if (!(eps_end >= 0.0 && eps_end <= eps_start && eps_start <= 1.0) || !(eps_decay > 0.0 && eps_decay <= 1.0)) {
    throw std::invalid_argument("dqn: bad exploration schedule");
  }
  if (warmup < batch_size || train_every <= 0 || target_sync <= 0) throw std::invalid_argument("dqn: bad update schedule");
  if (reward.progress < 0.0 || reward.velocity < 0.0 || reward.clearance < 0.0 ||
      !(reward.progress + reward.velocity + reward.clearance > 0.0)) {
    throw std::invalid_argument("dqn: reward weights must be >= 0 with a positive sum");
  }
}

DqnConfig DqnConfig::reference()
{
  DqnConfig c;
  c.replay_capacity = 1000000;
  c.lr = 25e-7;
  return c;
}

double dqn_reward(const WorldState & before, const WorldState & after, const std::vector<RayHit> & rays_after,
                  const DqnConfig & cfg, double dt)
{
  if (after.crashed) return -1.0;
  const VehicleParams & vp = after.scenario->config.vehicle;
  if (after.ego_speed < cfg.stall_speed_fraction * vp.v_max) return -1.0;
  const double max_range = after.scenario->config.max_range;
  const double progress = std::clamp((route_progress(after) - route_progress(before)) / (vp.v_max * dt), -1.0, 1.0);
  const double velocity = std::clamp(after.ego_speed / vp.v_max, 0.0, 1.0);
  double clear = max_range;
  for (const auto & r : rays_after) clear = std::min(clear, r.distance);
  const double clearance = 2.0 * std::clamp(clear / max_range, 0.0, 1.0) - 1.0;
  const auto & w = cfg.reward;
  const double r = (w.progress * progress + w.velocity * velocity + w.clearance * clearance) /
                   (w.progress + w.velocity + w.clearance);
  return std::clamp(r, -1.0, 1.0);
}

namespace {

struct Transition {
  std::array<std::uint64_t, 8> frames{};  // 4 for s, 4 for s'; frame ids
  Eigen::Vector2d scal, scal2;
  int action = 0;
  double reward = 0.0;
  bool done = false;
};

class Replay {
public:
  Replay(size_t capacity, size_t stack_span, size_t px) : cap_(capacity), fcap_(capacity + stack_span + 2), px_(px) {}

  std::uint64_t add_frame(const std::vector<float> & v)
  {
    std::vector<std::int8_t> q(px_);
    for (size_t i = 0; i < px_; ++i) {
      q[i] = static_cast<std::int8_t>(std::clamp(std::lround(v[i] * 127.0f), -127L, 127L));
    }
    const std::uint64_t id = next_frame_++;
    if (frames_.size() < fcap_) {
      frames_.push_back(std::move(q));
    } else {
      frames_[id % fcap_] = std::move(q);
    }
    return id;
  }

  void add(const Transition & t)
  {
    if (data_.size() < cap_) {
      data_.push_back(t);
    } else {
      data_[head_] = t;
      head_ = (head_ + 1) % cap_;
    }
  }

  size_t size() const { return data_.size(); }
  const Transition & operator[](size_t i) const { return data_[i]; }

  nn::Feature stack(const std::uint64_t * ids, const ViewConfig & cfg) const
  {
    nn::Feature x;
    x.c = cfg.frames;
    x.h = cfg.side;
    x.w = cfg.side;
    x.data.resize(cfg.frames, static_cast<Eigen::Index>(px_));
    for (int f = 0; f < cfg.frames; ++f) {
      const auto & q = frames_[ids[f] % fcap_];
      for (size_t i = 0; i < px_; ++i) x.data(f, static_cast<Eigen::Index>(i)) = q[i] / 127.0;
    }
    return x;
  }

  void write_snapshot(const std::string & path) const
  {
    std::ofstream os(path, std::ios::binary);
    if (!os) return;
    const std::uint64_t n = data_.size();
    os.write("SNRP", 4);
    os.write(reinterpret_cast<const char *>(&n), sizeof n);
    for (const auto & t : data_) {
      os.write(reinterpret_cast<const char *>(t.frames.data()), sizeof(std::uint64_t) * t.frames.size());
      os.write(reinterpret_cast<const char *>(&t.action), sizeof t.action);
      os.write(reinterpret_cast<const char *>(&t.reward), sizeof t.reward);
      const std::uint8_t d = t.done;
      os.write(reinterpret_cast<const char *>(&d), 1);
    }
  }

private:
  size_t cap_, fcap_, px_;
  size_t head_ = 0;
  std::uint64_t next_frame_ = 0;
  std::vector<Transition> data_;
  std::vector<std::vector<std::int8_t>> frames_;
};

void stack_ids(const std::vector<std::uint64_t> & ep_frames, const ViewConfig & cfg, std::uint64_t * out)
{
  const long long last = static_cast<long long>(ep_frames.size()) - 1;
  for (int f = 0; f < cfg.frames; ++f) {
    out[f] = ep_frames[static_cast<size_t>(std::max(0LL, last - static_cast<long long>(f) * cfg.gap))];
  }
}

}  // namespace

DqnModel dqn_train(const ScenarioConfig & scenario_cfg, const SimSettings & sim, const DqnConfig & cfg,
                   const std::function<void(const DqnEpisodeStats &)> & sink)
{
  cfg.validate();
  if (cfg.net.n_scalar != 2) throw std::invalid_argument("dqn: the Q net takes the two command scalars");
  auto scenario = make_scenario(scenario_cfg);
  const VehicleParams & vp = scenario_cfg.vehicle;
  const size_t px = static_cast<size_t>(cfg.view.side) * cfg.view.side;
  Replay replay(cfg.replay_capacity, static_cast<size_t>(cfg.view.gap) * cfg.view.frames, px);

  DqnModel model;
  model.net = init_policy_net(cfg.net, cfg.seed);
  PolicyNet target = model.net;
  nn::AdamState adam = nn::make_adam_state(model.net.p);
  std::mt19937_64 rng(mix_seed(cfg.seed, 0xd9aULL));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_int_distribution<int> any_action(0, kDiscreteActions - 1);
  double eps = cfg.eps_start;
  long long env_steps = 0;
  PolicyTrace tr;

  auto train_step = [&]() {
    std::uniform_int_distribution<size_t> pick(0, replay.size() - 1);
    nn::ParamSet g = model.net.p.zeros_like();
    double loss = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const Transition & t = replay[pick(rng)];
      double y = t.reward;
      if (!t.done) {
        const Eigen::VectorXd q2 = policy_forward(target, replay.stack(t.frames.data() + 4, cfg.view), t.scal2);
        y += cfg.gamma * q2.maxCoeff();
      }
      const Eigen::VectorXd q = policy_forward(model.net, replay.stack(t.frames.data(), cfg.view), t.scal, &tr);
      const double e = q[t.action] - y;
      const double ae = std::abs(e);
      loss += ae <= cfg.huber_delta ? 0.5 * e * e : cfg.huber_delta * (ae - 0.5 * cfg.huber_delta);
      Eigen::VectorXd dq = Eigen::VectorXd::Zero(kDiscreteActions);
      dq[t.action] = std::clamp(e, -cfg.huber_delta, cfg.huber_delta) / cfg.batch_size;
      policy_backward(model.net, tr, dq, g);
    }
    loss /= cfg.batch_size;
    if (!std::isfinite(loss) || !g.all_finite()) {
      if (!cfg.snapshot_path.empty()) replay.write_snapshot(cfg.snapshot_path);
      throw DqnDiverged("dqn: divergent loss after " + std::to_string(model.updates) + " updates");
    }
    nn::adam_step(model.net.p, g, adam, cfg.lr, cfg.l2_lambda);
    ++model.updates;
    if (model.updates % cfg.target_sync == 0) target = model.net;
    return loss;
  };

  for (int e = 0; e < cfg.episodes; ++e) {
    SimSession ses(scenario, sim, mix_seed(cfg.seed, static_cast<std::uint64_t>(e) + 1));
    std::vector<std::uint64_t> ep_frames;
    std::optional<ControlInput> cmd;
    std::optional<Transition> pending;
    DqnEpisodeStats st;
    st.episode = e;
    st.epsilon = eps;
    double loss_sum = 0.0;
    int n_loss = 0;
    while (true) {
      const Observation obs = ses.sense();
      if (!cmd) cmd = obs.last_u;
      ep_frames.push_back(replay.add_frame(ego_view(*obs.grid, obs.observed, cfg.view)));
      std::uint64_t ids[4];
      stack_ids(ep_frames, cfg.view, ids);
      const Eigen::Vector2d scal = command_scalars(*cmd, vp);
      if (pending) {
        std::copy(ids, ids + 4, pending->frames.begin() + 4);
        pending->scal2 = scal;
        replay.add(*pending);
        pending.reset();
      }
      int a;
      if (unif(rng) < eps) {
        a = any_action(rng);
      } else {
        nn::Feature x = replay.stack(ids, cfg.view);
        a = argmax_tiebreak(policy_forward(model.net, x, scal), &rng);
      }
      const WorldState before = ses.world();
      cmd = apply_action(*cmd, static_cast<DiscreteAction>(a), cfg.increments, vp);
      bool done = ses.advance(*cmd);
      const auto rays = cast_rays(ses.world(), scenario_cfg.fov_deg, scenario_cfg.n_rays, scenario_cfg.max_range);
      const double r = dqn_reward(before, ses.world(), rays, cfg, sim.dt);
      ++st.steps;
      ++env_steps;
      st.ret += r;
      if (cfg.max_steps > 0 && st.steps >= cfg.max_steps) done = true;
      Transition t;
      std::copy(ids, ids + 4, t.frames.begin());
      t.scal = scal;
      t.action = a;
      t.reward = r;
      if (done) {
        std::copy(ids, ids + 4, t.frames.begin() + 4);
        t.scal2 = scal;
        t.done = true;
        replay.add(t);
      } else {
        pending = t;
      }
      if (replay.size() >= static_cast<size_t>(cfg.warmup) && env_steps % cfg.train_every == 0) {
        loss_sum += train_step();
        ++n_loss;
      }
      if (done) break;
    }
    st.crashed = ses.crashed();
    st.reached = ses.reached();
    st.mean_loss = n_loss ? loss_sum / n_loss : 0.0;
    model.history.push_back(st);
    if (sink) sink(st);
    eps = std::max(cfg.eps_end, eps * cfg.eps_decay);
  }
  return model;
}

std::vector<double> sample_random_rewards(const ScenarioConfig & scenario_cfg, const SimSettings & sim,
                                          const DqnConfig & cfg, size_t transitions, std::uint64_t seed)
{
  auto scenario = make_scenario(scenario_cfg);
  const VehicleParams & vp = scenario_cfg.vehicle;
  const double limit = sim.time_limit > 0.0 ? sim.time_limit : scenario_cfg.episode_time_limit;
  std::mt19937_64 rng(mix_seed(seed, 0x5a3dULL));
  std::uniform_int_distribution<int> any_action(0, kDiscreteActions - 1);
  std::vector<double> out;
  out.reserve(transitions);
  while (out.size() < transitions) {
    WorldState w = build_scenario(scenario);
    ControlInput cmd{w.ego_speed, w.ego_delta};
    while (out.size() < transitions) {
      cmd = apply_action(cmd, static_cast<DiscreteAction>(any_action(rng)), cfg.increments, vp);
      WorldState next = step_world(w, cmd, sim.dt);
      const auto rays = cast_rays(next, scenario_cfg.fov_deg, scenario_cfg.n_rays, scenario_cfg.max_range);
      out.push_back(dqn_reward(w, next, rays, cfg, sim.dt));
      w = std::move(next);
      if (w.crashed || reached_goal(w) || w.time >= limit - 1e-9) break;
    }
  }
  return out;
}

DqnController::DqnController(PolicyNet net, DqnConfig cfg, double epsilon, std::string name)
: net_(std::move(net)), cfg_(std::move(cfg)), epsilon_(epsilon), name_(std::move(name))
{
}

void DqnController::reset(const Scenario & scenario, std::uint64_t seed)
{
  sc_ = &scenario;
  cmd_.reset();
  frames_.clear();
  rng_.seed(mix_seed(seed, 0xd9cULL));
}

ControlResult DqnController::act(const Observation & obs)
{
  const VehicleParams & vp = sc_->config.vehicle;
  if (!cmd_) cmd_ = obs.last_u;
  // frames go through the same 8-bit round trip as the replay memory
  std::vector<float> v = ego_view(*obs.grid, obs.observed, cfg_.view);
  for (float & x : v) x = static_cast<float>(std::clamp(std::lround(x * 127.0f), -127L, 127L) / 127.0);
  const nn::Feature x = push_and_stack(frames_, std::move(v), cfg_.view);
  int a;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (epsilon_ > 0.0 && unif(rng_) < epsilon_) {
    a = std::uniform_int_distribution<int>(0, kDiscreteActions - 1)(rng_);
  } else {
    a = argmax_tiebreak(policy_forward(net_, x, command_scalars(*cmd_, vp)), &rng_);
  }
  cmd_ = apply_action(*cmd_, static_cast<DiscreteAction>(a), cfg_.increments, vp);
  ControlResult r;
  r.u = *cmd_;
  r.log = {{"action", to_string(static_cast<DiscreteAction>(a))}};
  return r;
}

}  // namespace scenenmpc
