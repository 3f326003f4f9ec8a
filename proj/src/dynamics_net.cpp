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

#include "scenenmpc/dynamics_net.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace scenenmpc {

using nn::Feature;
using nn::Mat;
using nn::Vec;

int NetConfig::conv1_side() const { return nn::conv_out(input_side(), conv1.kernel, conv1.stride); }
int NetConfig::pool1_side() const { return conv1_side() / 2; }
int NetConfig::conv2_side() const { return nn::conv_out(pool1_side(), conv2.kernel, conv2.stride); }
int NetConfig::pool2_side() const { return conv2_side() / 2; }
int NetConfig::conv_features() const { return conv2.filters * pool2_side() * pool2_side(); }
int NetConfig::embedding() const { return frames * conv_features() + state_hidden + ref_hidden + 2; }

void NetConfig::validate() const
{
  auto fail = [](const std::string & m) { throw std::invalid_argument("network config: " + m); };
  if (grid_cells <= 0 || downsample <= 0 || grid_cells % downsample != 0) fail("downsample must divide grid_cells");
  if (frames < 1) fail("frames must be >= 1");
  if (tau_o < 1) fail("tau_o must be >= 1");
  if (conv1.filters < 1 || conv1.kernel < 1 || conv1.stride < 1) fail("bad conv1");
  if (conv2.filters < 1 || conv2.kernel < 1 || conv2.stride < 1) fail("bad conv2");
  if (conv1_side() < 2) fail("conv1 output too small for pooling (input " + std::to_string(input_side()) + ")");
  if (conv2_side() < 2) fail("conv2 output too small for pooling");
  if (state_hidden < 1 || ref_hidden < 1 || fc1 < 1 || fc2 < 1 || branch_hidden < 1) fail("widths must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) fail("dropout must be in [0, 1)");
  if (!(dt_o > 0.0)) fail("dt_o must be > 0");
}

nlohmann::json NetConfig::to_json() const
{
  return {{"grid_cells", grid_cells},
          {"downsample", downsample},
          {"frames", frames},
          {"tau_o", tau_o},
          {"conv1", {conv1.filters, conv1.kernel, conv1.stride}},
          {"conv2", {conv2.filters, conv2.kernel, conv2.stride}},
          {"state_hidden", state_hidden},
          {"ref_hidden", ref_hidden},
          {"fc1", fc1},
          {"fc2", fc2},
          {"branch_hidden", branch_hidden},
          {"dropout", dropout},
          {"dt_o", dt_o},
          {"pos_scale", pos_scale},
          {"speed_scale", speed_scale},
          {"head_init", head_init},
          {"vehicle",
           {{"wheelbase_L", vehicle.wheelbase_L},
            {"delta_max", vehicle.delta_max},
            {"v_min", vehicle.v_min},
            {"v_max", vehicle.v_max},
            {"accel_max", vehicle.accel_max},
            {"state_noise_sigma", vehicle.state_noise_sigma},
            {"length", vehicle.length},
            {"width", vehicle.width}}}};
}

NetConfig NetConfig::from_json(const nlohmann::json & j)
{
  NetConfig c;
  c.grid_cells = j.at("grid_cells");
  c.downsample = j.at("downsample");
  c.frames = j.at("frames");
  c.tau_o = j.at("tau_o");
  c.conv1 = {j.at("conv1")[0], j.at("conv1")[1], j.at("conv1")[2]};
  c.conv2 = {j.at("conv2")[0], j.at("conv2")[1], j.at("conv2")[2]};
  c.state_hidden = j.at("state_hidden");
  c.ref_hidden = j.at("ref_hidden");
  c.fc1 = j.at("fc1");
  c.fc2 = j.at("fc2");
  c.branch_hidden = j.at("branch_hidden");
  c.dropout = j.at("dropout");
  c.dt_o = j.at("dt_o");
  c.pos_scale = j.at("pos_scale");
  c.speed_scale = j.at("speed_scale");
  c.head_init = j.at("head_init");
  const auto & v = j.at("vehicle");
  c.vehicle.wheelbase_L = v.at("wheelbase_L");
  c.vehicle.delta_max = v.at("delta_max");
  c.vehicle.v_min = v.at("v_min");
  c.vehicle.v_max = v.at("v_max");
  c.vehicle.accel_max = v.at("accel_max");
  c.vehicle.state_noise_sigma = v.at("state_noise_sigma");
  c.vehicle.length = v.at("length");
  c.vehicle.width = v.at("width");
  return c;
}

NetworkParams make_network(const NetConfig & cfg)
{
  cfg.validate();
  NetworkParams n;
  n.cfg = cfg;
  auto & p = n.p;
  auto & ix = n.idx;
  const int k1 = cfg.conv1.kernel, k2 = cfg.conv2.kernel;
  ix.conv1_W = p.add("conv1.W", cfg.conv1.filters, k1 * k1);
  ix.conv1_b = p.add("conv1.b", cfg.conv1.filters, 1);
  ix.conv2_W = p.add("conv2.W", cfg.conv2.filters, cfg.conv1.filters * k2 * k2);
  ix.conv2_b = p.add("conv2.b", cfg.conv2.filters, 1);
  ix.st_W = p.add("state_lstm.W", 4 * cfg.state_hidden, 3);
  ix.st_U = p.add("state_lstm.U", 4 * cfg.state_hidden, cfg.state_hidden);
  ix.st_b = p.add("state_lstm.b", 4 * cfg.state_hidden, 1);
  ix.ref_W = p.add("ref_lstm.W", 4 * cfg.ref_hidden, 3);
  ix.ref_U = p.add("ref_lstm.U", 4 * cfg.ref_hidden, cfg.ref_hidden);
  ix.ref_b = p.add("ref_lstm.b", 4 * cfg.ref_hidden, 1);
  ix.fc1_W = p.add("fc1.W", cfg.fc1, cfg.embedding());
  ix.fc1_b = p.add("fc1.b", cfg.fc1, 1);
  ix.fc2_W = p.add("fc2.W", cfg.fc2, cfg.fc1);
  ix.fc2_b = p.add("fc2.b", cfg.fc2, 1);
  for (int i = 0; i < cfg.tau_o; ++i) {
    const std::string b = "branch" + std::to_string(i);
    ix.br_W.push_back(p.add(b + ".W", 4 * cfg.branch_hidden, cfg.fc2));
    ix.br_U.push_back(p.add(b + ".U", 4 * cfg.branch_hidden, cfg.branch_hidden));
    ix.br_b.push_back(p.add(b + ".b", 4 * cfg.branch_hidden, 1));
    ix.head_W.push_back(p.add("head" + std::to_string(i) + ".W", 2, cfg.branch_hidden));
    ix.head_b.push_back(p.add("head" + std::to_string(i) + ".b", 2, 1));
  }
  return n;
}

namespace {

void init_lstm(Mat & W, Mat & U, Mat & b, int hidden, std::mt19937_64 & rng)
{
  nn::init_uniform(W, 0.1, rng);
  nn::init_orthogonal_blocks(U, hidden, rng);
  b.setZero();
  b.block(hidden, 0, hidden, 1).setConstant(1.0);
}

std::uint64_t next_generation()
{
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1);
}

}  // namespace

void touch(NetworkParams & params) { params.generation = next_generation(); }

NetworkParams init_network(const NetConfig & cfg, std::uint64_t seed)
{
  NetworkParams n = make_network(cfg);
  std::mt19937_64 rng(seed);
  auto & p = n.p;
  const auto & ix = n.idx;
  nn::init_he_uniform(p[ix.conv1_W], cfg.conv1.kernel * cfg.conv1.kernel, rng);
  nn::init_he_uniform(p[ix.conv2_W], cfg.conv1.filters * cfg.conv2.kernel * cfg.conv2.kernel, rng);
  init_lstm(p[ix.st_W], p[ix.st_U], p[ix.st_b], cfg.state_hidden, rng);
  init_lstm(p[ix.ref_W], p[ix.ref_U], p[ix.ref_b], cfg.ref_hidden, rng);
  nn::init_he_uniform(p[ix.fc1_W], cfg.embedding(), rng);
  nn::init_he_uniform(p[ix.fc2_W], cfg.fc1, rng);
  for (int i = 0; i < cfg.tau_o; ++i) {
    init_lstm(p[ix.br_W[i]], p[ix.br_U[i]], p[ix.br_b[i]], cfg.branch_hidden, rng);
    nn::init_uniform(p[ix.head_W[i]], cfg.head_init, rng);
  }
  touch(n);
  return n;
}

namespace {

Vec ego_frame(const VehicleState & z, const VehicleState & ref, double scale)
{
  const double c = std::cos(ref.rho), s = std::sin(ref.rho);
  const double dx = z.x - ref.x, dy = z.y - ref.y;
  Vec v(3);
  v << (c * dx + s * dy) * scale, (-s * dx + c * dy) * scale, angle_diff(z.rho, ref.rho);
  return v;
}

}  // namespace

NetInput make_input(
  const NetConfig & cfg, const JointState & s, const std::vector<VehicleState> & reference_window,
  const ControlInput & u_now)
{
  if (static_cast<int>(s.size()) != cfg.frames) {
    throw std::invalid_argument(
      "network input: window has " + std::to_string(s.size()) + " slots, network expects " +
      std::to_string(cfg.frames));
  }
  if (reference_window.empty()) throw std::invalid_argument("network input: empty reference window");
  NetInput in;
  in.z_now = s.latest();
  in.u_now = u_now;
  const int side = cfg.input_side();
  for (const auto & g : s.grids) {
    if (!g) throw std::invalid_argument("network input: window slot without a grid");
    if (g->rows != cfg.grid_cells || g->cols != cfg.grid_cells) {
      throw std::invalid_argument(
        "network input: grid is " + std::to_string(g->rows) + "x" + std::to_string(g->cols) + ", conv1 expects " +
        std::to_string(cfg.grid_cells) + "x" + std::to_string(cfg.grid_cells));
    }
    const ObservationTensor obs = to_observation(*g, cfg.downsample);
    Feature f;
    f.c = 1;
    f.h = f.w = side;
    f.data = Eigen::Map<const Mat>(obs.data.data(), 1, static_cast<Eigen::Index>(obs.data.size()));
    in.frames.push_back(std::move(f));
  }
  for (const auto & z : s.states) in.states.push_back(ego_frame(z, in.z_now, cfg.pos_scale));
  for (const auto & r : reference_window) in.refs.push_back(ego_frame(r, in.z_now, cfg.pos_scale));
  in.u.resize(2);
  in.u << u_now.v_cmd * cfg.speed_scale, u_now.delta_cmd;
  return in;
}

SetPointTrajectory rollout(
  const VehicleState & z_now, const ControlInput & u_now, const std::vector<DynamicsCompensation> & comps,
  const VehicleParams & vehicle, double dt)
{
  SetPointTrajectory out;
  out.reserve(comps.size());
  VehicleState z = z_now;
  for (const auto & h : comps) {
    z = step_combined(z, u_now, h, vehicle, dt);
    out.push_back(z);
  }
  return out;
}

ForwardResult forward(
  const NetworkParams & params, const JointState & s, const std::vector<VehicleState> & reference_window,
  const ControlInput & u_now)
{
  return forward(params, make_input(params.cfg, s, reference_window, u_now), false, nullptr);
}

ForwardResult forward(const NetworkParams & params, const NetInput & input, bool training, std::mt19937_64 * rng)
{
  const NetConfig & cfg = params.cfg;
  const auto & P = params.p;
  const auto & ix = params.idx;
  if (static_cast<int>(input.frames.size()) != cfg.frames) {
    throw std::invalid_argument("forward: conv input has wrong frame count");
  }
  if (training && cfg.dropout > 0.0 && !rng) throw std::invalid_argument("forward: training needs an rng");

  ForwardResult res;
  ForwardTrace & tr = res.trace;
  tr.generation = params.generation;
  tr.input = input;

  const int nf = cfg.conv_features();
  Vec embed(cfg.embedding());
  tr.frames.resize(input.frames.size());
  for (size_t f = 0; f < input.frames.size(); ++f) {
    auto & fr = tr.frames[f];
    if (input.frames[f].h != cfg.input_side() || input.frames[f].w != cfg.input_side()) {
      throw std::invalid_argument("forward: conv1 input has wrong spatial size");
    }
    Feature a = nn::conv_forward(P[ix.conv1_W], P[ix.conv1_b].col(0), input.frames[f], cfg.conv1.kernel,
                                 cfg.conv1.stride, fr.c1);
    nn::relu_forward(a, fr.r1);
    a = nn::maxpool2_forward(a, fr.p1);
    a = nn::conv_forward(P[ix.conv2_W], P[ix.conv2_b].col(0), a, cfg.conv2.kernel, cfg.conv2.stride, fr.c2);
    nn::relu_forward(a, fr.r2);
    fr.out = nn::maxpool2_forward(a, fr.p2);
    // channel-major flatten
    for (int c = 0; c < fr.out.c; ++c) {
      for (int q = 0; q < fr.out.h * fr.out.w; ++q) {
        embed[static_cast<Eigen::Index>(f) * nf + c * fr.out.h * fr.out.w + q] = fr.out.data(c, q);
      }
    }
  }
  Eigen::Index off = static_cast<Eigen::Index>(input.frames.size()) * nf;
  tr.st_steps = nn::lstm_forward(P[ix.st_W], P[ix.st_U], P[ix.st_b].col(0), input.states);
  embed.segment(off, cfg.state_hidden) = tr.st_steps.back().h;
  off += cfg.state_hidden;
  tr.ref_steps = nn::lstm_forward(P[ix.ref_W], P[ix.ref_U], P[ix.ref_b].col(0), input.refs);
  embed.segment(off, cfg.ref_hidden) = tr.ref_steps.back().h;
  off += cfg.ref_hidden;
  embed.segment(off, 2) = input.u;
  tr.embed = embed;

  std::mt19937_64 dummy(0);
  std::mt19937_64 & r = rng ? *rng : dummy;
  tr.h1 = nn::dense_forward(P[ix.fc1_W], P[ix.fc1_b].col(0), embed);
  nn::relu_forward(tr.h1, tr.m1);
  nn::dropout_forward(tr.h1, cfg.dropout, training, r, tr.d1);
  tr.h2 = nn::dense_forward(P[ix.fc2_W], P[ix.fc2_b].col(0), tr.h1);
  nn::relu_forward(tr.h2, tr.m2);
  nn::dropout_forward(tr.h2, cfg.dropout, training, r, tr.d2);

  tr.branch_steps.resize(static_cast<size_t>(cfg.tau_o));
  tr.comps.resize(static_cast<size_t>(cfg.tau_o));
  for (int i = 0; i < cfg.tau_o; ++i) {
    const std::vector<Vec> xs(static_cast<size_t>(i + 1), tr.h2);
    tr.branch_steps[i] = nn::lstm_forward(P[ix.br_W[i]], P[ix.br_U[i]], P[ix.br_b[i]].col(0), xs);
    const Vec out = nn::dense_forward(P[ix.head_W[i]], P[ix.head_b[i]].col(0), tr.branch_steps[i].back().h);
    tr.comps[i] = {out[0], out[1]};
  }
  tr.z_d = rollout(input.z_now, input.u_now, tr.comps, cfg.vehicle, cfg.dt_o);
  res.comps = tr.comps;
  res.z_d = tr.z_d;
  return res;
}

std::vector<std::array<double, 2>> rollout_backward(
  const VehicleState & z_now, const ControlInput & u_now, const std::vector<DynamicsCompensation> & comps,
  const SetPointTrajectory & z_d, const VehicleParams & vehicle, double dt, const OutputGradient & grad)
{
  const size_t T = comps.size();
  if (z_d.size() != T) throw std::invalid_argument("rollout adjoint: trajectory/compensation length mismatch");
  if (!grad.dz.empty() && grad.dz.size() != T) throw std::invalid_argument("rollout adjoint: dz has wrong length");
  if (!grad.dcomp.empty() && grad.dcomp.size() != T) {
    throw std::invalid_argument("rollout adjoint: dcomp has wrong length");
  }
  std::vector<std::array<double, 2>> dh(T, {0.0, 0.0});
  double lam[3] = {0.0, 0.0, 0.0};
  for (size_t k = T; k-- > 0;) {
    if (!grad.dz.empty()) {
      for (int d = 0; d < 3; ++d) lam[d] += grad.dz[k][d];
    }
    const VehicleState & zk = k == 0 ? z_now : z_d[k - 1];
    const StepJacobian J = step_combined_jacobian(zk, u_now, comps[k], vehicle, dt);
    for (int c = 0; c < 2; ++c) {
      double acc = grad.dcomp.empty() ? 0.0 : grad.dcomp[k][c];
      for (int d = 0; d < 3; ++d) acc += J.dh[d][c] * lam[d];
      dh[k][c] = acc;
    }
    double nl[3];
    for (int c = 0; c < 3; ++c) {
      nl[c] = 0.0;
      for (int d = 0; d < 3; ++d) nl[c] += J.dz[d][c] * lam[d];
    }
    std::memcpy(lam, nl, sizeof(lam));
  }
  return dh;
}

nn::ParamSet backward(const NetworkParams & params, ForwardTrace & trace, const OutputGradient & grad)
{
  nn::ParamSet g = params.p.zeros_like();
  backward_accumulate(params, trace, grad, g);
  return g;
}

void backward_accumulate(
  const NetworkParams & params, ForwardTrace & tr, const OutputGradient & grad, nn::ParamSet & G)
{
  if (tr.generation != params.generation) {
    throw std::logic_error("backward: trace was produced by a different parameter generation");
  }
  if (!tr.consumed || *tr.consumed) throw std::logic_error("backward: trace already consumed");
  if (!G.same_shape(params.p)) throw std::invalid_argument("backward: gradient set shape mismatch");
  *tr.consumed = true;

  const NetConfig & cfg = params.cfg;
  const auto & P = params.p;
  const auto & ix = params.idx;
  const size_t T = static_cast<size_t>(cfg.tau_o);
  if (!grad.dz.empty() && grad.dz.size() != T) throw std::invalid_argument("backward: dz has wrong length");
  if (!grad.dcomp.empty() && grad.dcomp.size() != T) throw std::invalid_argument("backward: dcomp has wrong length");

  const auto dh = rollout_backward(tr.input.z_now, tr.input.u_now, tr.comps, tr.z_d, cfg.vehicle, cfg.dt_o, grad);

  // branches and heads
  Vec dh2 = Vec::Zero(cfg.fc2);
  for (size_t i = 0; i < T; ++i) {
    Vec dout(2);
    dout << dh[i][0], dh[i][1];
    const Vec dhl = nn::dense_backward(
      P[ix.head_W[i]], tr.branch_steps[i].back().h, dout, G[ix.head_W[i]], G[ix.head_b[i]].col(0));
    std::vector<Vec> dseq(tr.branch_steps[i].size());
    dseq.back() = dhl;
    const auto dxs = nn::lstm_backward(
      P[ix.br_W[i]], P[ix.br_U[i]], tr.branch_steps[i], dseq, G[ix.br_W[i]], G[ix.br_U[i]], G[ix.br_b[i]].col(0));
    for (const auto & dx : dxs) dh2 += dx;
  }

  nn::dropout_backward(dh2, tr.d2);
  nn::relu_backward(dh2, tr.m2);
  Vec dh1 = nn::dense_backward(P[ix.fc2_W], tr.h1, dh2, G[ix.fc2_W], G[ix.fc2_b].col(0));
  nn::dropout_backward(dh1, tr.d1);
  nn::relu_backward(dh1, tr.m1);
  const Vec de = nn::dense_backward(P[ix.fc1_W], tr.embed, dh1, G[ix.fc1_W], G[ix.fc1_b].col(0));

  const int nf = cfg.conv_features();
  Eigen::Index off = static_cast<Eigen::Index>(tr.frames.size()) * nf;
  {
    std::vector<Vec> dseq(tr.st_steps.size());
    dseq.back() = de.segment(off, cfg.state_hidden);
    nn::lstm_backward(P[ix.st_W], P[ix.st_U], tr.st_steps, dseq, G[ix.st_W], G[ix.st_U], G[ix.st_b].col(0));
    off += cfg.state_hidden;
  }
  {
    std::vector<Vec> dseq(tr.ref_steps.size());
    dseq.back() = de.segment(off, cfg.ref_hidden);
    nn::lstm_backward(P[ix.ref_W], P[ix.ref_U], tr.ref_steps, dseq, G[ix.ref_W], G[ix.ref_U], G[ix.ref_b].col(0));
  }

  for (size_t f = 0; f < tr.frames.size(); ++f) {
    auto & fr = tr.frames[f];
    Feature d;
    d.c = fr.out.c;
    d.h = fr.out.h;
    d.w = fr.out.w;
    d.data.resize(d.c, d.h * d.w);
    for (int c = 0; c < d.c; ++c) {
      for (int q = 0; q < d.h * d.w; ++q) d.data(c, q) = de[static_cast<Eigen::Index>(f) * nf + c * d.h * d.w + q];
    }
    if (d.data.isZero(0.0)) continue;
    Feature a = nn::maxpool2_backward(d, fr.p2);
    nn::relu_backward(a, fr.r2);
    Feature dx;
    nn::conv_backward(P[ix.conv2_W], fr.c2, a, cfg.conv2.kernel, cfg.conv2.stride, G[ix.conv2_W], G[ix.conv2_b].col(0),
                      &dx);
    a = nn::maxpool2_backward(dx, fr.p1);
    nn::relu_backward(a, fr.r1);
    nn::conv_backward(P[ix.conv1_W], fr.c1, a, cfg.conv1.kernel, cfg.conv1.stride, G[ix.conv1_W], G[ix.conv1_b].col(0),
                      nullptr);
  }
}

void adam_step(NetworkParams & params, const nn::ParamSet & grads, nn::AdamState & state, double lr, double l2_lambda)
{
  nn::adam_step(params.p, grads, state, lr, l2_lambda);
  touch(params);
}

namespace {

struct Fnv {
  std::uint64_t h = 1469598103934665603ULL;
  void feed(const void * p, size_t n)
  {
    const auto * b = static_cast<const unsigned char *>(p);
    for (size_t k = 0; k < n; ++k) {
      h ^= b[k];
      h *= 1099511628211ULL;
    }
  }
  template <typename T>
  void vec(const std::vector<T> & v)
  {
    const std::uint64_t n = v.size();
    feed(&n, sizeof(n));
    if (!v.empty()) feed(v.data(), v.size() * sizeof(T));
  }
};

}  // namespace

std::uint64_t activation_signature(const ForwardTrace & tr)
{
  Fnv f;
  for (const auto & fr : tr.frames) {
    f.vec(fr.r1);
    f.vec(fr.r2);
    f.vec(fr.p1.argmax);
    f.vec(fr.p2.argmax);
  }
  f.vec(tr.m1);
  f.vec(tr.m2);
  return f.h;
}

std::uint64_t output_checksum(const ForwardResult & r)
{
  Fnv f;
  for (const auto & c : r.comps) {
    f.feed(&c.h_v, sizeof(double));
    f.feed(&c.h_delta, sizeof(double));
  }
  for (const auto & z : r.z_d) {
    f.feed(&z.x, sizeof(double));
    f.feed(&z.y, sizeof(double));
    f.feed(&z.rho, sizeof(double));
  }
  return f.h;
}

nn::Checkpoint network_checkpoint(const NetworkParams & params, const std::string & tag)
{
  nn::Checkpoint ck;
  ck.tag = tag;
  ck.architecture = params.cfg.to_json();
  ck.tensors = params.p.tensors();
  return ck;
}

NetworkParams network_from_checkpoint(const nn::Checkpoint & ck, const std::string & tag)
{
  if (ck.tag != tag) throw std::runtime_error("checkpoint: manifest tag '" + ck.tag + "', expected '" + tag + "'");
  NetworkParams n = make_network(NetConfig::from_json(ck.architecture));
  nn::load_tensors(n.p, ck.tensors);
  touch(n);
  return n;
}

void save_network(const std::string & path, const NetworkParams & params, const std::string & tag)
{
  nn::write_checkpoint(path, network_checkpoint(params, tag));
}

NetworkParams load_network(const std::string & path, const std::string & tag)
{
  return network_from_checkpoint(nn::read_checkpoint(path), tag);
}

}  // namespace scenenmpc
