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

#include "scenenmpc/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

namespace scenenmpc {

using nn::Feature;
using nn::Mat;
using nn::Vec;

namespace {

struct Probe {
  std::function<double()> loss;
  std::function<std::uint64_t()> signature;  // may be empty for smooth functions
};

double rel_error(double a, double n, const GradCheckOptions & opt)
{
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), opt.abs_floor});
}

// Perturbs every entry of m in place and compares with analytic g.
void check_tensor(Mat & m, const Mat & g, const Probe & p, const GradCheckOptions & opt, GradCheckResult & res)
{
  const std::uint64_t base = p.signature ? p.signature() : 0;
  const double f0 = p.loss();
  for (Eigen::Index k = 0; k < m.size(); ++k) {
    double & x = m.data()[k];
    const double keep = x;
    x = keep + opt.eps;
    const double fp = p.loss();
    const bool sp = !p.signature || p.signature() == base;
    x = keep - opt.eps;
    const double fm = p.loss();
    const bool sm = !p.signature || p.signature() == base;
    x = keep;
    double num;
    if (sp && sm) {
      num = (fp - fm) / (2 * opt.eps);
    } else if (sp) {
      num = (fp - f0) / opt.eps;
      ++res.one_sided;
    } else if (sm) {
      num = (f0 - fm) / opt.eps;
      ++res.one_sided;
    } else {
      ++res.skipped;
      continue;
    }
    // one-sided differences carry O(eps) truncation error
    const double tol = (sp && sm) ? opt.tolerance : std::max(opt.tolerance, 1e-3);
    const double e = rel_error(g.data()[k], num, opt);
    if (sp && sm) res.max_rel_error = std::max(res.max_rel_error, e);
    if (e > tol) res.ok = false;
    ++res.checked;
  }
}

void check_vec(Vec & v, const Vec & g, const Probe & p, const GradCheckOptions & opt, GradCheckResult & res)
{
  Mat m = v;
  Probe q{[&] {
            v = m;
            return p.loss();
          },
          p.signature ? std::function<std::uint64_t()>([&] {
            v = m;
            return p.signature();
          })
                      : std::function<std::uint64_t()>()};
  check_tensor(m, g, q, opt, res);
  v = m;
}

Mat random_mat(Eigen::Index r, Eigen::Index c, std::mt19937_64 & rng, double s = 1.0)
{
  std::uniform_real_distribution<double> u(-s, s);
  Mat m(r, c);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = u(rng);
  return m;
}

Feature random_feature(int c, int h, int w, std::mt19937_64 & rng)
{
  Feature f;
  f.c = c;
  f.h = h;
  f.w = w;
  f.data = random_mat(c, h * w, rng);
  return f;
}

std::uint64_t mask_hash(const std::vector<std::uint8_t> & a, const std::vector<int> & b)
{
  std::uint64_t h = 1469598103934665603ULL;
  for (auto v : a) h = (h ^ v) * 1099511628211ULL;
  for (auto v : b) h = (h ^ static_cast<std::uint64_t>(v)) * 1099511628211ULL;
  return h;
}

}  // namespace

GradCheckResult gradcheck_conv(std::uint64_t seed, const GradCheckOptions & opt)
{
  std::mt19937_64 rng(seed);
  GradCheckResult res{"conv"};
  const int k = 3, stride = 2;
  Feature x = random_feature(2, 7, 8, rng);
  Mat W = random_mat(3, 2 * k * k, rng);
  Mat b = random_mat(3, 1, rng);
  nn::ConvCache cache;
  Feature y0 = nn::conv_forward(W, b.col(0), x, k, stride, cache);
  const Mat C = random_mat(y0.data.rows(), y0.data.cols(), rng);
  auto loss = [&] {
    nn::ConvCache c;
    return (nn::conv_forward(W, b.col(0), x, k, stride, c).data.array() * C.array()).sum();
  };
  Feature dy = y0;
  dy.data = C;
  Mat dW = Mat::Zero(W.rows(), W.cols());
  Mat db = Mat::Zero(b.rows(), 1);
  Feature dx;
  nn::conv_forward(W, b.col(0), x, k, stride, cache);
  nn::conv_backward(W, cache, dy, k, stride, dW, db.col(0), &dx);
  Probe p{loss, {}};
  check_tensor(W, dW, p, opt, res);
  check_tensor(b, db, p, opt, res);
  check_tensor(x.data, dx.data, p, opt, res);
  return res;
}

GradCheckResult gradcheck_pool_relu(std::uint64_t seed, const GradCheckOptions & opt)
{
  std::mt19937_64 rng(seed);
  GradCheckResult res{"relu+maxpool"};
  Feature x = random_feature(2, 6, 7, rng);
  auto run = [&](std::vector<std::uint8_t> & mask, nn::PoolCache & pc) {
    Feature a = x;
    nn::relu_forward(a, mask);
    return nn::maxpool2_forward(a, pc);
  };
  std::vector<std::uint8_t> mask;
  nn::PoolCache pc;
  const Feature y0 = run(mask, pc);
  const Mat C = random_mat(y0.data.rows(), y0.data.cols(), rng);
  Feature dy = y0;
  dy.data = C;
  Feature dx = nn::maxpool2_backward(dy, pc);
  nn::relu_backward(dx, mask);
  Probe p{[&] {
            std::vector<std::uint8_t> m;
            nn::PoolCache c;
            return (run(m, c).data.array() * C.array()).sum();
          },
          [&] {
            std::vector<std::uint8_t> m;
            nn::PoolCache c;
            run(m, c);
            return mask_hash(m, c.argmax);
          }};
  check_tensor(x.data, dx.data, p, opt, res);
  return res;
}

GradCheckResult gradcheck_dense(std::uint64_t seed, const GradCheckOptions & opt)
{
  std::mt19937_64 rng(seed);
  GradCheckResult res{"dense"};
  Mat W = random_mat(5, 7, rng);
  Mat b = random_mat(5, 1, rng);
  Vec x = random_mat(7, 1, rng).col(0);
  const Vec c = random_mat(5, 1, rng).col(0);
  auto loss = [&] { return c.dot(nn::dense_forward(W, b.col(0), x)); };
  Mat dW = Mat::Zero(5, 7), db = Mat::Zero(5, 1);
  const Vec dx = nn::dense_backward(W, x, c, dW, db.col(0));
  Probe p{loss, {}};
  check_tensor(W, dW, p, opt, res);
  check_tensor(b, db, p, opt, res);
  check_vec(x, dx, p, opt, res);
  return res;
}

GradCheckResult gradcheck_dropout(std::uint64_t seed, const GradCheckOptions & opt)
{
  std::mt19937_64 rng(seed);
  GradCheckResult res{"dropout"};
  Vec x = random_mat(32, 1, rng).col(0);
  const Vec c = random_mat(32, 1, rng).col(0);
  const std::uint64_t mask_seed = rng();
  auto loss = [&] {
    Vec y = x;
    std::mt19937_64 r(mask_seed);
    std::vector<double> s;
    nn::dropout_forward(y, 0.25, true, r, s);
    return c.dot(y);
  };
  std::mt19937_64 r(mask_seed);
  std::vector<double> scale;
  Vec y = x;
  nn::dropout_forward(y, 0.25, true, r, scale);
  Vec dx = c;
  nn::dropout_backward(dx, scale);
  check_vec(x, dx, {loss, {}}, opt, res);
  return res;
}

GradCheckResult gradcheck_lstm(std::uint64_t seed, const GradCheckOptions & opt)
{
  std::mt19937_64 rng(seed);
  GradCheckResult res{"lstm"};
  const int D = 3, H = 4, T = 5;
  Mat W = random_mat(4 * H, D, rng, 0.5);
  Mat U = random_mat(4 * H, H, rng, 0.5);
  Mat b = random_mat(4 * H, 1, rng, 0.5);
  std::vector<Vec> xs;
  for (int t = 0; t < T; ++t) xs.push_back(random_mat(D, 1, rng).col(0));
  // loss touches every hidden state, not only the last
  std::vector<Vec> cs;
  for (int t = 0; t < T; ++t) cs.push_back(random_mat(H, 1, rng).col(0));
  auto loss = [&] {
    const auto st = nn::lstm_forward(W, U, b.col(0), xs);
    double l = 0.0;
    for (int t = 0; t < T; ++t) l += cs[t].dot(st[t].h);
    return l;
  };
  Mat dW = Mat::Zero(W.rows(), W.cols()), dU = Mat::Zero(U.rows(), U.cols()), db = Mat::Zero(b.rows(), 1);
  const auto steps = nn::lstm_forward(W, U, b.col(0), xs);
  const auto dxs = nn::lstm_backward(W, U, steps, cs, dW, dU, db.col(0));
  Probe p{loss, {}};
  check_tensor(W, dW, p, opt, res);
  check_tensor(U, dU, p, opt, res);
  check_tensor(b, db, p, opt, res);
  for (int t = 0; t < T; ++t) check_vec(xs[t], dxs[t], p, opt, res);
  return res;
}

GradCheckResult gradcheck_rollout(std::uint64_t seed, const GradCheckOptions & opt)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  GradCheckResult res{"rollout"};
  VehicleParams vp;
  const VehicleState z0{u(rng), u(rng), u(rng)};
  const ControlInput un{2.0 + u(rng), 0.3 * u(rng)};
  const int T = 6;
  Mat H = random_mat(T, 2, rng, 0.3);
  OutputGradient g;
  for (int k = 0; k < T; ++k) {
    g.dz.push_back({u(rng), u(rng), u(rng)});
    g.dcomp.push_back({u(rng), u(rng)});
  }
  auto comps_of = [&] {
    std::vector<DynamicsCompensation> c;
    for (int k = 0; k < T; ++k) c.push_back({H(k, 0), H(k, 1)});
    return c;
  };
  auto loss = [&] {
    const auto c = comps_of();
    const auto z = rollout(z0, un, c, vp, 0.071);
    double l = 0.0;
    for (int k = 0; k < T; ++k) {
      // unwrapped heading keeps the functional smooth
      double rho = z0.rho;
      for (int j = 0; j <= k; ++j) rho += angle_diff(z[j].rho, j == 0 ? z0.rho : z[j - 1].rho);
      l += g.dz[k][0] * z[k].x + g.dz[k][1] * z[k].y + g.dz[k][2] * rho;
      l += g.dcomp[k][0] * c[k].h_v + g.dcomp[k][1] * c[k].h_delta;
    }
    return l;
  };
  const auto c = comps_of();
  const auto dh = rollout_backward(z0, un, c, rollout(z0, un, c, vp, 0.071), vp, 0.071, g);
  Mat dH(T, 2);
  for (int k = 0; k < T; ++k) {
    dH(k, 0) = dh[k][0];
    dH(k, 1) = dh[k][1];
  }
  check_tensor(H, dH, {loss, {}}, opt, res);
  return res;
}

NetConfig tiny_net_config()
{
  NetConfig c;
  c.grid_cells = 16;
  c.downsample = 1;
  c.frames = 2;
  c.tau_o = 2;
  c.conv1 = {2, 3, 2};
  c.conv2 = {2, 2, 1};
  c.state_hidden = 4;
  c.ref_hidden = 4;
  c.fc1 = 6;
  c.fc2 = 5;
  c.branch_hidden = 4;
  c.dropout = 0.2;
  c.head_init = 0.5;
  return c;
}

NetInput random_input(const NetConfig & cfg, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  NetInput in;
  const int side = cfg.input_side();
  for (int f = 0; f < cfg.frames; ++f) in.frames.push_back(random_feature(1, side, side, rng));
  for (int f = 0; f < cfg.frames; ++f) in.states.push_back(random_mat(3, 1, rng).col(0));
  for (int k = 0; k <= cfg.tau_o; ++k) in.refs.push_back(random_mat(3, 1, rng).col(0));
  in.z_now = {u(rng), u(rng), u(rng)};
  in.u_now = {2.0 + u(rng), 0.3 * u(rng)};
  in.u.resize(2);
  in.u << in.u_now.v_cmd * cfg.speed_scale, in.u_now.delta_cmd;
  return in;
}

GradCheckResult gradcheck_network(const NetConfig & cfg, std::uint64_t seed, const GradCheckOptions & opt)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  GradCheckResult res{"network"};
  NetworkParams net = init_network(cfg, seed);
  // larger than the production init so every path carries signal
  for (size_t i = 0; i < net.p.size(); ++i) {
    if (net.p.name(i).rfind("head", 0) == 0) net.p[i] = random_mat(net.p[i].rows(), net.p[i].cols(), rng, 0.5);
  }
  touch(net);
  const NetInput in = random_input(cfg, seed + 1);
  const std::uint64_t drop_seed = rng();
  OutputGradient g;
  for (int k = 0; k < cfg.tau_o; ++k) {
    g.dz.push_back({u(rng), u(rng), u(rng)});
    g.dcomp.push_back({u(rng), u(rng)});
  }
  auto run = [&] {
    std::mt19937_64 r(drop_seed);
    return forward(net, in, true, &r);
  };
  auto loss_of = [&](const ForwardResult & fr) {
    double l = 0.0;
    double rho = in.z_now.rho;
    for (int k = 0; k < cfg.tau_o; ++k) {
      rho += angle_diff(fr.z_d[k].rho, k == 0 ? in.z_now.rho : fr.z_d[k - 1].rho);
      l += g.dz[k][0] * fr.z_d[k].x + g.dz[k][1] * fr.z_d[k].y + g.dz[k][2] * rho;
      l += g.dcomp[k][0] * fr.comps[k].h_v + g.dcomp[k][1] * fr.comps[k].h_delta;
    }
    return l;
  };
  ForwardResult base = run();
  const nn::ParamSet grads = backward(net, base.trace, g);
  Probe p{[&] { return loss_of(run()); }, [&] { return activation_signature(run().trace); }};
  for (size_t i = 0; i < net.p.size(); ++i) check_tensor(net.p[i], grads[i], p, opt, res);
  return res;
}

std::vector<GradCheckResult> gradcheck_all(std::uint64_t seed, const GradCheckOptions & opt)
{
  return {gradcheck_conv(seed, opt),    gradcheck_pool_relu(seed, opt), gradcheck_dense(seed, opt),
          gradcheck_dropout(seed, opt), gradcheck_lstm(seed, opt),      gradcheck_rollout(seed, opt),
          gradcheck_network(tiny_net_config(), seed, opt)};
}

}  // namespace scenenmpc
