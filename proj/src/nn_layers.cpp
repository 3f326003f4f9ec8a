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

#include "scenenmpc/nn/layers.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace scenenmpc::nn {

int conv_out(int in, int k, int stride) { return in < k ? 0 : (in - k) / stride + 1; }

Feature conv_forward(const Mat & W, const Eigen::Ref<const Vec> & b, const Feature & x, int k, int stride, ConvCache & cache)
{
  const int ho = conv_out(x.h, k, stride);
  const int wo = conv_out(x.w, k, stride);
  if (ho <= 0 || wo <= 0) {
    throw std::invalid_argument(
      "conv: input " + std::to_string(x.h) + "x" + std::to_string(x.w) + " smaller than kernel " + std::to_string(k));
  }
  if (W.cols() != x.c * k * k) throw std::invalid_argument("conv: weight/input channel mismatch");
  cache.in_c = x.c;
  cache.in_h = x.h;
  cache.in_w = x.w;
  cache.ho = ho;
  cache.wo = wo;
  cache.col.resize(x.c * k * k, ho * wo);
  for (int c = 0; c < x.c; ++c) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const int row = (c * k + ki) * k + kj;
        for (int oi = 0; oi < ho; ++oi) {
          const int base = (oi * stride + ki) * x.w + kj;
          for (int oj = 0; oj < wo; ++oj) cache.col(row, oi * wo + oj) = x.data(c, base + oj * stride);
        }
      }
    }
  }
  Feature y;
  y.c = static_cast<int>(W.rows());
  y.h = ho;
  y.w = wo;
  y.data.noalias() = W * cache.col;
  y.data.colwise() += b;
  return y;
}

void conv_backward(
  const Mat & W, const ConvCache & cache, const Feature & dy, int k, int stride, Mat & dW, Eigen::Ref<Vec> db, Feature * dx)
{
  dW.noalias() += dy.data * cache.col.transpose();
  db += dy.data.rowwise().sum();
  if (!dx) return;
  const Mat dcol = W.transpose() * dy.data;
  dx->c = cache.in_c;
  dx->h = cache.in_h;
  dx->w = cache.in_w;
  dx->data = Mat::Zero(cache.in_c, cache.in_h * cache.in_w);
  for (int c = 0; c < cache.in_c; ++c) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const int row = (c * k + ki) * k + kj;
        for (int oi = 0; oi < cache.ho; ++oi) {
          const int base = (oi * stride + ki) * cache.in_w + kj;
          for (int oj = 0; oj < cache.wo; ++oj) dx->data(c, base + oj * stride) += dcol(row, oi * cache.wo + oj);
        }
      }
    }
  }
}

void relu_forward(Feature & x, std::vector<std::uint8_t> & mask)
{
  mask.resize(static_cast<size_t>(x.data.size()));
  double * p = x.data.data();
  for (Eigen::Index i = 0; i < x.data.size(); ++i) {
    mask[static_cast<size_t>(i)] = p[i] > 0.0;
    if (!mask[static_cast<size_t>(i)]) p[i] = 0.0;
  }
}

void relu_backward(Feature & dy, const std::vector<std::uint8_t> & mask)
{
  double * p = dy.data.data();
  for (Eigen::Index i = 0; i < dy.data.size(); ++i) {
    if (!mask[static_cast<size_t>(i)]) p[i] = 0.0;
  }
}

void relu_forward(Vec & x, std::vector<std::uint8_t> & mask)
{
  mask.resize(static_cast<size_t>(x.size()));
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    mask[static_cast<size_t>(i)] = x[i] > 0.0;
    if (!mask[static_cast<size_t>(i)]) x[i] = 0.0;
  }
}

void relu_backward(Vec & dy, const std::vector<std::uint8_t> & mask)
{
  for (Eigen::Index i = 0; i < dy.size(); ++i) {
    if (!mask[static_cast<size_t>(i)]) dy[i] = 0.0;
  }
}

Feature maxpool2_forward(const Feature & x, PoolCache & cache)
{
  Feature y;
  y.c = x.c;
  y.h = x.h / 2;
  y.w = x.w / 2;
  if (y.h == 0 || y.w == 0) throw std::invalid_argument("maxpool: input smaller than the 2x2 window");
  cache.in_h = x.h;
  cache.in_w = x.w;
  y.data.resize(x.c, y.h * y.w);
  cache.argmax.resize(static_cast<size_t>(x.c) * y.h * y.w);
  for (int c = 0; c < x.c; ++c) {
    for (int i = 0; i < y.h; ++i) {
      for (int j = 0; j < y.w; ++j) {
        int best = (2 * i) * x.w + 2 * j;
        const int cand[3] = {best + 1, best + x.w, best + x.w + 1};
        for (int q : cand) {
          if (x.data(c, q) > x.data(c, best)) best = q;
        }
        y.data(c, i * y.w + j) = x.data(c, best);
        cache.argmax[(static_cast<size_t>(c) * y.h + i) * y.w + j] = best;
      }
    }
  }
  return y;
}

Feature maxpool2_backward(const Feature & dy, const PoolCache & cache)
{
  Feature dx;
  dx.c = dy.c;
  dx.h = cache.in_h;
  dx.w = cache.in_w;
  dx.data = Mat::Zero(dy.c, cache.in_h * cache.in_w);
  for (int c = 0; c < dy.c; ++c) {
    for (int q = 0; q < dy.h * dy.w; ++q) {
      dx.data(c, cache.argmax[static_cast<size_t>(c) * dy.h * dy.w + q]) += dy.data(c, q);
    }
  }
  return dx;
}

Vec dense_forward(const Mat & W, const Eigen::Ref<const Vec> & b, const Vec & x)
{
  if (W.cols() != x.size()) {
    throw std::invalid_argument(
      "dense: expected input of size " + std::to_string(W.cols()) + ", got " + std::to_string(x.size()));
  }
  return W * x + b;
}

Vec dense_backward(const Mat & W, const Vec & x, const Vec & dy, Mat & dW, Eigen::Ref<Vec> db)
{
  dW.noalias() += dy * x.transpose();
  db += dy;
  return W.transpose() * dy;
}

void dropout_forward(Vec & x, double rate, bool training, std::mt19937_64 & rng, std::vector<double> & scale)
{
  scale.clear();
  if (!training || rate <= 0.0) return;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  scale.resize(static_cast<size_t>(x.size()));
  const double keep = 1.0 - rate;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    scale[static_cast<size_t>(i)] = u(rng) < keep ? 1.0 / keep : 0.0;
    x[i] *= scale[static_cast<size_t>(i)];
  }
}

void dropout_backward(Vec & dy, const std::vector<double> & scale)
{
  if (scale.empty()) return;
  for (Eigen::Index i = 0; i < dy.size(); ++i) dy[i] *= scale[static_cast<size_t>(i)];
}

namespace {

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

std::vector<LstmStep> lstm_forward(const Mat & W, const Mat & U, const Eigen::Ref<const Vec> & b, const std::vector<Vec> & xs)
{
  const Eigen::Index H = U.cols();
  std::vector<LstmStep> steps;
  steps.reserve(xs.size());
  Vec h = Vec::Zero(H);
  Vec c = Vec::Zero(H);
  for (const auto & x : xs) {
    if (x.size() != W.cols()) {
      throw std::invalid_argument(
        "lstm: expected input of size " + std::to_string(W.cols()) + ", got " + std::to_string(x.size()));
    }
    LstmStep s;
    s.x = x;
    s.h_prev = h;
    s.c_prev = c;
    const Vec a = W * x + U * h + b;
    s.i = a.segment(0, H).unaryExpr([](double v) { return sigmoid(v); });
    s.f = a.segment(H, H).unaryExpr([](double v) { return sigmoid(v); });
    s.g = a.segment(2 * H, H).array().tanh();
    s.o = a.segment(3 * H, H).unaryExpr([](double v) { return sigmoid(v); });
    s.c = s.f.cwiseProduct(c) + s.i.cwiseProduct(s.g);
    s.h = s.o.cwiseProduct(s.c.array().tanh().matrix());
    h = s.h;
    c = s.c;
    steps.push_back(std::move(s));
  }
  return steps;
}

std::vector<Vec> lstm_backward(
  const Mat & W, const Mat & U, const std::vector<LstmStep> & steps, const std::vector<Vec> & dh, Mat & dW, Mat & dU,
  Eigen::Ref<Vec> db)
{
  const Eigen::Index H = U.cols();
  std::vector<Vec> dxs(steps.size());
  Vec dh_next = Vec::Zero(H);
  Vec dc_next = Vec::Zero(H);
  Vec da(4 * H);
  for (size_t t = steps.size(); t-- > 0;) {
    const LstmStep & s = steps[t];
    Vec dht = dh_next;
    if (t < dh.size() && dh[t].size() == H) dht += dh[t];
    const Vec tc = s.c.array().tanh();
    const Vec dc = dc_next + dht.cwiseProduct(s.o).cwiseProduct((1.0 - tc.array().square()).matrix());
    const Vec d_o = dht.cwiseProduct(tc);
    const Vec d_i = dc.cwiseProduct(s.g);
    const Vec d_g = dc.cwiseProduct(s.i);
    const Vec d_f = dc.cwiseProduct(s.c_prev);
    da.segment(0, H) = d_i.cwiseProduct(s.i).cwiseProduct((1.0 - s.i.array()).matrix());
    da.segment(H, H) = d_f.cwiseProduct(s.f).cwiseProduct((1.0 - s.f.array()).matrix());
    da.segment(2 * H, H) = d_g.cwiseProduct((1.0 - s.g.array().square()).matrix());
    da.segment(3 * H, H) = d_o.cwiseProduct(s.o).cwiseProduct((1.0 - s.o.array()).matrix());
    dW.noalias() += da * s.x.transpose();
    dU.noalias() += da * s.h_prev.transpose();
    db += da;
    dxs[t] = W.transpose() * da;
    dh_next = U.transpose() * da;
    dc_next = dc.cwiseProduct(s.f);
  }
  return dxs;
}

void init_uniform(Mat & m, double limit, std::mt19937_64 & rng)
{
  std::uniform_real_distribution<double> u(-limit, limit);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = u(rng);
  }
}

void init_he_uniform(Mat & m, int fan_in, std::mt19937_64 & rng)
{
  init_uniform(m, std::sqrt(6.0 / std::max(1, fan_in)), rng);
}

void init_orthogonal_blocks(Mat & U, int hidden, std::mt19937_64 & rng)
{
  std::normal_distribution<double> n(0.0, 1.0);
  for (int blk = 0; blk < 4; ++blk) {
    Mat a(hidden, hidden);
    for (int i = 0; i < hidden; ++i) {
      for (int j = 0; j < hidden; ++j) a(i, j) = n(rng);
    }
    Eigen::HouseholderQR<Mat> qr(a);
    Mat q = qr.householderQ() * Mat::Identity(hidden, hidden);
    // sign fix makes the decomposition unique
    const Mat r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int j = 0; j < hidden; ++j) {
      if (r(j, j) < 0.0) q.col(j) = -q.col(j);
    }
    U.block(blk * hidden, 0, hidden, hidden) = q;
  }
}

}  // namespace scenenmpc::nn
