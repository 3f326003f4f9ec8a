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

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "scenenmpc/gradcheck.hpp"
#include "scenenmpc/nn/layers.hpp"
#include "scenenmpc/nn/params.hpp"

using namespace scenenmpc;
using nn::Mat;
using nn::Vec;

TEST(NnLayers, GradientChecksPass)
{
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    for (const auto & r : gradcheck_all(seed)) {
      EXPECT_TRUE(r.ok) << r.name << " seed " << seed << " max rel " << r.max_rel_error;
      EXPECT_GT(r.checked, 0) << r.name;
      EXPECT_LT(r.max_rel_error, 1e-4) << r.name;
    }
  }
}

TEST(NnLayers, ConvHandComputed)
{
  nn::Feature x;
  x.c = 1;
  x.h = 3;
  x.w = 3;
  x.data.resize(1, 9);
  for (int k = 0; k < 9; ++k) x.data(0, k) = k + 1;
  Mat W(1, 4);
  W << 1, 0, 0, -1;
  Vec b(1);
  b << 0.5;
  nn::ConvCache c;
  const auto y = nn::conv_forward(W, b, x, 2, 1, c);
  ASSERT_EQ(y.h, 2);
  for (int k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(y.data(0, k), -4 + 0.5);
  EXPECT_THROW(nn::conv_forward(W, b, x, 4, 1, c), std::invalid_argument);
}

TEST(NnLayers, LinearReductionGradientIsOuterProduct)
{
  Mat W = Mat::Random(3, 4);
  Vec x = Vec::Random(4), dy = Vec::Random(3);
  Mat dW = Mat::Zero(3, 4);
  Vec db = Vec::Zero(3);
  nn::dense_backward(W, x, dy, dW, db);
  EXPECT_TRUE(dW.isApprox(dy * x.transpose(), 0.0));
  EXPECT_TRUE(db.isApprox(dy, 0.0));
}

TEST(NnLayers, MaxPoolTieTakesFirst)
{
  nn::Feature x;
  x.c = 1;
  x.h = x.w = 2;
  x.data = Mat::Constant(1, 4, 0.7);
  nn::PoolCache pc;
  nn::maxpool2_forward(x, pc);
  EXPECT_EQ(pc.argmax[0], 0);
}

TEST(NnLayers, OrthogonalInit)
{
  std::mt19937_64 rng(1);
  Mat U(4 * 5, 5);
  nn::init_orthogonal_blocks(U, 5, rng);
  for (int b = 0; b < 4; ++b) {
    const Mat q = U.block(5 * b, 0, 5, 5);
    EXPECT_TRUE((q.transpose() * q).isApprox(Mat::Identity(5, 5), 1e-12));
  }
}

TEST(NnParams, AdamHandRecursion)
{
  nn::ParamSet p;
  p.add("w", 1, 1);
  p[0](0, 0) = 1.0;
  auto st = nn::make_adam_state(p);
  nn::ParamSet g = p.zeros_like();
  const double gs[3] = {0.5, -1.0, 2.0};
  // independent recursion
  double th = 1.0, m = 0.0, v = 0.0;
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int t = 1; t <= 3; ++t) {
    g[0](0, 0) = gs[t - 1];
    nn::adam_step(p, g, st, lr, 0.0);
    m = b1 * m + (1 - b1) * gs[t - 1];
    v = b2 * v + (1 - b2) * gs[t - 1] * gs[t - 1];
    th -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
    EXPECT_NEAR(p[0](0, 0), th, 1e-15);
  }
  // frozen value from the same recursion
  EXPECT_NEAR(p[0](0, 0), 0.98946447927181047, 1e-12);
}

TEST(NnParams, AdamZeroGradientAndDecay)
{
  nn::ParamSet p;
  p.add("w", 2, 2);
  p[0] << 1.0, -2.0, 0.5, 3.0;
  const Mat before = p[0];
  auto st = nn::make_adam_state(p);
  nn::ParamSet g = p.zeros_like();
  nn::adam_step(p, g, st, 0.01, 0.0);
  EXPECT_EQ(p[0], before);
  Mat prev = p[0].cwiseAbs();
  for (int k = 0; k < 10; ++k) {
    nn::adam_step(p, g, st, 0.01, 1e-2);
    const Mat now = p[0].cwiseAbs();
    EXPECT_TRUE((now.array() < prev.array()).all());
    prev = now;
  }
}

TEST(NnParams, CheckpointRoundTripAndValidation)
{
  nn::Checkpoint ck;
  ck.tag = "unit";
  ck.architecture = {{"a", 1}};
  ck.tensors.push_back({"x", Mat::Random(3, 2)});
  const auto bytes = nn::encode_checkpoint(ck);
  const auto back = nn::decode_checkpoint(bytes);
  EXPECT_EQ(back.tag, "unit");
  EXPECT_EQ(back.architecture, ck.architecture);
  EXPECT_EQ(back.tensors[0].value, ck.tensors[0].value);
  nn::ParamSet p;
  p.add("x", 3, 2);
  nn::load_tensors(p, back.tensors);
  EXPECT_EQ(p[0], ck.tensors[0].value);
  nn::ParamSet q;
  q.add("x", 2, 3);
  EXPECT_THROW(nn::load_tensors(q, back.tensors), std::runtime_error);
  auto bad = bytes;
  bad.resize(bad.size() - 3);
  EXPECT_THROW(nn::decode_checkpoint(bad), std::runtime_error);
}
