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

#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace scenenmpc::nn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Channel-major feature map: row c holds channel c, columns are h*w pixels
// in row-major order.
struct Feature {
  int c = 0;
  int h = 0;
  int w = 0;
  Mat data;
};

int conv_out(int in, int k, int stride);

// Convolution (no padding) with im2col; the cache keeps the column matrix.
struct ConvCache {
  Mat col;
  int in_c = 0, in_h = 0, in_w = 0;
  int ho = 0, wo = 0;
};

// W: filters x (in_c * k * k), b: filters
Feature conv_forward(const Mat & W, const Eigen::Ref<const Vec> & b, const Feature & x, int k, int stride, ConvCache & cache);
// Accumulates into dW, db; writes dx when non-null.
void conv_backward(
  const Mat & W, const ConvCache & cache, const Feature & dy, int k, int stride, Mat & dW, Eigen::Ref<Vec> db, Feature * dx);

// In place; the mask keeps the active units.
void relu_forward(Feature & x, std::vector<std::uint8_t> & mask);
void relu_backward(Feature & dy, const std::vector<std::uint8_t> & mask);
void relu_forward(Vec & x, std::vector<std::uint8_t> & mask);
void relu_backward(Vec & dy, const std::vector<std::uint8_t> & mask);

// 2x2 max pooling, stride 2, trailing odd row/column dropped. Ties take the
// first element in scan order.
struct PoolCache {
  int in_h = 0, in_w = 0;
  std::vector<int> argmax;
};
Feature maxpool2_forward(const Feature & x, PoolCache & cache);
Feature maxpool2_backward(const Feature & dy, const PoolCache & cache);

Vec dense_forward(const Mat & W, const Eigen::Ref<const Vec> & b, const Vec & x);
// Accumulates parameter gradients and returns dx.
Vec dense_backward(const Mat & W, const Vec & x, const Vec & dy, Mat & dW, Eigen::Ref<Vec> db);

// Inverted dropout; rate 0 or inference leaves x untouched.
void dropout_forward(Vec & x, double rate, bool training, std::mt19937_64 & rng, std::vector<double> & scale);
void dropout_backward(Vec & dy, const std::vector<double> & scale);

// LSTM, gate order (i, f, g, o): W is 4H x D, U is 4H x H, b is 4H.
struct LstmStep {
  Vec x, h_prev, c_prev;
  Vec i, f, g, o;
  Vec c, h;
};

std::vector<LstmStep> lstm_forward(const Mat & W, const Mat & U, const Eigen::Ref<const Vec> & b, const std::vector<Vec> & xs);
// dh[t] is the loss gradient flowing into h_t from outside the recurrence
// (empty vectors or zeros where none). Returns dL/dx_t.
std::vector<Vec> lstm_backward(
  const Mat & W, const Mat & U, const std::vector<LstmStep> & steps, const std::vector<Vec> & dh, Mat & dW, Mat & dU,
  Eigen::Ref<Vec> db);

// Initializers
void init_uniform(Mat & m, double limit, std::mt19937_64 & rng);
void init_he_uniform(Mat & m, int fan_in, std::mt19937_64 & rng);
// Each H x H gate block of U becomes an orthogonal matrix.
void init_orthogonal_blocks(Mat & U, int hidden, std::mt19937_64 & rng);

}  // namespace scenenmpc::nn
