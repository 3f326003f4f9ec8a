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
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scenenmpc/nn/layers.hpp"

namespace scenenmpc::nn {

struct NamedTensor {
  std::string name;
  Mat value;
};

// Ordered tensor collection. The same type holds parameters, gradients and
// optimizer moments, so all of them are visited in one fixed order.
class ParamSet {
public:
  size_t add(const std::string & name, Eigen::Index rows, Eigen::Index cols);
  size_t size() const { return tensors_.size(); }
  Mat & operator[](size_t i) { return tensors_[i].value; }
  const Mat & operator[](size_t i) const { return tensors_[i].value; }
  const std::string & name(size_t i) const { return tensors_[i].name; }
  const std::vector<NamedTensor> & tensors() const { return tensors_; }
  std::vector<NamedTensor> & tensors() { return tensors_; }

  ParamSet zeros_like() const;
  void set_zero();
  size_t count() const;
  bool all_finite() const;
  bool same_shape(const ParamSet & o) const;
  void add_scaled(const ParamSet & o, double k);
  double squared_norm() const;

private:
  std::vector<NamedTensor> tensors_;
};

struct AdamState {
  ParamSet m;
  ParamSet v;
  long long t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

AdamState make_adam_state(const ParamSet & params);

// theta <- theta - lr * mhat / (sqrt(vhat) + eps), with g <- g + l2 * theta.
void adam_step(ParamSet & params, const ParamSet & grads, AdamState & state, double lr, double l2_lambda);

// Checkpoint file: "SNCK" magic, u32 version, u32 tag length + tag bytes,
// u32 architecture-json length + bytes, u32 tensor count, then per tensor
// u32 name length + name, i64 rows, i64 cols, rows*cols little-endian f64
// values (row-major). Extra named sections follow the same tensor layout.
struct Checkpoint {
  std::string tag;
  nlohmann::json architecture;
  std::vector<NamedTensor> tensors;
};

void write_checkpoint(const std::string & path, const Checkpoint & ck);
Checkpoint read_checkpoint(const std::string & path);
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint & ck);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t> & bytes);

// Copies tensors into params, validating names and shapes.
void load_tensors(ParamSet & params, const std::vector<NamedTensor> & tensors, const std::string & prefix = "");
std::vector<NamedTensor> prefixed(const ParamSet & params, const std::string & prefix);

}  // namespace scenenmpc::nn
