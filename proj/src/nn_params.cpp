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

#include "scenenmpc/nn/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace scenenmpc::nn {

size_t ParamSet::add(const std::string & name, Eigen::Index rows, Eigen::Index cols)
{
  tensors_.push_back({name, Mat::Zero(rows, cols)});
  return tensors_.size() - 1;
}

ParamSet ParamSet::zeros_like() const
{
  ParamSet out;
  for (const auto & t : tensors_) out.add(t.name, t.value.rows(), t.value.cols());
  return out;
}

void ParamSet::set_zero()
{
  for (auto & t : tensors_) t.value.setZero();
}

size_t ParamSet::count() const
{
  size_t n = 0;
  for (const auto & t : tensors_) n += static_cast<size_t>(t.value.size());
  return n;
}

bool ParamSet::all_finite() const
{
  for (const auto & t : tensors_) {
    if (!t.value.allFinite()) return false;
  }
  return true;
}

bool ParamSet::same_shape(const ParamSet & o) const
{
  if (o.size() != size()) return false;
  for (size_t i = 0; i < size(); ++i) {
    if (tensors_[i].value.rows() != o[i].rows() || tensors_[i].value.cols() != o[i].cols()) return false;
  }
  return true;
}

void ParamSet::add_scaled(const ParamSet & o, double k)
{
  for (size_t i = 0; i < size(); ++i) tensors_[i].value += k * o[i];
}

double ParamSet::squared_norm() const
{
  double s = 0.0;
  for (const auto & t : tensors_) s += t.value.squaredNorm();
  return s;
}

AdamState make_adam_state(const ParamSet & params)
{
  AdamState s;
  s.m = params.zeros_like();
  s.v = params.zeros_like();
  return s;
}

void adam_step(ParamSet & params, const ParamSet & grads, AdamState & st, double lr, double l2_lambda)
{
  if (!params.same_shape(grads) || !params.same_shape(st.m) || !params.same_shape(st.v)) {
    throw std::invalid_argument("adam_step: shape mismatch");
  }
  st.t += 1;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
  for (size_t k = 0; k < params.size(); ++k) {
    Mat & p = params[k];
    Mat & m = st.m[k];
    Mat & v = st.v[k];
    const Mat & g0 = grads[k];
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const double g = g0.data()[i] + l2_lambda * p.data()[i];
      m.data()[i] = st.beta1 * m.data()[i] + (1.0 - st.beta1) * g;
      v.data()[i] = st.beta2 * v.data()[i] + (1.0 - st.beta2) * g * g;
      const double mh = m.data()[i] / bc1;
      const double vh = v.data()[i] / bc2;
      p.data()[i] -= lr * mh / (std::sqrt(vh) + st.eps);
    }
  }
}

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put(std::vector<std::uint8_t> & out, T v)
{
  std::uint8_t b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  out.insert(out.end(), b, b + sizeof(T));
}

void put_str(std::vector<std::uint8_t> & out, const std::string & s)
{
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

struct Reader {
  const std::vector<std::uint8_t> & b;
  size_t off = 0;
  template <typename T>
  T get()
  {
    if (off + sizeof(T) > b.size()) throw std::runtime_error("checkpoint: truncated file");
    T v;
    std::memcpy(&v, b.data() + off, sizeof(T));
    off += sizeof(T);
    return v;
  }
  std::string str()
  {
    const auto n = get<std::uint32_t>();
    if (off + n > b.size()) throw std::runtime_error("checkpoint: truncated string");
    std::string s(reinterpret_cast<const char *>(b.data() + off), n);
    off += n;
    return s;
  }
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint & ck)
{
  std::vector<std::uint8_t> out{'S', 'N', 'C', 'K'};
  put<std::uint32_t>(out, kCheckpointVersion);
  put_str(out, ck.tag);
  put_str(out, ck.architecture.dump());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto & t : ck.tensors) {
    put_str(out, t.name);
    put<std::int64_t>(out, t.value.rows());
    put<std::int64_t>(out, t.value.cols());
    for (Eigen::Index i = 0; i < t.value.rows(); ++i) {
      for (Eigen::Index j = 0; j < t.value.cols(); ++j) put<double>(out, t.value(i, j));
    }
  }
  return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t> & bytes)
{
  if (bytes.size() < 8 || std::memcmp(bytes.data(), "SNCK", 4) != 0) throw std::runtime_error("checkpoint: bad magic");
  Reader r{bytes, 4};
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.tag = r.str();
  ck.architecture = nlohmann::json::parse(r.str());
  const auto n = r.get<std::uint32_t>();
  for (std::uint32_t k = 0; k < n; ++k) {
    NamedTensor t;
    t.name = r.str();
    const auto rows = r.get<std::int64_t>();
    const auto cols = r.get<std::int64_t>();
    if (rows < 0 || cols < 0) throw std::runtime_error("checkpoint: negative tensor dims");
    t.value.resize(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) t.value(i, j) = r.get<double>();
    }
    ck.tensors.push_back(std::move(t));
  }
  if (r.off != bytes.size()) throw std::runtime_error("checkpoint: trailing bytes");
  return ck;
}

void write_checkpoint(const std::string & path, const Checkpoint & ck)
{
  const auto bytes = encode_checkpoint(ck);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot write " + path);
    f.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw std::runtime_error("checkpoint: rename failed for " + path);
}

Checkpoint read_checkpoint(const std::string & path)
{
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

void load_tensors(ParamSet & params, const std::vector<NamedTensor> & tensors, const std::string & prefix)
{
  for (size_t i = 0; i < params.size(); ++i) {
    const std::string want = prefix + params.name(i);
    const NamedTensor * found = nullptr;
    for (const auto & t : tensors) {
      if (t.name == want) {
        found = &t;
        break;
      }
    }
    if (!found) throw std::runtime_error("checkpoint: missing tensor '" + want + "'");
    if (found->value.rows() != params[i].rows() || found->value.cols() != params[i].cols()) {
      throw std::runtime_error(
        "checkpoint: tensor '" + want + "' has shape " + std::to_string(found->value.rows()) + "x" +
        std::to_string(found->value.cols()) + ", expected " + std::to_string(params[i].rows()) + "x" +
        std::to_string(params[i].cols()));
    }
    params[i] = found->value;
  }
}

std::vector<NamedTensor> prefixed(const ParamSet & params, const std::string & prefix)
{
  std::vector<NamedTensor> out;
  for (const auto & t : params.tensors()) out.push_back({prefix + t.name, t.value});
  return out;
}

}  // namespace scenenmpc::nn
