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

#include "scenenmpc/augmented_memory.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <random>
#include <sstream>

namespace scenenmpc {

namespace {

constexpr double kTimeEps = 1e-9;

std::string span_text(double a, double b)
{
  std::ostringstream os;
  os.precision(6);
  os << std::fixed << "[" << a << ", " << b << "]";
  return os.str();
}

}  // namespace

int window_slots(const WindowQuery & q)
{
  if (q.tau_i < 0.0 || !(q.stride > 0.0)) throw std::invalid_argument("window: need tau_i >= 0 and stride > 0");
  const double r = q.tau_i / q.stride;
  if (std::abs(r - std::round(r)) > 1e-6) throw std::invalid_argument("window: tau_i / stride must be integral");
  return static_cast<int>(std::lround(r)) + 1;
}

AugmentedMemory::AugmentedMemory(size_t capacity) : capacity_(capacity)
{
  if (capacity == 0) throw std::invalid_argument("memory: capacity must be > 0");
}

AugmentedMemory::AugmentedMemory(const AugmentedMemory & o)
{
  std::shared_lock lk(o.mu_);
  capacity_ = o.capacity_;
  states_ = o.states_;
  grids_ = o.grids_;
}

AugmentedMemory & AugmentedMemory::operator=(const AugmentedMemory & o)
{
  if (this == &o) return *this;
  std::scoped_lock lk(mu_);
  std::shared_lock lo(o.mu_);
  capacity_ = o.capacity_;
  states_ = o.states_;
  grids_ = o.grids_;
  return *this;
}

void AugmentedMemory::insert(const MemoryRecord & record)
{
  std::unique_lock lk(mu_);
  if (!states_.empty() && record.timestamp <= states_.back().timestamp) {
    throw OutOfOrderInsert("memory: state record at t=" + std::to_string(record.timestamp) + " not after t=" +
                           std::to_string(states_.back().timestamp));
  }
  if (record.grid && !grids_.empty() && record.timestamp <= grids_.back().t) {
    throw OutOfOrderInsert("memory: grid record at t=" + std::to_string(record.timestamp) + " not after t=" +
                           std::to_string(grids_.back().t));
  }
  states_.push_back(record);
  if (states_.size() > capacity_) states_.pop_front();
  if (record.grid) {
    grids_.push_back({record.timestamp, record.grid});
    if (grids_.size() > capacity_) grids_.pop_front();
  }
}

void AugmentedMemory::insert_state(const MemoryRecord & record)
{
  MemoryRecord r = record;
  r.grid = nullptr;
  insert(r);
}

void AugmentedMemory::insert_grid(double timestamp, GridPtr grid)
{
  if (!grid) throw std::invalid_argument("memory: null grid");
  std::unique_lock lk(mu_);
  if (!grids_.empty() && timestamp <= grids_.back().t) {
    throw OutOfOrderInsert("memory: grid record at t=" + std::to_string(timestamp) + " not after t=" +
                           std::to_string(grids_.back().t));
  }
  grids_.push_back({timestamp, std::move(grid)});
  if (grids_.size() > capacity_) grids_.pop_front();
}

size_t AugmentedMemory::size() const
{
  std::shared_lock lk(mu_);
  return states_.size();
}

size_t AugmentedMemory::grid_count() const
{
  std::shared_lock lk(mu_);
  return grids_.size();
}

double AugmentedMemory::first_time() const
{
  std::shared_lock lk(mu_);
  if (states_.empty()) throw std::logic_error("memory: empty");
  return states_.front().timestamp;
}

double AugmentedMemory::last_time() const
{
  std::shared_lock lk(mu_);
  if (states_.empty()) throw std::logic_error("memory: empty");
  return states_.back().timestamp;
}

std::optional<MemoryRecord> AugmentedMemory::find(double timestamp) const
{
  std::shared_lock lk(mu_);
  const auto it = std::lower_bound(
    states_.begin(), states_.end(), timestamp, [](const MemoryRecord & r, double t) { return r.timestamp < t; });
  if (it == states_.end() || it->timestamp != timestamp) return std::nullopt;
  return *it;
}

MemoryRecord AugmentedMemory::at(size_t index) const
{
  std::shared_lock lk(mu_);
  return states_.at(index);
}

std::vector<MemoryRecord> AugmentedMemory::records() const
{
  std::shared_lock lk(mu_);
  return {states_.begin(), states_.end()};
}

namespace {

// Index of the first record with timestamp >= t - eps.
template <typename Deque, typename Key>
size_t lower_index(const Deque & d, double t, Key key)
{
  size_t lo = 0, hi = d.size();
  while (lo < hi) {
    const size_t mid = (lo + hi) / 2;
    if (key(d[mid]) < t - kTimeEps) {
      lo = mid + 1;
    } else {
      hi = mid;
    }
  }
  return lo;
}

VehicleState state_at_locked(const std::deque<MemoryRecord> & st, double t, bool & extrap)
{
  const size_t k = lower_index(st, t, [](const MemoryRecord & r) { return r.timestamp; });
  SyncResult info;
  VehicleState out;
  if (k < st.size() && std::abs(st[k].timestamp - t) <= kTimeEps) {
    out = st[k].ego_state;
  } else {
    // the two neighbours are all synchronize needs
    std::vector<Timestamped<VehicleState>> nb;
    if (k > 0) nb.push_back({st[k - 1].timestamp, st[k - 1].ego_state});
    if (k < st.size()) nb.push_back({st[k].timestamp, st[k].ego_state});
    out = synchronize(nb, t, &info);
  }
  extrap = extrap || info.extrapolated;
  return out;
}

}  // namespace

VehicleState AugmentedMemory::state_at(double t) const
{
  std::shared_lock lk(mu_);
  if (states_.empty()) throw InsufficientHistory("memory: empty", t, t);
  if (t < states_.front().timestamp - kTimeEps || t > states_.back().timestamp + kTimeEps) {
    const double a = std::min(t, states_.front().timestamp);
    const double b = std::max(t, states_.back().timestamp);
    throw InsufficientHistory("memory: time " + std::to_string(t) + " outside " + span_text(a, b), a, b);
  }
  bool ex = false;
  return state_at_locked(states_, t, ex);
}

JointState AugmentedMemory::window(const WindowQuery & q) const
{
  const int n = window_slots(q);
  std::shared_lock lk(mu_);
  if (states_.empty()) throw InsufficientHistory("insufficient history: memory is empty", q.t - q.tau_i, q.t);
  const double t0 = q.t - q.tau_i;
  const double have_from = states_.front().timestamp;
  const double have_to = states_.back().timestamp;
  if (t0 < have_from - kTimeEps) {
    throw InsufficientHistory(
      "insufficient history: missing span " + span_text(t0, have_from), t0, have_from);
  }
  if (q.t > have_to + kTimeEps) {
    throw InsufficientHistory("insufficient history: missing span " + span_text(have_to, q.t), have_to, q.t);
  }
  if (!grids_.empty()) {
    if (t0 < grids_.front().t - kTimeEps) {
      throw InsufficientHistory(
        "insufficient history: grid stream missing span " + span_text(t0, grids_.front().t), t0, grids_.front().t);
    }
  }

  JointState js;
  js.times.reserve(static_cast<size_t>(n));
  for (int k = 0; k < n; ++k) {
    const double tk = n == 1 ? q.t : q.t - (n - 1 - k) * q.stride;
    js.times.push_back(tk);
    js.states.push_back(state_at_locked(states_, tk, js.extrapolated));
    // zero-order hold on controls
    size_t ci = lower_index(states_, tk, [](const MemoryRecord & r) { return r.timestamp; });
    if (ci == states_.size() || std::abs(states_[ci].timestamp - tk) > kTimeEps) ci = ci == 0 ? 0 : ci - 1;
    js.controls.push_back(states_[ci].control);
    if (grids_.empty()) {
      js.grids.push_back(nullptr);
    } else {
      const size_t g = lower_index(grids_, tk, [](const Timestamped<GridPtr> & r) { return r.t; });
      if (g < grids_.size() && std::abs(grids_[g].t - tk) <= kTimeEps) {
        js.grids.push_back(grids_[g].payload);
      } else {
        std::vector<Timestamped<GridPtr>> nb;
        if (g > 0) nb.push_back(grids_[g - 1]);
        if (g < grids_.size()) nb.push_back(grids_[g]);
        SyncResult info;
        js.grids.push_back(synchronize(nb, tk, &info));
        js.extrapolated = js.extrapolated || info.extrapolated;
      }
    }
  }
  return js;
}

std::vector<double> valid_anchors(const AugmentedMemory & ep, const BatchSpec & spec)
{
  std::vector<double> out;
  if (ep.empty()) return out;
  const double first = ep.first_time();
  const double last = ep.last_time();
  const double future = spec.tau_o * spec.output_dt;
  for (const auto & r : ep.records()) {
    if (r.timestamp - spec.tau_i >= first - kTimeEps && r.timestamp + future <= last + kTimeEps) {
      out.push_back(r.timestamp);
    }
  }
  return out;
}

Sample make_sample(const Dataset & data, size_t episode, double t, const BatchSpec & spec)
{
  const AugmentedMemory & ep = *data.episodes.at(episode);
  Sample s;
  s.episode = episode;
  s.t = t;
  s.s = ep.window({t, spec.tau_i, spec.stride});
  for (int k = 1; k <= spec.tau_o; ++k) s.z_d.push_back(ep.state_at(t + k * spec.output_dt));
  s.s_next = ep.window({t + spec.tau_o * spec.output_dt, spec.tau_i, spec.stride});
  return s;
}

AnchorIndex build_anchor_index(const Dataset & data, const BatchSpec & spec)
{
  AnchorIndex anchors;
  for (size_t e = 0; e < data.episodes.size(); ++e) {
    for (double t : valid_anchors(*data.episodes[e], spec)) anchors.emplace_back(e, t);
  }
  return anchors;
}

std::vector<Sample> sample_batch(const Dataset & data, size_t batch_size, const BatchSpec & spec, std::uint64_t rng_seed)
{
  return sample_batch(data, build_anchor_index(data, spec), batch_size, spec, rng_seed);
}

std::vector<Sample> sample_batch(
  const Dataset & data, const AnchorIndex & anchors, size_t batch_size, const BatchSpec & spec,
  std::uint64_t rng_seed)
{
  if (anchors.empty()) throw std::invalid_argument("sample_batch: dataset too short for the requested horizons");
  std::mt19937_64 rng(rng_seed);
  std::uniform_int_distribution<size_t> pick(0, anchors.size() - 1);
  std::vector<Sample> out;
  out.reserve(batch_size);
  for (size_t b = 0; b < batch_size; ++b) {
    const auto & [e, t] = anchors[pick(rng)];
    out.push_back(make_sample(data, e, t, spec));
  }
  return out;
}

}  // namespace scenenmpc
