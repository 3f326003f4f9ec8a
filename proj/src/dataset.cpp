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

#include "scenenmpc/dataset.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace scenenmpc {

namespace fs = std::filesystem;
static_assert(std::endian::native == std::endian::little, "dataset files are written in host order");

namespace {

template <typename T>
void put(std::vector<std::uint8_t> & out, T v)
{
  const auto * p = reinterpret_cast<const std::uint8_t *>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
public:
  explicit Reader(const std::vector<std::uint8_t> & b) : b_(b) {}
  template <typename T>
  T get()
  {
    need(sizeof(T));
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  const std::uint8_t * take(size_t n)
  {
    need(n);
    const std::uint8_t * p = b_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == b_.size(); }

private:
  void need(size_t n) const
  {
    if (pos_ + n > b_.size()) throw std::runtime_error("dataset: truncated episode file");
  }
  const std::vector<std::uint8_t> & b_;
  size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const fs::path & p)
{
  std::ifstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("dataset: cannot open " + p.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

constexpr std::uint32_t kEpisodeVersion = 1;

}  // namespace

std::vector<std::uint8_t> encode_episode(const AugmentedMemory & ep)
{
  std::vector<std::uint8_t> out{'S', 'N', 'E', 'P'};
  put<std::uint32_t>(out, kEpisodeVersion);
  const auto recs = ep.records();
  put<std::uint64_t>(out, recs.size());
  for (const auto & r : recs) {
    for (double v : {r.timestamp, r.ego_state.x, r.ego_state.y, r.ego_state.rho, r.control.v_cmd,
                     r.control.delta_cmd, r.speed}) {
      put<double>(out, v);
    }
    if (r.grid) {
      const auto g = serialize_grid(*r.grid);
      put<std::uint32_t>(out, static_cast<std::uint32_t>(g.size()));
      out.insert(out.end(), g.begin(), g.end());
    } else {
      put<std::uint32_t>(out, 0);
    }
  }
  return out;
}

AugmentedMemory decode_episode(const std::vector<std::uint8_t> & bytes)
{
  Reader rd(bytes);
  const std::uint8_t * magic = rd.take(4);
  if (std::memcmp(magic, "SNEP", 4) != 0) throw std::runtime_error("dataset: bad episode magic");
  if (rd.get<std::uint32_t>() != kEpisodeVersion) throw std::runtime_error("dataset: unsupported episode version");
  const auto n = rd.get<std::uint64_t>();
  AugmentedMemory ep(std::max<size_t>(n, 1));
  for (std::uint64_t i = 0; i < n; ++i) {
    MemoryRecord r;
    r.timestamp = rd.get<double>();
    r.ego_state.x = rd.get<double>();
    r.ego_state.y = rd.get<double>();
    r.ego_state.rho = rd.get<double>();
    r.control.v_cmd = rd.get<double>();
    r.control.delta_cmd = rd.get<double>();
    r.speed = rd.get<double>();
    const auto len = rd.get<std::uint32_t>();
    if (len > 0) r.grid = std::make_shared<const OccupancyGrid>(deserialize_grid(rd.take(len), len));
    ep.insert(r);
  }
  if (!rd.done()) throw std::runtime_error("dataset: trailing bytes in episode file");
  return ep;
}

void save_dataset(const std::string & dir, const Dataset & data)
{
  if (data.names.size() != data.episodes.size() || data.routes.size() != data.episodes.size()) {
    throw std::invalid_argument("dataset: names/routes must parallel episodes");
  }
  fs::create_directories(dir);
  nlohmann::json index{{"v", 1}, {"format", "scenenmpc-dataset"}, {"episodes", nlohmann::json::array()}};
  for (size_t e = 0; e < data.episodes.size(); ++e) {
    const std::string file = data.names[e] + ".bin";
    const auto bytes = encode_episode(*data.episodes[e]);
    std::ofstream f(fs::path(dir) / file, std::ios::binary);
    f.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("dataset: write failed for " + file);
    nlohmann::json route = nlohmann::json::array();
    for (const auto & p : data.routes[e].points()) route.push_back({p.x, p.y});
    index["episodes"].push_back({{"name", data.names[e]},
                                 {"file", file},
                                 {"records", data.episodes[e]->size()},
                                 {"grids", data.episodes[e]->grid_count()},
                                 {"route", route}});
  }
  std::ofstream f(fs::path(dir) / "index.json");
  f << index.dump(2) << "\n";
  if (!f) throw std::runtime_error("dataset: cannot write index.json");
}

Dataset load_dataset(const std::string & dir)
{
  const auto raw = read_file(fs::path(dir) / "index.json");
  const auto index = nlohmann::json::parse(raw.begin(), raw.end());
  if (index.value("v", 0) != 1 || index.value("format", "") != "scenenmpc-dataset") {
    throw std::runtime_error("dataset: " + dir + " is not a v1 dataset");
  }
  Dataset d;
  for (const auto & e : index.at("episodes")) {
    auto ep = std::make_shared<AugmentedMemory>(decode_episode(read_file(fs::path(dir) / e.at("file").get<std::string>())));
    if (ep->size() != e.at("records").get<size_t>()) throw std::runtime_error("dataset: record count mismatch");
    std::vector<Vec2> pts;
    for (const auto & p : e.at("route")) pts.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    d.episodes.push_back(std::move(ep));
    d.names.push_back(e.at("name").get<std::string>());
    d.routes.emplace_back(pts);
  }
  return d;
}

RecordResult record_expert(
  const ScenarioConfig & scenario, int episodes, const SimSettings & sim, const ExpertConfig & expert,
  std::uint64_t seed)
{
  if (episodes <= 0) throw std::invalid_argument("record: episodes must be positive");
  auto sc = make_scenario(scenario);
  RecordResult out;
  for (int e = 0; e < episodes; ++e) {
    ScriptedExpert ex(expert);
    auto mem = std::make_shared<AugmentedMemory>(1u << 20);
    out.traces.push_back(run_episode(sc, ex, sim, seed + static_cast<std::uint64_t>(e), mem.get()));
    char name[32];
    std::snprintf(name, sizeof name, "ep_%03d", e);
    out.data.episodes.push_back(mem);
    out.data.names.emplace_back(name);
    out.data.routes.push_back(sc->route);
  }
  return out;
}

}  // namespace scenenmpc
