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

#include "scenenmpc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "scenenmpc/rng.hpp"

namespace scenenmpc {

namespace {

void check_sizes(size_t a, size_t b, size_t c, const char * what)
{
  if (a != b || a != c) throw std::invalid_argument(std::string(what) + ": length mismatch");
  if (a == 0) throw std::invalid_argument(std::string(what) + ": empty trajectory");
}

double mean(const std::vector<double> & v)
{
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_var(const std::vector<double> & v)
{
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace

double lateral_error(const std::vector<Vec2> & est, const std::vector<Vec2> & gt, const std::vector<double> & speeds)
{
  check_sizes(est.size(), gt.size(), speeds.size(), "lateral_error");
  double s = 0.0;
  for (size_t k = 0; k < est.size(); ++k) s += norm(est[k] - gt[k]) * speeds[k];
  return s / static_cast<double>(est.size());
}

double heading_error(const std::vector<double> & est, const std::vector<double> & gt, const std::vector<double> & speeds)
{
  check_sizes(est.size(), gt.size(), speeds.size(), "heading_error");
  double s = 0.0;
  for (size_t k = 0; k < est.size(); ++k) s += std::abs(angle_diff(est[k], gt[k])) * 180.0 / M_PI * speeds[k];
  return s / static_cast<double>(est.size());
}

nlohmann::json EpisodeResult::to_json() const
{
  return {{"method", method},   {"scenario", scenario}, {"seed", seed},     {"reached_goal", reached_goal},
          {"crashed", crashed}, {"avg_speed", avg_speed}, {"e_L", e_L},     {"e_H", e_H},
          {"steps", steps},     {"trace_path", trace_path}, {"error", error}};
}

EpisodeResult EpisodeResult::from_json(const nlohmann::json & j)
{
  EpisodeResult r;
  r.method = j.at("method");
  r.scenario = j.at("scenario");
  r.seed = j.at("seed");
  r.reached_goal = j.at("reached_goal");
  r.crashed = j.at("crashed");
  r.avg_speed = j.at("avg_speed");
  r.e_L = j.at("e_L");
  r.e_H = j.at("e_H");
  r.steps = j.at("steps");
  r.trace_path = j.value("trace_path", "");
  r.error = j.value("error", "");
  return r;
}

EpisodeResult score_episode(const EpisodeTrace & trace, const Polyline & gt)
{
  EpisodeResult r;
  r.method = trace.method;
  r.seed = trace.seed;
  r.reached_goal = trace.reached_goal;
  r.crashed = trace.crashed;
  r.steps = static_cast<int>(trace.steps.size());
  r.error = trace.error;
  if (trace.steps.empty()) return r;
  std::vector<Vec2> est, ref;
  std::vector<double> he, hr, v;
  double dist = 0.0;
  for (size_t k = 0; k < trace.steps.size(); ++k) {
    const auto & s = trace.steps[k];
    const Vec2 p{s.ego.x, s.ego.y};
    const auto pr = gt.project(p);
    est.push_back(p);
    ref.push_back(pr.point);
    he.push_back(s.ego.rho);
    hr.push_back(gt.heading_at(pr.s));
    v.push_back(s.speed);
    if (k > 0) dist += norm(p - est[k - 1]);
  }
  r.e_L = lateral_error(est, ref, v);
  r.e_H = heading_error(he, hr, v);
  const double duration = trace.steps.back().t - trace.steps.front().t;
  r.avg_speed = duration > 0.0 ? dist / duration : 0.0;
  return r;
}

nlohmann::json CellStats::to_json() const
{
  return {{"method", method},       {"scenario", scenario},   {"n", n},
          {"crash_pct", crash_pct}, {"reached_pct", reached_pct}, {"not_reached_pct", not_reached_pct},
          {"avg_speed", avg_speed}, {"e_L_mean", e_L_mean},   {"e_L_std", e_L_std},
          {"e_H_mean", e_H_mean},   {"e_H_std", e_H_std},     {"rmse_median", rmse_median},
          {"rmse_var", rmse_var}};
}

nlohmann::json BenchmarkReport::to_json() const
{
  nlohmann::json j{{"v", 1}, {"kind", "benchmark_report"}, {"cells", nlohmann::json::array()},
                   {"episodes", nlohmann::json::array()}};
  for (const auto & c : cells) j["cells"].push_back(c.to_json());
  for (const auto & e : episodes) j["episodes"].push_back(e.to_json());
  return j;
}

std::string BenchmarkReport::to_table() const
{
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-18s %-14s %4s %9s %9s %9s %10s %10s %10s %10s\n", "scenario", "method", "n",
                "crash%", "reached%", "speed", "e_L", "e_L_std", "e_H", "e_H_std");
  os << line;
  for (const auto & c : cells) {
    std::snprintf(line, sizeof line, "%-18s %-14s %4d %9.1f %9.1f %9.3f %10.4f %10.4f %10.3f %10.3f\n",
                  c.scenario.c_str(), c.method.c_str(), c.n, c.crash_pct, c.reached_pct, c.avg_speed, c.e_L_mean,
                  c.e_L_std, c.e_H_mean, c.e_H_std);
    os << line;
  }
  return os.str();
}

double sample_std(const std::vector<double> & v) { return std::sqrt(sample_var(v)); }

double median(std::vector<double> v)
{
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<double> combined_rmse(const std::vector<EpisodeResult> & eps)
{
  std::map<std::string, std::vector<size_t>> by_scenario;
  for (size_t i = 0; i < eps.size(); ++i) by_scenario[eps[i].scenario].push_back(i);
  std::vector<double> out(eps.size(), 0.0);
  for (const auto & [name, idx] : by_scenario) {
    std::vector<double> l, h;
    for (size_t i : idx) {
      l.push_back(eps[i].e_L);
      h.push_back(eps[i].e_H);
    }
    const double ml = mean(l), mh = mean(h);
    const double sl = sample_std(l), sh = sample_std(h);
    for (size_t i : idx) {
      const double zl = sl > 0.0 ? (eps[i].e_L - ml) / sl : 0.0;
      const double zh = sh > 0.0 ? (eps[i].e_H - mh) / sh : 0.0;
      out[i] = std::sqrt((zl * zl + zh * zh) / 2.0);
    }
  }
  return out;
}

BenchmarkReport aggregate(const std::vector<EpisodeResult> & episodes)
{
  BenchmarkReport rep;
  rep.episodes = episodes;
  const auto rmse = combined_rmse(episodes);
  // cells in order of first appearance
  std::vector<std::pair<std::string, std::string>> keys;
  for (const auto & e : episodes) {
    const auto k = std::make_pair(e.scenario, e.method);
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
  }
  for (const auto & [scenario, method] : keys) {
    std::vector<double> l, h, sp, rm;
    int crashes = 0, reached = 0;
    for (size_t i = 0; i < episodes.size(); ++i) {
      const auto & e = episodes[i];
      if (e.scenario != scenario || e.method != method) continue;
      l.push_back(e.e_L);
      h.push_back(e.e_H);
      sp.push_back(e.avg_speed);
      rm.push_back(rmse[i]);
      crashes += e.crashed;
      reached += e.reached_goal;
    }
    CellStats c;
    c.scenario = scenario;
    c.method = method;
    c.n = static_cast<int>(l.size());
    c.crash_pct = 100.0 * crashes / c.n;
    c.reached_pct = 100.0 * reached / c.n;
    c.not_reached_pct = 100.0 * (c.n - reached) / c.n;
    c.avg_speed = mean(sp);
    c.e_L_mean = mean(l);
    c.e_L_std = sample_std(l);
    c.e_H_mean = mean(h);
    c.e_H_std = sample_std(h);
    c.rmse_median = median(rm);
    c.rmse_var = sample_var(rm);
    rep.cells.push_back(c);
  }
  return rep;
}

GroundTruth ground_truth(const ScenarioConfig & sc, const BenchmarkConfig & cfg)
{
  auto scenario = make_scenario(sc);
  GroundTruth gt;
  for (int d = 0; d < cfg.gt_demos; ++d) {
    ScriptedExpert ex(cfg.expert);
    gt.demos.push_back(run_episode(scenario, ex, cfg.sim, cfg.gt_seed + static_cast<std::uint64_t>(d)));
  }
  std::vector<EpisodeTrace> ok;
  for (const auto & t : gt.demos) {
    if (t.reached_goal && !t.crashed) ok.push_back(t);
  }
  gt.path = mean_path(scenario->route, ok);
  return gt;
}

BenchmarkReport run_benchmark(
  const std::vector<MethodSpec> & methods, const std::vector<ScenarioSpec> & scenarios, const BenchmarkConfig & cfg)
{
  if (cfg.trials <= 0) throw std::invalid_argument("benchmark: trials must be positive");
  std::vector<EpisodeResult> results;
  if (!cfg.trace_dir.empty()) std::filesystem::create_directories(cfg.trace_dir);
  for (const auto & sc : scenarios) {
    const GroundTruth gt = ground_truth(sc.config, cfg);
    auto scenario = make_scenario(sc.config);
    for (const auto & m : methods) {
      for (int trial = 0; trial < cfg.trials; ++trial) {
        const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(trial);
        EpisodeResult r;
        try {
          auto ctl = m.make();
          const EpisodeTrace tr = run_episode(scenario, *ctl, cfg.sim, seed);
          r = score_episode(tr, gt.path);
          if (!cfg.trace_dir.empty()) {
            char name[256];
            std::snprintf(name, sizeof name, "%s_%s_%llu.jsonl", sc.name.c_str(), m.name.c_str(),
                          static_cast<unsigned long long>(seed));
            const auto path = std::filesystem::path(cfg.trace_dir) / name;
            std::ofstream(path) << tr.to_jsonl();
            r.trace_path = name;
          }
        } catch (const std::exception & e) {
          r.error = e.what();
          r.seed = seed;
        }
        r.method = m.name;
        r.scenario = sc.name;
        results.push_back(r);
      }
    }
  }
  return aggregate(results);
}

double waypoint_accuracy(const std::vector<SetPointTrajectory> & pred, const std::vector<SetPointTrajectory> & expert,
                         double threshold)
{
  if (pred.size() != expert.size()) throw std::invalid_argument("waypoint_accuracy: length mismatch");
  size_t hit = 0, total = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].size() != expert[i].size()) throw std::invalid_argument("waypoint_accuracy: length mismatch");
    for (size_t k = 0; k < pred[i].size(); ++k) {
      hit += std::hypot(pred[i][k].x - expert[i][k].x, pred[i][k].y - expert[i][k].y) <= threshold;
      ++total;
    }
  }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

std::vector<AblationCurve> ablation_sweep(
  const std::vector<AblationVariant> & variants, const Dataset & data, const RewardWeights & w, const TrainConfig & cfg,
  std::uint64_t init_seed)
{
  cfg.validate();
  std::vector<AblationCurve> out;
  const int chunk = std::max(1, cfg.K2 / cfg.epochs);
  const std::uint64_t eval_seed = mix_seed(cfg.rng_seed, 0xab1a7e);
  for (const auto & v : variants) {
    AblationCurve curve;
    curve.name = v.name;
    try {
      NetworkParams net = init_network(v.net, init_seed);
      std::optional<DynamicsState> state;
      double best = std::numeric_limits<double>::infinity();
      for (int e = 1; e <= cfg.epochs; ++e) {
        TrainConfig c = cfg;
        c.K2 = chunk * e;
        DynamicsState last;
        auto res = train_dynamics(data, net, w, c, {}, state, [&](const DynamicsState & s) { last = s; });
        state = last;
        const auto ev = evaluate_dynamics(data, state->net, w, cfg, 64, eval_seed);
        best = std::min(best, ev.bellman_error);
        curve.points.push_back({e, ev.bellman_error, best, waypoint_accuracy(ev.predicted, ev.expert)});
      }
    } catch (const std::exception & ex) {
      curve.error = ex.what();
    }
    out.push_back(curve);
  }
  return out;
}

std::string curves_to_tsv(const std::vector<AblationCurve> & curves)
{
  std::ostringstream os;
  os << "variant\tepoch\tbellman_mse\tbest_bellman_mse\taccuracy\n";
  char line[256];
  for (const auto & c : curves) {
    for (const auto & p : c.points) {
      std::snprintf(line, sizeof line, "%s\t%d\t%.17g\t%.17g\t%.17g\n", c.name.c_str(), p.epoch, p.bellman_mse,
                    p.best_bellman_mse, p.accuracy);
      os << line;
    }
  }
  return os.str();
}

}  // namespace scenenmpc
