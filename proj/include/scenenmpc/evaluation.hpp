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
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scenenmpc/dynamics_net.hpp"
#include "scenenmpc/episode.hpp"
#include "scenenmpc/irl_training.hpp"

namespace scenenmpc {

// (1/m) sum_k |p_hat_k - p_k| v_k, metres.
double lateral_error(const std::vector<Vec2> & est, const std::vector<Vec2> & gt, const std::vector<double> & speeds);
// (1/m) sum_k |wrap(h_hat_k - h_k)| v_k, degrees; inputs in radians.
double heading_error(const std::vector<double> & est, const std::vector<double> & gt, const std::vector<double> & speeds);

struct EpisodeResult {
  std::string method;
  std::string scenario;
  std::uint64_t seed = 0;
  bool reached_goal = false;
  bool crashed = false;
  double avg_speed = 0.0;
  double e_L = 0.0;
  double e_H = 0.0;
  int steps = 0;
  std::string trace_path;
  std::string error;
  nlohmann::json to_json() const;
  static EpisodeResult from_json(const nlohmann::json & j);
};

// Metrics of one trace against a ground-truth path. Positions are paired with
// their closest point on the path.
EpisodeResult score_episode(const EpisodeTrace & trace, const Polyline & gt);

struct CellStats {
  std::string method;
  std::string scenario;
  int n = 0;
  double crash_pct = 0.0;
  double reached_pct = 0.0;
  double not_reached_pct = 0.0;
  double avg_speed = 0.0;
  double e_L_mean = 0.0, e_L_std = 0.0;
  double e_H_mean = 0.0, e_H_std = 0.0;
  double rmse_median = 0.0, rmse_var = 0.0;
  nlohmann::json to_json() const;
};

struct BenchmarkReport {
  std::vector<CellStats> cells;
  std::vector<EpisodeResult> episodes;
  nlohmann::json to_json() const;
  std::string to_table() const;
};

// Sample standard deviation (n - 1); 0 for n < 2.
double sample_std(const std::vector<double> & v);
double median(std::vector<double> v);
// Per-episode combined error sqrt((zL^2 + zH^2) / 2) with z-scores taken over
// all episodes of the same scenario.
std::vector<double> combined_rmse(const std::vector<EpisodeResult> & eps);
BenchmarkReport aggregate(const std::vector<EpisodeResult> & episodes);

struct MethodSpec {
  std::string name;
  std::function<std::unique_ptr<Controller>()> make;
};

struct ScenarioSpec {
  std::string name;
  ScenarioConfig config;
};

struct BenchmarkConfig {
  int trials = 10;
  std::uint64_t seed = 1;
  int gt_demos = 10;            // scripted-expert runs averaged into the ground truth
  std::uint64_t gt_seed = 1000;
  ExpertConfig expert;
  SimSettings sim;
  std::string trace_dir;        // when set, every trace is written as JSON lines
};

struct GroundTruth {
  Polyline path;
  std::vector<EpisodeTrace> demos;
};

GroundTruth ground_truth(const ScenarioConfig & sc, const BenchmarkConfig & cfg);

BenchmarkReport run_benchmark(
  const std::vector<MethodSpec> & methods, const std::vector<ScenarioSpec> & scenarios, const BenchmarkConfig & cfg);

// Fraction of predicted waypoints within `threshold` metres of the expert ones.
double waypoint_accuracy(const std::vector<SetPointTrajectory> & pred, const std::vector<SetPointTrajectory> & expert,
                         double threshold = 0.25);

struct AblationVariant {
  std::string name;
  NetConfig net;
};

struct CurvePoint {
  int epoch = 0;
  double bellman_mse = 0.0;
  double best_bellman_mse = 0.0;
  double accuracy = 0.0;
};

struct AblationCurve {
  std::string name;
  std::vector<CurvePoint> points;
  std::string error;
};

// Trains every variant with the same data, weights and seeds; cfg.K2 is split
// into cfg.epochs equal chunks, each closed by one curve point evaluated on a
// fixed held-out batch.
std::vector<AblationCurve> ablation_sweep(
  const std::vector<AblationVariant> & variants, const Dataset & data, const RewardWeights & w, const TrainConfig & cfg,
  std::uint64_t init_seed);

std::string curves_to_tsv(const std::vector<AblationCurve> & curves);

}  // namespace scenenmpc
