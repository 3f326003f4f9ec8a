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

#include <Eigen/Dense>
#include <filesystem>

#include "scenenmpc/dataset.hpp"
#include "scenenmpc/fixtures.hpp"
#include "scenenmpc/gradcheck.hpp"
#include "scenenmpc/irl_training.hpp"

using namespace scenenmpc;

namespace {

// 3-state chain, actions left / right, clamped at the ends.
struct Chain {
  static constexpr int n = 3;
  double r[n][2] = {{0.0, 0.2}, {0.1, 1.0}, {0.5, 0.3}};
  int next(int s, int a) const { return a == 0 ? std::max(s - 1, 0) : std::min(s + 1, n - 1); }
};

// Exhaustive policy enumeration with exact policy evaluation.
Eigen::Vector3d chain_optimal_values(const Chain & c, double gamma)
{
  Eigen::Vector3d best = Eigen::Vector3d::Constant(-1e300);
  for (int pol = 0; pol < 8; ++pol) {
    Eigen::Matrix3d P = Eigen::Matrix3d::Zero();
    Eigen::Vector3d r;
    for (int s = 0; s < 3; ++s) {
      const int a = (pol >> s) & 1;
      P(s, c.next(s, a)) = 1.0;
      r(s) = c.r[s][a];
    }
    const Eigen::Vector3d v = (Eigen::Matrix3d::Identity() - gamma * P).lu().solve(r);
    best = best.cwiseMax(v);
  }
  return best;
}

const Dataset & fixture_data()
{
  static const Dataset d = record_expert(straight_obstacle_fixture(), 3, SimSettings{}, ExpertConfig{}, 100).data;
  return d;
}

TrainConfig small_train()
{
  TrainConfig tc;
  tc.K1 = 10;
  tc.K2 = 12;
  tc.batch_size = 4;
  tc.probe_batch = 8;
  tc.checkpoint_every = 6;
  return tc;
}

NetworkParams small_net()
{
  NetConfig nc;
  nc.vehicle = straight_obstacle_fixture().vehicle;
  return init_network(nc, 7);
}

bool same_params(const NetworkParams & a, const NetworkParams & b)
{
  if (!a.p.same_shape(b.p)) return false;
  for (size_t i = 0; i < a.p.size(); ++i) {
    if (a.p[i] != b.p[i]) return false;
  }
  return true;
}

}  // namespace

TEST(Bellman, TabularChainConvergesToValueIteration)
{
  const Chain c;
  const double gamma = 0.95;
  const Eigen::Vector3d v_star = chain_optimal_values(c, gamma);
  double q[3][2] = {};
  for (int it = 0; it < 2000; ++it) {
    double nq[3][2];
    for (int s = 0; s < 3; ++s) {
      for (int a = 0; a < 2; ++a) {
        const int sn = c.next(s, a);
        nq[s][a] = bellman_target(c.r[s][a], {q[sn][0], q[sn][1]}, gamma).value;
      }
    }
    std::copy(&nq[0][0], &nq[0][0] + 6, &q[0][0]);
  }
  for (int s = 0; s < 3; ++s) {
    for (int a = 0; a < 2; ++a) {
      EXPECT_NEAR(q[s][a], c.r[s][a] + gamma * v_star(c.next(s, a)), 1e-6) << s << "," << a;
    }
    EXPECT_NEAR(std::max(q[s][0], q[s][1]), v_star(s), 1e-6);
  }
}

TEST(Bellman, GenericFormEdgeCases)
{
  EXPECT_EQ(bellman_target(0.7, {3.0, 9.0}, 0.0).value, 0.7);
  const auto one = bellman_target(1.0, {-2.0}, 0.5);
  EXPECT_EQ(one.best, 0u);
  EXPECT_EQ(one.value, 0.0);
  EXPECT_THROW(bellman_target(1.0, std::vector<double>{}, 0.5), std::invalid_argument);
}

TEST(Bellman, NetworkFormMatchesBruteForce)
{
  const NetworkParams net = small_net();
  const NetInput in = random_input(net.cfg, 3);
  const SetPointTrajectory own = forward(net, in, false, nullptr).z_d;
  SetPointTrajectory shifted = own;
  for (auto & z : shifted) z.y += 0.3;
  const RewardWeights w{{1.0, 2.0, 0.5}};
  const auto t = bellman_target(-0.4, in, net, {shifted, own}, 0.95, w);
  ASSERT_EQ(t.q.size(), 2u);
  EXPECT_EQ(t.q[0], reward(own, shifted, w));
  EXPECT_EQ(t.q[1], reward(own, own, w));
  EXPECT_EQ(t.best, 1u);
  EXPECT_EQ(t.value, -0.4 + 0.95 * t.q[1]);
  // frozen parameters: same inputs, same target
  const auto t2 = bellman_target(-0.4, in, net, {shifted, own}, 0.95, w);
  EXPECT_EQ(t2.value, t.value);
}

TEST(Reward, HandExamples)
{
  const SetPointTrajectory ref{{0.0, 0.0, 0.0}};
  const SetPointTrajectory dev{{3.0, 4.0, 1.0}};
  const RewardWeights w{{1.0, 1.0, 0.0}};
  EXPECT_EQ(reward_raw(dev, ref, w), 5.0);
  EXPECT_EQ(reward(dev, ref, w), -5.0);
  EXPECT_EQ(reward(ref, ref, w), 0.0);
  const RewardWeights w2{{2.0, 2.0, 0.0}};
  EXPECT_EQ(reward(dev, ref, w2), 2.0 * reward(dev, ref, w));
}

TEST(Reward, DiscountedReturn)
{
  EXPECT_EQ(discounted_return({1.0, 1.0, 1.0}, 0.5, 0), 1.75);
  EXPECT_EQ(discounted_return({4.0, 2.0, 1.0}, 0.0, 1), 2.0);
  EXPECT_EQ(discounted_return({0.0, 0.0}, 0.9, 0), 0.0);
}

TEST(Training, ZeroIterationsAreIdentity)
{
  TrainConfig tc = small_train();
  tc.K1 = 0;
  tc.K2 = 0;
  const NetworkParams net = small_net();
  const auto r1 = learn_reward_weights(fixture_data(), net, tc);
  EXPECT_EQ(r1.w.w, tc.w0.w);
  EXPECT_TRUE(same_params(r1.net, net));
  const auto r2 = train_dynamics(fixture_data(), net, r1.w, tc);
  EXPECT_TRUE(same_params(r2.net, net));
}

TEST(Training, DeterministicAndProbeLossDecreases)
{
  const TrainConfig tc = small_train();
  const NetworkParams net = small_net();
  const auto a = learn_reward_weights(fixture_data(), net, tc);
  const auto b = learn_reward_weights(fixture_data(), net, tc);
  EXPECT_EQ(a.w.w, b.w.w);
  EXPECT_TRUE(same_params(a.net, b.net));
  ASSERT_EQ(a.history.size(), 10u);
  EXPECT_LT(a.history.back().probe_loss, a.history.front().probe_loss);
}

TEST(Training, ResumeFromCheckpointMatchesStraightRun)
{
  const TrainConfig tc = small_train();
  const NetworkParams net = small_net();
  const RewardWeights w{{1.0, 1.0, 0.5}};
  std::vector<DynamicsState> states;
  const auto full = train_dynamics(fixture_data(), net, w, tc, {}, std::nullopt,
                                   [&](const DynamicsState & s) { states.push_back(s); });
  ASSERT_FALSE(states.empty());
  ASSERT_EQ(states.front().iter, 6);
  const auto path = (std::filesystem::temp_directory_path() / "scenenmpc_dyn.state").string();
  save_dynamics_state(path, states.front(), w);
  RewardWeights w_back;
  DynamicsState st = load_dynamics_state(path, &w_back);
  EXPECT_EQ(w_back.w, w.w);
  const auto resumed = train_dynamics(fixture_data(), net, w, tc, {}, st);
  EXPECT_TRUE(same_params(resumed.net, full.net));
  EXPECT_FALSE(same_params(full.net, net));
}

TEST(Dataset, SaveLoadRoundTrip)
{
  const Dataset & d = fixture_data();
  const auto dir = (std::filesystem::temp_directory_path() / "scenenmpc_ds_roundtrip").string();
  std::filesystem::remove_all(dir);
  save_dataset(dir, d);
  const Dataset back = load_dataset(dir);
  ASSERT_EQ(back.episodes.size(), d.episodes.size());
  EXPECT_EQ(back.names, d.names);
  for (size_t e = 0; e < d.episodes.size(); ++e) {
    EXPECT_EQ(encode_episode(*back.episodes[e]), encode_episode(*d.episodes[e]));
    EXPECT_EQ(back.routes[e].points().size(), d.routes[e].points().size());
  }
  EXPECT_THROW(load_dataset(dir + "_missing"), std::exception);
}
