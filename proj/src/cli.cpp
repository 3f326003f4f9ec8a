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

#include "scenenmpc/cli.hpp"

#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "scenenmpc/bridge_server.hpp"
#include "scenenmpc/dataset.hpp"

namespace scenenmpc {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

void ensure_parent(const std::string & path)
{
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void write_text(const std::string & path, const std::string & text)
{
  ensure_parent(path);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  f << text;
  if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

void save_recordings(const std::string & dir, std::vector<TeleopRecording> & recs)
{
  Dataset d;
  for (size_t k = 0; k < recs.size(); ++k) {
    d.episodes.push_back(std::make_shared<const AugmentedMemory>(std::move(recs[k].memory)));
    d.names.push_back("teleop_" + std::to_string(k) + "_seed" + std::to_string(recs[k].seed));
    d.routes.push_back(recs[k].scenario->route);
  }
  save_dataset(dir, d);
  for (size_t k = 0; k < recs.size(); ++k) write_text(dir + "/" + d.names[k] + ".jsonl", recs[k].trace.to_jsonl());
}

// Runs the bridge until interrupted or until `want` recordings are closed
// (0 = no limit). Returns the recordings.
std::vector<TeleopRecording> serve_bridge(const AppConfig & cfg, std::uint64_t seed, size_t want, std::ostream & err)
{
  BridgeCore core(cfg.scenario, cfg.sim, cfg.bridge, seed);
  BridgeServer server(core, cfg.bridge);
  err << "serving on ws://" << cfg.bridge.bind << ":" << server.port() << "/" << std::endl;
  std::vector<TeleopRecording> recs;
  bool braking = false;
  server.set_tick_hook([&](BridgeCore & c) {
    if (c.braking() != braking) {
      braking = c.braking();
      err << "t=" << c.world().time << (braking ? " watchdog brake engaged" : " commands resumed") << std::endl;
    }
    for (auto & r : c.take_recordings()) {
      err << "recording closed: " << r.trace.steps.size() << " steps" << std::endl;
      recs.push_back(std::move(r));
    }
    if (want > 0 && recs.size() >= want) server.stop();
  });
  g_interrupted = false;
  auto prev_int = std::signal(SIGINT, on_signal);
  auto prev_term = std::signal(SIGTERM, on_signal);
  std::atomic<bool> done{false};
  std::thread watcher([&] {
    while (!done) {
      if (g_interrupted) {
        server.stop();
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
  });
  server.run();
  done = true;
  watcher.join();
  std::signal(SIGINT, prev_int);
  std::signal(SIGTERM, prev_term);
  for (auto & r : core.take_recordings()) recs.push_back(std::move(r));
  return recs;
}

std::vector<AblationVariant> parse_variants(const std::vector<std::string> & specs, const NetConfig & base)
{
  std::vector<AblationVariant> out;
  for (const auto & s : specs) {
    int f = 0, k = 0, st = 0;
    char name[64] = {0};
    if (std::sscanf(s.c_str(), "%63[^:]:%d:%d:%d", name, &f, &k, &st) != 4) {
      throw UsageError("variant '" + s + "' is not name:filters:kernel:stride");
    }
    AblationVariant v{name, base};
    v.net.conv1 = {f, k, st};
    out.push_back(v);
  }
  return out;
}

}  // namespace

MethodSpec make_method(const std::string & name, const AppConfig & cfg)
{
  if (name == "dl_nmpc_sd") {
    auto net = std::make_shared<const NetworkParams>(load_network(cfg.paths.dynamics));
    return {name, [net, cfg] {
              return std::make_unique<NmpcController>(*net, cfg.nmpc, cfg.train.policy, cfg.window());
            }};
  }
  if (name == "untrained") {
    auto net = std::make_shared<const NetworkParams>(init_network(cfg.net, cfg.init_seed));
    return {name, [net, cfg] {
              return std::make_unique<NmpcController>(*net, cfg.nmpc, cfg.train.policy, cfg.window(), "untrained");
            }};
  }
  if (name == "dwa") return {name, [cfg] { return std::make_unique<DwaController>(cfg.dwa); }};
  if (name == "end2end") {
    auto net = std::make_shared<const PolicyNet>(load_policy_net(cfg.paths.bc, kBcTag));
    return {name, [net, cfg] { return std::make_unique<End2EndController>(*net, cfg.bc); }};
  }
  if (name == "dqn") {
    auto net = std::make_shared<const PolicyNet>(load_policy_net(cfg.paths.dqn, kDqnTag));
    return {name, [net, cfg] { return std::make_unique<DqnController>(*net, cfg.dqn); }};
  }
  if (name == "expert") return {name, [cfg] { return std::make_unique<ScriptedExpert>(cfg.expert); }};
  if (name == "tracker") return {name, [cfg] { return std::make_unique<TrackerController>(cfg.train.policy.feedforward); }};
  throw UsageError("unknown method '" + name + "'");
}

int run_cli(const std::vector<std::string> & args, std::ostream & out, std::ostream & err)
{
  CLI::App app{"Occupancy-grid driving simulator and learning controllers", "scenenmpc"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  std::vector<std::string> sets;
  app.add_option("--config", config_path, "config file (JSON)");
  app.add_option("--set", sets, "override key.path=value")->take_all();

  // shared flag storage
  std::optional<std::uint64_t> seed;
  std::optional<int> episodes, trials;
  std::string out_path, data_dir, expert_kind = "scripted";
  std::vector<std::string> methods, variants;
  std::optional<int> port;
  bool resume = false;

  auto * scen = app.add_subcommand("scenario", "scenario tools")->require_subcommand(1);
  auto * gen = scen->add_subcommand("gen", "write the built scenario as JSON");
  gen->add_option("--out", out_path, "output file (stdout when empty)");
  gen->add_option("--seed", seed, "scenario rng seed");

  auto * rec = app.add_subcommand("record", "record demonstrations into a dataset");
  rec->add_option("--expert", expert_kind, "scripted | teleop")->check(CLI::IsMember({"scripted", "teleop"}));
  rec->add_option("--episodes", episodes, "episodes to record");
  rec->add_option("--seed", seed, "first episode seed");
  rec->add_option("--out", data_dir, "dataset directory");
  rec->add_option("--port", port, "bridge port for teleop");

  auto * train = app.add_subcommand("train", "training")->require_subcommand(1);
  auto * t_reward = train->add_subcommand("reward", "learn the reward weights (phase 1)");
  auto * t_dyn = train->add_subcommand("dynamics", "train the dynamics network (phase 2)");
  auto * t_dqn = train->add_subcommand("dqn", "train the DQN baseline");
  auto * t_bc = train->add_subcommand("bc", "train the End2End baseline");
  for (auto * t : {t_reward, t_dyn, t_bc}) t->add_option("--data", data_dir, "dataset directory");
  for (auto * t : {t_reward, t_dyn, t_dqn, t_bc}) {
    t->add_option("--out", out_path, "output checkpoint");
    t->add_option("--seed", seed, "training seed");
  }
  t_dyn->add_flag("--resume", resume, "continue from the saved training state");
  t_dqn->add_option("--episodes", episodes, "training episodes");

  auto * ev = app.add_subcommand("eval", "closed-loop benchmark");
  ev->add_option("--method", methods, "method name, repeatable")->take_all();
  ev->add_option("--trials", trials, "episodes per method");
  ev->add_option("--seed", seed, "first trial seed");
  ev->add_option("--out", out_path, "report file");
  std::string trace_dir;
  ev->add_option("--traces", trace_dir, "directory for per-episode traces");

  auto * abl = app.add_subcommand("ablate", "conv-layer ablation sweep");
  abl->add_option("--data", data_dir, "dataset directory");
  abl->add_option("--variant", variants, "name:filters:kernel:stride of conv1, repeatable")->take_all();
  abl->add_option("--out", out_path, "curves TSV");

  auto * srv = app.add_subcommand("serve", "run the teleoperation bridge");
  srv->add_option("--port", port, "listen port (0 picks one)");
  srv->add_option("--seed", seed, "episode seed");
  srv->add_option("--out", data_dir, "dataset directory for recorded sessions");

  auto * cfgcmd = app.add_subcommand("config", "configuration")->require_subcommand(1);
  auto * dump = cfgcmd->add_subcommand("dump", "print the resolved configuration");
  dump->add_option("--out", out_path, "output file (stdout when empty)");

  auto usage = [&](const std::string & msg) {
    err << "error: code=usage msg=" << json(msg).dump() << std::endl;
    return kExitUsage;
  };

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp &) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp &) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError & e) {
    return usage(e.what());
  }

  AppConfig cfg;
  try {
    json doc = json::object();
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw ConfigError("cannot open config '" + config_path + "'");
      try {
        doc = json::parse(in);
      } catch (const json::parse_error & e) {
        throw ConfigError("config '" + config_path + "': " + e.what());
      }
    }
    for (const auto & s : sets) apply_override(doc, s);
    cfg = AppConfig::from_json(doc);
  } catch (const ConfigError & e) {
    return usage(e.what());
  }

  try {
    if (*gen) {
      ScenarioConfig sc = cfg.scenario;
      if (seed) sc.rng_seed = *seed;
      const auto scenario = make_scenario(sc);
      json j{{"v", 1}, {"kind", "scenario"}, {"world", build_scenario(scenario).to_json()}};
      json route = json::array();
      for (const auto & p : scenario->route.points()) route.push_back({p.x, p.y});
      j["route"] = route;
      const std::string text = j.dump(2) + "\n";
      if (out_path.empty()) {
        out << text;
      } else {
        write_text(out_path, text);
      }
      return kExitOk;
    }

    if (*rec) {
      const int n = episodes.value_or(cfg.record.episodes);
      const std::uint64_t s0 = seed.value_or(cfg.record.seed);
      const std::string dir = data_dir.empty() ? cfg.paths.dataset : data_dir;
      if (expert_kind == "scripted") {
        const RecordResult r = record_expert(cfg.scenario, n, cfg.sim, cfg.expert, s0);
        save_dataset(dir, r.data);
        int reached = 0;
        for (const auto & t : r.traces) reached += t.reached_goal ? 1 : 0;
        out << "recorded " << r.data.episodes.size() << " episodes (" << reached << " reached the goal) into " << dir
            << "\n";
      } else {
        AppConfig c = cfg;
        if (port) c.bridge.port = *port;
        auto recs = serve_bridge(c, s0, static_cast<size_t>(std::max(n, 0)), err);
        save_recordings(dir, recs);
        out << "recorded " << recs.size() << " teleop episodes into " << dir << "\n";
      }
      return kExitOk;
    }

    if (*t_reward) {
      TrainConfig tc = cfg.train;
      if (seed) tc.rng_seed = *seed;
      const Dataset data = load_dataset(data_dir.empty() ? cfg.paths.dataset : data_dir);
      const std::string path = out_path.empty() ? cfg.paths.reward : out_path;
      ensure_parent(path);
      std::ofstream metrics(path + ".metrics.jsonl");
      const auto r = learn_reward_weights(data, init_network(cfg.net, cfg.init_seed), tc,
                                          [&](const IterationMetrics & m) { metrics << m.to_json().dump() << "\n"; });
      save_reward_weights(path, r.w);
      ensure_parent(cfg.paths.phase1);
      save_network(cfg.paths.phase1, r.net);
      out << "reward weights " << r.w.w[0] << " " << r.w.w[1] << " " << r.w.w[2] << " -> " << path << "\n";
      return kExitOk;
    }

    if (*t_dyn) {
      TrainConfig tc = cfg.train;
      if (seed) tc.rng_seed = *seed;
      const Dataset data = load_dataset(data_dir.empty() ? cfg.paths.dataset : data_dir);
      const std::string path = out_path.empty() ? cfg.paths.dynamics : out_path;
      ensure_parent(path);
      const std::string state_path = path + ".state";
      std::optional<DynamicsState> st;
      RewardWeights w = load_reward_weights(cfg.paths.reward);
      if (resume) st = load_dynamics_state(state_path, &w);
      write_text(path + ".config.json", dump_config(cfg));
      std::ofstream metrics(path + ".metrics.jsonl", resume ? std::ios::app : std::ios::trunc);
      const auto r = train_dynamics(
        data, load_network(cfg.paths.phase1), w, tc,
        [&](const IterationMetrics & m) { metrics << m.to_json().dump() << "\n"; }, st,
        [&](const DynamicsState & s) { save_dynamics_state(state_path, s, w); });
      save_network(path, r.net);
      out << "dynamics network -> " << path << "\n";
      return kExitOk;
    }

    if (*t_dqn) {
      DqnConfig dc = cfg.dqn;
      if (seed) dc.seed = *seed;
      if (episodes) dc.episodes = *episodes;
      const std::string path = out_path.empty() ? cfg.paths.dqn : out_path;
      ensure_parent(path);
      std::ofstream metrics(path + ".metrics.jsonl");
      const auto m = dqn_train(cfg.scenario, cfg.sim, dc, [&](const DqnEpisodeStats & s) {
        metrics << json{{"episode", s.episode}, {"steps", s.steps},     {"return", s.ret},
                        {"epsilon", s.epsilon}, {"loss", s.mean_loss}, {"crashed", s.crashed},
                        {"reached", s.reached}}
                     .dump()
                << "\n";
      });
      save_policy_net(path, m.net, kDqnTag);
      out << "dqn network (" << m.updates << " updates) -> " << path << "\n";
      return kExitOk;
    }

    if (*t_bc) {
      BcConfig bc = cfg.bc;
      if (seed) bc.seed = *seed;
      const Dataset data = load_dataset(data_dir.empty() ? cfg.paths.dataset : data_dir);
      const std::string path = out_path.empty() ? cfg.paths.bc : out_path;
      ensure_parent(path);
      const auto m = train_bc(data, cfg.scenario.vehicle, bc);
      save_policy_net(path, m.net, kBcTag);
      out << "end2end network (train accuracy " << m.train_accuracy << ", validation " << m.val_accuracy << ") -> "
          << path << "\n";
      return kExitOk;
    }

    if (*ev) {
      if (methods.empty()) methods = {"dl_nmpc_sd"};
      BenchmarkConfig bc = cfg.benchmark();
      if (trials) bc.trials = *trials;
      if (seed) bc.seed = *seed;
      bc.trace_dir = trace_dir;
      std::vector<MethodSpec> specs;
      for (const auto & m : methods) specs.push_back(make_method(m, cfg));
      const auto report = run_benchmark(specs, {{cfg.scenario_base, cfg.scenario}}, bc);
      const std::string path = out_path.empty() ? cfg.paths.reports + "/report.json" : out_path;
      write_text(path, report.to_json().dump(2) + "\n");
      out << report.to_table();
      return kExitOk;
    }

    if (*abl) {
      if (variants.empty()) variants = {"conv1_4x7s4:4:7:4", "conv1_8x7s4:8:7:4", "conv1_16x7s4:16:7:4"};
      const auto vs = parse_variants(variants, cfg.net);
      const Dataset data = load_dataset(data_dir.empty() ? cfg.paths.dataset : data_dir);
      const auto curves = ablation_sweep(vs, data, load_reward_weights(cfg.paths.reward), cfg.train, cfg.init_seed);
      const std::string path = out_path.empty() ? cfg.paths.reports + "/ablation.tsv" : out_path;
      write_text(path, curves_to_tsv(curves));
      for (const auto & c : curves) {
        if (!c.error.empty()) err << "variant " << c.name << " failed: " << c.error << std::endl;
      }
      out << "ablation curves -> " << path << "\n";
      return kExitOk;
    }

    if (*srv) {
      AppConfig c = cfg;
      if (port) c.bridge.port = *port;
      auto recs = serve_bridge(c, seed.value_or(c.scenario.rng_seed), 0, err);
      if (!data_dir.empty() && !recs.empty()) save_recordings(data_dir, recs);
      out << "bridge stopped, " << recs.size() << " recordings\n";
      return kExitOk;
    }

    if (*dump) {
      if (out_path.empty()) {
        out << dump_config(cfg);
      } else {
        write_text(out_path, dump_config(cfg));
      }
      return kExitOk;
    }
  } catch (const UsageError & e) {
    return usage(e.what());
  } catch (const ConfigError & e) {
    return usage(e.what());
  } catch (const std::exception & e) {
    err << "error: code=runtime msg=" << json(std::string(e.what())).dump() << std::endl;
    return kExitRuntime;
  }
  return usage("no command");
}

}  // namespace scenenmpc
