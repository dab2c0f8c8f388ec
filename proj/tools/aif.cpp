#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <atomic>
#include <exception>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "aif/agent/agent.hpp"
#include "aif/agent/config.hpp"
#include "aif/agent/runner.hpp"
#include "aif/errors.hpp"
#include "aif/oracle/quadrature.hpp"

namespace fs = std::filesystem;
using namespace aif;
using namespace aif::agent;

namespace {

fs::path default_output_root() {
  if (const char* root = std::getenv("AIF_OUTPUT_ROOT"); root && *root) return root;
  return "runs";
}

fs::path seed_dir(const fs::path& out, std::uint64_t seed) { return out / ("seed_" + std::to_string(seed)); }

// Accepts either a checkpoint file or a directory holding one.
fs::path checkpoint_path(const fs::path& p) {
  if (fs::is_directory(p)) return p / kCheckpointFile;
  return p;
}

std::mutex print_mutex;

void print_log(const char* kind, const EpisodeLog& log, std::uint64_t seed) {
  const std::lock_guard lock(print_mutex);
  std::printf("seed %llu %-7s episode %zu reward %.6g intrinsic %.6g extrinsic %.6g time %.3fs%s%s\n",
              static_cast<unsigned long long>(seed), kind, log.episode, log.cumulative_reward,
              log.intrinsic_mean, log.extrinsic_mean, log.wall_time, log.aborted ? " aborted: " : "",
              log.error.c_str());
  std::fflush(stdout);
}

int cmd_run(const std::string& config_path, const std::string& out, std::optional<std::uint64_t> seed,
            std::optional<std::size_t> episodes, std::size_t jobs, int verbosity) {
  if (config_path.empty()) throw ConfigError("--config is required for run", "config");
  if (!fs::exists(config_path)) throw ConfigError("config file not found: " + config_path, "config");
  ExperimentConfig cfg = load_config(config_path);
  if (seed) cfg.seeds = {*seed};
  if (episodes) cfg.episodes = *episodes;
  cfg.validate();
  if (jobs == 0) throw ConfigError("--jobs must be positive", "jobs");
  const fs::path root = out.empty() ? default_output_root() / fs::path(config_path).stem() : fs::path(out);

  auto run_seed = [&](std::uint64_t s) {
    Agent agent(cfg, s);
    const fs::path dir = seed_dir(root, s);
    if (verbosity > 0) {
      const std::lock_guard lock(print_mutex);
      std::printf("seed %llu -> %s\n", static_cast<unsigned long long>(s), dir.c_str());
    }
    run_training(agent, dir, [&](const char* kind, const EpisodeLog& log) {
      if (verbosity > 0 || std::string(kind) == "eval") print_log(kind, log, s);
    });
    const std::lock_guard lock(print_mutex);
    if (auto f = agent.first_reward_episode())
      std::printf("seed %llu first reward at episode %zu\n", static_cast<unsigned long long>(s), *f);
    else
      std::printf("seed %llu no reward in %zu episodes\n", static_cast<unsigned long long>(s), agent.episodes_done());
    std::fflush(stdout);
  };

  // Seeds are independent experiments; workers take the next seed in order.
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t k = next++; k < cfg.seeds.size(); k = next++) {
      try {
        run_seed(cfg.seeds[k]);
      } catch (...) {
        const std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = cfg.seeds.size();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < std::min(jobs, cfg.seeds.size()); ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return 0;
}

int cmd_resume(const std::string& out, std::optional<std::size_t> episodes, int verbosity) {
  if (out.empty()) throw ConfigError("--out must name a run directory", "out");
  const fs::path ckpt = checkpoint_path(out);
  if (!fs::exists(ckpt)) throw ConfigError("no checkpoint at " + ckpt.string(), "out");
  Agent agent = Agent::load(ckpt.string());
  if (episodes) agent.set_episodes(*episodes);
  const fs::path dir = fs::is_directory(out) ? fs::path(out) : fs::path(out).parent_path();
  const auto s = agent.seed();
  std::printf("seed %llu resuming at episode %zu\n", static_cast<unsigned long long>(s), agent.episodes_done());
  run_training(agent, dir, [&](const char* kind, const EpisodeLog& log) {
    if (verbosity > 0 || std::string(kind) == "eval") print_log(kind, log, s);
  });
  return 0;
}

int cmd_eval(const std::string& out, std::size_t episodes, const std::string& dump_dir) {
  if (out.empty()) throw ConfigError("--out must name a run directory or checkpoint", "out");
  const fs::path ckpt = checkpoint_path(out);
  if (!fs::exists(ckpt)) throw ConfigError("no checkpoint at " + ckpt.string(), "out");
  Agent agent = Agent::load(ckpt.string());
  if (!dump_dir.empty()) fs::create_directories(dump_dir);
  double total = 0.0;
  for (std::size_t k = 0; k < episodes; ++k) {
    EpisodeResult res = agent.run_eval_episode();
    total += res.log.cumulative_reward;
    print_log("eval", res.log, agent.seed());
    if (!dump_dir.empty()) {
      const auto& spec = agent.environment().spec();
      write_trajectory_csv((fs::path(dump_dir) / numbered_file("trajectory", k, "csv")).string(),
                           spec.state_names, spec.action_dim, res.states, res.actions, res.rewards);
    }
  }
  std::printf("mean reward %.6g over %zu episodes\n", episodes ? total / static_cast<double>(episodes) : 0.0,
              episodes);
  return 0;
}

int cmd_bench(std::size_t n, std::size_t draws, double sigma, std::uint64_t seed) {
  const auto rows = oracle::bench_estimator(n, draws, sigma, seed);
  std::printf("%-12s %3s %8s %12s %12s %12s %12s %12s\n", "mode", "n", "draws", "mean", "oracle", "bias",
              "variance", "std_error");
  for (const auto& r : rows)
    std::printf("%-12s %3zu %8zu %12.6f %12.6f %12.6f %12.6f %12.6f\n", r.mode.c_str(), r.n, r.draws, r.mean,
                r.oracle, r.bias, r.variance, r.std_error);
  return 0;
}

int cmd_export(const std::string& out, const std::string& dest) {
  if (out.empty()) throw ConfigError("--out must name a run directory or checkpoint", "out");
  const fs::path ckpt = checkpoint_path(out);
  if (!fs::exists(ckpt)) throw ConfigError("no checkpoint at " + ckpt.string(), "out");
  const Agent agent = Agent::load(ckpt.string());
  const fs::path dir = dest.empty() ? ckpt.parent_path() : fs::path(dest);
  fs::create_directories(dir);
  write_episode_csv((dir / kEpisodeLogFile).string(), agent.explore_logs());
  write_episode_csv((dir / kEvalLogFile).string(), agent.eval_logs());
  agent.visitation().write_csv((dir / "visitation.csv").string());
  std::printf("exported %zu explore and %zu eval episodes to %s\n", agent.explore_logs().size(),
              agent.eval_logs().size(), dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active inference agent with ensemble models and information-seeking planning"};
  app.require_subcommand(1);
  int verbosity = 0;
  app.add_flag("-v,--verbose", verbosity, "Print every episode");

  std::string config_path, out, dest, dump_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> episodes;
  std::size_t jobs = 1;
  std::size_t eval_episodes = 1, bench_n = 5, bench_draws = 100000;
  double bench_sigma = 1.0;
  std::uint64_t bench_seed = 0;

  auto* run = app.add_subcommand("run", "Train an agent from a config file");
  run->add_option("--config", config_path, "Experiment config (JSON)");
  run->add_option("--out", out, "Output directory (default: $AIF_OUTPUT_ROOT/<config name>)");
  run->add_option("--seed", seed, "Run only this seed");
  run->add_option("--episodes", episodes, "Override the episode budget");
  run->add_option("--jobs", jobs, "Seeds to run in parallel");

  auto* resume = app.add_subcommand("resume", "Continue a run from its checkpoint");
  resume->add_option("--out", out, "Seed directory or checkpoint file")->required();
  resume->add_option("--episodes", episodes, "New total episode budget");

  auto* eval = app.add_subcommand("eval", "Run evaluation episodes on a checkpoint");
  eval->add_option("--out", out, "Seed directory or checkpoint file")->required();
  eval->add_option("--episodes", eval_episodes, "Number of evaluation episodes");
  eval->add_option("--dump", dump_dir, "Write per-episode trajectory CSVs here");

  auto* bench = app.add_subcommand("bench-estimator", "Compare the information gain estimator to quadrature");
  bench->add_option("--n", bench_n, "Number of particles");
  bench->add_option("--draws", bench_draws, "Estimator repetitions");
  bench->add_option("--sigma", bench_sigma, "Particle standard deviation");
  bench->add_option("--seed", bench_seed, "Random seed");

  auto* exp = app.add_subcommand("export", "Write CSV logs from a checkpoint");
  exp->add_option("--out", out, "Seed directory or checkpoint file")->required();
  exp->add_option("--dest", dest, "Destination directory (default: next to the checkpoint)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (run->parsed()) return cmd_run(config_path, out, seed, episodes, jobs, verbosity);
    if (resume->parsed()) return cmd_resume(out, episodes, verbosity);
    if (eval->parsed()) return cmd_eval(out, eval_episodes, dump_dir);
    if (bench->parsed()) return cmd_bench(bench_n, bench_draws, bench_sigma, bench_seed);
    if (exp->parsed()) return cmd_export(out, dest);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error [%s]: %s\n", e.key().c_str(), e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
