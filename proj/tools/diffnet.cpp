// diffnet: command-line front end for policy reports, single runs,
// escape-time sweeps and the check suite.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <string>

#include "diffnet/config.hpp"
#include "diffnet/error.hpp"
#include "diffnet/harness.hpp"

namespace {

using namespace diffnet;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> agents;
  std::optional<double> mu;
  bool normalize = false;
  bool no_normalize = false;
  std::optional<std::string> policy;
  std::optional<std::string> topology;
  std::optional<std::size_t> workers;
  std::optional<std::int64_t> iters;
  std::string replay;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "experiment JSON (defaults apply when omitted)");
  cmd->add_option("--seed", f.seed, "first seed; the seed list keeps its length");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--agents", f.agents, "single agent count K");
  cmd->add_option("--mu", f.mu, "base step size");
  auto* on = cmd->add_flag("--normalize", f.normalize, "divide mu by sum_k p_k^2 sigma_k^2");
  auto* off = cmd->add_flag("--no-normalize", f.no_normalize, "use mu as given");
  on->excludes(off);
  cmd->add_option("--policy", f.policy, "uniform | mh | path to a policy CSV");
  cmd->add_option("--topology", f.topology, "complete | ring | grid | random | star");
  cmd->add_option("--workers", f.workers, "threads for seeds and agents");
  cmd->add_option("--iters", f.iters, "iterations of a single run");
}

ExperimentConfig resolve(const Flags& f) {
  ExperimentConfig config = f.config.empty() ? ExperimentConfig{} : load_config(f.config);
  ConfigOverrides o;
  o.seed = f.seed;
  o.out = f.out;
  o.agents = f.agents;
  o.mu = f.mu;
  if (f.normalize) o.normalize = true;
  if (f.no_normalize) o.normalize = false;
  o.policy = f.policy;
  o.topology = f.topology;
  o.workers = f.workers;
  o.iters = f.iters;
  apply_overrides(config, o);
  config.validate();
  return config;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run_policy(const ExperimentConfig& config) {
  const auto report = cmd_policy(config);
  std::cout << "policy " << report.label << ": lambda2 = " << report.lambda2;
  if (report.objective) std::cout << ", objective = " << *report.objective;
  if (report.uniform_objective) std::cout << ", uniform objective = " << *report.uniform_objective;
  std::cout << "\nperron = " << report.perron.transpose() << "\nwrote " << config.out
            << "/policy.csv, policy.json\n";
  return exit_code::kOk;
}

int run_run(const ExperimentConfig& config, const std::string& replay) {
  if (!replay.empty() && !replay_matches(replay, config)) {
    std::cerr << "replay: " << replay << " was written by config " << read_config_hash(replay)
              << ", current config is " << config.hash() << '\n';
    return exit_code::kConfigError;
  }
  const auto record = cmd_run(config);
  std::cout << "wrote " << record.rows.size() << " rows to " << config.out << "/metrics.csv";
  if (record.escape_iter) std::cout << ", escaped at iteration " << *record.escape_iter;
  std::cout << " (" << record.wall_seconds << " s)\n";
  if (!replay.empty()) {
    const bool same = slurp(replay) == slurp(std::filesystem::path(config.out) / "metrics.csv");
    std::cout << "replay: " << (same ? "identical" : "DIFFERS") << '\n';
    if (!same) return exit_code::kCheckFailed;
  }
  return exit_code::kOk;
}

int run_sweep(const ExperimentConfig& config) {
  const auto result = cmd_sweep(config);
  for (const auto& c : result.cells) {
    std::cout << "K=" << c.agents << " " << c.policy << ": median " << c.stats.median << " (IQR "
              << c.stats.iqr() << ", censored " << c.stats.censored_count << "/"
              << c.stats.samples.size() << ")\n";
  }
  for (const auto& f : result.fits) {
    if (f.fit) {
      std::cout << f.policy << ": slope " << f.fit->slope << '\n';
    } else {
      std::cout << f.policy << ": " << f.note << '\n';
    }
  }
  std::cout << "wrote " << config.out << "/escape.csv, summary.json, escape_vs_K.svg\n";
  return exit_code::kOk;
}

int run_check(const ExperimentConfig& config) {
  const auto report = cmd_check(config);
  print_check_report(std::cout, report);
  return report.passed() ? exit_code::kOk : exit_code::kCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffusion learning over graphs: saddle-escape experiments"};
  app.require_subcommand(1);
  Flags flags;
  auto* policy = app.add_subcommand("policy", "build a combination policy and report p, lambda2, objective");
  auto* run = app.add_subcommand("run", "single diffusion run, metrics CSV");
  auto* sweep = app.add_subcommand("sweep", "escape times across agent counts and policies");
  auto* check = app.add_subcommand("check", "cross-module verification suite");
  for (auto* cmd : {policy, run, sweep, check}) add_common(cmd, flags);
  run->add_option("--replay", flags.replay, "metrics CSV to reproduce and compare byte-for-byte");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_code::kOk : exit_code::kConfigError;
  }

  try {
    const ExperimentConfig config = resolve(flags);
    if (policy->parsed()) return run_policy(config);
    if (run->parsed()) return run_run(config, flags.replay);
    if (sweep->parsed()) return run_sweep(config);
    return run_check(config);
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return exit_code::kDivergence;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code::kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code::kConfigError;
  }
}
