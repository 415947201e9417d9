#pragma once

// Experiment orchestration behind the command-line tool: scenario assembly,
// single runs, escape-time sweeps, policy reports and the check suite.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "diffnet/config.hpp"
#include "diffnet/engine.hpp"
#include "diffnet/landscape.hpp"
#include "diffnet/stationarity.hpp"
#include "diffnet/topology.hpp"

namespace diffnet {

namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kCheckFailed = 1;
inline constexpr int kConfigError = 2;
inline constexpr int kDivergence = 3;
}  // namespace exit_code

LossPtr make_loss(const LossSpec& spec);

/// "saddle" (the model's saddle point), "zero", or comma-separated coordinates.
Eigen::VectorXd initial_point(const std::string& init, const LossModel& model);

/// Per-agent isotropic noise levels for K agents.
std::vector<double> agent_sigma_iso(const NoiseSpec& spec, std::size_t agents, std::size_t dim);

/// Noise bounds from the profile file when given, else from the isotropic
/// levels. Empty when some agent is noiseless.
std::optional<NoiseProfile> agent_noise_profile(const NoiseSpec& spec,
                                                const std::vector<double>& sigma_iso,
                                                std::size_t dim);

/// Graph of the configured topology for K agents. Grids without explicit
/// dimensions use the most square factorization of K.
Graph make_graph(const TopologySpec& spec, std::size_t agents);

/// Combination matrix before validation. File policies are read as stored
/// and paired with the graph of their nonzero pattern.
struct RawPolicy {
  std::string label;
  Eigen::MatrixXd matrix;
  Graph graph;
};

RawPolicy resolve_policy(const ExperimentConfig& config, const std::string& policy,
                         std::size_t agents, const std::optional<NoiseProfile>& noise);

/// Agent count a policy implies: the file's size, or `requested`.
std::size_t policy_agents(const std::string& policy, std::size_t requested);

std::string policy_label(const std::string& policy);

/// Everything needed to simulate one (K, policy) cell.
struct Scenario {
  LossPtr loss;
  std::optional<CombinationPolicy> policy;
  std::optional<StochasticOracle> oracle;
  std::optional<NoiseProfile> noise;
  StepConfig step;
  std::optional<ClassifierParams> classifier;  // present when its parameters validate
  std::string classifier_error;
  std::string label;

  DiffusionSystem system(std::uint64_t seed, std::size_t workers) const;
};

/// Throws InvalidArgument when the policy is invalid, when mh or step
/// normalization is requested without a noise profile, or when sizes clash.
Scenario build_scenario(const ExperimentConfig& config, std::size_t agents, const std::string& policy);

// --- run ---

struct MetricRow {
  std::int64_t iter = 0;
  double value = 0.0;          // J(w_c)
  double grad_norm_sq = 0.0;   // |grad J(w_c)|^2
  double disagreement4 = 0.0;
  std::optional<Region> region;  // absent without a noise profile
  bool escaped = false;
};

struct RunRecord {
  std::string config_hash;
  std::vector<MetricRow> rows;
  std::optional<std::int64_t> escape_iter;
  double wall_seconds = 0.0;
};

inline constexpr const char* kMetricsHeader =
    "iter,J_centroid,grad_norm_sq,disagreement4,region,escaped_flag";

/// Runs `config.iters` diffusion steps for the first K, policy and seed and
/// streams metrics to `metrics` every `cadence` iterations plus the final one.
/// The escape flag becomes 1 once J(w_c) <= J(w_c,0) - epsilon_drop and stays
/// there. With `baseline`, the two centralized recursions run on the same
/// seed and are written alongside. Rows already written survive a
/// DivergenceError, which is rethrown.
RunRecord run_diffusion(const ExperimentConfig& config, std::ostream& metrics,
                        std::ostream* baseline = nullptr);

/// Writes <out>/metrics.csv (and baseline.csv when enabled).
RunRecord cmd_run(const ExperimentConfig& config);

/// Value of the `# config_hash=` header line, empty when absent.
std::string read_config_hash(const std::filesystem::path& csv);

/// The file was produced by this exact configuration.
bool replay_matches(const std::filesystem::path& csv, const ExperimentConfig& config);

// --- policy ---

struct PolicyReportSummary {
  std::string label;
  Eigen::MatrixXd matrix;
  Eigen::VectorXd perron;
  double lambda2 = 0.0;
  std::optional<double> objective;
  std::optional<double> uniform_objective;  // for mh, on the same graph
};

/// Writes <out>/policy.csv and <out>/policy.json.
PolicyReportSummary cmd_policy(const ExperimentConfig& config);

// --- sweep ---

struct SweepCell {
  std::size_t agents = 0;
  std::string policy;
  EscapeStats stats;
  std::optional<double> objective;
  double mu_effective = 0.0;
};

struct SweepTrajectory {
  std::size_t agents = 0;
  std::string policy;
  std::vector<std::pair<double, double>> points;  // (iter, J(w_c))
};

struct SweepFit {
  std::string policy;
  std::optional<ScalingFit> fit;
  std::string note;  // why the fit was skipped
};

struct SweepResult {
  std::vector<SweepCell> cells;  // ordered by K, then policy
  std::vector<SweepTrajectory> trajectories;
  std::vector<SweepFit> fits;
};

/// Log-log slope of median escape time vs K per policy; skipped (with a note)
/// when a median is censored or fewer than 3 distinct K remain.
std::vector<SweepFit> fit_sweep(const std::vector<SweepCell>& cells);

/// escape.csv, summary.json, escape_vs_K.svg and one trajectories_<policy>.svg
/// per policy.
void write_sweep_outputs(const std::filesystem::path& dir, const std::string& config_hash,
                         const SweepResult& result);

/// Escape statistics from given per-seed times (none censored).
EscapeStats stats_from_times(const std::vector<std::int64_t>& times);

SweepResult cmd_sweep(const ExperimentConfig& config);

// --- check ---

struct CheckItem {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct CheckReport {
  std::vector<CheckItem> items;
  bool passed() const;
};

CheckReport cmd_check(const ExperimentConfig& config);

void print_check_report(std::ostream& out, const CheckReport& report);

}  // namespace diffnet
