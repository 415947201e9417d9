#pragma once

// Experiment configuration: one JSON document, with command-line overrides
// applied on top. Precedence: built-in defaults < config file < flags.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "diffnet/topology.hpp"

namespace diffnet {

struct LossSpec {
  std::string kind = "nn_saddle";  // nn_saddle | quadratic
  std::size_t features = 2;        // nn_saddle: M
  double reg = 0.01;
  double shift = 0.5;
  std::vector<double> diag = {1.0, -1.0};  // quadratic: diagonal curvature
};

struct TopologySpec {
  TopologyKind kind = TopologyKind::complete;
  std::vector<std::size_t> grid;  // empty: square-ish factorization of K
  double edge_probability = 0.5;
  std::uint64_t seed = 1;
};

/// Per-agent noise. Lists shorter than K are repeated cyclically. Either
/// sigma_iso (per-axis std) or sigma_sq (total variance, sigma_iso derived as
/// sqrt(sigma_sq / dim)) may be given. `profile` optionally names a JSON
/// NoiseProfile file overriding the derived bounds.
struct NoiseSpec {
  std::vector<double> sigma_iso = {0.1};
  std::vector<double> sigma_sq;
  std::string profile;
};

struct ClassifierSpec {
  double tau = 0.01;
  double pi = 0.5;
  std::optional<double> epsilon_drop;
  std::optional<double> delta;
};

struct ExperimentConfig {
  LossSpec loss;
  TopologySpec topology;
  std::vector<std::string> policies = {"uniform"};  // uniform | mh | <csv path>
  std::vector<std::size_t> agents = {1, 2, 4, 8, 16};
  double mu = 3.75e-4;
  bool normalize = true;
  NoiseSpec noise;
  ClassifierSpec classifier;
  std::vector<std::uint64_t> seeds;  // default 1..20
  std::int64_t max_iters = 200000;
  std::int64_t iters = 2000;  // length of a single `run`
  std::string init = "saddle";  // saddle | zero | comma-separated coordinates
  std::string out = "out";
  std::int64_t cadence = 1;
  std::size_t workers = 1;
  bool baselines = false;

  ExperimentConfig();

  /// Throws InvalidArgument on any violated invariant (empty K list, repeated
  /// seeds, missing files, non-positive sizes).
  void validate() const;

  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& doc);

  /// FNV-1a hash of the canonical JSON form, excluding fields that cannot
  /// change results (`out`, `workers`).
  std::string hash() const;
};

ExperimentConfig load_config(const std::string& path);

/// Flag values that override config fields when present.
struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> agents;
  std::optional<double> mu;
  std::optional<bool> normalize;
  std::optional<std::string> policy;
  std::optional<std::string> topology;
  std::optional<std::size_t> workers;
  std::optional<std::int64_t> iters;
};

void apply_overrides(ExperimentConfig& config, const ConfigOverrides& overrides);

/// Entry k of a cyclic per-agent list.
double cyclic(const std::vector<double>& values, std::size_t k);

}  // namespace diffnet
