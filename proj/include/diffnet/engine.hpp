#pragma once

// Adapt-then-combine diffusion, centralized baselines, centroid bookkeeping,
// step-size normalization and network-disagreement measurement.

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "diffnet/landscape.hpp"
#include "diffnet/rng.hpp"
#include "diffnet/topology.hpp"

namespace diffnet {

/// Stacked iterates at one time index; column k holds w_{k,i}.
struct NetworkState {
  Eigen::MatrixXd iterates;
  std::int64_t iteration = 0;

  /// Every agent starts at w.
  static NetworkState replicated(const Eigen::VectorXd& w, std::size_t agents);

  std::size_t agents() const noexcept { return static_cast<std::size_t>(iterates.cols()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(iterates.rows()); }
};

/// sum_k p_k w_k.
Eigen::VectorXd centroid(const NetworkState& state, const Eigen::VectorXd& perron);

/// |W - (1 p^T (x) I) W|^4: fourth power of the Euclidean norm of the stacked
/// deviations from the centroid.
double disagreement4(const NetworkState& state, const Eigen::VectorXd& perron);

/// mu / sum_k p_k^2 sigma_k^2.
double normalize_step(double mu, const Eigen::VectorXd& perron, const NoiseProfile& noise);

struct StepConfig {
  double mu = 0.0;
  bool normalized = false;
  double mu_effective = 0.0;

  static StepConfig plain(double mu);
  static StepConfig make(double mu, bool normalized, const Eigen::VectorXd& perron,
                         const NoiseProfile& noise);
};

/// Entries beyond this magnitude count as divergence.
inline constexpr double kDivergenceBound = 1e12;

/// One synchronous diffusion round:
///   phi_k = w_k - mu' * g_k(w_k)           (adapt, every agent)
///   w_k^+ = sum_l a_{lk} phi_l             (combine)
/// The sampled gradients g_k are written to `sampled` (dim x K) when given.
/// Adapt steps run on up to `workers` threads; the result is independent of
/// the worker count. Throws DivergenceError on non-finite or exploding
/// iterates.
NetworkState diffusion_step(const NetworkState& state, const StochasticOracle& oracle,
                            const Eigen::MatrixXd& combination, const StepConfig& step,
                            Eigen::MatrixXd* sampled = nullptr, std::size_t workers = 1);

NetworkState diffusion_step(const NetworkState& state, const StochasticOracle& oracle,
                            const CombinationPolicy& policy, const StepConfig& step,
                            Eigen::MatrixXd* sampled = nullptr, std::size_t workers = 1);

/// Centralized step with the p-weighted sum of all K stochastic gradients at w.
Eigen::VectorXd centralized_full_step(const Eigen::VectorXd& w, const StochasticOracle& oracle,
                                      const Eigen::VectorXd& perron, const StepConfig& step,
                                      std::int64_t iteration);

/// Draws k with probability p_k.
std::size_t sample_agent(const Eigen::VectorXd& perron, KeyedStream& rng);

/// Centralized step using one stochastic gradient from an agent drawn with
/// probability p_k. The chosen agent is reported through `chosen` when given.
Eigen::VectorXd centralized_sampled_step(const Eigen::VectorXd& w, const StochasticOracle& oracle,
                                         const Eigen::VectorXd& perron, const StepConfig& step,
                                         std::int64_t iteration, KeyedStream& rng,
                                         std::size_t* chosen = nullptr);

/// Max infinity-norm deviation from
///   w_{c,i} = w_{c,i-1} - mu' sum_k p_k g_{k,i}
/// along a recorded trajectory. `gradients[i]` holds the samples used to go
/// from trajectory[i] to trajectory[i + 1].
double centroid_recursion_check(const std::vector<NetworkState>& trajectory,
                                const std::vector<Eigen::MatrixXd>& gradients,
                                const Eigen::VectorXd& perron, double mu_effective);

/// ceil(4 ln(1/mu) / ln(1/lambda2)), at least 1 and at most 1e5.
std::int64_t burn_in_iterations(double mu, double lambda2);

/// Monte-Carlo statistics of the aggregated noise s = sum_k p_k s_k at a fixed
/// point, where s_k is agent k's stochastic gradient minus the exact one.
struct AggregatedNoiseStats {
  double second_moment = 0.0;  // E|s|^2
  double second_moment_se = 0.0;
  double cov_min_eigenvalue = 0.0;
  double cov_min_eigenvalue_se = 0.0;
  double cov_max_eigenvalue = 0.0;
  double cov_max_eigenvalue_se = 0.0;
};

AggregatedNoiseStats aggregated_noise_statistics(const StochasticOracle& oracle,
                                                 const Eigen::VectorXd& perron,
                                                 const Eigen::VectorXd& w, std::size_t draws);

/// A configured diffusion network: oracle, policy and step size.
class DiffusionSystem {
 public:
  DiffusionSystem(StochasticOracle oracle, CombinationPolicy policy, StepConfig step,
                  std::size_t workers = 1);

  const StochasticOracle& oracle() const noexcept { return oracle_; }
  const CombinationPolicy& policy() const noexcept { return policy_; }
  const StepConfig& step_config() const noexcept { return step_; }
  std::size_t workers() const noexcept { return workers_; }
  std::size_t agents() const noexcept { return policy_.size(); }

  DiffusionSystem with_seed(std::uint64_t seed) const;
  DiffusionSystem with_workers(std::size_t workers) const;

  NetworkState initial(const Eigen::VectorXd& w0) const;
  NetworkState step(const NetworkState& state, Eigen::MatrixXd* sampled = nullptr) const;
  Eigen::VectorXd centroid(const NetworkState& state) const;

 private:
  StochasticOracle oracle_;
  CombinationPolicy policy_;
  StepConfig step_;
  std::size_t workers_;
};

struct DisagreementMeasurement {
  double mean = 0.0;            // time average of disagreement4 after burn-in
  double standard_error = 0.0;  // batch-means estimate
  std::int64_t burn_in = 0;
};

/// Runs the system from w0 (all agents), discards burn_in_iterations(mu',
/// lambda2) steps and averages disagreement4 over the next `samples` steps.
DisagreementMeasurement mean_disagreement4(const DiffusionSystem& system, const Eigen::VectorXd& w0,
                                           std::int64_t samples);

}  // namespace diffnet
