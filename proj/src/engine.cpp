#include "diffnet/engine.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "diffnet/error.hpp"
#include "diffnet/parallel.hpp"

namespace diffnet {

NetworkState NetworkState::replicated(const Eigen::VectorXd& w, std::size_t agents) {
  NetworkState state;
  state.iterates = w.replicate(1, static_cast<Eigen::Index>(agents));
  return state;
}

namespace {

void require_weights(const NetworkState& state, const Eigen::VectorXd& perron) {
  if (static_cast<std::size_t>(perron.size()) != state.agents()) {
    throw InvalidArgument("weight vector length " + std::to_string(perron.size()) +
                          " does not match agent count " + std::to_string(state.agents()));
  }
}

void guard_finite(const Eigen::VectorXd& w, std::size_t agent, std::int64_t iteration) {
  for (const double x : w) {
    if (!std::isfinite(x) || std::abs(x) > kDivergenceBound) {
      throw DivergenceError(agent, iteration);
    }
  }
}

}  // namespace

Eigen::VectorXd centroid(const NetworkState& state, const Eigen::VectorXd& perron) {
  require_weights(state, perron);
  return state.iterates * perron;
}

double disagreement4(const NetworkState& state, const Eigen::VectorXd& perron) {
  const Eigen::VectorXd c = centroid(state, perron);
  const double sq = (state.iterates.colwise() - c).squaredNorm();
  return sq * sq;
}

double normalize_step(double mu, const Eigen::VectorXd& perron, const NoiseProfile& noise) {
  if (!(mu > 0.0)) throw InvalidArgument("normalize_step: mu must be positive");
  const double denom = policy_objective(perron, noise);
  if (!(denom > 0.0)) throw InvalidArgument("normalize_step: zero noise denominator");
  return mu / denom;
}

StepConfig StepConfig::plain(double mu) {
  if (!(mu > 0.0)) throw InvalidArgument("step size must be positive");
  return {mu, false, mu};
}

StepConfig StepConfig::make(double mu, bool normalized, const Eigen::VectorXd& perron,
                            const NoiseProfile& noise) {
  if (!normalized) return plain(mu);
  return {mu, true, normalize_step(mu, perron, noise)};
}

NetworkState diffusion_step(const NetworkState& state, const StochasticOracle& oracle,
                            const Eigen::MatrixXd& combination, const StepConfig& step,
                            Eigen::MatrixXd* sampled, std::size_t workers) {
  const auto agents = state.agents();
  if (combination.rows() != combination.cols() ||
      static_cast<std::size_t>(combination.cols()) != agents || oracle.agents() != agents) {
    throw InvalidArgument("diffusion_step: agent counts of state, policy and oracle differ");
  }
  if (state.dim() != oracle.dim()) throw InvalidArgument("diffusion_step: dimension mismatch");

  Eigen::MatrixXd grads(state.iterates.rows(), state.iterates.cols());
  Eigen::MatrixXd adapted(state.iterates.rows(), state.iterates.cols());
  parallel_for(agents, workers, [&](std::size_t k) {
    const auto col = static_cast<Eigen::Index>(k);
    grads.col(col) = oracle.sample(k, state.iterates.col(col), state.iteration);
    adapted.col(col) = state.iterates.col(col) - step.mu_effective * grads.col(col);
    guard_finite(adapted.col(col), k, state.iteration + 1);
  });

  NetworkState next;
  next.iteration = state.iteration + 1;
  next.iterates = adapted * combination;  // column k: sum_l a_{lk} phi_l
  for (std::size_t k = 0; k < agents; ++k) {
    guard_finite(next.iterates.col(static_cast<Eigen::Index>(k)), k, next.iteration);
  }
  if (sampled) *sampled = std::move(grads);
  return next;
}

NetworkState diffusion_step(const NetworkState& state, const StochasticOracle& oracle,
                            const CombinationPolicy& policy, const StepConfig& step,
                            Eigen::MatrixXd* sampled, std::size_t workers) {
  return diffusion_step(state, oracle, policy.matrix(), step, sampled, workers);
}

Eigen::VectorXd centralized_full_step(const Eigen::VectorXd& w, const StochasticOracle& oracle,
                                      const Eigen::VectorXd& perron, const StepConfig& step,
                                      std::int64_t iteration) {
  if (static_cast<std::size_t>(perron.size()) != oracle.agents()) {
    throw InvalidArgument("centralized_full_step: weight length mismatch");
  }
  Eigen::VectorXd direction = Eigen::VectorXd::Zero(w.size());
  for (std::size_t k = 0; k < oracle.agents(); ++k) {
    direction += perron(static_cast<Eigen::Index>(k)) * oracle.sample(k, w, iteration);
  }
  Eigen::VectorXd next = w - step.mu_effective * direction;
  guard_finite(next, 0, iteration + 1);
  return next;
}

std::size_t sample_agent(const Eigen::VectorXd& perron, KeyedStream& rng) {
  const double u = rng.uniform() * perron.sum();
  double acc = 0.0;
  for (Eigen::Index k = 0; k < perron.size(); ++k) {
    acc += perron(k);
    if (u < acc) return static_cast<std::size_t>(k);
  }
  // Rounding at the top end: fall back to the last agent with positive weight.
  for (Eigen::Index k = perron.size(); k-- > 0;)
    if (perron(k) > 0.0) return static_cast<std::size_t>(k);
  throw InvalidArgument("sample_agent: weights are all zero");
}

Eigen::VectorXd centralized_sampled_step(const Eigen::VectorXd& w, const StochasticOracle& oracle,
                                         const Eigen::VectorXd& perron, const StepConfig& step,
                                         std::int64_t iteration, KeyedStream& rng,
                                         std::size_t* chosen) {
  if (static_cast<std::size_t>(perron.size()) != oracle.agents()) {
    throw InvalidArgument("centralized_sampled_step: weight length mismatch");
  }
  const auto k = sample_agent(perron, rng);
  if (chosen) *chosen = k;
  Eigen::VectorXd next = w - step.mu_effective * oracle.sample(k, w, iteration);
  guard_finite(next, k, iteration + 1);
  return next;
}

double centroid_recursion_check(const std::vector<NetworkState>& trajectory,
                                const std::vector<Eigen::MatrixXd>& gradients,
                                const Eigen::VectorXd& perron, double mu_effective) {
  if (trajectory.size() < 2) return 0.0;
  if (gradients.size() + 1 < trajectory.size()) {
    throw InvalidArgument("centroid_recursion_check: missing recorded gradients");
  }
  double worst = 0.0;
  for (std::size_t i = 1; i < trajectory.size(); ++i) {
    const Eigen::VectorXd predicted =
        centroid(trajectory[i - 1], perron) - mu_effective * (gradients[i - 1] * perron);
    const Eigen::VectorXd actual = centroid(trajectory[i], perron);
    worst = std::max(worst, (actual - predicted).cwiseAbs().maxCoeff());
  }
  return worst;
}

std::int64_t burn_in_iterations(double mu, double lambda2) {
  if (!(mu > 0.0 && mu < 1.0)) throw InvalidArgument("burn_in_iterations: mu must lie in (0,1)");
  if (!(lambda2 > 0.0)) return 1;
  if (!(lambda2 < 1.0)) return 100000;
  const double value = std::ceil(4.0 * std::log(1.0 / mu) / std::log(1.0 / lambda2));
  return std::clamp<std::int64_t>(static_cast<std::int64_t>(value), 1, 100000);
}

AggregatedNoiseStats aggregated_noise_statistics(const StochasticOracle& oracle,
                                                 const Eigen::VectorXd& perron,
                                                 const Eigen::VectorXd& w, std::size_t draws) {
  if (static_cast<std::size_t>(perron.size()) != oracle.agents()) {
    throw InvalidArgument("aggregated_noise_statistics: weight length mismatch");
  }
  if (draws < 2) throw InvalidArgument("aggregated_noise_statistics: need at least two draws");
  const Eigen::VectorXd exact = eval_loss(oracle.base(), w).gradient;
  const auto d = w.size();
  const auto n = static_cast<double>(draws);
  Eigen::MatrixXd samples(d, static_cast<Eigen::Index>(draws));
  for (std::size_t i = 0; i < draws; ++i) {
    Eigen::VectorXd s = Eigen::VectorXd::Zero(d);
    for (std::size_t k = 0; k < oracle.agents(); ++k) {
      s += perron(static_cast<Eigen::Index>(k)) *
           (oracle.sample(k, w, static_cast<std::int64_t>(i)) - exact);
    }
    samples.col(static_cast<Eigen::Index>(i)) = s;
  }
  auto mean_and_se = [n](const Eigen::ArrayXd& x) {
    const double mean = x.mean();
    return std::pair{mean, std::sqrt((x - mean).square().sum() / (n - 1.0) / n)};
  };

  AggregatedNoiseStats out;
  std::tie(out.second_moment, out.second_moment_se) =
      mean_and_se(samples.colwise().squaredNorm().transpose().array());

  // Second-moment matrix (the noise is zero-mean by construction).
  const Eigen::MatrixXd cov = samples * samples.transpose() / n;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  auto directional = [&](Eigen::Index idx) {
    const Eigen::VectorXd dir = solver.eigenvectors().col(idx);
    return mean_and_se((dir.transpose() * samples).transpose().array().square());
  };
  out.cov_min_eigenvalue = solver.eigenvalues()(0);
  out.cov_min_eigenvalue_se = directional(0).second;
  out.cov_max_eigenvalue = solver.eigenvalues()(d - 1);
  out.cov_max_eigenvalue_se = directional(d - 1).second;
  return out;
}

// ---------------------------------------------------------------------------

DiffusionSystem::DiffusionSystem(StochasticOracle oracle, CombinationPolicy policy,
                                 StepConfig step, std::size_t workers)
    : oracle_(std::move(oracle)), policy_(std::move(policy)), step_(step), workers_(workers) {
  if (oracle_.agents() != policy_.size()) {
    throw InvalidArgument("diffusion system: oracle has " + std::to_string(oracle_.agents()) +
                          " agents, policy has " + std::to_string(policy_.size()));
  }
}

DiffusionSystem DiffusionSystem::with_seed(std::uint64_t seed) const {
  return DiffusionSystem(oracle_.with_seed(seed), policy_, step_, workers_);
}

DiffusionSystem DiffusionSystem::with_workers(std::size_t workers) const {
  return DiffusionSystem(oracle_, policy_, step_, workers);
}

NetworkState DiffusionSystem::initial(const Eigen::VectorXd& w0) const {
  if (static_cast<std::size_t>(w0.size()) != oracle_.dim()) {
    throw InvalidArgument("initial point has wrong dimension");
  }
  return NetworkState::replicated(w0, agents());
}

NetworkState DiffusionSystem::step(const NetworkState& state, Eigen::MatrixXd* sampled) const {
  return diffusion_step(state, oracle_, policy_, step_, sampled, workers_);
}

Eigen::VectorXd DiffusionSystem::centroid(const NetworkState& state) const {
  return diffnet::centroid(state, policy_.perron());
}

DisagreementMeasurement mean_disagreement4(const DiffusionSystem& system, const Eigen::VectorXd& w0,
                                           std::int64_t samples) {
  if (samples <= 0) throw InvalidArgument("mean_disagreement4: samples must be positive");
  DisagreementMeasurement out;
  out.burn_in = burn_in_iterations(system.step_config().mu_effective, system.policy().lambda2());
  NetworkState state = system.initial(w0);
  for (std::int64_t i = 0; i < out.burn_in; ++i) state = system.step(state);

  // Batch means over 50 consecutive blocks for the standard error.
  constexpr std::int64_t kBatches = 50;
  const std::int64_t per_batch = std::max<std::int64_t>(1, samples / kBatches);
  std::vector<double> batch_means;
  double total = 0.0, batch = 0.0;
  std::int64_t count = 0, in_batch = 0;
  for (std::int64_t i = 0; i < samples; ++i) {
    state = system.step(state);
    const double value = disagreement4(state, system.policy().perron());
    total += value;
    batch += value;
    ++count;
    if (++in_batch == per_batch) {
      batch_means.push_back(batch / static_cast<double>(per_batch));
      batch = 0.0;
      in_batch = 0;
    }
  }
  out.mean = total / static_cast<double>(count);
  if (batch_means.size() > 1) {
    double var = 0.0;
    for (const double b : batch_means) var += (b - out.mean) * (b - out.mean);
    var /= static_cast<double>(batch_means.size() - 1);
    out.standard_error = std::sqrt(var / static_cast<double>(batch_means.size()));
  }
  return out;
}

}  // namespace diffnet
