#pragma once

// Large-gradient / strict-saddle / second-order-stationary classification and
// empirical saddle-escape measurement.

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "diffnet/engine.hpp"
#include "diffnet/landscape.hpp"
#include "diffnet/topology.hpp"

namespace diffnet {

enum class Region { G, H, M };

std::string to_string(Region region);

/// Parameters of the G/H/M split. c1 = (1 - 2 mu delta) / 2 and
/// c2 = (delta / 2) sum_k p_k^2 sigma_k^2 are derived.
struct ClassifierParams {
  double mu_effective = 0.0;
  double delta = 0.0;
  double pi = 0.5;
  double tau = 0.01;
  Eigen::VectorXd perron;
  NoiseProfile noise;

  double c1() const;
  double c2() const;
  /// mu (c2 / c1) (1 + 1/pi): the squared-gradient boundary of G.
  double gradient_threshold() const;
  /// Throws InvalidArgument unless c1 > 0, c2 > 0, 0 < pi < 1 and tau > 0.
  void validate() const;
};

struct RegionLabel {
  Region region;
  double grad_norm_sq;
  std::optional<double> lambda_min;  // absent when the gradient test decided G
};

RegionLabel classify(const Eigen::VectorXd& w, const LossModel& model, const ClassifierParams& params);

/// Largest matrix dimension accepted by min_eigenvalue.
inline constexpr Eigen::Index kMaxEigenDimension = 2500;

/// Smallest eigenvalue of a symmetric matrix (dense self-adjoint solver).
/// Throws on asymmetry beyond 1e-8 or dimension above the guard.
double min_eigenvalue(const Eigen::MatrixXd& symmetric);

struct EscapeSample {
  std::uint64_t seed;
  std::int64_t escape_iter;  // max_iters when censored
  bool censored;
};

struct EscapeStats {
  std::vector<EscapeSample> samples;  // in seed order
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  std::size_t censored_count = 0;

  double iqr() const noexcept { return q3 - q1; }
  bool all_censored() const noexcept { return censored_count == samples.size(); }
  /// The median itself lies on a censored value.
  bool median_censored() const noexcept { return 2 * censored_count >= samples.size(); }
};

/// Quartiles by linear interpolation between order statistics.
double quantile(std::vector<double> values, double q);

struct EscapeOptions {
  double epsilon_drop = 0.01;
  std::int64_t max_iters = 200000;
  std::size_t workers = 1;  // seeds run concurrently, results ordered by seed
};

/// For every seed: start all agents at `saddle`, run diffusion, record the
/// first i with J(w_{c,i}) <= J(saddle) - epsilon_drop. Runs that never get
/// there are censored at max_iters. Throws if the saddle is not in H.
EscapeStats measure_escape(const DiffusionSystem& system, const ClassifierParams& params,
                           const Eigen::VectorXd& saddle, const std::vector<std::uint64_t>& seeds,
                           const EscapeOptions& options);

/// First escape iteration of a single seeded run, or nullopt (censored).
std::optional<std::int64_t> escape_time(const DiffusionSystem& system, const Eigen::VectorXd& saddle,
                                        double epsilon_drop, std::int64_t max_iters);

struct ScalingFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Least-squares fit of log(time) against log(K). Needs >= 3 distinct K.
ScalingFit escape_scaling_fit(const std::vector<double>& agents, const std::vector<double>& times);

/// Same, refusing any statistics whose median is censored.
ScalingFit escape_scaling_fit(const std::vector<double>& agents,
                              const std::vector<EscapeStats>& stats);

/// Default value drop: 5% of the gap to the known minimum, else 0.01.
double default_epsilon_drop(const LossModel& model, const Eigen::VectorXd& saddle);

}  // namespace diffnet
