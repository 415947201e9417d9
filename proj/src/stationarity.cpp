#include "diffnet/stationarity.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "diffnet/error.hpp"
#include "diffnet/parallel.hpp"

namespace diffnet {

std::string to_string(Region region) {
  switch (region) {
    case Region::G: return "G";
    case Region::H: return "H";
    case Region::M: return "M";
  }
  return "?";
}

double ClassifierParams::c1() const { return 0.5 * (1.0 - 2.0 * mu_effective * delta); }

double ClassifierParams::c2() const { return 0.5 * delta * policy_objective(perron, noise); }

double ClassifierParams::gradient_threshold() const {
  return mu_effective * (c2() / c1()) * (1.0 + 1.0 / pi);
}

void ClassifierParams::validate() const {
  if (!(mu_effective > 0.0)) throw InvalidArgument("classifier: step size must be positive");
  if (!(delta > 0.0)) throw InvalidArgument("classifier: delta must be positive");
  if (!(pi > 0.0 && pi < 1.0)) throw InvalidArgument("classifier: pi must lie in (0, 1)");
  if (!(tau > 0.0)) throw InvalidArgument("classifier: tau must be positive");
  if (!(c1() > 0.0)) {
    throw InvalidArgument("classifier: c1 = (1 - 2 mu delta)/2 must be positive (mu*delta = " +
                          std::to_string(mu_effective * delta) + ")");
  }
  noise.validate();
  if (!(c2() > 0.0)) throw InvalidArgument("classifier: c2 must be positive");
}

RegionLabel classify(const Eigen::VectorXd& w, const LossModel& model,
                     const ClassifierParams& params) {
  params.validate();
  const Eigen::VectorXd grad = eval_loss(model, w).gradient;
  const double gg = grad.squaredNorm();
  if (gg >= params.gradient_threshold()) return {Region::G, gg, std::nullopt};
  const double lmin = min_eigenvalue(eval_hessian(model, w));
  return {lmin <= -params.tau ? Region::H : Region::M, gg, lmin};
}

double min_eigenvalue(const Eigen::MatrixXd& symmetric) {
  if (symmetric.rows() != symmetric.cols() || symmetric.rows() == 0) {
    throw InvalidArgument("min_eigenvalue: matrix must be square and non-empty");
  }
  if (symmetric.rows() > kMaxEigenDimension) {
    throw InvalidArgument("min_eigenvalue: dimension above guard");
  }
  if ((symmetric - symmetric.transpose()).cwiseAbs().maxCoeff() > 1e-8) {
    throw InvalidArgument("min_eigenvalue: matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(symmetric, Eigen::EigenvaluesOnly);
  return solver.eigenvalues()(0);
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidArgument("quantile of empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

std::optional<std::int64_t> escape_time(const DiffusionSystem& system, const Eigen::VectorXd& saddle,
                                        double epsilon_drop, std::int64_t max_iters) {
  const LossModel& model = system.oracle().base();
  const double target = model.value(saddle) - epsilon_drop;
  NetworkState state = system.initial(saddle);
  for (std::int64_t i = 1; i <= max_iters; ++i) {
    state = system.step(state);
    if (model.value(system.centroid(state)) <= target) return i;
  }
  return std::nullopt;
}

EscapeStats measure_escape(const DiffusionSystem& system, const ClassifierParams& params,
                           const Eigen::VectorXd& saddle, const std::vector<std::uint64_t>& seeds,
                           const EscapeOptions& options) {
  if (!(options.epsilon_drop > 0.0)) throw InvalidArgument("measure_escape: epsilon_drop must be positive");
  if (options.max_iters <= 0) throw InvalidArgument("measure_escape: max_iters must be positive");
  if (seeds.empty()) throw InvalidArgument("measure_escape: no seeds");
  const auto label = classify(saddle, system.oracle().base(), params);
  if (label.region != Region::H) {
    throw InvalidArgument("measure_escape: starting point is in region " + to_string(label.region) +
                          ", expected H");
  }

  EscapeStats stats;
  stats.samples.resize(seeds.size());
  const DiffusionSystem serial = system.with_workers(1);
  parallel_for(seeds.size(), options.workers, [&](std::size_t s) {
    const auto t = escape_time(serial.with_seed(seeds[s]), saddle, options.epsilon_drop,
                               options.max_iters);
    stats.samples[s] = {seeds[s], t.value_or(options.max_iters), !t.has_value()};
  });

  std::vector<double> times;
  for (const auto& sample : stats.samples) {
    times.push_back(static_cast<double>(sample.escape_iter));
    if (sample.censored) ++stats.censored_count;
  }
  stats.median = quantile(times, 0.5);
  stats.q1 = quantile(times, 0.25);
  stats.q3 = quantile(times, 0.75);
  return stats;
}

ScalingFit escape_scaling_fit(const std::vector<double>& agents, const std::vector<double>& times) {
  if (agents.size() != times.size()) throw InvalidArgument("escape_scaling_fit: length mismatch");
  if (std::set<double>(agents.begin(), agents.end()).size() < 3) {
    throw InvalidArgument("escape_scaling_fit: need at least 3 distinct agent counts");
  }
  const auto n = static_cast<double>(agents.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < agents.size(); ++i) {
    if (!(agents[i] > 0.0 && times[i] > 0.0)) {
      throw InvalidArgument("escape_scaling_fit: values must be positive");
    }
    const double x = std::log(agents[i]);
    const double y = std::log(times[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return {slope, (sy - slope * sx) / n};
}

ScalingFit escape_scaling_fit(const std::vector<double>& agents,
                              const std::vector<EscapeStats>& stats) {
  std::vector<double> medians;
  for (const auto& s : stats) {
    if (s.median_censored()) throw InvalidArgument("escape_scaling_fit: censored median");
    medians.push_back(s.median);
  }
  return escape_scaling_fit(agents, medians);
}

double default_epsilon_drop(const LossModel& model, const Eigen::VectorXd& saddle) {
  if (const auto minimum = model.known_minimum()) {
    const double gap = std::abs(model.value(saddle) - *minimum);
    if (gap > 0.0) return 0.05 * gap;
  }
  return 0.01;
}

}  // namespace diffnet
