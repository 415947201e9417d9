#include <doctest.h>

#include <cmath>
#include <vector>

#include "diffnet/engine.hpp"
#include "diffnet/error.hpp"
#include "diffnet/landscape.hpp"
#include "diffnet/stationarity.hpp"
#include "diffnet/topology.hpp"

using namespace diffnet;

namespace {

Eigen::MatrixXd random_iterates(std::size_t dim, std::size_t agents, std::uint64_t seed) {
  KeyedStream rng(seed, 99);
  Eigen::MatrixXd w(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(agents));
  for (auto& x : w.reshaped()) x = rng.normal();
  return w;
}

CombinationPolicy mh_ring(std::size_t agents, const NoiseProfile& noise) {
  return asymmetric_mh_policy(build_graph(TopologyKind::ring, agents), noise);
}

NoiseProfile alternating_noise(std::size_t agents) {
  std::vector<double> upper(agents), lower(agents);
  for (std::size_t k = 0; k < agents; ++k) {
    upper[k] = k % 2 == 0 ? 1.0 : 4.0;
    lower[k] = upper[k] / 2.0;
  }
  return {upper, lower};
}

}  // namespace

TEST_CASE("single agent on a quadratic contracts by 1 - mu") {
  const auto quad = QuadraticLoss::diagonal({1.0});
  const StochasticOracle oracle(quad, {0.0}, 1);
  const auto policy = uniform_policy(build_graph(TopologyKind::complete, 1));
  NetworkState s = NetworkState::replicated(Eigen::VectorXd::Ones(1), 1);
  s = diffusion_step(s, oracle, policy, StepConfig::plain(0.1));
  s = diffusion_step(s, oracle, policy, StepConfig::plain(0.1));
  CHECK(s.iterates(0, 0) == doctest::Approx(0.81).epsilon(1e-15));
  CHECK(s.iteration == 2);
}

TEST_CASE("diffusion step equals (W - mu G) A with the reported samples") {
  const auto nn = std::make_shared<NNSaddleLoss>(2, 0.01);
  const std::size_t k = 6;
  const auto noise = alternating_noise(k);
  const auto policy = mh_ring(k, noise);
  const StochasticOracle oracle(nn, std::vector<double>(k, 0.3), 5);
  NetworkState s{random_iterates(nn->dim(), k, 1), 7};
  Eigen::MatrixXd g;
  const auto next = diffusion_step(s, oracle, policy, StepConfig::plain(0.05), &g);
  for (std::size_t a = 0; a < k; ++a) {
    CHECK(g.col(static_cast<Eigen::Index>(a)) ==
          oracle.sample(a, s.iterates.col(static_cast<Eigen::Index>(a)), 7));
  }
  const Eigen::MatrixXd expected = (s.iterates - 0.05 * g) * policy.matrix();
  CHECK((next.iterates - expected).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK(next.iteration == 8);

  // Centroid of the combined state is the Perron-weighted average of the
  // adapted iterates.
  const Eigen::VectorXd adapted_centroid = (s.iterates - 0.05 * g) * policy.perron();
  CHECK((centroid(next, policy.perron()) - adapted_centroid).cwiseAbs().maxCoeff() <= 1e-11);
}

TEST_CASE("zero gradient reduces to pure combination") {
  const auto flat = std::make_shared<QuadraticLoss>(Eigen::MatrixXd::Zero(3, 3));
  const std::size_t k = 5;
  const auto policy = mh_ring(k, alternating_noise(k));
  const StochasticOracle oracle(flat, std::vector<double>(k, 0.0), 1);
  NetworkState s{random_iterates(3, k, 2), 0};
  const Eigen::MatrixXd start = s.iterates;
  const Eigen::VectorXd c0 = centroid(s, policy.perron());
  Eigen::MatrixXd power = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  for (int i = 0; i < 200; ++i) {
    s = diffusion_step(s, oracle, policy, StepConfig::plain(0.1));
    power = power * policy.matrix();
  }
  CHECK((s.iterates - start * power).cwiseAbs().maxCoeff() <= 1e-12);
  // Consensus on the Perron-weighted average.
  for (Eigen::Index a = 0; a < static_cast<Eigen::Index>(k); ++a) {
    CHECK((s.iterates.col(a) - c0).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("centralized baselines") {
  const auto quad = QuadraticLoss::diagonal({1.0, 1.0});
  const StochasticOracle oracle(quad, {0.0, 0.0, 0.0, 0.0}, 1);
  const Eigen::VectorXd p = Eigen::VectorXd::Constant(4, 0.25);
  const auto next = centralized_full_step(Eigen::Vector2d(1, 1), oracle, p, StepConfig::plain(0.1), 0);
  CHECK(next(0) == doctest::Approx(0.9));
  CHECK(next(1) == doctest::Approx(0.9));

  KeyedStream rng(12, 0);
  std::vector<int> counts(4, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[sample_agent(p, rng)];
  const double se = std::sqrt(n * 0.25 * 0.75);
  for (const int c : counts) CHECK(std::abs(c - 25000) <= 4.0 * se);

  Eigen::VectorXd point = Eigen::VectorXd::Zero(4);
  point(0) = 1.0;
  for (int i = 0; i < 1000; ++i) CHECK(sample_agent(point, rng) == 0);

  std::size_t chosen = 99;
  KeyedStream pick(3, 0);
  const auto sampled =
      centralized_sampled_step(Eigen::Vector2d(1, 1), oracle, p, StepConfig::plain(0.1), 0, pick, &chosen);
  CHECK(chosen < 4);
  CHECK(sampled(0) == doctest::Approx(0.9));
}

TEST_CASE("centroid and disagreement4") {
  NetworkState s;
  s.iterates = Eigen::MatrixXd(2, 2);
  s.iterates << 1, -1, 0, 0;
  const Eigen::Vector2d p(0.5, 0.5);
  CHECK(centroid(s, p).isZero(0.0));
  CHECK(disagreement4(s, p) == doctest::Approx(4.0));

  // Consensus has no disagreement, and translations do not change it.
  CHECK(disagreement4(NetworkState::replicated(Eigen::Vector3d(1, 2, 3), 4),
                      Eigen::VectorXd::Constant(4, 0.25)) == 0.0);
  NetworkState moved = s;
  moved.iterates.colwise() += Eigen::Vector2d(5.0, -2.0);
  CHECK(disagreement4(moved, p) == doctest::Approx(4.0));

  CHECK_THROWS_AS(centroid(s, Eigen::Vector3d::Constant(1.0 / 3)), InvalidArgument);
}

TEST_CASE("normalize_step examples") {
  const NoiseProfile one{{0.04}, {0.02}};
  CHECK(normalize_step(0.01, Eigen::VectorXd::Ones(1), one) == doctest::Approx(0.25));

  const NoiseProfile equal = NoiseProfile::uniform(2, 1.0, 0.5);
  CHECK(normalize_step(0.01, Eigen::Vector2d(0.5, 0.5), equal) == doctest::Approx(0.02));

  const NoiseProfile uneven{{1.0, 2.0}, {0.5, 1.0}};
  const Eigen::Vector2d p(2.0 / 3, 1.0 / 3);  // objective 6/9
  CHECK(normalize_step(0.01, p, uneven) == doctest::Approx(0.015));

  const auto step = StepConfig::make(0.01, true, p, uneven);
  CHECK(step.mu_effective == doctest::Approx(0.015));
  CHECK(StepConfig::make(0.01, false, p, uneven).mu_effective == 0.01);
}

TEST_CASE("centroid recursion holds for every step and fails for the wrong weights") {
  const auto nn = std::make_shared<NNSaddleLoss>(2, 0.01);
  const std::size_t k = 8;
  const auto noise = alternating_noise(k);
  const auto policy = mh_ring(k, noise);
  const StochasticOracle oracle(nn, std::vector<double>(k, 0.2), 17);
  const double mu = 0.01;
  std::vector<NetworkState> traj{NetworkState{random_iterates(nn->dim(), k, 4), 0}};
  std::vector<Eigen::MatrixXd> grads;
  for (int i = 0; i < 1000; ++i) {
    Eigen::MatrixXd g;
    traj.push_back(diffusion_step(traj.back(), oracle, policy, StepConfig::plain(mu), &g));
    grads.push_back(g);
  }
  CHECK(centroid_recursion_check(traj, grads, policy.perron(), mu) <= 1e-10);

  const Eigen::VectorXd wrong = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(k), 1.0 / k);
  CHECK(centroid_recursion_check(traj, grads, wrong, mu) > 1e-4);
}

TEST_CASE("aggregated noise variance falls like 1/K under uniform weights") {
  const auto quad = QuadraticLoss::diagonal({1.0, 1.0, 1.0});
  const Eigen::Vector3d w(0.5, -0.5, 0.1);
  const auto single = aggregated_noise_statistics(StochasticOracle(quad, {0.5}, 3),
                                                  Eigen::VectorXd::Ones(1), w, 100000);
  CHECK(single.second_moment == doctest::Approx(0.75).epsilon(0.02));
  for (const std::size_t k : {4, 16}) {
    const StochasticOracle oracle(quad, std::vector<double>(k, 0.5), 3);
    const auto agg = aggregated_noise_statistics(
        oracle, Eigen::VectorXd::Constant(static_cast<Eigen::Index>(k), 1.0 / k), w, 100000);
    CHECK(std::abs(agg.second_moment * k / single.second_moment - 1.0) <= 0.05);
  }
}

TEST_CASE("aggregated noise covariance sits between the declared bounds") {
  const auto nn = std::make_shared<NNSaddleLoss>(2, 0.01);
  const std::size_t k = 6;
  std::vector<double> sig(k);
  for (std::size_t a = 0; a < k; ++a) sig[a] = 0.1 + 0.05 * static_cast<double>(a);
  const StochasticOracle oracle(nn, sig, 8);
  const auto profile = oracle.isotropic_profile();
  const auto policy = asymmetric_mh_policy(build_graph(TopologyKind::ring, k), profile);
  const Eigen::VectorXd p = policy.perron();
  double lower = 0.0;
  for (std::size_t a = 0; a < k; ++a) lower += p(static_cast<Eigen::Index>(a)) * p(static_cast<Eigen::Index>(a)) * profile.sigma_lower_sq[a];
  const auto agg = aggregated_noise_statistics(oracle, p, Eigen::VectorXd::Zero(6), 20000);
  CHECK(agg.cov_min_eigenvalue >= lower - 4.0 * agg.cov_min_eigenvalue_se);
  // At the origin the data residual vanishes, so the noise is exactly isotropic.
  CHECK(std::abs(agg.second_moment - policy_objective(p, profile)) <= 4.0 * agg.second_moment_se);
}

TEST_CASE("divergence is detected") {
  const auto quad = QuadraticLoss::diagonal({1.0});
  const StochasticOracle oracle(quad, {0.0, 0.0}, 1);
  const auto policy = uniform_policy(build_graph(TopologyKind::complete, 2));
  NetworkState s = NetworkState::replicated(Eigen::VectorXd::Ones(1), 2);
  bool thrown = false;
  try {
    for (int i = 0; i < 200; ++i) s = diffusion_step(s, oracle, policy, StepConfig::plain(3.0));
  } catch (const DivergenceError& e) {
    thrown = true;
    CHECK(e.iteration() > 30);
    CHECK(e.iteration() < 60);
  }
  CHECK(thrown);
}

TEST_CASE("results do not depend on the worker count") {
  const auto nn = std::make_shared<NNSaddleLoss>(3, 0.01);
  const std::size_t k = 9;
  const auto noise = alternating_noise(k);
  const DiffusionSystem base(StochasticOracle(nn, std::vector<double>(k, 0.1), 2), mh_ring(k, noise),
                             StepConfig::make(0.01, true, mh_ring(k, noise).perron(), noise));
  NetworkState a = base.initial(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nn->dim())));
  NetworkState b = a;
  const auto parallel = base.with_workers(4);
  for (int i = 0; i < 50; ++i) {
    a = base.step(a);
    b = parallel.step(b);
  }
  CHECK(a.iterates == b.iterates);
  CHECK(base.with_seed(3).step(a).iterates != base.step(a).iterates);
}

TEST_CASE("burn-in examples") {
  CHECK(burn_in_iterations(0.01, 0.0) == 1);
  CHECK(burn_in_iterations(0.01, 0.5) == static_cast<std::int64_t>(std::ceil(4 * std::log(100.0) / std::log(2.0))));
  CHECK(burn_in_iterations(0.01, 1.0) == 100000);
  CHECK_THROWS_AS(burn_in_iterations(1.5, 0.5), InvalidArgument);
}

TEST_CASE("network disagreement scales like mu^4") {
  const auto quad = QuadraticLoss::diagonal({1.0, 0.5});
  const std::size_t k = 8;
  const auto policy = uniform_policy(build_graph(TopologyKind::ring, k));
  const StochasticOracle oracle(quad, std::vector<double>(k, 1.0), 3);
  std::vector<double> mus = {0.02, 0.01, 0.005, 0.0025}, x, y;
  for (const double mu : mus) {
    const DiffusionSystem system(oracle, policy, StepConfig::plain(mu));
    const auto m = mean_disagreement4(system, Eigen::Vector2d::Zero(), 20000);
    CHECK(m.mean > 0.0);
    x.push_back(mu);
    y.push_back(m.mean);
  }
  const auto fit = escape_scaling_fit(x, y);  // log-log least squares
  CHECK(fit.slope >= 3.5);
  CHECK(fit.slope <= 4.5);
}
