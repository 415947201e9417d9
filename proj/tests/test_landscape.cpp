#include <doctest.h>

#include <cmath>
#include <memory>

#include "diffnet/error.hpp"
#include "diffnet/landscape.hpp"
#include "diffnet/rng.hpp"
#include "diffnet/stationarity.hpp"

using namespace diffnet;

namespace {

Eigen::VectorXd random_point(KeyedStream& rng, std::size_t dim, double scale) {
  Eigen::VectorXd w(static_cast<Eigen::Index>(dim));
  for (auto& x : w) x = scale * rng.normal();
  return w;
}

// Cubic without an analytic Hessian, to exercise the finite-difference default.
class CubicLoss final : public LossModel {
 public:
  std::string name() const override { return "cubic"; }
  std::size_t dim() const override { return 2; }
  double value(const Eigen::VectorXd& w) const override {
    return w(0) * w(0) * w(0) / 3.0 + w(0) * w(1) * w(1);
  }
  Eigen::VectorXd gradient(const Eigen::VectorXd& w) const override {
    return Eigen::Vector2d(w(0) * w(0) + w(1) * w(1), 2.0 * w(0) * w(1));
  }
  Smoothness smoothness() const override { return {}; }
};

// Direct Monte-Carlo of E log(1 + exp(-y w1^T W2 h)) + reg/2 |w|^2 with
// h = y * shift * 1 + z, independent of the quadrature in the library.
std::pair<double, double> nn_value_monte_carlo(const NNSaddleLoss& loss, const Eigen::VectorXd& w,
                                               int draws) {
  const auto m = static_cast<Eigen::Index>(loss.features());
  const Eigen::VectorXd w1 = w.head(m);
  Eigen::MatrixXd w2(m, m);
  for (Eigen::Index r = 0; r < m; ++r)
    for (Eigen::Index c = 0; c < m; ++c) w2(r, c) = w(m + r * m + c);
  KeyedStream rng(4242, 1);
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < draws; ++i) {
    const double y = rng.uniform() < 0.5 ? -1.0 : 1.0;
    Eigen::VectorXd h(m);
    for (Eigen::Index j = 0; j < m; ++j) h(j) = y * loss.shift() + rng.normal();
    const double margin = y * w1.dot(w2 * h);
    const double f = std::log1p(std::exp(-margin));
    sum += f;
    sum_sq += f * f;
  }
  const double mean = sum / draws;
  const double se = std::sqrt((sum_sq / draws - mean * mean) / draws);
  return {mean + 0.5 * loss.reg() * w.squaredNorm(), se};
}

}  // namespace

TEST_CASE("eval_loss: quadratic examples") {
  const auto iso = QuadraticLoss::diagonal({1.0, 1.0});
  const auto e = eval_loss(*iso, Eigen::Vector2d(3.0, 4.0));
  CHECK(e.value == 12.5);
  CHECK(e.gradient == Eigen::Vector2d(3.0, 4.0));

  const auto saddle = QuadraticLoss::diagonal({1.0, -1.0});
  const auto z = eval_loss(*saddle, Eigen::Vector2d::Zero());
  CHECK(z.value == 0.0);
  CHECK(z.gradient.isZero(0.0));

  CHECK_THROWS_AS(eval_loss(*saddle, Eigen::Vector3d::Zero()), InvalidArgument);
}

TEST_CASE("eval_loss: NNSaddleLoss at the origin is log 2 with zero gradient") {
  for (const std::size_t m : {1, 2, 3}) {
    const NNSaddleLoss loss(m, 0.01);
    const Eigen::VectorXd w0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(loss.dim()));
    const auto e = eval_loss(loss, w0);
    CHECK(e.value == doctest::Approx(std::log(2.0)).epsilon(1e-13));
    CHECK(e.gradient.isZero(0.0));
  }
}

TEST_CASE("NNSaddleLoss value matches direct Monte-Carlo") {
  const NNSaddleLoss loss(2, 0.01, 0.5);
  KeyedStream rng(7, 3);
  for (int j = 0; j < 3; ++j) {
    const Eigen::VectorXd w = random_point(rng, loss.dim(), 0.7);
    const auto [mc, se] = nn_value_monte_carlo(loss, w, 200000);
    CHECK(std::abs(loss.value(w) - mc) <= 4.0 * se);
  }
}

TEST_CASE("NNSaddleLoss sign symmetry") {
  const NNSaddleLoss loss(3, 0.01);
  KeyedStream rng(11, 0);
  for (int j = 0; j < 10; ++j) {
    const Eigen::VectorXd w = random_point(rng, loss.dim(), 1.0);
    CHECK(loss.value(w) == doctest::Approx(loss.value(-w)).epsilon(1e-13));
  }
}

TEST_CASE("eval_hessian: quadratic and NN origin") {
  const auto saddle = QuadraticLoss::diagonal({1.0, -1.0});
  KeyedStream rng(5, 0);
  for (int j = 0; j < 5; ++j) {
    CHECK(eval_hessian(*saddle, random_point(rng, 2, 3.0)) == Eigen::Matrix2d(Eigen::Vector2d(1, -1).asDiagonal()));
  }

  const NNSaddleLoss loss(2, 0.01);
  const Eigen::VectorXd w0 = Eigen::VectorXd::Zero(6);
  const Eigen::MatrixXd fd = finite_difference_hessian(loss, w0);
  CHECK((fd - fd.transpose()).cwiseAbs().maxCoeff() <= 1e-8);
  const double lmin = min_eigenvalue(0.5 * (fd + fd.transpose()));
  CHECK(lmin < 0.0);
  // Closed form at the origin: reg - shift * sqrt(M) / 2.
  CHECK(std::abs(lmin - (0.01 - 0.5 * std::sqrt(2.0) / 2.0)) <= 1e-6);
  CHECK(std::abs(min_eigenvalue(loss.hessian(w0)) - loss.origin_min_eigenvalue()) <= 1e-10);
}

TEST_CASE("NNSaddleLoss Hessian is symmetric everywhere") {
  const NNSaddleLoss loss(3, 0.01);
  KeyedStream rng(13, 0);
  for (int j = 0; j < 20; ++j) {
    const Eigen::VectorXd w = random_point(rng, loss.dim(), 1.0);
    const Eigen::MatrixXd h = loss.hessian(w);
    CHECK((h - h.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
    const Eigen::MatrixXd fd = finite_difference_hessian(loss, w);
    CHECK((fd - fd.transpose()).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("default Hessian falls back to finite differences") {
  const CubicLoss cubic;
  const Eigen::Vector2d w(0.7, -1.3);
  Eigen::Matrix2d exact;
  exact << 2 * w(0), 2 * w(1), 2 * w(1), 2 * w(0);
  CHECK((cubic.hessian(w) - exact).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK(check_hessian(cubic, w) <= 1e-6);
}

TEST_CASE("check_gradient examples") {
  const auto quad = QuadraticLoss::diagonal({2.0, 0.5, -1.0});
  KeyedStream rng(17, 0);
  for (int j = 0; j < 10; ++j) CHECK(check_gradient(*quad, random_point(rng, 3, 2.0)) <= 1e-8);

  const NNSaddleLoss nn3(3, 0.01);
  for (int j = 0; j < 10; ++j) CHECK(check_gradient(nn3, random_point(rng, nn3.dim(), 1.0)) <= 1e-5);

  const auto saddle = QuadraticLoss::diagonal({1.0, -1.0});
  CHECK(check_gradient(*saddle, Eigen::Vector2d::Zero()) == 0.0);
}

TEST_CASE("gradient and Hessian checks on 100 random points per loss") {
  std::vector<LossPtr> losses = {QuadraticLoss::diagonal({1.0, -1.0}),
                                 QuadraticLoss::diagonal({1.0, 0.5, 3.0}),
                                 std::make_shared<NNSaddleLoss>(2, 0.01),
                                 std::make_shared<NNSaddleLoss>(3, 0.01)};
  KeyedStream rng(23, 0);
  for (const auto& loss : losses) {
    double worst_g = 0.0, worst_h = 0.0;
    for (int j = 0; j < 100; ++j) {
      const Eigen::VectorXd w = random_point(rng, loss->dim(), 1.0);
      worst_g = std::max(worst_g, check_gradient(*loss, w));
      worst_h = std::max(worst_h, check_hessian(*loss, w));
    }
    INFO(loss->name());
    CHECK(worst_g <= 1e-5);
    CHECK(worst_h <= 1e-5);
  }
}

TEST_CASE("strict-saddle certificate for M in {2,3,5}") {
  for (const std::size_t m : {2, 3, 5}) {
    const NNSaddleLoss loss(m, 0.01);
    const Eigen::VectorXd w0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(loss.dim()));
    CHECK(loss.gradient(w0).isZero(0.0));
    CHECK(min_eigenvalue(loss.hessian(w0)) <= -0.01);
  }
}

TEST_CASE("known minimum and smoothness constants") {
  CHECK(QuadraticLoss::diagonal({1.0, 2.0})->known_minimum() == 0.0);
  CHECK_FALSE(QuadraticLoss::diagonal({1.0, -2.0})->known_minimum().has_value());
  CHECK(QuadraticLoss::diagonal({1.0, -2.0})->smoothness().gradient_lipschitz == doctest::Approx(2.0));

  const NNSaddleLoss loss(2, 0.01);
  const auto jmin = loss.known_minimum();
  REQUIRE(jmin.has_value());
  CHECK(*jmin < std::log(2.0));
  CHECK(*jmin > 0.0);
  const auto s = loss.smoothness();
  CHECK(s.gradient_lipschitz > 0.0);
  CHECK(s.hessian_lipschitz > 0.0);
  CHECK(s.gradient_disagreement == 0.0);
}

TEST_CASE("oracle: determinism and zero-noise limit") {
  const auto quad = QuadraticLoss::diagonal({1.0, 2.0});
  const StochasticOracle exact(quad, {0.0, 0.0}, 1);
  const Eigen::Vector2d w(0.3, -0.4);
  CHECK(exact.sample(1, w, 5) == quad->gradient(w));

  const auto nn = std::make_shared<NNSaddleLoss>(2, 0.01);
  const StochasticOracle noisy(nn, {0.1, 0.2, 0.3}, 9);
  KeyedStream rng(3, 0);
  const Eigen::VectorXd v = random_point(rng, nn->dim(), 0.5);
  CHECK(noisy.sample(2, v, 17) == noisy.sample(2, v, 17));
  CHECK(noisy.sample(2, v, 17) != noisy.sample(2, v, 18));
  CHECK(noisy.sample(2, v, 17) != noisy.with_seed(10).sample(2, v, 17));
  CHECK_THROWS_AS(noisy.sample(3, v, 0), InvalidArgument);
  CHECK_THROWS_AS(noisy.sample(0, Eigen::VectorXd::Zero(2), 0), InvalidArgument);
}

TEST_CASE("oracle: unbiased and uncorrelated across agents") {
  const auto nn = std::make_shared<NNSaddleLoss>(2, 0.01);
  const StochasticOracle oracle(nn, {0.1, 0.1}, 21);
  KeyedStream rng(8, 0);
  const Eigen::VectorXd w = random_point(rng, nn->dim(), 0.5);
  const Eigen::VectorXd exact = nn->gradient(w);
  const int n = 100000;
  const auto d = static_cast<Eigen::Index>(nn->dim());
  Eigen::MatrixXd s0(d, n), s1(d, n);
  for (int i = 0; i < n; ++i) {
    s0.col(i) = oracle.sample(0, w, i) - exact;
    s1.col(i) = oracle.sample(1, w, i) - exact;
  }
  for (Eigen::Index j = 0; j < d; ++j) {
    const Eigen::ArrayXd x = s0.row(j).transpose().array();
    const double se = std::sqrt((x - x.mean()).square().sum() / (n - 1.0) / n);
    CHECK(std::abs(x.mean()) <= 4.0 * se);
    for (Eigen::Index l = 0; l < d; ++l) {
      const Eigen::ArrayXd prod = x * s1.row(l).transpose().array();
      const double pse = std::sqrt((prod - prod.mean()).square().sum() / (n - 1.0) / n);
      CHECK(std::abs(prod.mean()) <= 4.0 * pse);
    }
  }
}

TEST_CASE("estimate_noise_constants examples") {
  const auto quad = QuadraticLoss::diagonal({1.0, 1.0, 1.0});
  const double sigma = 0.3;
  const StochasticOracle iso(quad, {sigma}, 4);
  const auto est = estimate_noise_constants(iso, Eigen::Vector3d(1, 2, 3), 20000)[0];
  CHECK(std::abs(est.second_moment - 3.0 * sigma * sigma) <= 3.0 * est.second_moment_se);
  CHECK(est.cov_min_eigenvalue >= 0.9 * sigma * sigma);

  const StochasticOracle silent(quad, {0.0}, 4);
  const auto zero = estimate_noise_constants(silent, Eigen::Vector3d(1, 2, 3), 1000)[0];
  CHECK(zero.second_moment == 0.0);
  CHECK(zero.fourth_moment == 0.0);
  CHECK(zero.cov_min_eigenvalue == 0.0);
  CHECK(zero.mean.isZero(0.0));

  const auto nn = std::make_shared<NNSaddleLoss>(2, 0.01);
  const StochasticOracle mixed(nn, {0.1}, 4);
  KeyedStream rng(31, 0);
  const auto m = estimate_noise_constants(mixed, random_point(rng, nn->dim(), 0.5), 20000)[0];
  CHECK(m.cov_min_eigenvalue >= 0.01 - 3.0 * m.cov_min_eigenvalue_se);
  CHECK(m.cov_min_eigenvalue >= 0.9 * 0.01);
  CHECK(m.second_moment > 6 * 0.01);  // data residual on top of the isotropic part

  CHECK_THROWS_AS(estimate_noise_constants(iso, Eigen::Vector3d::Zero(), 999), InvalidArgument);
}

TEST_CASE("isotropic profile derived from the oracle") {
  const auto nn = std::make_shared<NNSaddleLoss>(2, 0.01);
  const StochasticOracle oracle(nn, {0.1, 0.2}, 1);
  const auto profile = oracle.isotropic_profile();
  CHECK(profile.sigma_sq[1] == doctest::Approx(6 * 0.04));
  CHECK(profile.sigma_lower_sq[0] == doctest::Approx(0.01));
  CHECK_THROWS_AS(StochasticOracle(nn, {0.0}, 1).isotropic_profile(), InvalidArgument);
}
