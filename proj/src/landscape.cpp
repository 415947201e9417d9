#include "diffnet/landscape.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "diffnet/error.hpp"

namespace diffnet {

// ---------------------------------------------------------------------------
// LossModel defaults

void LossModel::require_dim(const Eigen::VectorXd& w) const {
  if (static_cast<std::size_t>(w.size()) != dim()) {
    throw InvalidArgument(name() + ": expected dimension " + std::to_string(dim()) + ", got " +
                          std::to_string(w.size()));
  }
}

Eigen::MatrixXd LossModel::hessian(const Eigen::VectorXd& w) const {
  require_dim(w);
  const auto n = w.size();
  const double h = std::cbrt(std::numeric_limits<double>::epsilon()) * (1.0 + w.norm());
  Eigen::MatrixXd out(n, n);
  Eigen::VectorXd probe = w;
  for (Eigen::Index j = 0; j < n; ++j) {
    probe(j) = w(j) + h;
    const Eigen::VectorXd plus = gradient(probe);
    probe(j) = w(j) - h;
    const Eigen::VectorXd minus = gradient(probe);
    probe(j) = w(j);
    out.col(j) = (plus - minus) / (2.0 * h);
  }
  return 0.5 * (out + out.transpose());
}

Eigen::VectorXd LossModel::sample_gradient(const Eigen::VectorXd& w, KeyedStream&) const {
  return gradient(w);
}

// ---------------------------------------------------------------------------
// Quadratic

QuadraticLoss::QuadraticLoss(Eigen::MatrixXd curvature) : curvature_(std::move(curvature)) {
  if (curvature_.rows() == 0 || curvature_.rows() != curvature_.cols()) {
    throw InvalidArgument("quadratic: curvature must be square and non-empty");
  }
  if ((curvature_ - curvature_.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw InvalidArgument("quadratic: curvature must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(curvature_, Eigen::EigenvaluesOnly);
  min_eigenvalue_ = solver.eigenvalues().minCoeff();
  spectral_norm_ = solver.eigenvalues().cwiseAbs().maxCoeff();
}

std::shared_ptr<QuadraticLoss> QuadraticLoss::diagonal(const std::vector<double>& diag) {
  Eigen::VectorXd d = Eigen::Map<const Eigen::VectorXd>(diag.data(),
                                                        static_cast<Eigen::Index>(diag.size()));
  return std::make_shared<QuadraticLoss>(d.asDiagonal().toDenseMatrix());
}

double QuadraticLoss::value(const Eigen::VectorXd& w) const {
  require_dim(w);
  return 0.5 * w.dot(curvature_ * w);
}

Eigen::VectorXd QuadraticLoss::gradient(const Eigen::VectorXd& w) const {
  require_dim(w);
  return curvature_ * w;
}

Eigen::MatrixXd QuadraticLoss::hessian(const Eigen::VectorXd& w) const {
  require_dim(w);
  return curvature_;
}

std::optional<double> QuadraticLoss::known_minimum() const {
  if (min_eigenvalue_ >= 0.0) return 0.0;
  return std::nullopt;
}

Smoothness QuadraticLoss::smoothness() const { return {spectral_norm_, 0.0, 0.0}; }

// ---------------------------------------------------------------------------
// Single-hidden-layer logistic network

namespace {

// 8-point Gauss-Legendre rule on [-1, 1].
constexpr std::array<double, 4> kGlNodes = {0.1834346424956498, 0.5255324099163290,
                                            0.7966664774136267, 0.9602898564975363};
constexpr std::array<double, 4> kGlWeights = {0.3626837833783620, 0.3137066458778873,
                                              0.2223810344533745, 0.1012285362903763};
constexpr double kTail = 10.0;  // integrate the standard normal over [-10, 10]
const double kInvSqrt2Pi = 1.0 / std::sqrt(2.0 * M_PI);

double softplus_neg(double u) {  // log(1 + exp(-u))
  return u > 0.0 ? std::log1p(std::exp(-u)) : -u + std::log1p(std::exp(u));
}

double logistic(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

}  // namespace

NNSaddleLoss::NNSaddleLoss(std::size_t features, double reg, double shift)
    : features_(features), reg_(reg), shift_(shift) {
  if (features == 0) throw InvalidArgument("nn_saddle: feature dimension must be positive");
  if (!(reg >= 0.0) || !std::isfinite(shift)) {
    throw InvalidArgument("nn_saddle: reg must be non-negative and shift finite");
  }
}

NNSaddleLoss::Moments NNSaddleLoss::logit_moments(double mean, double sd) const {
  auto accumulate = [](Moments& m, double u, double weight) {
    const double s = logistic(u);
    const double d2 = s * (1.0 - s);
    const double skew = 1.0 - 2.0 * s;
    m.f0 += weight * softplus_neg(u);
    m.f1 += weight * (s - 1.0);
    m.f2 += weight * d2;
    m.f3 += weight * d2 * skew;
    m.f4 += weight * d2 * (skew * skew - 2.0 * d2);
  };
  Moments m{0, 0, 0, 0, 0};
  if (sd == 0.0) {
    accumulate(m, mean, 1.0);
    return m;
  }
  // Panel width at most 1/sd in the standardized variable keeps the complex
  // poles of the logistic well outside each panel's Bernstein ellipse.
  const int panels = std::max(16, static_cast<int>(std::ceil(2.0 * kTail * sd)));
  const double half = kTail / panels;
  for (int p = 0; p < panels; ++p) {
    const double centre = -kTail + (2 * p + 1) * half;
    for (std::size_t i = 0; i < kGlNodes.size(); ++i) {
      for (const double sign : {-1.0, 1.0}) {
        const double xi = centre + sign * half * kGlNodes[i];
        const double weight = half * kGlWeights[i] * kInvSqrt2Pi * std::exp(-0.5 * xi * xi);
        accumulate(m, mean + sd * xi, weight);
      }
    }
  }
  return m;
}

Eigen::VectorXd NNSaddleLoss::reduced(const Eigen::VectorXd& w) const {
  const auto m = static_cast<Eigen::Index>(features_);
  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
      w2(w.data() + m, m, m);
  return w2.transpose() * w.head(m);
}

double NNSaddleLoss::value(const Eigen::VectorXd& w) const {
  require_dim(w);
  const Eigen::VectorXd v = reduced(w);
  const auto mo = logit_moments(shift_ * v.sum(), v.norm());
  return mo.f0 + 0.5 * reg_ * w.squaredNorm();
}

Eigen::VectorXd NNSaddleLoss::gradient(const Eigen::VectorXd& w) const {
  require_dim(w);
  const auto m = static_cast<Eigen::Index>(features_);
  const Eigen::VectorXd v = reduced(w);
  const auto mo = logit_moments(shift_ * v.sum(), v.norm());
  // d/dv E f(u) = shift E f'(u) 1 + E f''(u) v   (Stein's identity for the sd part)
  const Eigen::VectorXd gv = shift_ * mo.f1 * Eigen::VectorXd::Ones(m) + mo.f2 * v;

  Eigen::VectorXd grad = reg_ * w;
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = 0; b < m; ++b) {
      grad(a) += w(m + a * m + b) * gv(b);
      grad(m + a * m + b) += w(a) * gv(b);
    }
  }
  return grad;
}

Eigen::MatrixXd NNSaddleLoss::hessian(const Eigen::VectorXd& w) const {
  require_dim(w);
  const auto m = static_cast<Eigen::Index>(features_);
  const auto n = static_cast<Eigen::Index>(dim());
  const Eigen::VectorXd v = reduced(w);
  const auto mo = logit_moments(shift_ * v.sum(), v.norm());
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(m);
  const Eigen::VectorXd gv = shift_ * mo.f1 * ones + mo.f2 * v;

  Eigen::MatrixXd hv = mo.f2 * Eigen::MatrixXd::Identity(m, m);
  hv += shift_ * shift_ * mo.f2 * ones * ones.transpose();
  hv += shift_ * mo.f3 * (ones * v.transpose() + v * ones.transpose());
  hv += mo.f4 * v * v.transpose();

  // Jacobian of v with respect to the packed parameters.
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(m, n);
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = 0; b < m; ++b) {
      jac(b, a) = w(m + a * m + b);
      jac(b, m + a * m + b) = w(a);
    }
  }
  Eigen::MatrixXd hess = jac.transpose() * hv * jac;
  // Curvature of v itself: d^2 v_b / (d w1_a d W2_ab) = 1.
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = 0; b < m; ++b) {
      hess(a, m + a * m + b) += gv(b);
      hess(m + a * m + b, a) += gv(b);
    }
  }
  hess.diagonal().array() += reg_;
  return hess;
}

Eigen::VectorXd NNSaddleLoss::sample_gradient(const Eigen::VectorXd& w, KeyedStream& stream) const {
  require_dim(w);
  const auto m = static_cast<Eigen::Index>(features_);
  const double label = stream.uniform() < 0.5 ? -1.0 : 1.0;
  Eigen::VectorXd feature(m);
  for (Eigen::Index b = 0; b < m; ++b) feature(b) = label * shift_ + stream.normal();

  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
      w2(w.data() + m, m, m);
  const Eigen::VectorXd hidden = w2 * feature;
  const double u = label * w.head(m).dot(hidden);
  const double slope = (logistic(u) - 1.0) * label;  // f'(u) * du/d(w1^T W2 h)

  Eigen::VectorXd grad = reg_ * w;
  grad.head(m) += slope * hidden;
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = 0; b < m; ++b) grad(m + a * m + b) += slope * w(a) * feature(b);
  }
  return grad;
}

double NNSaddleLoss::origin_min_eigenvalue() const {
  return reg_ - 0.5 * std::abs(shift_) * std::sqrt(static_cast<double>(features_));
}

std::optional<double> NNSaddleLoss::known_minimum() const {
  std::call_once(minimum_once_, [this] {
    const auto m = static_cast<Eigen::Index>(features_);
    std::vector<Eigen::VectorXd> starts;
    for (const double sign : {1.0, -1.0}) {
      Eigen::VectorXd start = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(dim()), 0.5);
      start.head(m) *= sign;
      starts.push_back(start);
    }
    KeyedStream stream(0x0517, stream_tag::kEstimate);
    for (int r = 0; r < 4; ++r) {
      Eigen::VectorXd start(static_cast<Eigen::Index>(dim()));
      for (auto& x : start) x = stream.normal();
      starts.push_back(start);
    }
    minimum_ = search_minimum(*this, starts);
  });
  return minimum_;
}

Smoothness NNSaddleLoss::smoothness() const {
  std::call_once(smooth_once_, [this] {
    const auto n = static_cast<Eigen::Index>(dim());
    KeyedStream stream(0xD17A, stream_tag::kEstimate, 1);
    auto spectral = [](const Eigen::MatrixXd& h) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> s(h, Eigen::EigenvaluesOnly);
      return s.eigenvalues().cwiseAbs().maxCoeff();
    };
    double delta = 0.0;
    double rho = 0.0;
    for (int i = 0; i < 1000; ++i) {
      Eigen::VectorXd dir(n);
      for (auto& x : dir) x = stream.normal();
      dir.normalize();
      const double radius = 2.0 * std::pow(stream.uniform(), 1.0 / static_cast<double>(n));
      const Eigen::VectorXd x = radius * dir;
      const Eigen::MatrixXd hx = hessian(x);
      delta = std::max(delta, spectral(hx));

      Eigen::VectorXd step(n);
      for (auto& s : step) s = stream.normal();
      step *= 1e-3 / step.norm();
      rho = std::max(rho, spectral(hessian(x + step) - hx) / step.norm());
    }
    smooth_ = {delta, rho, 0.0};
  });
  return smooth_;
}

// ---------------------------------------------------------------------------
// Evaluation helpers

LossEval eval_loss(const LossModel& model, const Eigen::VectorXd& w) {
  if (static_cast<std::size_t>(w.size()) != model.dim()) {
    throw InvalidArgument("eval_loss: dimension mismatch");
  }
  LossEval out{model.value(w), model.gradient(w)};
  if (!std::isfinite(out.value) || !out.gradient.allFinite()) {
    throw InvalidArgument("eval_loss: non-finite loss or gradient");
  }
  return out;
}

Eigen::MatrixXd eval_hessian(const LossModel& model, const Eigen::VectorXd& w) {
  if (static_cast<std::size_t>(w.size()) != model.dim()) {
    throw InvalidArgument("eval_hessian: dimension mismatch");
  }
  return model.hessian(w);
}

Eigen::VectorXd finite_difference_gradient(const LossModel& model, const Eigen::VectorXd& w) {
  Eigen::VectorXd out(w.size());
  Eigen::VectorXd probe = w;
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    const double h = 1e-6 * (1.0 + std::abs(w(j)));
    probe(j) = w(j) + h;
    const double plus = model.value(probe);
    probe(j) = w(j) - h;
    const double minus = model.value(probe);
    probe(j) = w(j);
    out(j) = (plus - minus) / (2.0 * h);
  }
  return out;
}

Eigen::MatrixXd finite_difference_hessian(const LossModel& model, const Eigen::VectorXd& w) {
  const auto n = w.size();
  Eigen::MatrixXd out(n, n);
  Eigen::VectorXd probe = w;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double h = 1e-4 * (1.0 + std::abs(w(j)));
    probe(j) = w(j) + h;
    const Eigen::VectorXd plus = model.gradient(probe);
    probe(j) = w(j) - h;
    const Eigen::VectorXd minus = model.gradient(probe);
    probe(j) = w(j);
    out.col(j) = (plus - minus) / (2.0 * h);
  }
  return out;
}

double check_gradient(const LossModel& model, const Eigen::VectorXd& w) {
  const Eigen::VectorXd analytic = eval_loss(model, w).gradient;
  const Eigen::VectorXd numeric = finite_difference_gradient(model, w);
  double worst = 0.0;
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    const double scale = std::max(1.0, std::abs(analytic(j)));
    worst = std::max(worst, std::abs(analytic(j) - numeric(j)) / scale);
  }
  return worst;
}

double check_hessian(const LossModel& model, const Eigen::VectorXd& w) {
  const Eigen::MatrixXd analytic = eval_hessian(model, w);
  const Eigen::MatrixXd numeric = finite_difference_hessian(model, w);
  const Eigen::MatrixXd scale = analytic.cwiseAbs().cwiseMax(1.0);
  return ((analytic - numeric).cwiseAbs().array() / scale.array()).maxCoeff();
}

double search_minimum(const LossModel& model, const std::vector<Eigen::VectorXd>& starts,
                      int max_iterations) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::VectorXd w : starts) {
    double value = model.value(w);
    double step = 1.0;
    for (int it = 0; it < max_iterations; ++it) {
      const Eigen::VectorXd g = model.gradient(w);
      const double gg = g.squaredNorm();
      if (gg < 1e-20) break;
      // Armijo backtracking.
      step = std::min(step * 2.0, 10.0);
      while (step > 1e-12) {
        const Eigen::VectorXd trial = w - step * g;
        const double tv = model.value(trial);
        if (tv <= value - 1e-4 * step * gg) {
          w = trial;
          value = tv;
          break;
        }
        step *= 0.5;
      }
      if (step <= 1e-12) break;
    }
    best = std::min(best, value);
  }
  return best;
}

// ---------------------------------------------------------------------------
// Stochastic oracle

StochasticOracle::StochasticOracle(LossPtr base, std::vector<double> sigma_iso, std::uint64_t seed)
    : base_(std::move(base)), sigma_iso_(std::move(sigma_iso)), seed_(seed) {
  if (!base_) throw InvalidArgument("oracle: missing loss model");
  if (sigma_iso_.empty()) throw InvalidArgument("oracle: needs at least one agent");
  for (const double s : sigma_iso_) {
    if (!(s >= 0.0) || !std::isfinite(s)) {
      throw InvalidArgument("oracle: sigma_iso must be finite and non-negative");
    }
  }
}

StochasticOracle StochasticOracle::with_seed(std::uint64_t seed) const {
  return StochasticOracle(base_, sigma_iso_, seed);
}

Eigen::VectorXd StochasticOracle::sample(std::size_t agent, const Eigen::VectorXd& w,
                                         std::int64_t iteration) const {
  if (agent >= agents()) {
    throw InvalidArgument("oracle: agent index " + std::to_string(agent) + " out of range");
  }
  if (static_cast<std::size_t>(w.size()) != dim()) {
    throw InvalidArgument("oracle: dimension mismatch");
  }
  KeyedStream stream(seed_, agent, static_cast<std::uint64_t>(iteration), stream_tag::kGradient);
  Eigen::VectorXd g = base_->sample_gradient(w, stream);
  const double sigma = sigma_iso_[agent];
  if (sigma > 0.0) {
    for (auto& x : g) x += sigma * stream.normal();
  }
  return g;
}

NoiseProfile StochasticOracle::isotropic_profile() const {
  NoiseProfile profile;
  const auto d = static_cast<double>(dim());
  for (const double s : sigma_iso_) {
    profile.sigma_sq.push_back(d * s * s);
    profile.sigma_lower_sq.push_back(s * s);
  }
  profile.validate();
  return profile;
}

Eigen::VectorXd sample_stochastic_gradient(const StochasticOracle& oracle, std::size_t agent,
                                           const Eigen::VectorXd& w, std::int64_t iteration) {
  return oracle.sample(agent, w, iteration);
}

std::vector<AgentNoiseEstimate> estimate_noise_constants(const StochasticOracle& oracle,
                                                         const Eigen::VectorXd& w,
                                                         std::size_t draws) {
  if (draws < 1000) throw InvalidArgument("estimate_noise_constants: need at least 1000 draws");
  const Eigen::VectorXd exact = eval_loss(oracle.base(), w).gradient;
  const auto n = static_cast<double>(draws);
  const auto d = w.size();
  std::vector<AgentNoiseEstimate> out;
  for (std::size_t k = 0; k < oracle.agents(); ++k) {
    Eigen::MatrixXd samples(d, static_cast<Eigen::Index>(draws));
    for (std::size_t i = 0; i < draws; ++i) {
      samples.col(static_cast<Eigen::Index>(i)) =
          oracle.sample(k, w, static_cast<std::int64_t>(i)) - exact;
    }
    AgentNoiseEstimate est;
    est.mean = samples.rowwise().mean();
    const Eigen::MatrixXd centred = samples.colwise() - est.mean;
    const Eigen::MatrixXd cov = centred * centred.transpose() / (n - 1.0);
    est.mean_se = (cov.diagonal() / n).cwiseSqrt();

    const Eigen::ArrayXd sq = samples.colwise().squaredNorm().transpose().array();
    const Eigen::ArrayXd quad = sq.square();
    auto se_of = [n](const Eigen::ArrayXd& x) {
      const double mean = x.mean();
      return std::sqrt((x - mean).square().sum() / (n - 1.0) / n);
    };
    est.second_moment = sq.mean();
    est.second_moment_se = se_of(sq);
    est.fourth_moment = quad.mean();
    est.fourth_moment_se = se_of(quad);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    est.cov_min_eigenvalue = solver.eigenvalues()(0);
    const Eigen::VectorXd dir = solver.eigenvectors().col(0);
    const Eigen::ArrayXd proj = (dir.transpose() * centred).transpose().array().square();
    est.cov_min_eigenvalue_se = se_of(proj);
    out.push_back(std::move(est));
  }
  return out;
}

}  // namespace diffnet
