#pragma once

// Loss models with exact derivatives, per-agent stochastic-gradient oracles
// and finite-difference verification helpers.

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "diffnet/rng.hpp"
#include "diffnet/topology.hpp"

namespace diffnet {

/// Declared (or numerically estimated) regularity constants of a loss.
struct Smoothness {
  double gradient_lipschitz = 0.0;      // delta
  double hessian_lipschitz = 0.0;       // Hessian Lipschitz constant
  double gradient_disagreement = 0.0;   // bound on |grad J_k - grad J_l|
};

/// Evaluable cost J(w) shared by every agent. Implementations are pure and
/// safe to call concurrently.
class LossModel {
 public:
  virtual ~LossModel() = default;

  virtual std::string name() const = 0;
  virtual std::size_t dim() const = 0;
  virtual double value(const Eigen::VectorXd& w) const = 0;
  virtual Eigen::VectorXd gradient(const Eigen::VectorXd& w) const = 0;

  /// Analytic where the model provides it. The default falls back to central
  /// differences of the gradient with step cbrt(eps) * (1 + |w|).
  virtual Eigen::MatrixXd hessian(const Eigen::VectorXd& w) const;

  virtual std::optional<double> known_minimum() const { return std::nullopt; }
  virtual Smoothness smoothness() const = 0;

  /// Gradient of the instantaneous loss at one fresh data draw taken from
  /// `stream`. Its expectation is gradient(w). Models without data
  /// randomness return the exact gradient.
  virtual Eigen::VectorXd sample_gradient(const Eigen::VectorXd& w, KeyedStream& stream) const;

  /// Point the landscape treats as its saddle of interest (origin by default).
  virtual Eigen::VectorXd saddle_point() const { return Eigen::VectorXd::Zero(dim()); }

 protected:
  void require_dim(const Eigen::VectorXd& w) const;
};

using LossPtr = std::shared_ptr<const LossModel>;

/// J(w) = 1/2 w^T H w.
class QuadraticLoss final : public LossModel {
 public:
  explicit QuadraticLoss(Eigen::MatrixXd curvature);
  static std::shared_ptr<QuadraticLoss> diagonal(const std::vector<double>& diag);

  std::string name() const override { return "quadratic"; }
  std::size_t dim() const override { return static_cast<std::size_t>(curvature_.rows()); }
  double value(const Eigen::VectorXd& w) const override;
  Eigen::VectorXd gradient(const Eigen::VectorXd& w) const override;
  Eigen::MatrixXd hessian(const Eigen::VectorXd& w) const override;
  std::optional<double> known_minimum() const override;
  Smoothness smoothness() const override;

  const Eigen::MatrixXd& curvature() const noexcept { return curvature_; }

 private:
  Eigen::MatrixXd curvature_;
  double min_eigenvalue_ = 0.0;
  double spectral_norm_ = 0.0;
};

/// Logistic loss of a two-layer linear network with one output:
///
///   J(w1, W2) = E log(1 + exp(-y w1^T W2 h)) + reg/2 (|w1|^2 + |W2|_F^2)
///
/// with label y = +/-1 equiprobable and feature h = y * shift * 1 + z,
/// z ~ N(0, I_M). The parameter vector packs w1 (M entries) followed by W2 in
/// row-major order (M*M entries).
///
/// With v = W2^T w1 the logit is y w1^T W2 h ~ N(shift * 1^T v, |v|^2), so the
/// expectation reduces to a one-dimensional Gaussian integral, evaluated by
/// composite Gauss-Legendre quadrature. The origin is a strict saddle point
/// whenever reg < shift * sqrt(M) / 2.
class NNSaddleLoss final : public LossModel {
 public:
  NNSaddleLoss(std::size_t features, double reg = 0.01, double shift = 0.5);

  std::string name() const override { return "nn_saddle"; }
  std::size_t dim() const override { return features_ + features_ * features_; }
  double value(const Eigen::VectorXd& w) const override;
  Eigen::VectorXd gradient(const Eigen::VectorXd& w) const override;
  Eigen::MatrixXd hessian(const Eigen::VectorXd& w) const override;
  Eigen::VectorXd sample_gradient(const Eigen::VectorXd& w, KeyedStream& stream) const override;

  /// Best value found by multi-start gradient descent (desk-scale search).
  std::optional<double> known_minimum() const override;

  /// delta: max Hessian spectral norm over 1000 points of the radius-2 ball.
  /// Hessian Lipschitz: max finite ratio over nearby point pairs. Computed
  /// once, lazily.
  Smoothness smoothness() const override;

  std::size_t features() const noexcept { return features_; }
  double reg() const noexcept { return reg_; }
  double shift() const noexcept { return shift_; }

  /// Smallest Hessian eigenvalue at the origin in closed form: reg - shift*sqrt(M)/2.
  double origin_min_eigenvalue() const;

 private:
  struct Moments {
    double f0, f1, f2, f3, f4;  // E f^{(j)}(u), u ~ N(mean, sd^2)
  };
  Moments logit_moments(double mean, double sd) const;
  Eigen::VectorXd reduced(const Eigen::VectorXd& w) const;  // v = W2^T w1

  std::size_t features_;
  double reg_;
  double shift_;

  mutable std::once_flag minimum_once_;
  mutable double minimum_ = 0.0;
  mutable std::once_flag smooth_once_;
  mutable Smoothness smooth_{};
};

// ---------------------------------------------------------------------------

struct LossEval {
  double value;
  Eigen::VectorXd gradient;
};

/// Value and gradient; throws on dimension mismatch or non-finite output.
LossEval eval_loss(const LossModel& model, const Eigen::VectorXd& w);
Eigen::MatrixXd eval_hessian(const LossModel& model, const Eigen::VectorXd& w);

Eigen::VectorXd finite_difference_gradient(const LossModel& model, const Eigen::VectorXd& w);
Eigen::MatrixXd finite_difference_hessian(const LossModel& model, const Eigen::VectorXd& w);

/// Worst per-axis error of the analytic gradient against central
/// differences (step 1e-6 (1 + |w_j|)), relative to max(1, |analytic|).
double check_gradient(const LossModel& model, const Eigen::VectorXd& w);

/// Same for the Hessian against central differences of the gradient (step
/// 1e-4 (1 + |w_j|)).
double check_hessian(const LossModel& model, const Eigen::VectorXd& w);

/// Gradient descent with backtracking from each start; returns the lowest value.
double search_minimum(const LossModel& model, const std::vector<Eigen::VectorXd>& starts,
                      int max_iterations = 5000);

// ---------------------------------------------------------------------------

/// Per-agent stochastic gradients: exact gradient plus data-sampling residual
/// plus isotropic Gaussian noise of standard deviation sigma_iso[k] per axis.
/// Every draw is keyed by (seed, agent, iteration), so results do not depend
/// on call order or threading.
class StochasticOracle {
 public:
  StochasticOracle(LossPtr base, std::vector<double> sigma_iso, std::uint64_t seed);

  const LossModel& base() const noexcept { return *base_; }
  const LossPtr& base_ptr() const noexcept { return base_; }
  std::size_t agents() const noexcept { return sigma_iso_.size(); }
  std::size_t dim() const noexcept { return base_->dim(); }
  double sigma_iso(std::size_t agent) const { return sigma_iso_.at(agent); }
  const std::vector<double>& sigma_iso() const noexcept { return sigma_iso_; }
  std::uint64_t seed() const noexcept { return seed_; }

  StochasticOracle with_seed(std::uint64_t seed) const;

  Eigen::VectorXd sample(std::size_t agent, const Eigen::VectorXd& w, std::int64_t iteration) const;

  /// Bounds implied by the isotropic component: sigma_sq = dim * sigma_iso^2
  /// (its trace), sigma_lower_sq = sigma_iso^2 (its covariance floor).
  /// Throws when some sigma_iso is zero.
  NoiseProfile isotropic_profile() const;

 private:
  LossPtr base_;
  std::vector<double> sigma_iso_;
  std::uint64_t seed_;
};

Eigen::VectorXd sample_stochastic_gradient(const StochasticOracle& oracle, std::size_t agent,
                                           const Eigen::VectorXd& w, std::int64_t iteration);

struct AgentNoiseEstimate {
  Eigen::VectorXd mean;        // per-axis mean of s_k
  Eigen::VectorXd mean_se;     // its standard error
  double second_moment = 0.0;  // E|s_k|^2
  double second_moment_se = 0.0;
  double fourth_moment = 0.0;  // E|s_k|^4
  double fourth_moment_se = 0.0;
  double cov_min_eigenvalue = 0.0;
  double cov_min_eigenvalue_se = 0.0;
};

/// Monte-Carlo noise statistics at a fixed point. Requires draws >= 1000.
std::vector<AgentNoiseEstimate> estimate_noise_constants(const StochasticOracle& oracle,
                                                         const Eigen::VectorXd& w,
                                                         std::size_t draws);

}  // namespace diffnet
