#pragma once

#include <span>
#include <vector>

#include "cpcvae/autodiff.hpp"
#include "cpcvae/rng.hpp"

namespace cpcvae {

using ad::Scalar;
using ad::Tensor;

// ---- standard normal helpers ---------------------------------------------

double std_normal_pdf(double x);
double std_normal_log_pdf(double x);
double std_normal_cdf(double x);
/// P(lo < Z < hi) for Z ~ N(0, 1), evaluated on whichever tail avoids cancellation.
double std_normal_interval(double lo, double hi);

inline constexpr double kHalfLog2Pi = 0.91893853320467274178;

// ---- diagonal Gaussian -----------------------------------------------------

/// Batch of diagonal Gaussians, one per row: mean and std are [B, C].
struct DiagonalGaussian {
  Tensor mean;
  Tensor std;
};

/// KL(q || N(0, I)) per row: sum_c (mu^2 + sigma^2 - 1 - ln sigma^2) / 2. Shape [B].
Tensor gaussian_kl_to_std_normal(const DiagonalGaussian& q);

/// z = mean + std * eps, with eps a constant standard-normal draw of the same shape.
Tensor gaussian_rsample(const DiagonalGaussian& q, const Tensor& eps);

/// Draws eps from `rng` and returns the reparameterized sample.
Tensor gaussian_rsample(const DiagonalGaussian& q, Rng& rng);

/// Per-row sum of log N(value | mean, std). Shape [B].
Tensor gaussian_log_prob(const DiagonalGaussian& q, const Tensor& value);

// ---- categorical / Bernoulli -----------------------------------------------

struct CategoricalDist {
  Tensor logits;  // [B, L]
};

/// Constant [B, L] one-hot matrix; labels outside [0, L) raise DomainError.
Tensor one_hot(ad::Tape& tape, std::span<const int> labels, std::size_t num_classes);

/// log softmax(logits)[y] per row. Shape [B].
Tensor categorical_log_prob(const CategoricalDist& dist, std::span<const int> labels);
Tensor categorical_probs(const CategoricalDist& dist);

struct BernoulliDist {
  Tensor logits;  // [B, D]
};

/// Per-row sum of x log p + (1 - x) log(1 - p) for x in [0, 1]. Shape [B].
Tensor bernoulli_log_prob(const BernoulliDist& dist, const Tensor& value);

// ---- Noise-Normal ----------------------------------------------------------
// Mixture on [-1, 1] of a truncated normal (weight rho) and a uniform.

/// Parameters of one Noise-Normal pixel.
struct NoiseNormalPoint {
  double rho;
  double mu;
  double sigma;
};

/// Partial derivatives of the CDF with respect to (rho, mu, sigma).
struct NoiseNormalPartials {
  double d_rho;
  double d_mu;
  double d_sigma;
};

double noise_normal_pdf(double x, const NoiseNormalPoint& p);
double noise_normal_log_pdf(double x, const NoiseNormalPoint& p);
double noise_normal_cdf(double x, const NoiseNormalPoint& p);
NoiseNormalPartials noise_normal_cdf_partials(double x, const NoiseNormalPoint& p);

/// Inverse-CDF draw for a uniform level u in (0, 1): bisection on [-1, 1]
/// followed by Newton polish until |F(x) - u| <= 1e-10.
double noise_normal_sample(const NoiseNormalPoint& p, double u);

/// dx/d(rho, mu, sigma) = -dF/d(theta) / f at a sampled x.
NoiseNormalPartials noise_normal_implicit_grad(double x, const NoiseNormalPoint& p);

inline constexpr double kNoiseNormalSigmaFloor = 1e-4;

/// Batched Noise-Normal parameters; all three tensors share one shape.
/// Constructed from unconstrained decoder outputs by `squash`.
struct NoiseNormalParams {
  Tensor rho;    // in (0, 1)
  Tensor mu;     // in (-1, 1)
  Tensor sigma;  // > 0

  /// rho = sigmoid(rho*), mu = tanh(mu*), sigma = softplus(sigma*) + 1e-4.
  /// rho is squeezed into [1e-6, 1 - 1e-6] so both log weights stay finite.
  static NoiseNormalParams squash(const Tensor& rho_raw, const Tensor& mu_raw,
                                  const Tensor& sigma_raw);
};

/// Per-element log density on the tape. `value` must lie in [-1, 1].
Tensor noise_normal_log_density(const NoiseNormalParams& p, const Tensor& value);
/// Per-row sum of the log density. Shape [B].
Tensor noise_normal_log_prob(const NoiseNormalParams& p, const Tensor& value);

/// Sample x = F^{-1}(u) elementwise; its backward applies the implicit
/// reparameterization gradient to rho, mu and sigma.
Tensor noise_normal_rsample(const NoiseNormalParams& p, std::span<const double> u);

// ---- Normal likelihood -----------------------------------------------------

/// Per-row sum of log N(value | mean, std); same as gaussian_log_prob.
inline Tensor normal_log_prob(const Tensor& mean, const Tensor& std, const Tensor& value) {
  return gaussian_log_prob(DiagonalGaussian{mean, std}, value);
}

}  // namespace cpcvae
