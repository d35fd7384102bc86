#include "cpcvae/distributions.hpp"

#include <cmath>
#include <numbers>

#include "cpcvae/errors.hpp"

namespace cpcvae {

double std_normal_pdf(double x) { return std::exp(std_normal_log_pdf(x)); }

double std_normal_log_pdf(double x) { return -0.5 * x * x - kHalfLog2Pi; }

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double std_normal_interval(double lo, double hi) {
  if (hi <= lo) return 0.0;
  const auto upper_tail = [](double v) { return 0.5 * std::erfc(v / std::numbers::sqrt2); };
  if (lo >= 0) return upper_tail(lo) - upper_tail(hi);
  if (hi <= 0) return std_normal_cdf(hi) - std_normal_cdf(lo);
  return 1.0 - std_normal_cdf(lo) - upper_tail(hi);
}

Tensor gaussian_kl_to_std_normal(const DiagonalGaussian& q) {
  using namespace cpcvae::ad;
  auto quad = (square(q.mean) + square(q.std)) - Scalar(1);
  auto per_dim = scale(quad, Scalar(0.5)) - log(q.std);
  return sum(per_dim, per_dim.rank() - 1);
}

Tensor gaussian_rsample(const DiagonalGaussian& q, const Tensor& eps) {
  if (eps.shape() != q.mean.shape())
    throw DimensionError("gaussian_rsample: eps shape " + ad::to_string(eps.shape()) +
                         " differs from posterior shape " + ad::to_string(q.mean.shape()));
  return ad::add(q.mean, ad::mul(q.std, eps));
}

Tensor gaussian_rsample(const DiagonalGaussian& q, Rng& rng) {
  auto draws = rng.normals(q.mean.size());
  std::vector<Scalar> eps(draws.begin(), draws.end());
  return gaussian_rsample(q, q.mean.tape().constant(q.mean.shape(), std::move(eps)));
}

Tensor gaussian_log_prob(const DiagonalGaussian& q, const Tensor& value) {
  using namespace cpcvae::ad;
  auto t = (value - q.mean) / q.std;
  auto per_dim = (scale(square(t), Scalar(-0.5)) - log(q.std)) - Scalar(kHalfLog2Pi);
  return sum(per_dim, per_dim.rank() - 1);
}

Tensor one_hot(ad::Tape& tape, std::span<const int> labels, std::size_t num_classes) {
  std::vector<Scalar> v(labels.size() * num_classes, Scalar(0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
      throw DomainError("label " + std::to_string(y) + " outside [0, " + std::to_string(num_classes) + ")");
    v[i * num_classes + static_cast<std::size_t>(y)] = Scalar(1);
  }
  return tape.constant({labels.size(), num_classes}, std::move(v));
}

Tensor categorical_log_prob(const CategoricalDist& dist, std::span<const int> labels) {
  if (dist.logits.rank() != 2 || dist.logits.dim(0) != labels.size())
    throw DimensionError("categorical_log_prob: logits " + ad::to_string(dist.logits.shape()) + " for " +
                         std::to_string(labels.size()) + " labels");
  auto y = one_hot(dist.logits.tape(), labels, dist.logits.dim(1));
  return ad::sum(ad::mul(y, ad::log_softmax(dist.logits)), 1);
}

Tensor categorical_probs(const CategoricalDist& dist) { return ad::softmax(dist.logits); }

Tensor bernoulli_log_prob(const BernoulliDist& dist, const Tensor& value) {
  for (Scalar v : value.data())
    if (!(v >= 0 && v <= 1)) throw DomainError("Bernoulli value " + std::to_string(v) + " outside [0, 1]");
  using namespace cpcvae::ad;
  auto per_dim = value * dist.logits - softplus(dist.logits);
  return sum(per_dim, per_dim.rank() - 1);
}

}  // namespace cpcvae
