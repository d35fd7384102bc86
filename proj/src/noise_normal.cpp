#include <cmath>
#include <numbers>
#include <sstream>

#include "cpcvae/distributions.hpp"
#include "cpcvae/errors.hpp"

namespace cpcvae {

namespace {

void require_support(double x) {
  if (!(x >= -1.0 && x <= 1.0))
    throw DomainError("Noise-Normal value " + std::to_string(x) + " outside [-1, 1]");
}

struct Standardized {
  double t, a, b, mass;
};

Standardized standardize(double x, const NoiseNormalPoint& p) {
  if (!(p.sigma > 0)) throw DomainError("Noise-Normal sigma must be positive");
  if (!(p.rho >= 0 && p.rho <= 1)) throw DomainError("Noise-Normal rho must lie in [0, 1]");
  Standardized s{(x - p.mu) / p.sigma, (-1.0 - p.mu) / p.sigma, (1.0 - p.mu) / p.sigma, 0.0};
  s.mass = std_normal_interval(s.a, s.b);
  if (!(s.mass > 0) && p.rho > 0)
    throw NumericalError("Noise-Normal truncated mass underflowed (mu=" + std::to_string(p.mu) +
                         ", sigma=" + std::to_string(p.sigma) + ")");
  return s;
}

}  // namespace

double noise_normal_pdf(double x, const NoiseNormalPoint& p) {
  require_support(x);
  const auto s = standardize(x, p);
  const double inlier = p.rho > 0 ? p.rho * std_normal_pdf(s.t) / (p.sigma * s.mass) : 0.0;
  return inlier + (1.0 - p.rho) * 0.5;
}

double noise_normal_log_pdf(double x, const NoiseNormalPoint& p) {
  require_support(x);
  const auto s = standardize(x, p);
  const double outlier = p.rho < 1 ? std::log1p(-p.rho) - std::numbers::ln2 : -INFINITY;
  if (p.rho == 0) return outlier;
  const double inlier = std::log(p.rho) + std_normal_log_pdf(s.t) - std::log(p.sigma) - std::log(s.mass);
  const double m = std::max(inlier, outlier);
  return m + std::log(std::exp(inlier - m) + std::exp(outlier - m));
}

double noise_normal_cdf(double x, const NoiseNormalPoint& p) {
  require_support(x);
  const auto s = standardize(x, p);
  const double inlier = p.rho > 0 ? p.rho * std_normal_interval(s.a, s.t) / s.mass : 0.0;
  return inlier + (1.0 - p.rho) * (x + 1.0) * 0.5;
}

NoiseNormalPartials noise_normal_cdf_partials(double x, const NoiseNormalPoint& p) {
  require_support(x);
  const auto s = standardize(x, p);
  const double uniform_cdf = (x + 1.0) * 0.5;
  if (!(s.mass > 0)) return {-uniform_cdf, 0.0, 0.0};
  const double below = std_normal_interval(s.a, s.t);
  const double trunc_cdf = below / s.mass;
  const double phi_t = std_normal_pdf(s.t), phi_a = std_normal_pdf(s.a), phi_b = std_normal_pdf(s.b);
  // Every standardized bound moves by -1/sigma in mu and by -bound/sigma in sigma.
  const double dbelow_dmu = -(phi_t - phi_a) / p.sigma;
  const double dmass_dmu = -(phi_b - phi_a) / p.sigma;
  const double dbelow_dsigma = -(s.t * phi_t - s.a * phi_a) / p.sigma;
  const double dmass_dsigma = -(s.b * phi_b - s.a * phi_a) / p.sigma;
  return {trunc_cdf - uniform_cdf, p.rho * (dbelow_dmu - trunc_cdf * dmass_dmu) / s.mass,
          p.rho * (dbelow_dsigma - trunc_cdf * dmass_dsigma) / s.mass};
}

double noise_normal_sample(const NoiseNormalPoint& p, double u) {
  if (!(u > 0 && u < 1)) throw DomainError("uniform level must lie in (0, 1), got " + std::to_string(u));
  double lo = -1.0, hi = 1.0, x = 0.0;
  double resid = 0.0;
  for (int iter = 0; iter < 60; ++iter) {
    x = 0.5 * (lo + hi);
    resid = noise_normal_cdf(x, p) - u;
    if (std::abs(resid) <= 1e-13) break;
    (resid < 0 ? lo : hi) = x;
  }
  for (int iter = 0; iter < 5 && std::abs(resid) > 1e-14; ++iter) {
    const double f = noise_normal_pdf(x, p);
    if (!(f > 0)) break;
    const double next = x - resid / f;
    if (!(next >= lo && next <= hi)) break;
    x = next;
    resid = noise_normal_cdf(x, p) - u;
  }
  if (!(std::abs(resid) <= 1e-10)) {
    std::ostringstream os;
    os << "Noise-Normal inverse CDF did not converge: u=" << u << " x=" << x << " |F(x)-u|=" << std::abs(resid)
       << " rho=" << p.rho << " mu=" << p.mu << " sigma=" << p.sigma;
    throw NumericalError(os.str());
  }
  return x;
}

NoiseNormalPartials noise_normal_implicit_grad(double x, const NoiseNormalPoint& p) {
  const double f = noise_normal_pdf(x, p);
  if (!(f >= 1e-300))
    throw NumericalError("Noise-Normal density " + std::to_string(f) + " too small for implicit gradient");
  const auto dF = noise_normal_cdf_partials(x, p);
  return {-dF.d_rho / f, -dF.d_mu / f, -dF.d_sigma / f};
}

// ---- tape operations -------------------------------------------------------

NoiseNormalParams NoiseNormalParams::squash(const Tensor& rho_raw, const Tensor& mu_raw,
                                            const Tensor& sigma_raw) {
  using namespace cpcvae::ad;
  constexpr Scalar kEdge = Scalar(1e-6);
  return {add_scalar(scale(sigmoid(rho_raw), Scalar(1) - 2 * kEdge), kEdge), tanh(mu_raw),
          add_scalar(softplus(sigma_raw), Scalar(kNoiseNormalSigmaFloor))};
}

Tensor noise_normal_log_density(const NoiseNormalParams& p, const Tensor& value) {
  for (Scalar v : value.data()) require_support(static_cast<double>(v));
  using namespace cpcvae::ad;
  const Scalar inv_sqrt2 = Scalar(1) / std::numbers::sqrt2_v<Scalar>;
  auto t = (value - p.mu) / p.sigma;
  auto lower = neg(add_scalar(p.mu, Scalar(1))) / p.sigma;
  auto upper = neg(add_scalar(p.mu, Scalar(-1))) / p.sigma;
  // erf(upper) > 0 > erf(lower), so the difference never cancels.
  auto mass = scale(erf(scale(upper, inv_sqrt2)) - erf(scale(lower, inv_sqrt2)), Scalar(0.5));
  auto inlier = ((log(p.rho) + scale(square(t), Scalar(-0.5))) - log(p.sigma)) - log(mass);
  inlier = add_scalar(inlier, Scalar(-kHalfLog2Pi));
  auto outlier = add_scalar(log(add_scalar(neg(p.rho), Scalar(1))), -std::numbers::ln2_v<Scalar>);
  return log_add_exp(inlier, outlier);
}

Tensor noise_normal_log_prob(const NoiseNormalParams& p, const Tensor& value) {
  auto d = noise_normal_log_density(p, value);
  return ad::sum(d, d.rank() - 1);
}

Tensor noise_normal_rsample(const NoiseNormalParams& p, std::span<const double> u) {
  const auto& shape = p.mu.shape();
  if (p.rho.shape() != shape || p.sigma.shape() != shape || u.size() != p.mu.size())
    throw DimensionError("noise_normal_rsample: parameter/uniform shapes disagree");
  const std::size_t n = u.size();
  std::vector<Scalar> out(n);
  std::vector<Scalar> d_rho(n), d_mu(n), d_sigma(n);
  auto rv = p.rho.data(), mv = p.mu.data(), sv = p.sigma.data();
  for (std::size_t i = 0; i < n; ++i) {
    const NoiseNormalPoint pt{rv[i], mv[i], sv[i]};
    const double x = noise_normal_sample(pt, u[i]);
    out[i] = static_cast<Scalar>(x);
    const auto g = noise_normal_implicit_grad(x, pt);
    d_rho[i] = g.d_rho;
    d_mu[i] = g.d_mu;
    d_sigma[i] = g.d_sigma;
  }
  const std::size_t ri = p.rho.id(), mi = p.mu.id(), si = p.sigma.id();
  Tensor in[] = {p.rho, p.mu, p.sigma};
  return p.mu.tape().record(shape, std::move(out), in,
                            [ri, mi, si, d_rho = std::move(d_rho), d_mu = std::move(d_mu),
                             d_sigma = std::move(d_sigma)](ad::Tape& t, std::size_t self) {
                              const auto& g = t.node(self).grad;
                              auto push = [&](std::size_t id, const std::vector<Scalar>& local) {
                                auto& node = t.node(id);
                                if (!node.requires_grad) return;
                                for (std::size_t k = 0; k < g.size(); ++k) node.grad[k] += g[k] * local[k];
                              };
                              push(ri, d_rho);
                              push(mi, d_mu);
                              push(si, d_sigma);
                            });
}

}  // namespace cpcvae
