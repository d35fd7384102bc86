#pragma once

// Reference computations used as independent oracles by the tests. Nothing
// here calls into the library.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <vector>

namespace oracle {

/// Adaptive Simpson quadrature with Richardson correction.
inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol,
                               int depth = 50) {
  auto simpson = [&](double lo, double hi, double flo, double fmid, double fhi) {
    return (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
  };
  std::function<double(double, double, double, double, double, double, double, int)> rec =
      [&](double lo, double hi, double flo, double fmid, double fhi, double whole, double eps, int d) {
        const double mid = 0.5 * (lo + hi), lm = 0.5 * (lo + mid), rm = 0.5 * (mid + hi);
        const double flm = f(lm), frm = f(rm);
        const double left = simpson(lo, mid, flo, flm, fmid), right = simpson(mid, hi, fmid, frm, fhi);
        const double delta = left + right - whole;
        if (d <= 0 || std::abs(delta) <= 15.0 * eps) return left + right + delta / 15.0;
        return rec(lo, mid, flo, flm, fmid, left, eps / 2, d - 1) + rec(mid, hi, fmid, frm, fhi, right, eps / 2, d - 1);
      };
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  return rec(a, b, fa, fm, fb, simpson(a, b, fa, fm, fb), tol, depth);
}

/// Two-sided one-sample Kolmogorov-Smirnov statistic sup |F_n - F|.
inline double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max({d, (static_cast<double>(i) + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

/// Asymptotic Kolmogorov distribution tail P(sqrt(n) D > t).
inline double ks_pvalue(double d, std::size_t n) {
  const double t = std::sqrt(static_cast<double>(n)) * d;
  double p = 0;
  for (int k = 1; k < 200; ++k) p += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * t * t);
  return std::clamp(p, 0.0, 1.0);
}

/// Accuracy of a 1-nearest-neighbor classifier (Euclidean, rows of width dim).
inline double one_nn_accuracy(const std::vector<double>& train_x, const std::vector<int>& train_y,
                              const std::vector<double>& test_x, const std::vector<int>& test_y, std::size_t dim) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test_y.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    int label = -1;
    for (std::size_t j = 0; j < train_y.size(); ++j) {
      double d = 0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double diff = test_x[i * dim + k] - train_x[j * dim + k];
        d += diff * diff;
      }
      if (d < best) best = d, label = train_y[j];
    }
    correct += label == test_y[i];
  }
  return static_cast<double>(correct) / static_cast<double>(test_y.size());
}

/// z ~ N(0, 1), x | z ~ N(w z + b, s^2), with a Gaussian q(z|x) = N(m, v).
struct LinearGaussian {
  double w, b, s;

  double log_evidence(double x) const {
    const double var = w * w + s * s;
    return -0.5 * std::log(2 * std::numbers::pi * var) - (x - b) * (x - b) / (2 * var);
  }
  double posterior_mean(double x) const { return w * (x - b) / (w * w + s * s); }
  double posterior_var() const { return s * s / (w * w + s * s); }
  /// Exact ELBO under q = N(m, v).
  double elbo(double x, double m, double v) const {
    const double r = x - b - w * m;
    const double expected_ll = -0.5 * std::log(2 * std::numbers::pi * s * s) - (r * r + w * w * v) / (2 * s * s);
    const double kl = 0.5 * (m * m + v - 1 - std::log(v));
    return expected_ll - kl;
  }
};

inline double softplus_inverse(double y) { return std::log(std::expm1(y)); }

}  // namespace oracle
