#include "cpcvae/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "cpcvae/errors.hpp"

namespace cpcvae {

std::vector<double> finite_difference_gradient(const ScalarFunction& f, std::span<const double> x,
                                               double h) {
  if (!(h > 0)) throw DomainError("finite difference step must be positive");
  std::vector<double> probe(x.begin(), x.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = f(probe);
    probe[i] = orig - h;
    const double down = f(probe);
    probe[i] = orig;
    grad[i] = (up - down) / (2 * h);
  }
  return grad;
}

double max_relative_error(std::span<const double> a, std::span<const double> b, double floor) {
  if (a.size() != b.size()) throw DimensionError("max_relative_error: length mismatch");
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(std::abs(b[i]), floor));
  return worst;
}

double max_tolerance_ratio(std::span<const double> a, std::span<const double> b, double rtol, double atol) {
  if (a.size() != b.size()) throw DimensionError("max_tolerance_ratio: length mismatch");
  if (!(rtol >= 0 && atol >= 0 && rtol + atol > 0)) throw DomainError("tolerances must be nonnegative and not both zero");
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]) / (atol + rtol * std::abs(b[i])));
  return worst;
}

}  // namespace cpcvae
