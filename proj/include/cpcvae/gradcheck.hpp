#pragma once

#include <functional>
#include <span>
#include <vector>

namespace cpcvae {

using ScalarFunction = std::function<double(std::span<const double>)>;

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate.
/// Independent of the tape; used as the oracle for backward().
std::vector<double> finite_difference_gradient(const ScalarFunction& f, std::span<const double> x,
                                               double h = 1e-6);

/// max_i |a_i - b_i| / max(|b_i|, floor); the floor keeps near-zero entries
/// from dominating.
double max_relative_error(std::span<const double> a, std::span<const double> b,
                          double floor = 1e-7);

/// max_i |a_i - b_i| / (atol + rtol |b_i|). At most 1 means every entry
/// satisfies |a_i - b_i| <= rtol |b_i| + atol.
double max_tolerance_ratio(std::span<const double> a, std::span<const double> b, double rtol,
                           double atol);

}  // namespace cpcvae
