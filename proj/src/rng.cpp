#include "cpcvae/rng.hpp"

#include <sstream>

namespace cpcvae {

double Rng::normal() {
  std::normal_distribution<double> d(0.0, 1.0);
  return d(engine_);
}

double Rng::uniform() {
  // 53 random mantissa bits shifted off zero: (k + 0.5) / 2^53 in (0, 1).
  const std::uint64_t k = engine_() >> 11;
  return (static_cast<double>(k) + 0.5) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t n) {
  std::uniform_int_distribution<std::uint64_t> d(0, n - 1);
  return d(engine_);
}

std::vector<double> Rng::normals(std::size_t n) {
  std::vector<double> out(n);
  std::normal_distribution<double> d(0.0, 1.0);
  for (auto& v : out) v = d(engine_);
  return out;
}

std::vector<double> Rng::uniforms(std::size_t n) {
  std::vector<double> out(n);
  for (auto& v : out) v = uniform();
  return out;
}

Rng Rng::split() { return Rng(engine_()); }

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::set_state(const std::string& s) {
  std::istringstream is(s);
  is >> engine_;
}

Rng derived_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  Rng r;
  r.engine().seed(seq);
  return r;
}

}  // namespace cpcvae
