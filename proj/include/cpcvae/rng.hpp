#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace cpcvae {

/// Seeded random stream. Every draw goes through a fresh distribution
/// object, so the engine state alone determines future output and can be
/// saved to / restored from a checkpoint.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double normal();
  /// Uniform on the open interval (0, 1).
  double uniform();
  std::uint64_t below(std::uint64_t n);
  std::vector<double> normals(std::size_t n);
  std::vector<double> uniforms(std::size_t n);

  /// Independent child stream derived from this stream's next output.
  Rng split();

  std::string state() const;
  void set_state(const std::string& s);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

/// Stream for (seed, index) pairs, used for per-example augmentation.
Rng derived_rng(std::uint64_t seed, std::uint64_t index);

}  // namespace cpcvae
