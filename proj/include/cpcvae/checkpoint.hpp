#pragma once

// Structured-text (JSON) checkpoints: versioned header, config echo,
// named parameter tensors, RNG state and step count.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cpcvae/models.hpp"

namespace cpcvae {

inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kCheckpointFormat = "cpcvae-checkpoint";

struct NamedTensor {
  std::string name;
  ad::Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  int version = kCheckpointVersion;
  std::map<std::string, std::string> config;
  std::uint64_t step = 0;
  std::string rng_state;
  std::vector<NamedTensor> parameters;
  /// Model-level values that are not trained parameters (e.g. the M2 log prior).
  std::map<std::string, std::vector<double>> extras;
  std::map<std::string, double> metrics;
};

/// Snapshot of every model parameter value.
std::vector<NamedTensor> snapshot_parameters(const ModelBase& model);
/// Copies values by name; throws FormatError on a missing name or shape mismatch.
void restore_parameters(ModelBase& model, const std::vector<NamedTensor>& values);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Reads and validates the header; FormatError on a bad file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cpcvae
