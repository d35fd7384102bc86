#pragma once

#include <vector>

#include "cpcvae/config.hpp"
#include "cpcvae/data.hpp"

namespace cpcvae {

struct StepTiming {
  double mean_ms = 0;
  double median_ms = 0;
  std::size_t steps = 0;
};

/// Wall-clock cost of optimizer steps after `warmup` untimed steps. Each
/// config trains its own model on `data`. Needs at least 10 timed steps.
std::vector<StepTiming> benchmark_step_time(const std::vector<TrainConfig>& configs, const SslDataset& data,
                                            std::size_t steps, std::size_t warmup = 5);

}  // namespace cpcvae
