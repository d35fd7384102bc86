#include "cpcvae/benchmark.hpp"

#include "cpcvae/errors.hpp"
#include "cpcvae/stats.hpp"
#include "cpcvae/trainer.hpp"

namespace cpcvae {

std::vector<StepTiming> benchmark_step_time(const std::vector<TrainConfig>& configs, const SslDataset& data,
                                            std::size_t steps, std::size_t warmup) {
  if (steps < 10) throw ConfigError("benchmark needs at least 10 timed steps, got " + std::to_string(steps));
  std::vector<StepTiming> out;
  for (const auto& cfg : configs) {
    Trainer trainer(cfg, data);
    for (std::size_t i = 0; i < warmup; ++i) trainer.step();
    std::vector<double> ms;
    for (std::size_t i = 0; i < steps; ++i) ms.push_back(trainer.step().ms);
    out.push_back({mean(ms), median(ms), steps});
  }
  return out;
}

}  // namespace cpcvae
