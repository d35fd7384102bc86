#pragma once

// Training configuration and its flat "key = value" text form. Keys carry
// dotted section prefixes (model., objective., m2., optim., train., data.,
// spatial.). An override may name a key by its last component when that is
// unambiguous, e.g. "lambda" for objective.lambda.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cpcvae/models.hpp"
#include "cpcvae/objectives.hpp"

namespace cpcvae {

enum class ModelKind { vae, vae_then_mlp, pc, cpc, m2 };

ModelKind parse_model_kind(const std::string& name);
std::string to_string(ModelKind k);

struct TrainConfig {
  // model
  ModelKind model = ModelKind::cpc;
  std::size_t latent_dim = 2;
  std::vector<std::size_t> encoder_hidden{64, 64};
  std::vector<std::size_t> decoder_hidden{64, 64};
  std::vector<std::size_t> predictor_hidden{128};
  Activation activation = Activation::softplus;
  LikelihoodKind likelihood = LikelihoodKind::normal;
  bool use_spatial = false;
  SpatialConfig spatial;

  // objective
  ConstraintMultipliers mult;
  ConsistencyOptions consistency;
  /// "empirical" (labeled frequencies) or "uniform".
  std::string pi_source = "empirical";
  std::size_t num_mc = 1;

  // M2
  double m2_alpha = 0.1;
  double m2_supervised_weight = 1.0;
  std::vector<std::size_t> m2_discriminator_hidden{64, 64};
  bool m2_plateau = true;
  double m2_lr_floor = 1e-5;

  // optimizer
  double lr = 3e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  // loop
  std::size_t batch_size = 64;
  std::size_t steps = 20000;
  /// Second-phase predictor steps for vae_then_mlp.
  std::size_t mlp_steps = 5000;
  std::size_t patience_epochs = 20;
  bool early_stopping = true;
  std::size_t eval_num_mc = 16;
  std::uint64_t seed = 0;

  // data
  std::string dataset = "halfmoon";
  std::size_t data_n = 2000;
  double data_noise = 0.1;
  std::size_t num_labeled = 6;
  double valid_frac = 0.1;
  double test_frac = 0.4;
  bool balanced = true;
  /// Negative means "use seed".
  long long split_seed = -1;
  int augment_translate_px = 0;
  std::string idx_images, idx_labels;
  std::string idx_test_images, idx_test_labels;
  std::size_t image_height = 0, image_width = 0;
  std::size_t max_examples = 0;  // 0 = all

  /// Throws ConfigError naming the first invalid field.
  void validate() const;
  std::uint64_t effective_split_seed() const {
    return split_seed < 0 ? seed : static_cast<std::uint64_t>(split_seed);
  }

  /// Sets one key; the key may be a unique suffix. ConfigError names unknown keys.
  void set(const std::string& key, const std::string& value);
  /// Every key with its canonical value, sorted by key.
  std::map<std::string, std::string> to_map() const;
  std::string to_text() const;

  static std::vector<std::string> keys();
  /// Resolves a full or suffix key to its canonical name.
  static std::string resolve_key(const std::string& key);
};

/// Parses "key = value" lines; '#' starts a comment. Missing file -> ConfigError.
TrainConfig load_config(const std::filesystem::path& path);
TrainConfig parse_config(const std::string& text, const std::string& origin = "<string>");
/// Applies "key=value" overrides in order.
void apply_overrides(TrainConfig& cfg, const std::vector<std::string>& overrides);

}  // namespace cpcvae
