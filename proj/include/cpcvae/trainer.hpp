#pragma once

// Training loop: 50/50 labeled/unlabeled minibatches, ADAM, per-epoch
// validation with early stopping, and the metrics log.

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cpcvae/adam.hpp"
#include "cpcvae/checkpoint.hpp"
#include "cpcvae/config.hpp"
#include "cpcvae/data.hpp"
#include "cpcvae/m2.hpp"
#include "cpcvae/models.hpp"
#include "cpcvae/objectives.hpp"

namespace cpcvae {

/// Builds the dataset a config describes (half-moon synthesis or IDX files).
SslDataset load_dataset(const TrainConfig& cfg);

/// Target label distribution pi for the aggregate term and the M2 prior.
std::vector<double> target_distribution(const TrainConfig& cfg, const SslDataset& data);

struct BuiltModel {
  std::unique_ptr<ModelBase> model;
  VaeModel* vae = nullptr;
  M2Model* m2 = nullptr;
};

/// Model for `cfg` sized to the dataset, initialized from seed.
BuiltModel build_model(const TrainConfig& cfg, const SslDataset& data);

/// Fixed-seed stream used for every accuracy and loss evaluation of a run,
/// so re-evaluating a checkpoint reproduces the logged numbers.
Rng evaluation_rng(const TrainConfig& cfg);

/// Fraction of rows whose argmax class probability (ties to the lowest
/// index) equals the label.
double evaluate_accuracy(ModelBase& model, const LabeledSet& split, std::size_t num_mc, Rng& rng);
/// Argmax per row of a [rows, L] probability matrix, ties to the lowest index.
std::vector<int> argmax_rows(std::span<const double> probs, std::size_t num_classes);

struct StepRecord {
  std::size_t step = 0, epoch = 0;
  double total = 0, elbo = 0, prediction = 0, consistency_unlabeled = 0, consistency_labeled = 0;
  double aggregate = 0, l2 = 0, entropy = 0;
  double log_q_labeled = 0, supervised_bound = 0, unsupervised_bound = 0;
  double ms = 0;
};

struct EpochRecord {
  std::size_t epoch = 0, step = 0;
  double valid_accuracy = 0, test_accuracy = 0, valid_loss = 0, lr = 0;
};

/// Append-only record of a run; step indices increase monotonically.
class MetricsLog {
 public:
  void add_step(const StepRecord& r);
  void add_epoch(const EpochRecord& r);
  const std::vector<StepRecord>& steps() const { return steps_; }
  const std::vector<EpochRecord>& epochs() const { return epochs_; }

  void write_steps_csv(const std::filesystem::path& path) const;
  void write_epochs_csv(const std::filesystem::path& path) const;
  /// Equality of every column except wall-clock time.
  bool same_values(const MetricsLog& other) const;

 private:
  std::vector<StepRecord> steps_;
  std::vector<EpochRecord> epochs_;
};

struct TrainResult {
  BuiltModel model;  // parameters restored to the best checkpoint
  Checkpoint best;
  MetricsLog log;
  double best_valid_accuracy = 0;
  double test_accuracy = 0;  // at the best checkpoint
  /// Labeled training prediction loss P of the final iterate.
  double final_labeled_prediction_loss = 0;
  std::size_t steps_run = 0;
  bool stopped_early = false;
};

/// Owns one model, its optimizer and the sampling streams.
class Trainer {
 public:
  Trainer(TrainConfig cfg, const SslDataset& data);

  /// One optimizer step on a fresh 50/50 batch; returns the objective terms.
  StepRecord step();
  /// Runs to cfg.steps (plus mlp_steps for vae_then_mlp) with early stopping.
  /// When `out_dir` is given, a non-finite objective or gradient writes
  /// last_good.json there before rethrowing. The model moves into the
  /// result, so model() and built() are empty afterwards.
  TrainResult run(const std::optional<std::filesystem::path>& out_dir = std::nullopt);

  ModelBase& model() { return *built_.model; }
  BuiltModel& built() { return built_; }
  const TrainConfig& config() const { return cfg_; }
  std::size_t steps_per_epoch() const { return steps_per_epoch_; }
  /// Labeled and unlabeled indices of the most recent batch.
  const std::vector<std::size_t>& last_labeled_batch() const { return last_labeled_; }
  const std::vector<std::size_t>& last_unlabeled_batch() const { return last_unlabeled_; }

  Checkpoint make_checkpoint(const std::map<std::string, double>& metrics) const;
  /// Mean labeled cross-entropy P over the labeled training set.
  double labeled_prediction_loss();

 private:
  std::vector<std::size_t> next_indices(std::vector<std::size_t>& order, std::size_t& cursor, std::size_t n,
                                        std::size_t count);
  void begin_predictor_phase();
  double validation_loss();

  TrainConfig cfg_;
  const SslDataset& data_;
  BuiltModel built_;
  std::vector<double> pi_;
  Adam adam_;
  Rng rng_, batch_rng_, consistency_rng_;
  std::vector<std::size_t> labeled_order_, unlabeled_order_;
  std::size_t labeled_cursor_ = 0, unlabeled_cursor_ = 0;
  std::vector<std::size_t> last_labeled_, last_unlabeled_;
  std::size_t step_ = 0, steps_per_epoch_ = 1;
  bool predictor_phase_ = false;
};

/// Convenience wrapper: Trainer(cfg, data).run().
TrainResult train(const TrainConfig& cfg, const SslDataset& data);

/// Rebuilds a model from a checkpoint's config echo and parameters. The
/// dataset supplies dimensions and must match the checkpointed run.
BuiltModel model_from_checkpoint(const Checkpoint& ckpt, const SslDataset& data);
TrainConfig config_from_checkpoint(const Checkpoint& ckpt);

struct ConditionalSample {
  std::vector<double> z;
  std::vector<double> image;  // likelihood location
  double confidence = 0;
  std::size_t draws = 0;
};

/// Draws z ~ N(0, I) until p_w(target | z) > 1 - epsilon, then decodes it.
/// Throws NumericalError reporting the acceptance rate when max_draws is exceeded.
ConditionalSample class_conditional_sample(VaeModel& model, int target_class, double epsilon,
                                           std::size_t max_draws, Rng& rng);

}  // namespace cpcvae
