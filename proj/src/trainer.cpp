#include "cpcvae/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "cpcvae/errors.hpp"
#include "cpcvae/idx.hpp"

namespace cpcvae {

namespace {

constexpr std::uint64_t kBatchStream = 1, kObjectiveStream = 2, kEvalStream = 3,
                        kConsistencyStream = 4, kAugmentStream = 5;

LabeledSet idx_pool(const std::string& images_path, const std::string& labels_path, std::size_t max_examples,
                    ImageMeta& meta) {
  const auto images = load_idx(images_path);
  const auto labels = load_idx(labels_path);
  if (images.dims.size() != 3) throw FormatError("IDX images must be rank 3, got rank " + std::to_string(images.dims.size()));
  if (labels.dims.size() != 1 || labels.dims[0] != images.dims[0])
    throw FormatError("IDX labels do not match the image count");
  meta.height = images.dims[1];
  meta.width = images.dims[2];
  meta.channels = 1;
  meta.low = 0;
  meta.high = 255;
  std::size_t n = images.dims[0];
  if (max_examples > 0) n = std::min(n, max_examples);
  const std::size_t d = meta.height * meta.width;
  Matrix raw(n, d);
  for (std::size_t i = 0; i < n * d; ++i) raw.data[i] = images.data[i];
  LabeledSet out{preprocess(raw, meta), {}};
  for (std::size_t i = 0; i < n; ++i) out.y.push_back(labels.data[i]);
  return out;
}

}  // namespace

SslDataset load_dataset(const TrainConfig& cfg) {
  SplitConfig split{cfg.num_labeled, cfg.valid_frac, cfg.test_frac, cfg.balanced, cfg.effective_split_seed()};
  if (cfg.dataset == "halfmoon") {
    auto pool = make_half_moons(cfg.data_n, cfg.data_noise, cfg.effective_split_seed());
    return ssl_split(pool, 2, split);
  }
  if (cfg.dataset != "idx") throw ConfigError("unknown dataset '" + cfg.dataset + "'");
  if (cfg.idx_images.empty() || cfg.idx_labels.empty())
    throw ConfigError("data.idx_images and data.idx_labels are required for the idx dataset");
  ImageMeta meta;
  auto pool = idx_pool(cfg.idx_images, cfg.idx_labels, cfg.max_examples, meta);
  std::size_t classes = 0;
  for (int y : pool.y) classes = std::max(classes, static_cast<std::size_t>(y) + 1);
  const bool separate_test = !cfg.idx_test_images.empty();
  if (separate_test) split.test_frac = 0;
  auto d = ssl_split(pool, classes, split);
  d.meta = meta;
  if (separate_test) {
    ImageMeta test_meta;
    d.test = idx_pool(cfg.idx_test_images, cfg.idx_test_labels, 0, test_meta);
    d.test_idx.clear();
  }
  return d;
}

std::vector<double> target_distribution(const TrainConfig& cfg, const SslDataset& data) {
  if (cfg.pi_source == "uniform" || data.labeled.y.empty())
    return std::vector<double>(data.num_classes, 1.0 / static_cast<double>(data.num_classes));
  return label_distribution(data.labeled.y, data.num_classes);
}

BuiltModel build_model(const TrainConfig& cfg, const SslDataset& data) {
  Rng init(cfg.seed);
  BuiltModel b;
  if (cfg.model == ModelKind::m2) {
    M2Config m;
    m.input_dim = data.dim;
    m.latent_dim = cfg.latent_dim;
    m.num_classes = data.num_classes;
    m.encoder_hidden = cfg.encoder_hidden;
    m.decoder_hidden = cfg.decoder_hidden;
    m.discriminator_hidden = cfg.m2_discriminator_hidden;
    m.activation = cfg.activation;
    m.likelihood = cfg.likelihood;
    m.class_prior = target_distribution(cfg, data);
    for (double& p : m.class_prior) p = std::max(p, 1e-6);
    const double total = [&] {
      double s = 0;
      for (double p : m.class_prior) s += p;
      return s;
    }();
    for (double& p : m.class_prior) p /= total;
    auto model = std::make_unique<M2Model>(m, init);
    b.m2 = model.get();
    b.model = std::move(model);
    return b;
  }
  VaeConfig v;
  v.input_dim = data.dim;
  v.latent_dim = cfg.latent_dim;
  v.num_classes = data.num_classes;
  v.encoder_hidden = cfg.encoder_hidden;
  v.decoder_hidden = cfg.decoder_hidden;
  v.predictor_hidden = cfg.predictor_hidden;
  v.activation = cfg.activation;
  v.likelihood = cfg.likelihood;
  if (cfg.use_spatial) {
    v.spatial = cfg.spatial;
    v.image_height = data.meta.height;
    v.image_width = data.meta.width;
  }
  auto model = std::make_unique<VaeModel>(v, init);
  b.vae = model.get();
  b.model = std::move(model);
  return b;
}

Rng evaluation_rng(const TrainConfig& cfg) { return derived_rng(cfg.seed, kEvalStream); }

std::vector<int> argmax_rows(std::span<const double> probs, std::size_t num_classes) {
  std::vector<int> out(probs.size() / num_classes);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < num_classes; ++k)
      if (probs[i * num_classes + k] > probs[i * num_classes + best]) best = k;
    out[i] = static_cast<int>(best);
  }
  return out;
}

double evaluate_accuracy(ModelBase& model, const LabeledSet& split, std::size_t num_mc, Rng& rng) {
  if (split.size() == 0) throw DomainError("evaluate_accuracy on an empty split");
  const auto probs = model.predict_proba(split.x.data, split.x.rows, num_mc, rng);
  const auto pred = argmax_rows(probs, model.num_classes());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == split.y[i];
  return static_cast<double>(correct) / static_cast<double>(split.size());
}

// ---- metrics ---------------------------------------------------------------

void MetricsLog::add_step(const StepRecord& r) {
  if (!steps_.empty() && r.step <= steps_.back().step) throw std::logic_error("metrics step index must increase");
  steps_.push_back(r);
}

void MetricsLog::add_epoch(const EpochRecord& r) { epochs_.push_back(r); }

void MetricsLog::write_steps_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "step,epoch,total,elbo,prediction,consistency_unlabeled,consistency_labeled,aggregate,l2,entropy,"
         "log_q_labeled,supervised_bound,unsupervised_bound,ms\n";
  out << std::setprecision(10);
  for (const auto& r : steps_)
    out << r.step << ',' << r.epoch << ',' << r.total << ',' << r.elbo << ',' << r.prediction << ','
        << r.consistency_unlabeled << ',' << r.consistency_labeled << ',' << r.aggregate << ',' << r.l2 << ','
        << r.entropy << ',' << r.log_q_labeled << ',' << r.supervised_bound << ',' << r.unsupervised_bound << ','
        << r.ms << '\n';
}

void MetricsLog::write_epochs_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,step,valid_accuracy,test_accuracy,valid_loss,lr\n" << std::setprecision(10);
  for (const auto& r : epochs_)
    out << r.epoch << ',' << r.step << ',' << r.valid_accuracy << ',' << r.test_accuracy << ',' << r.valid_loss
        << ',' << r.lr << '\n';
}

bool MetricsLog::same_values(const MetricsLog& other) const {
  if (steps_.size() != other.steps_.size() || epochs_.size() != other.epochs_.size()) return false;
  for (std::size_t i = 0; i < steps_.size(); ++i) {
    const auto &a = steps_[i], &b = other.steps_[i];
    if (a.step != b.step || a.epoch != b.epoch || a.total != b.total || a.elbo != b.elbo ||
        a.prediction != b.prediction || a.consistency_unlabeled != b.consistency_unlabeled ||
        a.consistency_labeled != b.consistency_labeled || a.aggregate != b.aggregate || a.l2 != b.l2 ||
        a.entropy != b.entropy || a.log_q_labeled != b.log_q_labeled || a.supervised_bound != b.supervised_bound ||
        a.unsupervised_bound != b.unsupervised_bound)
      return false;
  }
  for (std::size_t i = 0; i < epochs_.size(); ++i) {
    const auto &a = epochs_[i], &b = other.epochs_[i];
    if (a.epoch != b.epoch || a.step != b.step || a.valid_accuracy != b.valid_accuracy ||
        a.test_accuracy != b.test_accuracy || a.valid_loss != b.valid_loss || a.lr != b.lr)
      return false;
  }
  return true;
}

// ---- trainer ---------------------------------------------------------------

namespace {

AdamOptions adam_options(const TrainConfig& cfg) { return {cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps}; }

Tensor rows_tensor(ad::Tape& tape, const Matrix& m) {
  return tape.constant({m.rows, m.cols}, std::vector<Scalar>(m.data.begin(), m.data.end()));
}

}  // namespace

Trainer::Trainer(TrainConfig cfg, const SslDataset& data)
    : cfg_(std::move(cfg)),
      data_(data),
      rng_(derived_rng(cfg_.seed, kObjectiveStream)),
      batch_rng_(derived_rng(cfg_.seed, kBatchStream)),
      consistency_rng_(derived_rng(cfg_.seed, kConsistencyStream)) {
  cfg_.validate();
  if (data_.labeled.size() == 0 && cfg_.model != ModelKind::vae)
    throw ConfigError("model kind " + to_string(cfg_.model) + " needs labeled training data");
  if (data_.labeled.size() + data_.unlabeled.rows == 0) throw ConfigError("empty training set");
  built_ = build_model(cfg_, data_);
  pi_ = target_distribution(cfg_, data_);
  std::vector<ad::Parameter*> params = cfg_.model == ModelKind::vae_then_mlp ? built_.vae->vae_parameters()
                                                                              : built_.model->parameters();
  adam_ = Adam(params, adam_options(cfg_));
  const std::size_t half = cfg_.batch_size / 2;
  const std::size_t pool = data_.unlabeled.rows > 0 ? data_.unlabeled.rows : data_.labeled.size();
  steps_per_epoch_ = std::max<std::size_t>(1, (pool + half - 1) / half);
}

std::vector<std::size_t> Trainer::next_indices(std::vector<std::size_t>& order, std::size_t& cursor,
                                               std::size_t n, std::size_t count) {
  std::vector<std::size_t> out;
  out.reserve(count);
  while (out.size() < count) {
    if (cursor >= order.size()) {
      order.resize(n);
      for (std::size_t i = 0; i < n; ++i) order[i] = i;
      std::shuffle(order.begin(), order.end(), batch_rng_.engine());
      cursor = 0;
    }
    out.push_back(order[cursor++]);
  }
  return out;
}

void Trainer::begin_predictor_phase() {
  predictor_phase_ = true;
  adam_ = Adam(built_.vae->predictor_parameters(), adam_options(cfg_));
}

StepRecord Trainer::step() {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t half = cfg_.batch_size / 2;
  const bool has_unlabeled = data_.unlabeled.rows > 0;
  last_labeled_ = data_.labeled.size() > 0
                      ? next_indices(labeled_order_, labeled_cursor_, data_.labeled.size(), half)
                      : std::vector<std::size_t>{};
  last_unlabeled_ = has_unlabeled
                        ? next_indices(unlabeled_order_, unlabeled_cursor_, data_.unlabeled.rows, half)
                        : std::vector<std::size_t>{};
  auto lab = data_.labeled.gather(last_labeled_);
  auto unl = data_.unlabeled.gather(last_unlabeled_);
  lab.x.cols = unl.cols = data_.dim;
  if (cfg_.augment_translate_px > 0 && data_.meta.is_image()) {
    const auto seed = derived_rng(cfg_.seed, kAugmentStream + step_).engine()();
    ImageMeta unit = data_.meta;
    unit.low = -1;
    unit.high = 1;
    lab.x = preprocess(lab.x, unit, cfg_.augment_translate_px, seed);
    unl = preprocess(unl, unit, cfg_.augment_translate_px, seed ^ 0x9e3779b97f4a7c15ull);
  }

  ad::Tape tape;
  auto xl = rows_tensor(tape, lab.x), xu = rows_tensor(tape, unl);
  ObjectiveTerms terms;
  switch (cfg_.model) {
    case ModelKind::vae:
    case ModelKind::vae_then_mlp: {
      if (predictor_phase_) {
        terms = predictor_objective(*built_.vae, tape, xl, lab.y, cfg_.mult.l2_weight, rng_);
      } else {
        auto mult = cfg_.mult;
        mult.lambda = 0;
        terms = pc_objective(*built_.vae, tape, xu, xl, lab.y, mult, rng_, cfg_.num_mc);
      }
      break;
    }
    case ModelKind::pc:
      terms = pc_objective(*built_.vae, tape, xu, xl, lab.y, cfg_.mult, rng_, cfg_.num_mc);
      break;
    case ModelKind::cpc:
      terms = cpc_objective(*built_.vae, tape, xu, xl, lab.y, cfg_.mult, pi_, rng_, cfg_.consistency, cfg_.num_mc,
                            &consistency_rng_);
      break;
    case ModelKind::m2:
      terms = m2_objective(*built_.m2, tape, xl, lab.y, xu, cfg_.m2_alpha, cfg_.m2_supervised_weight, rng_,
                           cfg_.num_mc);
      break;
  }
  const double total = terms.total.item();
  if (!std::isfinite(total))
    throw NumericalError("non-finite objective at step " + std::to_string(step_ + 1));
  built_.model->zero_grad();
  tape.backward(ad::neg(terms.total));
  adam_.step();
  ++step_;

  StepRecord r;
  r.step = step_;
  r.epoch = (step_ - 1) / steps_per_epoch_;
  r.total = total;
  r.elbo = terms.elbo;
  r.prediction = terms.prediction;
  r.consistency_unlabeled = terms.consistency_unlabeled;
  r.consistency_labeled = terms.consistency_labeled;
  r.aggregate = terms.aggregate;
  r.l2 = terms.l2;
  r.entropy = terms.entropy;
  r.log_q_labeled = terms.log_q_labeled;
  r.supervised_bound = terms.supervised_bound;
  r.unsupervised_bound = terms.unsupervised_bound;
  r.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return r;
}

double Trainer::labeled_prediction_loss() {
  if (data_.labeled.size() == 0) return 0.0;
  Rng eval = evaluation_rng(cfg_);
  const auto probs =
      built_.model->predict_proba(data_.labeled.x.data, data_.labeled.size(), cfg_.eval_num_mc, eval);
  double loss = 0;
  const std::size_t L = data_.num_classes;
  for (std::size_t i = 0; i < data_.labeled.size(); ++i)
    loss -= std::log(std::max(probs[i * L + static_cast<std::size_t>(data_.labeled.y[i])], 1e-300));
  return loss / static_cast<double>(data_.labeled.size());
}

double Trainer::validation_loss() {
  Rng eval = evaluation_rng(cfg_);
  const auto probs = built_.model->predict_proba(data_.valid.x.data, data_.valid.size(), cfg_.eval_num_mc, eval);
  double loss = 0;
  const std::size_t L = data_.num_classes;
  for (std::size_t i = 0; i < data_.valid.size(); ++i)
    loss -= std::log(std::max(probs[i * L + static_cast<std::size_t>(data_.valid.y[i])], 1e-300));
  return loss / static_cast<double>(data_.valid.size());
}

Checkpoint Trainer::make_checkpoint(const std::map<std::string, double>& metrics) const {
  Checkpoint c;
  c.config = cfg_.to_map();
  c.step = step_;
  c.rng_state = rng_.state();
  c.parameters = snapshot_parameters(*built_.model);
  if (built_.m2) c.extras["m2.log_prior"] = built_.m2->log_prior();
  c.metrics = metrics;
  return c;
}

TrainResult Trainer::run(const std::optional<std::filesystem::path>& out_dir) {
  TrainResult result;
  const bool two_phase = cfg_.model == ModelKind::vae_then_mlp;
  const std::size_t total_steps = cfg_.steps + (two_phase ? cfg_.mlp_steps : 0);
  const bool has_valid = data_.valid.size() > 0;
  const bool has_test = data_.test.size() > 0;
  double best_acc = -1, best_plateau_loss = INFINITY;
  std::size_t since_best = 0, since_plateau = 0;
  bool have_best = false;
  Checkpoint best = make_checkpoint({});

  auto abort_with = [&](const std::exception& e) {
    if (out_dir) save_checkpoint(*out_dir / "last_good.json", have_best ? best : make_checkpoint({}));
    throw NumericalError(std::string(e.what()) + " (training aborted after step " + std::to_string(step_) + ")");
  };

  while (step_ < total_steps) {
    if (two_phase && !predictor_phase_ && step_ == cfg_.steps) {
      begin_predictor_phase();
      best_acc = -1;
      since_best = 0;
      have_best = false;
    }
    try {
      result.log.add_step(step());
    } catch (const NumericalError& e) {
      abort_with(e);
    } catch (const DomainError& e) {
      // NaN parameters or inputs surface as domain errors inside the tape.
      abort_with(e);
    }
    if (step_ % steps_per_epoch_ != 0 && step_ != total_steps) continue;

    EpochRecord ep;
    ep.epoch = (step_ - 1) / steps_per_epoch_;
    ep.step = step_;
    ep.lr = adam_.lr();
    const bool predictor_ready = !two_phase || predictor_phase_;
    if (has_valid) {
      Rng eval = evaluation_rng(cfg_);
      ep.valid_accuracy = evaluate_accuracy(*built_.model, data_.valid, cfg_.eval_num_mc, eval);
      ep.valid_loss = validation_loss();
    }
    if (has_test) {
      Rng eval = evaluation_rng(cfg_);
      ep.test_accuracy = evaluate_accuracy(*built_.model, data_.test, cfg_.eval_num_mc, eval);
    }
    result.log.add_epoch(ep);
    if (!predictor_ready) continue;

    if (cfg_.model == ModelKind::m2 && cfg_.m2_plateau && has_valid) {
      if (ep.valid_loss < 0.99 * best_plateau_loss) {
        best_plateau_loss = ep.valid_loss;
        since_plateau = 0;
      } else if (++since_plateau >= 10) {
        adam_.set_lr(std::max(adam_.lr() * 0.5, cfg_.m2_lr_floor));
        since_plateau = 0;
      }
    }

    const double score = has_valid ? ep.valid_accuracy : 0.0;
    if (!has_valid || score >= best_acc) {
      best = make_checkpoint({{"valid_accuracy", ep.valid_accuracy}, {"test_accuracy", ep.test_accuracy}});
      have_best = true;
    }
    if (score > best_acc) {
      best_acc = score;
      since_best = 0;
    } else if (has_valid && cfg_.early_stopping && ++since_best >= cfg_.patience_epochs) {
      result.stopped_early = true;
      break;
    }
  }

  result.final_labeled_prediction_loss = labeled_prediction_loss();
  result.steps_run = step_;
  if (have_best) restore_parameters(*built_.model, best.parameters);
  result.best = best;
  result.best_valid_accuracy = have_best && has_valid ? best.metrics["valid_accuracy"] : 0.0;
  if (has_test) {
    Rng eval = evaluation_rng(cfg_);
    result.test_accuracy = evaluate_accuracy(*built_.model, data_.test, cfg_.eval_num_mc, eval);
  }
  result.model = std::move(built_);
  return result;
}

TrainResult train(const TrainConfig& cfg, const SslDataset& data) { return Trainer(cfg, data).run(); }

TrainConfig config_from_checkpoint(const Checkpoint& ckpt) {
  TrainConfig cfg;
  for (const auto& [k, v] : ckpt.config) cfg.set(k, v);
  return cfg;
}

BuiltModel model_from_checkpoint(const Checkpoint& ckpt, const SslDataset& data) {
  auto b = build_model(config_from_checkpoint(ckpt), data);
  restore_parameters(*b.model, ckpt.parameters);
  if (b.m2) {
    if (auto it = ckpt.extras.find("m2.log_prior"); it != ckpt.extras.end()) b.m2->set_log_prior(it->second);
  }
  return b;
}

ConditionalSample class_conditional_sample(VaeModel& model, int target_class, double epsilon,
                                           std::size_t max_draws, Rng& rng) {
  if (target_class < 0 || static_cast<std::size_t>(target_class) >= model.num_classes())
    throw DomainError("target class " + std::to_string(target_class) + " out of range");
  if (!(epsilon > 0 && epsilon < 1)) throw DomainError("epsilon must lie in (0, 1)");
  const std::size_t C = model.latent_dim(), L = model.num_classes();
  constexpr std::size_t kBlock = 256;
  std::size_t drawn = 0;
  while (drawn < max_draws) {
    const std::size_t n = std::min(kBlock, max_draws - drawn);
    auto draws = rng.normals(n * C);
    ad::Tape tape(false);
    auto z = tape.constant({n, C}, std::vector<Scalar>(draws.begin(), draws.end()));
    auto probs = ad::softmax(model.predictor_logits(tape, z));
    for (std::size_t i = 0; i < n; ++i) {
      const double p = probs[i * L + static_cast<std::size_t>(target_class)];
      if (p > 1.0 - epsilon) {
        ConditionalSample s;
        s.z.assign(draws.begin() + static_cast<std::ptrdiff_t>(i * C),
                   draws.begin() + static_cast<std::ptrdiff_t>((i + 1) * C));
        auto zi = tape.constant({1, C}, std::vector<Scalar>(s.z.begin(), s.z.end()));
        auto image = likelihood_location(model.decode(tape, zi)).to_vector();
        s.image.assign(image.begin(), image.end());
        s.confidence = p;
        s.draws = drawn + i + 1;
        return s;
      }
    }
    drawn += n;
  }
  throw NumericalError("class-conditional sampling: no draw reached confidence " + std::to_string(1 - epsilon) +
                       " for class " + std::to_string(target_class) + " in " + std::to_string(max_draws) +
                       " draws (acceptance rate 0/" + std::to_string(max_draws) + ")");
}

}  // namespace cpcvae
