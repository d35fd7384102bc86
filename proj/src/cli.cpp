#include "cpcvae/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "cpcvae/benchmark.hpp"
#include "cpcvae/errors.hpp"
#include "cpcvae/stats.hpp"
#include "cpcvae/trainer.hpp"

#ifndef CPCVAE_SOURCE_HASH
#define CPCVAE_SOURCE_HASH "unknown"
#endif

namespace cpcvae::cli {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

/// Missing inputs and bad flag combinations; maps to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::vector<double> parse_doubles(const std::string& list, const std::string& flag) {
  std::vector<double> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(flag + ": '" + item + "' is not a number");
    }
  }
  if (out.empty()) throw UsageError(flag + " needs at least one value");
  return out;
}

/// Dataset flags shared by the data-reading subcommands.
struct DataFlags {
  std::optional<std::string> dataset;
  std::optional<std::size_t> num_labeled;
  std::optional<std::uint64_t> seed;
  std::optional<int> augment_px;
  std::vector<std::string> sets;

  void attach(CLI::App& app) {
    app.add_option("--dataset", dataset, "halfmoon or idx");
    app.add_option("--num-labeled", num_labeled, "labeled training examples");
    app.add_option("--seed", seed, "training seed (also the split seed unless data.split_seed is set)");
    app.add_option("--augment-translate-px", augment_px, "max random translation in pixels");
    app.add_option("--set", sets, "key=value config overrides");
  }

  void apply(TrainConfig& cfg) const {
    if (dataset) cfg.set("data.dataset", *dataset);
    if (num_labeled) cfg.num_labeled = *num_labeled;
    if (seed) cfg.seed = *seed;
    if (augment_px) cfg.augment_translate_px = *augment_px;
    apply_overrides(cfg, sets);
    cfg.validate();
  }
};

TrainConfig config_for(const std::string& path, const DataFlags& flags) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
  auto cfg = load_config(path);
  flags.apply(cfg);
  return cfg;
}

Checkpoint checkpoint_at(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("checkpoint not found: " + path);
  return load_checkpoint(path);
}

/// Checkpoint config with the command-line dataset flags applied on top.
TrainConfig checkpoint_config(const Checkpoint& ckpt, const DataFlags& flags) {
  auto cfg = config_from_checkpoint(ckpt);
  flags.apply(cfg);
  return cfg;
}

BuiltModel restore_model(const Checkpoint& ckpt, const TrainConfig& cfg, const SslDataset& data) {
  auto b = build_model(cfg, data);
  restore_parameters(*b.model, ckpt.parameters);
  if (b.m2)
    if (auto it = ckpt.extras.find("m2.log_prior"); it != ckpt.extras.end()) b.m2->set_log_prior(it->second);
  return b;
}

LabeledSet split_of(const SslDataset& d, const std::string& name) {
  if (name == "test") return d.test;
  if (name == "valid") return d.valid;
  if (name == "labeled") return d.labeled;
  if (name == "unlabeled") return LabeledSet{d.unlabeled, d.unlabeled_truth};
  throw UsageError("unknown split '" + name + "' (expected test, valid, labeled or unlabeled)");
}

void write_manifest(const fs::path& dir, const std::string& command, const TrainConfig& cfg,
                    const SslDataset& data, const std::vector<std::string>& outputs) {
  json m;
  m["command"] = command;
  m["config"] = cfg.to_map();
  m["code_hash"] = CPCVAE_SOURCE_HASH;
  m["seed"] = cfg.seed;
  m["dataset_fingerprint"] = hex64(dataset_fingerprint(data));
  json paths = json::array();
  for (const auto& o : outputs) paths.push_back((dir / o).string());
  m["outputs"] = paths;
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

// ---- train -----------------------------------------------------------------

int cmd_train(const std::string& config_path, const DataFlags& flags, std::ostream& out) {
  auto cfg = config_for(config_path, flags);
  auto data = load_dataset(cfg);
  const auto dir = make_run_dir(output_root(), "train", cfg.seed);
  write_manifest(dir, "train", cfg, data, {"config.cfg", "checkpoint.json", "steps.csv", "epochs.csv", "summary.json"});
  write_text(dir / "config.cfg", cfg.to_text());

  Trainer trainer(cfg, data);
  auto result = trainer.run(dir);
  save_checkpoint(dir / "checkpoint.json", result.best);
  result.log.write_steps_csv(dir / "steps.csv");
  result.log.write_epochs_csv(dir / "epochs.csv");
  json s;
  s["test_accuracy"] = result.test_accuracy;
  s["best_valid_accuracy"] = result.best_valid_accuracy;
  s["final_labeled_prediction_loss"] = result.final_labeled_prediction_loss;
  s["steps_run"] = result.steps_run;
  s["stopped_early"] = result.stopped_early;
  write_text(dir / "summary.json", s.dump(2) + "\n");

  out << "model " << to_string(cfg.model) << "\n"
      << "steps " << result.steps_run << (result.stopped_early ? " (early stop)" : "") << "\n"
      << "valid_accuracy " << format_accuracy(result.best_valid_accuracy) << "\n"
      << "test_accuracy " << format_accuracy(result.test_accuracy) << "\n"
      << "labeled_prediction_loss " << result.final_labeled_prediction_loss << "\n"
      << "run_dir " << dir.string() << "\n";
  return kExitOk;
}

// ---- eval ------------------------------------------------------------------

int cmd_eval(const std::vector<std::string>& checkpoints, const std::string& split, const DataFlags& flags,
             std::ostream& out) {
  std::vector<double> accs;
  std::vector<Checkpoint> loaded;
  for (const auto& path : checkpoints) loaded.push_back(checkpoint_at(path));
  fs::path dir;
  std::ostringstream csv;
  csv << "checkpoint,split,accuracy\n";
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    auto cfg = checkpoint_config(loaded[i], flags);
    auto data = load_dataset(cfg);
    if (dir.empty()) {
      dir = make_run_dir(output_root(), "eval", cfg.seed);
      write_manifest(dir, "eval", cfg, data, {"eval.csv"});
    }
    auto model = restore_model(loaded[i], cfg, data);
    Rng rng = evaluation_rng(cfg);
    const double acc = evaluate_accuracy(*model.model, split_of(data, split), cfg.eval_num_mc, rng);
    accs.push_back(acc);
    csv << checkpoints[i] << ',' << split << ',' << std::setprecision(10) << acc << '\n';
    if (loaded.size() > 1) out << checkpoints[i] << ' ';
    out << format_accuracy(acc) << "\n";
  }
  if (accs.size() > 1) {
    const auto g = summarize_group(accs);
    out << "mean " << format_accuracy(g.mean) << " std " << format_accuracy(g.std) << " (n=" << accs.size()
        << ", sample std)\n";
    csv << "mean," << split << ',' << g.mean << "\nstd," << split << ',' << g.std << '\n';
  }
  write_text(dir / "eval.csv", csv.str());
  return kExitOk;
}

// ---- latents ---------------------------------------------------------------

/// Posterior means [rows, C] (M2 conditions on its own predicted label).
std::vector<double> latent_means(BuiltModel& b, const Matrix& x, const std::vector<int>& predicted,
                                 std::size_t& latent_dim) {
  ad::Tape tape(false);
  auto xt = tape.constant({x.rows, x.cols}, std::vector<Scalar>(x.data.begin(), x.data.end()));
  auto q = b.vae ? b.vae->encode(tape, xt) : b.m2->encode(tape, xt, predicted);
  latent_dim = q.mean.dim(1);
  auto v = q.mean.to_vector();
  return {v.begin(), v.end()};
}

int cmd_latents(const std::string& ckpt_path, const std::string& split, const DataFlags& flags, std::ostream& out,
                std::ostream& err) {
  auto ckpt = checkpoint_at(ckpt_path);
  auto cfg = checkpoint_config(ckpt, flags);
  auto data = load_dataset(cfg);
  auto b = restore_model(ckpt, cfg, data);
  const auto dir = make_run_dir(output_root(), "latents", cfg.seed);
  write_manifest(dir, "latents", cfg, data, {"latents.csv", "latents.svg"});

  auto points_for = [&](const LabeledSet& set, bool emphasized, bool to_csv, std::ostream* csv) {
    std::vector<LatentPoint> pts;
    if (set.size() == 0) return pts;
    Rng rng = evaluation_rng(cfg);
    const auto pred = argmax_rows(b.model->predict_proba(set.x.data, set.size(), cfg.eval_num_mc, rng),
                                  data.num_classes);
    std::size_t C = 0;
    const auto mu = latent_means(b, set.x, pred, C);
    for (std::size_t i = 0; i < set.size(); ++i) {
      LatentPoint p{mu[i * C], C > 1 ? mu[i * C + 1] : 0.0, set.y[i], pred[i], emphasized};
      if (to_csv) *csv << std::setprecision(10) << p.x << ',' << p.y << ',' << p.label << ',' << p.predicted << '\n';
      pts.push_back(p);
    }
    if (C != 2) err << "warning: latent dimension is " << C << "; plotting the first two coordinates\n";
    return pts;
  };

  std::ostringstream csv;
  csv << "mu1,mu2,label,predicted\n";
  const auto set = split_of(data, split);
  auto pts = points_for(set, split == "labeled", true, &csv);
  if (split != "labeled") {
    auto lab = points_for(data.labeled, true, false, nullptr);
    pts.insert(pts.end(), lab.begin(), lab.end());
  }
  write_text(dir / "latents.csv", csv.str());
  write_text(dir / "latents.svg", latents_svg(pts));
  out << "rows " << set.size() << "\nrun_dir " << dir.string() << "\n";
  return kExitOk;
}

// ---- sample ----------------------------------------------------------------

int cmd_sample(const std::string& ckpt_path, int target, std::size_t count, double epsilon, std::size_t max_draws,
               std::uint64_t sample_seed, const DataFlags& flags, std::ostream& out) {
  auto ckpt = checkpoint_at(ckpt_path);
  auto cfg = checkpoint_config(ckpt, flags);
  if (cfg.model == ModelKind::m2) throw UsageError("sample needs a model with a latent predictor (not m2)");
  auto data = load_dataset(cfg);
  auto b = restore_model(ckpt, cfg, data);
  if (target < 0 || static_cast<std::size_t>(target) >= data.num_classes)
    throw UsageError("--class must lie in [0, " + std::to_string(data.num_classes) + ")");
  const auto dir = make_run_dir(output_root(), "sample", cfg.seed);
  write_manifest(dir, "sample", cfg, data, {"samples.pgm", "samples.csv"});

  Rng rng(sample_seed);
  std::vector<std::vector<double>> images;
  std::ostringstream csv;
  csv << "index,draws,confidence\n";
  std::size_t total_draws = 0;
  for (std::size_t i = 0; i < count; ++i) {
    auto s = class_conditional_sample(*b.vae, target, epsilon, max_draws, rng);
    total_draws += s.draws;
    csv << i << ',' << s.draws << ',' << std::setprecision(10) << s.confidence << '\n';
    images.push_back(std::move(s.image));
  }
  const bool image = data.meta.is_image();
  const std::size_t h = image ? data.meta.height : 1, w = image ? data.meta.width : data.dim;
  const std::size_t cols = count == 0 ? 0 : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(count))));
  write_text(dir / "samples.pgm", pgm_grid(images, h, w, cols));
  write_text(dir / "samples.csv", csv.str());
  out << "accepted " << count << "\n";
  if (total_draws > 0)
    out << "acceptance_rate " << static_cast<double>(count) / static_cast<double>(total_draws) << "\n";
  out << "run_dir " << dir.string() << "\n";
  return kExitOk;
}

// ---- bench -----------------------------------------------------------------

int cmd_bench(const std::vector<std::string>& configs, std::size_t steps, std::size_t warmup,
              const std::string& classes, const DataFlags& flags, std::ostream& out) {
  struct Row {
    std::string config, kind;
    std::size_t classes;
    StepTiming t;
  };
  std::vector<Row> rows;
  fs::path dir;
  const auto class_counts = classes.empty() ? std::vector<double>{} : parse_doubles(classes, "--m2-classes");
  for (const auto& path : configs) {
    auto cfg = config_for(path, flags);
    auto data = load_dataset(cfg);
    if (dir.empty()) {
      dir = make_run_dir(output_root(), "bench", cfg.seed);
      write_manifest(dir, "bench", cfg, data, {"bench.csv"});
    }
    if (cfg.model == ModelKind::m2 && !class_counts.empty()) {
      for (double l : class_counts) {
        const auto L = static_cast<std::size_t>(l);
        auto tuned = cfg;
        tuned.num_labeled = std::max(cfg.num_labeled, L);
        auto pool = make_gaussian_blobs(cfg.data_n, data.dim, L, 0.5, cfg.effective_split_seed());
        auto blobs = ssl_split(pool, L,
                               {tuned.num_labeled, cfg.valid_frac, cfg.test_frac, true, cfg.effective_split_seed()});
        rows.push_back({path, to_string(cfg.model), L, benchmark_step_time({tuned}, blobs, steps, warmup)[0]});
      }
    } else {
      rows.push_back({path, to_string(cfg.model), data.num_classes, benchmark_step_time({cfg}, data, steps, warmup)[0]});
    }
  }
  double pc_ms = 0;
  for (const auto& r : rows)
    if (r.kind == "pc") {
      pc_ms = r.t.mean_ms;
      break;
    }
  std::ostringstream csv;
  csv << "config,kind,classes,mean_ms,median_ms,ratio_to_pc\n";
  out << std::left << std::setw(14) << "kind" << std::setw(9) << "classes" << std::right << std::setw(12)
      << "ms/step" << std::setw(12) << "median" << std::setw(13) << "ratio_to_pc" << "\n";
  for (const auto& r : rows) {
    const std::string ratio = pc_ms > 0 ? [&] {
      std::ostringstream os;
      os << std::fixed << std::setprecision(3) << r.t.mean_ms / pc_ms;
      return os.str();
    }()
                                        : "-";
    csv << r.config << ',' << r.kind << ',' << r.classes << ',' << r.t.mean_ms << ',' << r.t.median_ms << ','
        << ratio << '\n';
    out << std::left << std::setw(14) << r.kind << std::setw(9) << r.classes << std::right << std::fixed
        << std::setprecision(3) << std::setw(12) << r.t.mean_ms << std::setw(12) << r.t.median_ms << std::setw(13)
        << ratio << "\n";
  }
  write_text(dir / "bench.csv", csv.str());
  return kExitOk;
}

// ---- sweep -----------------------------------------------------------------

int cmd_sweep(const std::string& config_path, const std::string& lambdas, const std::string& gammas, bool tie,
              const DataFlags& flags, std::ostream& out) {
  auto base = config_for(config_path, flags);
  if (base.model != ModelKind::pc && base.model != ModelKind::cpc)
    throw UsageError("sweep needs a pc or cpc config");
  auto data = load_dataset(base);
  const auto dir = make_run_dir(output_root(), "sweep", base.seed);
  write_manifest(dir, "sweep", base, data, {"sweep.csv"});
  const auto ls = parse_doubles(lambdas, "--lambdas");
  const auto gs = gammas.empty() ? std::vector<double>{base.mult.gamma} : parse_doubles(gammas, "--gammas");

  std::ostringstream csv;
  csv << "lambda,gamma,labeled_prediction_loss,valid_accuracy,test_accuracy\n";
  out << std::setw(10) << "lambda" << std::setw(10) << "gamma" << std::setw(14) << "P" << std::setw(10) << "valid"
      << std::setw(10) << "test" << "\n";
  std::vector<double> xs, ps;
  for (double l : ls)
    for (double g : gs) {
      auto cfg = base;
      cfg.mult.lambda = l;
      cfg.mult.gamma = g;
      if (tie) {
        cfg.mult.gamma = 4.25 * l;
        cfg.mult.agg_weight = 0.1 * l;
        cfg.mult.entropy_weight = 0.5 * l;
      }
      cfg.validate();
      auto r = Trainer(cfg, data).run(dir);
      xs.push_back(l);
      ps.push_back(r.final_labeled_prediction_loss);
      csv << l << ',' << cfg.mult.gamma << ',' << std::setprecision(10) << r.final_labeled_prediction_loss << ','
          << r.best_valid_accuracy << ',' << r.test_accuracy << '\n';
      out << std::setw(10) << l << std::setw(10) << cfg.mult.gamma << std::setw(14) << std::setprecision(6)
          << r.final_labeled_prediction_loss << std::setw(10) << format_accuracy(r.best_valid_accuracy)
          << std::setw(10) << format_accuracy(r.test_accuracy) << "\n";
    }
  if (xs.size() >= 2 && gs.size() == 1) out << "spearman(lambda, P) " << spearman(xs, ps) << "\n";
  write_text(dir / "sweep.csv", csv.str());
  out << "run_dir " << dir.string() << "\n";
  return kExitOk;
}

}  // namespace

// ---- public helpers ----------------------------------------------------------

fs::path output_root() {
  const char* env = std::getenv("CPCVAE_OUT");
  return env && *env ? fs::path(env) : fs::path("runs");
}

fs::path make_run_dir(const fs::path& root, const std::string& command, std::uint64_t seed) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  localtime_r(&now, &tm);
  std::ostringstream base;
  base << std::put_time(&tm, "%Y%m%d-%H%M%S") << '-' << command << "-seed" << seed;
  fs::create_directories(root);
  for (int n = 0;; ++n) {
    auto dir = root / (n == 0 ? base.str() : base.str() + "-" + std::to_string(n));
    if (fs::create_directory(dir)) return dir;
  }
}

GroupSummary summarize_group(std::span<const double> accuracies) {
  return {mean(accuracies), sample_std(accuracies)};
}

std::string format_accuracy(double a) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << a;
  return os.str();
}

std::string pgm_grid(const std::vector<std::vector<double>>& images, std::size_t height, std::size_t width,
                     std::size_t cols) {
  const std::size_t n = images.size();
  const std::size_t c = n == 0 ? 0 : std::max<std::size_t>(1, std::min(cols, n));
  const std::size_t r = c == 0 ? 0 : (n + c - 1) / c;
  const std::size_t W = c * width, H = r * height;
  std::string px(W * H, '\0');
  for (std::size_t k = 0; k < n; ++k) {
    if (images[k].size() != height * width) throw DimensionError("pgm_grid: image size mismatch");
    const std::size_t r0 = (k / c) * height, c0 = (k % c) * width;
    for (std::size_t i = 0; i < height; ++i)
      for (std::size_t j = 0; j < width; ++j) {
        const double v = std::clamp((images[k][i * width + j] + 1.0) / 2.0, 0.0, 1.0);
        px[(r0 + i) * W + c0 + j] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
      }
  }
  return "P5\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n" + px;
}

std::string latents_svg(const std::vector<LatentPoint>& points) {
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  constexpr double kSize = 480, kMargin = 20;
  double x0 = -1, x1 = 1, y0 = -1, y1 = 1;
  if (!points.empty()) {
    x0 = x1 = points[0].x;
    y0 = y1 = points[0].y;
    for (const auto& p : points) {
      x0 = std::min(x0, p.x), x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y), y1 = std::max(y1, p.y);
    }
  }
  const double sx = x1 > x0 ? (kSize - 2 * kMargin) / (x1 - x0) : 1.0;
  const double sy = y1 > y0 ? (kSize - 2 * kMargin) / (y1 - y0) : 1.0;
  std::ostringstream os;
  os << std::setprecision(6);
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize << "\" height=\"" << kSize
     << "\" viewBox=\"0 0 " << kSize << ' ' << kSize << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  // Emphasized points last so they sit on top.
  for (int pass = 0; pass < 2; ++pass)
    for (const auto& p : points) {
      if (p.emphasized != (pass == 1)) continue;
      const double cx = kMargin + (p.x - x0) * sx, cy = kSize - kMargin - (p.y - y0) * sy;
      const char* fill = palette[static_cast<std::size_t>(std::max(p.label, 0)) % 10];
      os << "<circle cx=\"" << cx << "\" cy=\"" << cy << "\" r=\"" << (p.emphasized ? 6 : 2) << "\" fill=\"" << fill
         << '"';
      if (p.emphasized) os << " stroke=\"black\" stroke-width=\"1.5\"";
      os << "/>\n";
    }
  os << "</svg>\n";
  return os.str();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Semi-supervised VAE family trainer (VAE, M2, PC, CPC)", "cpcvae"};
  app.require_subcommand(1);

  DataFlags train_flags, eval_flags, latent_flags, sample_flags, bench_flags, sweep_flags;
  std::string config_path, split = "test", ckpt, classes, lambdas = "1,5,25,125", gammas;
  std::vector<std::string> ckpts, bench_configs;
  int target = 0;
  std::size_t count = 16, max_draws = 100000, steps = 50, warmup = 5;
  double epsilon = 0.05;
  std::uint64_t sample_seed = 0;
  bool tie = false;

  auto* train = app.add_subcommand("train", "train one model and write its run directory");
  train->add_option("--config", config_path, "config file")->required();
  train_flags.attach(*train);

  auto* eval = app.add_subcommand("eval", "accuracy of one checkpoint, or mean and std of a group");
  eval->add_option("--checkpoint", ckpts, "checkpoint file(s)")->required();
  eval->add_option("--split", split, "test, valid, labeled or unlabeled");
  eval_flags.attach(*eval);

  auto* latents = app.add_subcommand("latents", "CSV and SVG scatter of posterior means");
  latents->add_option("--checkpoint", ckpt, "checkpoint file")->required();
  latents->add_option("--split", split, "test, valid, labeled or unlabeled");
  latent_flags.attach(*latents);

  auto* sample = app.add_subcommand("sample", "class-conditional samples by latent rejection");
  sample->add_option("--checkpoint", ckpt, "checkpoint file")->required();
  sample->add_option("--class", target, "target class")->required();
  sample->add_option("--count", count, "accepted samples to draw");
  sample->add_option("--epsilon", epsilon, "accept when p(class | z) > 1 - epsilon");
  sample->add_option("--max-draws", max_draws, "draw budget per accepted sample");
  sample->add_option("--sample-seed", sample_seed, "seed of the latent draws");
  sample_flags.attach(*sample);

  auto* bench = app.add_subcommand("bench", "ms per training step for each config");
  bench->add_option("--config", bench_configs, "config file(s)")->required();
  bench->add_option("--steps", steps, "timed steps per config (>= 10)");
  bench->add_option("--warmup", warmup, "untimed steps before timing");
  bench->add_option("--m2-classes", classes, "comma list of class counts for m2 configs, e.g. 2,5,10");
  bench_flags.attach(*bench);

  auto* sweep = app.add_subcommand("sweep", "grid over lambda (and gamma), reporting achieved P");
  sweep->add_option("--config", config_path, "pc or cpc config file")->required();
  sweep->add_option("--lambdas", lambdas, "comma list of lambda values");
  sweep->add_option("--gammas", gammas, "comma list of gamma values (default: config value)");
  sweep->add_flag("--tie-multipliers", tie, "set gamma, agg and entropy weights proportional to lambda");
  sweep_flags.attach(*sweep);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (train->parsed()) return cmd_train(config_path, train_flags, out);
    if (eval->parsed()) return cmd_eval(ckpts, split, eval_flags, out);
    if (latents->parsed()) return cmd_latents(ckpt, split, latent_flags, out, err);
    if (sample->parsed())
      return cmd_sample(ckpt, target, count, epsilon, max_draws, sample_seed, sample_flags, out);
    if (bench->parsed()) return cmd_bench(bench_configs, steps, warmup, classes, bench_flags, out);
    if (sweep->parsed()) return cmd_sweep(config_path, lambdas, gammas, tie, sweep_flags, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace cpcvae::cli
