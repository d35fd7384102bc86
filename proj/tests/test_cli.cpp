#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <stack>

#include "cpcvae/checkpoint.hpp"
#include "cpcvae/cli.hpp"
#include "cpcvae/trainer.hpp"
#include "json.hpp"

using namespace cpcvae;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string read(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path run_dir_of(const std::string& out) {
  std::smatch m;
  const std::regex re("run_dir (.+)\n");
  if (!std::regex_search(out, m, re)) return {};
  return m[1].str();
}

// Minimal well-formedness check: balanced, properly nested tags.
bool well_formed_xml(const std::string& s) {
  std::stack<std::string> open;
  const std::regex tag("<(/?)([A-Za-z?][^\\s/>]*)[^>]*?(/?)>");
  bool root_seen = false;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), tag); it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    const std::string name = m[2];
    if (name.starts_with("?")) continue;
    if (m[1].length()) {
      if (open.empty() || open.top() != name) return false;
      open.pop();
    } else if (!m[3].length()) {
      if (open.empty() && root_seen) return false;
      root_seen = true;
      open.push(name);
    }
  }
  return root_seen && open.empty();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() / "cpcvae_test_cli" /
            ::testing::UnitTest::GetInstance()->current_test_info()->name();
    fs::remove_all(root_);
    fs::create_directories(root_);
    setenv("CPCVAE_OUT", (root_ / "runs").c_str(), 1);
    config_ = root_ / "quick.cfg";
    std::ofstream(config_) << "model.kind = cpc\n"
                              "model.encoder_hidden = 16\n"
                              "model.decoder_hidden = 16\n"
                              "model.predictor_hidden = 16\n"
                              "train.steps = 40\n"
                              "train.batch_size = 16\n"
                              "train.eval_num_mc = 2\n"
                              "data.n = 300\n";
  }
  void TearDown() override { unsetenv("CPCVAE_OUT"); }

  fs::path train(std::vector<std::string> extra = {}) {
    std::vector<std::string> args{"train", "--config", config_.string()};
    args.insert(args.end(), extra.begin(), extra.end());
    const auto r = run(args);
    EXPECT_EQ(r.code, 0) << r.err;
    return run_dir_of(r.out);
  }

  fs::path root_, config_;
};

}  // namespace

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}).code, cli::kExitUsage);
  EXPECT_EQ(run({"fly"}).code, cli::kExitUsage);
  const auto missing = run({"train", "--config", (root_ / "nope.cfg").string()});
  EXPECT_EQ(missing.code, cli::kExitUsage);
  EXPECT_NE(missing.err.find("nope.cfg"), std::string::npos);
  const auto bad_key = run({"train", "--config", config_.string(), "--set", "objective.lamda=3"});
  EXPECT_EQ(bad_key.code, cli::kExitUsage);
  EXPECT_NE(bad_key.err.find("objective.lamda"), std::string::npos);
  EXPECT_EQ(run({"eval", "--checkpoint", (root_ / "none.json").string()}).code, cli::kExitUsage);
  EXPECT_EQ(run({"--help"}).code, cli::kExitOk);
}

TEST_F(CliTest, TrainWritesArtifactsAndManifest) {
  const auto dir = train({"--set", "seed=1"});
  ASSERT_FALSE(dir.empty());
  EXPECT_TRUE(dir.string().starts_with((root_ / "runs").string()));
  EXPECT_NE(dir.filename().string().find("train-seed1"), std::string::npos);
  for (const char* f : {"manifest.json", "config.cfg", "checkpoint.json", "steps.csv", "epochs.csv", "summary.json"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  const auto m = nlohmann::json::parse(read(dir / "manifest.json"));
  EXPECT_EQ(m["seed"], 1);
  EXPECT_EQ(m["config"]["train.seed"], "1");
  EXPECT_EQ(m["dataset_fingerprint"].get<std::string>().size(), 16u);
  EXPECT_FALSE(m["code_hash"].get<std::string>().empty());
  // Same seed, same numbers (ms column aside).
  const auto again = train({"--set", "seed=1"});
  EXPECT_NE(again, dir);
  EXPECT_EQ(read(dir / "summary.json"), read(again / "summary.json"));
  EXPECT_EQ(read(dir / "checkpoint.json"), read(again / "checkpoint.json"));
}

TEST_F(CliTest, ZeroMultipliersReproducePlainVae) {
  const auto plain = train({"--set", "model.kind=vae"});
  const auto zeroed = train({"--set", "lambda=0", "gamma=0", "agg_weight=0", "entropy_weight=0"});
  auto elbo_column = [&](const fs::path& dir) {
    std::ifstream in(dir / "steps.csv");
    std::string line;
    std::getline(in, line);
    std::vector<std::string> col;
    while (std::getline(in, line)) {
      std::stringstream ss(line);
      std::string cell;
      for (int k = 0; k < 4; ++k) std::getline(ss, cell, ',');
      col.push_back(cell);
    }
    return col;
  };
  const auto a = elbo_column(plain), b = elbo_column(zeroed);
  ASSERT_EQ(a.size(), 40u);
  EXPECT_EQ(a, b);
}

TEST_F(CliTest, EvalMatchesTrainingAndSummarizesGroups) {
  const auto d1 = train(), d2 = train({"--seed", "1"});
  const auto summary = nlohmann::json::parse(read(d1 / "summary.json"));
  const auto r = run({"eval", "--checkpoint", (d1 / "checkpoint.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, cli::format_accuracy(summary["test_accuracy"].get<double>()) + "\n");
  const auto group = run({"eval", "--checkpoint", (d1 / "checkpoint.json").string(), (d2 / "checkpoint.json").string()});
  ASSERT_EQ(group.code, 0) << group.err;
  EXPECT_NE(group.out.find("mean "), std::string::npos);
  EXPECT_NE(group.out.find("sample std"), std::string::npos);

  const std::vector<double> accs{0.9, 1.0, 0.8};
  const auto g = cli::summarize_group(accs);
  EXPECT_NEAR(g.mean, 0.9, 1e-12);
  EXPECT_NEAR(g.std, 0.1, 1e-12);
  EXPECT_EQ(cli::format_accuracy(1.0), "1.0000");
}

TEST_F(CliTest, PerfectToyScoresOne) {
  // Two constant 2x2 images per class with small jitter: trivially separable.
  auto write_idx = [&](const fs::path& p, std::vector<std::uint32_t> dims, const std::vector<std::uint8_t>& data) {
    std::vector<std::uint8_t> b{0, 0, 8, static_cast<std::uint8_t>(dims.size())};
    for (auto d : dims)
      for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(d >> s));
    b.insert(b.end(), data.begin(), data.end());
    std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  };
  const std::uint32_t n = 200;
  std::vector<std::uint8_t> images, labels;
  for (std::uint32_t i = 0; i < n; ++i) {
    labels.push_back(static_cast<std::uint8_t>(i % 2));
    for (int k = 0; k < 4; ++k) images.push_back(static_cast<std::uint8_t>((i % 2 ? 220 : 30) + (i * 7 + k) % 11));
  }
  write_idx(root_ / "img.idx", {n, 2, 2}, images);
  write_idx(root_ / "lab.idx", {n}, labels);
  const auto dir = train({"--dataset", "idx", "--num-labeled", "20", "--set",
                          "data.idx_images=" + (root_ / "img.idx").string(),
                          "data.idx_labels=" + (root_ / "lab.idx").string(), "model.kind=pc", "steps=1500",
                          "early_stopping=false", "test_frac=0.25"});
  const auto r = run({"eval", "--checkpoint", (dir / "checkpoint.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "1.0000\n");
}

TEST_F(CliTest, LatentsCsvAndSvg) {
  const auto dir = train();
  const auto r = run({"latents", "--checkpoint", (dir / "checkpoint.json").string(), "--split", "valid"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto out = run_dir_of(r.out);
  std::ifstream csv(out / "latents.csv");
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "mu1,mu2,label,predicted");
  std::size_t rows = 0;
  while (std::getline(csv, line)) ++rows;
  const auto data = load_dataset(config_from_checkpoint(load_checkpoint(dir / "checkpoint.json")));
  EXPECT_EQ(rows, data.valid.size());
  EXPECT_TRUE(well_formed_xml(read(out / "latents.svg")));
  EXPECT_FALSE(well_formed_xml("<svg><circle></svg>"));
}

TEST_F(CliTest, LatentsOfCopyingEncoderEqualInputs) {
  const auto dir = train({"--set", "model.encoder_hidden=2", "model.activation=identity"});
  auto ckpt = load_checkpoint(dir / "checkpoint.json");
  for (auto& t : ckpt.parameters) {
    if (t.name == "enc.w0") t.values = {1, 0, 0, 1};
    if (t.name == "enc.b0") t.values = {0, 0};
    if (t.name == "enc.w1") t.values = {1, 0, 0, 0, 0, 1, 0, 0};
    if (t.name == "enc.b1") t.values = {0, 0, -30, -30};
  }
  save_checkpoint(root_ / "copy.json", ckpt);
  const auto r = run({"latents", "--checkpoint", (root_ / "copy.json").string(), "--split", "test"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto data = load_dataset(config_from_checkpoint(ckpt));
  std::ifstream csv(run_dir_of(r.out) / "latents.csv");
  std::string line;
  std::getline(csv, line);
  for (std::size_t i = 0; std::getline(csv, line); ++i) {
    double a = 0, b = 0;
    ASSERT_EQ(std::sscanf(line.c_str(), "%lf,%lf", &a, &b), 2);
    EXPECT_NEAR(a, data.test.x(i, 0), 1e-8);
    EXPECT_NEAR(b, data.test.x(i, 1), 1e-8);
  }
}

TEST_F(CliTest, SamplesAreConfidentDeterministicAndMayBeEmpty) {
  const auto dir = train();
  auto ckpt = load_checkpoint(dir / "checkpoint.json");
  // Force a confident predictor so rejection sampling accepts quickly.
  for (auto& t : ckpt.parameters)
    if (t.name.starts_with("pred.")) {
      std::fill(t.values.begin(), t.values.end(), 0.0);
      if (t.name == "pred.b1") t.values = {-8, 8};
    }
  save_checkpoint(root_ / "confident.json", ckpt);
  const std::vector<std::string> args{"sample", "--checkpoint", (root_ / "confident.json").string(), "--class", "1",
                                      "--count", "5", "--sample-seed", "3"};
  const auto a = run(args), b = run(args);
  ASSERT_EQ(a.code, 0) << a.err;
  const auto da = run_dir_of(a.out), db = run_dir_of(b.out);
  EXPECT_EQ(read(da / "samples.pgm"), read(db / "samples.pgm"));
  EXPECT_TRUE(read(da / "samples.pgm").starts_with("P5\n6 2\n255\n"));
  std::ifstream csv(da / "samples.csv");
  std::string line;
  std::getline(csv, line);
  std::size_t n = 0;
  for (; std::getline(csv, line); ++n) EXPECT_GT(std::stod(line.substr(line.rfind(',') + 1)), 0.95);
  EXPECT_EQ(n, 5u);

  const auto empty = run({"sample", "--checkpoint", (root_ / "confident.json").string(), "--class", "1", "--count", "0"});
  ASSERT_EQ(empty.code, 0) << empty.err;
  EXPECT_EQ(read(run_dir_of(empty.out) / "samples.pgm"), "P5\n0 0\n255\n");

  const auto impossible =
      run({"sample", "--checkpoint", (root_ / "confident.json").string(), "--class", "0", "--max-draws", "20"});
  EXPECT_EQ(impossible.code, cli::kExitFailure);
  EXPECT_NE(impossible.err.find("acceptance rate"), std::string::npos);
}

TEST_F(CliTest, BenchTableHasOneRowPerConfig) {
  auto pc = root_ / "pc.cfg";
  std::ofstream(pc) << read(config_) << "model.kind = pc\n";
  const auto r = run({"bench", "--config", pc.string(), config_.string(), "--steps", "10", "--warmup", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("ratio_to_pc"), std::string::npos);
  std::stringstream ss(r.out);
  std::string line;
  std::getline(ss, line);
  std::size_t rows = 0;
  while (std::getline(ss, line)) rows += !line.empty();
  EXPECT_EQ(rows, 2u);
  EXPECT_NE(r.out.find("1.000"), std::string::npos);
}

TEST(PgmGrid, LayoutAndScaling) {
  const std::vector<std::vector<double>> imgs{{-1, 1}, {0, 1}, {1, -1}};
  const auto pgm = cli::pgm_grid(imgs, 1, 2, 2);
  const std::string header = "P5\n4 2\n255\n";
  ASSERT_EQ(pgm.size(), header.size() + 8);
  EXPECT_EQ(pgm.substr(0, header.size()), header);
  const auto px = reinterpret_cast<const unsigned char*>(pgm.data() + header.size());
  EXPECT_EQ(px[0], 0);
  EXPECT_EQ(px[1], 255);
  EXPECT_EQ(px[2], 128);
  EXPECT_EQ(px[4], 255);
  EXPECT_EQ(px[6], 0);
}
