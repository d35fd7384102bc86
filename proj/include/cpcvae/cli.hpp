#pragma once

// Command-line front end. Subcommands: train, eval, latents, sample, bench,
// sweep. Exit codes: 0 ok, 1 runtime failure, 2 usage or config error.
// Every command writes into one fresh run directory under $CPCVAE_OUT
// (default ./runs), named <timestamp>-<command>-seed<seed>.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace cpcvae::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs one command; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::filesystem::path output_root();
/// Creates a new directory under `root`; a numeric suffix keeps names unique.
std::filesystem::path make_run_dir(const std::filesystem::path& root, const std::string& command,
                                   std::uint64_t seed);

struct GroupSummary {
  double mean = 0;
  double std = 0;  // sample standard deviation (n - 1)
};
GroupSummary summarize_group(std::span<const double> accuracies);
/// Four-decimal rendering used for accuracies, e.g. "1.0000".
std::string format_accuracy(double a);

/// Binary 8-bit PGM of images laid out `cols` per row. Pixel values in
/// [-1, 1] map to 0..255. An empty list gives a 0x0 image.
std::string pgm_grid(const std::vector<std::vector<double>>& images, std::size_t height, std::size_t width,
                     std::size_t cols);

struct LatentPoint {
  double x = 0, y = 0;
  int label = 0;
  int predicted = 0;
  bool emphasized = false;
};
/// SVG scatter colored by label; emphasized points are drawn larger with an outline.
std::string latents_svg(const std::vector<LatentPoint>& points);

}  // namespace cpcvae::cli
