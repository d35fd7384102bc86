#pragma once

// Dataset synthesis, semi-supervised splitting, preprocessing and caching.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace cpcvae {

/// Row-major dense matrix of features.
struct Matrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  /// Rows at the given indices, in order.
  Matrix gather(std::span<const std::size_t> idx) const;
};

struct LabeledSet {
  Matrix x;
  std::vector<int> y;

  std::size_t size() const { return x.rows; }
  LabeledSet gather(std::span<const std::size_t> idx) const;
};

struct ImageMeta {
  std::size_t height = 0, width = 0, channels = 1;
  /// Raw intensity range mapped onto [-1, 1].
  double low = 0.0, high = 255.0;

  bool is_image() const { return height > 0 && width > 0; }
};

struct SslDataset {
  LabeledSet labeled;
  Matrix unlabeled;
  std::vector<int> unlabeled_truth;  // held out from training, kept for diagnostics
  LabeledSet valid;
  LabeledSet test;
  std::size_t num_classes = 0;
  std::size_t dim = 0;
  ImageMeta meta;

  /// Indices into the source pool for each split.
  std::vector<std::size_t> labeled_idx, unlabeled_idx, valid_idx, test_idx;
};

/// Two interleaving arcs: class 0 on (cos t, sin t), class 1 on
/// (1 - cos t, 1 - sin t - 0.5), t ~ U[0, pi], plus N(0, noise_std^2) noise.
/// The first n/2 rows are class 0. Throws DomainError for odd n.
LabeledSet make_half_moons(std::size_t n, double noise_std, std::uint64_t seed);

/// n points in `dim` dimensions, class k centered at a random corner of
/// [-1, 1]^dim and perturbed by N(0, spread^2). Rows cycle through
/// the classes. Used to vary the class count in benchmarks.
LabeledSet make_gaussian_blobs(std::size_t n, std::size_t dim, std::size_t num_classes, double spread,
                               std::uint64_t seed);

struct SplitConfig {
  std::size_t num_labeled = 6;
  double valid_frac = 0.0;
  double test_frac = 0.0;
  bool balanced = true;
  std::uint64_t seed = 0;
};

/// Shuffles the pool under `seed`, carves test then validation, then picks
/// the labeled subset (num_labeled / L per class, remainder to the lowest
/// classes) and leaves the rest unlabeled.
SslDataset ssl_split(const LabeledSet& pool, std::size_t num_classes, const SplitConfig& cfg);

/// Linear rescale of raw intensities to [-1, 1]. With max_shift_px > 0 each
/// image is translated by an integer offset drawn from
/// derived_rng(seed, index), and vacated pixels are set to -1.
Matrix preprocess(const Matrix& raw, const ImageMeta& meta, int max_shift_px = 0, std::uint64_t seed = 0);

/// Shifts one rescaled image by (dy, dx) pixels with -1 fill.
void translate_image(std::span<const double> in, std::span<double> out, std::size_t height, std::size_t width,
                     int dy, int dx);

/// Empirical class frequencies.
std::vector<double> label_distribution(std::span<const int> labels, std::size_t num_classes);

/// FNV-1a 64-bit hash over raw bytes.
std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t h = 14695981039346656037ull);
/// Order-sensitive fingerprint of every split.
std::uint64_t dataset_fingerprint(const SslDataset& d);

/// Writes `path` as little-endian float64 rows plus `path` + ".meta" with
/// shape, dtype and checksum.
void save_matrix_cache(const std::filesystem::path& path, const Matrix& m);
/// Reads a cache written by save_matrix_cache; FormatError on any mismatch.
Matrix load_matrix_cache(const std::filesystem::path& path);

}  // namespace cpcvae
