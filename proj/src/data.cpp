#include "cpcvae/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "cpcvae/errors.hpp"
#include "cpcvae/rng.hpp"

namespace cpcvae {

Matrix Matrix::gather(std::span<const std::size_t> idx) const {
  Matrix out(idx.size(), cols);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= rows) throw DimensionError("row index " + std::to_string(idx[i]) + " out of range");
    std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(idx[i] * cols), cols, out.data.begin() + static_cast<std::ptrdiff_t>(i * cols));
  }
  return out;
}

LabeledSet LabeledSet::gather(std::span<const std::size_t> idx) const {
  LabeledSet out{x.gather(idx), {}};
  out.y.reserve(idx.size());
  for (auto i : idx) out.y.push_back(y[i]);
  return out;
}

LabeledSet make_half_moons(std::size_t n, double noise_std, std::uint64_t seed) {
  if (n % 2 != 0) throw DomainError("make_half_moons needs an even count, got " + std::to_string(n));
  Rng rng(seed);
  LabeledSet out{Matrix(n, 2), std::vector<int>(n)};
  const std::size_t half = n / 2;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = std::numbers::pi * rng.uniform();
    const bool upper = i < half;
    out.x(i, 0) = upper ? std::cos(t) : 1.0 - std::cos(t);
    out.x(i, 1) = upper ? std::sin(t) : 1.0 - std::sin(t) - 0.5;
    out.y[i] = upper ? 0 : 1;
  }
  if (noise_std > 0)
    for (auto& v : out.x.data) v += noise_std * rng.normal();
  return out;
}

LabeledSet make_gaussian_blobs(std::size_t n, std::size_t dim, std::size_t num_classes, double spread,
                               std::uint64_t seed) {
  if (num_classes == 0 || dim == 0) throw DomainError("make_gaussian_blobs needs dim > 0 and num_classes > 0");
  Rng rng(seed);
  std::vector<double> centers(num_classes * dim);
  for (auto& c : centers) c = rng.uniform() < 0.5 ? -1.0 : 1.0;
  LabeledSet out{Matrix(n, dim), std::vector<int>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = i % num_classes;
    out.y[i] = static_cast<int>(k);
    for (std::size_t j = 0; j < dim; ++j) out.x(i, j) = centers[k * dim + j] + spread * rng.normal();
  }
  return out;
}

SslDataset ssl_split(const LabeledSet& pool, std::size_t num_classes, const SplitConfig& cfg) {
  const std::size_t n = pool.size();
  if (pool.y.size() != n) throw DimensionError("label count differs from row count");
  if (!(cfg.valid_frac >= 0 && cfg.test_frac >= 0 && cfg.valid_frac + cfg.test_frac < 1))
    throw ConfigError("valid_frac and test_frac must be nonnegative and sum below 1");
  for (int y : pool.y)
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
      throw DomainError("label " + std::to_string(y) + " outside [0, " + std::to_string(num_classes) + ")");
  if (cfg.balanced && cfg.num_labeled < num_classes)
    throw ConfigError("balanced split needs num_labeled >= number of classes");

  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(cfg.seed);
  std::shuffle(perm.begin(), perm.end(), rng.engine());

  const auto n_test = static_cast<std::size_t>(std::llround(cfg.test_frac * static_cast<double>(n)));
  const auto n_valid = static_cast<std::size_t>(std::llround(cfg.valid_frac * static_cast<double>(n)));
  SslDataset d;
  d.num_classes = num_classes;
  d.dim = pool.x.cols;
  d.test_idx.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test));
  d.valid_idx.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_test),
                     perm.begin() + static_cast<std::ptrdiff_t>(n_test + n_valid));
  std::vector<std::size_t> train(perm.begin() + static_cast<std::ptrdiff_t>(n_test + n_valid), perm.end());
  if (cfg.num_labeled > train.size()) throw ConfigError("num_labeled exceeds the training pool");

  std::vector<bool> take(train.size(), false);
  if (cfg.balanced) {
    std::vector<std::size_t> quota(num_classes, cfg.num_labeled / num_classes);
    for (std::size_t k = 0; k < cfg.num_labeled % num_classes; ++k) ++quota[k];
    for (std::size_t i = 0; i < train.size(); ++i) {
      auto& q = quota[static_cast<std::size_t>(pool.y[train[i]])];
      if (q > 0) {
        take[i] = true;
        --q;
      }
    }
    for (std::size_t k = 0; k < num_classes; ++k)
      if (quota[k] > 0)
        throw ConfigError("class " + std::to_string(k) + " has too few training examples for the labeled quota");
  } else {
    std::fill_n(take.begin(), cfg.num_labeled, true);
  }
  for (std::size_t i = 0; i < train.size(); ++i) (take[i] ? d.labeled_idx : d.unlabeled_idx).push_back(train[i]);

  d.labeled = pool.gather(d.labeled_idx);
  auto unl = pool.gather(d.unlabeled_idx);
  d.unlabeled = std::move(unl.x);
  d.unlabeled_truth = std::move(unl.y);
  d.valid = pool.gather(d.valid_idx);
  d.test = pool.gather(d.test_idx);
  return d;
}

void translate_image(std::span<const double> in, std::span<double> out, std::size_t height, std::size_t width,
                     int dy, int dx) {
  if (in.size() != height * width || out.size() != in.size()) throw DimensionError("translate_image: size mismatch");
  const auto h = static_cast<long>(height), w = static_cast<long>(width);
  for (long i = 0; i < h; ++i)
    for (long j = 0; j < w; ++j) {
      const long si = i - dy, sj = j - dx;
      out[static_cast<std::size_t>(i * w + j)] =
          si >= 0 && si < h && sj >= 0 && sj < w ? in[static_cast<std::size_t>(si * w + sj)] : -1.0;
    }
}

Matrix preprocess(const Matrix& raw, const ImageMeta& meta, int max_shift_px, std::uint64_t seed) {
  if (!(meta.high > meta.low)) throw DomainError("intensity range must satisfy high > low");
  Matrix out(raw.rows, raw.cols);
  const double span = meta.high - meta.low;
  for (std::size_t i = 0; i < raw.data.size(); ++i) out.data[i] = 2.0 * (raw.data[i] - meta.low) / span - 1.0;
  if (max_shift_px <= 0) return out;
  if (!meta.is_image() || meta.height * meta.width * meta.channels != raw.cols)
    throw DimensionError("translation augmentation needs image dimensions matching the feature width");
  const std::size_t plane = meta.height * meta.width;
  std::vector<double> shifted(plane);
  for (std::size_t r = 0; r < out.rows; ++r) {
    Rng rng = derived_rng(seed, r);
    const auto range = static_cast<std::uint64_t>(2 * max_shift_px + 1);
    const int dy = static_cast<int>(rng.below(range)) - max_shift_px;
    const int dx = static_cast<int>(rng.below(range)) - max_shift_px;
    for (std::size_t c = 0; c < meta.channels; ++c) {
      auto img = out.row(r).subspan(c * plane, plane);
      translate_image(img, shifted, meta.height, meta.width, dy, dx);
      std::copy(shifted.begin(), shifted.end(), img.begin());
    }
  }
  return out;
}

std::vector<double> label_distribution(std::span<const int> labels, std::size_t num_classes) {
  if (labels.empty()) throw DomainError("label_distribution of an empty label set");
  std::vector<double> counts(num_classes, 0.0);
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
      throw DomainError("label " + std::to_string(y) + " outside [0, " + std::to_string(num_classes) + ")");
    counts[static_cast<std::size_t>(y)] += 1.0;
  }
  for (auto& c : counts) c /= static_cast<double>(labels.size());
  return counts;
}

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t dataset_fingerprint(const SslDataset& d) {
  std::uint64_t h = fnv1a64(nullptr, 0);
  auto mix_matrix = [&](const Matrix& m) {
    const std::uint64_t dims[] = {m.rows, m.cols};
    h = fnv1a64(dims, sizeof dims, h);
    h = fnv1a64(m.data.data(), m.data.size() * sizeof(double), h);
  };
  auto mix_labels = [&](const std::vector<int>& y) { h = fnv1a64(y.data(), y.size() * sizeof(int), h); };
  mix_matrix(d.labeled.x);
  mix_labels(d.labeled.y);
  mix_matrix(d.unlabeled);
  mix_matrix(d.valid.x);
  mix_labels(d.valid.y);
  mix_matrix(d.test.x);
  mix_labels(d.test.y);
  return h;
}

namespace {

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

std::vector<unsigned char> little_endian_bytes(const std::vector<double>& values) {
  std::vector<unsigned char> bytes(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) bytes[i * 8 + static_cast<std::size_t>(b)] = static_cast<unsigned char>(bits >> (8 * b));
  }
  return bytes;
}

}  // namespace

void save_matrix_cache(const std::filesystem::path& path, const Matrix& m) {
  const auto bytes = little_endian_bytes(m.data);
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  std::ofstream meta(path.string() + ".meta");
  if (!meta) throw std::runtime_error("cannot write " + path.string() + ".meta");
  meta << "shape = " << m.rows << "," << m.cols << "\n"
       << "dtype = float64_le\n"
       << "checksum = fnv1a64:" << hex64(fnv1a64(bytes.data(), bytes.size())) << "\n";
}

Matrix load_matrix_cache(const std::filesystem::path& path) {
  std::ifstream meta(path.string() + ".meta");
  if (!meta) throw FormatError("missing cache sidecar " + path.string() + ".meta");
  std::size_t rows = 0, cols = 0;
  std::string dtype, checksum, line;
  bool have_shape = false;
  while (std::getline(meta, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t\r") + 1);
      return s;
    };
    const auto key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key == "shape") {
      char comma = 0;
      std::istringstream is(value);
      if (!(is >> rows >> comma >> cols) || comma != ',') throw FormatError("bad cache shape '" + value + "'");
      have_shape = true;
    } else if (key == "dtype") {
      dtype = value;
    } else if (key == "checksum") {
      checksum = value;
    }
  }
  if (!have_shape || dtype != "float64_le") throw FormatError("cache sidecar lacks shape or float64_le dtype");

  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("missing cache payload " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t expected = rows * cols * 8;
  if (bytes.size() != expected)
    throw FormatError("cache payload has " + std::to_string(bytes.size()) + " bytes, expected " +
                      std::to_string(expected));
  if (checksum != "fnv1a64:" + hex64(fnv1a64(bytes.data(), bytes.size())))
    throw FormatError("cache checksum mismatch for " + path.string());
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[i * 8 + static_cast<std::size_t>(b)]) << (8 * b);
    m.data[i] = std::bit_cast<double>(bits);
  }
  return m;
}

}  // namespace cpcvae
