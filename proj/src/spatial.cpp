#include "cpcvae/spatial.hpp"

#include <cmath>
#include <sstream>
#include <vector>

#include "cpcvae/errors.hpp"

namespace cpcvae {

void SpatialConfig::validate() const {
  if (!(scale_x > 1 && scale_y > 1)) throw ConfigError("spatial scale ranges must exceed 1");
  if (translate_x < 0 || translate_y < 0 || rotation < 0 || shear < 0)
    throw ConfigError("spatial ranges must be nonnegative");
  if (!(pad_fraction >= 0)) throw ConfigError("spatial pad fraction must be nonnegative");
}

Mat3 identity3() { return {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}}; }

Mat3 multiply(const Mat3& a, const Mat3& b) {
  Mat3 out{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double acc = 0;
      for (int k = 0; k < 3; ++k) acc += a[i][k] * b[k][j];
      out[i][j] = acc;
    }
  return out;
}

Mat3 invert(const Mat3& m) {
  const double c00 = m[1][1] * m[2][2] - m[1][2] * m[2][1];
  const double c01 = m[1][2] * m[2][0] - m[1][0] * m[2][2];
  const double c02 = m[1][0] * m[2][1] - m[1][1] * m[2][0];
  const double det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
  if (det == 0 || !std::isfinite(det)) throw NumericalError("singular 3x3 matrix");
  Mat3 inv;
  inv[0][0] = c00 / det;
  inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
  inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
  inv[1][0] = c01 / det;
  inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
  inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
  inv[2][0] = c02 / det;
  inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
  inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
  return inv;
}

namespace {

struct TransformParams {
  double tx, ty, angle, shear, kx, ky;
  std::array<double, kTransformDims> squashed;
};

TransformParams transform_params(std::span<const double> z_t, const SpatialConfig& cfg) {
  if (z_t.size() != kTransformDims)
    throw DimensionError("transform latent must have 6 entries, got " + std::to_string(z_t.size()));
  TransformParams p{};
  for (std::size_t k = 0; k < kTransformDims; ++k) p.squashed[k] = std::tanh(z_t[k]);
  p.tx = cfg.translate_x * p.squashed[0];
  p.ty = cfg.translate_y * p.squashed[1];
  p.angle = cfg.rotation * p.squashed[2];
  p.shear = cfg.shear * p.squashed[3];
  p.kx = std::pow(cfg.scale_x, p.squashed[4]);
  p.ky = std::pow(cfg.scale_y, p.squashed[5]);
  return p;
}

Mat3 translation(double tx, double ty) { return {{{1, 0, tx}, {0, 1, ty}, {0, 0, 1}}}; }

Mat3 rotation_shear(double angle, double shear) {
  return {{{std::cos(angle), -std::sin(angle + shear), 0},
           {std::sin(angle), std::cos(angle + shear), 0},
           {0, 0, 1}}};
}

Mat3 scaling(double kx, double ky) { return {{{kx, 0, 0}, {0, ky, 0}, {0, 0, 1}}}; }

}  // namespace

Mat3 build_affine_matrix(std::span<const double> z_t, const SpatialConfig& cfg) {
  const auto p = transform_params(z_t, cfg);
  return multiply(multiply(translation(p.tx, p.ty), rotation_shear(p.angle, p.shear)), scaling(p.kx, p.ky));
}

std::array<Mat3, kTransformDims> affine_matrix_jacobian(std::span<const double> z_t,
                                                       const SpatialConfig& cfg) {
  const auto p = transform_params(z_t, cfg);
  const Mat3 T = translation(p.tx, p.ty), R = rotation_shear(p.angle, p.shear), S = scaling(p.kx, p.ky);
  const double ca = std::cos(p.angle), sa = std::sin(p.angle);
  const double cs = std::cos(p.angle + p.shear), ss = std::sin(p.angle + p.shear);
  Mat3 dT_dx{}, dT_dy{};
  dT_dx[0][2] = cfg.translate_x;
  dT_dy[1][2] = cfg.translate_y;
  const Mat3 dR_dangle{{{-sa * cfg.rotation, -cs * cfg.rotation, 0}, {ca * cfg.rotation, -ss * cfg.rotation, 0}, {0, 0, 0}}};
  const Mat3 dR_dshear{{{0, -cs * cfg.shear, 0}, {0, -ss * cfg.shear, 0}, {0, 0, 0}}};
  Mat3 dS_dx{}, dS_dy{};
  dS_dx[0][0] = std::log(cfg.scale_x) * p.kx;
  dS_dy[1][1] = std::log(cfg.scale_y) * p.ky;
  const Mat3 RS = multiply(R, S), TR = multiply(T, R);
  std::array<Mat3, kTransformDims> d = {multiply(dT_dx, RS), multiply(dT_dy, RS),
                                        multiply(multiply(T, dR_dangle), S),
                                        multiply(multiply(T, dR_dshear), S),
                                        multiply(TR, dS_dx), multiply(TR, dS_dy)};
  for (std::size_t k = 0; k < kTransformDims; ++k) {
    const double dsquash = 1.0 - p.squashed[k] * p.squashed[k];
    for (auto& row : d[k])
      for (auto& v : row) v *= dsquash;
  }
  return d;
}

CanvasGeometry CanvasGeometry::for_image(std::size_t height, std::size_t width, const SpatialConfig& cfg) {
  CanvasGeometry g;
  g.height = height;
  g.width = width;
  g.pad_y = static_cast<std::size_t>(std::ceil(cfg.pad_fraction * static_cast<double>(height)));
  g.pad_x = static_cast<std::size_t>(std::ceil(cfg.pad_fraction * static_cast<double>(width)));
  return g;
}

namespace {

struct Frame {
  double cx, cy;    // image centre in pixels
  double sx, sy;    // pixels per normalized unit
  double ox, oy;    // centre on the canvas
};

Frame frame_of(const CanvasGeometry& g) {
  Frame f;
  f.cx = (static_cast<double>(g.width) - 1) / 2;
  f.cy = (static_cast<double>(g.height) - 1) / 2;
  f.sx = g.width > 1 ? f.cx : 1.0;
  f.sy = g.height > 1 ? f.cy : 1.0;
  f.ox = f.cx + static_cast<double>(g.pad_x);
  f.oy = f.cy + static_cast<double>(g.pad_y);
  return f;
}

// Offsets are kept in pixels so an identity matrix reproduces lattice
// coordinates without rounding.
std::array<double, 2> source_in_frame(const Mat3& a, const Frame& f, std::size_t i, std::size_t j) {
  const double u = static_cast<double>(j) - f.cx, v = static_cast<double>(i) - f.cy;
  const double rxy = f.sx / f.sy;
  const double col = a[0][0] * u + a[0][1] * (v * rxy) + a[0][2] * f.sx + f.ox;
  const double row = a[1][0] * (u / rxy) + a[1][1] * v + a[1][2] * f.sy + f.oy;
  return {row, col};
}

// d(row, col)/dA for the affine rows of A.
struct CoordinateBasis {
  double col[3];
  double row[3];
};

CoordinateBasis coordinate_basis(const Frame& f, std::size_t i, std::size_t j) {
  const double u = static_cast<double>(j) - f.cx, v = static_cast<double>(i) - f.cy;
  const double rxy = f.sx / f.sy;
  return {{u, v * rxy, f.sx}, {u / rxy, v, f.sy}};
}

struct Tap {
  std::size_t i00, i01, i10, i11;
  double fx, fy;
  bool free_x, free_y;  // false when the coordinate was clamped
};

Tap locate(std::size_t rows, std::size_t cols, double y, double x, bool clamp) {
  const double ymax = static_cast<double>(rows - 1), xmax = static_cast<double>(cols - 1);
  Tap t{};
  t.free_x = t.free_y = true;
  if (!(y >= 0 && y <= ymax && x >= 0 && x <= xmax)) {
    if (!clamp || !std::isfinite(x) || !std::isfinite(y)) {
      std::ostringstream os;
      os << "spatial sample (" << y << ", " << x << ") outside canvas " << rows << "x" << cols
         << " (increase padding)";
      throw DomainError(os.str());
    }
    if (y < 0 || y > ymax) t.free_y = false;
    if (x < 0 || x > xmax) t.free_x = false;
    y = std::min(std::max(y, 0.0), ymax);
    x = std::min(std::max(x, 0.0), xmax);
  }
  const auto r0 = static_cast<std::size_t>(std::floor(y)), c0 = static_cast<std::size_t>(std::floor(x));
  t.fy = y - static_cast<double>(r0);
  t.fx = x - static_cast<double>(c0);
  const std::size_t r1 = r0 + 1 < rows ? r0 + 1 : r0, c1 = c0 + 1 < cols ? c0 + 1 : c0;
  t.i00 = r0 * cols + c0;
  t.i01 = r0 * cols + c1;
  t.i10 = r1 * cols + c0;
  t.i11 = r1 * cols + c1;
  return t;
}

template <class V>
double interpolate(const V& map, const Tap& t) {
  return (1 - t.fy) * ((1 - t.fx) * map[t.i00] + t.fx * map[t.i01]) +
         t.fy * ((1 - t.fx) * map[t.i10] + t.fx * map[t.i11]);
}

ad::Tensor warp(const ad::Tensor& maps, const ad::Tensor* z_t, std::vector<Mat3> inverses,
                std::vector<std::array<Mat3, kTransformDims>> d_inverses, const SpatialConfig& cfg,
                const CanvasGeometry& g) {
  if (maps.rank() != 2 || maps.dim(1) != g.canvas_size())
    throw DimensionError("spatial_transform: maps " + ad::to_string(maps.shape()) + " do not match canvas " +
                         std::to_string(g.canvas_height()) + "x" + std::to_string(g.canvas_width()));
  const std::size_t batch = maps.dim(0), rows = g.canvas_height(), cols = g.canvas_width();
  const std::size_t npix = g.image_size();
  const Frame f = frame_of(g);
  auto mv = maps.data();
  std::vector<ad::Scalar> out(batch * npix);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto map = mv.subspan(b * g.canvas_size(), g.canvas_size());
    for (std::size_t i = 0; i < g.height; ++i)
      for (std::size_t j = 0; j < g.width; ++j) {
        const auto [y, x] = source_in_frame(inverses[b], f, i, j);
        out[b * npix + i * g.width + j] = static_cast<ad::Scalar>(interpolate(map, locate(rows, cols, y, x, cfg.clamp_to_canvas)));
      }
  }
  std::vector<ad::Tensor> inputs{maps};
  if (z_t) inputs.push_back(*z_t);
  const std::size_t mi = maps.id(), zi = z_t ? z_t->id() : 0;
  const bool has_z = z_t != nullptr;
  const bool clamp = cfg.clamp_to_canvas;
  return maps.tape().record(
      {batch, npix}, std::move(out), inputs,
      [mi, zi, has_z, clamp, g, f, rows, cols, npix, inverses = std::move(inverses),
       d_inverses = std::move(d_inverses)](ad::Tape& t, std::size_t self) {
        const auto& grad = t.node(self).grad;
        auto& mn = t.node(mi);
        ad::Tape::Node* zn = has_z ? &t.node(zi) : nullptr;
        const bool want_z = zn && zn->requires_grad;
        const std::size_t batch = grad.size() / npix;
        for (std::size_t b = 0; b < batch; ++b) {
          const std::size_t base = b * g.canvas_size();
          for (std::size_t i = 0; i < g.height; ++i)
            for (std::size_t j = 0; j < g.width; ++j) {
              const double go = grad[b * npix + i * g.width + j];
              if (go == 0) continue;
              const auto [y, x] = source_in_frame(inverses[b], f, i, j);
              const Tap tap = locate(rows, cols, y, x, clamp);
              if (mn.requires_grad) {
                mn.grad[base + tap.i00] += go * (1 - tap.fy) * (1 - tap.fx);
                mn.grad[base + tap.i01] += go * (1 - tap.fy) * tap.fx;
                mn.grad[base + tap.i10] += go * tap.fy * (1 - tap.fx);
                mn.grad[base + tap.i11] += go * tap.fy * tap.fx;
              }
              if (!want_z) continue;
              const auto& mv = mn.value;
              const double v00 = mv[base + tap.i00], v01 = mv[base + tap.i01];
              const double v10 = mv[base + tap.i10], v11 = mv[base + tap.i11];
              const double d_col = tap.free_x ? (1 - tap.fy) * (v01 - v00) + tap.fy * (v11 - v10) : 0.0;
              const double d_row = tap.free_y ? (1 - tap.fx) * (v10 - v00) + tap.fx * (v11 - v01) : 0.0;
              const auto basis = coordinate_basis(f, i, j);
              for (std::size_t k = 0; k < kTransformDims; ++k) {
                const Mat3& dA = d_inverses[b][k];
                const double dcol = dA[0][0] * basis.col[0] + dA[0][1] * basis.col[1] + dA[0][2] * basis.col[2];
                const double drow = dA[1][0] * basis.row[0] + dA[1][1] * basis.row[1] + dA[1][2] * basis.row[2];
                zn->grad[b * kTransformDims + k] += go * (d_col * dcol + d_row * drow);
              }
            }
        }
      });
}

}  // namespace

double bilinear_sample(std::span<const double> map, std::size_t rows, std::size_t cols, double y, double x) {
  if (map.size() != rows * cols) throw DimensionError("bilinear_sample: map size does not match dims");
  return interpolate(map, locate(rows, cols, y, x, false));
}

std::array<double, 2> source_coordinate(const Mat3& inverse, const CanvasGeometry& g, std::size_t i,
                                        std::size_t j) {
  return source_in_frame(inverse, frame_of(g), i, j);
}

ad::Tensor spatial_transform(const ad::Tensor& maps, const ad::Tensor& z_t, const SpatialConfig& cfg,
                             const CanvasGeometry& geometry) {
  if (z_t.rank() != 2 || z_t.dim(1) != kTransformDims || z_t.dim(0) != maps.dim(0))
    throw DimensionError("spatial_transform: z_t must be [B, 6], got " + ad::to_string(z_t.shape()));
  const std::size_t batch = z_t.dim(0);
  std::vector<Mat3> inverses(batch);
  std::vector<std::array<Mat3, kTransformDims>> d_inverses(batch);
  auto zv = z_t.data();
  for (std::size_t b = 0; b < batch; ++b) {
    std::array<double, kTransformDims> row;
    for (std::size_t k = 0; k < kTransformDims; ++k) row[k] = zv[b * kTransformDims + k];
    const Mat3 m = build_affine_matrix(row, cfg);
    inverses[b] = invert(m);
    if (z_t.requires_grad()) {
      // d(M^{-1}) = -M^{-1} dM M^{-1}
      const auto dm = affine_matrix_jacobian(row, cfg);
      for (std::size_t k = 0; k < kTransformDims; ++k) {
        Mat3 d = multiply(multiply(inverses[b], dm[k]), inverses[b]);
        for (auto& r : d)
          for (auto& v : r) v = -v;
        d_inverses[b][k] = d;
      }
    }
  }
  return warp(maps, &z_t, std::move(inverses), std::move(d_inverses), cfg, geometry);
}

ad::Tensor spatial_transform(const ad::Tensor& maps, const Mat3& m, const SpatialConfig& cfg,
                             const CanvasGeometry& geometry) {
  if (maps.rank() != 2) throw DimensionError("spatial_transform: maps must be a matrix");
  std::vector<Mat3> inverses(maps.dim(0), invert(m));
  return warp(maps, nullptr, std::move(inverses), {}, cfg, geometry);
}

}  // namespace cpcvae
