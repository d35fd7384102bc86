#pragma once

// Latent affine transforms and a bilinear spatial transformer for decoders
// that emit per-pixel likelihood-parameter maps on a padded canvas.

#include <array>
#include <span>

#include "cpcvae/autodiff.hpp"

namespace cpcvae {

using Mat3 = std::array<std::array<double, 3>, 3>;

inline constexpr std::size_t kTransformDims = 6;

/// Ranges for the six transform latents, in normalized image units where the
/// image spans [-1, 1] on both axes. The first six latent dimensions drive
/// the transform; the rest describe appearance.
struct SpatialConfig {
  double translate_x = 0.4;  // 0.2 x image width
  double translate_y = 0.4;
  double rotation = 0.4;     // radians
  double shear = 0.2;        // radians
  double scale_x = 1.5;      // > 1
  double scale_y = 1.5;      // > 1
  /// Predictor and consistency terms read only the appearance latents.
  bool predictor_appearance_only = true;
  /// Canvas padding per side as a fraction of the image size.
  double pad_fraction = 0.25;
  /// Clamp sample points to the canvas instead of raising on out-of-canvas reads.
  bool clamp_to_canvas = false;

  void validate() const;
};

Mat3 identity3();
Mat3 multiply(const Mat3& a, const Mat3& b);
/// Exact cofactor inverse; throws NumericalError on a singular matrix.
Mat3 invert(const Mat3& m);

/// M_t = Translation · RotationShear · Scale built from tanh-squashed latents:
/// scaling is applied first, then rotation and shear, then translation.
Mat3 build_affine_matrix(std::span<const double> z_t, const SpatialConfig& cfg);
/// dM_t / dz_t^(k) for k = 0..5.
std::array<Mat3, kTransformDims> affine_matrix_jacobian(std::span<const double> z_t,
                                                       const SpatialConfig& cfg);

/// Output image size plus the padded canvas the decoder draws on.
struct CanvasGeometry {
  std::size_t height = 0, width = 0;
  std::size_t pad_y = 0, pad_x = 0;

  std::size_t canvas_height() const { return height + 2 * pad_y; }
  std::size_t canvas_width() const { return width + 2 * pad_x; }
  std::size_t canvas_size() const { return canvas_height() * canvas_width(); }
  std::size_t image_size() const { return height * width; }

  static CanvasGeometry for_image(std::size_t height, std::size_t width, const SpatialConfig& cfg);
};

/// Bilinear read of a row-major map at (row y, column x). Lattice points
/// return the stored value exactly. Out-of-range reads throw DomainError.
double bilinear_sample(std::span<const double> map, std::size_t rows, std::size_t cols, double y,
                       double x);

/// Canvas coordinates (row, col) that output pixel (i, j) reads from, i.e.
/// M^{-1} applied to the pixel in normalized coordinates.
std::array<double, 2> source_coordinate(const Mat3& inverse, const CanvasGeometry& g, std::size_t i,
                                        std::size_t j);

/// Warps canvas maps [B, canvas] into image maps [B, H*W]; output pixel (i, j)
/// reads the canvas at M_t^{-1}(i, j). Differentiable in both the maps and
/// the transform latents z_t [B, 6].
ad::Tensor spatial_transform(const ad::Tensor& maps, const ad::Tensor& z_t, const SpatialConfig& cfg,
                             const CanvasGeometry& geometry);

/// Same warp for a fixed matrix; no gradient flows to the transform.
ad::Tensor spatial_transform(const ad::Tensor& maps, const Mat3& m, const SpatialConfig& cfg,
                             const CanvasGeometry& geometry);

}  // namespace cpcvae
