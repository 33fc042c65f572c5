#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "morphfit/geometry.hpp"
#include "morphfit/shape_model.hpp"

namespace morphfit {

/// 8-bit image, row-major with interleaved channels, plus an optional
/// per-pixel "empty" mask (no photometric information).
struct PixelImage {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> data;
  /// Either empty (no mask) or width * height flags.
  std::vector<std::uint8_t> empty;

  PixelImage() = default;
  /// Throws std::invalid_argument unless width, height > 0 and channels is
  /// 1 or 3.
  PixelImage(int width, int height, int channels, std::uint8_t fill = 0);

  std::uint8_t& at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool contains(int x, int y) const {
    return x >= 0 && y >= 0 && x < width && y < height;
  }
  bool has_mask() const { return !empty.empty(); }
  bool is_empty(int x, int y) const {
    return has_mask() && empty[static_cast<std::size_t>(y) * width + x] != 0;
  }
  void set_empty(int x, int y, bool value);
  /// Number of pixels not flagged empty.
  std::size_t covered_count() const;

  void validate() const;
  /// Copy with empty pixels painted white and the mask dropped.
  PixelImage with_empty_as_white() const;
};

/// Per-pixel depth; NaN marks pixels not covered by the mesh.
struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<double> depth;

  DepthImage() = default;
  DepthImage(int width, int height);

  double at(int x, int y) const {
    return depth[static_cast<std::size_t>(y) * width + x];
  }
  double& at(int x, int y) {
    return depth[static_cast<std::size_t>(y) * width + x];
  }
  bool valid(int x, int y) const;
  std::size_t valid_count() const;
};

/// Model units to pixels: (a1, a2, A3) = scale * (x, y, z) + (offset_x,
/// offset_y, 0). a1 is the column, a2 the row.
struct Viewport {
  double scale = 1.0;
  double offset_x = 0.0;
  double offset_y = 0.0;

  Vec3 to_pixel(const Vec3& p) const;
  Points3 to_pixel(const Points3& p) const;
};

/// The similarity acting on pixel coordinates that corresponds to `pose`
/// acting on model coordinates.
RigidSimilarity pixel_space_pose(const RigidSimilarity& pose,
                                 const Viewport& viewport);

struct Barycentric {
  Vec3 beta = Vec3::Zero();
  bool inside = false;
};

/// Barycentric coordinates of `p` in the triangle (v1, v2, v3); inside means
/// every beta in [0, 1]. Throws DegenerateConfigurationError when the
/// triangle area is below 1e-12.
Barycentric barycentric_coordinates(const Eigen::Vector2d& p,
                                    const Eigen::Vector2d& v1,
                                    const Eigen::Vector2d& v2,
                                    const Eigen::Vector2d& v3);

/// Orthographic z-buffer rasterization of a mesh already in pixel
/// coordinates. Each pixel centre inside a triangle gets the interpolated
/// depth; overlaps keep the smallest depth. Degenerate triangles are skipped.
DepthImage rasterize_frontal_depth(const Points3& vertices,
                                   const std::vector<Triangle>& triangles,
                                   int width, int height);

struct BackProjection {
  Vec3 b;
  int b1 = 0;
  int b2 = 0;
};

/// B = rho' R' A + T' for A = (a1, a2, depth), with (b1, b2) rounded half
/// away from zero.
BackProjection backproject(int a1, int a2, double depth,
                           const RigidSimilarity& inverse_pose);

/// Copies source(b1, b2) into every frontal pixel whose back-projection is
/// the nearest (smallest B3) of all frontal pixels landing on that source
/// pixel. Everything else is flagged empty.
PixelImage synthesize_frontal_image(const PixelImage& source,
                                    const DepthImage& depth,
                                    const RigidSimilarity& inverse_pose);

struct Frontalization {
  DepthImage depth;
  PixelImage image;
};

/// Full warp: rasterizes `frontal_vertices` (model units) through the
/// viewport and synthesizes the frontal view of `source`, where `pose` maps
/// observed coordinates to frontal ones.
Frontalization frontalize_image(const PixelImage& source,
                                const Points3& frontal_vertices,
                                const std::vector<Triangle>& triangles,
                                const RigidSimilarity& pose,
                                const Viewport& viewport, int width,
                                int height);

/// RGB (or gray) value in [0, 255] of the surface texture at surface
/// coordinates (u, v).
using Texture = std::function<std::array<double, 3>(double u, double v)>;

/// A smooth procedural texture with a few cycles over the unit square.
std::array<double, 3> smooth_texture(double u, double v);

/// Forward z-buffer render of a textured mesh in pixel coordinates; `uv`
/// holds per-vertex surface coordinates interpolated barycentrically.
/// Uncovered pixels are flagged empty.
PixelImage render_textured_mesh(const Points3& vertices,
                                const std::vector<Triangle>& triangles,
                                const Eigen::Matrix2Xd& uv,
                                const Texture& texture, int width, int height,
                                int channels = 3);

/// Textured unit square z = 0 meshed as a grid, seen frontally and after a
/// rotation by `yaw` radians about the vertical axis through its centre.
struct PlaneScene {
  Points3 vertices;
  std::vector<Triangle> triangles;
  Eigen::Matrix2Xd uv;
  Viewport viewport;
  int width = 0;
  int height = 0;
  /// Maps frontal to observed model coordinates.
  RigidSimilarity observed_pose;
  PixelImage frontal;
  PixelImage observed;
};

PlaneScene make_plane_scene(double yaw, int grid = 24, int size = 256,
                            int channels = 3);

/// Mean absolute difference over pixels covered in both images, in
/// intensity units. Returns NaN when no pixel is shared.
double masked_mean_abs_error(const PixelImage& a, const PixelImage& b);

}  // namespace morphfit
