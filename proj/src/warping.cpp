#include "morphfit/warping.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "morphfit/errors.hpp"

namespace morphfit {

namespace {

constexpr double kMinArea = 1e-12;
// Pixels within this barycentric distance of an edge count as inside, so
// shared edges leave no cracks.
constexpr double kEdgeTolerance = 1e-10;

double cross2(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return a.x() * b.y() - a.y() * b.x();
}

Vec3 barycentric_raw(const Eigen::Vector2d& p, const Eigen::Vector2d& v1,
                     const Eigen::Vector2d& v2, const Eigen::Vector2d& v3,
                     double den) {
  const Eigen::Vector2d d = p - v3;
  const double b1 = cross2(d, v2 - v3) / den;
  const double b2 = cross2(v1 - v3, d) / den;
  return {b1, b2, 1.0 - b1 - b2};
}

// Calls fn(x, y, triangle_index, beta) for every pixel centre covered by a
// non-degenerate triangle.
template <class Fn>
void for_each_covered(const Points3& v, const std::vector<Triangle>& triangles,
                      int width, int height, Fn&& fn) {
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    const Triangle& tri = triangles[t];
    for (int i : tri) {
      if (i < 0 || i >= v.cols()) {
        throw std::invalid_argument("triangle index out of range");
      }
    }
    const Eigen::Vector2d p1 = v.col(tri[0]).head<2>();
    const Eigen::Vector2d p2 = v.col(tri[1]).head<2>();
    const Eigen::Vector2d p3 = v.col(tri[2]).head<2>();
    const double den = cross2(p1 - p3, p2 - p3);
    if (!(std::abs(den) * 0.5 > kMinArea)) continue;

    const double xmin = std::min({p1.x(), p2.x(), p3.x()});
    const double xmax = std::max({p1.x(), p2.x(), p3.x()});
    const double ymin = std::min({p1.y(), p2.y(), p3.y()});
    const double ymax = std::max({p1.y(), p2.y(), p3.y()});
    const int x0 = std::max(0, static_cast<int>(std::ceil(xmin - 1e-9)));
    const int x1 = std::min(width - 1, static_cast<int>(std::floor(xmax + 1e-9)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(ymin - 1e-9)));
    const int y1 = std::min(height - 1, static_cast<int>(std::floor(ymax + 1e-9)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const Vec3 beta = barycentric_raw(Eigen::Vector2d(x, y), p1, p2, p3, den);
        if (beta.minCoeff() < -kEdgeTolerance) continue;
        fn(x, y, t, beta);
      }
    }
  }
}

}  // namespace

PixelImage::PixelImage(int w, int h, int c, std::uint8_t fill)
    : width(w), height(h), channels(c) {
  if (w <= 0 || h <= 0) {
    throw std::invalid_argument("image dimensions must be positive");
  }
  if (c != 1 && c != 3) {
    throw std::invalid_argument("image must have 1 or 3 channels");
  }
  data.assign(static_cast<std::size_t>(w) * h * c, fill);
}

void PixelImage::set_empty(int x, int y, bool value) {
  if (!has_mask()) {
    if (!value) return;
    empty.assign(static_cast<std::size_t>(width) * height, 0);
  }
  empty[static_cast<std::size_t>(y) * width + x] = value ? 1 : 0;
}

std::size_t PixelImage::covered_count() const {
  const std::size_t n = static_cast<std::size_t>(width) * height;
  if (!has_mask()) return n;
  return n - static_cast<std::size_t>(std::count(empty.begin(), empty.end(), 1));
}

void PixelImage::validate() const {
  if (width <= 0 || height <= 0 || (channels != 1 && channels != 3)) {
    throw std::invalid_argument("invalid image dimensions or channel count");
  }
  const std::size_t n = static_cast<std::size_t>(width) * height;
  if (data.size() != n * channels) {
    throw std::invalid_argument("image buffer length mismatch");
  }
  if (has_mask() && empty.size() != n) {
    throw std::invalid_argument("image mask length mismatch");
  }
}

PixelImage PixelImage::with_empty_as_white() const {
  PixelImage out = *this;
  out.empty.clear();
  if (!has_mask()) return out;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (!is_empty(x, y)) continue;
      for (int c = 0; c < channels; ++c) out.at(x, y, c) = 255;
    }
  }
  return out;
}

DepthImage::DepthImage(int w, int h) : width(w), height(h) {
  if (w <= 0 || h <= 0) {
    throw std::invalid_argument("depth image dimensions must be positive");
  }
  depth.assign(static_cast<std::size_t>(w) * h,
               std::numeric_limits<double>::quiet_NaN());
}

bool DepthImage::valid(int x, int y) const { return std::isfinite(at(x, y)); }

std::size_t DepthImage::valid_count() const {
  return static_cast<std::size_t>(std::count_if(
      depth.begin(), depth.end(), [](double d) { return std::isfinite(d); }));
}

Vec3 Viewport::to_pixel(const Vec3& p) const {
  return {scale * p.x() + offset_x, scale * p.y() + offset_y, scale * p.z()};
}

Points3 Viewport::to_pixel(const Points3& p) const {
  Points3 out = scale * p;
  out.row(0).array() += offset_x;
  out.row(1).array() += offset_y;
  return out;
}

RigidSimilarity pixel_space_pose(const RigidSimilarity& pose,
                                 const Viewport& viewport) {
  const Vec3 o(viewport.offset_x, viewport.offset_y, 0.0);
  RigidSimilarity out = pose;
  out.translation =
      viewport.scale * pose.translation + o - pose.rho * pose.rotation.rotate(o);
  return out;
}

Barycentric barycentric_coordinates(const Eigen::Vector2d& p,
                                    const Eigen::Vector2d& v1,
                                    const Eigen::Vector2d& v2,
                                    const Eigen::Vector2d& v3) {
  const double den = cross2(v1 - v3, v2 - v3);
  if (!(std::abs(den) * 0.5 > kMinArea)) {
    throw DegenerateConfigurationError("triangle area is (nearly) zero");
  }
  Barycentric out;
  out.beta = barycentric_raw(p, v1, v2, v3, den);
  out.inside = (out.beta.array() >= 0.0).all() && (out.beta.array() <= 1.0).all();
  return out;
}

DepthImage rasterize_frontal_depth(const Points3& vertices,
                                   const std::vector<Triangle>& triangles,
                                   int width, int height) {
  DepthImage out(width, height);
  for_each_covered(vertices, triangles, width, height,
                   [&](int x, int y, std::size_t t, const Vec3& beta) {
                     const Triangle& tri = triangles[t];
                     const double z = beta(0) * vertices(2, tri[0]) +
                                      beta(1) * vertices(2, tri[1]) +
                                      beta(2) * vertices(2, tri[2]);
                     double& cur = out.at(x, y);
                     if (!std::isfinite(cur) || z < cur) cur = z;
                   });
  return out;
}

BackProjection backproject(int a1, int a2, double depth,
                           const RigidSimilarity& inverse_pose) {
  BackProjection out;
  out.b = apply_similarity(inverse_pose, Vec3(a1, a2, depth));
  out.b1 = static_cast<int>(std::round(out.b.x()));
  out.b2 = static_cast<int>(std::round(out.b.y()));
  return out;
}

PixelImage synthesize_frontal_image(const PixelImage& source,
                                    const DepthImage& depth,
                                    const RigidSimilarity& inverse_pose) {
  source.validate();
  inverse_pose.validate();
  PixelImage out(depth.width, depth.height, source.channels, 0);
  out.empty.assign(static_cast<std::size_t>(depth.width) * depth.height, 1);

  const std::size_t n_src = static_cast<std::size_t>(source.width) * source.height;
  std::vector<double> zmin(n_src, std::numeric_limits<double>::infinity());
  std::vector<BackProjection> bp(static_cast<std::size_t>(depth.width) *
                                 depth.height);
  std::vector<std::uint8_t> lands(bp.size(), 0);

  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      if (!depth.valid(x, y)) continue;
      const std::size_t i = static_cast<std::size_t>(y) * depth.width + x;
      bp[i] = backproject(x, y, depth.at(x, y), inverse_pose);
      if (!source.contains(bp[i].b1, bp[i].b2) ||
          source.is_empty(bp[i].b1, bp[i].b2)) {
        continue;
      }
      lands[i] = 1;
      double& z = zmin[static_cast<std::size_t>(bp[i].b2) * source.width +
                       bp[i].b1];
      z = std::min(z, bp[i].b.z());
    }
  }

  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * depth.width + x;
      if (!lands[i]) continue;
      const BackProjection& b = bp[i];
      if (b.b.z() != zmin[static_cast<std::size_t>(b.b2) * source.width + b.b1]) {
        continue;
      }
      for (int c = 0; c < source.channels; ++c) {
        out.at(x, y, c) = source.at(b.b1, b.b2, c);
      }
      out.empty[i] = 0;
    }
  }
  return out;
}

Frontalization frontalize_image(const PixelImage& source,
                                const Points3& frontal_vertices,
                                const std::vector<Triangle>& triangles,
                                const RigidSimilarity& pose,
                                const Viewport& viewport, int width,
                                int height) {
  Frontalization out;
  out.depth = rasterize_frontal_depth(viewport.to_pixel(frontal_vertices),
                                      triangles, width, height);
  out.image = synthesize_frontal_image(
      source, out.depth,
      pixel_space_pose(invert_similarity(pose), viewport));
  return out;
}

std::array<double, 3> smooth_texture(double u, double v) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  return {
      128.0 + 50.0 * std::sin(kTwoPi * (1.3 * u + 0.2)) * std::cos(kTwoPi * 0.9 * v),
      128.0 + 45.0 * std::cos(kTwoPi * (0.8 * u - 1.1 * v)),
      110.0 + 40.0 * std::sin(kTwoPi * (1.2 * v + 0.5 * u + 0.1)),
  };
}

PixelImage render_textured_mesh(const Points3& vertices,
                                const std::vector<Triangle>& triangles,
                                const Eigen::Matrix2Xd& uv,
                                const Texture& texture, int width, int height,
                                int channels) {
  if (uv.cols() != vertices.cols()) {
    throw std::invalid_argument("render: one uv pair per vertex required");
  }
  PixelImage out(width, height, channels, 0);
  out.empty.assign(static_cast<std::size_t>(width) * height, 1);
  std::vector<double> zbuf(static_cast<std::size_t>(width) * height,
                           std::numeric_limits<double>::infinity());

  for_each_covered(
      vertices, triangles, width, height,
      [&](int x, int y, std::size_t t, const Vec3& beta) {
        const Triangle& tri = triangles[t];
        const double z = beta(0) * vertices(2, tri[0]) +
                         beta(1) * vertices(2, tri[1]) +
                         beta(2) * vertices(2, tri[2]);
        const std::size_t i = static_cast<std::size_t>(y) * width + x;
        if (!(z < zbuf[i])) return;
        zbuf[i] = z;
        const Eigen::Vector2d st = beta(0) * uv.col(tri[0]) +
                                   beta(1) * uv.col(tri[1]) +
                                   beta(2) * uv.col(tri[2]);
        const std::array<double, 3> rgb = texture(st.x(), st.y());
        if (channels == 1) {
          const double g = (rgb[0] + rgb[1] + rgb[2]) / 3.0;
          out.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::round(g), 0.0, 255.0));
        } else {
          for (int c = 0; c < 3; ++c) {
            out.at(x, y, c) = static_cast<std::uint8_t>(
                std::clamp(std::round(rgb[c]), 0.0, 255.0));
          }
        }
        out.empty[i] = 0;
      });
  return out;
}

PlaneScene make_plane_scene(double yaw, int grid, int size, int channels) {
  if (grid < 1 || size < 8) {
    throw std::invalid_argument("plane scene: grid >= 1 and size >= 8 required");
  }
  PlaneScene scene;
  const int n = grid + 1;
  scene.vertices.resize(3, n * n);
  scene.uv.resize(2, n * n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const double u = static_cast<double>(c) / grid;
      const double v = static_cast<double>(r) / grid;
      scene.vertices.col(r * n + c) = Vec3(u, v, 0.0);
      scene.uv.col(r * n + c) = Eigen::Vector2d(u, v);
    }
  }
  for (int r = 0; r < grid; ++r) {
    for (int c = 0; c < grid; ++c) {
      const int i = r * n + c;
      scene.triangles.push_back({i, i + 1, i + n});
      scene.triangles.push_back({i + 1, i + n + 1, i + n});
    }
  }
  scene.width = size;
  scene.height = size;
  scene.viewport.scale = 0.625 * size;
  scene.viewport.offset_x = 0.1875 * size;
  scene.viewport.offset_y = 0.1875 * size;

  const Vec3 centre(0.5, 0.5, 0.0);
  scene.observed_pose.rotation =
      UnitQuaternion::from_axis_angle(Vec3::UnitY(), yaw);
  scene.observed_pose.translation =
      centre - scene.observed_pose.rotation.rotate(centre);

  scene.frontal = render_textured_mesh(scene.viewport.to_pixel(scene.vertices),
                                       scene.triangles, scene.uv,
                                       smooth_texture, size, size, channels);
  scene.observed = render_textured_mesh(
      scene.viewport.to_pixel(apply_similarity(scene.observed_pose, scene.vertices)),
      scene.triangles, scene.uv, smooth_texture, size, size, channels);
  return scene;
}

double masked_mean_abs_error(const PixelImage& a, const PixelImage& b) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels) {
    throw std::invalid_argument("images differ in shape");
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      if (a.is_empty(x, y) || b.is_empty(x, y)) continue;
      for (int c = 0; c < a.channels; ++c) {
        sum += std::abs(static_cast<double>(a.at(x, y, c)) - b.at(x, y, c));
        ++count;
      }
    }
  }
  return count == 0 ? std::numeric_limits<double>::quiet_NaN()
                    : sum / static_cast<double>(count);
}

}  // namespace morphfit
