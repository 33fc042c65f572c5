#include "morphfit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace morphfit {

void ZnccConfig::validate() const {
  if (region_width < 3 || region_height < 3) {
    throw std::invalid_argument("zncc region must be at least 3x3");
  }
  if (max_shift < 0) throw std::invalid_argument("zncc max_shift must be >= 0");
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw std::invalid_argument("zncc scale must be positive");
  }
}

namespace {

struct Window {
  int x0, y0, x1, y1;  // inclusive
};

void require_inside(const PixelImage& img, const Window& w, const char* which) {
  if (w.x0 < 0 || w.y0 < 0 || w.x1 >= img.width || w.y1 >= img.height) {
    throw std::out_of_range(std::string("zncc region leaves the ") + which +
                            " image");
  }
}

double correlate(const PixelImage& f, const PixelImage& t, int h, int v,
                 int dh, int dv, const ZnccConfig& cfg) {
  const int ox = -cfg.region_width / 2;
  const int oy = -cfg.region_height / 2;
  double n = 0.0, sf = 0.0, st = 0.0, sff = 0.0, stt = 0.0, sft = 0.0;
  for (int r = 0; r < cfg.region_height; ++r) {
    for (int c = 0; c < cfg.region_width; ++c) {
      const int fx = h + ox + c;
      const int fy = v + oy + r;
      const int tx = h + dh + static_cast<int>(std::lround(cfg.scale * (ox + c)));
      const int ty = v + dv + static_cast<int>(std::lround(cfg.scale * (oy + r)));
      if (f.is_empty(fx, fy) || t.is_empty(tx, ty)) continue;
      for (int ch = 0; ch < f.channels; ++ch) {
        const double a = f.at(fx, fy, ch);
        const double b = t.at(tx, ty, ch);
        n += 1.0;
        sf += a;
        st += b;
        sff += a * a;
        stt += b * b;
        sft += a * b;
      }
    }
  }
  if (n < 2.0) return 0.0;
  const double cov = sft - sf * st / n;
  const double vf = sff - sf * sf / n;
  const double vt = stt - st * st / n;
  // Integer data: anything this small is exactly zero variance.
  if (vf <= 1e-9 * n || vt <= 1e-9 * n) return 0.0;
  return std::clamp(cov / std::sqrt(vf * vt), -1.0, 1.0);
}

}  // namespace

ZnccResult zncc_score(const PixelImage& frontal, const PixelImage& target,
                      int h, int v, const ZnccConfig& config) {
  config.validate();
  frontal.validate();
  target.validate();
  if (frontal.channels != target.channels) {
    throw std::invalid_argument("zncc images differ in channel count");
  }
  const int ox = -config.region_width / 2;
  const int oy = -config.region_height / 2;
  require_inside(frontal,
                 {h + ox, v + oy, h + ox + config.region_width - 1,
                  v + oy + config.region_height - 1},
                 "frontal");
  const int d = config.max_shift;
  const auto reach = [&](int o) {
    return static_cast<int>(std::lround(config.scale * o));
  };
  require_inside(target,
                 {h - d + reach(ox), v - d + reach(oy),
                  h + d + reach(ox + config.region_width - 1),
                  v + d + reach(oy + config.region_height - 1)},
                 "target");

  ZnccResult best;
  bool first = true;
  for (int dv = -d; dv <= d; ++dv) {
    for (int dh = -d; dh <= d; ++dh) {
      const double raw = correlate(frontal, target, h, v, dh, dv, config);
      if (first || raw > best.raw) {
        best.raw = raw;
        best.shift_h = dh;
        best.shift_v = dv;
        first = false;
      }
    }
  }
  best.score = std::max(best.raw, 0.0);
  return best;
}

RigidError rigid_error(const RigidSimilarity& estimate,
                       const RigidSimilarity& truth) {
  return {geodesic_angle(estimate.rotation, truth.rotation),
          std::abs(estimate.rho - truth.rho),
          (estimate.translation - truth.translation).norm()};
}

RigidError rigid_rmse(const std::vector<RigidSimilarity>& estimates,
                      const std::vector<RigidSimilarity>& truths) {
  if (estimates.size() != truths.size()) {
    throw std::invalid_argument("rigid_rmse: pose lists differ in length");
  }
  RigidError out;
  if (estimates.empty()) return out;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const RigidError e = rigid_error(estimates[i], truths[i]);
    out.rotation += e.rotation * e.rotation;
    out.scale += e.scale * e.scale;
    out.translation += e.translation * e.translation;
  }
  const double n = static_cast<double>(estimates.size());
  out.rotation = std::sqrt(out.rotation / n);
  out.scale = std::sqrt(out.scale / n);
  out.translation = std::sqrt(out.translation / n);
  return out;
}

std::vector<double> landmark_displacement_trace(
    const std::vector<Points3>& sequence, int index, int axis) {
  if (axis < 0 || axis > 2) throw std::out_of_range("axis must be 0, 1 or 2");
  std::vector<double> out;
  out.reserve(sequence.size());
  for (const Points3& frame : sequence) {
    if (index < 0 || index >= frame.cols()) {
      throw std::out_of_range("landmark index out of range");
    }
    out.push_back(frame(axis, index) - sequence.front()(axis, index));
  }
  return out;
}

}  // namespace morphfit
