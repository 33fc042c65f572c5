#pragma once

#include <vector>

#include "morphfit/geometry.hpp"
#include "morphfit/warping.hpp"

namespace morphfit {

struct ZnccConfig {
  /// Region width and height in pixels.
  int region_width = 48;
  int region_height = 48;
  /// Shifts in [-max_shift, max_shift] are searched on both axes.
  int max_shift = 8;
  /// Optional scale between the faces: the target region is sampled at
  /// centre + scale * offset (nearest pixel).
  double scale = 1.0;

  /// Throws std::invalid_argument unless the region is at least 3x3,
  /// max_shift >= 0 and scale > 0.
  void validate() const;
};

struct ZnccResult {
  /// max(raw, 0).
  double score = 0.0;
  double raw = 0.0;
  int shift_h = 0;
  int shift_v = 0;
};

/// Zero-mean normalized cross-correlation of the region of `frontal`
/// centred at column `h`, row `v` against `target`, maximized over shifts.
/// Pixels empty in either image are excluded pairwise; a region with zero
/// variance scores 0. Ties keep the first shift in row-major scan order.
/// Throws std::out_of_range when a searched region leaves either image.
ZnccResult zncc_score(const PixelImage& frontal, const PixelImage& target,
                      int h, int v, const ZnccConfig& config = {});

struct RigidError {
  double rotation = 0.0;
  double scale = 0.0;
  double translation = 0.0;
};

/// Geodesic rotation angle, |rho_hat - rho| and |T_hat - T|.
RigidError rigid_error(const RigidSimilarity& estimate,
                       const RigidSimilarity& truth);

/// Root mean square of each component over paired poses. Throws
/// std::invalid_argument on a length mismatch; an empty list gives zeros.
RigidError rigid_rmse(const std::vector<RigidSimilarity>& estimates,
                      const std::vector<RigidSimilarity>& truths);

/// Coordinate `axis` (0, 1, 2) of landmark `index` minus its first-frame
/// value, per frame.
std::vector<double> landmark_displacement_trace(
    const std::vector<Points3>& sequence, int index, int axis);

}  // namespace morphfit
