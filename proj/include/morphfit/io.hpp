#pragma once

#include <string>
#include <vector>

#include "morphfit/dynamic_filter.hpp"
#include "morphfit/metrics.hpp"
#include "morphfit/shape_model.hpp"
#include "morphfit/warping.hpp"

namespace morphfit {

/// First line of every CSV this library writes.
inline constexpr const char* kCsvMagic = "# morphfit-v1";

struct LandmarkFrame {
  int t = 0;
  Points3 points;
};

/// CSV `t,j,x,y,z`, one row per landmark. Rows may come in any order; the
/// result is sorted by t, landmarks by j. Every frame must carry landmarks
/// 0..J-1 for the same J. Lines starting with '#' are skipped.
/// Throws FormatError with the offending line number.
std::vector<LandmarkFrame> parse_landmark_sequence(const std::string& text);
std::vector<LandmarkFrame> read_landmark_sequence(const std::string& path);
std::string landmark_sequence_csv(const std::vector<LandmarkFrame>& frames);
void write_landmark_sequence(const std::vector<LandmarkFrame>& frames,
                             const std::string& path);

/// Binary P5 (gray) or P6 (RGB), maxval 255. Comments are accepted in the
/// header. The mask is not stored.
PixelImage decode_ppm(const std::string& bytes);
PixelImage read_ppm(const std::string& path);
/// Writes the pixel data as is; empty pixels keep their stored value.
std::string encode_ppm(const PixelImage& image);
void write_ppm(const PixelImage& image, const std::string& path);
/// Empty pixels painted white.
void write_preview_ppm(const PixelImage& image, const std::string& path);
/// P5 image, 255 where covered and 0 where empty.
void write_mask_pgm(const PixelImage& image, const std::string& path);

/// Row-major CSV of depth values, one image row per line, `nan` for
/// invalid pixels.
std::string depth_csv(const DepthImage& depth);
DepthImage parse_depth_csv(const std::string& text);
void write_depth_csv(const DepthImage& depth, const std::string& path);
DepthImage read_depth_csv(const std::string& path);

std::string shape_model_json(const ShapeModel& model);
/// Parses and validates. Throws FormatError on structure problems and
/// std::invalid_argument when the model invariants fail.
ShapeModel parse_shape_model_json(const std::string& text);
void write_shape_model(const ShapeModel& model, const std::string& path);
ShapeModel read_shape_model(const std::string& path);

struct RunConfig {
  FitConfig fit;
  double alpha = 0.06;
  /// Unset means estimated from a preliminary per-frame pass.
  std::optional<Eigen::VectorXd> gamma_s;
  std::optional<Eigen::VectorXd> gamma_v;
  double homogeneous_variance = 1e-12;
  double gamma_floor = 1e-10;
  ZnccConfig zncc;

  DffConfig dff_config() const;
};

/// Flat JSON object; missing keys take their defaults, unknown keys and
/// wrong types are rejected (FormatError), and out-of-range values throw
/// FormatError of kind kOutOfRange.
RunConfig parse_run_config(const std::string& text);
RunConfig load_config(const std::string& path);
/// Every key with its effective value, in a fixed order.
std::string run_config_json(const RunConfig& config);

/// Whole file as bytes. Throws FormatError(kIo).
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

}  // namespace morphfit
