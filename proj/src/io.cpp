#include "morphfit/io.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "morphfit/errors.hpp"
#include "morphfit/format.hpp"

namespace morphfit {

using Kind = FormatError::Kind;
using nlohmann::ordered_json;

namespace {

// Splits into lines, dropping one trailing '\r' per line.
std::vector<std::string_view> lines_of(const std::string& text) {
  std::vector<std::string_view> out;
  std::string_view rest(text);
  while (!rest.empty()) {
    const std::size_t nl = rest.find('\n');
    std::string_view line = rest.substr(0, nl);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    out.push_back(line);
    if (nl == std::string_view::npos) break;
    rest.remove_prefix(nl + 1);
  }
  return out;
}

bool skippable(std::string_view line) { return line.empty() || line[0] == '#'; }

}  // namespace

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(Kind::kIo, 0, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(Kind::kIo, 0, "cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(Kind::kIo, 0, "write failed: " + path);
}

// Landmarks ------------------------------------------------------------------

std::vector<LandmarkFrame> parse_landmark_sequence(const std::string& text) {
  const auto lines = lines_of(text);
  struct Row {
    Vec3 p;
    std::size_t line;
  };
  std::map<long long, std::map<long long, Row>> frames;
  bool header = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t n = i + 1;
    if (skippable(lines[i])) continue;
    if (!header) {
      if (lines[i] != "t,j,x,y,z") {
        throw FormatError(Kind::kBadHeader, n, "expected header t,j,x,y,z");
      }
      header = true;
      continue;
    }
    const auto f = split(lines[i], ',');
    if (f.size() != 5) {
      throw FormatError(Kind::kInconsistent, n, "expected 5 fields, got " +
                                                    std::to_string(f.size()));
    }
    long long t = 0, j = 0;
    if (!parse_int(f[0], t)) throw FormatError(Kind::kNonNumeric, n, "bad frame index");
    if (!parse_int(f[1], j)) throw FormatError(Kind::kNonNumeric, n, "bad landmark index");
    if (j < 0 || j > 1000000) throw FormatError(Kind::kOutOfRange, n, "landmark index out of range");
    Vec3 p;
    for (int c = 0; c < 3; ++c) {
      if (!parse_double(f[2 + c], p(c)) || !std::isfinite(p(c))) {
        throw FormatError(Kind::kNonNumeric, n, "non-numeric coordinate");
      }
    }
    auto [it, fresh] = frames[t].emplace(j, Row{p, n});
    if (!fresh) {
      throw FormatError(Kind::kDuplicate, n,
                        "duplicate (t=" + std::to_string(t) + ", j=" +
                            std::to_string(j) + "), first seen on line " +
                            std::to_string(it->second.line));
    }
  }
  if (!header) throw FormatError(Kind::kBadHeader, lines.size(), "missing header t,j,x,y,z");

  long long n_landmarks = 0;
  for (const auto& [t, rows] : frames) {
    n_landmarks = std::max(n_landmarks, rows.rbegin()->first + 1);
  }
  std::vector<LandmarkFrame> out;
  for (const auto& [t, rows] : frames) {
    if (static_cast<long long>(rows.size()) != n_landmarks) {
      long long missing = 0;
      while (rows.count(missing)) ++missing;
      throw FormatError(Kind::kMissingLandmark, rows.begin()->second.line,
                        "frame " + std::to_string(t) + " lacks landmark " +
                            std::to_string(missing));
    }
    LandmarkFrame frame;
    frame.t = static_cast<int>(t);
    frame.points.resize(3, n_landmarks);
    for (const auto& [j, row] : rows) frame.points.col(j) = row.p;
    out.push_back(std::move(frame));
  }
  return out;
}

std::vector<LandmarkFrame> read_landmark_sequence(const std::string& path) {
  return parse_landmark_sequence(read_file(path));
}

std::string landmark_sequence_csv(const std::vector<LandmarkFrame>& frames) {
  std::string out = std::string(kCsvMagic) + "\nt,j,x,y,z\n";
  for (const LandmarkFrame& f : frames) {
    for (Eigen::Index j = 0; j < f.points.cols(); ++j) {
      out += std::to_string(f.t) + ',' + std::to_string(j);
      for (int c = 0; c < 3; ++c) out += ',' + format_double(f.points(c, j));
      out += '\n';
    }
  }
  return out;
}

void write_landmark_sequence(const std::vector<LandmarkFrame>& frames,
                             const std::string& path) {
  write_file(path, landmark_sequence_csv(frames));
}

// PPM ------------------------------------------------------------------------

PixelImage decode_ppm(const std::string& bytes) {
  std::size_t pos = 0;
  auto fail = [](Kind k, const std::string& msg) -> FormatError {
    return FormatError(k, 0, "ppm: " + msg);
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw fail(Kind::kBadHeader, "expected P5 or P6 magic");
  }
  const int channels = bytes[1] == '5' ? 1 : 3;
  pos = 2;
  auto next_token = [&]() -> long long {
    while (pos < bytes.size()) {
      const unsigned char c = static_cast<unsigned char>(bytes[pos]);
      if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(c)) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) ++pos;
    long long v = 0;
    if (pos == start || !parse_int(std::string_view(bytes).substr(start, pos - start), v)) {
      throw fail(pos >= bytes.size() ? Kind::kTruncated : Kind::kBadHeader,
                 "malformed header field");
    }
    return v;
  };
  const long long w = next_token();
  const long long h = next_token();
  const long long maxval = next_token();
  if (w <= 0 || h <= 0 || w > (1 << 16) || h > (1 << 16)) {
    throw fail(Kind::kBadHeader, "bad dimensions");
  }
  if (maxval != 255) throw fail(Kind::kUnsupported, "only maxval 255 is supported");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw fail(Kind::kBadHeader, "missing whitespace after maxval");
  }
  ++pos;
  PixelImage img(static_cast<int>(w), static_cast<int>(h), channels);
  if (bytes.size() - pos < img.data.size()) throw fail(Kind::kTruncated, "payload truncated");
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(pos), img.data.size(),
              img.data.begin());
  return img;
}

PixelImage read_ppm(const std::string& path) { return decode_ppm(read_file(path)); }

std::string encode_ppm(const PixelImage& image) {
  image.validate();
  std::string out = (image.channels == 1 ? "P5\n" : "P6\n") +
                    std::to_string(image.width) + ' ' +
                    std::to_string(image.height) + "\n255\n";
  out.append(image.data.begin(), image.data.end());
  return out;
}

void write_ppm(const PixelImage& image, const std::string& path) {
  write_file(path, encode_ppm(image));
}

void write_preview_ppm(const PixelImage& image, const std::string& path) {
  write_ppm(image.with_empty_as_white(), path);
}

void write_mask_pgm(const PixelImage& image, const std::string& path) {
  PixelImage mask(image.width, image.height, 1, 255);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      if (image.is_empty(x, y)) mask.at(x, y) = 0;
    }
  }
  write_ppm(mask, path);
}

// Depth ----------------------------------------------------------------------

std::string depth_csv(const DepthImage& depth) {
  std::string out = std::string(kCsvMagic) + '\n';
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      if (x > 0) out += ',';
      out += format_double(depth.at(x, y));
    }
    out += '\n';
  }
  return out;
}

DepthImage parse_depth_csv(const std::string& text) {
  const auto lines = lines_of(text);
  std::vector<std::vector<double>> rows;
  std::size_t width = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (skippable(lines[i])) continue;
    const auto f = split(lines[i], ',');
    if (rows.empty()) width = f.size();
    if (f.size() != width) {
      throw FormatError(Kind::kInconsistent, i + 1, "row length differs from the first row");
    }
    std::vector<double> row(width);
    for (std::size_t c = 0; c < width; ++c) {
      if (!parse_double(f[c], row[c])) {
        throw FormatError(Kind::kNonNumeric, i + 1, "non-numeric depth value");
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError(Kind::kTruncated, lines.size(), "depth map has no rows");
  DepthImage d(static_cast<int>(width), static_cast<int>(rows.size()));
  for (int y = 0; y < d.height; ++y) {
    for (int x = 0; x < d.width; ++x) d.at(x, y) = rows[y][x];
  }
  return d;
}

void write_depth_csv(const DepthImage& depth, const std::string& path) {
  write_file(path, depth_csv(depth));
}

DepthImage read_depth_csv(const std::string& path) {
  return parse_depth_csv(read_file(path));
}

// Shape model ----------------------------------------------------------------

namespace {

const ordered_json& require(const ordered_json& j, const char* key) {
  if (!j.contains(key)) throw FormatError(Kind::kInconsistent, 0, std::string("missing key ") + key);
  return j.at(key);
}

Eigen::VectorXd vector_from(const ordered_json& j, const char* key) {
  if (!j.is_array()) throw FormatError(Kind::kTypeMismatch, 0, std::string(key) + " must be an array");
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) {
      throw FormatError(Kind::kTypeMismatch, 0, std::string(key) + " must hold numbers");
    }
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

}  // namespace

std::string shape_model_json(const ShapeModel& model) {
  ordered_json j;
  j["format_version"] = 1;
  j["n_vertices"] = model.n_vertices();
  j["k"] = model.k();
  j["mean"] = std::vector<double>(model.mean.data(), model.mean.data() + model.mean.size());
  j["eigenvalues"] = std::vector<double>(model.eigenvalues.data(),
                                         model.eigenvalues.data() + model.eigenvalues.size());
  ordered_json basis = ordered_json::array();
  for (Eigen::Index r = 0; r < model.basis.rows(); ++r) {
    std::vector<double> row(model.basis.cols());
    for (Eigen::Index c = 0; c < model.basis.cols(); ++c) row[c] = model.basis(r, c);
    basis.push_back(row);
  }
  j["basis"] = std::move(basis);
  j["triangles"] = model.triangles;
  j["landmark_map"] = model.landmark_map;
  return j.dump() + "\n";
}

ShapeModel parse_shape_model_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const ordered_json::parse_error& e) {
    throw FormatError(Kind::kBadHeader, 0, std::string("model json: ") + e.what());
  }
  if (!j.is_object()) throw FormatError(Kind::kTypeMismatch, 0, "model json must be an object");
  static const std::set<std::string> known = {"format_version", "n_vertices", "k",
                                              "mean", "eigenvalues", "basis",
                                              "triangles", "landmark_map"};
  for (const auto& item : j.items()) {
    if (!known.count(item.key())) {
      throw FormatError(Kind::kUnknownKey, 0, "model json: unknown key " + item.key());
    }
  }
  if (require(j, "format_version") != 1) {
    throw FormatError(Kind::kUnsupported, 0, "model json: unsupported format_version");
  }
  ShapeModel m;
  try {
    m.mean = vector_from(require(j, "mean"), "mean");
    m.eigenvalues = vector_from(require(j, "eigenvalues"), "eigenvalues");
    const ordered_json& basis = require(j, "basis");
    if (!basis.is_array()) throw FormatError(Kind::kTypeMismatch, 0, "basis must be an array");
    const long long k = require(j, "k").get<long long>();
    const long long n = require(j, "n_vertices").get<long long>();
    if (static_cast<long long>(basis.size()) != 3 * n || m.mean.size() != 3 * n ||
        m.eigenvalues.size() != k || k < 1) {
      throw FormatError(Kind::kInconsistent, 0, "model json: inconsistent dimensions");
    }
    m.basis.resize(3 * n, k);
    for (long long r = 0; r < 3 * n; ++r) {
      const Eigen::VectorXd row = vector_from(basis[r], "basis row");
      if (row.size() != k) throw FormatError(Kind::kInconsistent, 0, "basis row length");
      m.basis.row(r) = row.transpose();
    }
    m.triangles = require(j, "triangles").get<std::vector<Triangle>>();
    m.landmark_map = require(j, "landmark_map").get<std::vector<int>>();
  } catch (const ordered_json::exception& e) {
    throw FormatError(Kind::kTypeMismatch, 0, std::string("model json: ") + e.what());
  }
  m.validate();
  return m;
}

void write_shape_model(const ShapeModel& model, const std::string& path) {
  write_file(path, shape_model_json(model));
}

ShapeModel read_shape_model(const std::string& path) {
  return parse_shape_model_json(read_file(path));
}

// Run configuration ----------------------------------------------------------

DffConfig RunConfig::dff_config() const {
  DffConfig c;
  c.fit = fit;
  c.alpha = alpha;
  c.gamma_s_diag = gamma_s;
  c.gamma_v_diag = gamma_v;
  c.homogeneous_variance = homogeneous_variance;
  c.gamma_floor = gamma_floor;
  return c;
}

namespace {

double get_number(const ordered_json& v, const std::string& key) {
  if (!v.is_number()) throw FormatError(Kind::kTypeMismatch, 0, key + " must be a number");
  return v.get<double>();
}

int get_int(const ordered_json& v, const std::string& key) {
  if (!v.is_number_integer()) throw FormatError(Kind::kTypeMismatch, 0, key + " must be an integer");
  const long long x = v.get<long long>();
  if (x < -(1LL << 30) || x > (1LL << 30)) throw FormatError(Kind::kOutOfRange, 0, key + " out of range");
  return static_cast<int>(x);
}

std::optional<Eigen::VectorXd> get_diag(const ordered_json& v, const std::string& key) {
  if (v.is_null()) return std::nullopt;
  if (!v.is_array()) throw FormatError(Kind::kTypeMismatch, 0, key + " must be null or an array");
  Eigen::VectorXd d(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    d(static_cast<Eigen::Index>(i)) = get_number(v[i], key);
    if (!(d(static_cast<Eigen::Index>(i)) > 0.0)) {
      throw FormatError(Kind::kOutOfRange, 0, key + " entries must be positive");
    }
  }
  return d;
}

ordered_json diag_json(const std::optional<Eigen::VectorXd>& d) {
  if (!d) return nullptr;
  return std::vector<double>(d->data(), d->data() + d->size());
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const ordered_json::parse_error& e) {
    throw FormatError(Kind::kBadHeader, 0, std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw FormatError(Kind::kTypeMismatch, 0, "config must be a JSON object");
  RunConfig c;
  for (const auto& item : j.items()) {
    const std::string& k = item.key();
    const ordered_json& v = item.value();
    if (k == "format_version") {
      if (get_int(v, k) != 1) throw FormatError(Kind::kUnsupported, 0, "unsupported format_version");
    } else if (k == "kappa") {
      c.fit.kappa = get_number(v, k);
    } else if (k == "epsilon") {
      c.fit.epsilon = get_number(v, k);
    } else if (k == "max_iters") {
      c.fit.max_iters = get_int(v, k);
    } else if (k == "mu_init") {
      c.fit.mu_init = get_number(v, k);
    } else if (k == "rotation_tolerance") {
      c.fit.rotation_tolerance = get_number(v, k);
    } else if (k == "rotation_max_iters") {
      c.fit.rotation_max_iters = get_int(v, k);
    } else if (k == "alpha") {
      c.alpha = get_number(v, k);
    } else if (k == "gamma_s") {
      c.gamma_s = get_diag(v, k);
    } else if (k == "gamma_v") {
      c.gamma_v = get_diag(v, k);
    } else if (k == "homogeneous_variance") {
      c.homogeneous_variance = get_number(v, k);
    } else if (k == "gamma_floor") {
      c.gamma_floor = get_number(v, k);
    } else if (k == "zncc_region_width") {
      c.zncc.region_width = get_int(v, k);
    } else if (k == "zncc_region_height") {
      c.zncc.region_height = get_int(v, k);
    } else if (k == "zncc_max_shift") {
      c.zncc.max_shift = get_int(v, k);
    } else if (k == "zncc_scale") {
      c.zncc.scale = get_number(v, k);
    } else {
      throw FormatError(Kind::kUnknownKey, 0, "config: unknown key '" + k + "'");
    }
  }
  try {
    c.fit.validate();
    c.zncc.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(Kind::kOutOfRange, 0, e.what());
  }
  if (!(c.alpha >= 0.0 && c.alpha <= 1.0)) {
    throw FormatError(Kind::kOutOfRange, 0, "config: alpha must lie in [0, 1]");
  }
  if (!(c.homogeneous_variance > 0.0) || !(c.gamma_floor > 0.0)) {
    throw FormatError(Kind::kOutOfRange, 0,
                      "config: homogeneous_variance and gamma_floor must be positive");
  }
  return c;
}

RunConfig load_config(const std::string& path) { return parse_run_config(read_file(path)); }

std::string run_config_json(const RunConfig& c) {
  ordered_json j;
  j["format_version"] = 1;
  j["kappa"] = c.fit.kappa;
  j["epsilon"] = c.fit.epsilon;
  j["max_iters"] = c.fit.max_iters;
  j["mu_init"] = c.fit.mu_init;
  j["rotation_tolerance"] = c.fit.rotation_tolerance;
  j["rotation_max_iters"] = c.fit.rotation_max_iters;
  j["alpha"] = c.alpha;
  j["gamma_s"] = diag_json(c.gamma_s);
  j["gamma_v"] = diag_json(c.gamma_v);
  j["homogeneous_variance"] = c.homogeneous_variance;
  j["gamma_floor"] = c.gamma_floor;
  j["zncc_region_width"] = c.zncc.region_width;
  j["zncc_region_height"] = c.zncc.region_height;
  j["zncc_max_shift"] = c.zncc.max_shift;
  j["zncc_scale"] = c.zncc.scale;
  return j.dump(2) + "\n";
}

}  // namespace morphfit
