#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <limits>
#include <random>

#include "morphfit/errors.hpp"
#include "morphfit/format.hpp"
#include "morphfit/io.hpp"

using namespace morphfit;
namespace fs = std::filesystem;

namespace {

FormatError::Kind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const FormatError& e) {
    return e.kind();
  }
  FAIL("no FormatError thrown");
  return FormatError::Kind::kIo;
}

std::size_t line_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const FormatError& e) {
    return e.line();
  }
  return 0;
}

fs::path temp(const std::string& name) {
  return fs::temp_directory_path() / ("morphfit_io_" + name);
}

}  // namespace

TEST_CASE("double formatting round trips") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 10000; ++i) {
    const double x = u(rng) * std::pow(10.0, static_cast<int>(u(rng)) % 200);
    double y = 0.0;
    REQUIRE(parse_double(format_double(x), y));
    CHECK(y == x);
  }
  double y = 0.0;
  CHECK(parse_double("nan", y));
  CHECK(std::isnan(y));
  CHECK_FALSE(parse_double("1.5x", y));
  CHECK_FALSE(parse_double("", y));
  CHECK(format_double(0.1) == "0.10000000000000001");
}

TEST_CASE("landmark CSV well-formed frame") {
  const std::string text =
      "t,j,x,y,z\n"
      "0,2,1,2,3\n"
      "0,0,0.5,0,0\n"
      "0,3,1e-3,-2,4\n"
      "0,1,7,8,9\n";
  const auto frames = parse_landmark_sequence(text);
  REQUIRE(frames.size() == 1);
  CHECK(frames[0].t == 0);
  CHECK(frames[0].points.cols() == 4);
  CHECK(frames[0].points(0, 0) == 0.5);
  CHECK(frames[0].points(2, 2) == 3.0);
  CHECK(frames[0].points(1, 3) == -2.0);
}

TEST_CASE("landmark CSV errors name the line") {
  const std::string dup = "t,j,x,y,z\n0,0,1,2,3\n0,2,1,2,3\n0,2,1,2,3\n0,1,1,1,1\n";
  CHECK(kind_of([&] { parse_landmark_sequence(dup); }) == FormatError::Kind::kDuplicate);
  CHECK(line_of([&] { parse_landmark_sequence(dup); }) == 4);

  const std::string missing = "t,j,x,y,z\n0,0,1,2,3\n0,1,1,2,3\n1,0,1,2,3\n";
  CHECK(kind_of([&] { parse_landmark_sequence(missing); }) ==
        FormatError::Kind::kMissingLandmark);

  const std::string bad = "t,j,x,y,z\n0,0,1,abc,3\n";
  CHECK(kind_of([&] { parse_landmark_sequence(bad); }) == FormatError::Kind::kNonNumeric);
  CHECK(line_of([&] { parse_landmark_sequence(bad); }) == 2);

  CHECK(kind_of([] { parse_landmark_sequence("t,j,x,y\n"); }) == FormatError::Kind::kBadHeader);
  CHECK(kind_of([] { parse_landmark_sequence("t,j,x,y,z\n0,0,1,2\n"); }) ==
        FormatError::Kind::kInconsistent);
  CHECK(kind_of([] { parse_landmark_sequence("t,j,x,y,z\n0,0,1,2,nan\n"); }) ==
        FormatError::Kind::kNonNumeric);
}

TEST_CASE("landmark sequence round trip") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 10.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<LandmarkFrame> frames(1 + trial % 5);
    for (std::size_t t = 0; t < frames.size(); ++t) {
      frames[t].t = static_cast<int>(3 * t);
      frames[t].points.resize(3, 1 + trial);
      for (Eigen::Index i = 0; i < frames[t].points.size(); ++i) frames[t].points(i) = n(rng);
    }
    const std::string text = landmark_sequence_csv(frames);
    CHECK(text.rfind("# morphfit-v1\n", 0) == 0);
    const auto back = parse_landmark_sequence(text);
    REQUIRE(back.size() == frames.size());
    for (std::size_t t = 0; t < frames.size(); ++t) {
      CHECK(back[t].t == frames[t].t);
      CHECK(back[t].points == frames[t].points);
    }
    CHECK(landmark_sequence_csv(back) == text);
  }
  const auto path = temp("seq.csv");
  std::vector<LandmarkFrame> one(1);
  one[0].points = Points3::Identity(3, 3);
  write_landmark_sequence(one, path.string());
  CHECK(read_landmark_sequence(path.string())[0].points == one[0].points);
  fs::remove(path);
}

TEST_CASE("ppm known bytes") {
  std::string bytes = "P6\n# comment\n2 2\n255\n";
  const unsigned char px[12] = {1, 2, 3, 4, 5, 6, 7, 8, 9, 250, 251, 252};
  bytes.append(reinterpret_cast<const char*>(px), 12);
  const PixelImage img = decode_ppm(bytes);
  CHECK(img.width == 2);
  CHECK(img.height == 2);
  CHECK(img.channels == 3);
  CHECK(img.at(1, 0, 2) == 6);
  CHECK(img.at(1, 1, 0) == 250);
  CHECK(encode_ppm(img).find('#') == std::string::npos);
}

TEST_CASE("ppm round trip") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> u(0, 255);
  for (int c : {1, 3}) {
    PixelImage img(17, 9, c);
    for (auto& b : img.data) b = static_cast<std::uint8_t>(u(rng));
    const PixelImage back = decode_ppm(encode_ppm(img));
    CHECK(back.data == img.data);
    CHECK(back.channels == c);
    CHECK(encode_ppm(back) == encode_ppm(img));
  }
}

TEST_CASE("ppm errors") {
  CHECK(kind_of([] { decode_ppm("P6\n2 2\n65535\n"); }) == FormatError::Kind::kUnsupported);
  CHECK(kind_of([] { decode_ppm("P3\n2 2\n255\n"); }) == FormatError::Kind::kBadHeader);
  CHECK(kind_of([] { decode_ppm("P5\n2 2\n255\nab"); }) == FormatError::Kind::kTruncated);
  CHECK(kind_of([] { decode_ppm("P5\n2 x\n255\n"); }) == FormatError::Kind::kBadHeader);
  CHECK(kind_of([] { read_ppm("/nonexistent/dir/x.ppm"); }) == FormatError::Kind::kIo);
}

TEST_CASE("preview and mask outputs") {
  PixelImage img(3, 2, 3, 40);
  img.set_empty(2, 1, true);
  const auto pre = temp("preview.ppm");
  const auto mask = temp("mask.pgm");
  write_preview_ppm(img, pre.string());
  write_mask_pgm(img, mask.string());
  const PixelImage p = read_ppm(pre.string());
  CHECK(p.at(2, 1, 0) == 255);
  CHECK(p.at(0, 0, 1) == 40);
  const PixelImage m = read_ppm(mask.string());
  CHECK(m.channels == 1);
  CHECK(m.at(2, 1) == 0);
  CHECK(m.at(1, 1) == 255);
  fs::remove(pre);
  fs::remove(mask);
}

TEST_CASE("depth CSV round trip is bit exact") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 100.0);
  DepthImage d(13, 7);
  for (auto& z : d.depth) z = n(rng);
  d.at(3, 2) = std::numeric_limits<double>::quiet_NaN();
  d.at(0, 0) = -0.0;
  d.at(12, 6) = 5e-310;
  const DepthImage back = parse_depth_csv(depth_csv(d));
  REQUIRE(back.width == 13);
  REQUIRE(back.height == 7);
  for (std::size_t i = 0; i < d.depth.size(); ++i) {
    if (std::isnan(d.depth[i])) {
      CHECK(std::isnan(back.depth[i]));
    } else {
      CHECK(std::memcmp(&d.depth[i], &back.depth[i], sizeof(double)) == 0);
    }
  }
  CHECK(depth_csv(back) == depth_csv(d));
  CHECK(kind_of([] { parse_depth_csv("1,2\n3\n"); }) == FormatError::Kind::kInconsistent);
  CHECK(kind_of([] { parse_depth_csv("1,zz\n"); }) == FormatError::Kind::kNonNumeric);
}

TEST_CASE("shape model JSON round trip") {
  const SyntheticModel synth = generate_synthetic_model(60, 4, 10, 5);
  const std::string text = shape_model_json(synth.model);
  const ShapeModel back = parse_shape_model_json(text);
  CHECK(back.basis == synth.model.basis);
  CHECK(back.mean == synth.model.mean);
  CHECK(back.eigenvalues == synth.model.eigenvalues);
  CHECK(back.triangles == synth.model.triangles);
  CHECK(back.landmark_map == synth.model.landmark_map);
  CHECK(shape_model_json(back) == text);

  CHECK(kind_of([] { parse_shape_model_json("{\"format_version\": 1, \"bogus\": 2}"); }) ==
        FormatError::Kind::kUnknownKey);
  CHECK(kind_of([] { parse_shape_model_json("[1, 2"); }) == FormatError::Kind::kBadHeader);
}

TEST_CASE("run config defaults") {
  const RunConfig c = parse_run_config("{}");
  CHECK(c.alpha == 0.06);
  CHECK(c.fit.mu_init == 1.0);
  CHECK(c.fit.epsilon == 1e-6);
  CHECK(c.zncc.region_width == 48);
  CHECK(c.zncc.max_shift == 8);
  CHECK_FALSE(c.gamma_s.has_value());
}

TEST_CASE("run config rejects bad input") {
  CHECK(kind_of([] { parse_run_config("{\"alpha\": 1.5}"); }) == FormatError::Kind::kOutOfRange);
  CHECK(kind_of([] { parse_run_config("{\"alhpa\": 0.1}"); }) == FormatError::Kind::kUnknownKey);
  CHECK(kind_of([] { parse_run_config("{\"max_iters\": \"ten\"}"); }) ==
        FormatError::Kind::kTypeMismatch);
  CHECK(kind_of([] { parse_run_config("{\"max_iters\": 2.5}"); }) ==
        FormatError::Kind::kTypeMismatch);
  CHECK(kind_of([] { parse_run_config("{\"epsilon\": 0}"); }) == FormatError::Kind::kOutOfRange);
  CHECK(kind_of([] { parse_run_config("{\"gamma_s\": [1, -1]}"); }) ==
        FormatError::Kind::kOutOfRange);
  CHECK(kind_of([] { parse_run_config("[]"); }) == FormatError::Kind::kTypeMismatch);
}

TEST_CASE("effective config echo reloads identically") {
  RunConfig c = parse_run_config(
      "{\"kappa\": 0.25, \"alpha\": 0.1, \"gamma_s\": [0.001, 0.002], "
      "\"zncc_max_shift\": 3, \"epsilon\": 1e-9}");
  CHECK(c.fit.kappa == 0.25);
  REQUIRE(c.gamma_s.has_value());
  CHECK(c.gamma_s->size() == 2);
  const std::string echo = run_config_json(c);
  const RunConfig again = parse_run_config(echo);
  CHECK(run_config_json(again) == echo);
  CHECK(again.fit.epsilon == 1e-9);
  CHECK(*again.gamma_s == *c.gamma_s);
  CHECK_FALSE(again.gamma_v.has_value());

  const DffConfig d = again.dff_config();
  CHECK(d.alpha == 0.1);
  CHECK(d.fit.kappa == 0.25);

  const auto path = temp("config.json");
  write_file(path.string(), echo);
  CHECK(run_config_json(load_config(path.string())) == echo);
  fs::remove(path);
}
