#include "morphfit/cli.hpp"

#include <CLI11.hpp>
#include <atomic>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include "morphfit/bench.hpp"
#include "morphfit/dynamic_filter.hpp"
#include "morphfit/errors.hpp"
#include "morphfit/format.hpp"
#include "morphfit/io.hpp"
#include "morphfit/metrics.hpp"
#include "morphfit/robust_fit.hpp"
#include "morphfit/warping.hpp"

namespace morphfit {

namespace fs = std::filesystem;

namespace {

class UsageError : public Error {
 public:
  using Error::Error;
};

// Runs fn(i) for i in [0, n) on up to `threads` workers.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(n)));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

fs::path ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw FormatError(FormatError::Kind::kIo, 0, "cannot create directory " + dir);
  return fs::path(dir);
}

fs::path parent_dir(const std::string& file) {
  fs::path p = fs::path(file).parent_path();
  if (p.empty()) p = ".";
  return ensure_dir(p.string());
}

// Writes effective_config.json and <command>.run.json into `dir`.
void write_echo(const fs::path& dir, const std::string& command,
                const RunConfig& config, const nlohmann::ordered_json& flags) {
  write_file((dir / "effective_config.json").string(), run_config_json(config));
  nlohmann::ordered_json run;
  run["format_version"] = 1;
  run["command"] = command;
  run["flags"] = flags;
  write_file((dir / (command + ".run.json")).string(), run.dump(2) + "\n");
}

RunConfig config_from(const std::string& path) {
  return path.empty() ? RunConfig{} : load_config(path);
}

std::string pose_header() { return "rho,qw,qx,qy,qz,tx,ty,tz"; }

std::string pose_fields(const RigidSimilarity& p) {
  std::string s = format_double(p.rho);
  for (double v : {p.rotation.w(), p.rotation.x(), p.rotation.y(), p.rotation.z(),
                   p.translation.x(), p.translation.y(), p.translation.z()}) {
    s += ',' + format_double(v);
  }
  return s;
}

std::string embedding_header(int k) {
  std::string s;
  for (int i = 0; i < k; ++i) s += ",s" + std::to_string(i);
  return s;
}

std::string embedding_fields(const ShapeEmbedding& e) {
  std::string s;
  for (Eigen::Index i = 0; i < e.size(); ++i) s += ',' + format_double(e(i));
  return s;
}

void check_landmarks(const std::vector<LandmarkFrame>& frames, const ShapeModel& model) {
  if (frames.empty()) throw FormatError(FormatError::Kind::kTruncated, 0, "landmark file has no frames");
  if (frames.front().points.cols() != model.n_landmarks()) {
    throw FormatError(FormatError::Kind::kInconsistent, 0,
                      "landmark count " + std::to_string(frames.front().points.cols()) +
                          " does not match the model (" +
                          std::to_string(model.n_landmarks()) + ")");
  }
}

double landmark_rmse(const std::vector<Points3>& a, const std::vector<Points3>& b) {
  double sum = 0.0;
  Eigen::Index n = 0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    sum += (a[t] - b[t]).squaredNorm();
    n += a[t].cols();
  }
  return n == 0 ? 0.0 : std::sqrt(sum / static_cast<double>(n));
}

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> out;
  for (std::string_view f : split(text, ',')) {
    double v = 0.0;
    if (!parse_double(f, v)) throw UsageError(std::string("bad value in ") + what + ": '" + std::string(f) + "'");
    out.push_back(v);
  }
  return out;
}

Viewport viewport_for(double scale, double ox, double oy) {
  if (!(scale > 0.0)) throw UsageError("--view-scale must be positive");
  return Viewport{scale, ox, oy};
}

Eigen::Matrix2Xd surface_uv(const ShapeModel& model) {
  return model.mean_points().topRows(2);
}

// gen-model -------------------------------------------------------------------

struct GenModelArgs {
  int n = 400, k = 10, j = 68;
  std::uint64_t seed = 7;
  std::string out;
};

int cmd_gen_model(const GenModelArgs& a, std::ostream& out) {
  SyntheticModel synth;
  try {
    synth = generate_synthetic_model(a.n, a.k, a.j, a.seed);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  write_shape_model(synth.model, a.out);
  write_echo(parent_dir(a.out), "gen-model", RunConfig{},
             {{"n", a.n}, {"k", a.k}, {"j", a.j}, {"seed", a.seed}, {"out", a.out}});
  out << "wrote model: " << a.n << " vertices, K=" << a.k << ", J=" << a.j << " -> "
      << a.out << '\n';
  return kExitOk;
}

// gen-sequence ----------------------------------------------------------------

struct GenSequenceArgs {
  std::string model, out;
  SequenceSpec spec;
  bool render = false;
  int size = 256;
  double view_scale = 160.0, view_x = 48.0, view_y = 48.0;
};

int cmd_gen_sequence(const GenSequenceArgs& a, std::ostream& out) {
  try {
    a.spec.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const Viewport vp = viewport_for(a.view_scale, a.view_x, a.view_y);
  const ShapeModel model = read_shape_model(a.model);
  const SyntheticModel synth{model, EmbeddingSampler(model.eigenvalues)};
  const SyntheticSequence seq = generate_sequence(synth, a.spec);
  const fs::path dir = ensure_dir(a.out);

  std::vector<LandmarkFrame> obs, truth;
  std::string poses = std::string(kCsvMagic) + "\nt," + pose_header() +
                      embedding_header(model.k()) + '\n';
  for (int t = 0; t < a.spec.frames; ++t) {
    obs.push_back({t, seq.observed[t]});
    truth.push_back({t, seq.truth[t]});
    poses += std::to_string(t) + ',' + pose_fields(seq.pose[t]) +
             embedding_fields(seq.s[t]) + '\n';
  }
  write_landmark_sequence(obs, (dir / "landmarks.csv").string());
  write_landmark_sequence(truth, (dir / "truth_landmarks.csv").string());
  write_file((dir / "truth_poses.csv").string(), poses);

  if (a.render) {
    const Eigen::Matrix2Xd uv = surface_uv(model);
    for (int t = 0; t < a.spec.frames; ++t) {
      const Points3 frontal = decode_points(model, seq.s[t]);
      const Points3 observed = apply_similarity(invert_similarity(seq.pose[t]), frontal);
      char name[32];
      std::snprintf(name, sizeof name, "frame_%04d.ppm", t);
      const PixelImage img = render_textured_mesh(vp.to_pixel(observed), model.triangles,
                                                  uv, smooth_texture, a.size, a.size);
      write_ppm(img, (dir / name).string());
      std::snprintf(name, sizeof name, "frontal_%04d.ppm", t);
      write_ppm(render_textured_mesh(vp.to_pixel(frontal), model.triangles, uv,
                                     smooth_texture, a.size, a.size),
                (dir / name).string());
    }
  }
  write_echo(dir, "gen-sequence", RunConfig{},
             {{"model", a.model},
              {"frames", a.spec.frames},
              {"drift", a.spec.drift},
              {"noise", a.spec.noise},
              {"outliers", a.spec.outlier_fraction},
              {"seed", a.spec.seed},
              {"render", a.render},
              {"size", a.size},
              {"view_scale", a.view_scale},
              {"view_offset", {a.view_x, a.view_y}}});
  out << "wrote " << a.spec.frames << " frames -> " << dir.string() << '\n';
  return kExitOk;
}

// fit -------------------------------------------------------------------------

struct FitArgs {
  std::string model, landmarks, config, out;
  int threads = 1;
};

int cmd_fit(const FitArgs& a, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = config_from(a.config);
  const ShapeModel model = read_shape_model(a.model);
  const auto frames = read_landmark_sequence(a.landmarks);
  check_landmarks(frames, model);
  const LandmarkModel lm = LandmarkModel::from_shape_model(model);

  std::vector<std::optional<FitResult>> results(frames.size());
  std::vector<std::string> errors(frames.size());
  parallel_for(frames.size(), a.threads, [&](std::size_t i) {
    try {
      results[i] = rff_fit(frames[i].points, lm, cfg.fit);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });

  const fs::path dir = ensure_dir(a.out);
  std::string fit = std::string(kCsvMagic) + "\nt,converged,iterations,objective," +
                    pose_header() + embedding_header(model.k()) + '\n';
  std::string weights = std::string(kCsvMagic) + "\nt,j,weight\n";
  std::vector<LandmarkFrame> frontal;
  int failures = 0;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const int t = frames[i].t;
    if (!results[i]) {
      ++failures;
      err << "frame " << t << ": " << errors[i] << '\n';
      continue;
    }
    const FitResult& r = *results[i];
    fit += std::to_string(t) + ',' + (r.converged ? "1" : "0") + ',' +
           std::to_string(r.iterations) + ',' + format_double(r.objective) + ',' +
           pose_fields(r.state.pose) + embedding_fields(r.state.s) + '\n';
    for (Eigen::Index j = 0; j < r.state.weights.size(); ++j) {
      weights += std::to_string(t) + ',' + std::to_string(j) + ',' +
                 format_double(r.state.weights(j)) + '\n';
    }
    frontal.push_back({t, r.frontalized});
    out << "frame " << t << ": rho=" << format_double(r.state.pose.rho)
        << " iterations=" << r.iterations << " converged=" << (r.converged ? 1 : 0)
        << '\n';
  }
  write_file((dir / "fit.csv").string(), fit);
  write_file((dir / "weights.csv").string(), weights);
  write_landmark_sequence(frontal, (dir / "frontalized.csv").string());
  write_echo(dir, "fit", cfg,
             {{"model", a.model}, {"landmarks", a.landmarks}, {"config", a.config}});
  out << "fit " << frames.size() - failures << "/" << frames.size() << " frames\n";
  return failures > 0 ? kExitFailure : kExitOk;
}

// track -----------------------------------------------------------------------

struct TrackArgs {
  std::string model, landmarks, config, out, truth;
  int threads = 1;
};

int cmd_track(const TrackArgs& a, std::ostream& out) {
  const RunConfig cfg = config_from(a.config);
  const ShapeModel model = read_shape_model(a.model);
  const auto frames = read_landmark_sequence(a.landmarks);
  check_landmarks(frames, model);
  const LandmarkModel lm = LandmarkModel::from_shape_model(model);

  std::vector<Points3> x;
  for (const auto& f : frames) x.push_back(f.points);
  const DffResult r = dff_track(x, lm, cfg.dff_config());

  const fs::path dir = ensure_dir(a.out);
  std::string track = std::string(kCsvMagic) + "\nt,log_likelihood,converged,iterations," +
                      pose_header() + embedding_header(model.k()) + '\n';
  std::vector<LandmarkFrame> filtered, frontal;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const DffFrame& f = r.frames[i];
    const int t = frames[i].t;
    track += std::to_string(t) + ',' + format_double(f.log_likelihood) + ',' +
             (f.converged ? "1" : "0") + ',' + std::to_string(f.iterations) + ',' +
             pose_fields(f.pose) + embedding_fields(f.s) + '\n';
    filtered.push_back({t, f.v});
    frontal.push_back({t, f.frontalized});
  }
  write_file((dir / "track.csv").string(), track);
  write_landmark_sequence(filtered, (dir / "filtered.csv").string());
  write_landmark_sequence(frontal, (dir / "frontalized.csv").string());
  write_echo(dir, "track", cfg,
             {{"model", a.model}, {"landmarks", a.landmarks}, {"config", a.config},
              {"truth", a.truth}});
  out << "tracked " << frames.size() << " frames\n";

  if (!a.truth.empty()) {
    const auto truth = read_landmark_sequence(a.truth);
    if (truth.size() != frames.size()) {
      throw FormatError(FormatError::Kind::kInconsistent, 0, "truth has a different frame count");
    }
    std::vector<Points3> gt, dff, rff(frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i) {
      gt.push_back(truth[i].points);
      dff.push_back(r.frames[i].v);
    }
    parallel_for(frames.size(), a.threads, [&](std::size_t i) {
      rff[i] = rff_fit(x[i], lm, cfg.fit).frontalized;
    });
    out << "landmark rmse: filtered " << format_double(landmark_rmse(dff, gt))
        << " per-frame " << format_double(landmark_rmse(rff, gt)) << '\n';
  }
  return kExitOk;
}

// frontalize ------------------------------------------------------------------

struct FrontalizeArgs {
  std::string model, landmarks, image, config, out_image, out_depth, out_mask;
  int frame = -1;
  double view_scale = 160.0, view_x = 48.0, view_y = 48.0;
};

int cmd_frontalize(const FrontalizeArgs& a, std::ostream& out) {
  const Viewport vp = viewport_for(a.view_scale, a.view_x, a.view_y);
  const RunConfig cfg = config_from(a.config);
  const ShapeModel model = read_shape_model(a.model);
  const auto frames = read_landmark_sequence(a.landmarks);
  check_landmarks(frames, model);
  const PixelImage image = read_ppm(a.image);

  const LandmarkFrame* frame = &frames.front();
  if (a.frame >= 0) {
    frame = nullptr;
    for (const auto& f : frames) {
      if (f.t == a.frame) frame = &f;
    }
    if (!frame) {
      throw FormatError(FormatError::Kind::kInconsistent, 0,
                        "no landmarks for image frame " + std::to_string(a.frame));
    }
  }
  const FitResult fit = rff_fit(frame->points, model, cfg.fit);
  const Points3 mesh = decode_points(model, fit.state.s);
  const Frontalization f = frontalize_image(image, mesh, model.triangles, fit.state.pose,
                                            vp, image.width, image.height);
  write_preview_ppm(f.image, a.out_image);
  write_depth_csv(f.depth, a.out_depth);
  const std::string mask = a.out_mask.empty() ? a.out_image + ".mask.pgm" : a.out_mask;
  write_mask_pgm(f.image, mask);
  write_echo(parent_dir(a.out_image), "frontalize", cfg,
             {{"model", a.model}, {"landmarks", a.landmarks}, {"image", a.image},
              {"config", a.config}, {"frame", frame->t}, {"out_image", a.out_image},
              {"out_depth", a.out_depth}, {"out_mask", mask},
              {"view_scale", a.view_scale}, {"view_offset", {a.view_x, a.view_y}}});
  out << "frontalized frame " << frame->t << ": " << f.image.covered_count()
      << " covered pixels, " << f.depth.valid_count() << " mesh pixels\n";
  return kExitOk;
}

// zncc ------------------------------------------------------------------------

struct ZnccArgs {
  std::vector<std::string> a, b;
  std::vector<std::string> mask_a, mask_b;
  std::string center, region, config, csv;
  int shift = -1;
};

void apply_mask(PixelImage& img, const std::string& path) {
  const PixelImage m = read_ppm(path);
  if (m.width != img.width || m.height != img.height || m.channels != 1) {
    throw FormatError(FormatError::Kind::kInconsistent, 0, "mask does not match image: " + path);
  }
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (m.at(x, y) == 0) img.set_empty(x, y, true);
    }
  }
}

int cmd_zncc(const ZnccArgs& a, std::ostream& out) {
  RunConfig cfg = config_from(a.config);
  ZnccConfig zc = cfg.zncc;
  const auto c = parse_list(a.center, "--center");
  if (c.size() != 2) throw UsageError("--center expects h,v");
  if (!a.region.empty()) {
    const auto r = parse_list(a.region, "--region");
    if (r.size() == 1) {
      zc.region_width = zc.region_height = static_cast<int>(r[0]);
    } else if (r.size() == 2) {
      zc.region_width = static_cast<int>(r[0]);
      zc.region_height = static_cast<int>(r[1]);
    } else {
      throw UsageError("--region expects W or W,H");
    }
  }
  if (a.shift >= 0) zc.max_shift = a.shift;
  try {
    zc.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (a.a.size() != a.b.size()) throw UsageError("--a and --b need the same number of images");
  if ((!a.mask_a.empty() && a.mask_a.size() != a.a.size()) ||
      (!a.mask_b.empty() && a.mask_b.size() != a.b.size())) {
    throw UsageError("one mask per image required");
  }
  const int h = static_cast<int>(c[0]);
  const int v = static_cast<int>(c[1]);

  const bool csv_mode = a.a.size() > 1 || !a.csv.empty();
  std::string csv = std::string(kCsvMagic) + "\nframe,score,raw,shift_h,shift_v\n";
  for (std::size_t i = 0; i < a.a.size(); ++i) {
    PixelImage ia = read_ppm(a.a[i]);
    PixelImage ib = read_ppm(a.b[i]);
    if (!a.mask_a.empty()) apply_mask(ia, a.mask_a[i]);
    if (!a.mask_b.empty()) apply_mask(ib, a.mask_b[i]);
    ZnccResult r;
    try {
      r = zncc_score(ia, ib, h, v, zc);
    } catch (const std::out_of_range& e) {
      throw UsageError(e.what());
    }
    if (csv_mode) {
      csv += std::to_string(i) + ',' + format_double(r.score) + ',' + format_double(r.raw) +
             ',' + std::to_string(r.shift_h) + ',' + std::to_string(r.shift_v) + '\n';
    } else {
      out << "score " << format_double(r.score) << "\nraw " << format_double(r.raw)
          << "\nshift " << r.shift_h << ' ' << r.shift_v << '\n';
    }
  }
  if (csv_mode) {
    if (a.csv.empty() || a.csv == "-") {
      out << csv;
    } else {
      write_file(a.csv, csv);
    }
  }
  return kExitOk;
}

// bench -----------------------------------------------------------------------

struct BenchArgs {
  int trials = 500;
  std::string fractions = "0,0.1,0.2,0.3,0.4,0.5,0.6";
  std::string estimators = "horn,gen_horn,gum_em,gstudent";
  std::uint64_t seed = 1;
  std::string out, config;
  int threads = 1;
};

int cmd_bench(const BenchArgs& a, std::ostream& out) {
  const RunConfig cfg = config_from(a.config);
  BenchSpec spec;
  spec.trial.n_trials = a.trials;
  spec.trial.seed = a.seed;
  spec.fractions = parse_list(a.fractions, "--fractions");
  spec.estimators.clear();
  for (std::string_view name : split(a.estimators, ',')) {
    try {
      spec.estimators.push_back(parse_estimator(std::string(name)));
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  spec.fit = cfg.fit;
  spec.threads = a.threads;
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const BenchReport report = run_benchmark(spec);
  const fs::path dir = ensure_dir(a.out);
  write_report(report, (dir / "report.csv").string());
  write_file((dir / "metadata.json").string(), report_metadata_json(spec));
  write_echo(dir, "bench", cfg,
             {{"trials", a.trials}, {"fractions", spec.fractions},
              {"estimators", a.estimators}, {"seed", a.seed}, {"config", a.config}});
  out << report_csv(report);
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Robust shape-model fitting, tracking and frontal view synthesis", "morphfit"};
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads, "Worker threads (never changes results)")
      ->check(CLI::PositiveNumber);

  GenModelArgs gm;
  auto* gen_model = app.add_subcommand("gen-model", "Write a synthetic shape model");
  gen_model->add_option("--n", gm.n, "Vertices");
  gen_model->add_option("--k", gm.k, "Deformation modes");
  gen_model->add_option("--j", gm.j, "Landmarks");
  gen_model->add_option("--seed", gm.seed);
  gen_model->add_option("--out", gm.out, "Model JSON path")->required();

  GenSequenceArgs gs;
  auto* gen_seq = app.add_subcommand("gen-sequence", "Simulate a landmark sequence");
  gen_seq->add_option("--model", gs.model)->required();
  gen_seq->add_option("--frames", gs.spec.frames);
  gen_seq->add_option("--drift", gs.spec.drift);
  gen_seq->add_option("--noise", gs.spec.noise);
  gen_seq->add_option("--outliers", gs.spec.outlier_fraction, "Outlier fraction per frame");
  gen_seq->add_option("--seed", gs.spec.seed);
  gen_seq->add_flag("--render", gs.render, "Also render observed and frontal images");
  gen_seq->add_option("--size", gs.size, "Rendered image size in pixels");
  gen_seq->add_option("--view-scale", gs.view_scale);
  gen_seq->add_option("--view-offset-x", gs.view_x);
  gen_seq->add_option("--view-offset-y", gs.view_y);
  gen_seq->add_option("--out", gs.out, "Output directory")->required();

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "Robust per-frame fit");
  fit->add_option("--model", fa.model)->required();
  fit->add_option("--landmarks", fa.landmarks)->required();
  fit->add_option("--config", fa.config);
  fit->add_option("--out", fa.out, "Output directory")->required();

  TrackArgs ta;
  auto* track = app.add_subcommand("track", "Dynamic fit with the shape/vertex filter");
  track->add_option("--model", ta.model)->required();
  track->add_option("--landmarks", ta.landmarks)->required();
  track->add_option("--config", ta.config);
  track->add_option("--truth", ta.truth, "Ground-truth frontal landmarks for an RMSE comparison");
  track->add_option("--out", ta.out, "Output directory")->required();

  FrontalizeArgs fr;
  auto* front = app.add_subcommand("frontalize", "Synthesize a frontal image");
  front->add_option("--model", fr.model)->required();
  front->add_option("--landmarks", fr.landmarks)->required();
  front->add_option("--image", fr.image)->required();
  front->add_option("--config", fr.config);
  front->add_option("--frame", fr.frame, "Landmark frame index (default: first)");
  front->add_option("--out-image", fr.out_image)->required();
  front->add_option("--out-depth", fr.out_depth)->required();
  front->add_option("--out-mask", fr.out_mask);
  front->add_option("--view-scale", fr.view_scale);
  front->add_option("--view-offset-x", fr.view_x);
  front->add_option("--view-offset-y", fr.view_y);

  ZnccArgs za;
  auto* zncc = app.add_subcommand("zncc", "Region similarity between images");
  zncc->add_option("--a", za.a, "Frontal image(s)")->required();
  zncc->add_option("--b", za.b, "Target image(s)")->required();
  zncc->add_option("--mask-a", za.mask_a);
  zncc->add_option("--mask-b", za.mask_b);
  zncc->add_option("--center", za.center, "h,v")->required();
  zncc->add_option("--region", za.region, "W or W,H");
  zncc->add_option("--shift", za.shift, "Maximum shift");
  zncc->add_option("--config", za.config);
  zncc->add_option("--csv", za.csv, "CSV output path ('-' for stdout)");

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "Outlier robustness benchmark");
  bench->add_option("--trials", ba.trials);
  bench->add_option("--fractions", ba.fractions, "Comma-separated outlier fractions");
  bench->add_option("--estimators", ba.estimators, "Comma-separated subset of horn,gen_horn,gum_em,gstudent");
  bench->add_option("--seed", ba.seed);
  bench->add_option("--config", ba.config);
  bench->add_option("--out", ba.out, "Output directory")->required();

  for (CLI::App* sub : {gen_model, gen_seq, fit, track, front, zncc, bench}) {
    sub->add_option("--threads", threads, "Worker threads (never changes results)")
        ->check(CLI::PositiveNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen_model->parsed()) return cmd_gen_model(gm, out);
    if (gen_seq->parsed()) return cmd_gen_sequence(gs, out);
    if (fit->parsed()) {
      fa.threads = threads;
      return cmd_fit(fa, out, err);
    }
    if (track->parsed()) {
      ta.threads = threads;
      return cmd_track(ta, out);
    }
    if (front->parsed()) return cmd_frontalize(fr, out);
    if (zncc->parsed()) return cmd_zncc(za, out);
    if (bench->parsed()) {
      ba.threads = threads;
      return cmd_bench(ba, out);
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  argv.push_back("morphfit");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace morphfit
