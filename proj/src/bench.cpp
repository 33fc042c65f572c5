#include "morphfit/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "morphfit/errors.hpp"
#include "morphfit/format.hpp"

namespace morphfit {

namespace {

constexpr const char* kMagic = "# morphfit-v1";
constexpr const char* kHeader =
    "estimator,outlier_frac,rmse_rot,rmse_scale,rmse_trans,n_ok";

}  // namespace

std::string estimator_name(Estimator e) {
  switch (e) {
    case Estimator::kGenHorn: return "gen_horn";
    case Estimator::kGStudent: return "gstudent";
    case Estimator::kGumEm: return "gum_em";
    case Estimator::kHorn: return "horn";
  }
  throw std::invalid_argument("unknown estimator");
}

Estimator parse_estimator(const std::string& name) {
  for (Estimator e : all_estimators()) {
    if (estimator_name(e) == name) return e;
  }
  throw std::invalid_argument("unknown estimator '" + name +
                              "' (expected horn, gen_horn, gum_em, gstudent)");
}

std::vector<Estimator> all_estimators() {
  return {Estimator::kGenHorn, Estimator::kGStudent, Estimator::kGumEm,
          Estimator::kHorn};
}

void TrialSpec::validate() const {
  if (n_landmarks < 4) throw std::invalid_argument("n_landmarks must be >= 4");
  if (!(inlier_variance >= 0.0) || !std::isfinite(inlier_variance)) {
    throw std::invalid_argument("inlier_variance must be >= 0");
  }
  if (!(outlier_volume > 0.0) || !std::isfinite(outlier_volume)) {
    throw std::invalid_argument("outlier_volume must be positive");
  }
  if (!(outlier_fraction >= 0.0 && outlier_fraction <= 1.0)) {
    throw std::invalid_argument("outlier_fraction must lie in [0, 1]");
  }
  if (n_trials < 0) throw std::invalid_argument("n_trials must be >= 0");
}

Trial generate_trial(const TrialSpec& spec, int index) {
  spec.validate();
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed),
                    static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(index)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::gamma_distribution<double> gamma1(1.0, 1.0);
  const int j = spec.n_landmarks;

  Trial t;
  // Rotation uniform on SO(3) from a normalized 4D Gaussian.
  double q[4];
  do {
    for (double& c : q) c = gauss(rng);
  } while (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3] < 1e-12);
  t.truth.rotation = UnitQuaternion(q[0], q[1], q[2], q[3]);
  t.truth.rho = std::exp(std::log(0.5) + unit(rng) * std::log(4.0));
  for (int i = 0; i < 3; ++i) t.truth.translation(i) = unit(rng) - 0.5;

  t.x.resize(3, j);
  for (int c = 0; c < j; ++c) {
    for (int i = 0; i < 3; ++i) t.x(i, c) = unit(rng);
  }

  // Anisotropic noise: Dirichlet(1,1,1) split of the total variance along a
  // random orthonormal frame.
  Vec3 g(gamma1(rng), gamma1(rng), gamma1(rng));
  t.noise_variances = spec.inlier_variance * g / g.sum();
  double qn[4];
  do {
    for (double& c : qn) c = gauss(rng);
  } while (qn[0] * qn[0] + qn[1] * qn[1] + qn[2] * qn[2] + qn[3] * qn[3] < 1e-12);
  const Mat3 frame = UnitQuaternion(qn[0], qn[1], qn[2], qn[3]).matrix();
  const Mat3 noise_sqrt = frame * t.noise_variances.cwiseSqrt().asDiagonal();

  t.y = apply_similarity(t.truth, t.x);
  for (int c = 0; c < j; ++c) {
    const Vec3 z(gauss(rng), gauss(rng), gauss(rng));
    t.y.col(c) += noise_sqrt * z;
  }

  const Vec3 centre = t.y.rowwise().mean();
  const double side = std::cbrt(spec.outlier_volume);
  Points3 uniform(3, j);
  for (int c = 0; c < j; ++c) {
    for (int i = 0; i < 3; ++i) uniform(i, c) = centre(i) + side * (unit(rng) - 0.5);
  }
  std::vector<int> order(j);
  std::iota(order.begin(), order.end(), 0);
  for (int i = j - 1; i > 0; --i) {
    const int k = static_cast<int>(unit(rng) * (i + 1));
    std::swap(order[i], order[std::min(k, i)]);
  }
  const int n_out = static_cast<int>(std::lround(spec.outlier_fraction * j));
  t.inlier.assign(j, true);
  for (int i = 0; i < n_out; ++i) {
    t.inlier[order[i]] = false;
    t.y.col(order[i]) = uniform.col(order[i]);
  }
  return t;
}

RigidSimilarity estimate_pose(Estimator e, const Trial& trial,
                              const TrialSpec& spec, const FitConfig& config) {
  switch (e) {
    case Estimator::kHorn:
      return horn_absolute_orientation(trial.x, trial.y);
    case Estimator::kGenHorn:
      return gen_horn_fit(trial.x, trial.y, config).state.pose;
    case Estimator::kGumEm: {
      GumOptions opts;
      opts.volume = spec.outlier_volume;
      return gum_em_fit(trial.x, trial.y, config, opts).state.pose;
    }
    case Estimator::kGStudent:
      return rff_fit(trial.x, LandmarkModel::rigid(trial.y), config).state.pose;
  }
  throw std::invalid_argument("unknown estimator");
}

void BenchSpec::validate() const {
  TrialSpec t = trial;
  for (double f : fractions) {
    t.outlier_fraction = f;
    t.validate();
  }
  if (estimators.empty()) throw std::invalid_argument("no estimators selected");
  if (threads < 1) throw std::invalid_argument("threads must be >= 1");
  fit.validate();
}

const BenchRow* BenchReport::find(Estimator e, double fraction) const {
  for (const BenchRow& r : rows) {
    if (r.estimator == e && r.outlier_fraction == fraction) return &r;
  }
  return nullptr;
}

BenchReport run_benchmark(const BenchSpec& spec) {
  spec.validate();
  std::vector<Estimator> estimators = spec.estimators;
  std::sort(estimators.begin(), estimators.end(), [](Estimator a, Estimator b) {
    return estimator_name(a) < estimator_name(b);
  });
  estimators.erase(std::unique(estimators.begin(), estimators.end()),
                   estimators.end());
  std::vector<double> fractions = spec.fractions;
  std::sort(fractions.begin(), fractions.end());
  fractions.erase(std::unique(fractions.begin(), fractions.end()), fractions.end());

  const int n_trials = spec.trial.n_trials;
  const std::size_t n_est = estimators.size();
  const std::size_t n_jobs = fractions.size() * static_cast<std::size_t>(n_trials);

  struct Outcome {
    RigidError error;
    bool ok = false;
  };
  // Indexed by (fraction, trial, estimator) so the reduction order is fixed.
  std::vector<Outcome> outcomes(n_jobs * n_est);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t job = next++; job < n_jobs; job = next++) {
      TrialSpec ts = spec.trial;
      ts.outlier_fraction = fractions[job / n_trials];
      const Trial trial = generate_trial(ts, static_cast<int>(job % n_trials));
      for (std::size_t e = 0; e < n_est; ++e) {
        Outcome& out = outcomes[job * n_est + e];
        try {
          const RigidSimilarity est = estimate_pose(estimators[e], trial, ts, spec.fit);
          out.error = rigid_error(est, trial.truth);
          out.ok = std::isfinite(out.error.rotation) &&
                   std::isfinite(out.error.scale) &&
                   std::isfinite(out.error.translation);
        } catch (const std::exception&) {
          out.ok = false;
        }
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(spec.threads, static_cast<int>(n_jobs)));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  BenchReport report;
  for (std::size_t e = 0; e < n_est; ++e) {
    for (std::size_t f = 0; f < fractions.size(); ++f) {
      BenchRow row;
      row.estimator = estimators[e];
      row.outlier_fraction = fractions[f];
      double sr = 0.0, ss = 0.0, st = 0.0;
      for (int i = 0; i < n_trials; ++i) {
        const Outcome& o = outcomes[(f * n_trials + i) * n_est + e];
        if (!o.ok) {
          ++row.n_failed;
          continue;
        }
        ++row.n_ok;
        sr += o.error.rotation * o.error.rotation;
        ss += o.error.scale * o.error.scale;
        st += o.error.translation * o.error.translation;
      }
      if (row.n_ok > 0) {
        row.rmse.rotation = std::sqrt(sr / row.n_ok);
        row.rmse.scale = std::sqrt(ss / row.n_ok);
        row.rmse.translation = std::sqrt(st / row.n_ok);
      }
      report.rows.push_back(row);
    }
  }
  return report;
}

std::string report_csv(const BenchReport& report) {
  std::ostringstream os;
  os << kMagic << '\n' << kHeader << '\n';
  for (const BenchRow& r : report.rows) {
    os << estimator_name(r.estimator) << ',' << format_double(r.outlier_fraction)
       << ',' << format_double(r.rmse.rotation) << ','
       << format_double(r.rmse.scale) << ',' << format_double(r.rmse.translation)
       << ',' << r.n_ok << '\n';
  }
  return os.str();
}

void write_report(const BenchReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(FormatError::Kind::kIo, 0, "cannot open " + path);
  out << report_csv(report);
  if (!out) throw FormatError(FormatError::Kind::kIo, 0, "write failed: " + path);
}

BenchReport parse_report_csv(const std::string& text) {
  using Kind = FormatError::Kind;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  bool header = false;
  BenchReport report;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line[0] == '#') continue;
    if (!header) {
      if (line != kHeader) throw FormatError(Kind::kBadHeader, n, "bad report header");
      header = true;
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 6) throw FormatError(Kind::kInconsistent, n, "expected 6 fields");
    BenchRow row;
    try {
      row.estimator = parse_estimator(std::string(f[0]));
    } catch (const std::invalid_argument& e) {
      throw FormatError(Kind::kNonNumeric, n, e.what());
    }
    long long ok = 0;
    if (!parse_double(f[1], row.outlier_fraction) ||
        !parse_double(f[2], row.rmse.rotation) ||
        !parse_double(f[3], row.rmse.scale) ||
        !parse_double(f[4], row.rmse.translation) || !parse_int(f[5], ok)) {
      throw FormatError(Kind::kNonNumeric, n, "non-numeric report field");
    }
    row.n_ok = static_cast<int>(ok);
    report.rows.push_back(row);
  }
  if (!header) throw FormatError(Kind::kTruncated, n, "report header missing");
  return report;
}

BenchReport read_report(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::kIo, 0, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_report_csv(ss.str());
}

std::string report_metadata_json(const BenchSpec& spec) {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["seed"] = spec.trial.seed;
  j["n_trials"] = spec.trial.n_trials;
  j["n_landmarks"] = spec.trial.n_landmarks;
  j["inlier_variance"] = spec.trial.inlier_variance;
  j["outlier_volume"] = spec.trial.outlier_volume;
  j["fractions"] = spec.fractions;
  std::vector<std::string> names;
  for (Estimator e : spec.estimators) names.push_back(estimator_name(e));
  j["estimators"] = names;
  j["fit"] = {{"epsilon", spec.fit.epsilon},
              {"max_iters", spec.fit.max_iters},
              {"mu_init", spec.fit.mu_init}};
  j["conventions"] = {
      {"source_points", "uniform in [0,1]^3"},
      {"rotation", "uniform on SO(3) via normalized 4D Gaussian quaternion"},
      {"scale", "log-uniform in [0.5, 2]"},
      {"translation", "uniform in [-0.5, 0.5]^3"},
      {"inlier_noise", "Dirichlet(1,1,1) split of the total variance along a random frame"},
      {"outliers", "uniform in a cube of the given volume centred on the target centroid"},
      {"gum_em_volume", "outlier_volume"},
      {"shape_term", "disabled (rigid targets)"},
  };
  return j.dump(2) + "\n";
}

void SequenceSpec::validate() const {
  if (frames < 1) throw std::invalid_argument("sequence needs at least one frame");
  if (!(drift >= 0.0) || !(noise >= 0.0)) {
    throw std::invalid_argument("drift and noise must be >= 0");
  }
  if (!(outlier_fraction >= 0.0 && outlier_fraction <= 1.0)) {
    throw std::invalid_argument("outlier_fraction must lie in [0, 1]");
  }
}

SyntheticSequence generate_sequence(const SyntheticModel& synth,
                                    const SequenceSpec& spec) {
  spec.validate();
  const LandmarkModel model = LandmarkModel::from_shape_model(synth.model);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Eigen::VectorXd sd = synth.model.eigenvalues.cwiseSqrt();
  const int j = model.n_landmarks();
  const double phase = 2.0 * std::numbers::pi * unit(rng);

  SyntheticSequence seq;
  ShapeEmbedding s = 0.5 * synth.sampler(rng);
  for (int t = 0; t < spec.frames; ++t) {
    for (int i = 0; i < s.size(); ++i) s(i) += spec.drift * sd(i) * gauss(rng);
    const Points3 v = model.vertices(s);

    RigidSimilarity pose;
    pose.rotation = UnitQuaternion::from_rotation_vector(
        Vec3(0.2 * std::sin(0.1 * t + phase), 0.3 * std::cos(0.07 * t + phase), 0.05));
    pose.rho = 1.2;
    pose.translation = Vec3(0.1 * t / spec.frames, -0.2, 0.3);

    Points3 x = apply_similarity(invert_similarity(pose), v);
    for (int c = 0; c < j; ++c) {
      x.col(c) += spec.noise * Vec3(gauss(rng), gauss(rng), gauss(rng));
    }
    const Vec3 centre = x.rowwise().mean();
    for (int c = 0; c < j; ++c) {
      const double u = unit(rng);
      const Vec3 box(unit(rng) - 0.5, unit(rng) - 0.5, unit(rng) - 0.5);
      if (u < spec.outlier_fraction) x.col(c) = centre + box;
    }
    seq.observed.push_back(std::move(x));
    seq.truth.push_back(v);
    seq.s.push_back(s);
    seq.pose.push_back(pose);
  }
  return seq;
}

}  // namespace morphfit
