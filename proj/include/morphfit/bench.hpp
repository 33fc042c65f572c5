#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "morphfit/geometry.hpp"
#include "morphfit/metrics.hpp"
#include "morphfit/robust_fit.hpp"
#include "morphfit/shape_model.hpp"

namespace morphfit {

enum class Estimator { kGenHorn, kGStudent, kGumEm, kHorn };

/// "gen_horn", "gstudent", "gum_em", "horn".
std::string estimator_name(Estimator e);
/// Throws std::invalid_argument for an unknown name.
Estimator parse_estimator(const std::string& name);
/// All four, in alphabetical order of their names.
std::vector<Estimator> all_estimators();

/// One simulated registration problem family.
struct TrialSpec {
  std::uint64_t seed = 1;
  int n_landmarks = 68;
  /// Total variance (trace of the covariance) of the inlier noise.
  double inlier_variance = 0.0025;
  /// Volume of the cube outliers are drawn from.
  double outlier_volume = 1.5 * 1.5 * 1.5;
  double outlier_fraction = 0.0;
  int n_trials = 500;

  void validate() const;
};

struct Trial {
  /// Source landmarks in [0, 1]^3.
  Points3 x;
  /// Target: truth(x) plus noise, with outliers replaced.
  Points3 y;
  RigidSimilarity truth;
  /// True for inliers.
  std::vector<bool> inlier;
  /// Noise eigenvariances (summing to the inlier variance).
  Vec3 noise_variances = Vec3::Zero();
};

/// Deterministic in (spec.seed, index). The transform, source points and
/// noise draws do not depend on the outlier fraction, so trials with the
/// same index are paired across fractions.
Trial generate_trial(const TrialSpec& spec, int index);

/// Pose mapping trial.x onto trial.y. Throws whatever the estimator throws.
RigidSimilarity estimate_pose(Estimator e, const Trial& trial,
                              const TrialSpec& spec,
                              const FitConfig& config = {});

struct BenchSpec {
  TrialSpec trial;
  std::vector<double> fractions = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  std::vector<Estimator> estimators = all_estimators();
  FitConfig fit;
  /// Wall time only; results never depend on it.
  int threads = 1;

  void validate() const;
};

struct BenchRow {
  Estimator estimator = Estimator::kHorn;
  double outlier_fraction = 0.0;
  RigidError rmse;
  int n_ok = 0;
  int n_failed = 0;
};

struct BenchReport {
  /// Sorted by estimator name, then fraction.
  std::vector<BenchRow> rows;

  const BenchRow* find(Estimator e, double fraction) const;
};

BenchReport run_benchmark(const BenchSpec& spec);

/// CSV: a `# morphfit-v1` line, the header
/// `estimator,outlier_frac,rmse_rot,rmse_scale,rmse_trans,n_ok`, then one row
/// per entry in report order.
void write_report(const BenchReport& report, const std::string& path);
std::string report_csv(const BenchReport& report);
/// Parses report_csv output. Throws FormatError.
BenchReport read_report(const std::string& path);
BenchReport parse_report_csv(const std::string& text);

/// JSON metadata: the trial settings and the simulation conventions.
std::string report_metadata_json(const BenchSpec& spec);

/// Synthetic landmark video: a random-walk shape embedding seen under a
/// slowly varying pose, with isotropic noise added in the observed frame.
struct SequenceSpec {
  int frames = 60;
  /// Per-frame embedding step, in units of the per-mode standard deviation.
  double drift = 0.01;
  double noise = 0.01;
  double outlier_fraction = 0.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SyntheticSequence {
  std::vector<Points3> observed;
  /// Noise-free frontal landmarks V_t.
  std::vector<Points3> truth;
  std::vector<ShapeEmbedding> s;
  /// Maps observed to frontal coordinates.
  std::vector<RigidSimilarity> pose;
};

SyntheticSequence generate_sequence(const SyntheticModel& synth,
                                    const SequenceSpec& spec);

}  // namespace morphfit
