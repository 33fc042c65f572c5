#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "morphfit/geometry.hpp"

namespace morphfit {

using Triangle = std::array<int, 3>;
/// Shape coefficients s in the PCA basis (length K).
using ShapeEmbedding = Eigen::VectorXd;

/// Eigenvalues below this fraction of the largest are treated as zero and
/// dropped from the validity ellipsoid and the shape regularizer.
inline constexpr double kEigenvalueCutoff = 1e-12;

/// Linear PCA shape model over N vertices: V = U s + mean.
///
/// `basis` is 3N x K with orthonormal columns, stored vertex-major
/// (rows 3n..3n+2 are vertex n). `landmark_map` selects the J vertices that
/// carry observed landmarks, in landmark order.
struct ShapeModel {
  Eigen::MatrixXd basis;
  Eigen::VectorXd mean;
  Eigen::VectorXd eigenvalues;
  std::vector<Triangle> triangles;
  std::vector<int> landmark_map;

  int n_vertices() const { return static_cast<int>(mean.size() / 3); }
  int k() const { return static_cast<int>(basis.cols()); }
  int n_landmarks() const { return static_cast<int>(landmark_map.size()); }

  /// Throws std::invalid_argument when any structural invariant fails:
  /// sizes, U^T U = I within `ortho_tol`, eigenvalue order, triangle and
  /// landmark indices.
  void validate(double ortho_tol = 1e-8) const;

  /// Stacked U_j rows of the landmark vertices, 3J x K.
  Eigen::MatrixXd landmark_basis() const;
  /// Stacked mean rows of the landmark vertices, length 3J.
  Eigen::VectorXd landmark_mean() const;
  /// Mean shape as a 3 x N point matrix.
  Points3 mean_points() const;
};

/// Identity and expression models over the same mesh; a face decodes as
/// U^I s^I + M^I + U^E s^E + M^E.
struct CompositeModel {
  ShapeModel identity;
  ShapeModel expression;

  void validate() const;
};

struct EmbeddingValidity {
  bool valid = true;
  /// s^T Lambda^-1 s over the retained (non-zero eigenvalue) dimensions.
  double margin = 0.0;
};

/// PCA of registered meshes (each of length 3N) with the 1/M covariance.
/// Requires M >= 2 and 1 <= K <= min(3N, M - 1).
ShapeModel train_pca(const std::vector<Eigen::VectorXd>& meshes, int k,
                     std::vector<Triangle> triangles = {},
                     std::vector<int> landmark_map = {});

ShapeEmbedding encode(const ShapeModel& model, const Eigen::VectorXd& vertices);
Eigen::VectorXd decode_full(const ShapeModel& model, const ShapeEmbedding& s);
/// Throws std::out_of_range for a bad vertex index.
Vec3 decode_vertex(const ShapeModel& model, const ShapeEmbedding& s, int n);
/// Decoded full mesh as a 3 x N point matrix.
Points3 decode_points(const ShapeModel& model, const ShapeEmbedding& s);
EmbeddingValidity embedding_validity(const ShapeModel& model,
                                     const ShapeEmbedding& s);

Eigen::VectorXd decode_composite(const CompositeModel& composite,
                                 const ShapeEmbedding& s_identity,
                                 const ShapeEmbedding& s_expression);
/// Expression-only model whose mean absorbs the identity fixed at
/// `s_identity`: U = U^E, mean = U^I s^I + M^I + M^E.
ShapeModel freeze_identity(const CompositeModel& composite,
                           const ShapeEmbedding& s_identity);

/// Draws embeddings uniformly from the validity ellipsoid
/// s^T Lambda^-1 s <= `radius`^2 (radius <= 1 keeps every draw valid).
class EmbeddingSampler {
 public:
  EmbeddingSampler() = default;
  explicit EmbeddingSampler(Eigen::VectorXd eigenvalues, double radius = 1.0);

  ShapeEmbedding operator()(std::mt19937_64& rng) const;

 private:
  Eigen::VectorXd half_axes_;
  double radius_ = 1.0;
};

struct SyntheticModel {
  ShapeModel model;
  EmbeddingSampler sampler;
};

/// Deterministic synthetic face-like model: a dome height field on a grid in
/// [0,1]^2 (z toward the camera is negative), K smooth orthonormal
/// deformation modes with geometrically decaying eigenvalues, and J distinct
/// landmark vertices. Throws std::invalid_argument when K >= 3N, J > N,
/// N < 4, or K < 1.
SyntheticModel generate_synthetic_model(int n_vertices, int k, int n_landmarks,
                                        std::uint64_t seed);

/// Grid dimensions (columns, rows) used by the synthetic surface for N vertices.
std::pair<int, int> synthetic_grid_shape(int n_vertices);

}  // namespace morphfit
