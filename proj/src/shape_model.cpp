#include "morphfit/shape_model.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>

namespace morphfit {

namespace {

double eigen_floor(const Eigen::VectorXd& eigenvalues) {
  if (eigenvalues.size() == 0) return 0.0;
  return kEigenvalueCutoff * eigenvalues.maxCoeff();
}

}  // namespace

void ShapeModel::validate(double ortho_tol) const {
  if (mean.size() == 0 || mean.size() % 3 != 0) {
    throw std::invalid_argument("shape model: mean length must be 3N > 0");
  }
  if (basis.rows() != mean.size()) {
    throw std::invalid_argument("shape model: basis rows must equal 3N");
  }
  if (eigenvalues.size() != basis.cols()) {
    throw std::invalid_argument("shape model: need one eigenvalue per mode");
  }
  if (!basis.allFinite() || !mean.allFinite() || !eigenvalues.allFinite()) {
    throw std::invalid_argument("shape model: non-finite entries");
  }
  const Eigen::MatrixXd gram = basis.transpose() * basis;
  const double err =
      (gram - Eigen::MatrixXd::Identity(k(), k())).cwiseAbs().maxCoeff();
  if (k() > 0 && err > ortho_tol) {
    throw std::invalid_argument("shape model: basis is not orthonormal (" +
                                std::to_string(err) + ")");
  }
  for (int i = 0; i < k(); ++i) {
    if (eigenvalues(i) < 0.0) {
      throw std::invalid_argument("shape model: negative eigenvalue");
    }
    if (i > 0 && eigenvalues(i) > eigenvalues(i - 1)) {
      throw std::invalid_argument("shape model: eigenvalues not non-increasing");
    }
  }
  const int n = n_vertices();
  for (const Triangle& t : triangles) {
    for (int v : t) {
      if (v < 0 || v >= n) {
        throw std::invalid_argument("shape model: triangle index out of range");
      }
    }
  }
  std::set<int> seen;
  for (int v : landmark_map) {
    if (v < 0 || v >= n) {
      throw std::invalid_argument("shape model: landmark index out of range");
    }
    if (!seen.insert(v).second) {
      throw std::invalid_argument("shape model: duplicate landmark index");
    }
  }
}

Eigen::MatrixXd ShapeModel::landmark_basis() const {
  Eigen::MatrixXd out(3 * n_landmarks(), k());
  for (int j = 0; j < n_landmarks(); ++j) {
    out.middleRows(3 * j, 3) = basis.middleRows(3 * landmark_map[j], 3);
  }
  return out;
}

Eigen::VectorXd ShapeModel::landmark_mean() const {
  Eigen::VectorXd out(3 * n_landmarks());
  for (int j = 0; j < n_landmarks(); ++j) {
    out.segment<3>(3 * j) = mean.segment<3>(3 * landmark_map[j]);
  }
  return out;
}

Points3 ShapeModel::mean_points() const {
  return Eigen::Map<const Points3>(mean.data(), 3, n_vertices());
}

void CompositeModel::validate() const {
  identity.validate();
  expression.validate();
  if (identity.n_vertices() != expression.n_vertices()) {
    throw std::invalid_argument("composite model: vertex counts differ");
  }
  if (identity.triangles != expression.triangles) {
    throw std::invalid_argument("composite model: triangulations differ");
  }
}

ShapeModel train_pca(const std::vector<Eigen::VectorXd>& meshes, int k,
                     std::vector<Triangle> triangles,
                     std::vector<int> landmark_map) {
  const auto m = static_cast<Eigen::Index>(meshes.size());
  if (m < 2) throw std::invalid_argument("train_pca: need at least 2 meshes");
  const Eigen::Index dim = meshes.front().size();
  if (dim == 0 || dim % 3 != 0) {
    throw std::invalid_argument("train_pca: mesh length must be 3N > 0");
  }
  for (const auto& mesh : meshes) {
    if (mesh.size() != dim) {
      throw std::invalid_argument("train_pca: meshes of mismatched length");
    }
  }
  if (k < 1 || k > std::min<Eigen::Index>(dim, m - 1)) {
    throw std::invalid_argument("train_pca: K must lie in [1, min(3N, M-1)]");
  }

  Eigen::MatrixXd data(dim, m);
  for (Eigen::Index i = 0; i < m; ++i) data.col(i) = meshes[i];
  const Eigen::VectorXd mean = data.rowwise().mean();
  data.colwise() -= mean;

  // C = D D^T / M; its eigenpairs come from the thin SVD of D / sqrt(M).
  data /= std::sqrt(static_cast<double>(m));
  Eigen::BDCSVD<Eigen::MatrixXd> svd(data, Eigen::ComputeThinU);

  ShapeModel model;
  model.mean = mean;
  model.basis = svd.matrixU().leftCols(k);
  model.eigenvalues = svd.singularValues().head(k).array().square();
  model.triangles = std::move(triangles);
  model.landmark_map = std::move(landmark_map);
  return model;
}

ShapeEmbedding encode(const ShapeModel& model, const Eigen::VectorXd& vertices) {
  if (vertices.size() != model.mean.size()) {
    throw std::invalid_argument("encode: vertex vector length must be 3N");
  }
  return model.basis.transpose() * (vertices - model.mean);
}

Eigen::VectorXd decode_full(const ShapeModel& model, const ShapeEmbedding& s) {
  if (s.size() != model.k()) {
    throw std::invalid_argument("decode: embedding length must be K");
  }
  return model.basis * s + model.mean;
}

Vec3 decode_vertex(const ShapeModel& model, const ShapeEmbedding& s, int n) {
  if (n < 0 || n >= model.n_vertices()) {
    throw std::out_of_range("decode_vertex: vertex index out of range");
  }
  if (s.size() != model.k()) {
    throw std::invalid_argument("decode: embedding length must be K");
  }
  return model.basis.middleRows<3>(3 * n) * s + model.mean.segment<3>(3 * n);
}

Points3 decode_points(const ShapeModel& model, const ShapeEmbedding& s) {
  const Eigen::VectorXd v = decode_full(model, s);
  return Eigen::Map<const Points3>(v.data(), 3, model.n_vertices());
}

EmbeddingValidity embedding_validity(const ShapeModel& model,
                                     const ShapeEmbedding& s) {
  if (s.size() != model.k()) {
    throw std::invalid_argument("embedding_validity: length must be K");
  }
  const double floor = eigen_floor(model.eigenvalues);
  EmbeddingValidity out;
  for (int i = 0; i < model.k(); ++i) {
    const double lambda = model.eigenvalues(i);
    if (lambda <= floor || lambda == 0.0) continue;
    const double z = s(i) / std::sqrt(lambda);
    out.margin += z * z;
  }
  out.valid = out.margin <= 1.0;
  return out;
}

Eigen::VectorXd decode_composite(const CompositeModel& composite,
                                 const ShapeEmbedding& s_identity,
                                 const ShapeEmbedding& s_expression) {
  return decode_full(composite.identity, s_identity) +
         decode_full(composite.expression, s_expression);
}

ShapeModel freeze_identity(const CompositeModel& composite,
                           const ShapeEmbedding& s_identity) {
  ShapeModel frozen = composite.expression;
  frozen.mean = composite.identity.basis * s_identity +
                composite.identity.mean + composite.expression.mean;
  return frozen;
}

EmbeddingSampler::EmbeddingSampler(Eigen::VectorXd eigenvalues, double radius)
    : half_axes_(eigenvalues.cwiseMax(0.0).cwiseSqrt()), radius_(radius) {}

ShapeEmbedding EmbeddingSampler::operator()(std::mt19937_64& rng) const {
  const auto k = half_axes_.size();
  if (k == 0) return ShapeEmbedding();
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Eigen::VectorXd dir(k);
  double n = 0.0;
  do {
    for (Eigen::Index i = 0; i < k; ++i) dir(i) = normal(rng);
    n = dir.norm();
  } while (n == 0.0);
  const double r =
      radius_ * std::pow(uniform(rng), 1.0 / static_cast<double>(k));
  // Scale slightly inside the boundary so round-off never leaves the ellipsoid.
  return (dir / n * r * (1.0 - 1e-12)).cwiseProduct(half_axes_);
}

std::pair<int, int> synthetic_grid_shape(int n_vertices) {
  const int cols =
      static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n_vertices))));
  const int rows = (n_vertices + cols - 1) / cols;
  return {cols, rows};
}

SyntheticModel generate_synthetic_model(int n_vertices, int k, int n_landmarks,
                                        std::uint64_t seed) {
  if (n_vertices < 4) {
    throw std::invalid_argument("synthetic model: need at least 4 vertices");
  }
  if (k < 1 || k >= 3 * n_vertices) {
    throw std::invalid_argument("synthetic model: need 1 <= K < 3N");
  }
  if (n_landmarks < 0 || n_landmarks > n_vertices) {
    throw std::invalid_argument("synthetic model: need 0 <= J <= N");
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  const auto [cols, rows] = synthetic_grid_shape(n_vertices);
  const int n = n_vertices;

  Eigen::VectorXd mean(3 * n);
  Eigen::MatrixXd uv(2, n);
  for (int v = 0; v < n; ++v) {
    const double x = cols > 1 ? static_cast<double>(v % cols) / (cols - 1) : 0.5;
    const double y = rows > 1 ? static_cast<double>(v / cols) / (rows - 1) : 0.5;
    const double r2 = (x - 0.5) * (x - 0.5) + (y - 0.5) * (y - 0.5);
    mean.segment<3>(3 * v) << x, y, -0.3 * std::exp(-r2 / (2.0 * 0.08));
    uv.col(v) << x, y;
  }

  std::vector<Triangle> triangles;
  for (int r = 0; r + 1 < rows; ++r) {
    for (int c = 0; c + 1 < cols; ++c) {
      const int v00 = r * cols + c;
      const int v01 = v00 + 1;
      const int v10 = v00 + cols;
      const int v11 = v10 + 1;
      if (v11 >= n) continue;
      triangles.push_back({v00, v01, v11});
      triangles.push_back({v00, v11, v10});
    }
  }

  // Smooth random displacement fields: a few Gaussian bumps per coordinate,
  // plus a tiny white component so the modes stay linearly independent.
  Eigen::MatrixXd fields(3 * n, k);
  for (int mode = 0; mode < k; ++mode) {
    for (int axis = 0; axis < 3; ++axis) {
      std::array<double, 3> cx{}, cy{}, width{}, amp{};
      for (int b = 0; b < 3; ++b) {
        cx[b] = uniform(rng);
        cy[b] = uniform(rng);
        width[b] = 0.15 + 0.2 * uniform(rng);
        amp[b] = normal(rng);
      }
      for (int v = 0; v < n; ++v) {
        double value = 0.0;
        for (int b = 0; b < 3; ++b) {
          const double dx = uv(0, v) - cx[b];
          const double dy = uv(1, v) - cy[b];
          value += amp[b] *
                   std::exp(-(dx * dx + dy * dy) / (2.0 * width[b] * width[b]));
        }
        fields(3 * v + axis, mode) = value + 1e-3 * normal(rng);
      }
    }
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(fields);
  Eigen::MatrixXd basis =
      qr.householderQ() * Eigen::MatrixXd::Identity(3 * n, k);

  // At the half-axis, mode 1 moves each coordinate by ~0.03 RMS.
  Eigen::VectorXd eigenvalues(k);
  const double lambda1 = 0.03 * 0.03 * 3.0 * n;
  for (int i = 0; i < k; ++i) eigenvalues(i) = lambda1 * std::pow(0.7, i);

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> landmarks(order.begin(), order.begin() + n_landmarks);
  std::sort(landmarks.begin(), landmarks.end());

  SyntheticModel out;
  out.model.basis = std::move(basis);
  out.model.mean = std::move(mean);
  out.model.eigenvalues = eigenvalues;
  out.model.triangles = std::move(triangles);
  out.model.landmark_map = std::move(landmarks);
  out.sampler = EmbeddingSampler(eigenvalues);
  return out;
}

}  // namespace morphfit
