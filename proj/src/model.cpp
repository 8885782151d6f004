#include "wsseg/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "wsseg/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

namespace wsseg {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDegenerateEigenvalue = 1e-12;
constexpr double kMinNeighborRadius = 1e-3;

// Cell size heuristic for the per-batch neighbor index: roughly the mean
// point spacing so k-nearest searches stay within a few shells.
double batch_cell_size(const std::vector<Vec3>& coords) {
  Vec3 lo = coords.front(), hi = coords.front();
  for (const Vec3& p : coords) {
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  }
  double max_extent = 0.0;
  for (int a = 0; a < 3; ++a) max_extent = std::max(max_extent, hi[a] - lo[a]);
  double denom = std::cbrt(static_cast<double>(coords.size()));
  return std::max(1e-6, max_extent / std::max(1.0, denom));
}

}  // namespace

void MlpConfig::validate() const {
  if (input_dim <= 0) throw std::invalid_argument("MlpConfig: input_dim must be positive");
  if (hidden_dim <= 0) throw std::invalid_argument("MlpConfig: hidden_dim must be positive");
  if (num_classes < 2) throw std::invalid_argument("MlpConfig: num_classes must be at least 2");
  if (k_neighbors < 3) throw std::invalid_argument("MlpConfig: k_neighbors must be at least 3");
}

Eigen::MatrixXd encode_features(const std::vector<Vec3>& batch_coords,
                                const Eigen::MatrixXd& aux_features,
                                int k_neighbors) {
  const int n = static_cast<int>(batch_coords.size());
  if (n == 0) throw std::invalid_argument("encode_features: empty batch");
  if (aux_features.rows() != n)
    throw std::invalid_argument("encode_features: aux feature row count mismatch");
  if (k_neighbors < 3)
    throw std::invalid_argument("encode_features: k_neighbors must be at least 3");

  const int aux_dim = static_cast<int>(aux_features.cols());
  Eigen::MatrixXd out(n, kGeometricFeatureCount + aux_dim);

  double min_z = batch_coords.front()[2];
  for (const Vec3& p : batch_coords) min_z = std::min(min_z, p[2]);

  SpatialIndex index(batch_coords, batch_cell_size(batch_coords));

  for (int i = 0; i < n; ++i) {
    // The query point itself is in the index, so it is always part of its
    // own neighborhood (distance zero).
    std::vector<int> nn = index.knn(batch_coords[i], k_neighbors);
    // Batches smaller than k pad the neighborhood by cycling through the
    // available neighbors, nearest first.
    const std::size_t available = nn.size();
    while (nn.size() < static_cast<std::size_t>(k_neighbors))
      nn.push_back(nn[nn.size() % available]);
    const int m = static_cast<int>(nn.size());

    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (int j : nn)
      mean += Eigen::Vector3d(batch_coords[j][0], batch_coords[j][1],
                              batch_coords[j][2]);
    mean /= static_cast<double>(m);

    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    double max_d2 = 0.0;
    for (int j : nn) {
      Eigen::Vector3d d =
          Eigen::Vector3d(batch_coords[j][0], batch_coords[j][1],
                          batch_coords[j][2]) -
          mean;
      cov += d * d.transpose();
      max_d2 = std::max(max_d2, squared_dist(batch_coords[i], batch_coords[j]));
    }
    cov /= static_cast<double>(m);

    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
    // Eigen sorts ascending: ev(2) >= ev(1) >= ev(0).
    const double l1 = solver.eigenvalues()(2);
    const double l2 = solver.eigenvalues()(1);
    const double l3 = solver.eigenvalues()(0);

    double linearity = 0.0, planarity = 0.0, sphericity = 0.0,
           verticality = 0.0;
    if (l1 > kDegenerateEigenvalue) {
      linearity = (l1 - l2) / l1;
      planarity = (l2 - l3) / l1;
      sphericity = l3 / l1;
      // Normal direction: eigenvector of the smallest eigenvalue.
      verticality = 1.0 - std::abs(solver.eigenvectors().col(0)(2));
    }

    const double radius = std::max(kMinNeighborRadius, std::sqrt(max_d2));
    const double density =
        static_cast<double>(m) / (4.0 / 3.0 * kPi * radius * radius * radius);

    out(i, 0) = batch_coords[i][2] - min_z;
    out(i, 1) = linearity;
    out(i, 2) = planarity;
    out(i, 3) = sphericity;
    out(i, 4) = verticality;
    out(i, 5) = density;
    for (int f = 0; f < aux_dim; ++f)
      out(i, kGeometricFeatureCount + f) = aux_features(i, f);
  }
  return out;
}

Eigen::MatrixXd encode_features(const PointCloud& cloud, const MiniBatch& batch,
                                int k_neighbors) {
  const int n = static_cast<int>(batch.indices.size());
  std::vector<Vec3> coords(n);
  Eigen::MatrixXd aux(n, cloud.feature_dim);
  for (int i = 0; i < n; ++i) {
    const int src = batch.indices[i];
    coords[i] = cloud.coords[src];
    for (int f = 0; f < cloud.feature_dim; ++f)
      aux(i, f) = cloud.features[static_cast<std::size_t>(src) * cloud.feature_dim + f];
  }
  return encode_features(coords, aux, k_neighbors);
}

std::size_t ModelParameters::parameter_count() const {
  return static_cast<std::size_t>(w1.size() + w2.size() + w3.size() +
                                  b1.size() + b2.size() + b3.size());
}

bool ModelParameters::is_finite() const {
  return w1.allFinite() && w2.allFinite() && w3.allFinite() &&
         b1.allFinite() && b2.allFinite() && b3.allFinite();
}

bool ParameterGradients::is_finite() const {
  return w1.allFinite() && w2.allFinite() && w3.allFinite() &&
         b1.allFinite() && b2.allFinite() && b3.allFinite();
}

namespace {

// He-style uniform fill, drawn row by row so the layout is reproducible.
void fill_he_uniform(Eigen::MatrixXd& w, int fan_in, RngStream& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (Eigen::Index r = 0; r < w.rows(); ++r)
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      w(r, c) = rng.uniform(-limit, limit);
}

}  // namespace

ModelParameters init_parameters(const MlpConfig& config, RngStream& rng) {
  config.validate();
  ModelParameters params;
  params.config = config;
  params.w1.resize(config.hidden_dim, config.input_dim);
  params.w2.resize(config.hidden_dim, config.hidden_dim);
  params.w3.resize(config.num_classes, config.hidden_dim);
  fill_he_uniform(params.w1, config.input_dim, rng);
  fill_he_uniform(params.w2, config.hidden_dim, rng);
  fill_he_uniform(params.w3, config.hidden_dim, rng);
  params.b1 = Eigen::VectorXd::Zero(config.hidden_dim);
  params.b2 = Eigen::VectorXd::Zero(config.hidden_dim);
  params.b3 = Eigen::VectorXd::Zero(config.num_classes);
  return params;
}

BackboneOutput forward(const ModelParameters& params,
                       const Eigen::MatrixXd& features) {
  if (features.cols() != params.config.input_dim)
    throw std::invalid_argument("forward: feature dimension mismatch");
  BackboneOutput out;
  out.input = features;
  out.z1 = (features * params.w1.transpose()).rowwise() + params.b1.transpose();
  Eigen::MatrixXd a1 = out.z1.cwiseMax(0.0);
  out.z2 = (a1 * params.w2.transpose()).rowwise() + params.b2.transpose();
  Eigen::MatrixXd a2 = out.z2.cwiseMax(0.0);
  out.logits = (a2 * params.w3.transpose()).rowwise() + params.b3.transpose();
  return out;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd probs(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double row_max = logits.row(r).maxCoeff();
    Eigen::ArrayXd shifted = (logits.row(r).array() - row_max).exp();
    probs.row(r) = shifted / shifted.sum();
  }
  return probs;
}

Eigen::MatrixXd softmax_backward(const Eigen::MatrixXd& probs,
                                 const Eigen::MatrixXd& grad_probs) {
  Eigen::MatrixXd grad_logits(probs.rows(), probs.cols());
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    const double dot = probs.row(r).dot(grad_probs.row(r));
    grad_logits.row(r) =
        probs.row(r).array() * (grad_probs.row(r).array() - dot);
  }
  return grad_logits;
}

ParameterGradients backward(const ModelParameters& params,
                            const BackboneOutput& output,
                            const Eigen::MatrixXd& grad_logits) {
  Eigen::MatrixXd a1 = output.z1.cwiseMax(0.0);
  Eigen::MatrixXd a2 = output.z2.cwiseMax(0.0);

  ParameterGradients grads;
  grads.w3 = grad_logits.transpose() * a2;
  grads.b3 = grad_logits.colwise().sum();

  Eigen::MatrixXd d2 = (grad_logits * params.w3).array() *
                       (output.z2.array() > 0.0).cast<double>();
  grads.w2 = d2.transpose() * a1;
  grads.b2 = d2.colwise().sum();

  Eigen::MatrixXd d1 = (d2 * params.w2).array() *
                       (output.z1.array() > 0.0).cast<double>();
  grads.w1 = d1.transpose() * output.input;
  grads.b1 = d1.colwise().sum();
  return grads;
}

Velocity Velocity::zeros_like(const ModelParameters& params) {
  Velocity v;
  v.w1 = Eigen::MatrixXd::Zero(params.w1.rows(), params.w1.cols());
  v.w2 = Eigen::MatrixXd::Zero(params.w2.rows(), params.w2.cols());
  v.w3 = Eigen::MatrixXd::Zero(params.w3.rows(), params.w3.cols());
  v.b1 = Eigen::VectorXd::Zero(params.b1.size());
  v.b2 = Eigen::VectorXd::Zero(params.b2.size());
  v.b3 = Eigen::VectorXd::Zero(params.b3.size());
  return v;
}

void sgd_momentum_step(ModelParameters& params, const ParameterGradients& grads,
                       double learning_rate, double momentum,
                       Velocity& velocity) {
  if (!grads.is_finite())
    throw DivergenceError("sgd_momentum_step: non-finite gradient");
  velocity.w1 = momentum * velocity.w1 + grads.w1;
  velocity.w2 = momentum * velocity.w2 + grads.w2;
  velocity.w3 = momentum * velocity.w3 + grads.w3;
  velocity.b1 = momentum * velocity.b1 + grads.b1;
  velocity.b2 = momentum * velocity.b2 + grads.b2;
  velocity.b3 = momentum * velocity.b3 + grads.b3;
  params.w1 -= learning_rate * velocity.w1;
  params.w2 -= learning_rate * velocity.w2;
  params.w3 -= learning_rate * velocity.w3;
  params.b1 -= learning_rate * velocity.b1;
  params.b2 -= learning_rate * velocity.b2;
  params.b3 -= learning_rate * velocity.b3;
}

namespace {

constexpr char kCheckpointMagic[8] = {'W', 'S', 'E', 'G', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_i32(std::ostream& out, std::int32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw DataError("checkpoint: truncated header");
  return v;
}

std::int32_t read_i32(std::istream& in) {
  std::int32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw DataError("checkpoint: truncated header");
  return v;
}

void write_block(std::ostream& out, const Eigen::MatrixXd& m) {
  write_u32(out, static_cast<std::uint32_t>(m.rows()));
  write_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
}

Eigen::MatrixXd read_block(std::istream& in, std::uint32_t expect_rows,
                           std::uint32_t expect_cols, const char* what) {
  const std::uint32_t rows = read_u32(in);
  const std::uint32_t cols = read_u32(in);
  if (rows != expect_rows || cols != expect_cols)
    throw DataError(std::string("checkpoint: shape mismatch in ") + what);
  Eigen::MatrixXd m(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c) {
      double v = 0.0;
      in.read(reinterpret_cast<char*>(&v), sizeof(v));
      if (!in) throw DataError(std::string("checkpoint: truncated data in ") + what);
      m(r, c) = v;
    }
  return m;
}

}  // namespace

void save_checkpoint(std::ostream& out, const ModelParameters& params) {
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_u32(out, kCheckpointVersion);
  write_i32(out, params.config.input_dim);
  write_i32(out, params.config.hidden_dim);
  write_i32(out, params.config.num_classes);
  write_i32(out, params.config.k_neighbors);
  write_block(out, params.w1);
  write_block(out, params.b1);
  write_block(out, params.w2);
  write_block(out, params.b2);
  write_block(out, params.w3);
  write_block(out, params.b3);
  if (!out) throw DataError("checkpoint: write failed");
}

ModelParameters load_checkpoint(std::istream& in) {
  char magic[8] = {};
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kCheckpointMagic))
    throw DataError("checkpoint: bad magic");
  const std::uint32_t version = read_u32(in);
  if (version != kCheckpointVersion)
    throw DataError("checkpoint: unsupported version " + std::to_string(version));

  ModelParameters params;
  params.config.input_dim = read_i32(in);
  params.config.hidden_dim = read_i32(in);
  params.config.num_classes = read_i32(in);
  params.config.k_neighbors = read_i32(in);
  params.config.validate();

  const auto h = static_cast<std::uint32_t>(params.config.hidden_dim);
  const auto d = static_cast<std::uint32_t>(params.config.input_dim);
  const auto k = static_cast<std::uint32_t>(params.config.num_classes);
  params.w1 = read_block(in, h, d, "w1");
  params.b1 = read_block(in, h, 1, "b1");
  params.w2 = read_block(in, h, h, "w2");
  params.b2 = read_block(in, h, 1, "b2");
  params.w3 = read_block(in, k, h, "w3");
  params.b3 = read_block(in, k, 1, "b3");
  return params;
}

}  // namespace wsseg
