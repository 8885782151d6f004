#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <vector>

#include "wsseg/point_cloud.hpp"
#include "wsseg/rng.hpp"
#include "wsseg/sampler.hpp"

namespace wsseg {

/// Shape of the shared per-point perceptron and its feature encoder.
struct MlpConfig {
  int input_dim = 0;
  int hidden_dim = 64;
  int num_classes = 0;
  int k_neighbors = 8;

  void validate() const;
};

/// Number of handcrafted geometric channels prepended to the raw auxiliary
/// features: height above batch minimum, linearity, planarity, sphericity,
/// verticality, local density.
constexpr int kGeometricFeatureCount = 6;

/// Per-point input rows for the classifier. Geometric descriptors come from
/// the covariance of each point's k nearest neighbors within the batch.
Eigen::MatrixXd encode_features(const std::vector<Vec3>& batch_coords,
                                const Eigen::MatrixXd& aux_features,
                                int k_neighbors);

/// Convenience overload gathering coordinate and feature rows from the cloud.
Eigen::MatrixXd encode_features(const PointCloud& cloud, const MiniBatch& batch,
                                int k_neighbors);

struct ModelParameters {
  MlpConfig config;
  Eigen::MatrixXd w1, w2, w3;  // hidden x in, hidden x hidden, classes x hidden
  Eigen::VectorXd b1, b2, b3;

  std::size_t parameter_count() const;

  /// All parameter entries finite.
  bool is_finite() const;
};

struct ParameterGradients {
  Eigen::MatrixXd w1, w2, w3;
  Eigen::VectorXd b1, b2, b3;

  bool is_finite() const;
};

/// He-style uniform init from the given stream, biases zero.
ModelParameters init_parameters(const MlpConfig& config, RngStream& rng);

/// Logits plus the cached intermediates backward needs.
struct BackboneOutput {
  Eigen::MatrixXd logits;  // B x K
  Eigen::MatrixXd input;   // B x in
  Eigen::MatrixXd z1, z2;  // pre-activation caches
};

BackboneOutput forward(const ModelParameters& params,
                       const Eigen::MatrixXd& features);

/// Row-wise stable softmax (max subtraction).
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);

/// Chain rule through the softmax: given dL/dprobs, returns dL/dlogits.
Eigen::MatrixXd softmax_backward(const Eigen::MatrixXd& probs,
                                 const Eigen::MatrixXd& grad_probs);

/// Exact reverse-mode gradients of sum(logits .* grad_logits) w.r.t. every
/// parameter block.
ParameterGradients backward(const ModelParameters& params,
                            const BackboneOutput& output,
                            const Eigen::MatrixXd& grad_logits);

struct Velocity {
  Eigen::MatrixXd w1, w2, w3;
  Eigen::VectorXd b1, b2, b3;

  static Velocity zeros_like(const ModelParameters& params);
};

/// v <- mu * v + g; theta <- theta - eta * v. Throws DivergenceError on
/// non-finite gradients.
void sgd_momentum_step(ModelParameters& params, const ParameterGradients& grads,
                       double learning_rate, double momentum,
                       Velocity& velocity);

/// Versioned binary checkpoint: magic string, config, shape table,
/// little-endian 64-bit floats.
void save_checkpoint(std::ostream& out, const ModelParameters& params);
ModelParameters load_checkpoint(std::istream& in);

}  // namespace wsseg
