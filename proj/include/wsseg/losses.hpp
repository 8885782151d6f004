#pragma once

#include <Eigen/Dense>
#include <vector>

#include "wsseg/point_cloud.hpp"

namespace wsseg {

/// Probability clamp applied before every logarithm so saturated softmax
/// outputs cannot produce infinities.
constexpr double kProbClamp = 1e-12;

/// Softmax outputs for one mini-batch, tied back to global point indices.
struct PredictionMatrix {
  Eigen::MatrixXd probs;       // B x K, rows on the simplex
  std::vector<int> point_ids;  // global index of each row

  void validate() const;
};

/// Exponential moving average of per-point predictions (the prediction
/// ensemble). Rows stay untouched until their point first appears in a batch.
struct EnsembleStore {
  Eigen::MatrixXd ensemble_probs;  // N x K
  std::vector<char> visited;
  double alpha = 0.9;

  EnsembleStore() = default;
  EnsembleStore(std::size_t num_points, int num_classes, double alpha = 0.9);

  std::size_t size() const { return visited.size(); }
  double visited_fraction() const;
};

/// Visited rows blend toward the new prediction; first visits copy it.
/// Call after the step's losses so they read the pre-update ensemble.
void ema_update(EnsembleStore& store, const PredictionMatrix& preds);

/// Per-point Shannon entropy (nats) and confidence weight 1 - H/ln K.
struct ConfidenceField {
  Eigen::VectorXd entropy;
  Eigen::VectorXd weight;
};

ConfidenceField confidence_weights(const Eigen::MatrixXd& prob_rows);

/// Hard labels distilled from the ensemble for unlabeled points.
struct PseudoLabelSet {
  std::vector<int> point_ids;  // global indices, visited rows only
  std::vector<int> labels;     // argmax of the ensemble row
  std::vector<double> weights;

  std::size_t count() const { return point_ids.size(); }
};

/// Argmax (ties to the lowest class) over visited ensemble rows of the given
/// unlabeled points; unvisited points are omitted rather than guessed.
PseudoLabelSet pseudo_labels(const EnsembleStore& store,
                             const std::vector<int>& unlabeled_ids);

/// A loss component: scalar value plus gradient w.r.t. the batch probabilities.
struct LossTerm {
  double value = 0.0;
  Eigen::MatrixXd grad_probs;  // B x K
};

/// Per-row Shannon entropy of a probability matrix.
Eigen::VectorXd entropy(const Eigen::MatrixXd& prob_rows);

/// Mean cross-entropy over labeled batch rows (batch_labels[r] >= 0).
LossTerm seg_loss(const PredictionMatrix& preds,
                  const std::vector<int>& batch_labels);

/// Mean entropy over unlabeled batch rows (batch_labels[r] < 0).
LossTerm entropy_loss(const PredictionMatrix& preds,
                      const std::vector<int>& batch_labels);

/// Mean squared distance between predictions and the (pre-update) ensemble,
/// averaged over visited batch rows; the ensemble is treated as a constant.
LossTerm epc_loss(const PredictionMatrix& preds, const EnsembleStore& store);

/// Confidence-weighted cross-entropy against pseudo-labels, normalized by the
/// number of pseudo-labeled points in the batch.
LossTerm pl_loss(const PredictionMatrix& preds, const PseudoLabelSet& pl);

/// Gaussian ramp exp(-5 (1-T)^2) with T = min(step / rampup_length, 1).
double rampup_weight(double step, double rampup_length);

/// Switches and schedule constants for the combined objective.
struct LossConfig {
  bool use_er = true;
  bool use_epc = true;
  bool use_ospl = true;
  // Steps over which the stage-1 ramp reaches 1 (so the final stage-1 step,
  // passed 0-based, lands exactly on lambda = 1).
  double rampup_length = 1.0;
  // Pseudo-label confidence from the ensemble (default) or from the
  // instantaneous prediction.
  bool weights_from_ensemble = true;
};

struct LossBreakdown {
  double l_seg = 0.0, l_ent = 0.0, l_epc = 0.0, l_pl = 0.0;
  double lambda_ent = 0.0, lambda_epc = 0.0, lambda_pl = 0.0;
  double total = 0.0;
  Eigen::MatrixXd grad_probs;  // B x K
  std::size_t pseudo_label_count = 0;
};

/// The full objective for one step. Stage 1 ramps the entropy and consistency
/// weights with no pseudo-labels; stage 2 fixes every weight at 1 and
/// generates pseudo-labels from the pre-update ensemble. Disabled terms are
/// skipped entirely (no zero-weighted arithmetic), keeping the baseline
/// reduction bitwise exact.
LossBreakdown combined_loss(int stage, int step_in_stage,
                            const PredictionMatrix& preds,
                            const std::vector<int>& batch_labels,
                            const EnsembleStore& store,
                            const LossConfig& config);

}  // namespace wsseg
