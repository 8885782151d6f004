#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "wsseg/losses.hpp"
#include "wsseg/model.hpp"
#include "wsseg/point_cloud.hpp"
#include "wsseg/sampler.hpp"
#include "wsseg/weak_labels.hpp"

namespace wsseg {

/// Everything a training run needs beyond the data itself. One root seed
/// fans out to independent named streams (init / potentials / augment) so
/// toggling one module never shifts another's randomness.
struct TrainSchedule {
  int epochs_per_stage = 100;
  int steps_per_epoch = 80;
  double learning_rate = 1e-2;
  double momentum = 0.98;
  double alpha = 0.9;   // prediction-ensemble EMA coefficient
  double lr_decay = 1.0;  // per-epoch multiplier; 1 keeps the rate constant
  std::uint64_t seed = 0;

  int num_classes = 0;
  int hidden_dim = 64;
  int k_neighbors = 8;

  BatchSpec batch_spec;
  AugmentParams augment;

  bool use_er = true;
  bool use_epc = true;
  bool use_ospl = true;
  bool weights_from_ensemble = true;

  int checkpoint_every = 0;  // epochs between checkpoint callbacks; 0 = off

  void validate() const;
};

/// One CSV row of the training log. Loss columns are means over the epoch's
/// steps; lambda columns are the values at the epoch's last step.
struct EpochLogRow {
  int epoch = 0;  // 1-based, counted across both stages
  int stage = 1;
  double l_seg = 0.0, l_ent = 0.0, l_epc = 0.0, l_pl = 0.0;
  double lambda_ent = 0.0, lambda_epc = 0.0, lambda_pl = 0.0;
  double seconds = 0.0;  // wall clock, the one nondeterministic column
};

struct TrainResult {
  ModelParameters params;
  std::vector<EpochLogRow> log;
  EnsembleStore store;
  PotentialField potentials;
};

struct TrainCallbacks {
  /// Called after every epoch; fires regardless of checkpoint_every.
  std::function<void(const EpochLogRow&, const ModelParameters&)> on_epoch;
  /// Called every checkpoint_every epochs (and never when that is 0).
  std::function<void(int epoch, const ModelParameters&)> on_checkpoint;
};

/// Two-stage weakly supervised training. Per step: draw a potential-value
/// batch, augment it, encode, forward, softmax, combined loss (reading the
/// pre-update ensemble), backward, SGD momentum step, then the EMA ensemble
/// update. Stage 1 ramps the entropy/consistency weights with no
/// pseudo-labels; stage 2 sets every weight to 1 and generates pseudo-labels
/// from the live ensemble each step. Throws DivergenceError naming the
/// offending step if a loss goes non-finite.
TrainResult train(const PointCloud& cloud, const WeakLabelSet& weak,
                  const TrainSchedule& schedule,
                  const TrainCallbacks& callbacks = {});

struct FullPrediction {
  Eigen::MatrixXd probs;    // N x K, mean over all covering test batches
  std::vector<int> labels;  // argmax, ties to the lowest class
};

/// Deterministic full-cloud inference over the 50%-overlap test tiling; each
/// point's probability is the arithmetic mean of its rows across covering
/// batches.
FullPrediction predict_full(const ModelParameters& params,
                            const PointCloud& cloud, const BatchSpec& spec);

}  // namespace wsseg
