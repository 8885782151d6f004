#include "wsseg/trainer.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>

#include "wsseg/errors.hpp"

namespace wsseg {

void TrainSchedule::validate() const {
  if (epochs_per_stage < 1)
    throw std::invalid_argument("TrainSchedule: epochs_per_stage must be >= 1");
  if (steps_per_epoch < 1)
    throw std::invalid_argument("TrainSchedule: steps_per_epoch must be >= 1");
  if (learning_rate <= 0.0)
    throw std::invalid_argument("TrainSchedule: learning_rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0)
    throw std::invalid_argument("TrainSchedule: momentum must lie in [0,1)");
  if (alpha < 0.0 || alpha >= 1.0)
    throw std::invalid_argument("TrainSchedule: alpha must lie in [0,1)");
  if (lr_decay <= 0.0 || lr_decay > 1.0)
    throw std::invalid_argument("TrainSchedule: lr_decay must lie in (0,1]");
  if (num_classes < 2)
    throw std::invalid_argument("TrainSchedule: num_classes must be at least 2");
  if (hidden_dim < 1)
    throw std::invalid_argument("TrainSchedule: hidden_dim must be >= 1");
  if (k_neighbors < 3)
    throw std::invalid_argument("TrainSchedule: k_neighbors must be at least 3");
  if (checkpoint_every < 0)
    throw std::invalid_argument("TrainSchedule: checkpoint_every must be >= 0");
  batch_spec.validate();
}

namespace {

std::vector<int> batch_labels_for(const MiniBatch& batch,
                                  const WeakLabelSet& weak) {
  std::vector<int> labels(batch.indices.size(), LabelArray::kUnlabeled);
  for (std::size_t i = 0; i < batch.indices.size(); ++i)
    if (batch.labeled_mask[i]) labels[i] = weak.label_of(batch.indices[i]);
  return labels;
}

Eigen::MatrixXd gather_aux(const PointCloud& cloud,
                           const std::vector<int>& indices) {
  Eigen::MatrixXd aux(static_cast<Eigen::Index>(indices.size()),
                      cloud.feature_dim);
  for (std::size_t i = 0; i < indices.size(); ++i)
    for (int f = 0; f < cloud.feature_dim; ++f)
      aux(static_cast<Eigen::Index>(i), f) =
          cloud.features[static_cast<std::size_t>(indices[i]) * cloud.feature_dim + f];
  return aux;
}

std::vector<Vec3> gather_coords(const PointCloud& cloud,
                                const std::vector<int>& indices) {
  std::vector<Vec3> coords(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i)
    coords[i] = cloud.coords[static_cast<std::size_t>(indices[i])];
  return coords;
}

}  // namespace

TrainResult train(const PointCloud& cloud, const WeakLabelSet& weak,
                  const TrainSchedule& schedule,
                  const TrainCallbacks& callbacks) {
  schedule.validate();
  cloud.validate();
  if (cloud.size() == 0) throw std::invalid_argument("train: empty cloud");
  for (int idx : weak.labeled_indices)
    if (idx < 0 || static_cast<std::size_t>(idx) >= cloud.size())
      throw std::invalid_argument("train: weak label index out of range");

  MlpConfig mlp;
  mlp.input_dim = kGeometricFeatureCount + cloud.feature_dim;
  mlp.hidden_dim = schedule.hidden_dim;
  mlp.num_classes = schedule.num_classes;
  mlp.k_neighbors = schedule.k_neighbors;

  RngStream init_rng(schedule.seed, "init");
  RngStream potential_rng(schedule.seed, "potentials");
  RngStream augment_rng(schedule.seed, "augment");

  TrainResult result;
  result.params = init_parameters(mlp, init_rng);
  result.store = EnsembleStore(cloud.size(), schedule.num_classes, schedule.alpha);
  result.potentials = init_potentials(cloud.size(), potential_rng);
  Velocity velocity = Velocity::zeros_like(result.params);

  SpatialIndex index(cloud.coords, schedule.batch_spec.radius);

  const int stage_steps = schedule.epochs_per_stage * schedule.steps_per_epoch;
  LossConfig loss_config;
  loss_config.use_er = schedule.use_er;
  loss_config.use_epc = schedule.use_epc;
  loss_config.use_ospl = schedule.use_ospl;
  loss_config.weights_from_ensemble = schedule.weights_from_ensemble;
  // Steps are passed 0-based, so the final stage-1 step lands exactly on
  // ramp weight 1 (continuous into stage 2).
  loss_config.rampup_length = std::max(1, stage_steps - 1);

  int epoch_counter = 0;
  for (int stage = 1; stage <= 2; ++stage) {
    for (int epoch = 0; epoch < schedule.epochs_per_stage; ++epoch) {
      const auto epoch_start = std::chrono::steady_clock::now();
      const double lr =
          schedule.learning_rate * std::pow(schedule.lr_decay, epoch_counter);

      EpochLogRow row;
      row.epoch = ++epoch_counter;
      row.stage = stage;

      for (int s = 0; s < schedule.steps_per_epoch; ++s) {
        const int step_in_stage = epoch * schedule.steps_per_epoch + s;

        MiniBatch batch = next_train_batch(result.potentials, cloud, index,
                                           schedule.batch_spec, weak);
        std::vector<Vec3> coords = gather_coords(cloud, batch.indices);
        coords = augment(coords, schedule.augment, augment_rng);

        Eigen::MatrixXd feats =
            encode_features(coords, gather_aux(cloud, batch.indices),
                            schedule.k_neighbors);
        BackboneOutput out = forward(result.params, feats);

        PredictionMatrix preds;
        preds.probs = softmax_rows(out.logits);
        preds.point_ids = batch.indices;

        const std::vector<int> labels = batch_labels_for(batch, weak);
        LossBreakdown loss = combined_loss(stage, step_in_stage, preds, labels,
                                           result.store, loss_config);
        if (!std::isfinite(loss.total))
          throw DivergenceError("train: non-finite loss at stage " +
                                std::to_string(stage) + ", epoch " +
                                std::to_string(row.epoch) + ", step " +
                                std::to_string(s));

        Eigen::MatrixXd grad_logits = softmax_backward(preds.probs, loss.grad_probs);
        ParameterGradients grads = backward(result.params, out, grad_logits);
        sgd_momentum_step(result.params, grads, lr, schedule.momentum, velocity);
        ema_update(result.store, preds);

        row.l_seg += loss.l_seg;
        row.l_ent += loss.l_ent;
        row.l_epc += loss.l_epc;
        row.l_pl += loss.l_pl;
        if (s == schedule.steps_per_epoch - 1) {
          row.lambda_ent = loss.lambda_ent;
          row.lambda_epc = loss.lambda_epc;
          row.lambda_pl = loss.lambda_pl;
        }
      }

      const double inv_steps = 1.0 / static_cast<double>(schedule.steps_per_epoch);
      row.l_seg *= inv_steps;
      row.l_ent *= inv_steps;
      row.l_epc *= inv_steps;
      row.l_pl *= inv_steps;
      row.seconds = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - epoch_start)
                        .count();

      result.log.push_back(row);
      if (callbacks.on_epoch) callbacks.on_epoch(row, result.params);
      if (callbacks.on_checkpoint && schedule.checkpoint_every > 0 &&
          row.epoch % schedule.checkpoint_every == 0)
        callbacks.on_checkpoint(row.epoch, result.params);
    }
  }
  return result;
}

FullPrediction predict_full(const ModelParameters& params,
                            const PointCloud& cloud, const BatchSpec& spec) {
  cloud.validate();
  if (cloud.size() == 0) throw std::invalid_argument("predict_full: empty cloud");
  const int k = params.config.num_classes;

  FullPrediction pred;
  pred.probs = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cloud.size()), k);
  std::vector<int> cover(cloud.size(), 0);

  for (const MiniBatch& batch : test_batches(cloud, spec)) {
    Eigen::MatrixXd feats =
        encode_features(gather_coords(cloud, batch.indices),
                        gather_aux(cloud, batch.indices), params.config.k_neighbors);
    Eigen::MatrixXd probs = softmax_rows(forward(params, feats).logits);
    for (std::size_t r = 0; r < batch.indices.size(); ++r) {
      pred.probs.row(batch.indices[r]) += probs.row(static_cast<Eigen::Index>(r));
      ++cover[static_cast<std::size_t>(batch.indices[r])];
    }
  }

  pred.labels.resize(cloud.size(), 0);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cover[i] == 0)
      throw std::logic_error("predict_full: uncovered point (tiling bug)");
    pred.probs.row(static_cast<Eigen::Index>(i)) /= static_cast<double>(cover[i]);
    int best = 0;
    for (int c = 1; c < k; ++c)
      if (pred.probs(static_cast<Eigen::Index>(i), c) >
          pred.probs(static_cast<Eigen::Index>(i), best))
        best = c;
    pred.labels[i] = best;
  }
  return pred;
}

}  // namespace wsseg
