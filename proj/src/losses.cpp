#include "wsseg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>

namespace wsseg {

namespace {

double clamped_log(double p) { return std::log(std::max(p, kProbClamp)); }

double row_entropy(const Eigen::MatrixXd& rows, Eigen::Index r) {
  double h = 0.0;
  for (Eigen::Index c = 0; c < rows.cols(); ++c) {
    const double p = rows(r, c);
    if (p > 0.0) h -= p * clamped_log(p);
  }
  return h;
}

}  // namespace

void PredictionMatrix::validate() const {
  if (static_cast<std::size_t>(probs.rows()) != point_ids.size())
    throw std::invalid_argument("PredictionMatrix: row/id count mismatch");
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    double sum = 0.0;
    for (Eigen::Index c = 0; c < probs.cols(); ++c) {
      const double p = probs(r, c);
      if (!(p >= 0.0 && p <= 1.0))
        throw std::invalid_argument("PredictionMatrix: entry outside [0,1]");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6)
      throw std::invalid_argument("PredictionMatrix: row does not sum to 1");
  }
}

EnsembleStore::EnsembleStore(std::size_t num_points, int num_classes,
                             double alpha_in)
    : ensemble_probs(Eigen::MatrixXd::Zero(num_points, num_classes)),
      visited(num_points, 0),
      alpha(alpha_in) {
  if (num_classes < 2)
    throw std::invalid_argument("EnsembleStore: need at least 2 classes");
  if (!(alpha_in >= 0.0 && alpha_in < 1.0))
    throw std::invalid_argument("EnsembleStore: alpha must lie in [0,1)");
}

double EnsembleStore::visited_fraction() const {
  if (visited.empty()) return 0.0;
  std::size_t n = 0;
  for (char v : visited) n += (v != 0);
  return static_cast<double>(n) / static_cast<double>(visited.size());
}

void ema_update(EnsembleStore& store, const PredictionMatrix& preds) {
  if (preds.probs.cols() != store.ensemble_probs.cols())
    throw std::invalid_argument("ema_update: class count mismatch");
  for (Eigen::Index r = 0; r < preds.probs.rows(); ++r) {
    const int gid = preds.point_ids[static_cast<std::size_t>(r)];
    if (gid < 0 || static_cast<std::size_t>(gid) >= store.size())
      throw std::invalid_argument("ema_update: point id out of range");
    if (store.visited[static_cast<std::size_t>(gid)]) {
      store.ensemble_probs.row(gid) = store.alpha * store.ensemble_probs.row(gid) +
                                      (1.0 - store.alpha) * preds.probs.row(r);
    } else {
      store.ensemble_probs.row(gid) = preds.probs.row(r);
      store.visited[static_cast<std::size_t>(gid)] = 1;
    }
  }
}

Eigen::VectorXd entropy(const Eigen::MatrixXd& prob_rows) {
  Eigen::VectorXd h(prob_rows.rows());
  for (Eigen::Index r = 0; r < prob_rows.rows(); ++r) h(r) = row_entropy(prob_rows, r);
  return h;
}

ConfidenceField confidence_weights(const Eigen::MatrixXd& prob_rows) {
  const double log_k = std::log(static_cast<double>(prob_rows.cols()));
  ConfidenceField field;
  field.entropy = entropy(prob_rows);
  field.weight.resize(prob_rows.rows());
  for (Eigen::Index r = 0; r < prob_rows.rows(); ++r)
    field.weight(r) = std::clamp(1.0 - field.entropy(r) / log_k, 0.0, 1.0);
  return field;
}

PseudoLabelSet pseudo_labels(const EnsembleStore& store,
                             const std::vector<int>& unlabeled_ids) {
  const Eigen::Index k = store.ensemble_probs.cols();
  const double log_k = std::log(static_cast<double>(k));
  PseudoLabelSet pl;
  for (int gid : unlabeled_ids) {
    if (gid < 0 || static_cast<std::size_t>(gid) >= store.size())
      throw std::invalid_argument("pseudo_labels: point id out of range");
    if (!store.visited[static_cast<std::size_t>(gid)]) continue;
    int best = 0;
    for (Eigen::Index c = 1; c < k; ++c)
      if (store.ensemble_probs(gid, c) > store.ensemble_probs(gid, best))
        best = static_cast<int>(c);
    pl.point_ids.push_back(gid);
    pl.labels.push_back(best);
    const double h = row_entropy(store.ensemble_probs, gid);
    pl.weights.push_back(std::clamp(1.0 - h / log_k, 0.0, 1.0));
  }
  return pl;
}

LossTerm seg_loss(const PredictionMatrix& preds,
                  const std::vector<int>& batch_labels) {
  const Eigen::Index b = preds.probs.rows(), k = preds.probs.cols();
  if (batch_labels.size() != static_cast<std::size_t>(b))
    throw std::invalid_argument("seg_loss: label count mismatch");
  LossTerm term;
  term.grad_probs = Eigen::MatrixXd::Zero(b, k);

  Eigen::Index labeled = 0;
  for (int y : batch_labels)
    if (y >= 0) {
      if (y >= k) throw std::invalid_argument("seg_loss: label out of range");
      ++labeled;
    }
  if (labeled == 0) return term;

  const double inv = 1.0 / static_cast<double>(labeled);
  for (Eigen::Index r = 0; r < b; ++r) {
    const int y = batch_labels[static_cast<std::size_t>(r)];
    if (y < 0) continue;
    const double p = std::max(preds.probs(r, y), kProbClamp);
    term.value -= clamped_log(preds.probs(r, y)) * inv;
    term.grad_probs(r, y) = -inv / p;
  }
  return term;
}

LossTerm entropy_loss(const PredictionMatrix& preds,
                      const std::vector<int>& batch_labels) {
  const Eigen::Index b = preds.probs.rows(), k = preds.probs.cols();
  if (batch_labels.size() != static_cast<std::size_t>(b))
    throw std::invalid_argument("entropy_loss: label count mismatch");
  LossTerm term;
  term.grad_probs = Eigen::MatrixXd::Zero(b, k);

  Eigen::Index unlabeled = 0;
  for (int y : batch_labels)
    if (y < 0) ++unlabeled;
  if (unlabeled == 0) return term;

  const double inv = 1.0 / static_cast<double>(unlabeled);
  for (Eigen::Index r = 0; r < b; ++r) {
    if (batch_labels[static_cast<std::size_t>(r)] >= 0) continue;
    term.value += row_entropy(preds.probs, r) * inv;
    for (Eigen::Index c = 0; c < k; ++c)
      term.grad_probs(r, c) = -(clamped_log(preds.probs(r, c)) + 1.0) * inv;
  }
  return term;
}

LossTerm epc_loss(const PredictionMatrix& preds, const EnsembleStore& store) {
  const Eigen::Index b = preds.probs.rows(), k = preds.probs.cols();
  if (k != store.ensemble_probs.cols())
    throw std::invalid_argument("epc_loss: class count mismatch");
  LossTerm term;
  term.grad_probs = Eigen::MatrixXd::Zero(b, k);

  Eigen::Index visited = 0;
  for (Eigen::Index r = 0; r < b; ++r) {
    const int gid = preds.point_ids[static_cast<std::size_t>(r)];
    if (gid < 0 || static_cast<std::size_t>(gid) >= store.size())
      throw std::invalid_argument("epc_loss: point id out of range");
    if (store.visited[static_cast<std::size_t>(gid)]) ++visited;
  }
  if (visited == 0) return term;

  const double inv = 1.0 / static_cast<double>(visited);
  for (Eigen::Index r = 0; r < b; ++r) {
    const int gid = preds.point_ids[static_cast<std::size_t>(r)];
    if (!store.visited[static_cast<std::size_t>(gid)]) continue;
    const auto diff = preds.probs.row(r) - store.ensemble_probs.row(gid);
    term.value += diff.squaredNorm() * inv;
    term.grad_probs.row(r) = 2.0 * inv * diff;
  }
  return term;
}

LossTerm pl_loss(const PredictionMatrix& preds, const PseudoLabelSet& pl) {
  const Eigen::Index b = preds.probs.rows(), k = preds.probs.cols();
  LossTerm term;
  term.grad_probs = Eigen::MatrixXd::Zero(b, k);
  if (pl.count() == 0) return term;

  std::unordered_map<int, Eigen::Index> row_of;
  row_of.reserve(preds.point_ids.size());
  for (std::size_t r = 0; r < preds.point_ids.size(); ++r)
    row_of.emplace(preds.point_ids[r], static_cast<Eigen::Index>(r));

  const double inv = 1.0 / static_cast<double>(pl.count());
  for (std::size_t i = 0; i < pl.count(); ++i) {
    const auto it = row_of.find(pl.point_ids[i]);
    if (it == row_of.end())
      throw std::invalid_argument("pl_loss: pseudo-label id not in batch");
    const int y = pl.labels[i];
    if (y < 0 || y >= k)
      throw std::invalid_argument("pl_loss: pseudo-label class out of range");
    const Eigen::Index r = it->second;
    const double w = pl.weights[i];
    const double p = std::max(preds.probs(r, y), kProbClamp);
    term.value -= w * clamped_log(preds.probs(r, y)) * inv;
    term.grad_probs(r, y) -= w * inv / p;
  }
  return term;
}

double rampup_weight(double step, double rampup_length) {
  if (rampup_length < 1.0)
    throw std::invalid_argument("rampup_weight: rampup_length must be >= 1");
  const double t = std::clamp(step / rampup_length, 0.0, 1.0);
  const double d = 1.0 - t;
  return std::exp(-5.0 * d * d);
}

LossBreakdown combined_loss(int stage, int step_in_stage,
                            const PredictionMatrix& preds,
                            const std::vector<int>& batch_labels,
                            const EnsembleStore& store,
                            const LossConfig& config) {
  if (stage != 1 && stage != 2)
    throw std::invalid_argument("combined_loss: stage must be 1 or 2");

  LossBreakdown out;
  LossTerm seg = seg_loss(preds, batch_labels);
  out.l_seg = seg.value;
  out.total = seg.value;
  out.grad_probs = std::move(seg.grad_probs);

  const double ramp =
      (config.use_er || config.use_epc) && stage == 1
          ? rampup_weight(static_cast<double>(step_in_stage), config.rampup_length)
          : 1.0;

  if (config.use_er) {
    out.lambda_ent = stage == 1 ? ramp : 1.0;
    LossTerm ent = entropy_loss(preds, batch_labels);
    out.l_ent = ent.value;
    out.total += out.lambda_ent * ent.value;
    out.grad_probs += out.lambda_ent * ent.grad_probs;
  }

  if (config.use_epc) {
    out.lambda_epc = stage == 1 ? ramp : 1.0;
    LossTerm epc = epc_loss(preds, store);
    out.l_epc = epc.value;
    out.total += out.lambda_epc * epc.value;
    out.grad_probs += out.lambda_epc * epc.grad_probs;
  }

  if (config.use_ospl && stage == 2) {
    out.lambda_pl = 1.0;
    std::vector<int> unlabeled_ids;
    for (Eigen::Index r = 0; r < preds.probs.rows(); ++r)
      if (batch_labels[static_cast<std::size_t>(r)] < 0)
        unlabeled_ids.push_back(preds.point_ids[static_cast<std::size_t>(r)]);
    PseudoLabelSet pl = pseudo_labels(store, unlabeled_ids);
    if (!config.weights_from_ensemble) {
      // Ablation mode: confidence from the instantaneous prediction instead
      // of the ensemble row (the label still comes from the ensemble).
      std::unordered_map<int, Eigen::Index> row_of;
      for (std::size_t r = 0; r < preds.point_ids.size(); ++r)
        row_of.emplace(preds.point_ids[r], static_cast<Eigen::Index>(r));
      const double log_k = std::log(static_cast<double>(preds.probs.cols()));
      for (std::size_t i = 0; i < pl.count(); ++i) {
        const double h = row_entropy(preds.probs, row_of.at(pl.point_ids[i]));
        pl.weights[i] = std::clamp(1.0 - h / log_k, 0.0, 1.0);
      }
    }
    out.pseudo_label_count = pl.count();
    LossTerm plt = pl_loss(preds, pl);
    out.l_pl = plt.value;
    out.total += plt.value;
    out.grad_probs += plt.grad_probs;
  }

  return out;
}

}  // namespace wsseg
