#include "wsseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "wsseg/losses.hpp"

namespace wsseg {

long long ConfusionMatrix::total() const {
  long long t = 0;
  for (const auto& row : counts)
    for (long long c : row) t += c;
  return t;
}

ConfusionMatrix confusion(const std::vector<int>& pred,
                          const std::vector<int>& truth, int num_classes) {
  if (pred.size() != truth.size())
    throw std::invalid_argument("confusion: prediction/truth length mismatch");
  if (num_classes < 1)
    throw std::invalid_argument("confusion: need at least one class");

  ConfusionMatrix cm;
  cm.counts.assign(static_cast<std::size_t>(num_classes),
                   std::vector<long long>(static_cast<std::size_t>(num_classes), 0));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int t = truth[i], p = pred[i];
    if (t < 0 || t >= num_classes)
      throw std::invalid_argument("confusion: truth label out of range");
    if (p < 0 || p >= num_classes)
      throw std::invalid_argument("confusion: predicted label out of range");
    ++cm.counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
  }
  return cm;
}

MetricsReport metrics(const ConfusionMatrix& cm) {
  const int k = cm.num_classes();
  const long long total = cm.total();
  if (total <= 0) throw std::invalid_argument("metrics: empty confusion matrix");

  MetricsReport report;
  report.precision.resize(k, 0.0);
  report.recall.resize(k, 0.0);
  report.f1.resize(k, 0.0);
  report.absent.resize(k, 0);

  long long trace = 0;
  for (int c = 0; c < k; ++c) {
    const long long tp = cm.counts[c][c];
    long long row = 0, col = 0;
    for (int j = 0; j < k; ++j) {
      row += cm.counts[c][j];
      col += cm.counts[j][c];
    }
    trace += tp;
    const long long fp = col - tp, fn = row - tp;
    report.absent[c] = (row == 0 && col == 0) ? 1 : 0;
    if (tp + fp > 0) report.precision[c] = static_cast<double>(tp) / static_cast<double>(tp + fp);
    if (tp + fn > 0) report.recall[c] = static_cast<double>(tp) / static_cast<double>(tp + fn);
    const double pr = report.precision[c] + report.recall[c];
    if (pr > 0.0) report.f1[c] = 2.0 * report.precision[c] * report.recall[c] / pr;
    report.avg_f1 += report.f1[c];
  }
  report.avg_f1 /= static_cast<double>(k);
  report.oa = static_cast<double>(trace) / static_cast<double>(total);
  return report;
}

std::vector<double> entropy_map(const Eigen::MatrixXd& probs) {
  const double log_k = std::log(static_cast<double>(probs.cols()));
  const Eigen::VectorXd h = entropy(probs);
  std::vector<double> out(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i)
    out[static_cast<std::size_t>(i)] = std::clamp(h(i) / log_k, 0.0, 1.0);
  return out;
}

}  // namespace wsseg
