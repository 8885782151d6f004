#pragma once

#include <Eigen/Dense>
#include <vector>

namespace wsseg {

/// Rows index the ground truth, columns the prediction.
struct ConfusionMatrix {
  std::vector<std::vector<long long>> counts;

  int num_classes() const { return static_cast<int>(counts.size()); }
  long long total() const;
};

ConfusionMatrix confusion(const std::vector<int>& pred,
                          const std::vector<int>& truth, int num_classes);

struct MetricsReport {
  std::vector<double> precision, recall, f1;
  std::vector<char> absent;  // zero truth row and zero prediction column
  double avg_f1 = 0.0;       // unweighted mean over all classes
  double oa = 0.0;           // trace / total
};

/// Per-class precision/recall/F1 plus overall accuracy. Classes with no
/// predictions or no truth get 0 for the undefined ratios; fully absent
/// classes additionally carry the `absent` flag.
MetricsReport metrics(const ConfusionMatrix& cm);

/// Per-point normalized Shannon entropy H / ln K, each value in [0, 1].
std::vector<double> entropy_map(const Eigen::MatrixXd& probs);

}  // namespace wsseg
