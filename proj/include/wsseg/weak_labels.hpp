#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "wsseg/point_cloud.hpp"
#include "wsseg/rng.hpp"

namespace wsseg {

/// Sparse set of labeled point indices drawn from ground truth.
struct WeakLabelSet {
  std::vector<int> labeled_indices;  // sorted ascending
  std::vector<int> labels;           // class of labeled_indices[i]
  double ratio = 0.0;                // realized M / N
  int per_class_cap = 0;
  std::uint64_t seed = 0;
  std::vector<int> empty_classes;    // classes with zero population, if any

  std::size_t count() const { return labeled_indices.size(); }

  bool contains(int point_index) const;

  /// Label of the given point, or LabelArray::kUnlabeled.
  int label_of(int point_index) const;
};

/// Per-class selection count: min(cap, floor(0.1 * population), population).
std::vector<int> weak_label_quota(const std::vector<int>& class_populations,
                                  int per_class_cap);

/// Draws up to per_class_cap labels per class uniformly without replacement,
/// never exceeding 10% of a class's population. When a parent set is given,
/// its selections are kept and only the remainder is drawn fresh, so smaller
/// settings nest inside larger ones.
WeakLabelSet sample_weak_labels(const LabelArray& truth,
                                const ClassCatalog& catalog, int per_class_cap,
                                RngStream& rng,
                                const WeakLabelSet* parent = nullptr);

/// Sorted indices of [0, cloud_size) that carry no weak label.
std::vector<int> unlabeled_complement(std::size_t cloud_size,
                                      const WeakLabelSet& weak);

/// Smallest cap whose total quota reaches the target label ratio, or the
/// largest class population if the ratio is unreachable.
int choose_cap_for_ratio(const std::vector<int>& class_populations,
                         double target_ratio);

/// Class populations of a label array (ignored entries excluded).
std::vector<int> class_populations(const LabelArray& truth, int num_classes);

void write_weak_labels(std::ostream& out, const WeakLabelSet& weak);
WeakLabelSet read_weak_labels(std::istream& in);

}  // namespace wsseg
