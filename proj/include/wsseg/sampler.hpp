#pragma once

#include <vector>

#include "wsseg/point_cloud.hpp"
#include "wsseg/rng.hpp"
#include "wsseg/weak_labels.hpp"

namespace wsseg {

struct BatchSpec {
  double radius = 30.0;       // meters
  int point_cap = 120000;     // maximum points per training batch
  double potential_exponent = 2.0;  // falloff of the per-visit penalty

  void validate() const;
};

/// Per-point scalar steering training-batch center selection. The point with
/// the minimum potential becomes the next center; covered points are
/// penalized by distance so visit counts stay in a close range.
struct PotentialField {
  std::vector<double> potentials;

  std::size_t size() const { return potentials.size(); }
};

struct MiniBatch {
  std::vector<int> indices;         // distinct, ascending
  Vec3 center{0, 0, 0};
  std::vector<char> labeled_mask;   // parallel to indices
  int center_index = -1;            // source point index for train batches
};

/// I.i.d. uniform (0, 1) potentials, deterministic per stream state.
PotentialField init_potentials(std::size_t n, RngStream& rng);

/// Draws the minimum-potential point as center, selects the ball around it
/// (nearest point_cap points when oversized), and penalizes every selected
/// point's potential by (1 - d/r)^e. The index must cover the same cloud at
/// cell size spec.radius.
MiniBatch next_train_batch(PotentialField& field, const PointCloud& cloud,
                           const SpatialIndex& index, const BatchSpec& spec,
                           const WeakLabelSet& weak);

/// Deterministic test-time tiling: circle centers on a horizontal square grid
/// with spacing radius (adjacent circles overlap 50% along each axis), one
/// batch per occupied grid cell, centered on the cell. Membership is by
/// horizontal distance — each batch is the vertical cylinder over its circle —
/// so every point lands in its own cell's batch and coverage is total. No
/// point cap applies.
std::vector<MiniBatch> test_batches(const PointCloud& cloud,
                                    const BatchSpec& spec);

}  // namespace wsseg
