#include "wsseg/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <utility>

namespace wsseg {

void BatchSpec::validate() const {
  if (radius <= 0.0) throw std::invalid_argument("BatchSpec: radius must be positive");
  if (point_cap < 1) throw std::invalid_argument("BatchSpec: point_cap must be >= 1");
  if (potential_exponent <= 0.0) throw std::invalid_argument("BatchSpec: potential_exponent must be positive");
}

PotentialField init_potentials(std::size_t n, RngStream& rng) {
  if (n < 1) throw std::invalid_argument("init_potentials: n must be >= 1");
  PotentialField field;
  field.potentials.resize(n);
  for (auto& p : field.potentials) p = rng.uniform_open01();
  return field;
}

namespace {

std::vector<char> labeled_mask_for(const std::vector<int>& indices,
                                   const WeakLabelSet& weak) {
  std::vector<char> mask(indices.size(), 0);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    mask[i] = weak.contains(indices[i]) ? 1 : 0;
  }
  return mask;
}

}  // namespace

MiniBatch next_train_batch(PotentialField& field, const PointCloud& cloud,
                           const SpatialIndex& index, const BatchSpec& spec,
                           const WeakLabelSet& weak) {
  spec.validate();
  if (field.size() != cloud.size()) {
    throw std::invalid_argument("next_train_batch: field size does not match cloud");
  }
  if (cloud.size() == 0) {
    throw std::invalid_argument("next_train_batch: empty cloud");
  }

  int center_idx = 0;
  double min_pot = field.potentials[0];
  for (std::size_t i = 1; i < field.size(); ++i) {
    if (field.potentials[i] < min_pot) {
      min_pot = field.potentials[i];
      center_idx = static_cast<int>(i);
    }
  }

  MiniBatch batch;
  batch.center = cloud.coords[static_cast<std::size_t>(center_idx)];
  batch.center_index = center_idx;
  batch.indices = index.radius_query(batch.center, spec.radius);

  if (static_cast<int>(batch.indices.size()) > spec.point_cap) {
    // Keep the point_cap nearest points; ties by distance fall back to index.
    std::vector<std::pair<double, int>> by_dist;
    by_dist.reserve(batch.indices.size());
    for (const int i : batch.indices) {
      by_dist.emplace_back(squared_dist(cloud.coords[static_cast<std::size_t>(i)], batch.center), i);
    }
    std::nth_element(by_dist.begin(), by_dist.begin() + spec.point_cap - 1, by_dist.end());
    std::sort(by_dist.begin(), by_dist.begin() + spec.point_cap);
    batch.indices.clear();
    for (int j = 0; j < spec.point_cap; ++j) batch.indices.push_back(by_dist[static_cast<std::size_t>(j)].second);
    std::sort(batch.indices.begin(), batch.indices.end());
  }

  for (const int i : batch.indices) {
    const double d = std::sqrt(squared_dist(cloud.coords[static_cast<std::size_t>(i)], batch.center));
    const double falloff = std::max(0.0, 1.0 - d / spec.radius);
    field.potentials[static_cast<std::size_t>(i)] += std::pow(falloff, spec.potential_exponent);
  }

  batch.labeled_mask = labeled_mask_for(batch.indices, weak);
  return batch;
}

std::vector<MiniBatch> test_batches(const PointCloud& cloud,
                                    const BatchSpec& spec) {
  spec.validate();
  if (cloud.size() == 0) {
    throw std::invalid_argument("test_batches: empty cloud");
  }

  Vec3 lo = cloud.coords[0];
  for (const auto& p : cloud.coords) {
    lo[0] = std::min(lo[0], p[0]);
    lo[1] = std::min(lo[1], p[1]);
  }

  const double r = spec.radius;
  // Horizontal r-by-r cells anchored at the bounding-box minimum; the map
  // keeps them in row-major order so the output is fully deterministic.
  std::map<std::pair<long, long>, std::vector<int>> cells;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const long cx = static_cast<long>(std::floor((cloud.coords[i][0] - lo[0]) / r));
    const long cy = static_cast<long>(std::floor((cloud.coords[i][1] - lo[1]) / r));
    cells[{cx, cy}].push_back(static_cast<int>(i));
  }

  std::vector<MiniBatch> batches;
  batches.reserve(cells.size());
  for (const auto& [cell, members] : cells) {
    (void)members;
    MiniBatch b;
    b.center = {lo[0] + (static_cast<double>(cell.first) + 0.5) * r,
                lo[1] + (static_cast<double>(cell.second) + 0.5) * r, 0.0};
    // A circle of radius r around the cell center only reaches the 3x3 cell
    // neighborhood (cells are r wide).
    for (long cx = cell.first - 1; cx <= cell.first + 1; ++cx) {
      for (long cy = cell.second - 1; cy <= cell.second + 1; ++cy) {
        const auto it = cells.find({cx, cy});
        if (it == cells.end()) continue;
        for (const int i : it->second) {
          const double dx = cloud.coords[static_cast<std::size_t>(i)][0] - b.center[0];
          const double dy = cloud.coords[static_cast<std::size_t>(i)][1] - b.center[1];
          if (dx * dx + dy * dy <= r * r) b.indices.push_back(i);
        }
      }
    }
    std::sort(b.indices.begin(), b.indices.end());
    b.labeled_mask.assign(b.indices.size(), 0);
    batches.push_back(std::move(b));
  }
  return batches;
}

}  // namespace wsseg
