#include "wsseg/point_cloud.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

namespace wsseg {

void PointCloud::validate() const {
  for (const auto& p : coords) {
    if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2])) {
      throw std::invalid_argument("PointCloud: non-finite coordinate");
    }
  }
  if (feature_dim < 0) {
    throw std::invalid_argument("PointCloud: negative feature_dim");
  }
  if (features.size() != coords.size() * static_cast<std::size_t>(feature_dim)) {
    throw std::invalid_argument(
        "PointCloud: feature row count does not match point count");
  }
}

void LabelArray::validate(int num_classes) const {
  for (const int l : labels) {
    if (l != kUnlabeled && (l < 0 || l >= num_classes)) {
      throw std::invalid_argument("LabelArray: label out of range");
    }
  }
}

void ClassCatalog::validate() const {
  if (count() < 2) {
    throw std::invalid_argument("ClassCatalog: need at least 2 classes");
  }
  std::set<std::string> seen(class_names.begin(), class_names.end());
  if (seen.size() != class_names.size()) {
    throw std::invalid_argument("ClassCatalog: duplicate class name");
  }
}

namespace {

struct Cell {
  std::int64_t x, y, z;
  bool operator==(const Cell&) const = default;
};

struct CellHasher {
  std::size_t operator()(const Cell& c) const {
    std::uint64_t h = static_cast<std::uint64_t>(c.x) * 0x9e3779b97f4a7c15ULL;
    h ^= static_cast<std::uint64_t>(c.y) * 0xc2b2ae3d27d4eb4fULL;
    h ^= static_cast<std::uint64_t>(c.z) * 0x165667b19e3779f9ULL;
    h ^= h >> 29;
    return static_cast<std::size_t>(h);
  }
};

Cell cell_of(const Vec3& p, double cell_size) {
  return Cell{static_cast<std::int64_t>(std::floor(p[0] / cell_size)),
              static_cast<std::int64_t>(std::floor(p[1] / cell_size)),
              static_cast<std::int64_t>(std::floor(p[2] / cell_size))};
}

}  // namespace

SubsampleResult grid_subsample(const PointCloud& cloud, double cell_size) {
  if (cell_size <= 0.0) {
    throw std::invalid_argument("grid_subsample: cell_size must be positive");
  }
  cloud.validate();

  SubsampleResult out;
  out.cloud.feature_dim = cloud.feature_dim;
  if (cloud.size() == 0) {
    return out;
  }

  const int fdim = cloud.feature_dim;

  // Kept points are numbered in first-touch order of their cells, which keeps
  // the output independent of hash-map iteration order.
  struct Accum {
    Vec3 coord_sum{0, 0, 0};
    std::vector<double> feat_sum;
    int count = 0;
    int first_source = -1;
  };
  std::unordered_map<Cell, int, CellHasher> cell_to_kept;
  std::vector<Accum> accums;
  cell_to_kept.reserve(cloud.size());

  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Cell c = cell_of(cloud.coords[i], cell_size);
    auto [it, inserted] = cell_to_kept.try_emplace(c, static_cast<int>(accums.size()));
    if (inserted) {
      accums.emplace_back();
      accums.back().feat_sum.assign(static_cast<std::size_t>(fdim), 0.0);
      accums.back().first_source = static_cast<int>(i);
    }
    Accum& a = accums[static_cast<std::size_t>(it->second)];
    for (int d = 0; d < 3; ++d) a.coord_sum[d] += cloud.coords[i][d];
    for (int d = 0; d < fdim; ++d) a.feat_sum[static_cast<std::size_t>(d)] += cloud.feature_row(i)[d];
    ++a.count;
  }

  const std::size_t kept_n = accums.size();
  out.cloud.coords.resize(kept_n);
  out.cloud.features.resize(kept_n * static_cast<std::size_t>(fdim));
  for (std::size_t k = 0; k < kept_n; ++k) {
    const Accum& a = accums[k];
    for (int d = 0; d < 3; ++d) out.cloud.coords[k][d] = a.coord_sum[d] / a.count;
    for (int d = 0; d < fdim; ++d) {
      out.cloud.features[k * static_cast<std::size_t>(fdim) + static_cast<std::size_t>(d)] =
          a.feat_sum[static_cast<std::size_t>(d)] / a.count;
    }
  }

  // Nearest kept point per source point. A source point's own-cell centroid is
  // at most sqrt(3) * cell_size away, so any nearer centroid lies within two
  // cells along each axis.
  std::unordered_map<Cell, std::vector<int>, CellHasher> centroid_cells;
  centroid_cells.reserve(kept_n);
  for (std::size_t k = 0; k < kept_n; ++k) {
    centroid_cells[cell_of(out.cloud.coords[k], cell_size)].push_back(static_cast<int>(k));
  }

  out.mapping.source_to_kept.resize(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Cell c = cell_of(cloud.coords[i], cell_size);
    int best = -1;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::int64_t dx = -2; dx <= 2; ++dx) {
      for (std::int64_t dy = -2; dy <= 2; ++dy) {
        for (std::int64_t dz = -2; dz <= 2; ++dz) {
          const auto it = centroid_cells.find(Cell{c.x + dx, c.y + dy, c.z + dz});
          if (it == centroid_cells.end()) continue;
          for (const int k : it->second) {
            const double d2 = squared_dist(cloud.coords[i], out.cloud.coords[static_cast<std::size_t>(k)]);
            if (d2 < best_d2 || (d2 == best_d2 && k < best)) {
              best_d2 = d2;
              best = k;
            }
          }
        }
      }
    }
    out.mapping.source_to_kept[i] = best;
  }

  // Representative source per kept point: the assigned source nearest to the
  // centroid, falling back to the cell's first source if nothing was assigned.
  out.mapping.kept_to_source.assign(kept_n, -1);
  std::vector<double> rep_d2(kept_n, std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const int k = out.mapping.source_to_kept[i];
    const double d2 = squared_dist(cloud.coords[i], out.cloud.coords[static_cast<std::size_t>(k)]);
    if (d2 < rep_d2[static_cast<std::size_t>(k)]) {
      rep_d2[static_cast<std::size_t>(k)] = d2;
      out.mapping.kept_to_source[static_cast<std::size_t>(k)] = static_cast<int>(i);
    }
  }
  for (std::size_t k = 0; k < kept_n; ++k) {
    if (out.mapping.kept_to_source[k] < 0) {
      out.mapping.kept_to_source[k] = accums[k].first_source;
    }
  }

  return out;
}

LabelArray subsample_labels(const SubsampleMapping& mapping,
                            const LabelArray& source_labels) {
  if (source_labels.size() != mapping.source_count()) {
    throw std::invalid_argument("subsample_labels: label count mismatch");
  }
  LabelArray out;
  out.labels.resize(mapping.kept_count());
  for (std::size_t k = 0; k < mapping.kept_count(); ++k) {
    out.labels[k] = source_labels.labels[static_cast<std::size_t>(mapping.kept_to_source[k])];
  }
  return out;
}

SpatialIndex::SpatialIndex(const std::vector<Vec3>& points, double cell_size)
    : points_(points), cell_(cell_size) {
  if (cell_size <= 0.0) {
    throw std::invalid_argument("SpatialIndex: cell_size must be positive");
  }
  cells_.reserve(points_.size());
  for (std::size_t i = 0; i < points_.size(); ++i) {
    cells_[key_of(points_[i])].push_back(static_cast<int>(i));
  }
}

SpatialIndex::CellKey SpatialIndex::key_of(const Vec3& p) const {
  return CellKey{static_cast<std::int64_t>(std::floor(p[0] / cell_)),
                 static_cast<std::int64_t>(std::floor(p[1] / cell_)),
                 static_cast<std::int64_t>(std::floor(p[2] / cell_))};
}

std::vector<int> SpatialIndex::radius_query(const Vec3& center,
                                            double radius) const {
  if (radius <= 0.0) {
    throw std::invalid_argument("radius_query: radius must be positive");
  }
  std::vector<int> hits;
  const double r2 = radius * radius;
  const CellKey c = key_of(center);
  const std::int64_t reach = static_cast<std::int64_t>(std::ceil(radius / cell_));
  for (std::int64_t dx = -reach; dx <= reach; ++dx) {
    for (std::int64_t dy = -reach; dy <= reach; ++dy) {
      for (std::int64_t dz = -reach; dz <= reach; ++dz) {
        const auto it = cells_.find(CellKey{c.x + dx, c.y + dy, c.z + dz});
        if (it == cells_.end()) continue;
        for (const int i : it->second) {
          if (squared_dist(points_[static_cast<std::size_t>(i)], center) <= r2) {
            hits.push_back(i);
          }
        }
      }
    }
  }
  std::sort(hits.begin(), hits.end());
  return hits;
}

std::vector<int> SpatialIndex::knn(const Vec3& query, int k) const {
  if (k < 1) {
    throw std::invalid_argument("knn: k must be at least 1");
  }
  const std::size_t want = std::min<std::size_t>(static_cast<std::size_t>(k), points_.size());
  if (want == 0) return {};
  std::vector<std::pair<double, int>> cand;  // (squared distance, index)

  // Expanding shell search: grow the Chebyshev ring until the closest possible
  // point of an unsearched ring cannot beat the current k-th best.
  const CellKey c = key_of(query);
  std::int64_t ring = 0;
  while (true) {
    for (std::int64_t dx = -ring; dx <= ring; ++dx) {
      for (std::int64_t dy = -ring; dy <= ring; ++dy) {
        for (std::int64_t dz = -ring; dz <= ring; ++dz) {
          if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring) continue;
          const auto it = cells_.find(CellKey{c.x + dx, c.y + dy, c.z + dz});
          if (it == cells_.end()) continue;
          for (const int i : it->second) {
            cand.emplace_back(squared_dist(points_[static_cast<std::size_t>(i)], query), i);
          }
        }
      }
    }
    if (cand.size() >= points_.size()) break;
    if (cand.size() >= want) {
      std::nth_element(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(want) - 1,
                       cand.end());
      const double kth_d2 = cand[want - 1].first;
      // Points in unsearched rings are at least ring * cell_ away.
      const double safe = static_cast<double>(ring) * cell_;
      if (safe * safe >= kth_d2) break;
    }
    ++ring;
  }

  std::sort(cand.begin(), cand.end());
  cand.resize(want);
  std::vector<int> out;
  out.reserve(want);
  for (const auto& [d2, i] : cand) out.push_back(i);
  return out;
}

std::vector<int> radius_query(const PointCloud& cloud, const Vec3& center,
                              double radius) {
  SpatialIndex index(cloud.coords, radius);
  return index.radius_query(center, radius);
}

std::vector<Vec3> augment(const std::vector<Vec3>& coords,
                          const AugmentParams& params, RngStream& rng) {
  const double angle = params.rotate ? rng.uniform(0.0, 6.283185307179586476925286766559) : 0.0;
  const double scale = rng.uniform(params.scale_min, params.scale_max);
  const double ca = std::cos(angle);
  const double sa = std::sin(angle);

  Vec3 center{0, 0, 0};
  if (!coords.empty()) {
    for (const auto& p : coords) {
      for (int d = 0; d < 3; ++d) center[d] += p[d];
    }
    for (int d = 0; d < 3; ++d) center[d] /= static_cast<double>(coords.size());
  }

  std::vector<Vec3> out(coords.size());
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const double x = coords[i][0] - center[0];
    const double y = coords[i][1] - center[1];
    const double z = coords[i][2] - center[2];
    Vec3 p{ca * x - sa * y, sa * x + ca * y, z};
    for (int d = 0; d < 3; ++d) p[d] = center[d] + scale * p[d];
    if (params.jitter_sigma > 0.0) {
      for (int d = 0; d < 3; ++d) p[d] += rng.normal(0.0, params.jitter_sigma);
    }
    out[i] = p;
  }
  return out;
}

}  // namespace wsseg
