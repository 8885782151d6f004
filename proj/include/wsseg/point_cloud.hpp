#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "wsseg/rng.hpp"

namespace wsseg {

using Vec3 = std::array<double, 3>;

inline double squared_dist(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

/// N points with 3D coordinates plus F auxiliary feature channels.
struct PointCloud {
  std::vector<Vec3> coords;
  std::vector<double> features;  // row-major, size() == coords.size() * feature_dim
  int feature_dim = 0;

  std::size_t size() const { return coords.size(); }

  const double* feature_row(std::size_t i) const {
    return features.data() + i * static_cast<std::size_t>(feature_dim);
  }

  /// Throws std::invalid_argument on non-finite coordinates or a feature
  /// array whose row count does not match the point count.
  void validate() const;
};

/// Per-point class indices; kUnlabeled marks entries without a label.
struct LabelArray {
  static constexpr int kUnlabeled = -1;

  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }

  /// Every non-ignored entry must lie in [0, num_classes).
  void validate(int num_classes) const;
};

struct ClassCatalog {
  std::vector<std::string> class_names;

  int count() const { return static_cast<int>(class_names.size()); }

  /// K >= 2 and unique names.
  void validate() const;
};

/// Correspondence between a subsampled cloud and its source cloud.
struct SubsampleMapping {
  std::vector<int> kept_to_source;  // representative source point per kept point
  std::vector<int> source_to_kept;  // nearest kept point per source point

  std::size_t kept_count() const { return kept_to_source.size(); }
  std::size_t source_count() const { return source_to_kept.size(); }
};

struct SubsampleResult {
  PointCloud cloud;
  SubsampleMapping mapping;
};

/// One representative point (cell centroid) per occupied cubic cell of side
/// cell_size. Every source point is mapped to the kept point nearest to it,
/// ties broken by lowest kept index.
SubsampleResult grid_subsample(const PointCloud& cloud, double cell_size);

/// Copies each kept point's value onto all source points it represents.
template <typename T>
std::vector<T> transfer_labels(const SubsampleMapping& mapping,
                               const std::vector<T>& sub_values) {
  if (sub_values.size() != mapping.kept_count()) {
    throw std::invalid_argument(
        "transfer_labels: value count does not match kept point count");
  }
  std::vector<T> out(mapping.source_count());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = sub_values[static_cast<std::size_t>(mapping.source_to_kept[i])];
  }
  return out;
}

/// Labels for the subsampled cloud, taken from each kept point's
/// representative source point.
LabelArray subsample_labels(const SubsampleMapping& mapping,
                            const LabelArray& source_labels);

/// Uniform hash grid over a fixed set of points. Exact ball and kNN queries.
class SpatialIndex {
 public:
  SpatialIndex(const std::vector<Vec3>& points, double cell_size);

  /// Indices with Euclidean distance <= radius from center, ascending.
  std::vector<int> radius_query(const Vec3& center, double radius) const;

  /// The k nearest points to the query (the query point itself included when
  /// it is part of the indexed set). Returns fewer than k only when the
  /// indexed set is smaller than k. Ties broken by lowest index.
  std::vector<int> knn(const Vec3& query, int k) const;

  std::size_t size() const { return points_.size(); }
  const std::vector<Vec3>& points() const { return points_; }

 private:
  struct CellKey {
    std::int64_t x, y, z;
    bool operator==(const CellKey&) const = default;
  };
  struct CellHash {
    std::size_t operator()(const CellKey& c) const {
      std::uint64_t h = static_cast<std::uint64_t>(c.x) * 0x9e3779b97f4a7c15ULL;
      h ^= static_cast<std::uint64_t>(c.y) * 0xc2b2ae3d27d4eb4fULL;
      h ^= static_cast<std::uint64_t>(c.z) * 0x165667b19e3779f9ULL;
      h ^= h >> 29;
      return static_cast<std::size_t>(h);
    }
  };

  CellKey key_of(const Vec3& p) const;

  std::vector<Vec3> points_;
  double cell_;
  std::unordered_map<CellKey, std::vector<int>, CellHash> cells_;
};

/// Hash-grid ball query on a cloud. See SpatialIndex::radius_query; callers
/// issuing many queries should build a SpatialIndex once instead.
std::vector<int> radius_query(const PointCloud& cloud, const Vec3& center,
                              double radius);

struct AugmentParams {
  bool rotate = true;        // rotation about the vertical axis, U[0, 2pi)
  double scale_min = 0.9;    // isotropic scale range
  double scale_max = 1.1;
  double jitter_sigma = 0.01;  // per-coordinate Gaussian noise, meters
};

/// Rotation about the vertical axis, isotropic scaling, then coordinate
/// jitter, in that order. Rotation and scaling are centered on the batch
/// centroid. Deterministic given the stream state.
std::vector<Vec3> augment(const std::vector<Vec3>& coords,
                          const AugmentParams& params, RngStream& rng);

}  // namespace wsseg
