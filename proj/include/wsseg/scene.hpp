#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wsseg/point_cloud.hpp"

namespace wsseg {

/// Layout parameters for the synthetic ALS-style benchmark scene.
struct SceneSpec {
  double extent = 100.0;   // square side length, meters
  double density = 5.0;    // points per square meter
  double ground_roughness = 2.8;  // undulation amplitude of the terrain, meters
  int building_count = 12;
  double building_size = 14.0;  // mean footprint edge, meters
  int tree_count = 95;
  double tree_radius = 3.5;  // mean canopy radius, meters
  int pole_count = 50;
  std::uint64_t seed = 0;

  void validate() const;
};

enum SceneClass : int { kGround = 0, kBuilding = 1, kTree = 2, kPole = 3 };

struct SceneResult {
  PointCloud cloud;  // one auxiliary channel: noisy per-class intensity
  LabelArray labels;
  ClassCatalog catalog;
  std::vector<std::string> warnings;  // classes omitted for zero counts
};

/// Deterministic labeled scene: undulating ground, flat box roofs with
/// vertical facades, ellipsoidal tree canopies, and thin vertical poles.
/// Total point count stays within a few percent of extent^2 * density, and
/// class populations are imbalanced by construction (ground dominates).
SceneResult synth_scene(const SceneSpec& spec);

}  // namespace wsseg
