#include "wsseg/scene.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "wsseg/rng.hpp"

namespace wsseg {

void SceneSpec::validate() const {
  if (extent <= 0.0) throw std::invalid_argument("SceneSpec: extent must be positive");
  if (density <= 0.0) throw std::invalid_argument("SceneSpec: density must be positive");
  if (ground_roughness < 0.0)
    throw std::invalid_argument("SceneSpec: ground_roughness must be >= 0");
  if (building_count < 0 || tree_count < 0 || pole_count < 0)
    throw std::invalid_argument("SceneSpec: class counts must be >= 0");
  if (building_size <= 0.0)
    throw std::invalid_argument("SceneSpec: building_size must be positive");
  if (tree_radius <= 0.0)
    throw std::invalid_argument("SceneSpec: tree_radius must be positive");
}

namespace {

struct Building {
  double cx, cy, wx, wy;  // center and half-extents
  double base_z, roof_z;

  bool contains(double x, double y, double margin = 0.0) const {
    return std::abs(x - cx) <= wx + margin && std::abs(y - cy) <= wy + margin;
  }
};

struct Tree {
  double cx, cy, radius;
  double center_z, half_height;  // canopy ellipsoid
};

struct Pole {
  double cx, cy, base_z, height;
};

// Smooth deterministic undulation; no rng so terrain height is a pure
// function of position.
double terrain(const SceneSpec& spec, double x, double y) {
  return spec.ground_roughness *
         (std::sin(0.07 * x) * std::cos(0.05 * y) +
          0.5 * std::sin(0.023 * x + 1.3) * std::sin(0.031 * y + 0.7));
}

// Per-class reflectance prior for the single auxiliary channel; noisy enough
// that intensity alone cannot separate the classes.
constexpr double kIntensityBase[4] = {0.35, 0.65, 0.15, 0.55};
constexpr double kIntensityNoise = 0.25;

}  // namespace

SceneResult synth_scene(const SceneSpec& spec) {
  spec.validate();
  RngStream rng(spec.seed, "scene");

  SceneResult result;
  result.catalog.class_names = {"ground", "building", "tree", "pole"};
  if (spec.building_count == 0)
    result.warnings.push_back("building: zero count, class omitted");
  if (spec.tree_count == 0)
    result.warnings.push_back("tree: zero count, class omitted");
  if (spec.pole_count == 0)
    result.warnings.push_back("pole: zero count, class omitted");

  // Layout pass (fixed rng order: buildings, trees, poles).
  std::vector<Building> buildings;
  for (int i = 0; i < spec.building_count; ++i) {
    Building b;
    b.cx = rng.uniform(0.15, 0.85) * spec.extent;
    b.cy = rng.uniform(0.15, 0.85) * spec.extent;
    b.wx = 0.5 * spec.building_size * rng.uniform(0.7, 1.3);
    b.wy = 0.5 * spec.building_size * rng.uniform(0.7, 1.3);
    b.base_z = terrain(spec, b.cx, b.cy);
    b.roof_z = b.base_z + rng.uniform(5.0, 10.0);
    buildings.push_back(b);
  }
  const auto in_building = [&](double x, double y, double margin = 0.0) {
    for (const Building& b : buildings)
      if (b.contains(x, y, margin)) return true;
    return false;
  };

  std::vector<Tree> trees;
  for (int i = 0; i < spec.tree_count; ++i) {
    double cx = 0.0, cy = 0.0;
    bool placed = false;
    for (int attempt = 0; attempt < 20 && !placed; ++attempt) {
      cx = rng.uniform(0.05, 0.95) * spec.extent;
      cy = rng.uniform(0.05, 0.95) * spec.extent;
      placed = !in_building(cx, cy, spec.tree_radius);
    }
    if (!placed) continue;  // crowded layout; drop this tree
    Tree t;
    t.cx = cx;
    t.cy = cy;
    t.radius = spec.tree_radius * rng.uniform(0.7, 1.4);
    const double trunk = rng.uniform(1.5, 2.5);
    t.half_height = t.radius * rng.uniform(0.6, 0.9);
    t.center_z = terrain(spec, cx, cy) + trunk + t.half_height;
    trees.push_back(t);
  }

  std::vector<Pole> poles;
  for (int i = 0; i < spec.pole_count; ++i) {
    double cx = 0.0, cy = 0.0;
    bool placed = false;
    for (int attempt = 0; attempt < 20 && !placed; ++attempt) {
      cx = rng.uniform(0.02, 0.98) * spec.extent;
      cy = rng.uniform(0.02, 0.98) * spec.extent;
      placed = !in_building(cx, cy, 0.5);
    }
    if (!placed) continue;
    Pole p;
    p.cx = cx;
    p.cy = cy;
    p.base_z = terrain(spec, cx, cy);
    p.height = rng.uniform(4.0, 8.0);
    poles.push_back(p);
  }

  PointCloud& cloud = result.cloud;
  cloud.feature_dim = 1;
  std::vector<int>& labels = result.labels.labels;

  const auto emit = [&](double x, double y, double z, int cls) {
    cloud.coords.push_back({x, y, z});
    const double intensity =
        std::clamp(kIntensityBase[cls] + kIntensityNoise * rng.normal(), 0.0, 1.0);
    cloud.features.push_back(intensity);
    labels.push_back(cls);
  };

  // Areal pass: the base budget of extent^2 * density points, each classified
  // by footprint (building roof beats tree canopy beats ground) so the total
  // stays at the budget.
  const long long base_count =
      static_cast<long long>(std::llround(spec.extent * spec.extent * spec.density));
  for (long long i = 0; i < base_count; ++i) {
    const double x = rng.uniform(0.0, spec.extent);
    const double y = rng.uniform(0.0, spec.extent);

    const Building* roof = nullptr;
    for (const Building& b : buildings)
      if (b.contains(x, y)) {
        roof = &b;
        break;
      }
    if (roof != nullptr) {
      emit(x, y, roof->roof_z + 0.03 * rng.normal(), kBuilding);
      continue;
    }

    const Tree* canopy = nullptr;
    double d2 = 0.0;
    for (const Tree& t : trees) {
      d2 = (x - t.cx) * (x - t.cx) + (y - t.cy) * (y - t.cy);
      if (d2 <= t.radius * t.radius) {
        canopy = &t;
        break;
      }
    }
    if (canopy != nullptr) {
      // Solid ellipsoid: sample the vertical chord under the canopy surface.
      const double rim =
          std::sqrt(std::max(0.0, 1.0 - d2 / (canopy->radius * canopy->radius)));
      const double z = canopy->center_z +
                       canopy->half_height * rim * rng.uniform(-1.0, 1.0);
      emit(x, y, z, kTree);
      continue;
    }

    emit(x, y, terrain(spec, x, y) + 0.03 * rng.normal(), kGround);
  }

  // Facades: sparse vertical walls hanging from each roof edge.
  constexpr double kFacadeDensity = 0.3;  // points per square meter of wall
  for (const Building& b : buildings) {
    const double height = b.roof_z - b.base_z;
    const double edges[4][4] = {
        // x0, y0, dx, dy (wall segment endpoints as start + direction)
        {b.cx - b.wx, b.cy - b.wy, 2.0 * b.wx, 0.0},
        {b.cx - b.wx, b.cy + b.wy, 2.0 * b.wx, 0.0},
        {b.cx - b.wx, b.cy - b.wy, 0.0, 2.0 * b.wy},
        {b.cx + b.wx, b.cy - b.wy, 0.0, 2.0 * b.wy},
    };
    for (const auto& e : edges) {
      const double len = std::abs(e[2]) + std::abs(e[3]);
      const int count = std::max(1, static_cast<int>(std::lround(len * height * kFacadeDensity)));
      for (int i = 0; i < count; ++i) {
        const double t = rng.uniform(0.0, 1.0);
        const double h = rng.uniform(0.05, 1.0) * height;
        emit(e[0] + t * e[2] + 0.03 * rng.normal(),
             e[1] + t * e[3] + 0.03 * rng.normal(), b.base_z + h, kBuilding);
      }
    }
  }

  // Poles: thin vertical strings of points.
  for (const Pole& p : poles) {
    const int count = std::max(4, static_cast<int>(std::lround(p.height / 0.5)));
    for (int i = 0; i < count; ++i) {
      const double h = (static_cast<double>(i) + 0.5) / static_cast<double>(count) * p.height;
      emit(p.cx + 0.02 * rng.normal(), p.cy + 0.02 * rng.normal(),
           p.base_z + h, kPole);
    }
  }

  cloud.validate();
  result.labels.validate(result.catalog.count());
  return result;
}

}  // namespace wsseg
