#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "wsseg/metrics.hpp"
#include "wsseg/point_cloud.hpp"
#include "wsseg/scene.hpp"
#include "wsseg/trainer.hpp"

namespace wsseg {

struct CloudFile {
  PointCloud cloud;
  std::optional<LabelArray> labels;
};

/// Text format: header "# columns=<n> features=<F> has_label=<0|1>", then one
/// "x y z f1 .. fF [label]" line per point, full 64-bit precision. Paths
/// ending in ".bin" use an equivalent little-endian binary layout instead.
void write_cloud(const std::string& path, const PointCloud& cloud,
                 const LabelArray* labels = nullptr);
CloudFile read_cloud(const std::string& path);

/// Stream-level codecs (used by the path dispatchers above and the tests).
void write_cloud_text(std::ostream& out, const PointCloud& cloud,
                      const LabelArray* labels);
CloudFile read_cloud_text(std::istream& in);
void write_cloud_binary(std::ostream& out, const PointCloud& cloud,
                        const LabelArray* labels);
CloudFile read_cloud_binary(std::istream& in);

/// Flat key=value schedule config; '#' comments and blank lines allowed;
/// unknown keys rejected with the offending line number.
TrainSchedule parse_schedule(std::istream& in);
void write_schedule(std::ostream& out, const TrainSchedule& schedule);

/// Same key=value shape for scene layouts.
SceneSpec parse_scene_spec(std::istream& in);
void write_scene_spec(std::ostream& out, const SceneSpec& spec);

/// Class catalog: one class name per line, '#' comments allowed.
ClassCatalog read_catalog(std::istream& in);
void write_catalog(std::ostream& out, const ClassCatalog& catalog);

/// Training log CSV: epoch,stage,l_seg,l_ent,l_epc,l_pl,lambda_ent,
/// lambda_epc,lambda_pl,seconds.
void write_train_log(std::ostream& out, const std::vector<EpochLogRow>& log);

/// Aligned human-readable metrics table.
void print_metrics(std::ostream& out, const MetricsReport& report,
                   const ClassCatalog& catalog);
/// Machine-readable counterpart: per-class rows plus oa/avg_f1 summary rows.
void write_metrics_csv(std::ostream& out, const MetricsReport& report,
                       const ClassCatalog& catalog);

/// Per-point normalized entropy next to its coordinates, for map rendering.
void write_entropy_map(std::ostream& out, const PointCloud& cloud,
                       const std::vector<double>& values);

}  // namespace wsseg
