// Command-line surface for the weakly supervised segmentation toolkit:
// scene synthesis, weak-label sampling, two-stage training, full-cloud
// prediction, evaluation, and the ablation grid.

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "wsseg/errors.hpp"
#include "wsseg/io.hpp"
#include "wsseg/losses.hpp"
#include "wsseg/metrics.hpp"
#include "wsseg/model.hpp"
#include "wsseg/point_cloud.hpp"
#include "wsseg/rng.hpp"
#include "wsseg/scene.hpp"
#include "wsseg/trainer.hpp"
#include "wsseg/weak_labels.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitDivergence = 3;

std::ifstream open_in(const std::string& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw wsseg::DataError(path + ": cannot open");
  return in;
}

std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw wsseg::DataError(path + ": cannot open for writing");
  return out;
}

wsseg::LabelArray require_labels(const wsseg::CloudFile& file,
                                 const std::string& path) {
  if (!file.labels.has_value())
    throw wsseg::DataError(path + ": cloud carries no labels");
  return *file.labels;
}

wsseg::ClassCatalog catalog_for(const std::optional<std::string>& path,
                                const wsseg::LabelArray& truth) {
  if (path.has_value()) {
    auto in = open_in(*path);
    return wsseg::read_catalog(in);
  }
  int max_label = 1;
  for (int label : truth.labels) max_label = std::max(max_label, label);
  wsseg::ClassCatalog catalog;
  for (int c = 0; c <= max_label; ++c)
    catalog.class_names.push_back("class" + std::to_string(c));
  return catalog;
}

void apply_preset(const std::string& preset, wsseg::TrainSchedule& schedule) {
  schedule.use_er = preset == "er" || preset == "er+ospl" || preset == "full";
  schedule.use_epc = preset == "epc" || preset == "full";
  schedule.use_ospl =
      preset == "ospl" || preset == "er+ospl" || preset == "full";
}

int run_synth(const std::string& spec_path, const std::string& out_path,
              const std::optional<std::string>& catalog_path) {
  auto spec_in = open_in(spec_path);
  const wsseg::SceneSpec spec = wsseg::parse_scene_spec(spec_in);
  const wsseg::SceneResult scene = wsseg::synth_scene(spec);
  for (const auto& warning : scene.warnings)
    std::cerr << "warning: " << warning << "\n";
  wsseg::write_cloud(out_path, scene.cloud, &scene.labels);
  if (catalog_path.has_value()) {
    auto out = open_out(*catalog_path);
    wsseg::write_catalog(out, scene.catalog);
  }
  std::cout << "wrote " << scene.cloud.size() << " points to " << out_path << "\n";
  return 0;
}

int run_sample_labels(const std::string& cloud_path, int cap, double ratio,
                      std::uint64_t seed,
                      const std::optional<std::string>& parent_path,
                      const std::optional<std::string>& classes_path,
                      const std::string& out_path) {
  const wsseg::CloudFile file = wsseg::read_cloud(cloud_path);
  const wsseg::LabelArray truth = require_labels(file, cloud_path);
  const wsseg::ClassCatalog catalog = catalog_for(classes_path, truth);
  truth.validate(catalog.count());

  std::optional<wsseg::WeakLabelSet> parent;
  if (parent_path.has_value()) {
    auto in = open_in(*parent_path);
    parent = wsseg::read_weak_labels(in);
  }

  if (ratio > 0.0) {
    const auto pops = wsseg::class_populations(truth, catalog.count());
    cap = wsseg::choose_cap_for_ratio(pops, ratio);
    std::cerr << "ratio " << ratio << " -> per-class cap " << cap << "\n";
  }

  wsseg::RngStream rng(seed, "labels");
  wsseg::WeakLabelSet weak = wsseg::sample_weak_labels(
      truth, catalog, cap, rng, parent.has_value() ? &*parent : nullptr);
  weak.seed = seed;
  for (int cls : weak.empty_classes)
    std::cerr << "warning: class " << catalog.class_names[static_cast<std::size_t>(cls)]
              << " has zero population, no labels drawn\n";

  auto out = open_out(out_path);
  wsseg::write_weak_labels(out, weak);
  std::cout << "sampled " << weak.count() << " weak labels ("
            << std::setprecision(3)
            << 1000.0 * static_cast<double>(weak.count()) /
                   static_cast<double>(truth.labels.size())
            << " per mille) to " << out_path << "\n";
  return 0;
}

int run_train(const std::string& cloud_path, const std::string& weak_path,
              const std::string& config_path, const std::string& out_path,
              const std::optional<std::string>& log_path) {
  const wsseg::CloudFile file = wsseg::read_cloud(cloud_path);
  auto weak_in = open_in(weak_path);
  const wsseg::WeakLabelSet weak = wsseg::read_weak_labels(weak_in);
  auto config_in = open_in(config_path);
  const wsseg::TrainSchedule schedule = wsseg::parse_schedule(config_in);

  wsseg::TrainCallbacks callbacks;
  callbacks.on_epoch = [&](const wsseg::EpochLogRow& row, const wsseg::ModelParameters&) {
    std::cout << "epoch " << row.epoch << " stage " << row.stage
              << std::setprecision(5) << " l_seg " << row.l_seg << " l_ent "
              << row.l_ent << " l_epc " << row.l_epc << " l_pl " << row.l_pl
              << "\n";
  };
  callbacks.on_checkpoint = [&](int epoch, const wsseg::ModelParameters& params) {
    auto out = open_out(out_path + ".epoch" + std::to_string(epoch), true);
    wsseg::save_checkpoint(out, params);
  };

  const wsseg::TrainResult result = wsseg::train(file.cloud, weak, schedule, callbacks);
  {
    auto out = open_out(out_path, true);
    wsseg::save_checkpoint(out, result.params);
  }
  if (log_path.has_value()) {
    auto out = open_out(*log_path);
    wsseg::write_train_log(out, result.log);
  }
  std::cout << "wrote checkpoint to " << out_path << "\n";
  return 0;
}

int run_predict(const std::string& cloud_path, const std::string& model_path,
                const std::string& out_path, double radius,
                const std::optional<std::string>& probs_path,
                const std::optional<std::string>& entropy_path) {
  const wsseg::CloudFile file = wsseg::read_cloud(cloud_path);
  auto model_in = open_in(model_path, true);
  const wsseg::ModelParameters params = wsseg::load_checkpoint(model_in);
  if (params.config.input_dim !=
      wsseg::kGeometricFeatureCount + file.cloud.feature_dim)
    throw wsseg::DataError(cloud_path + ": feature width does not match checkpoint");

  wsseg::BatchSpec spec;
  spec.radius = radius;
  const wsseg::FullPrediction pred =
      wsseg::predict_full(params, file.cloud, spec);

  wsseg::LabelArray labels;
  labels.labels = pred.labels;
  wsseg::write_cloud(out_path, file.cloud, &labels);

  if (probs_path.has_value()) {
    auto out = open_out(*probs_path);
    out << "# classes=" << params.config.num_classes << "\n" << std::setprecision(17);
    for (Eigen::Index i = 0; i < pred.probs.rows(); ++i) {
      for (Eigen::Index c = 0; c < pred.probs.cols(); ++c)
        out << (c > 0 ? " " : "") << pred.probs(i, c);
      out << "\n";
    }
  }
  if (entropy_path.has_value()) {
    auto out = open_out(*entropy_path);
    wsseg::write_entropy_map(out, file.cloud, wsseg::entropy_map(pred.probs));
  }
  std::cout << "wrote predictions for " << file.cloud.size() << " points to "
            << out_path << "\n";
  return 0;
}

int run_evaluate(const std::string& pred_path, const std::string& truth_path,
                 const std::optional<std::string>& classes_path,
                 const std::optional<std::string>& csv_path) {
  const wsseg::CloudFile pred_file = wsseg::read_cloud(pred_path);
  const wsseg::CloudFile truth_file = wsseg::read_cloud(truth_path);
  const wsseg::LabelArray pred = require_labels(pred_file, pred_path);
  const wsseg::LabelArray truth = require_labels(truth_file, truth_path);
  if (pred.labels.size() != truth.labels.size())
    throw wsseg::DataError("prediction and truth files differ in point count");

  const wsseg::ClassCatalog catalog = catalog_for(classes_path, truth);
  const wsseg::ConfusionMatrix cm =
      wsseg::confusion(pred.labels, truth.labels, catalog.count());
  const wsseg::MetricsReport report = wsseg::metrics(cm);

  wsseg::print_metrics(std::cout, report, catalog);
  if (csv_path.has_value()) {
    auto out = open_out(*csv_path);
    wsseg::write_metrics_csv(out, report, catalog);
  }
  return 0;
}

int run_ablate(const std::string& cloud_path, const std::string& config_path,
               const std::string& preset, int cap, double ratio,
               const std::vector<std::uint64_t>& seeds,
               const std::optional<std::string>& out_path) {
  const wsseg::CloudFile file = wsseg::read_cloud(cloud_path);
  const wsseg::LabelArray truth = require_labels(file, cloud_path);
  auto config_in = open_in(config_path);
  const wsseg::TrainSchedule base_schedule = wsseg::parse_schedule(config_in);
  truth.validate(base_schedule.num_classes);

  wsseg::ClassCatalog catalog;
  for (int c = 0; c < base_schedule.num_classes; ++c)
    catalog.class_names.push_back("class" + std::to_string(c));

  if (ratio > 0.0) {
    const auto pops = wsseg::class_populations(truth, catalog.count());
    cap = wsseg::choose_cap_for_ratio(pops, ratio);
  }

  std::ostringstream csv;
  csv << "preset,seed,oa,avg_f1\n" << std::setprecision(17);
  std::vector<double> oas, f1s;
  for (const std::uint64_t seed : seeds) {
    wsseg::TrainSchedule schedule = base_schedule;
    schedule.seed = seed;
    apply_preset(preset, schedule);

    wsseg::RngStream label_rng(seed, "labels");
    const wsseg::WeakLabelSet weak =
        wsseg::sample_weak_labels(truth, catalog, cap, label_rng, nullptr);

    const wsseg::TrainResult result = wsseg::train(file.cloud, weak, schedule);
    const wsseg::FullPrediction pred =
        wsseg::predict_full(result.params, file.cloud, schedule.batch_spec);
    const wsseg::MetricsReport report = wsseg::metrics(
        wsseg::confusion(pred.labels, truth.labels, catalog.count()));

    std::cout << preset << " seed " << seed << ": OA "
              << std::setprecision(5) << 100.0 * report.oa << "% avg F1 "
              << 100.0 * report.avg_f1 << "%\n";
    csv << preset << ',' << seed << ',' << report.oa << ',' << report.avg_f1 << "\n";
    oas.push_back(report.oa);
    f1s.push_back(report.avg_f1);
  }

  const double mean_oa =
      std::accumulate(oas.begin(), oas.end(), 0.0) / static_cast<double>(oas.size());
  const double mean_f1 =
      std::accumulate(f1s.begin(), f1s.end(), 0.0) / static_cast<double>(f1s.size());
  std::cout << preset << " mean over " << seeds.size() << " seeds: OA "
            << std::setprecision(5) << 100.0 * mean_oa << "% avg F1 "
            << 100.0 * mean_f1 << "%\n";
  csv << preset << ",mean," << mean_oa << ',' << mean_f1 << "\n";

  if (out_path.has_value()) {
    auto out = open_out(*out_path);
    out << csv.str();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weakly supervised point-cloud semantic segmentation toolkit"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a labeled synthetic scene");
  std::string synth_spec, synth_out;
  std::optional<std::string> synth_catalog;
  synth->add_option("--spec", synth_spec, "Scene spec file (key=value)")->required();
  synth->add_option("--out", synth_out, "Output cloud path")->required();
  synth->add_option("--catalog", synth_catalog, "Also write the class catalog here");

  // sample-labels
  auto* sample = app.add_subcommand("sample-labels", "Draw a weak-label set from a labeled cloud");
  std::string sample_cloud, sample_out;
  int sample_cap = 0;
  double sample_ratio = 0.0;
  std::uint64_t sample_seed = 0;
  std::optional<std::string> sample_parent, sample_classes;
  sample->add_option("--cloud", sample_cloud, "Labeled cloud")->required();
  auto* cap_opt = sample->add_option("--cap", sample_cap, "Per-class cap");
  auto* ratio_opt =
      sample->add_option("--ratio", sample_ratio, "Target global label ratio (e.g. 0.001)");
  cap_opt->excludes(ratio_opt);
  sample->add_option("--seed", sample_seed, "Rng seed")->required();
  sample->add_option("--parent", sample_parent, "Weak-label set to nest inside the new one");
  sample->add_option("--classes", sample_classes, "Class catalog file");
  sample->add_option("--out", sample_out, "Output weak-label set")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Run two-stage weakly supervised training");
  std::string train_cloud, train_weak, train_config, train_out;
  std::optional<std::string> train_log;
  train_cmd->add_option("--cloud", train_cloud, "Training cloud")->required();
  train_cmd->add_option("--weak", train_weak, "Weak-label set")->required();
  train_cmd->add_option("--config", train_config, "Schedule config (key=value)")->required();
  train_cmd->add_option("--out", train_out, "Output checkpoint")->required();
  train_cmd->add_option("--log", train_log, "Per-epoch CSV log");

  // predict
  auto* predict = app.add_subcommand("predict", "Label a cloud with a trained model");
  std::string predict_cloud, predict_model, predict_out;
  double predict_radius = 30.0;
  std::optional<std::string> predict_probs, predict_entropy;
  predict->add_option("--cloud", predict_cloud, "Input cloud")->required();
  predict->add_option("--model", predict_model, "Checkpoint")->required();
  predict->add_option("--out", predict_out, "Output labeled cloud")->required();
  predict->add_option("--radius", predict_radius, "Test-tiling circle radius (m)");
  predict->add_option("--probs", predict_probs, "Also write per-point probabilities");
  predict->add_option("--entropy-map", predict_entropy, "Also write the normalized entropy map");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Compare predicted labels against ground truth");
  std::string eval_pred, eval_truth;
  std::optional<std::string> eval_classes, eval_csv;
  evaluate->add_option("--pred", eval_pred, "Predicted labeled cloud")->required();
  evaluate->add_option("--truth", eval_truth, "Ground-truth labeled cloud")->required();
  evaluate->add_option("--classes", eval_classes, "Class catalog file");
  evaluate->add_option("--csv", eval_csv, "Write machine-readable metrics here");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Run one ablation preset over seeds on a scene");
  std::string ablate_cloud, ablate_config, ablate_preset;
  int ablate_cap = 0;
  double ablate_ratio = 0.0;
  std::vector<std::uint64_t> ablate_seeds{0};
  std::optional<std::string> ablate_out;
  ablate->add_option("--cloud", ablate_cloud, "Labeled scene")->required();
  ablate->add_option("--config", ablate_config, "Schedule config")->required();
  ablate->add_option("--preset", ablate_preset, "Module combination")
      ->required()
      ->check(CLI::IsMember({"baseline", "er", "epc", "ospl", "er+ospl", "full"}));
  auto* ab_cap = ablate->add_option("--cap", ablate_cap, "Per-class label cap");
  auto* ab_ratio = ablate->add_option("--ratio", ablate_ratio, "Target label ratio");
  ab_cap->excludes(ab_ratio);
  ablate->add_option("--seeds", ablate_seeds, "Seeds to average over");
  ablate->add_option("--out", ablate_out, "Write per-run CSV here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (synth->parsed()) return run_synth(synth_spec, synth_out, synth_catalog);
    if (sample->parsed()) {
      if (sample_cap <= 0 && sample_ratio <= 0.0) {
        std::cerr << "sample-labels: provide --cap or --ratio\n";
        return kExitUsage;
      }
      return run_sample_labels(sample_cloud, sample_cap, sample_ratio,
                               sample_seed, sample_parent, sample_classes,
                               sample_out);
    }
    if (train_cmd->parsed())
      return run_train(train_cloud, train_weak, train_config, train_out, train_log);
    if (predict->parsed())
      return run_predict(predict_cloud, predict_model, predict_out,
                         predict_radius, predict_probs, predict_entropy);
    if (evaluate->parsed())
      return run_evaluate(eval_pred, eval_truth, eval_classes, eval_csv);
    if (ablate->parsed()) {
      if (ablate_cap <= 0 && ablate_ratio <= 0.0) {
        std::cerr << "ablate: provide --cap or --ratio\n";
        return kExitUsage;
      }
      return run_ablate(ablate_cloud, ablate_config, ablate_preset, ablate_cap,
                        ablate_ratio, ablate_seeds, ablate_out);
    }
  } catch (const wsseg::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const wsseg::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
