#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "wsseg/errors.hpp"
#include "wsseg/io.hpp"
#include "wsseg/losses.hpp"
#include "wsseg/metrics.hpp"
#include "wsseg/model.hpp"
#include "wsseg/rng.hpp"
#include "wsseg/scene.hpp"

using namespace wsseg;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path(temp_path(name)) {}
  ~TempFile() { std::remove(path.c_str()); }
};

std::vector<int> random_labels(std::size_t n, int k, std::uint64_t seed) {
  RngStream rng(seed, "fixture");
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
  return out;
}

PointCloud random_cloud(std::size_t n, std::uint64_t seed, int feature_dim) {
  RngStream rng(seed, "fixture");
  PointCloud cloud;
  cloud.feature_dim = feature_dim;
  for (std::size_t i = 0; i < n; ++i) {
    cloud.coords.push_back({rng.uniform(-50.0, 50.0), rng.uniform(-50.0, 50.0),
                            rng.uniform(0.0, 30.0)});
    for (int f = 0; f < feature_dim; ++f)
      cloud.features.push_back(rng.normal());
  }
  return cloud;
}

}  // namespace

TEST_CASE("confusion of a perfect prediction is diagonal") {
  const std::vector<int> truth = {0, 1, 2, 1, 0, 2, 2};
  const ConfusionMatrix cm = confusion(truth, truth, 3);
  CHECK(cm.total() == 7);
  for (int t = 0; t < 3; ++t)
    for (int p = 0; p < 3; ++p)
      if (t != p) CHECK(cm.counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)] == 0);
  CHECK(cm.counts[2][2] == 3);
}

TEST_CASE("all predictions collapsed to class zero fill one column") {
  const std::vector<int> truth = {0, 1, 2, 1};
  const std::vector<int> pred = {0, 0, 0, 0};
  const ConfusionMatrix cm = confusion(pred, truth, 3);
  for (int t = 0; t < 3; ++t)
    for (int p = 1; p < 3; ++p)
      CHECK(cm.counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)] == 0);
  CHECK(cm.counts[1][0] == 2);
}

TEST_CASE("confusion matches a dictionary tally oracle") {
  const std::vector<int> truth = random_labels(10000, 5, 71);
  const std::vector<int> pred = random_labels(10000, 5, 72);
  const ConfusionMatrix cm = confusion(pred, truth, 5);

  std::map<std::pair<int, int>, long long> tally;
  for (std::size_t i = 0; i < truth.size(); ++i) ++tally[{truth[i], pred[i]}];
  for (int t = 0; t < 5; ++t)
    for (int p = 0; p < 5; ++p) {
      const auto it = tally.find({t, p});
      const long long want = it == tally.end() ? 0 : it->second;
      CHECK(cm.counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)] == want);
    }
  CHECK(cm.total() == 10000);
}

TEST_CASE("confusion rejects malformed input") {
  CHECK_THROWS_AS(confusion({0, 1}, {0}, 2), std::invalid_argument);
  CHECK_THROWS_AS(confusion({0, 2}, {0, 1}, 2), std::invalid_argument);
  CHECK_THROWS_AS(confusion({0, -1}, {0, 1}, 2), std::invalid_argument);
}

TEST_CASE("metrics of a perfect prediction") {
  for (int k = 2; k <= 6; ++k) {
    const std::vector<int> truth = random_labels(300, k, static_cast<std::uint64_t>(k));
    const MetricsReport report = metrics(confusion(truth, truth, k));
    CHECK(report.oa == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(report.avg_f1 == doctest::Approx(1.0).epsilon(1e-12));
    for (int c = 0; c < k; ++c)
      CHECK(report.f1[static_cast<std::size_t>(c)] == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("metrics textbook case: tp 8, fp 2, fn 2") {
  ConfusionMatrix cm;
  cm.counts = {{8, 2}, {2, 88}};
  const MetricsReport report = metrics(cm);
  CHECK(report.precision[0] == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(report.recall[0] == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(report.f1[0] == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(report.oa == doctest::Approx(96.0 / 100.0).epsilon(1e-12));
}

TEST_CASE("absent classes score zero and are flagged") {
  ConfusionMatrix cm;
  cm.counts = {{5, 0, 0}, {1, 4, 0}, {0, 0, 0}};
  const MetricsReport report = metrics(cm);
  CHECK(report.absent == std::vector<char>{0, 0, 1});
  CHECK(report.f1[2] == 0.0);
  CHECK(report.precision[2] == 0.0);
  // The unweighted average still divides by all classes.
  CHECK(report.avg_f1 ==
        doctest::Approx((report.f1[0] + report.f1[1]) / 3.0).epsilon(1e-12));
}

TEST_CASE("f1 is the harmonic mean wherever defined") {
  RngStream rng(73, "fixture");
  ConfusionMatrix cm;
  cm.counts.assign(4, std::vector<long long>(4, 0));
  for (int t = 0; t < 4; ++t)
    for (int p = 0; p < 4; ++p)
      cm.counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)] =
          static_cast<long long>(rng.below(50));
  const MetricsReport report = metrics(cm);
  for (int c = 0; c < 4; ++c) {
    const double precision = report.precision[static_cast<std::size_t>(c)];
    const double recall = report.recall[static_cast<std::size_t>(c)];
    if (precision > 0.0 && recall > 0.0)
      CHECK(report.f1[static_cast<std::size_t>(c)] ==
            doctest::Approx(2.0 * precision * recall / (precision + recall))
                .epsilon(1e-12));
  }
}

TEST_CASE("metrics require a nonempty matrix") {
  ConfusionMatrix cm;
  cm.counts = {{0, 0}, {0, 0}};
  CHECK_THROWS_AS(metrics(cm), std::invalid_argument);
}

TEST_CASE("entropy map endpoints and composition") {
  Eigen::MatrixXd probs(3, 4);
  probs.setZero();
  probs(0, 2) = 1.0;
  probs.row(1).setConstant(0.25);
  probs.row(2) << 0.7, 0.1, 0.1, 0.1;
  const std::vector<double> map = entropy_map(probs);
  CHECK(map[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(map[1] == doctest::Approx(1.0).epsilon(1e-12));

  const Eigen::VectorXd h = entropy(probs);
  for (int i = 0; i < 3; ++i) {
    CHECK(std::abs(map[static_cast<std::size_t>(i)] - h(i) / std::log(4.0)) < 1e-9);
    CHECK(map[static_cast<std::size_t>(i)] >= 0.0);
    CHECK(map[static_cast<std::size_t>(i)] <= 1.0);
  }
}

TEST_CASE("default scene hits the areal point budget") {
  SceneSpec spec;
  spec.seed = 5;
  const SceneResult scene = synth_scene(spec);
  const double expected = spec.extent * spec.extent * spec.density;
  CHECK(static_cast<double>(scene.cloud.size()) >= 0.95 * expected);
  CHECK(static_cast<double>(scene.cloud.size()) <= 1.05 * expected);
  CHECK(scene.warnings.empty());

  std::vector<long long> pops(4, 0);
  for (const int l : scene.labels.labels) {
    REQUIRE(l >= 0);
    REQUIRE(l < 4);
    ++pops[static_cast<std::size_t>(l)];
  }
  for (int c = 0; c < 4; ++c) CHECK(pops[static_cast<std::size_t>(c)] > 0);
  // Imbalance by construction: ground dwarfs the pole class.
  CHECK(pops[kGround] > 10 * pops[kPole]);

  CHECK(scene.catalog.count() == 4);
  CHECK(scene.catalog.class_names[0] == "ground");
  CHECK(scene.labels.size() == scene.cloud.size());

  // One intensity channel in [0, 1].
  REQUIRE(scene.cloud.feature_dim == 1);
  for (const double v : scene.cloud.features) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK_NOTHROW(scene.cloud.validate());
}

TEST_CASE("scenes are deterministic per seed") {
  SceneSpec spec;
  spec.extent = 40.0;
  spec.density = 3.0;
  spec.seed = 9;
  const SceneResult a = synth_scene(spec);
  const SceneResult b = synth_scene(spec);
  REQUIRE(a.cloud.size() == b.cloud.size());
  CHECK(a.cloud.coords == b.cloud.coords);
  CHECK(a.cloud.features == b.cloud.features);
  CHECK(a.labels.labels == b.labels.labels);

  spec.seed = 10;
  const SceneResult c = synth_scene(spec);
  CHECK(a.cloud.coords != c.cloud.coords);
}

TEST_CASE("ground-only scene warns about the omitted classes") {
  SceneSpec spec;
  spec.extent = 30.0;
  spec.density = 2.0;
  spec.building_count = 0;
  spec.tree_count = 0;
  spec.pole_count = 0;
  spec.seed = 1;
  const SceneResult scene = synth_scene(spec);
  CHECK(scene.warnings.size() == 3);
  for (const int l : scene.labels.labels) CHECK(l == kGround);
}

TEST_CASE("scene spec validation") {
  SceneSpec spec;
  CHECK_NOTHROW(spec.validate());
  spec.density = 0.0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = SceneSpec{};
  spec.extent = -1.0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = SceneSpec{};
  spec.building_count = -1;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}

TEST_CASE("cloud text round trip preserves every field") {
  const PointCloud cloud = random_cloud(200, 81, 2);
  LabelArray labels;
  labels.labels = random_labels(200, 4, 82);

  std::stringstream buf;
  write_cloud_text(buf, cloud, &labels);
  const CloudFile back = read_cloud_text(buf);
  REQUIRE(back.cloud.size() == cloud.size());
  CHECK(back.cloud.coords == cloud.coords);
  CHECK(back.cloud.features == cloud.features);
  CHECK(back.cloud.feature_dim == 2);
  REQUIRE(back.labels.has_value());
  CHECK(back.labels->labels == labels.labels);
}

TEST_CASE("cloud text round trip without labels") {
  const PointCloud cloud = random_cloud(50, 83, 0);
  std::stringstream buf;
  write_cloud_text(buf, cloud, nullptr);
  const CloudFile back = read_cloud_text(buf);
  CHECK(back.cloud.coords == cloud.coords);
  CHECK_FALSE(back.labels.has_value());
}

TEST_CASE("hand-written cloud file parses exactly") {
  std::istringstream in(
      "# columns=5 features=1 has_label=1\n"
      "\n"
      "1.5 -2.25 0.125 0.5 2\n"
      "0 0 10 -1.75 -1\n");
  const CloudFile file = read_cloud_text(in);
  REQUIRE(file.cloud.size() == 2);
  CHECK(file.cloud.coords[0] == Vec3{1.5, -2.25, 0.125});
  CHECK(file.cloud.coords[1] == Vec3{0.0, 0.0, 10.0});
  CHECK(file.cloud.features == std::vector<double>{0.5, -1.75});
  CHECK(file.labels->labels == std::vector<int>{2, -1});
}

TEST_CASE("header-only cloud file is empty") {
  std::istringstream in("# columns=3 features=0 has_label=0\n");
  const CloudFile file = read_cloud_text(in);
  CHECK(file.cloud.size() == 0);
  CHECK_FALSE(file.labels.has_value());
}

TEST_CASE("cloud reader names the offending line") {
  {
    std::istringstream in(
        "# columns=3 features=0 has_label=0\n"
        "0 0 0\n"
        "1 2\n");
    CHECK_THROWS_WITH_AS(read_cloud_text(in),
                         doctest::Contains("line 3"), DataError);
  }
  {
    std::istringstream in(
        "# columns=3 features=0 has_label=0\n"
        "0 abc 0\n");
    CHECK_THROWS_AS(read_cloud_text(in), DataError);
  }
  {
    std::istringstream in("# columns=4 features=0 has_label=0\n");
    CHECK_THROWS_AS(read_cloud_text(in), DataError);  // inconsistent header
  }
  {
    std::istringstream in("0 0 0\n");
    CHECK_THROWS_AS(read_cloud_text(in), DataError);  // missing header
  }
  {
    std::istringstream in(
        "# columns=4 features=0 has_label=1\n"
        "0 0 0 -4\n");
    CHECK_THROWS_AS(read_cloud_text(in), DataError);  // label below -1
  }
  {
    std::istringstream in(
        "# columns=3 features=0 has_label=0\n"
        "0 0 0 7\n");
    CHECK_THROWS_AS(read_cloud_text(in), DataError);  // extra field
  }
}

TEST_CASE("cloud binary round trip is bitwise") {
  const PointCloud cloud = random_cloud(300, 84, 3);
  LabelArray labels;
  labels.labels = random_labels(300, 5, 85);

  std::stringstream buf;
  write_cloud_binary(buf, cloud, &labels);
  const CloudFile back = read_cloud_binary(buf);
  CHECK(back.cloud.coords == cloud.coords);
  CHECK(back.cloud.features == cloud.features);
  CHECK(back.labels->labels == labels.labels);

  std::stringstream truncated(buf.str().substr(0, 40));
  CHECK_THROWS_AS(read_cloud_binary(truncated), DataError);
}

TEST_CASE("path dispatch picks the codec from the extension") {
  const PointCloud cloud = random_cloud(40, 86, 1);
  LabelArray labels;
  labels.labels = random_labels(40, 3, 87);

  TempFile text(std::string("wsseg_io_test_") + std::to_string(::getpid()) + ".cld");
  TempFile binary(std::string("wsseg_io_test_") + std::to_string(::getpid()) + ".bin");

  write_cloud(text.path, cloud, &labels);
  write_cloud(binary.path, cloud, &labels);
  const CloudFile from_text = read_cloud(text.path);
  const CloudFile from_binary = read_cloud(binary.path);
  CHECK(from_text.cloud.coords == cloud.coords);
  CHECK(from_binary.cloud.coords == cloud.coords);
  CHECK(from_text.labels->labels == from_binary.labels->labels);

  // The binary file is not parseable as text and vice versa.
  CHECK_THROWS_AS(read_cloud(temp_path("wsseg_io_does_not_exist.cld")), DataError);
}

TEST_CASE("schedule round trips through the key=value format") {
  TrainSchedule schedule;
  schedule.epochs_per_stage = 7;
  schedule.steps_per_epoch = 13;
  schedule.learning_rate = 0.025;
  schedule.momentum = 0.9;
  schedule.alpha = 0.85;
  schedule.lr_decay = 0.99;
  schedule.seed = 424242;
  schedule.num_classes = 4;
  schedule.hidden_dim = 48;
  schedule.k_neighbors = 10;
  schedule.batch_spec.radius = 11.5;
  schedule.batch_spec.point_cap = 3000;
  schedule.batch_spec.potential_exponent = 1.5;
  schedule.augment.rotate = false;
  schedule.augment.scale_min = 0.8;
  schedule.augment.scale_max = 1.2;
  schedule.augment.jitter_sigma = 0.05;
  schedule.use_er = false;
  schedule.use_ospl = false;
  schedule.weights_from_ensemble = false;
  schedule.checkpoint_every = 5;

  std::stringstream buf;
  write_schedule(buf, schedule);
  const TrainSchedule back = parse_schedule(buf);
  CHECK(back.epochs_per_stage == 7);
  CHECK(back.steps_per_epoch == 13);
  CHECK(back.learning_rate == 0.025);
  CHECK(back.momentum == 0.9);
  CHECK(back.alpha == 0.85);
  CHECK(back.lr_decay == 0.99);
  CHECK(back.seed == 424242);
  CHECK(back.num_classes == 4);
  CHECK(back.hidden_dim == 48);
  CHECK(back.k_neighbors == 10);
  CHECK(back.batch_spec.radius == 11.5);
  CHECK(back.batch_spec.point_cap == 3000);
  CHECK(back.batch_spec.potential_exponent == 1.5);
  CHECK(back.augment.rotate == false);
  CHECK(back.augment.scale_min == 0.8);
  CHECK(back.augment.scale_max == 1.2);
  CHECK(back.augment.jitter_sigma == 0.05);
  CHECK(back.use_er == false);
  CHECK(back.use_epc == true);
  CHECK(back.use_ospl == false);
  CHECK(back.weights_from_ensemble == false);
  CHECK(back.checkpoint_every == 5);
}

TEST_CASE("schedule parser accepts comments and rejects junk") {
  {
    std::istringstream in(
        "# a comment\n"
        "\n"
        "num_classes=4\n"
        "seed = 3\n");
    const TrainSchedule schedule = parse_schedule(in);
    CHECK(schedule.num_classes == 4);
    CHECK(schedule.seed == 3);
    CHECK(schedule.epochs_per_stage == 100);  // defaults survive
  }
  {
    std::istringstream in("num_classes=4\nnot_a_key=1\n");
    CHECK_THROWS_WITH_AS(parse_schedule(in), doctest::Contains("line 2"),
                         DataError);
  }
  {
    std::istringstream in("num_classes=4\nnum_classes=5\n");
    CHECK_THROWS_AS(parse_schedule(in), DataError);  // duplicate key
  }
  {
    std::istringstream in("num_classes=abc\n");
    CHECK_THROWS_AS(parse_schedule(in), DataError);
  }
  {
    std::istringstream in("num_classes\n");
    CHECK_THROWS_AS(parse_schedule(in), DataError);  // missing '='
  }
  {
    std::istringstream in("num_classes=4\nlearning_rate=-1\n");
    CHECK_THROWS_AS(parse_schedule(in), DataError);  // fails validation
  }
  {
    std::istringstream in("learning_rate=0.1\n");
    CHECK_THROWS_AS(parse_schedule(in), DataError);  // num_classes unset
  }
}

TEST_CASE("scene spec round trips and rejects unknown keys") {
  SceneSpec spec;
  spec.extent = 55.0;
  spec.density = 2.5;
  spec.ground_roughness = 0.3;
  spec.building_count = 2;
  spec.building_size = 9.0;
  spec.tree_count = 11;
  spec.tree_radius = 1.75;
  spec.pole_count = 4;
  spec.seed = 99;

  std::stringstream buf;
  write_scene_spec(buf, spec);
  const SceneSpec back = parse_scene_spec(buf);
  CHECK(back.extent == 55.0);
  CHECK(back.density == 2.5);
  CHECK(back.ground_roughness == 0.3);
  CHECK(back.building_count == 2);
  CHECK(back.building_size == 9.0);
  CHECK(back.tree_count == 11);
  CHECK(back.tree_radius == 1.75);
  CHECK(back.pole_count == 4);
  CHECK(back.seed == 99);

  std::istringstream bad("extent=10\nwibble=3\n");
  CHECK_THROWS_AS(parse_scene_spec(bad), DataError);
}

TEST_CASE("catalog io") {
  ClassCatalog catalog;
  catalog.class_names = {"ground", "building", "tree", "pole"};
  std::stringstream buf;
  write_catalog(buf, catalog);
  const ClassCatalog back = read_catalog(buf);
  CHECK(back.class_names == catalog.class_names);

  std::istringstream commented("# classes\nground\n\nroof\n");
  CHECK(read_catalog(commented).class_names ==
        std::vector<std::string>{"ground", "roof"});

  std::istringstream dup("a\na\n");
  CHECK_THROWS_AS(read_catalog(dup), DataError);
  std::istringstream single("only\n");
  CHECK_THROWS_AS(read_catalog(single), DataError);
}

TEST_CASE("train log format") {
  std::vector<EpochLogRow> log(2);
  log[0].epoch = 1;
  log[0].stage = 1;
  log[0].l_seg = 1.25;
  log[0].lambda_ent = 0.006737946999085467;
  log[0].seconds = 0.1234;
  log[1].epoch = 2;
  log[1].stage = 2;
  log[1].lambda_pl = 1.0;
  log[1].seconds = 0.2;

  std::stringstream buf;
  write_train_log(buf, log);
  std::string line;
  std::getline(buf, line);
  CHECK(line ==
        "epoch,stage,l_seg,l_ent,l_epc,l_pl,lambda_ent,lambda_epc,lambda_pl,"
        "seconds");
  std::getline(buf, line);
  CHECK(std::count(line.begin(), line.end(), ',') == 9);
  CHECK(line.rfind("1,1,", 0) == 0);
  CHECK(line.find("0.006737946999085467") != std::string::npos);
  // Wall-clock column fixed to millisecond precision.
  CHECK(line.substr(line.rfind(',')) == ",0.123");
  std::getline(buf, line);
  CHECK(line.rfind("2,2,", 0) == 0);
}

TEST_CASE("metrics reports render to text and csv") {
  ConfusionMatrix cm;
  cm.counts = {{8, 2, 0}, {2, 88, 0}, {0, 0, 0}};
  const MetricsReport report = metrics(cm);
  ClassCatalog catalog;
  catalog.class_names = {"ground", "building", "pole"};

  std::stringstream text;
  print_metrics(text, report, catalog);
  CHECK(text.str().find("ground") != std::string::npos);
  CHECK(text.str().find("(absent)") != std::string::npos);
  CHECK(text.str().find("OA") != std::string::npos);
  CHECK(text.str().find("avg F1") != std::string::npos);

  std::stringstream csv;
  write_metrics_csv(csv, report, catalog);
  CHECK(csv.str().find("class,precision,recall,f1") != std::string::npos);
  CHECK(csv.str().find("ground,0.8") != std::string::npos);
  CHECK(csv.str().find("oa,") != std::string::npos);
  CHECK(csv.str().find("avg_f1,") != std::string::npos);
}

TEST_CASE("entropy map export pairs coordinates with values") {
  PointCloud cloud;
  cloud.coords = {{1, 2, 3}, {4, 5, 6}};
  std::stringstream buf;
  write_entropy_map(buf, cloud, {0.25, 1.0});
  std::string line;
  std::getline(buf, line);
  CHECK(line == "# x y z normalized_entropy");
  std::getline(buf, line);
  CHECK(line.find("1 2 3 0.25") != std::string::npos);
  std::getline(buf, line);
  CHECK(line.rfind("4 5 6 1", 0) == 0);
}
