#include "wsseg/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "wsseg/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "binary cloud io assumes a little-endian host");

namespace wsseg {

namespace {

constexpr char kCloudMagic[8] = {'W', 'S', 'E', 'G', 'C', 'L', 'D', '1'};

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

[[noreturn]] void fail_line(std::size_t line_no, const std::string& what) {
  throw DataError("line " + std::to_string(line_no) + ": " + what);
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

void write_cloud_text(std::ostream& out, const PointCloud& cloud,
                      const LabelArray* labels) {
  const int has_label = labels != nullptr ? 1 : 0;
  if (labels != nullptr && labels->labels.size() != cloud.size())
    throw std::invalid_argument("write_cloud: label count does not match cloud");
  out << "# columns=" << 3 + cloud.feature_dim + has_label
      << " features=" << cloud.feature_dim << " has_label=" << has_label << "\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    out << cloud.coords[i][0] << ' ' << cloud.coords[i][1] << ' '
        << cloud.coords[i][2];
    for (int f = 0; f < cloud.feature_dim; ++f)
      out << ' ' << cloud.features[i * cloud.feature_dim + f];
    if (has_label) out << ' ' << labels->labels[i];
    out << "\n";
  }
  if (!out) throw DataError("cloud write failed");
}

CloudFile read_cloud_text(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("line 1: missing header");
  int columns = 0, features = 0, has_label = 0;
  if (std::sscanf(line.c_str(), "# columns=%d features=%d has_label=%d",
                  &columns, &features, &has_label) != 3)
    fail_line(1, "malformed header (expected '# columns=<n> features=<F> has_label=<0|1>')");
  if (features < 0 || (has_label != 0 && has_label != 1) ||
      columns != 3 + features + has_label)
    fail_line(1, "inconsistent header counts");

  CloudFile result;
  result.cloud.feature_dim = features;
  if (has_label) result.labels.emplace();

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::istringstream row(line);
    Vec3 p{};
    if (!(row >> p[0] >> p[1] >> p[2]))
      fail_line(line_no, "expected " + std::to_string(columns) + " numeric columns");
    std::vector<double> feats(static_cast<std::size_t>(features));
    for (double& f : feats)
      if (!(row >> f))
        fail_line(line_no, "expected " + std::to_string(columns) + " numeric columns");
    int label = LabelArray::kUnlabeled;
    if (has_label && !(row >> label))
      fail_line(line_no, "expected " + std::to_string(columns) + " numeric columns");
    std::string extra;
    if (row >> extra) fail_line(line_no, "unknown column count (extra fields)");
    if (has_label && label < LabelArray::kUnlabeled)
      fail_line(line_no, "label below the unlabeled marker");

    result.cloud.coords.push_back(p);
    result.cloud.features.insert(result.cloud.features.end(), feats.begin(), feats.end());
    if (has_label) result.labels->labels.push_back(label);
  }
  result.cloud.validate();
  return result;
}

namespace {

template <typename T>
void write_raw(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T read_raw(std::istream& in, const char* what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw DataError(std::string("truncated cloud file (") + what + ")");
  return v;
}

}  // namespace

void write_cloud_binary(std::ostream& out, const PointCloud& cloud,
                        const LabelArray* labels) {
  if (labels != nullptr && labels->labels.size() != cloud.size())
    throw std::invalid_argument("write_cloud: label count does not match cloud");
  out.write(kCloudMagic, sizeof(kCloudMagic));
  write_raw<std::uint64_t>(out, cloud.size());
  write_raw<std::int32_t>(out, cloud.feature_dim);
  write_raw<std::uint8_t>(out, labels != nullptr ? 1 : 0);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (int a = 0; a < 3; ++a) write_raw<double>(out, cloud.coords[i][a]);
    for (int f = 0; f < cloud.feature_dim; ++f)
      write_raw<double>(out, cloud.features[i * cloud.feature_dim + f]);
    if (labels != nullptr) write_raw<std::int32_t>(out, labels->labels[i]);
  }
  if (!out) throw DataError("cloud write failed");
}

CloudFile read_cloud_binary(std::istream& in) {
  char magic[8] = {};
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kCloudMagic))
    throw DataError("bad binary cloud magic");
  const auto count = read_raw<std::uint64_t>(in, "count");
  const auto features = read_raw<std::int32_t>(in, "feature_dim");
  const auto has_label = read_raw<std::uint8_t>(in, "has_label");
  if (features < 0 || has_label > 1) throw DataError("corrupt binary cloud header");

  CloudFile result;
  result.cloud.feature_dim = features;
  result.cloud.coords.reserve(count);
  result.cloud.features.reserve(count * static_cast<std::uint64_t>(features));
  if (has_label) result.labels.emplace();
  for (std::uint64_t i = 0; i < count; ++i) {
    Vec3 p{};
    for (int a = 0; a < 3; ++a) p[a] = read_raw<double>(in, "coords");
    result.cloud.coords.push_back(p);
    for (std::int32_t f = 0; f < features; ++f)
      result.cloud.features.push_back(read_raw<double>(in, "features"));
    if (has_label)
      result.labels->labels.push_back(read_raw<std::int32_t>(in, "labels"));
  }
  result.cloud.validate();
  return result;
}

void write_cloud(const std::string& path, const PointCloud& cloud,
                 const LabelArray* labels) {
  const bool binary = ends_with(path, ".bin");
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw DataError(path + ": cannot open for writing");
  try {
    if (binary)
      write_cloud_binary(out, cloud, labels);
    else
      write_cloud_text(out, cloud, labels);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

CloudFile read_cloud(const std::string& path) {
  const bool binary = ends_with(path, ".bin");
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw DataError(path + ": cannot open");
  try {
    return binary ? read_cloud_binary(in) : read_cloud_text(in);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

namespace {

// Shared key=value reader. Returns trimmed pairs with their line numbers and
// rejects duplicate keys; key validity is the caller's table.
std::map<std::string, std::pair<std::string, std::size_t>> read_kv(
    std::istream& in) {
  std::map<std::string, std::pair<std::string, std::size_t>> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) fail_line(line_no, "expected key=value");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    if (key.empty()) fail_line(line_no, "empty key");
    if (value.empty()) fail_line(line_no, "empty value for key '" + key + "'");
    if (!kv.emplace(key, std::make_pair(value, line_no)).second)
      fail_line(line_no, "duplicate key '" + key + "'");
  }
  return kv;
}

double parse_double(const std::string& value, std::size_t line_no) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    fail_line(line_no, "invalid number '" + value + "'");
  }
}

long long parse_int(const std::string& value, std::size_t line_no) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    fail_line(line_no, "invalid integer '" + value + "'");
  }
}

std::uint64_t parse_u64(const std::string& value, std::size_t line_no) {
  try {
    std::size_t pos = 0;
    const std::uint64_t v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    fail_line(line_no, "invalid unsigned integer '" + value + "'");
  }
}

bool parse_bool(const std::string& value, std::size_t line_no) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  fail_line(line_no, "invalid boolean '" + value + "' (use true/false)");
}

}  // namespace

TrainSchedule parse_schedule(std::istream& in) {
  TrainSchedule s;
  for (const auto& [key, entry] : read_kv(in)) {
    const auto& [value, line_no] = entry;
    if (key == "epochs_per_stage") s.epochs_per_stage = static_cast<int>(parse_int(value, line_no));
    else if (key == "steps_per_epoch") s.steps_per_epoch = static_cast<int>(parse_int(value, line_no));
    else if (key == "learning_rate") s.learning_rate = parse_double(value, line_no);
    else if (key == "momentum") s.momentum = parse_double(value, line_no);
    else if (key == "alpha") s.alpha = parse_double(value, line_no);
    else if (key == "lr_decay") s.lr_decay = parse_double(value, line_no);
    else if (key == "seed") s.seed = parse_u64(value, line_no);
    else if (key == "num_classes") s.num_classes = static_cast<int>(parse_int(value, line_no));
    else if (key == "hidden_dim") s.hidden_dim = static_cast<int>(parse_int(value, line_no));
    else if (key == "k_neighbors") s.k_neighbors = static_cast<int>(parse_int(value, line_no));
    else if (key == "radius") s.batch_spec.radius = parse_double(value, line_no);
    else if (key == "point_cap") s.batch_spec.point_cap = static_cast<int>(parse_int(value, line_no));
    else if (key == "potential_exponent") s.batch_spec.potential_exponent = parse_double(value, line_no);
    else if (key == "rotate") s.augment.rotate = parse_bool(value, line_no);
    else if (key == "scale_min") s.augment.scale_min = parse_double(value, line_no);
    else if (key == "scale_max") s.augment.scale_max = parse_double(value, line_no);
    else if (key == "jitter_sigma") s.augment.jitter_sigma = parse_double(value, line_no);
    else if (key == "use_er") s.use_er = parse_bool(value, line_no);
    else if (key == "use_epc") s.use_epc = parse_bool(value, line_no);
    else if (key == "use_ospl") s.use_ospl = parse_bool(value, line_no);
    else if (key == "weights_from_ensemble") s.weights_from_ensemble = parse_bool(value, line_no);
    else if (key == "checkpoint_every") s.checkpoint_every = static_cast<int>(parse_int(value, line_no));
    else fail_line(line_no, "unknown key '" + key + "'");
  }
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("config: ") + e.what());
  }
  return s;
}

void write_schedule(std::ostream& out, const TrainSchedule& s) {
  out << std::setprecision(17);
  out << "epochs_per_stage=" << s.epochs_per_stage << "\n"
      << "steps_per_epoch=" << s.steps_per_epoch << "\n"
      << "learning_rate=" << s.learning_rate << "\n"
      << "momentum=" << s.momentum << "\n"
      << "alpha=" << s.alpha << "\n"
      << "lr_decay=" << s.lr_decay << "\n"
      << "seed=" << s.seed << "\n"
      << "num_classes=" << s.num_classes << "\n"
      << "hidden_dim=" << s.hidden_dim << "\n"
      << "k_neighbors=" << s.k_neighbors << "\n"
      << "radius=" << s.batch_spec.radius << "\n"
      << "point_cap=" << s.batch_spec.point_cap << "\n"
      << "potential_exponent=" << s.batch_spec.potential_exponent << "\n"
      << "rotate=" << (s.augment.rotate ? "true" : "false") << "\n"
      << "scale_min=" << s.augment.scale_min << "\n"
      << "scale_max=" << s.augment.scale_max << "\n"
      << "jitter_sigma=" << s.augment.jitter_sigma << "\n"
      << "use_er=" << (s.use_er ? "true" : "false") << "\n"
      << "use_epc=" << (s.use_epc ? "true" : "false") << "\n"
      << "use_ospl=" << (s.use_ospl ? "true" : "false") << "\n"
      << "weights_from_ensemble=" << (s.weights_from_ensemble ? "true" : "false") << "\n"
      << "checkpoint_every=" << s.checkpoint_every << "\n";
}

SceneSpec parse_scene_spec(std::istream& in) {
  SceneSpec spec;
  for (const auto& [key, entry] : read_kv(in)) {
    const auto& [value, line_no] = entry;
    if (key == "extent") spec.extent = parse_double(value, line_no);
    else if (key == "density") spec.density = parse_double(value, line_no);
    else if (key == "ground_roughness") spec.ground_roughness = parse_double(value, line_no);
    else if (key == "building_count") spec.building_count = static_cast<int>(parse_int(value, line_no));
    else if (key == "building_size") spec.building_size = parse_double(value, line_no);
    else if (key == "tree_count") spec.tree_count = static_cast<int>(parse_int(value, line_no));
    else if (key == "tree_radius") spec.tree_radius = parse_double(value, line_no);
    else if (key == "pole_count") spec.pole_count = static_cast<int>(parse_int(value, line_no));
    else if (key == "seed") spec.seed = parse_u64(value, line_no);
    else fail_line(line_no, "unknown key '" + key + "'");
  }
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("scene spec: ") + e.what());
  }
  return spec;
}

void write_scene_spec(std::ostream& out, const SceneSpec& spec) {
  out << std::setprecision(17);
  out << "extent=" << spec.extent << "\n"
      << "density=" << spec.density << "\n"
      << "ground_roughness=" << spec.ground_roughness << "\n"
      << "building_count=" << spec.building_count << "\n"
      << "building_size=" << spec.building_size << "\n"
      << "tree_count=" << spec.tree_count << "\n"
      << "tree_radius=" << spec.tree_radius << "\n"
      << "pole_count=" << spec.pole_count << "\n"
      << "seed=" << spec.seed << "\n";
}

ClassCatalog read_catalog(std::istream& in) {
  ClassCatalog catalog;
  std::string line;
  while (std::getline(in, line)) {
    const std::string body = trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    catalog.class_names.push_back(body);
  }
  try {
    catalog.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("catalog: ") + e.what());
  }
  return catalog;
}

void write_catalog(std::ostream& out, const ClassCatalog& catalog) {
  for (const auto& name : catalog.class_names) out << name << "\n";
}

void write_train_log(std::ostream& out, const std::vector<EpochLogRow>& log) {
  out << "epoch,stage,l_seg,l_ent,l_epc,l_pl,lambda_ent,lambda_epc,lambda_pl,seconds\n";
  for (const EpochLogRow& row : log) {
    out << row.epoch << ',' << row.stage << ',' << std::setprecision(17)
        << row.l_seg << ',' << row.l_ent << ',' << row.l_epc << ',' << row.l_pl
        << ',' << row.lambda_ent << ',' << row.lambda_epc << ',' << row.lambda_pl
        << ',' << std::fixed << std::setprecision(3) << row.seconds << "\n";
    out.unsetf(std::ios::fixed);
  }
}

void print_metrics(std::ostream& out, const MetricsReport& report,
                   const ClassCatalog& catalog) {
  if (catalog.count() != static_cast<int>(report.f1.size()))
    throw std::invalid_argument("print_metrics: catalog/report class count mismatch");
  std::size_t width = 5;
  for (const auto& name : catalog.class_names) width = std::max(width, name.size());

  out << std::left << std::setw(static_cast<int>(width)) << "class"
      << std::right << std::setw(11) << "precision" << std::setw(9) << "recall"
      << std::setw(9) << "f1" << "\n";
  out << std::fixed << std::setprecision(4);
  for (int c = 0; c < catalog.count(); ++c) {
    out << std::left << std::setw(static_cast<int>(width))
        << catalog.class_names[static_cast<std::size_t>(c)] << std::right
        << std::setw(11) << report.precision[static_cast<std::size_t>(c)]
        << std::setw(9) << report.recall[static_cast<std::size_t>(c)]
        << std::setw(9) << report.f1[static_cast<std::size_t>(c)];
    if (report.absent[static_cast<std::size_t>(c)]) out << "  (absent)";
    out << "\n";
  }
  out << "\n"
      << std::left << std::setw(static_cast<int>(width)) << "OA" << std::right
      << std::setw(11) << report.oa << "\n"
      << std::left << std::setw(static_cast<int>(width)) << "avg F1"
      << std::right << std::setw(11) << report.avg_f1 << "\n";
  out.unsetf(std::ios::fixed);
}

void write_metrics_csv(std::ostream& out, const MetricsReport& report,
                       const ClassCatalog& catalog) {
  if (catalog.count() != static_cast<int>(report.f1.size()))
    throw std::invalid_argument("write_metrics_csv: catalog/report class count mismatch");
  out << "class,precision,recall,f1,absent\n" << std::setprecision(17);
  for (int c = 0; c < catalog.count(); ++c) {
    const auto i = static_cast<std::size_t>(c);
    out << catalog.class_names[i] << ',' << report.precision[i] << ','
        << report.recall[i] << ',' << report.f1[i] << ','
        << (report.absent[i] ? 1 : 0) << "\n";
  }
  out << "oa," << report.oa << "\n";
  out << "avg_f1," << report.avg_f1 << "\n";
}

void write_entropy_map(std::ostream& out, const PointCloud& cloud,
                       const std::vector<double>& values) {
  if (values.size() != cloud.size())
    throw std::invalid_argument("write_entropy_map: value count does not match cloud");
  out << "# x y z normalized_entropy\n" << std::setprecision(9);
  for (std::size_t i = 0; i < cloud.size(); ++i)
    out << cloud.coords[i][0] << ' ' << cloud.coords[i][1] << ' '
        << cloud.coords[i][2] << ' ' << values[i] << "\n";
  if (!out) throw DataError("entropy map write failed");
}

}  // namespace wsseg
