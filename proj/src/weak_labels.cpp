#include "wsseg/weak_labels.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "wsseg/errors.hpp"

namespace wsseg {

bool WeakLabelSet::contains(int point_index) const {
  return std::binary_search(labeled_indices.begin(), labeled_indices.end(),
                            point_index);
}

int WeakLabelSet::label_of(int point_index) const {
  const auto it = std::lower_bound(labeled_indices.begin(),
                                   labeled_indices.end(), point_index);
  if (it == labeled_indices.end() || *it != point_index) {
    return LabelArray::kUnlabeled;
  }
  return labels[static_cast<std::size_t>(it - labeled_indices.begin())];
}

std::vector<int> class_populations(const LabelArray& truth, int num_classes) {
  std::vector<int> pops(static_cast<std::size_t>(num_classes), 0);
  for (const int l : truth.labels) {
    if (l == LabelArray::kUnlabeled) continue;
    if (l < 0 || l >= num_classes) {
      throw std::invalid_argument("class_populations: label out of range");
    }
    ++pops[static_cast<std::size_t>(l)];
  }
  return pops;
}

std::vector<int> weak_label_quota(const std::vector<int>& class_populations,
                                  int per_class_cap) {
  std::vector<int> quota(class_populations.size());
  for (std::size_t c = 0; c < class_populations.size(); ++c) {
    const int pop = class_populations[c];
    quota[c] = std::min({per_class_cap, pop / 10, pop});
  }
  return quota;
}

WeakLabelSet sample_weak_labels(const LabelArray& truth,
                                const ClassCatalog& catalog, int per_class_cap,
                                RngStream& rng, const WeakLabelSet* parent) {
  if (per_class_cap < 1) {
    throw std::invalid_argument("sample_weak_labels: per_class_cap must be >= 1");
  }
  catalog.validate();
  const int num_classes = catalog.count();
  truth.validate(num_classes);

  // Per-class candidate pools, ascending index order.
  std::vector<std::vector<int>> pools(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int l = truth.labels[i];
    if (l != LabelArray::kUnlabeled) {
      pools[static_cast<std::size_t>(l)].push_back(static_cast<int>(i));
    }
  }

  std::vector<int> pops(static_cast<std::size_t>(num_classes));
  for (int c = 0; c < num_classes; ++c) {
    pops[static_cast<std::size_t>(c)] = static_cast<int>(pools[static_cast<std::size_t>(c)].size());
  }
  const std::vector<int> quota = weak_label_quota(pops, per_class_cap);

  std::vector<std::vector<int>> parent_per_class(static_cast<std::size_t>(num_classes));
  if (parent != nullptr) {
    for (std::size_t i = 0; i < parent->labeled_indices.size(); ++i) {
      const int idx = parent->labeled_indices[i];
      if (idx < 0 || static_cast<std::size_t>(idx) >= truth.size() ||
          truth.labels[static_cast<std::size_t>(idx)] != parent->labels[i]) {
        throw std::invalid_argument(
            "sample_weak_labels: parent label disagrees with ground truth");
      }
      parent_per_class[static_cast<std::size_t>(parent->labels[i])].push_back(idx);
    }
    for (int c = 0; c < num_classes; ++c) {
      if (static_cast<int>(parent_per_class[static_cast<std::size_t>(c)].size()) >
          quota[static_cast<std::size_t>(c)]) {
        throw std::invalid_argument(
            "sample_weak_labels: parent selects more labels than the requested cap allows");
      }
    }
  }

  WeakLabelSet out;
  out.per_class_cap = per_class_cap;
  std::vector<std::pair<int, int>> picked;  // (index, class)

  for (int c = 0; c < num_classes; ++c) {
    auto& pool = pools[static_cast<std::size_t>(c)];
    if (pool.empty()) {
      out.empty_classes.push_back(c);
      continue;
    }
    const auto& inherited = parent_per_class[static_cast<std::size_t>(c)];
    for (const int idx : inherited) picked.emplace_back(idx, c);

    const int need = quota[static_cast<std::size_t>(c)] - static_cast<int>(inherited.size());
    if (need <= 0) continue;

    if (!inherited.empty()) {
      std::unordered_set<int> taken(inherited.begin(), inherited.end());
      std::erase_if(pool, [&taken](int idx) { return taken.count(idx) > 0; });
    }
    // Partial Fisher-Yates: the first `need` slots end up uniform without
    // replacement.
    const std::size_t n = pool.size();
    for (int j = 0; j < need; ++j) {
      const std::size_t pick =
          static_cast<std::size_t>(j) + static_cast<std::size_t>(rng.below(n - static_cast<std::size_t>(j)));
      std::swap(pool[static_cast<std::size_t>(j)], pool[pick]);
      picked.emplace_back(pool[static_cast<std::size_t>(j)], c);
    }
  }

  std::sort(picked.begin(), picked.end());
  out.labeled_indices.reserve(picked.size());
  out.labels.reserve(picked.size());
  for (const auto& [idx, c] : picked) {
    out.labeled_indices.push_back(idx);
    out.labels.push_back(c);
  }
  out.ratio = truth.size() == 0
                  ? 0.0
                  : static_cast<double>(out.count()) / static_cast<double>(truth.size());
  return out;
}

std::vector<int> unlabeled_complement(std::size_t cloud_size,
                                      const WeakLabelSet& weak) {
  if (!weak.labeled_indices.empty() &&
      (weak.labeled_indices.front() < 0 ||
       static_cast<std::size_t>(weak.labeled_indices.back()) >= cloud_size)) {
    throw std::invalid_argument("unlabeled_complement: weak index out of range");
  }
  std::vector<int> out;
  out.reserve(cloud_size - weak.count());
  std::size_t w = 0;
  for (std::size_t i = 0; i < cloud_size; ++i) {
    if (w < weak.labeled_indices.size() &&
        weak.labeled_indices[w] == static_cast<int>(i)) {
      ++w;
      continue;
    }
    out.push_back(static_cast<int>(i));
  }
  return out;
}

int choose_cap_for_ratio(const std::vector<int>& class_populations,
                         double target_ratio) {
  long long total = 0;
  int max_pop = 1;
  for (const int p : class_populations) {
    total += p;
    max_pop = std::max(max_pop, p);
  }
  const double target = target_ratio * static_cast<double>(total);
  auto realized = [&](int cap) {
    long long sum = 0;
    for (const int q : weak_label_quota(class_populations, cap)) sum += q;
    return static_cast<double>(sum);
  };
  // Realized count is nondecreasing in cap; binary search the smallest cap
  // reaching the target.
  int lo = 1, hi = max_pop;
  if (realized(hi) < target) return hi;
  while (lo < hi) {
    const int mid = lo + (hi - lo) / 2;
    if (realized(mid) >= target) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return lo;
}

void write_weak_labels(std::ostream& out, const WeakLabelSet& weak) {
  out << "# ratio=" << weak.ratio << " cap=" << weak.per_class_cap
      << " seed=" << weak.seed << "\n";
  for (std::size_t i = 0; i < weak.count(); ++i) {
    out << weak.labeled_indices[i] << " " << weak.labels[i] << "\n";
  }
}

WeakLabelSet read_weak_labels(std::istream& in) {
  WeakLabelSet weak;
  std::string line;
  int line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream hs(line.substr(1));
      std::string token;
      while (hs >> token) {
        const auto eq = token.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = token.substr(0, eq);
        const std::string value = token.substr(eq + 1);
        try {
          if (key == "ratio") weak.ratio = std::stod(value);
          if (key == "cap") weak.per_class_cap = std::stoi(value);
          if (key == "seed") weak.seed = std::stoull(value);
        } catch (const std::exception&) {
          throw DataError("weak label header: bad value in '" + token + "'");
        }
      }
      have_header = true;
      continue;
    }
    std::istringstream ls(line);
    int idx = 0, cls = 0;
    if (!(ls >> idx >> cls)) {
      throw DataError("weak label file: malformed line " + std::to_string(line_no));
    }
    weak.labeled_indices.push_back(idx);
    weak.labels.push_back(cls);
  }
  if (!have_header) {
    throw DataError("weak label file: missing header line");
  }
  if (!std::is_sorted(weak.labeled_indices.begin(), weak.labeled_indices.end())) {
    throw DataError("weak label file: indices not sorted");
  }
  return weak;
}

}  // namespace wsseg
