#include "harmonic/neighbors.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <thread>

#include <json.hpp>

#include "harmonic/rng.hpp"

namespace harmonic {

namespace {

double numeric_term(double a, double b, double width) {
  if (width <= 0.0) return 0.0;
  return std::min(1.0, std::abs(a - b) / width);
}

double feature_sum(const Record& a, const Record& b, const Schema& schema) {
  if (a.values.size() != schema.features.size() || b.values.size() != schema.features.size()) {
    throw DataError("mixed_distance: record does not match schema");
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < schema.features.size(); ++j) {
    const auto& f = schema.features[j];
    if (f.is_numerical()) {
      sum += numeric_term(a.values[j].number, b.values[j].number, f.width());
    } else {
      sum += a.values[j].text == b.values[j].text ? 0.0 : 1.0;
    }
  }
  return sum;
}

// Column-major copy of the training rows: raw numbers for numerical features,
// interned codes for categorical ones. Distances computed from it are
// bit-identical to mixed_distance since the same terms are summed in the
// same order.
struct EncodedRows {
  std::size_t rows = 0;
  std::vector<std::vector<double>> numbers;
  std::vector<std::vector<std::uint32_t>> codes;
  std::vector<double> widths;
  std::vector<bool> numerical;

  EncodedRows(const Dataset& ds, const Schema& schema, const std::vector<std::size_t>& idx) : rows(idx.size()) {
    const std::size_t m = schema.features.size();
    numbers.resize(m);
    codes.resize(m);
    for (std::size_t j = 0; j < m; ++j) {
      const auto& f = schema.features[j];
      numerical.push_back(f.is_numerical());
      widths.push_back(f.width());
      for (std::size_t i : idx) {
        const Cell& c = ds.records[i].values[j];
        if (f.is_numerical()) {
          numbers[j].push_back(c.number);
        } else {
          auto it = std::lower_bound(f.categories.begin(), f.categories.end(), c.text);
          codes[j].push_back(static_cast<std::uint32_t>(it - f.categories.begin()));
        }
      }
    }
  }

  double distance(std::size_t a, std::size_t b) const {
    double sum = 0.0;
    for (std::size_t j = 0; j < numerical.size(); ++j) {
      if (numerical[j]) {
        sum += numeric_term(numbers[j][a], numbers[j][b], widths[j]);
      } else {
        sum += codes[j][a] == codes[j][b] ? 0.0 : 1.0;
      }
    }
    return numerical.empty() ? 0.0 : sum / static_cast<double>(numerical.size());
  }
};

}  // namespace

double mixed_distance(const Record& a, const Record& b, const Schema& schema) {
  const double sum = feature_sum(a, b, schema);
  return schema.features.empty() ? 0.0 : sum / static_cast<double>(schema.features.size());
}

double mixed_distance_with_label(const Record& a, const Record& b, const Schema& schema) {
  double sum = feature_sum(a, b, schema);
  sum += a.label == b.label ? 0.0 : 1.0;
  return sum / static_cast<double>(schema.features.size() + 1);
}

Schema schema_with_ranges(const Dataset& dataset, const std::vector<std::size_t>& rows) {
  Schema s = dataset.schema;
  for (std::size_t j = 0; j < s.features.size(); ++j) {
    auto& f = s.features[j];
    if (!f.is_numerical() || rows.empty()) continue;
    f.min = f.max = dataset.records[rows.front()].values[j].number;
    for (std::size_t i : rows) {
      const double v = dataset.records[i].values[j].number;
      f.min = std::min(f.min, v);
      f.max = std::max(f.max, v);
    }
  }
  return s;
}

GroupSet knn_groups(const Dataset& dataset, std::size_t k, unsigned threads) {
  if (k < 1) throw DataError("knn_groups: k must be at least 1");
  const std::vector<std::size_t> train = dataset.train_indices();
  if (k >= train.size()) {
    throw DataError("knn_groups: k = " + std::to_string(k) + " needs more than " + std::to_string(k) +
                    " training records, have " + std::to_string(train.size()));
  }
  const Schema schema = schema_with_ranges(dataset, train);
  const EncodedRows rows(dataset, schema, train);
  const std::size_t n = train.size();

  GroupSet out;
  out.k = k;
  out.purpose = GroupPurpose::finetune;
  out.groups.resize(n);

  auto work = [&](std::size_t begin, std::size_t end) {
    std::vector<std::pair<double, std::size_t>> cand;
    cand.reserve(n);
    for (std::size_t t = begin; t < end; ++t) {
      cand.clear();
      for (std::size_t o = 0; o < n; ++o) {
        if (o != t) cand.emplace_back(rows.distance(t, o), o);
      }
      // Positions in `train` are ascending record indices, so ordering by
      // (distance, position) breaks ties by record index.
      std::nth_element(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k - 1), cand.end());
      std::sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k));
      NeighborGroup g;
      g.target = train[t];
      for (std::size_t i = 0; i < k; ++i) g.neighbors.push_back(train[cand[i].second]);
      out.groups[t] = std::move(g);
    }
  };

  unsigned workers = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  if (workers <= 1) {
    work(0, n);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t b = 0; b < n; b += chunk) pool.emplace_back(work, b, std::min(n, b + chunk));
  }
  return out;
}

GroupSet filter_groups(const GroupSet& groups, const Dataset& dataset) {
  if (groups.purpose != GroupPurpose::finetune) throw DataError("filter_groups: prompt groups are never filtered");
  GroupSet out;
  out.k = groups.k;
  out.purpose = groups.purpose;
  for (const auto& g : groups.groups) {
    if (!g.target) throw DataError("filter_groups: finetune group without target");
    const std::string& label = dataset.records.at(*g.target).label;
    std::size_t differing = 0;
    for (std::size_t i : g.neighbors) differing += dataset.records.at(i).label != label;
    // Discard iff differing > k/2, written without division.
    if (2 * differing > g.neighbors.size()) continue;
    NeighborGroup kept = g;
    kept.kept = true;
    out.groups.push_back(std::move(kept));
  }
  return out;
}

GroupSet build_prompt_groups(const Dataset& dataset, std::size_t k, std::size_t count, std::uint64_t seed) {
  if (k < 1) throw DataError("build_prompt_groups: k must be at least 1");
  if (count < 1) throw DataError("build_prompt_groups: count must be at least 1");
  const std::vector<std::size_t> train = dataset.train_indices();
  if (k > train.size()) throw DataError("build_prompt_groups: k exceeds the training split");

  GroupSet out;
  out.k = k;
  out.purpose = GroupPurpose::prompt;
  out.groups.reserve(count);
  std::vector<std::size_t> pool;
  for (std::size_t g = 0; g < count; ++g) {
    Rng rng(mix_seed(seed, g));
    pool = train;
    NeighborGroup group;
    // Partial Fisher-Yates: the first k slots become a uniform k-subset in random order.
    for (std::size_t i = 0; i < k; ++i) {
      std::size_t j = i + rng.below(pool.size() - i);
      std::swap(pool[i], pool[j]);
      group.neighbors.push_back(pool[i]);
    }
    out.groups.push_back(std::move(group));
  }
  return out;
}

void write_groups_jsonl(const GroupSet& groups, std::ostream& out) {
  using nlohmann::json;
  for (const auto& g : groups.groups) {
    json j;
    j["target"] = g.target ? json(*g.target) : json(nullptr);
    j["neighbors"] = g.neighbors;
    j["kept"] = g.kept;
    j["purpose"] = groups.purpose == GroupPurpose::finetune ? "finetune" : "prompt";
    out << j.dump() << '\n';
  }
}

GroupSet read_groups_jsonl(std::istream& in) {
  using nlohmann::json;
  GroupSet out;
  std::string line;
  bool first = true;
  try {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json j = json::parse(line);
      NeighborGroup g;
      if (!j.at("target").is_null()) g.target = j["target"].get<std::size_t>();
      g.neighbors = j.at("neighbors").get<std::vector<std::size_t>>();
      g.kept = j.at("kept").get<bool>();
      const auto purpose = j.at("purpose").get<std::string>() == "prompt" ? GroupPurpose::prompt : GroupPurpose::finetune;
      if (first) {
        out.k = g.neighbors.size();
        out.purpose = purpose;
        first = false;
      } else if (g.neighbors.size() != out.k || purpose != out.purpose) {
        throw DataError("groups: inconsistent group size or purpose");
      }
      out.groups.push_back(std::move(g));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("groups: ") + e.what());
  }
  return out;
}

}  // namespace harmonic
