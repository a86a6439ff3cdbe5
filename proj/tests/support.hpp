#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "harmonic/rng.hpp"
#include "harmonic/table.hpp"

namespace harmonic::testing {

inline std::string source_path(const std::string& rel) { return std::string(HARMONIC_SOURCE_DIR) + "/" + rel; }

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("harmonic_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline Dataset german_fixture() { return ingest_csv(source_path("tests/fixtures/german_sample.csv"), "status"); }

/// Random mixed-type dataset with `num` numerical and `cat` categorical
/// features and `classes` labels. Numerical values are small integers so ties occur.
inline Dataset random_dataset(std::uint64_t seed, std::size_t n, std::size_t num, std::size_t cat,
                              std::size_t classes = 2, std::size_t levels = 3, int value_range = 10) {
  Rng rng(seed);
  Dataset ds;
  for (std::size_t j = 0; j < num; ++j) {
    FeatureSpec f;
    f.name = "n" + std::to_string(j);
    f.kind = FeatureKind::numerical;
    ds.schema.features.push_back(f);
  }
  for (std::size_t j = 0; j < cat; ++j) {
    FeatureSpec f;
    f.name = "c" + std::to_string(j);
    f.kind = FeatureKind::categorical;
    for (std::size_t l = 0; l < levels; ++l) f.categories.push_back("v" + std::to_string(l));
    ds.schema.features.push_back(f);
  }
  ds.schema.label.name = "y";
  for (std::size_t c = 0; c < classes; ++c) ds.schema.label.categories.push_back("k" + std::to_string(c));
  for (const auto& f : ds.schema.features) ds.schema.column_order.push_back(f.name);
  ds.schema.column_order.push_back("y");

  for (std::size_t i = 0; i < n; ++i) {
    Record r;
    for (std::size_t j = 0; j < num; ++j) {
      const int v = static_cast<int>(rng.below(static_cast<std::size_t>(value_range)));
      r.values.push_back({std::to_string(v), static_cast<double>(v)});
    }
    for (std::size_t j = 0; j < cat; ++j) r.values.push_back({"v" + std::to_string(rng.below(levels)), 0.0});
    r.label = "k" + std::to_string(rng.below(classes));
    ds.records.push_back(std::move(r));
  }
  // Ranges and categories must match the observed values.
  for (std::size_t j = 0; j < num; ++j) {
    double lo = 1e300, hi = -1e300;
    for (const auto& r : ds.records) {
      lo = std::min(lo, r.values[j].number);
      hi = std::max(hi, r.values[j].number);
    }
    ds.schema.features[j].min = lo;
    ds.schema.features[j].max = hi;
  }
  for (std::size_t j = num; j < num + cat; ++j) {
    std::vector<std::string> seen;
    for (const auto& r : ds.records) seen.push_back(r.values[j].text);
    std::sort(seen.begin(), seen.end());
    seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
    ds.schema.features[j].categories = seen;
  }
  {
    std::vector<std::string> seen;
    for (const auto& r : ds.records) seen.push_back(r.label);
    std::sort(seen.begin(), seen.end());
    seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
    ds.schema.label.categories = seen;
  }
  return ds;
}

}  // namespace harmonic::testing
