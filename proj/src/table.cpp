#include "harmonic/table.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "csv.hpp"
#include "harmonic/rng.hpp"

namespace harmonic {

using nlohmann::json;

std::string_view to_string(FeatureKind kind) {
  return kind == FeatureKind::numerical ? "numerical" : "categorical";
}

FeatureKind parse_feature_kind(std::string_view text) {
  if (text == "numerical") return FeatureKind::numerical;
  if (text == "categorical") return FeatureKind::categorical;
  throw DataError("unknown feature kind '" + std::string(text) + "'");
}

std::string_view to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::train: return "train";
    case SplitTag::val: return "val";
    case SplitTag::test: return "test";
  }
  return "train";
}

SplitTag parse_split_tag(std::string_view text) {
  if (text == "train") return SplitTag::train;
  if (text == "val") return SplitTag::val;
  if (text == "test") return SplitTag::test;
  throw DataError("unknown split tag '" + std::string(text) + "'");
}

bool FeatureSpec::has_category(std::string_view value) const {
  return std::binary_search(categories.begin(), categories.end(), value);
}

std::optional<std::size_t> Schema::feature_index(std::string_view name) const {
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].name == name) return i;
  }
  return std::nullopt;
}

void Schema::validate() const {
  std::set<std::string_view> names;
  for (const auto& f : features) {
    if (f.name.empty()) throw DataError("schema: empty feature name");
    if (!names.insert(f.name).second) throw DataError("schema: duplicate feature '" + f.name + "'");
    if (f.is_numerical() && !(f.min <= f.max)) {
      throw DataError("schema: feature '" + f.name + "' has min > max");
    }
    if (!f.is_numerical() && f.categories.empty()) {
      throw DataError("schema: feature '" + f.name + "' has no categories");
    }
  }
  if (label.name.empty()) throw DataError("schema: empty label name");
  if (names.contains(label.name)) throw DataError("schema: label '" + label.name + "' is also a feature");
  if (label.kind != FeatureKind::categorical) throw DataError("schema: label must be categorical");
  if (label.categories.size() < 2) {
    throw DataError("schema: label '" + label.name + "' needs at least 2 classes");
  }
}

std::vector<std::size_t> Dataset::indices(SplitTag tag) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (tags[i] == tag) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> Dataset::train_indices() const {
  if (!is_split()) {
    std::vector<std::size_t> all(records.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }
  return indices(SplitTag::train);
}

Dataset Dataset::subset(SplitTag tag) const {
  Dataset out;
  out.schema = schema;
  for (std::size_t i : indices(tag)) out.records.push_back(records[i]);
  return out;
}

std::optional<double> parse_number(std::string_view text) {
  if (text.empty()) return std::nullopt;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
  if (!std::isfinite(value)) return std::nullopt;
  return value;
}

void check_record(const Record& record, const Schema& schema) {
  if (record.values.size() != schema.features.size()) {
    throw DataError("record has " + std::to_string(record.values.size()) + " values, schema has " +
                    std::to_string(schema.features.size()) + " features");
  }
  for (std::size_t j = 0; j < schema.features.size(); ++j) {
    const auto& f = schema.features[j];
    const auto& cell = record.values[j];
    if (f.is_numerical()) {
      auto v = parse_number(cell.text);
      if (!v || *v != cell.number) {
        throw DataError("feature '" + f.name + "': '" + cell.text + "' is not a number");
      }
    } else if (!f.has_category(cell.text)) {
      throw DataError("feature '" + f.name + "': unknown category '" + cell.text + "'");
    }
  }
  if (!schema.label.has_category(record.label)) {
    throw DataError("label '" + record.label + "' is not a known class");
  }
}

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> sorted_unique(std::vector<std::string> values) {
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  return values;
}

Dataset build_dataset(csv::Table table, std::string_view label_column, const KindOverrides& overrides) {
  for (auto& h : table.header) h = trim(h);
  for (auto& row : table.rows) {
    for (auto& cell : row) cell = trim(cell);
  }
  {
    std::set<std::string_view> seen;
    for (const auto& h : table.header) {
      if (h.empty()) throw DataError("csv: empty column name in header");
      if (!seen.insert(h).second) throw DataError("csv: duplicate column '" + h + "'");
    }
  }
  auto label_it = std::find(table.header.begin(), table.header.end(), label_column);
  if (label_it == table.header.end()) {
    throw DataError("label column '" + std::string(label_column) + "' not in header");
  }
  if (table.rows.empty()) throw DataError("dataset has no rows");
  for (const auto& [name, kind] : overrides) {
    if (std::find(table.header.begin(), table.header.end(), name) == table.header.end()) {
      throw DataError("kind override for unknown column '" + name + "'");
    }
  }
  const std::size_t label_col = static_cast<std::size_t>(label_it - table.header.begin());

  Dataset ds;
  ds.schema.column_order = table.header;
  std::vector<std::size_t> feature_cols;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (c == label_col) continue;
    feature_cols.push_back(c);
    FeatureSpec spec;
    spec.name = table.header[c];
    bool any_value = false;
    bool all_numeric = true;
    for (const auto& row : table.rows) {
      if (row[c].empty()) continue;
      any_value = true;
      if (!parse_number(row[c])) {
        all_numeric = false;
        break;
      }
    }
    spec.kind = (any_value && all_numeric) ? FeatureKind::numerical : FeatureKind::categorical;
    if (auto o = overrides.find(spec.name); o != overrides.end()) spec.kind = o->second;
    ds.schema.features.push_back(std::move(spec));
  }

  ds.records.resize(table.rows.size());
  for (std::size_t j = 0; j < feature_cols.size(); ++j) {
    auto& spec = ds.schema.features[j];
    const std::size_t c = feature_cols[j];
    std::vector<std::string> cats;
    bool first = true;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      std::string& text = table.rows[r][c];
      Cell cell;
      if (spec.is_numerical()) {
        auto v = parse_number(text);
        if (!v) {
          throw DataError("column '" + spec.name + "' row " + std::to_string(r + 1) +
                          (text.empty() ? ": missing numerical value" : ": '" + text + "' is not a number"));
        }
        cell.number = *v;
        spec.min = first ? *v : std::min(spec.min, *v);
        spec.max = first ? *v : std::max(spec.max, *v);
        first = false;
      } else if (text.empty()) {
        text = std::string(kMissingToken);
      }
      if (!spec.is_numerical()) cats.push_back(text);
      cell.text = std::move(text);
      ds.records[r].values.push_back(std::move(cell));
    }
    if (!spec.is_numerical()) spec.categories = sorted_unique(std::move(cats));
  }

  ds.schema.label.name = table.header[label_col];
  ds.schema.label.kind = FeatureKind::categorical;
  std::vector<std::string> classes;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    std::string& text = table.rows[r][label_col];
    if (text.empty()) throw DataError("row " + std::to_string(r + 1) + ": missing label");
    classes.push_back(text);
    ds.records[r].label = std::move(text);
  }
  ds.schema.label.categories = sorted_unique(std::move(classes));
  ds.schema.validate();
  return ds;
}

csv::Table to_table(const Dataset& ds) {
  csv::Table table;
  table.header = ds.schema.column_order;
  std::vector<std::optional<std::size_t>> source;  // feature index, nullopt = label
  for (const auto& name : table.header) {
    source.push_back(name == ds.schema.label.name ? std::nullopt : ds.schema.feature_index(name));
  }
  table.rows.reserve(ds.records.size());
  for (const auto& rec : ds.records) {
    std::vector<std::string> row;
    row.reserve(source.size());
    for (const auto& s : source) row.push_back(s ? rec.values[*s].text : rec.label);
    table.rows.push_back(std::move(row));
  }
  return table;
}

Record conform_row(const std::vector<std::string>& row, const std::vector<std::size_t>& feature_cols,
                   std::size_t label_col, const Schema& schema, std::size_t line) {
  Record rec;
  for (std::size_t j = 0; j < feature_cols.size(); ++j) {
    const auto& f = schema.features[j];
    Cell cell{trim(row[feature_cols[j]]), 0.0};
    if (f.is_numerical()) {
      auto v = parse_number(cell.text);
      if (!v) {
        throw DataError("row " + std::to_string(line) + ": '" + f.name + "' value '" + cell.text +
                        "' is not a number");
      }
      cell.number = *v;
    } else {
      if (cell.text.empty()) cell.text = std::string(kMissingToken);
      if (!f.has_category(cell.text)) {
        throw DataError("row " + std::to_string(line) + ": '" + f.name + "' has unknown category '" +
                        cell.text + "'");
      }
    }
    rec.values.push_back(std::move(cell));
  }
  rec.label = trim(row[label_col]);
  if (!schema.label.has_category(rec.label)) {
    throw DataError("row " + std::to_string(line) + ": unknown label '" + rec.label + "'");
  }
  return rec;
}

}  // namespace

Dataset ingest_csv_text(std::string_view text, std::string_view label_column, const KindOverrides& overrides) {
  return build_dataset(csv::parse(text), label_column, overrides);
}

Dataset ingest_csv(const std::string& path, std::string_view label_column, const KindOverrides& overrides) {
  return ingest_csv_text(csv::read_file(path), label_column, overrides);
}

Dataset read_csv_text_with_schema(std::string_view text, const Schema& schema) {
  csv::Table table = csv::parse(text);
  for (auto& h : table.header) h = trim(h);
  std::vector<std::size_t> feature_cols;
  auto col_of = [&](const std::string& name) {
    auto it = std::find(table.header.begin(), table.header.end(), name);
    if (it == table.header.end()) throw DataError("csv: column '" + name + "' missing");
    return static_cast<std::size_t>(it - table.header.begin());
  };
  for (const auto& f : schema.features) feature_cols.push_back(col_of(f.name));
  const std::size_t label_col = col_of(schema.label.name);
  if (table.header.size() != schema.features.size() + 1) {
    throw DataError("csv: header has columns outside the schema");
  }
  Dataset ds;
  ds.schema = schema;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    ds.records.push_back(conform_row(table.rows[r], feature_cols, label_col, schema, r + 2));
  }
  return ds;
}

Dataset read_csv_with_schema(const std::string& path, const Schema& schema) {
  return read_csv_text_with_schema(csv::read_file(path), schema);
}

void write_csv(const Dataset& dataset, std::ostream& out) {
  csv::Table table = to_table(dataset);
  csv::write_row(out, table.header);
  for (const auto& row : table.rows) csv::write_row(out, row);
}

std::string to_csv(const Dataset& dataset) {
  std::ostringstream out;
  write_csv(dataset, out);
  return out.str();
}

namespace {

json spec_to_json(const FeatureSpec& f) {
  json j = {{"name", f.name}, {"kind", to_string(f.kind)}};
  if (f.is_numerical()) {
    j["min"] = f.min;
    j["max"] = f.max;
  } else {
    j["categories"] = f.categories;
  }
  return j;
}

FeatureSpec spec_from_json(const json& j) {
  FeatureSpec f;
  f.name = j.at("name").get<std::string>();
  f.kind = parse_feature_kind(j.at("kind").get<std::string>());
  if (f.is_numerical()) {
    f.min = j.at("min").get<double>();
    f.max = j.at("max").get<double>();
  } else {
    f.categories = j.at("categories").get<std::vector<std::string>>();
  }
  return f;
}

}  // namespace

void write_snapshot(const Dataset& dataset, std::ostream& out) {
  json header;
  json features = json::array();
  for (const auto& f : dataset.schema.features) features.push_back(spec_to_json(f));
  header["schema"] = {{"features", features},
                      {"label", spec_to_json(dataset.schema.label)},
                      {"column_order", dataset.schema.column_order}};
  header["records"] = dataset.records.size();
  out << header.dump() << '\n';
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    const auto& rec = dataset.records[i];
    json values = json::array();
    for (const auto& c : rec.values) values.push_back(c.text);
    json line = {{"values", values}, {"label", rec.label}};
    if (dataset.is_split()) line["split"] = to_string(dataset.tags[i]);
    out << line.dump() << '\n';
  }
}

Dataset read_snapshot(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("snapshot: empty");
  Dataset ds;
  std::size_t expected = 0;
  try {
    json header = json::parse(line);
    const json& s = header.at("schema");
    for (const auto& f : s.at("features")) ds.schema.features.push_back(spec_from_json(f));
    ds.schema.label = spec_from_json(s.at("label"));
    ds.schema.column_order = s.at("column_order").get<std::vector<std::string>>();
    expected = header.at("records").get<std::size_t>();
    ds.schema.validate();
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json j = json::parse(line);
      Record rec;
      const auto& values = j.at("values");
      if (values.size() != ds.schema.features.size()) throw DataError("snapshot: wrong value count");
      for (std::size_t k = 0; k < values.size(); ++k) {
        Cell cell{values[k].get<std::string>(), 0.0};
        if (ds.schema.features[k].is_numerical()) {
          auto v = parse_number(cell.text);
          if (!v) throw DataError("snapshot: '" + cell.text + "' is not a number");
          cell.number = *v;
        }
        rec.values.push_back(std::move(cell));
      }
      rec.label = j.at("label").get<std::string>();
      check_record(rec, ds.schema);
      if (j.contains("split")) ds.tags.push_back(parse_split_tag(j["split"].get<std::string>()));
      ds.records.push_back(std::move(rec));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("snapshot: ") + e.what());
  }
  if (ds.records.size() != expected) throw DataError("snapshot: truncated");
  if (!ds.tags.empty() && ds.tags.size() != ds.records.size()) {
    throw DataError("snapshot: split tags cover only part of the records");
  }
  return ds;
}

std::int64_t parse_timestamp(std::string_view text) {
  auto fail = [&]() -> DataError { return DataError("unparseable date '" + std::string(text) + "'"); };
  auto digits = [&](std::size_t pos, std::size_t len) {
    if (pos + len > text.size()) throw fail();
    int v = 0;
    auto [p, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, v);
    if (ec != std::errc() || p != text.data() + pos + len) throw fail();
    return v;
  };
  if (text.size() < 10 || text[4] != '-' || text[7] != '-') throw fail();
  const int y = digits(0, 4);
  const int mo = digits(5, 2);
  const int d = digits(8, 2);
  int hh = 0, mm = 0, ss = 0;
  if (text.size() > 10) {
    if ((text[10] != ' ' && text[10] != 'T') || text.size() < 16 || text[13] != ':') throw fail();
    hh = digits(11, 2);
    mm = digits(14, 2);
    if (text.size() > 16) {
      if (text.size() != 19 || text[16] != ':') throw fail();
      ss = digits(17, 2);
    }
    if (hh > 23 || mm > 59 || ss > 60) throw fail();
  }
  using namespace std::chrono;
  year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) throw fail();
  const auto days = sys_days{ymd}.time_since_epoch().count();
  return static_cast<std::int64_t>(days) * 86400 + hh * 3600 + mm * 60 + ss;
}

Dataset apply_preprocess(const Dataset& dataset, std::span<const Transform> transforms) {
  if (transforms.empty()) return dataset;
  csv::Table table = to_table(dataset);
  std::string label = dataset.schema.label.name;

  KindOverrides kinds;
  for (const auto& f : dataset.schema.features) kinds[f.name] = f.kind;

  auto column = [&](const std::string& name) {
    auto it = std::find(table.header.begin(), table.header.end(), name);
    if (it == table.header.end()) throw DataError("transform references unknown column '" + name + "'");
    return static_cast<std::size_t>(it - table.header.begin());
  };

  for (const auto& t : transforms) {
    if (const auto* remap = std::get_if<ValueRemap>(&t)) {
      const std::size_t c = column(remap->column);
      for (auto& row : table.rows) {
        auto it = remap->table.find(row[c]);
        if (it == remap->table.end()) {
          throw DataError("remap of '" + remap->column + "' has no entry for value '" + row[c] + "'");
        }
        row[c] = it->second;
      }
      // Remapped feature columns get their kind re-inferred.
      kinds.erase(remap->column);
    } else if (const auto* date = std::get_if<DateToTimestamp>(&t)) {
      const std::size_t c = column(date->column);
      if (date->column == label) throw DataError("cannot convert the label column to a timestamp");
      for (auto& row : table.rows) row[c] = std::to_string(parse_timestamp(row[c]));
      kinds[date->column] = FeatureKind::numerical;
    } else if (const auto* drop = std::get_if<DropColumn>(&t)) {
      const std::size_t c = column(drop->column);
      if (drop->column == label) throw DataError("cannot drop the label column");
      table.header.erase(table.header.begin() + static_cast<std::ptrdiff_t>(c));
      for (auto& row : table.rows) row.erase(row.begin() + static_cast<std::ptrdiff_t>(c));
      kinds.erase(drop->column);
    }
  }

  Dataset out = build_dataset(std::move(table), label, kinds);
  out.tags = dataset.tags;
  return out;
}

Dataset split(const Dataset& dataset, SplitRatios ratios, std::uint64_t seed) {
  if (!(ratios.train > 0 && ratios.val > 0 && ratios.test > 0) ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
    throw DataError("split ratios must be positive and sum to 1");
  }
  const std::size_t n = dataset.records.size();
  if (n < 3) throw DataError("split needs at least 3 records");
  // The epsilon absorbs representation error such as 10 * 0.7 = 7.000000000000001.
  auto count = [&](double r) { return static_cast<std::size_t>(std::floor(static_cast<double>(n) * r + 1e-9)); };
  const std::size_t n_val = count(ratios.val);
  const std::size_t n_test = count(ratios.test);
  if (n_val + n_test >= n) throw DataError("split leaves no training records");

  Rng rng(seed);
  std::vector<std::size_t> order = rng.permutation(n);
  Dataset out = dataset;
  out.tags.assign(n, SplitTag::train);
  const std::size_t n_train = n - n_val - n_test;
  for (std::size_t i = n_train; i < n_train + n_val; ++i) out.tags[order[i]] = SplitTag::val;
  for (std::size_t i = n_train + n_val; i < n; ++i) out.tags[order[i]] = SplitTag::test;
  return out;
}

}  // namespace harmonic
