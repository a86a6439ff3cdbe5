#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace harmonic {

/// Raised for malformed input data or violated dataset invariants.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class FeatureKind { numerical, categorical };

std::string_view to_string(FeatureKind kind);
FeatureKind parse_feature_kind(std::string_view text);

/// Token stored for empty categorical cells.
inline constexpr std::string_view kMissingToken = "NA";

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::categorical;
  // Observed range, numerical only.
  double min = 0.0;
  double max = 0.0;
  // Sorted, unique; categorical only.
  std::vector<std::string> categories;

  bool is_numerical() const { return kind == FeatureKind::numerical; }
  double width() const { return max - min; }
  bool has_category(std::string_view value) const;

  bool operator==(const FeatureSpec&) const = default;
};

struct Schema {
  std::vector<FeatureSpec> features;
  FeatureSpec label;
  // Every column name, label included, in source CSV order.
  std::vector<std::string> column_order;

  const std::vector<std::string>& classes() const { return label.categories; }
  std::size_t feature_count() const { return features.size(); }
  std::optional<std::size_t> feature_index(std::string_view name) const;

  /// Throws DataError if any schema invariant is broken.
  void validate() const;

  bool operator==(const Schema&) const = default;
};

/// One feature value. The source text is kept verbatim so that
/// re-serialization is byte-stable; `number` is its parsed value for
/// numerical features and 0 otherwise.
struct Cell {
  std::string text;
  double number = 0.0;

  bool operator==(const Cell&) const = default;
};

struct Record {
  std::vector<Cell> values;  // schema feature order
  std::string label;

  bool operator==(const Record&) const = default;
};

enum class SplitTag : std::uint8_t { train, val, test };

std::string_view to_string(SplitTag tag);
SplitTag parse_split_tag(std::string_view text);

struct Dataset {
  Schema schema;
  std::vector<Record> records;
  // Empty when the dataset has not been split; otherwise one tag per record.
  std::vector<SplitTag> tags;

  std::size_t size() const { return records.size(); }
  bool is_split() const { return !tags.empty(); }

  /// Record indices carrying `tag`, ascending.
  std::vector<std::size_t> indices(SplitTag tag) const;
  /// Training indices; every record when the dataset is unsplit.
  std::vector<std::size_t> train_indices() const;
  /// Records with `tag`, same schema, untagged.
  Dataset subset(SplitTag tag) const;

  bool operator==(const Dataset&) const = default;
};

/// Parses a finite decimal number occupying the whole of `text`.
std::optional<double> parse_number(std::string_view text);

/// Throws DataError unless `record` conforms to `schema`.
void check_record(const Record& record, const Schema& schema);

using KindOverrides = std::map<std::string, FeatureKind, std::less<>>;

Dataset ingest_csv(const std::string& path, std::string_view label_column,
                   const KindOverrides& overrides = {});
Dataset ingest_csv_text(std::string_view text, std::string_view label_column,
                        const KindOverrides& overrides = {});

/// Reads a CSV whose rows must conform to an existing schema (e.g. synthetic
/// output checked against the real data's schema).
Dataset read_csv_with_schema(const std::string& path, const Schema& schema);
Dataset read_csv_text_with_schema(std::string_view text, const Schema& schema);

/// Columns in schema.column_order; split tags are not written.
void write_csv(const Dataset& dataset, std::ostream& out);
std::string to_csv(const Dataset& dataset);

/// JSON-lines snapshot: a schema header object, then one object per record.
void write_snapshot(const Dataset& dataset, std::ostream& out);
Dataset read_snapshot(std::istream& in);

// Preprocessing transforms.
struct ValueRemap {
  std::string column;
  std::map<std::string, std::string> table;
};
struct DateToTimestamp {
  std::string column;
};
struct DropColumn {
  std::string column;
};
using Transform = std::variant<ValueRemap, DateToTimestamp, DropColumn>;

/// Seconds since the Unix epoch for "YYYY-MM-DD", optionally followed by
/// "[T ]HH:MM[:SS]". Interpreted as UTC. Throws DataError otherwise.
std::int64_t parse_timestamp(std::string_view text);

Dataset apply_preprocess(const Dataset& dataset, std::span<const Transform> transforms);

struct SplitRatios {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
};

/// Seeded shuffled partition. Counts are floor(n * ratio) for val and test,
/// the remainder goes to train.
Dataset split(const Dataset& dataset, SplitRatios ratios, std::uint64_t seed);

}  // namespace harmonic
