#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "harmonic/neighbors.hpp"
#include "harmonic/table.hpp"

namespace harmonic {

/// Feature/value pairs of one record, label included, in emission order.
struct EncodedRecord {
  std::vector<std::pair<std::string, std::string>> pairs;
  // permutation[i] is the canonical slot emitted at position i; slots are the
  // schema features in order followed by the label.
  std::vector<std::size_t> permutation;

  /// `{"f": "v", ...}`; every value is written as a quoted string.
  std::string text() const;
};

/// Permutes the pairs uniformly under `seed` when `permute` is set, else
/// keeps schema order with the label last.
EncodedRecord encode_record(const Record& record, const Schema& schema, std::uint64_t seed, bool permute);

/// "f is v, ..." sentence form, kept for comparison with the JSON encoding.
std::string encode_sentence(const Record& record, const Schema& schema);

struct TemplateConfig {
  // Placeholders: {k} {m} {label_name} {label_kind} {topic}
  std::string preamble =
      "Here are {k} tabular data about {topic}, each containing {m} columns of features and 1 column of "
      "labels, where the '{label_name}' column is a {label_kind} classification label. I will transmit the "
      "data to you in JSON format. Please generate an approximate sample based on these {k} examples.";
  std::string topic = "the dataset";
  std::vector<std::string> example_labels = {"one", "two",   "three", "four", "five",
                                             "six", "seven", "eight", "nine", "ten"};
  std::string example_prefix = "\n Example ";
  std::string example_suffix = ".";
  std::string generation_suffix = "\n Generate one sample:";
  // Appended to the reference answer.
  std::string output_suffix = ".";

  bool operator==(const TemplateConfig&) const = default;
};

/// One conversation: INPUT from the human turn, OUTPUT from the assistant.
struct InstructionSample {
  std::int64_t id = 0;
  std::string input_text;
  std::optional<std::string> output_text;

  bool operator==(const InstructionSample&) const = default;
};

std::string render_preamble(const TemplateConfig& tmpl, const Schema& schema, std::size_t k);

/// Preamble, one block per neighbor (each permuted under its own seed derived
/// from `seed` and `id`), then the generation suffix. Finetune groups carry
/// the encoded target as output; prompt groups have none.
InstructionSample render_generator_instruction(const NeighborGroup& group, const Dataset& dataset,
                                               const TemplateConfig& tmpl, std::uint64_t seed, bool permute,
                                               std::int64_t id);

struct DownstreamTaskConfig {
  std::string question = "Classify the following record.";
  // Class value -> answer token. Classes without an entry answer with their value.
  std::map<std::string, std::string> label_tokens;
  // Classes in the order their tokens are offered; empty = class order.
  std::vector<std::string> answer_order;
  // Optional display names and per-feature value verbalizations.
  std::map<std::string, std::string> feature_names;
  std::map<std::string, std::map<std::string, std::string>> value_names;

  /// Tokens in answer order.
  std::vector<std::string> tokens(const Schema& schema) const;
  std::string token_for(const std::string& label) const;

  bool operator==(const DownstreamTaskConfig&) const = default;
};

InstructionSample render_downstream_instruction(const Record& record, const Schema& schema,
                                                const DownstreamTaskConfig& task, std::int64_t id);

enum class DecodeErrorKind { no_object_found, missing_feature, duplicate_feature, type_mismatch, unknown_category, unknown_key };

std::string_view to_string(DecodeErrorKind kind);

struct DecodeError {
  DecodeErrorKind kind;
  std::string name;
  std::string value;

  std::string message() const;
  bool operator==(const DecodeError&) const = default;
};

struct DecodeResult {
  std::variant<Record, DecodeError> outcome;
  // Objects after the first one; ignored by policy.
  std::size_t extra_objects = 0;

  bool ok() const { return std::holds_alternative<Record>(outcome); }
  const Record& record() const { return std::get<Record>(outcome); }
  const DecodeError& error() const { return std::get<DecodeError>(outcome); }
};

/// Recovers a schema-valid record from the first object-like region of
/// `text`. Every feature and the label must appear exactly once; unknown keys,
/// unparseable numbers and unseen categories are errors.
DecodeResult decode_record(std::string_view text, const Schema& schema);

/// Conversation JSON: {"id", "conversations": [{"from": "human", "value"}, ...]}.
std::string conversation_json(const InstructionSample& sample);
void write_instructions_jsonl(const std::vector<InstructionSample>& samples, std::ostream& out);
std::vector<InstructionSample> read_instructions_jsonl(std::istream& in);

}  // namespace harmonic
