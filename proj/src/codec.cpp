#include "harmonic/codec.hpp"

#include <algorithm>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "harmonic/extract.hpp"
#include "harmonic/rng.hpp"

namespace harmonic {

std::string EncodedRecord::text() const {
  std::string out = "{";
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (i) out += ", ";
    out += quote_json(pairs[i].first);
    out += ": ";
    out += quote_json(pairs[i].second);
  }
  out += "}";
  return out;
}

EncodedRecord encode_record(const Record& record, const Schema& schema, std::uint64_t seed, bool permute) {
  const std::size_t m = schema.features.size();
  EncodedRecord enc;
  if (permute) {
    Rng rng(seed);
    enc.permutation = rng.permutation(m + 1);
  } else {
    enc.permutation.resize(m + 1);
    for (std::size_t i = 0; i <= m; ++i) enc.permutation[i] = i;
  }
  enc.pairs.reserve(m + 1);
  for (std::size_t slot : enc.permutation) {
    if (slot == m) {
      enc.pairs.emplace_back(schema.label.name, record.label);
    } else {
      enc.pairs.emplace_back(schema.features[slot].name, record.values.at(slot).text);
    }
  }
  return enc;
}

std::string encode_sentence(const Record& record, const Schema& schema) {
  std::string out;
  for (std::size_t j = 0; j < schema.features.size(); ++j) {
    out += schema.features[j].name + " is " + record.values.at(j).text + ", ";
  }
  out += schema.label.name + " is " + record.label;
  return out;
}

namespace {

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

std::string ordinal(const TemplateConfig& tmpl, std::size_t i) {
  return i < tmpl.example_labels.size() ? tmpl.example_labels[i] : std::to_string(i + 1);
}

}  // namespace

std::string render_preamble(const TemplateConfig& tmpl, const Schema& schema, std::size_t k) {
  std::string out = tmpl.preamble;
  replace_all(out, "{k}", std::to_string(k));
  replace_all(out, "{m}", std::to_string(schema.features.size()));
  replace_all(out, "{label_name}", schema.label.name);
  replace_all(out, "{label_kind}", schema.classes().size() == 2 ? "binary" : "multi-class");
  replace_all(out, "{topic}", tmpl.topic);
  return out;
}

InstructionSample render_generator_instruction(const NeighborGroup& group, const Dataset& dataset,
                                               const TemplateConfig& tmpl, std::uint64_t seed, bool permute,
                                               std::int64_t id) {
  const std::uint64_t sample_seed = mix_seed(seed, static_cast<std::uint64_t>(id));
  InstructionSample s;
  s.id = id;
  s.input_text = render_preamble(tmpl, dataset.schema, group.neighbors.size());
  for (std::size_t i = 0; i < group.neighbors.size(); ++i) {
    const Record& r = dataset.records.at(group.neighbors[i]);
    s.input_text += tmpl.example_prefix + ordinal(tmpl, i) + ": ";
    s.input_text += encode_record(r, dataset.schema, mix_seed(sample_seed, i), permute).text();
    s.input_text += tmpl.example_suffix;
  }
  s.input_text += tmpl.generation_suffix;
  if (group.target) {
    const Record& t = dataset.records.at(*group.target);
    s.output_text = encode_record(t, dataset.schema, mix_seed(sample_seed, group.neighbors.size()), permute).text() +
                    tmpl.output_suffix;
  }
  return s;
}

std::vector<std::string> DownstreamTaskConfig::tokens(const Schema& schema) const {
  std::vector<std::string> out;
  if (answer_order.empty()) {
    for (const auto& c : schema.classes()) out.push_back(token_for(c));
    return out;
  }
  if (answer_order.size() != schema.classes().size()) throw DataError("answer_order must list every class once");
  for (const auto& c : answer_order) {
    if (!schema.label.has_category(c)) throw DataError("answer_order: '" + c + "' is not a class");
    if (std::count(answer_order.begin(), answer_order.end(), c) != 1) {
      throw DataError("answer_order: '" + c + "' is listed twice");
    }
    out.push_back(token_for(c));
  }
  return out;
}

std::string DownstreamTaskConfig::token_for(const std::string& label) const {
  auto it = label_tokens.find(label);
  return it == label_tokens.end() ? label : it->second;
}

InstructionSample render_downstream_instruction(const Record& record, const Schema& schema,
                                                const DownstreamTaskConfig& task, std::int64_t id) {
  if (record.label.empty()) throw DataError("downstream instruction: record has no label");
  if (!schema.label.has_category(record.label)) {
    throw DataError("downstream instruction: label '" + record.label + "' is not a known class");
  }
  const auto tokens = task.tokens(schema);
  std::string choices;
  if (tokens.size() == 2) {
    choices = "Respond with only either '" + tokens[0] + "' or '" + tokens[1] + "'.";
  } else {
    choices = "Respond with only one of ";
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i) choices += i + 1 == tokens.size() ? " or " : ", ";
      choices += "'" + tokens[i] + "'";
    }
    choices += ".";
  }

  std::string states;
  for (std::size_t j = 0; j < schema.features.size(); ++j) {
    const std::string& name = schema.features[j].name;
    const std::string& raw = record.values.at(j).text;
    auto alias = task.feature_names.find(name);
    std::string value = raw;
    if (auto vn = task.value_names.find(name); vn != task.value_names.end()) {
      if (auto v = vn->second.find(raw); v != vn->second.end()) value = v->second;
    }
    if (j) states += ", ";
    states += "The state of " + (alias == task.feature_names.end() ? name : alias->second) + " is " + value;
  }

  InstructionSample s;
  s.id = id;
  s.input_text = task.question + " " + choices + " \n Text: '" + states + ".'\n Answer:";
  s.output_text = task.token_for(record.label);
  return s;
}

std::string_view to_string(DecodeErrorKind kind) {
  switch (kind) {
    case DecodeErrorKind::no_object_found: return "no_object_found";
    case DecodeErrorKind::missing_feature: return "missing_feature";
    case DecodeErrorKind::duplicate_feature: return "duplicate_feature";
    case DecodeErrorKind::type_mismatch: return "type_mismatch";
    case DecodeErrorKind::unknown_category: return "unknown_category";
    case DecodeErrorKind::unknown_key: return "unknown_key";
  }
  return "unknown";
}

std::string DecodeError::message() const {
  std::string out(to_string(kind));
  if (!name.empty()) out += " '" + name + "'";
  if (!value.empty()) out += " value '" + value + "'";
  return out;
}

DecodeResult decode_record(std::string_view text, const Schema& schema) {
  auto fail = [](DecodeErrorKind kind, std::string name = {}, std::string value = {}) {
    return DecodeResult{DecodeError{kind, std::move(name), std::move(value)}, 0};
  };
  auto obj = extract_object(text);
  if (!obj) return fail(DecodeErrorKind::no_object_found);

  const std::size_t m = schema.features.size();
  std::vector<const std::string*> slots(m + 1, nullptr);
  for (const auto& [key, value] : obj->pairs) {
    std::size_t slot;
    if (key == schema.label.name) {
      slot = m;
    } else if (auto idx = schema.feature_index(key)) {
      slot = *idx;
    } else {
      return fail(DecodeErrorKind::unknown_key, key);
    }
    if (slots[slot]) return fail(DecodeErrorKind::duplicate_feature, key);
    slots[slot] = &value;
  }
  for (std::size_t j = 0; j <= m; ++j) {
    if (!slots[j]) return fail(DecodeErrorKind::missing_feature, j == m ? schema.label.name : schema.features[j].name);
  }

  Record rec;
  rec.values.reserve(m);
  for (std::size_t j = 0; j < m; ++j) {
    const auto& f = schema.features[j];
    Cell cell{*slots[j], 0.0};
    if (f.is_numerical()) {
      auto v = parse_number(cell.text);
      if (!v) return fail(DecodeErrorKind::type_mismatch, f.name, cell.text);
      cell.number = *v;
    } else {
      if (cell.text.empty()) cell.text = std::string(kMissingToken);
      if (!f.has_category(cell.text)) return fail(DecodeErrorKind::unknown_category, f.name, cell.text);
    }
    rec.values.push_back(std::move(cell));
  }
  rec.label = *slots[m];
  if (!schema.label.has_category(rec.label)) {
    return fail(DecodeErrorKind::unknown_category, schema.label.name, rec.label);
  }

  DecodeResult result{std::move(rec), 0};
  if (obj->closed) {
    std::size_t from = obj->end;
    while (auto extra = extract_object(text, from)) {
      if (!extra->pairs.empty()) ++result.extra_objects;
      from = extra->end > extra->begin ? extra->end : extra->begin + 1;
    }
  }
  return result;
}

std::string conversation_json(const InstructionSample& sample) {
  nlohmann::ordered_json j;
  j["id"] = sample.id;
  j["conversations"] = nlohmann::ordered_json::array();
  j["conversations"].push_back({{"from", "human"}, {"value", sample.input_text}});
  if (sample.output_text) j["conversations"].push_back({{"from", "assistant"}, {"value", *sample.output_text}});
  // Invalid UTF-8 is replaced rather than aborting the whole export.
  return j.dump(-1, ' ', false, nlohmann::ordered_json::error_handler_t::replace);
}

void write_instructions_jsonl(const std::vector<InstructionSample>& samples, std::ostream& out) {
  for (const auto& s : samples) out << conversation_json(s) << '\n';
}

std::vector<InstructionSample> read_instructions_jsonl(std::istream& in) {
  std::vector<InstructionSample> out;
  std::string line;
  try {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto j = nlohmann::json::parse(line);
      InstructionSample s;
      s.id = j.at("id").get<std::int64_t>();
      for (const auto& turn : j.at("conversations")) {
        const auto from = turn.at("from").get<std::string>();
        if (from == "human") {
          s.input_text = turn.at("value").get<std::string>();
        } else if (from == "assistant") {
          s.output_text = turn.at("value").get<std::string>();
        } else {
          throw DataError("instructions: unknown speaker '" + from + "'");
        }
      }
      out.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("instructions: ") + e.what());
  }
  return out;
}

}  // namespace harmonic
