#include "harmonic/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "harmonic/classifiers.hpp"
#include "harmonic/efficacy.hpp"
#include "harmonic/rng.hpp"

namespace harmonic {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;
using nlohmann::json;

namespace {

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, std::string_view where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError(std::string(where) + ": unknown key '" + key + "'");
    }
  }
}

template <typename T>
void read_field(const json& j, const char* key, T& out, std::string_view where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(where) + "." + key + ": " + e.what());
  }
}

std::string backend_kind_name(BackendConfig::Kind kind) { return kind == BackendConfig::Kind::http ? "http" : "mock"; }

BackendConfig::Kind parse_backend_kind(std::string_view text) {
  if (text == "http") return BackendConfig::Kind::http;
  if (text == "mock") return BackendConfig::Kind::mock;
  throw ConfigError("backend.kind: expected 'http' or 'mock', got '" + std::string(text) + "'");
}

ojson backend_to_json(const BackendConfig& b) {
  ojson j;
  j["kind"] = backend_kind_name(b.kind);
  j["endpoint"] = b.endpoint;
  j["model"] = b.model;
  j["timeout_ms"] = b.timeout.count();
  j["max_in_flight"] = b.max_in_flight;
  j["max_retries"] = b.retry.max_retries;
  j["backoff_ms"] = b.retry.backoff_base.count();
  j["backoff_factor"] = b.retry.backoff_factor;
  j["audit_log"] = b.audit_log;
  ojson m;
  m["policy"] = std::string(to_string(b.mock.policy));
  m["constant_text"] = b.mock.constant_text;
  m["vocabulary"] = ojson::object();
  for (const auto& [token, weight] : b.mock.vocabulary) m["vocabulary"][token] = weight;
  m["smoothing"] = b.mock.smoothing;
  m["jitter"] = b.mock.jitter;
  m["corruption_rate"] = b.mock.corruption_rate;
  j["mock"] = std::move(m);
  return j;
}

BackendConfig backend_from_json(const json& j, BackendConfig b, std::string_view where) {
  check_keys(j,
             {"kind", "endpoint", "model", "timeout_ms", "max_in_flight", "max_retries", "backoff_ms", "backoff_factor",
              "audit_log", "mock"},
             where);
  if (j.contains("kind")) b.kind = parse_backend_kind(j.at("kind").get<std::string>());
  read_field(j, "endpoint", b.endpoint, where);
  read_field(j, "model", b.model, where);
  if (j.contains("timeout_ms")) {
    std::int64_t ms = 0;
    read_field(j, "timeout_ms", ms, where);
    b.timeout = std::chrono::milliseconds(ms);
  }
  read_field(j, "max_in_flight", b.max_in_flight, where);
  read_field(j, "max_retries", b.retry.max_retries, where);
  if (j.contains("backoff_ms")) {
    std::int64_t ms = 0;
    read_field(j, "backoff_ms", ms, where);
    b.retry.backoff_base = std::chrono::milliseconds(ms);
  }
  read_field(j, "backoff_factor", b.retry.backoff_factor, where);
  read_field(j, "audit_log", b.audit_log, where);
  if (j.contains("mock")) {
    const json& m = j.at("mock");
    const std::string mw = std::string(where) + ".mock";
    check_keys(m, {"policy", "constant_text", "vocabulary", "smoothing", "jitter", "corruption_rate"}, mw);
    if (m.contains("policy")) {
      try {
        b.mock.policy = parse_mock_policy(m.at("policy").get<std::string>());
      } catch (const std::invalid_argument& e) {
        throw ConfigError(mw + ".policy: " + e.what());
      }
    }
    read_field(m, "constant_text", b.mock.constant_text, mw);
    read_field(m, "vocabulary", b.mock.vocabulary, mw);
    read_field(m, "smoothing", b.mock.smoothing, mw);
    read_field(m, "jitter", b.mock.jitter, mw);
    read_field(m, "corruption_rate", b.mock.corruption_rate, mw);
  }
  return b;
}

ojson transform_to_json(const Transform& t) {
  return std::visit(
      [](const auto& v) -> ojson {
        using T = std::decay_t<decltype(v)>;
        ojson j;
        if constexpr (std::is_same_v<T, ValueRemap>) {
          j["type"] = "remap";
          j["column"] = v.column;
          j["map"] = ojson::object();
          for (const auto& [from, to] : v.table) j["map"][from] = to;
        } else if constexpr (std::is_same_v<T, DateToTimestamp>) {
          j["type"] = "date_to_timestamp";
          j["column"] = v.column;
        } else {
          j["type"] = "drop";
          j["column"] = v.column;
        }
        return j;
      },
      t);
}

Transform transform_from_json(const json& j) {
  const std::string where = "dataset.transforms[]";
  if (!j.is_object() || !j.contains("type") || !j.contains("column")) {
    throw ConfigError(where + ": each transform needs 'type' and 'column'");
  }
  const std::string type = j.at("type").get<std::string>();
  const std::string column = j.at("column").get<std::string>();
  if (type == "remap") {
    check_keys(j, {"type", "column", "map"}, where);
    ValueRemap r{column, {}};
    read_field(j, "map", r.table, where);
    return r;
  }
  check_keys(j, {"type", "column"}, where);
  if (type == "date_to_timestamp") return DateToTimestamp{column};
  if (type == "drop") return DropColumn{column};
  throw ConfigError(where + ": unknown transform type '" + type + "'");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string content_hash(std::string_view text) { return hex64(fnv1a(text)); }

// Runs one stage, re-throwing failures as StageError with an exit code.
template <typename F>
auto run_stage(const char* stage, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const ConfigError& e) {
    throw StageError(stage, e.what(), exit_code::config);
  } catch (const DataError& e) {
    throw StageError(stage, e.what(), exit_code::config);
  } catch (const BackendError& e) {
    throw StageError(stage, e.what(), exit_code::backend);
  } catch (const std::invalid_argument& e) {
    throw StageError(stage, e.what(), exit_code::config);
  }
}

Dataset load_snapshot(const fs::path& run_dir) {
  const fs::path path = run_dir / artifacts::dataset;
  if (!fs::exists(path)) throw StageError("load", "missing artifact: " + path.string(), exit_code::config);
  std::ifstream in(path, std::ios::binary);
  return read_snapshot(in);
}

std::string stamped(const std::string& json_text, const std::string& hash) {
  ojson j = ojson::parse(json_text);
  ojson out;
  out["config_hash"] = hash;
  for (auto& [key, value] : j.items()) out[key] = value;
  return out.dump(2) + "\n";
}

ojson summary_stats(const std::vector<double>& values) {
  ojson j;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  j["mean"] = mean;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    j["std"] = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  j["n"] = values.size();
  return j;
}

}  // namespace

PipelineConfig::PipelineConfig() : classifiers(kAllClassifiers) {}

void PipelineConfig::validate() const {
  if (k < 1) throw ConfigError("k must be at least 1");
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) throw ConfigError("temperature must be >= 0");
  if (!(oversample >= 1.0) || !std::isfinite(oversample)) throw ConfigError("oversample must be >= 1");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    for (std::size_t j = i + 1; j < seeds.size(); ++j) {
      if (seeds[i] == seeds[j]) throw ConfigError("duplicate seed " + std::to_string(seeds[i]));
    }
  }
  for (double r : {split.train, split.val, split.test}) {
    if (!(r >= 0.0) || r > 1.0) throw ConfigError("split ratios must lie in [0, 1]");
  }
  if (std::abs(split.train + split.val + split.test - 1.0) > 1e-6) throw ConfigError("split ratios must sum to 1");
  if (!(nrs_tolerance >= 0.0)) throw ConfigError("nrs_tolerance must be >= 0");
  if (max_new_tokens < 1) throw ConfigError("max_new_tokens must be at least 1");
  if (classifiers.empty()) throw ConfigError("at least one classifier is required");
  for (const auto& c : classifiers) {
    if (std::find(kAllClassifiers.begin(), kAllClassifiers.end(), c) == kAllClassifiers.end()) {
      throw ConfigError("unknown classifier '" + c + "'");
    }
  }
  try {
    backend.validate();
    if (lle_backend) lle_backend->validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("backend: ") + e.what());
  }
}

std::size_t PipelineConfig::target_for(std::size_t train_size) const {
  return target_count ? target_count : default_target_count(train_size);
}

std::size_t PipelineConfig::prompt_count_for(std::size_t train_size) const {
  const double n = static_cast<double>(target_for(train_size)) * oversample;
  return static_cast<std::size_t>(std::ceil(n - 1e-9));
}

ojson config_to_json(const PipelineConfig& c) {
  ojson j;
  ojson d;
  d["path"] = c.dataset.path;
  d["label_column"] = c.dataset.label_column;
  d["kinds"] = ojson::object();
  for (const auto& [name, kind] : c.dataset.kinds) d["kinds"][name] = std::string(to_string(kind));
  d["transforms"] = ojson::array();
  for (const auto& t : c.dataset.transforms) d["transforms"].push_back(transform_to_json(t));
  j["dataset"] = std::move(d);
  j["k"] = c.k;
  j["split"] = {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}};
  j["temperature"] = c.temperature;
  j["target_count"] = c.target_count;
  j["oversample"] = c.oversample;
  j["seeds"] = c.seeds;
  j["filter"] = c.filter;
  j["permute"] = c.permute;
  j["max_new_tokens"] = c.max_new_tokens;
  j["retry_failed_prompts"] = c.retry_failed_prompts;
  const TemplateConfig& t = c.generator_template;
  j["template"] = {{"preamble", t.preamble},
                   {"topic", t.topic},
                   {"example_labels", t.example_labels},
                   {"example_prefix", t.example_prefix},
                   {"example_suffix", t.example_suffix},
                   {"generation_suffix", t.generation_suffix},
                   {"output_suffix", t.output_suffix}};
  ojson ds;
  ds["question"] = c.downstream.question;
  ds["label_tokens"] = ojson::object();
  for (const auto& [k, v] : c.downstream.label_tokens) ds["label_tokens"][k] = v;
  ds["answer_order"] = c.downstream.answer_order;
  ds["feature_names"] = ojson::object();
  for (const auto& [k, v] : c.downstream.feature_names) ds["feature_names"][k] = v;
  ds["value_names"] = ojson::object();
  for (const auto& [feature, names] : c.downstream.value_names) {
    ds["value_names"][feature] = ojson::object();
    for (const auto& [k, v] : names) ds["value_names"][feature][k] = v;
  }
  j["downstream"] = std::move(ds);
  j["backend"] = backend_to_json(c.backend);
  j["lle_backend"] = c.lle_backend ? backend_to_json(*c.lle_backend) : ojson(nullptr);
  j["classifiers"] = c.classifiers;
  j["nrs_tolerance"] = c.nrs_tolerance;
  return j;
}

PipelineConfig config_from_json(const json& j, PipelineConfig c) {
  const std::string w = "config";
  check_keys(j,
             {"dataset", "k", "split", "temperature", "target_count", "oversample", "seeds", "filter", "permute",
              "max_new_tokens", "retry_failed_prompts", "template", "downstream", "backend", "lle_backend",
              "classifiers", "nrs_tolerance", "config_hash"},
             w);
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    check_keys(d, {"path", "label_column", "kinds", "transforms"}, "dataset");
    read_field(d, "path", c.dataset.path, "dataset");
    read_field(d, "label_column", c.dataset.label_column, "dataset");
    if (d.contains("kinds")) {
      c.dataset.kinds.clear();
      for (const auto& [name, kind] : d.at("kinds").items()) {
        try {
          c.dataset.kinds[name] = parse_feature_kind(kind.get<std::string>());
        } catch (const std::exception& e) {
          throw ConfigError("dataset.kinds." + name + ": " + e.what());
        }
      }
    }
    if (d.contains("transforms")) {
      c.dataset.transforms.clear();
      for (const auto& t : d.at("transforms")) c.dataset.transforms.push_back(transform_from_json(t));
    }
  }
  read_field(j, "k", c.k, w);
  if (j.contains("split")) {
    const json& s = j.at("split");
    check_keys(s, {"train", "val", "test"}, "split");
    read_field(s, "train", c.split.train, "split");
    read_field(s, "val", c.split.val, "split");
    read_field(s, "test", c.split.test, "split");
  }
  read_field(j, "temperature", c.temperature, w);
  read_field(j, "target_count", c.target_count, w);
  read_field(j, "oversample", c.oversample, w);
  read_field(j, "seeds", c.seeds, w);
  read_field(j, "filter", c.filter, w);
  read_field(j, "permute", c.permute, w);
  read_field(j, "max_new_tokens", c.max_new_tokens, w);
  read_field(j, "retry_failed_prompts", c.retry_failed_prompts, w);
  if (j.contains("template")) {
    const json& t = j.at("template");
    const std::string tw = "template";
    check_keys(t,
               {"preamble", "topic", "example_labels", "example_prefix", "example_suffix", "generation_suffix",
                "output_suffix"},
               tw);
    TemplateConfig& g = c.generator_template;
    read_field(t, "preamble", g.preamble, tw);
    read_field(t, "topic", g.topic, tw);
    read_field(t, "example_labels", g.example_labels, tw);
    read_field(t, "example_prefix", g.example_prefix, tw);
    read_field(t, "example_suffix", g.example_suffix, tw);
    read_field(t, "generation_suffix", g.generation_suffix, tw);
    read_field(t, "output_suffix", g.output_suffix, tw);
  }
  if (j.contains("downstream")) {
    const json& d = j.at("downstream");
    const std::string dw = "downstream";
    check_keys(d, {"question", "label_tokens", "answer_order", "feature_names", "value_names"}, dw);
    read_field(d, "question", c.downstream.question, dw);
    read_field(d, "label_tokens", c.downstream.label_tokens, dw);
    read_field(d, "answer_order", c.downstream.answer_order, dw);
    read_field(d, "feature_names", c.downstream.feature_names, dw);
    read_field(d, "value_names", c.downstream.value_names, dw);
  }
  if (j.contains("backend")) c.backend = backend_from_json(j.at("backend"), c.backend, "backend");
  if (j.contains("lle_backend")) {
    const json& l = j.at("lle_backend");
    if (l.is_null()) {
      c.lle_backend.reset();
    } else {
      c.lle_backend = backend_from_json(l, c.lle_backend.value_or(BackendConfig{}), "lle_backend");
    }
  }
  read_field(j, "classifiers", c.classifiers, w);
  read_field(j, "nrs_tolerance", c.nrs_tolerance, w);
  return c;
}

PipelineConfig load_config_file(const fs::path& path, PipelineConfig base) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  const std::string before = base.dataset.path;
  PipelineConfig c = config_from_json(j, std::move(base));
  // A dataset path given in the file is relative to the file.
  if (c.dataset.path != before && !c.dataset.path.empty() && fs::path(c.dataset.path).is_relative()) {
    c.dataset.path = (fs::absolute(path).parent_path() / c.dataset.path).lexically_normal().string();
  }
  return c;
}

void apply_environment(PipelineConfig& config) {
  auto fill = [](BackendConfig& b) {
    if (b.kind != BackendConfig::Kind::http) return;
    if (b.endpoint.empty()) {
      if (const char* e = std::getenv("HARMONIC_ENDPOINT")) b.endpoint = e;
    }
    if (b.auth_token.empty()) {
      if (const char* k = std::getenv("HARMONIC_API_KEY")) b.auth_token = k;
    }
  };
  fill(config.backend);
  if (config.lle_backend) fill(*config.lle_backend);
}

std::string config_hash(const PipelineConfig& config) { return hex64(fnv1a(config_to_json(config).dump())); }

namespace artifacts {
std::string synthetic_csv(std::uint64_t seed) { return "synthetic_seed" + std::to_string(seed) + ".csv"; }
std::string sampling_report(std::uint64_t seed) { return "sampling_report_seed" + std::to_string(seed) + ".json"; }
}  // namespace artifacts

PrepareSummary cmd_prepare(const PipelineConfig& config, const fs::path& run_dir) {
  run_stage("config", [&] {
    config.validate();
    if (config.dataset.path.empty()) throw ConfigError("dataset.path is required");
    if (config.dataset.label_column.empty()) throw ConfigError("dataset.label_column is required");
  });
  const std::string hash = config_hash(config);
  const std::uint64_t seed = config.seeds.front();

  Dataset raw = run_stage("ingest", [&] {
    if (!fs::exists(config.dataset.path)) throw DataError("cannot read " + config.dataset.path);
    return ingest_csv(config.dataset.path, config.dataset.label_column, config.dataset.kinds);
  });
  Dataset clean = run_stage("preprocess", [&] { return apply_preprocess(raw, config.dataset.transforms); });
  Dataset ds = run_stage("split", [&] { return split(clean, config.split, seed); });

  PrepareSummary summary;
  summary.train = ds.indices(SplitTag::train).size();
  summary.val = ds.indices(SplitTag::val).size();
  summary.test = ds.indices(SplitTag::test).size();
  summary.target = config.target_for(summary.train);
  summary.prompts = config.prompt_count_for(summary.train);

  GroupSet all = run_stage("knn", [&] { return knn_groups(ds, config.k); });
  GroupSet kept = all;
  if (config.filter) {
    kept = run_stage("filter", [&] { return filter_groups(all, ds); });
    std::vector<bool> keep(ds.size(), false);
    for (const auto& g : kept.groups) keep[*g.target] = true;
    for (auto& g : all.groups) g.kept = keep[*g.target];
  }
  summary.groups = all.groups.size();
  summary.kept = kept.groups.size();
  summary.discarded = summary.groups - summary.kept;

  std::vector<InstructionSample> finetune = run_stage("render", [&] {
    std::vector<InstructionSample> out;
    out.reserve(kept.groups.size());
    for (std::size_t i = 0; i < kept.groups.size(); ++i) {
      out.push_back(render_generator_instruction(kept.groups[i], ds, config.generator_template, seed, config.permute,
                                                 static_cast<std::int64_t>(i)));
    }
    return out;
  });
  GroupSet prompt_groups = run_stage("prompts", [&] { return build_prompt_groups(ds, config.k, summary.prompts, seed); });
  std::vector<InstructionSample> prompts = run_stage(
      "render", [&] { return render_prompts(prompt_groups, ds, config.generator_template, config.permute, seed); });

  fs::create_directories(run_dir);
  auto emit = [&](const char* name, const std::string& text, ojson& files) {
    write_text(run_dir / name, text);
    files[name] = content_hash(text);
  };
  ojson files = ojson::object();

  ojson cfg;
  cfg["config_hash"] = hash;
  cfg.update(config_to_json(config));
  emit(artifacts::config, cfg.dump(2) + "\n", files);
  {
    std::ostringstream out;
    write_snapshot(ds, out);
    emit(artifacts::dataset, out.str(), files);
  }
  {
    std::ostringstream out;
    write_groups_jsonl(all, out);
    emit(artifacts::groups, out.str(), files);
  }
  {
    std::ostringstream out;
    write_groups_jsonl(prompt_groups, out);
    emit(artifacts::prompt_groups, out.str(), files);
  }
  {
    std::ostringstream out;
    write_instructions_jsonl(finetune, out);
    emit(artifacts::finetune, out.str(), files);
  }
  {
    std::ostringstream out;
    write_instructions_jsonl(prompts, out);
    emit(artifacts::prompts, out.str(), files);
  }
  {
    ojson trainer = ojson::parse(kGeneratorTrainer.to_json());
    ojson t;
    t["config_hash"] = hash;
    t["dataset"] = artifacts::finetune;
    t["loss"] = "assistant_turn_only";
    t.update(trainer);
    emit("generator_trainer.json", t.dump(2) + "\n", files);
  }

  ojson manifest;
  manifest["config_hash"] = hash;
  manifest["split"] = {{"train", summary.train}, {"val", summary.val}, {"test", summary.test}};
  manifest["groups"] = {{"total", summary.groups}, {"kept", summary.kept}, {"discarded", summary.discarded}};
  manifest["filter"] = config.filter;
  manifest["permute"] = config.permute;
  manifest["k"] = config.k;
  manifest["target"] = summary.target;
  manifest["prompts"] = summary.prompts;
  manifest["files"] = files;
  write_text(run_dir / artifacts::manifest, manifest.dump(2) + "\n");
  return summary;
}

GenerateSummary cmd_generate(const PipelineConfig& config, const fs::path& run_dir) {
  run_stage("config", [&] { config.validate(); });
  const std::string hash = config_hash(config);
  Dataset ds = run_stage("generate", [&] { return load_snapshot(run_dir); });
  const fs::path prompts_path = run_dir / artifacts::prompts;
  if (!fs::exists(prompts_path)) {
    throw StageError("generate", "missing artifact: " + prompts_path.string(), exit_code::config);
  }
  std::vector<InstructionSample> prompts = run_stage("generate", [&] {
    std::ifstream in(prompts_path, std::ios::binary);
    return read_instructions_jsonl(in);
  });

  BackendConfig backend = config.backend;
  if (!backend.audit_log.empty() && fs::path(backend.audit_log).is_relative()) {
    backend.audit_log = (run_dir / backend.audit_log).string();
  }
  const Client client = run_stage("generate", [&] { return Client(backend); });

  SamplingOptions opts;
  opts.temperature = config.temperature;
  opts.max_new_tokens = config.max_new_tokens;
  opts.retry_failed_prompts = config.retry_failed_prompts;

  const std::size_t target = config.target_for(ds.indices(SplitTag::train).size());
  GenerateSummary summary;
  ojson index;
  index["config_hash"] = hash;
  index["target"] = target;
  index["outputs"] = ojson::array();
  for (std::uint64_t seed : config.seeds) {
    SamplingResult result =
        run_stage("generate", [&] { return sample_synthetic(prompts, ds.schema, client, target, seed, opts); });
    const SamplingReport& rep = result.report;
    if (rep.produced == 0 && rep.prompts_used > 0 && rep.backend_failures == rep.prompts_used) {
      throw StageError("generate", "backend unreachable: every request failed", exit_code::backend);
    }
    const std::string csv_text = to_csv(result.synthetic);
    write_text(run_dir / artifacts::synthetic_csv(seed), csv_text);
    write_text(run_dir / artifacts::sampling_report(seed), stamped(rep.to_json(), hash));
    index["outputs"].push_back({{"seed", seed},
                                {"csv", artifacts::synthetic_csv(seed)},
                                {"csv_hash", content_hash(csv_text)},
                                {"rows", rep.produced},
                                {"shortfall", rep.shortfall}});
    summary.shortfall = summary.shortfall || rep.shortfall;
    summary.reports.push_back(rep);
  }
  write_text(run_dir / "generate.json", index.dump(2) + "\n");
  return summary;
}

ojson cmd_evaluate(const PipelineConfig& config, const fs::path& run_dir) {
  run_stage("config", [&] { config.validate(); });
  const std::string hash = config_hash(config);
  Dataset ds = run_stage("evaluate", [&] { return load_snapshot(run_dir); });

  std::vector<std::string> missing;
  for (std::uint64_t seed : config.seeds) {
    if (!fs::exists(run_dir / artifacts::synthetic_csv(seed))) missing.push_back(artifacts::synthetic_csv(seed));
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw StageError("evaluate", "missing artifacts: " + list, exit_code::config);
  }

  const Dataset train = ds.subset(SplitTag::train);
  const Dataset test = ds.subset(SplitTag::test);

  // Mock scoring without a configured vocabulary uses a unigram model fitted
  // on the real training encodings.
  std::string scoring;
  std::optional<Client> scorer;
  run_stage("evaluate", [&] {
    if (config.backend.kind == BackendConfig::Kind::mock) {
      MockConfig m = config.backend.mock;
      if (m.vocabulary.empty()) {
        const std::vector<std::string> texts = record_texts(train);
        m.vocabulary = MockBackend::count_tokens(texts);
        if (m.smoothing <= 0.0) m.smoothing = 1.0;
        scoring = "mock_unigram_fitted_on_train";
      } else {
        scoring = "mock_unigram_configured";
      }
      scorer.emplace(std::make_shared<MockBackend>(m), config.backend.retry, config.backend.max_in_flight);
    } else {
      scoring = "http_logprobs";
      scorer.emplace(config.backend);
    }
  });

  ojson report;
  report["config_hash"] = hash;
  report["seeds"] = config.seeds;
  report["scoring"] = scoring;
  report["classifiers"] = config.classifiers;
  report["per_seed"] = ojson::array();

  std::map<std::string, std::vector<double>> series;
  std::vector<std::string> order;
  auto record = [&](const std::string& name, double v) {
    if (!series.count(name)) order.push_back(name);
    series[name].push_back(v);
  };

  for (std::uint64_t seed : config.seeds) {
    ojson entry;
    entry["seed"] = seed;
    entry["synthetic"] = artifacts::synthetic_csv(seed);
    Dataset syn = run_stage("evaluate", [&] {
      return read_csv_with_schema((run_dir / artifacts::synthetic_csv(seed)).string(), ds.schema);
    });
    entry["rows"] = syn.size();
    if (syn.records.empty()) {
      entry["error"] = "synthetic table is empty";
      report["per_seed"].push_back(std::move(entry));
      continue;
    }
    PrivacyReport privacy =
        run_stage("privacy", [&] { return privacy_report(syn, train, &*scorer, config.nrs_tolerance); });
    entry["privacy"] = ojson::parse(privacy.to_json());
    record("dcr_mean", privacy.dcr_mean);
    record("dcr_median", privacy.dcr_median);
    record("nrs", privacy.nrs);
    if (privacy.dlt) {
      record("ppl_train", *privacy.ppl_train);
      record("ppl_syn", *privacy.ppl_syn);
      record("dlt", *privacy.dlt);
    }
    try {
      MleResult m = mle(syn, test, config.classifiers, seed);
      ojson mj;
      mj["mean_f1"] = m.mean_f1;
      mj["reports"] = ojson::array();
      for (const auto& r : m.reports) {
        mj["reports"].push_back(ojson::parse(r.to_json()));
        record("mle_" + r.evaluator, r.weighted_f1);
      }
      record("mle_mean_f1", m.mean_f1);
      entry["mle"] = std::move(mj);
    } catch (const DataError& e) {
      entry["mle"] = {{"error", e.what()}};
    }
    const std::vector<InstructionSample> downstream = lle_prepare(syn, config.downstream);
    std::ostringstream out;
    write_instructions_jsonl(downstream, out);
    const std::string name = "downstream_seed" + std::to_string(seed) + ".jsonl";
    write_text(run_dir / name, out.str());
    entry["downstream_dataset"] = name;
    report["per_seed"].push_back(std::move(entry));
  }

  ojson aggregate = ojson::object();
  for (const auto& name : order) aggregate[name] = summary_stats(series[name]);
  report["aggregate"] = std::move(aggregate);

  run_stage("baseline", [&] {
    MleResult base = mle(train, test, config.classifiers, config.seeds.front());
    ojson b;
    b["mean_f1"] = base.mean_f1;
    b["reports"] = ojson::array();
    for (const auto& r : base.reports) b["reports"].push_back(ojson::parse(r.to_json()));
    report["baseline_mle"] = std::move(b);
  });

  {
    ojson t;
    t["config_hash"] = hash;
    t["loss"] = "assistant_turn_only";
    t.update(ojson::parse(kDownstreamTrainer.to_json()));
    write_text(run_dir / "downstream_trainer.json", t.dump(2) + "\n");
  }

  if (config.lle_backend) {
    run_stage("lle", [&] {
      const Client lle_client(*config.lle_backend);
      std::vector<PredictionRecord> preds;
      EfficacyReport r = lle_score(test, config.downstream, lle_client, &preds);
      write_text(run_dir / "lle_predictions.csv", predictions_csv(preds));
      report["lle"] = ojson::parse(r.to_json());
    });
  } else {
    report["lle"] = nullptr;
  }

  write_text(run_dir / artifacts::report, report.dump(2) + "\n");
  return report;
}

}  // namespace harmonic
