#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "harmonic/pipeline.hpp"

namespace fs = std::filesystem;
using namespace harmonic;

namespace {

struct Overrides {
  std::string config_file;
  std::string run_dir = "run";
  std::optional<std::string> data;
  std::optional<std::string> label;
  std::optional<std::size_t> k;
  std::optional<double> temperature;
  std::optional<std::size_t> target;
  std::optional<double> oversample;
  std::vector<std::uint64_t> seeds;
  bool no_filter = false;
  bool no_permute = false;
  std::optional<std::string> backend;
  std::optional<std::string> endpoint;
  std::optional<std::string> model;
  std::optional<std::size_t> in_flight;
  std::optional<std::string> lle_endpoint;
};

void add_options(CLI::App& cmd, Overrides& o) {
  cmd.add_option("--config", o.config_file, "JSON config file");
  cmd.add_option("--run-dir", o.run_dir, "Directory holding every artifact")->capture_default_str();
  cmd.add_option("--data", o.data, "Input CSV");
  cmd.add_option("--label", o.label, "Label column");
  cmd.add_option("--k", o.k, "Neighbors per group");
  cmd.add_option("--temperature", o.temperature, "Sampling temperature");
  cmd.add_option("--target", o.target, "Synthetic rows per seed (0 = automatic)");
  cmd.add_option("--oversample", o.oversample, "Prompt count as a multiple of the target");
  cmd.add_option("--seeds", o.seeds, "Generation seeds")->delimiter(',');
  cmd.add_flag("--no-filter", o.no_filter, "Keep groups whose neighbors mostly disagree with the target label");
  cmd.add_flag("--no-permute", o.no_permute, "Emit features in schema order");
  cmd.add_option("--backend", o.backend, "mock or http")->check(CLI::IsMember({"mock", "http"}));
  cmd.add_option("--endpoint", o.endpoint, "OpenAI-compatible base URL");
  cmd.add_option("--model", o.model, "Model name sent to the endpoint");
  cmd.add_option("--in-flight", o.in_flight, "Maximum concurrent requests");
  cmd.add_option("--lle-endpoint", o.lle_endpoint, "Endpoint of the fine-tuned downstream model");
}

// Precedence: flags > config file > run directory config > defaults.
PipelineConfig resolve(const Overrides& o, bool use_run_config) {
  PipelineConfig c;
  const fs::path saved = fs::path(o.run_dir) / artifacts::config;
  if (!o.config_file.empty()) {
    c = load_config_file(o.config_file, c);
  } else if (use_run_config && fs::exists(saved)) {
    c = load_config_file(saved, c);
  }
  if (o.data) c.dataset.path = *o.data;
  if (o.label) c.dataset.label_column = *o.label;
  if (o.k) c.k = *o.k;
  if (o.temperature) c.temperature = *o.temperature;
  if (o.target) c.target_count = *o.target;
  if (o.oversample) c.oversample = *o.oversample;
  if (!o.seeds.empty()) c.seeds = o.seeds;
  if (o.no_filter) c.filter = false;
  if (o.no_permute) c.permute = false;
  if (o.backend) c.backend.kind = *o.backend == "http" ? BackendConfig::Kind::http : BackendConfig::Kind::mock;
  if (o.endpoint) c.backend.endpoint = *o.endpoint;
  if (o.model) c.backend.model = *o.model;
  if (o.in_flight) c.backend.max_in_flight = *o.in_flight;
  if (o.lle_endpoint) {
    if (!c.lle_backend) {
      c.lle_backend = BackendConfig{};
      c.lle_backend->kind = BackendConfig::Kind::http;
    }
    c.lle_backend->endpoint = *o.lle_endpoint;
  }
  if (!c.dataset.path.empty()) c.dataset.path = fs::absolute(c.dataset.path).lexically_normal().string();
  apply_environment(c);
  return c;
}

int prepare(const Overrides& o) {
  const PipelineConfig c = resolve(o, false);
  const PrepareSummary s = cmd_prepare(c, o.run_dir);
  std::cout << "split train=" << s.train << " val=" << s.val << " test=" << s.test << "\n"
            << "groups total=" << s.groups << " kept=" << s.kept << " discarded=" << s.discarded << "\n"
            << "prompts=" << s.prompts << " target=" << s.target << "\n"
            << "config_hash=" << config_hash(c) << "\n";
  return exit_code::ok;
}

int generate(const Overrides& o) {
  const PipelineConfig c = resolve(o, true);
  const GenerateSummary s = cmd_generate(c, o.run_dir);
  for (const auto& r : s.reports) {
    std::cout << "seed " << r.seeds.front() << ": produced " << r.produced << "/" << r.requested << " from "
              << r.prompts_used << " prompts, parse failures " << r.total_parse_failures() << ", backend failures "
              << r.backend_failures << (r.shortfall ? " (shortfall)" : "") << "\n";
  }
  if (s.shortfall) {
    std::cerr << "generate: fewer synthetic rows than requested\n";
    return exit_code::shortfall;
  }
  return exit_code::ok;
}

int evaluate(const Overrides& o) {
  const PipelineConfig c = resolve(o, true);
  const nlohmann::ordered_json report = cmd_evaluate(c, o.run_dir);
  for (const auto& [name, stats] : report.at("aggregate").items()) {
    std::cout << name << " = " << stats.at("mean").get<double>();
    if (stats.contains("std")) std::cout << " +/- " << stats.at("std").get<double>();
    std::cout << "\n";
  }
  std::cout << "report: " << (fs::path(o.run_dir) / artifacts::report).string() << "\n";
  return exit_code::ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic tabular data toolchain: prepare, generate, evaluate"};
  app.require_subcommand(1);
  Overrides o;
  auto* p = app.add_subcommand("prepare", "Build instruction and prompt datasets from a CSV");
  auto* g = app.add_subcommand("generate", "Sample synthetic rows for every seed");
  auto* e = app.add_subcommand("evaluate", "Privacy and utility metrics of the synthetic rows");
  auto* r = app.add_subcommand("run", "prepare, generate and evaluate in one go");
  for (auto* cmd : {p, g, e, r}) add_options(*cmd, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : exit_code::config;
  }

  try {
    if (p->parsed()) return prepare(o);
    if (g->parsed()) return generate(o);
    if (e->parsed()) return evaluate(o);
    if (int code = prepare(o); code != 0) return code;
    Overrides next = o;
    next.config_file.clear();
    const int gen = generate(next);
    if (gen != exit_code::ok && gen != exit_code::shortfall) return gen;
    if (int code = evaluate(next); code != 0) return code;
    return gen;
  } catch (const StageError& err) {
    std::cerr << "error [" << err.stage() << "]: " << err.what() << "\n";
    return err.exit_code();
  } catch (const ConfigError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return exit_code::config;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return exit_code::failure;
  }
}
