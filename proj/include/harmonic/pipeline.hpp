#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "harmonic/codec.hpp"
#include "harmonic/llm.hpp"
#include "harmonic/metrics.hpp"
#include "harmonic/neighbors.hpp"
#include "harmonic/sampler.hpp"
#include "harmonic/table.hpp"

namespace harmonic {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An error tagged with the pipeline stage it came from.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what, int exit_code)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)), exit_code_(exit_code) {}
  const std::string& stage() const { return stage_; }
  int exit_code() const { return exit_code_; }

 private:
  std::string stage_;
  int exit_code_;
};

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int failure = 1;
inline constexpr int config = 2;
inline constexpr int backend = 3;
inline constexpr int shortfall = 4;
}  // namespace exit_code

struct DatasetConfig {
  std::string path;
  std::string label_column;
  KindOverrides kinds;
  std::vector<Transform> transforms;
};

struct PipelineConfig {
  DatasetConfig dataset;
  std::size_t k = kDefaultNeighbors;
  SplitRatios split;
  double temperature = kDefaultTemperature;
  std::size_t target_count = 0;  // 0: training size, or 5000 for large datasets
  double oversample = 1.2;
  std::vector<std::uint64_t> seeds{std::begin(kExperimentSeeds), std::end(kExperimentSeeds)};
  bool filter = true;
  bool permute = true;
  TemplateConfig generator_template;
  DownstreamTaskConfig downstream;
  BackendConfig backend;
  std::optional<BackendConfig> lle_backend;
  std::vector<std::string> classifiers;
  double nrs_tolerance = kDefaultNrsTolerance;
  std::size_t max_new_tokens = 1024;
  bool retry_failed_prompts = false;

  PipelineConfig();

  /// Throws ConfigError on out-of-range settings.
  void validate() const;
  std::size_t target_for(std::size_t train_size) const;
  std::size_t prompt_count_for(std::size_t train_size) const;
};

/// Effective configuration; credentials are never included.
nlohmann::ordered_json config_to_json(const PipelineConfig& config);
/// Overlays the keys present in `j` onto `base`. Unknown keys are errors.
PipelineConfig config_from_json(const nlohmann::json& j, PipelineConfig base = {});
PipelineConfig load_config_file(const std::filesystem::path& path, PipelineConfig base = {});
/// Fills the endpoint and auth token from HARMONIC_ENDPOINT / HARMONIC_API_KEY when unset.
void apply_environment(PipelineConfig& config);
/// 16 hex digits over the canonical JSON of the effective config.
std::string config_hash(const PipelineConfig& config);

struct PrepareSummary {
  std::size_t train = 0, val = 0, test = 0;
  std::size_t groups = 0, kept = 0, discarded = 0;
  std::size_t prompts = 0;
  std::size_t target = 0;
};

struct GenerateSummary {
  std::vector<SamplingReport> reports;
  bool shortfall = false;
};

/// Run-directory file names.
namespace artifacts {
inline constexpr const char* config = "config.json";
inline constexpr const char* dataset = "dataset.jsonl";
inline constexpr const char* groups = "groups.jsonl";
inline constexpr const char* prompt_groups = "prompt_groups.jsonl";
inline constexpr const char* finetune = "finetune.jsonl";
inline constexpr const char* prompts = "prompts.jsonl";
inline constexpr const char* manifest = "manifest.json";
inline constexpr const char* report = "report.json";
std::string synthetic_csv(std::uint64_t seed);
std::string sampling_report(std::uint64_t seed);
}  // namespace artifacts

/// ingest -> preprocess -> split -> kNN -> filter -> render.
PrepareSummary cmd_prepare(const PipelineConfig& config, const std::filesystem::path& run_dir);
/// One synthetic CSV and sampling report per seed.
GenerateSummary cmd_generate(const PipelineConfig& config, const std::filesystem::path& run_dir);
/// Privacy and utility metrics per seed, aggregated as mean and std.
nlohmann::ordered_json cmd_evaluate(const PipelineConfig& config, const std::filesystem::path& run_dir);

}  // namespace harmonic
