#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "harmonic/codec.hpp"
#include "harmonic/llm.hpp"
#include "harmonic/neighbors.hpp"
#include "harmonic/table.hpp"

namespace harmonic {

inline constexpr std::uint64_t kExperimentSeeds[] = {1234, 1235, 1236};
inline constexpr std::size_t kLargeDatasetTarget = 5000;
inline constexpr std::size_t kLargeTrainThreshold = 10000;

/// Synthetic rows to request: the training size, or 5000 above 10000 rows.
std::size_t default_target_count(std::size_t train_size);

struct SamplingOptions {
  double temperature = kDefaultTemperature;
  std::size_t max_new_tokens = 1024;
  std::vector<std::string> stop = {"}\n"};
  // Re-prompt a group whose output failed to decode, with a fresh seed.
  bool retry_failed_prompts = false;
  int max_prompt_retries = 1;
};

struct SamplingReport {
  std::size_t requested = 0;
  std::size_t produced = 0;
  std::size_t prompts_available = 0;
  std::size_t prompts_used = 0;
  std::map<std::string, std::size_t> parse_failures;  // DecodeErrorKind name -> count
  std::size_t backend_failures = 0;
  std::size_t extra_objects = 0;  // outputs holding more than one object
  std::size_t retries_used = 0;   // backend-level retries
  std::size_t reprompts = 0;
  std::vector<std::uint64_t> seeds;
  bool shortfall = false;

  std::size_t total_parse_failures() const;
  std::string to_json() const;
};

struct SamplingResult {
  Dataset synthetic;
  SamplingReport report;
};

/// Sends prompts in order, decodes each response, and keeps schema-valid
/// records until `target_n` are collected or prompts run out (shortfall).
/// Each prompt yields at most one record. The output is ordered by prompt
/// and independent of the client's concurrency limit. Throws BackendError
/// when every request of the first batch fails.
SamplingResult sample_synthetic(const std::vector<InstructionSample>& prompts, const Schema& schema,
                                const Client& client, std::size_t target_n, std::uint64_t seed,
                                const SamplingOptions& options = {});

/// Renders `prompts` against `dataset` and samples from them.
SamplingResult sample_synthetic(const GroupSet& prompts, const Dataset& dataset, const TemplateConfig& tmpl,
                                bool permute, const Client& client, std::size_t target_n, std::uint64_t seed,
                                const SamplingOptions& options = {});

/// Prompt texts for a prompt group set; the same rendering the sampler uses.
std::vector<InstructionSample> render_prompts(const GroupSet& prompts, const Dataset& dataset,
                                              const TemplateConfig& tmpl, bool permute, std::uint64_t seed);

}  // namespace harmonic
