#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "harmonic/codec.hpp"
#include "harmonic/llm.hpp"
#include "harmonic/table.hpp"

namespace harmonic {

struct PredictionRecord {
  std::size_t row_id = 0;
  std::string gold;
  std::string raw_text;
  std::optional<std::string> parsed;  // absent = unparseable
};

struct ClassScore {
  std::string label;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct EfficacyReport {
  std::string evaluator;
  double weighted_f1 = 0.0;
  std::vector<ClassScore> per_class;
  std::size_t unparseable = 0;
  std::uint64_t seed = 0;

  std::string to_json() const;
};

/// Support-weighted mean of per-class F1. An unparseable prediction is a
/// false negative for its gold class and a false positive for no class.
EfficacyReport weighted_f1(std::span<const PredictionRecord> predictions, const std::vector<std::string>& classes);

struct MleResult {
  std::vector<EfficacyReport> reports;
  double mean_f1 = 0.0;
};

/// Trains each named classifier on `train` and scores it on `test`.
MleResult mle(const Dataset& train, const Dataset& test, const std::vector<std::string>& classifiers,
              std::uint64_t seed);

/// Settings an external trainer is expected to use for a dataset.
struct TrainerSettings {
  int epochs = 5;
  double learning_rate = 1e-4;
  int batch_size = 32;

  std::string to_json() const;
};

inline constexpr TrainerSettings kGeneratorTrainer{5, 3e-4, 16};
inline constexpr TrainerSettings kDownstreamTrainer{5, 1e-4, 32};

/// One downstream instruction sample per record, ids in record order.
std::vector<InstructionSample> lle_prepare(const Dataset& train, const DownstreamTaskConfig& task);

/// Case-insensitive longest match of an answer token at the start of `answer`
/// (after leading whitespace and quotes). Returns the matching class.
std::optional<std::string> parse_answer(std::string_view answer, const Schema& schema,
                                        const DownstreamTaskConfig& task);

/// Greedy generation on every test row, answers parsed and scored. Rows whose
/// request fails after retries count as unparseable.
EfficacyReport lle_score(const Dataset& test, const DownstreamTaskConfig& task, const Client& client,
                         std::vector<PredictionRecord>* predictions = nullptr);

/// CSV of row id, gold, parsed (empty if unparseable) and raw text.
std::string predictions_csv(std::span<const PredictionRecord> predictions);

}  // namespace harmonic
