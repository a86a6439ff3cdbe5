#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "harmonic/llm.hpp"
#include "harmonic/table.hpp"

namespace harmonic {

inline constexpr double kDefaultNrsTolerance = 0.01;

struct DcrSummary {
  double mean = 0.0;
  double median = 0.0;
  std::vector<double> minima;  // per synthetic row
};

/// Distance to closest record: for each synthetic row the smallest
/// label-inclusive mixed distance to any real row, normalized by the real
/// rows' numerical ranges. Higher is more private.
DcrSummary dcr(const Dataset& synthetic, const Dataset& real_train);

/// Fraction of synthetic rows with no real match. A match needs every
/// categorical value and the label equal and every numerical value within
/// `tolerance` relative to the real value.
double nrs(const Dataset& synthetic, const Dataset& real_train, double tolerance = kDefaultNrsTolerance);

/// exp(-mean log p) over one scored text.
double text_perplexity(const ScoredText& scored);

/// Mean per-text perplexity.
double perplexity(std::span<const std::string> texts, const Client& client);

/// Canonical-order single-record encodings, the texts scored for leakage.
std::vector<std::string> record_texts(const Dataset& dataset);

/// Perplexity on real training encodings minus perplexity on synthetic ones.
/// Larger means the generator favors real rows less.
double dlt(const Dataset& real_train, const Dataset& synthetic, const Client& client);

struct PrivacyReport {
  double dcr_mean = 0.0;
  double dcr_median = 0.0;
  double nrs = 0.0;
  std::optional<double> ppl_train;
  std::optional<double> ppl_syn;
  std::optional<double> dlt;
  std::string dlt_unavailable_reason;
  double nrs_tolerance = kDefaultNrsTolerance;
  std::string distance_metric = "gower_range_normalized_with_label";

  std::string to_json() const;
};

/// DCR and NRS always; DLT when `scorer` is given and can score text.
PrivacyReport privacy_report(const Dataset& synthetic, const Dataset& real_train, const Client* scorer,
                             double nrs_tolerance = kDefaultNrsTolerance);

/// Throws DataError unless the two schemas share feature names, kinds and label.
void require_same_columns(const Schema& a, const Schema& b);

}  // namespace harmonic
