#include "harmonic/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include <json.hpp>

#include "harmonic/codec.hpp"
#include "harmonic/neighbors.hpp"

namespace harmonic {

void require_same_columns(const Schema& a, const Schema& b) {
  bool same = a.features.size() == b.features.size() && a.label.name == b.label.name;
  for (std::size_t j = 0; same && j < a.features.size(); ++j) {
    same = a.features[j].name == b.features[j].name && a.features[j].kind == b.features[j].kind;
  }
  if (!same) throw DataError("datasets have different schemas");
}

DcrSummary dcr(const Dataset& synthetic, const Dataset& real_train) {
  require_same_columns(synthetic.schema, real_train.schema);
  if (synthetic.records.empty() || real_train.records.empty()) throw DataError("dcr: empty dataset");
  std::vector<std::size_t> all(real_train.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const Schema schema = schema_with_ranges(real_train, all);

  DcrSummary out;
  out.minima.resize(synthetic.size());
  parallel_for(synthetic.size(), std::max(1u, std::thread::hardware_concurrency()), [&](std::size_t s) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& r : real_train.records) {
      best = std::min(best, mixed_distance_with_label(synthetic.records[s], r, schema));
    }
    out.minima[s] = best;
  });

  double sum = 0.0;
  for (double d : out.minima) sum += d;
  out.mean = sum / static_cast<double>(out.minima.size());
  std::vector<double> sorted = out.minima;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  out.median = n % 2 ? sorted[n / 2] : (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0;
  return out;
}

namespace {

bool rows_match(const Record& syn, const Record& real, const Schema& schema, double tolerance) {
  if (syn.label != real.label) return false;
  for (std::size_t j = 0; j < schema.features.size(); ++j) {
    if (schema.features[j].is_numerical()) {
      const double r = real.values[j].number;
      if (std::abs(syn.values[j].number - r) > tolerance * std::abs(r)) return false;
    } else if (syn.values[j].text != real.values[j].text) {
      return false;
    }
  }
  return true;
}

}  // namespace

double nrs(const Dataset& synthetic, const Dataset& real_train, double tolerance) {
  require_same_columns(synthetic.schema, real_train.schema);
  if (synthetic.records.empty() || real_train.records.empty()) throw DataError("nrs: empty dataset");
  if (!(tolerance >= 0.0)) throw DataError("nrs: tolerance must be non-negative");
  std::vector<char> is_new(synthetic.size(), 0);
  parallel_for(synthetic.size(), std::max(1u, std::thread::hardware_concurrency()), [&](std::size_t s) {
    is_new[s] = std::none_of(real_train.records.begin(), real_train.records.end(), [&](const Record& r) {
      return rows_match(synthetic.records[s], r, synthetic.schema, tolerance);
    });
  });
  std::size_t count = 0;
  for (char c : is_new) count += c != 0;
  return static_cast<double>(count) / static_cast<double>(synthetic.size());
}

double text_perplexity(const ScoredText& scored) {
  if (scored.logprobs.empty()) throw DataError("perplexity: no tokens");
  double sum = 0.0;
  for (double lp : scored.logprobs) sum += lp;
  return std::exp(-sum / static_cast<double>(scored.logprobs.size()));
}

double perplexity(std::span<const std::string> texts, const Client& client) {
  if (texts.empty()) throw DataError("perplexity: no texts");
  const std::vector<ScoredText> scored = client.score_batch(texts);
  double sum = 0.0;
  for (const auto& s : scored) sum += text_perplexity(s);
  return sum / static_cast<double>(scored.size());
}

std::vector<std::string> record_texts(const Dataset& dataset) {
  std::vector<std::string> out;
  out.reserve(dataset.size());
  for (const auto& r : dataset.records) out.push_back(encode_record(r, dataset.schema, 0, false).text());
  return out;
}

double dlt(const Dataset& real_train, const Dataset& synthetic, const Client& client) {
  if (real_train.records.empty() || synthetic.records.empty()) throw DataError("dlt: empty dataset");
  const auto train_texts = record_texts(real_train);
  const auto syn_texts = record_texts(synthetic);
  return perplexity(train_texts, client) - perplexity(syn_texts, client);
}

std::string PrivacyReport::to_json() const {
  nlohmann::ordered_json j;
  j["dcr_mean"] = dcr_mean;
  j["dcr_median"] = dcr_median;
  j["nrs"] = nrs;
  if (dlt) {
    j["ppl_train"] = *ppl_train;
    j["ppl_syn"] = *ppl_syn;
    j["dlt"] = *dlt;
  } else {
    j["dlt"] = nullptr;
    j["dlt_unavailable"] = dlt_unavailable_reason;
  }
  j["config"] = {{"nrs_tolerance", nrs_tolerance}, {"distance_metric", distance_metric}};
  return j.dump(2);
}

PrivacyReport privacy_report(const Dataset& synthetic, const Dataset& real_train, const Client* scorer,
                             double nrs_tolerance) {
  PrivacyReport rep;
  const DcrSummary d = dcr(synthetic, real_train);
  rep.dcr_mean = d.mean;
  rep.dcr_median = d.median;
  rep.nrs = nrs(synthetic, real_train, nrs_tolerance);
  rep.nrs_tolerance = nrs_tolerance;
  if (!scorer) {
    rep.dlt_unavailable_reason = "no scoring backend configured";
  } else if (!scorer->backend().supports_scoring()) {
    rep.dlt_unavailable_reason = "backend " + scorer->backend().id() + " cannot score text";
  } else {
    try {
      const auto train_texts = record_texts(real_train);
      const auto syn_texts = record_texts(synthetic);
      const double train_ppl = perplexity(train_texts, *scorer);
      const double syn_ppl = perplexity(syn_texts, *scorer);
      rep.ppl_train = train_ppl;
      rep.ppl_syn = syn_ppl;
      rep.dlt = train_ppl - syn_ppl;
    } catch (const BackendError& e) {
      if (e.kind() != BackendErrorKind::capability) throw;
      rep.dlt_unavailable_reason = e.what();
    }
  }
  return rep;
}

}  // namespace harmonic
