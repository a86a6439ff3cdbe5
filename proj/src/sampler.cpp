#include "harmonic/sampler.hpp"

#include <algorithm>

#include <json.hpp>

#include "harmonic/rng.hpp"

namespace harmonic {

std::size_t default_target_count(std::size_t train_size) {
  return train_size > kLargeTrainThreshold ? kLargeDatasetTarget : train_size;
}

std::size_t SamplingReport::total_parse_failures() const {
  std::size_t n = 0;
  for (const auto& [kind, count] : parse_failures) n += count;
  return n;
}

std::string SamplingReport::to_json() const {
  nlohmann::ordered_json j;
  j["requested"] = requested;
  j["produced"] = produced;
  j["prompts_available"] = prompts_available;
  j["prompts_used"] = prompts_used;
  j["parse_failures"] = parse_failures;
  j["parse_failure_total"] = total_parse_failures();
  j["backend_failures"] = backend_failures;
  j["extra_objects"] = extra_objects;
  j["retries_used"] = retries_used;
  j["reprompts"] = reprompts;
  j["seeds"] = seeds;
  j["shortfall"] = shortfall;
  return j.dump(2);
}

std::vector<InstructionSample> render_prompts(const GroupSet& prompts, const Dataset& dataset,
                                              const TemplateConfig& tmpl, bool permute, std::uint64_t seed) {
  if (prompts.purpose != GroupPurpose::prompt) throw DataError("render_prompts: expected prompt groups");
  std::vector<InstructionSample> out;
  out.reserve(prompts.groups.size());
  for (std::size_t i = 0; i < prompts.groups.size(); ++i) {
    out.push_back(render_generator_instruction(prompts.groups[i], dataset, tmpl, seed, permute,
                                               static_cast<std::int64_t>(i)));
  }
  return out;
}

SamplingResult sample_synthetic(const std::vector<InstructionSample>& prompts, const Schema& schema,
                                const Client& client, std::size_t target_n, std::uint64_t seed,
                                const SamplingOptions& options) {
  if (target_n < 1) throw DataError("sample_synthetic: target must be at least 1");

  SamplingResult result;
  result.synthetic.schema = schema;
  SamplingReport& rep = result.report;
  rep.requested = target_n;
  rep.prompts_available = prompts.size();
  rep.seeds = {seed};

  auto request_for = [&](std::size_t index, int attempt) {
    GenerationRequest req;
    req.prompt = prompts[index].input_text;
    req.temperature = options.temperature;
    req.max_new_tokens = options.max_new_tokens;
    req.stop = options.stop;
    req.seed = mix_seed(seed, index + static_cast<std::uint64_t>(attempt) * 0x100000000ULL);
    return req;
  };

  // Each prompt contributes at most one record, so a batch never asks for
  // more prompts than records still missing.
  std::size_t next = 0;
  while (rep.produced < target_n && next < prompts.size()) {
    std::size_t batch = std::min(target_n - rep.produced, prompts.size() - next);
    // The first batch is a probe no wider than the concurrency limit.
    const bool probe = next == 0;
    if (probe) batch = std::min(batch, std::max<std::size_t>(client.max_in_flight(), 1));
    std::vector<GenerationRequest> requests;
    requests.reserve(batch);
    for (std::size_t i = 0; i < batch; ++i) requests.push_back(request_for(next + i, 0));
    std::vector<BatchItem> responses = client.generate_batch(requests);
    if (probe && std::none_of(responses.begin(), responses.end(), [](const BatchItem& b) { return b.text.has_value(); })) {
      throw BackendError(BackendErrorKind::network, "backend unreachable: " + responses.front().error);
    }

    for (std::size_t i = 0; i < batch; ++i) {
      const std::size_t index = next + i;
      BatchItem item = std::move(responses[i]);
      for (int attempt = 0;; ++attempt) {
        rep.retries_used += static_cast<std::size_t>(item.retries);
        if (!item.text) {
          ++rep.backend_failures;
          break;
        }
        DecodeResult decoded = decode_record(*item.text, schema);
        if (decoded.ok()) {
          rep.extra_objects += decoded.extra_objects > 0;
          result.synthetic.records.push_back(decoded.record());
          ++rep.produced;
          break;
        }
        ++rep.parse_failures[std::string(to_string(decoded.error().kind))];
        if (!options.retry_failed_prompts || attempt >= options.max_prompt_retries) break;
        ++rep.reprompts;
        item = BatchItem{};
        try {
          Completion c = client.generate(request_for(index, attempt + 1));
          item.text = std::move(c.text);
          item.retries = c.retries;
        } catch (const std::exception& e) {
          item.error = e.what();
        }
      }
    }
    next += batch;
  }
  rep.prompts_used = next;
  rep.shortfall = rep.produced < target_n;
  return result;
}

SamplingResult sample_synthetic(const GroupSet& prompts, const Dataset& dataset, const TemplateConfig& tmpl,
                                bool permute, const Client& client, std::size_t target_n, std::uint64_t seed,
                                const SamplingOptions& options) {
  return sample_synthetic(render_prompts(prompts, dataset, tmpl, permute, seed), dataset.schema, client, target_n,
                          seed, options);
}

}  // namespace harmonic
