#include <algorithm>
#include <cmath>
#include <cctype>
#include <cstdio>

#include "harmonic/extract.hpp"
#include "harmonic/llm.hpp"
#include "harmonic/rng.hpp"
#include "harmonic/table.hpp"

namespace harmonic {

namespace {

std::vector<std::string_view> split_whitespace(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) out.push_back(text.substr(start, i - start));
  }
  return out;
}

// Digits after the decimal point; -1 when the text uses an exponent.
int decimals_of(std::string_view text) {
  if (text.find_first_of("eE") != std::string_view::npos) return -1;
  auto dot = text.find('.');
  return dot == std::string_view::npos ? 0 : static_cast<int>(text.size() - dot - 1);
}

std::string format_number(double v, int decimals) {
  char buf[64];
  if (decimals < 0) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
  } else {
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  }
  std::string s = buf;
  if (s == "-0") s = "0";
  return s;
}

std::string apply_limits(std::string text, const GenerationRequest& request) {
  for (const auto& stop : request.stop) {
    if (stop.empty()) continue;
    if (auto pos = text.find(stop); pos != std::string::npos) text.resize(pos);
  }
  // Crude token budget: whitespace-delimited words.
  std::size_t words = 0;
  bool in_word = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const bool space = std::isspace(static_cast<unsigned char>(text[i]));
    if (!space && !in_word && ++words > request.max_new_tokens) {
      text.resize(i);
      break;
    }
    in_word = !space;
  }
  return text;
}

}  // namespace

MockBackend::MockBackend(MockConfig config) : config_(std::move(config)) {
  for (const auto& [token, weight] : config_.vocabulary) total_weight_ += weight;
}

std::map<std::string, double> MockBackend::count_tokens(std::span<const std::string> texts) {
  std::map<std::string, double> counts;
  for (const auto& t : texts) {
    for (auto tok : split_whitespace(t)) counts[std::string(tok)] += 1.0;
  }
  return counts;
}

std::string MockBackend::generate(const GenerationRequest& request) const {
  const std::uint64_t seed = mix_seed(fnv1a(request.prompt), request.seed.value_or(0));
  std::string out;
  switch (config_.policy) {
    case MockPolicy::constant:
      out = config_.constant_text;
      break;
    case MockPolicy::echo: {
      auto obj = extract_object(request.prompt);
      out = obj && !obj->pairs.empty() ? std::string(request.prompt.substr(obj->begin, obj->end - obj->begin)) + "."
                                       : config_.constant_text;
      break;
    }
    case MockPolicy::record:
      out = sample_record(request.prompt, request.temperature, seed);
      break;
  }
  return apply_limits(std::move(out), request);
}

std::string MockBackend::sample_record(std::string_view prompt, double temperature, std::uint64_t seed) const {
  std::vector<ExtractedObject> examples;
  for (auto& obj : extract_objects(prompt)) {
    if (!obj.pairs.empty()) examples.push_back(std::move(obj));
  }
  if (examples.empty()) return config_.constant_text;

  Rng rng(seed);
  std::vector<std::string> keys;
  for (const auto& [k, v] : examples.front().pairs) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
  }
  if (temperature > 0) rng.shuffle(keys);

  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& key : keys) {
    std::vector<std::string> values;
    for (const auto& ex : examples) {
      for (const auto& [k, v] : ex.pairs) {
        if (k == key) {
          values.push_back(v);
          break;
        }
      }
    }
    const bool numeric =
        std::all_of(values.begin(), values.end(), [](const std::string& v) { return parse_number(v).has_value(); });

    std::string chosen;
    if (numeric) {
      double lo = *parse_number(values.front()), hi = lo;
      int decimals = 0;
      for (const auto& v : values) {
        const double x = *parse_number(v);
        lo = std::min(lo, x);
        hi = std::max(hi, x);
        const int d = decimals_of(v);
        decimals = (d < 0 || decimals < 0) ? -1 : std::max(decimals, d);
      }
      if (temperature <= 0) {
        chosen = values.front();
      } else {
        const std::string& base = values[rng.below(values.size())];
        double x = *parse_number(base) + (2.0 * rng.unit() - 1.0) * config_.jitter * temperature * (hi - lo);
        chosen = format_number(std::clamp(x, lo, hi), decimals);
      }
    } else {
      // Weighted pick over distinct values, first-occurrence order.
      std::vector<std::pair<std::string, double>> counts;
      for (const auto& v : values) {
        auto it = std::find_if(counts.begin(), counts.end(), [&](const auto& c) { return c.first == v; });
        if (it == counts.end()) {
          counts.emplace_back(v, 1.0);
        } else {
          it->second += 1.0;
        }
      }
      if (temperature <= 0) {
        chosen = std::max_element(counts.begin(), counts.end(),
                                  [](const auto& a, const auto& b) { return a.second < b.second; })
                     ->first;
      } else {
        double total = 0.0;
        for (auto& c : counts) total += c.second = std::pow(c.second, 1.0 / temperature);
        double u = rng.unit() * total;
        chosen = counts.back().first;
        for (const auto& c : counts) {
          if (u < c.second) {
            chosen = c.first;
            break;
          }
          u -= c.second;
        }
      }
    }
    pairs.emplace_back(key, std::move(chosen));
  }

  std::string out = "{";
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (i) out += ", ";
    out += quote_json(pairs[i].first) + ": " + quote_json(pairs[i].second);
  }
  out += "}.";

  if (config_.corruption_rate > 0 && rng.unit() < config_.corruption_rate) {
    // Cut inside the second half so at least one pair is lost.
    const std::size_t half = out.size() / 2;
    out.resize(half + rng.below(std::max<std::size_t>(1, out.size() / 4)));
  }
  return out;
}

ScoredText MockBackend::score(std::string_view text) const {
  if (config_.vocabulary.empty()) throw BackendError(BackendErrorKind::capability, "mock has no scoring vocabulary");
  ScoredText out;
  const double a = config_.smoothing;
  const double denom = total_weight_ + a * static_cast<double>(config_.vocabulary.size() + 1);
  for (auto tok : split_whitespace(text)) {
    auto it = config_.vocabulary.find(std::string(tok));
    const double numer = (it == config_.vocabulary.end() ? 0.0 : it->second) + a;
    if (numer <= 0.0 || denom <= 0.0) {
      throw BackendError(BackendErrorKind::invalid_request,
                         "token '" + std::string(tok) + "' has zero probability under the mock vocabulary");
    }
    out.tokens.emplace_back(tok);
    out.logprobs.push_back(std::log(numer / denom));
  }
  if (out.tokens.empty()) throw BackendError(BackendErrorKind::invalid_request, "text has no tokens");
  return out;
}

}  // namespace harmonic
