#include "harmonic/llm.hpp"

#include <cmath>
#include <exception>
#include <fstream>
#include <thread>

#include <json.hpp>

namespace harmonic {

std::string_view to_string(BackendErrorKind kind) {
  switch (kind) {
    case BackendErrorKind::timeout: return "timeout";
    case BackendErrorKind::http_status: return "http_status";
    case BackendErrorKind::malformed_response: return "malformed_response";
    case BackendErrorKind::capability: return "capability";
    case BackendErrorKind::network: return "network";
    case BackendErrorKind::invalid_request: return "invalid_request";
  }
  return "unknown";
}

bool BackendError::retryable() const {
  switch (kind_) {
    case BackendErrorKind::timeout:
    case BackendErrorKind::network:
      return true;
    case BackendErrorKind::http_status:
      return status_ == 429 || status_ >= 500;
    default:
      return false;
  }
}

std::chrono::milliseconds RetryPolicy::delay(int attempt) const {
  const double ms = static_cast<double>(backoff_base.count()) * std::pow(backoff_factor, attempt);
  return std::chrono::milliseconds(static_cast<std::int64_t>(ms));
}

std::string_view to_string(MockPolicy policy) {
  switch (policy) {
    case MockPolicy::record: return "record";
    case MockPolicy::echo: return "echo";
    case MockPolicy::constant: return "constant";
  }
  return "record";
}

MockPolicy parse_mock_policy(std::string_view text) {
  if (text == "record") return MockPolicy::record;
  if (text == "echo") return MockPolicy::echo;
  if (text == "constant") return MockPolicy::constant;
  throw std::invalid_argument("unknown mock policy '" + std::string(text) + "'");
}

void BackendConfig::validate() const {
  if (max_in_flight < 1) throw std::invalid_argument("backend: max_in_flight must be at least 1");
  if (timeout.count() <= 0) throw std::invalid_argument("backend: timeout must be positive");
  if (retry.max_retries < 0) throw std::invalid_argument("backend: max_retries must be non-negative");
  if (kind == Kind::http && endpoint.empty()) throw std::invalid_argument("backend: http backend needs an endpoint");
  if (!(mock.smoothing >= 0.0)) throw std::invalid_argument("backend: smoothing must be non-negative");
  if (!(mock.corruption_rate >= 0.0 && mock.corruption_rate <= 1.0)) {
    throw std::invalid_argument("backend: corruption_rate must be in [0, 1]");
  }
  for (const auto& [token, weight] : mock.vocabulary) {
    if (!(weight >= 0.0) || !std::isfinite(weight)) {
      throw std::invalid_argument("backend: vocabulary weight for '" + token + "' must be finite and >= 0");
    }
  }
}

std::shared_ptr<const Backend> make_backend(const BackendConfig& config) {
  config.validate();
  if (config.kind == BackendConfig::Kind::http) return std::make_shared<HttpBackend>(config);
  return std::make_shared<MockBackend>(config.mock);
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

Client::Client(std::shared_ptr<const Backend> backend, RetryPolicy retry, std::size_t max_in_flight,
               std::string audit_log)
    : backend_(std::move(backend)), retry_(retry), max_in_flight_(max_in_flight), audit_log_(std::move(audit_log)) {
  if (!backend_) throw std::invalid_argument("client: null backend");
  if (max_in_flight_ < 1) throw std::invalid_argument("client: max_in_flight must be at least 1");
}

Client::Client(const BackendConfig& config)
    : Client(make_backend(config), config.retry, config.max_in_flight, config.audit_log) {}

template <typename F>
auto Client::with_retry(F&& call, int& retries) const -> decltype(call()) {
  retries = 0;
  while (true) {
    try {
      return call();
    } catch (const BackendError& e) {
      if (!e.retryable() || retries >= retry_.max_retries) throw;
      std::this_thread::sleep_for(retry_.delay(retries));
      ++retries;
      ++*retries_;
    }
  }
}

void Client::audit(std::string_view kind, std::string_view input, std::string_view output, int retries) const {
  if (audit_log_.empty()) return;
  nlohmann::ordered_json j;
  j["kind"] = kind;
  j["backend"] = backend_->id();
  j["input"] = input;
  j["output"] = output;
  j["retries"] = retries;
  std::lock_guard lock(*audit_mutex_);
  std::ofstream out(audit_log_, std::ios::app);
  out << j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
}

std::string Client::generate_counted(const GenerationRequest& request, int& retries) const {
  retries = 0;
  if (request.max_new_tokens < 1) throw BackendError(BackendErrorKind::invalid_request, "max_new_tokens must be >= 1");
  if (!std::isfinite(request.temperature) || request.temperature < 0) {
    throw BackendError(BackendErrorKind::invalid_request, "temperature must be finite and >= 0");
  }
  std::string text;
  try {
    text = with_retry([&] { return backend_->generate(request); }, retries);
  } catch (const BackendError& e) {
    audit("generate", request.prompt, std::string("error: ") + e.what(), retries);
    throw;
  }
  audit("generate", request.prompt, text, retries);
  return text;
}

Completion Client::generate(const GenerationRequest& request) const {
  Completion c;
  c.text = generate_counted(request, c.retries);
  return c;
}

ScoredText Client::score(std::string_view text) const {
  if (text.empty()) throw BackendError(BackendErrorKind::invalid_request, "cannot score empty text");
  if (!backend_->supports_scoring()) {
    throw BackendError(BackendErrorKind::capability, "backend " + backend_->id() + " cannot score text");
  }
  int retries = 0;
  ScoredText s = with_retry([&] { return backend_->score(text); }, retries);
  if (s.tokens.empty() || s.tokens.size() != s.logprobs.size()) {
    throw BackendError(BackendErrorKind::malformed_response, "scoring returned no tokens");
  }
  for (double lp : s.logprobs) {
    if (!std::isfinite(lp) || lp > 0) {
      throw BackendError(BackendErrorKind::malformed_response, "scoring returned an invalid log-probability");
    }
  }
  audit("score", text, std::to_string(s.token_count()) + " tokens", retries);
  return s;
}

std::vector<BatchItem> Client::generate_batch(std::span<const GenerationRequest> requests) const {
  std::vector<BatchItem> out(requests.size());
  parallel_for(requests.size(), max_in_flight_, [&](std::size_t i) {
    try {
      out[i].text = generate_counted(requests[i], out[i].retries);
    } catch (const std::exception& e) {
      out[i].error = e.what();
    }
  });
  return out;
}

std::vector<ScoredText> Client::score_batch(std::span<const std::string> texts) const {
  std::vector<ScoredText> out(texts.size());
  parallel_for(texts.size(), max_in_flight_, [&](std::size_t i) { out[i] = score(texts[i]); });
  return out;
}

}  // namespace harmonic
