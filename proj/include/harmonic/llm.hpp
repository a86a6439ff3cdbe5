#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace harmonic {

inline constexpr double kDefaultTemperature = 0.7;

struct GenerationRequest {
  std::string prompt;
  // 0 selects greedy decoding.
  double temperature = kDefaultTemperature;
  std::size_t max_new_tokens = 1024;
  std::vector<std::string> stop;
  std::optional<std::uint64_t> seed;
};

/// Per-token natural-log probabilities.
struct ScoredText {
  std::vector<std::string> tokens;
  std::vector<double> logprobs;

  std::size_t token_count() const { return tokens.size(); }
};

enum class BackendErrorKind { timeout, http_status, malformed_response, capability, network, invalid_request };

std::string_view to_string(BackendErrorKind kind);

class BackendError : public std::runtime_error {
 public:
  BackendError(BackendErrorKind kind, const std::string& what, int status = 0)
      : std::runtime_error(what), kind_(kind), status_(status) {}

  BackendErrorKind kind() const { return kind_; }
  int status() const { return status_; }
  /// Transport failures, timeouts, 429 and 5xx are worth retrying.
  bool retryable() const;

 private:
  BackendErrorKind kind_;
  int status_;
};

/// A text-generation service. Implementations must be safe to call from
/// several threads at once.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string generate(const GenerationRequest& request) const = 0;
  virtual ScoredText score(std::string_view text) const = 0;
  virtual bool supports_scoring() const = 0;
  virtual std::string id() const = 0;
};

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds backoff_base{250};
  double backoff_factor = 2.0;

  std::chrono::milliseconds delay(int attempt) const;
};

enum class MockPolicy {
  record,    // sample a record from the prompt's examples
  echo,      // repeat the prompt's first example verbatim
  constant,  // always return `constant_text`
};

std::string_view to_string(MockPolicy policy);
MockPolicy parse_mock_policy(std::string_view text);

struct MockConfig {
  MockPolicy policy = MockPolicy::record;
  // Returned by `constant`, and by `record`/`echo` when the prompt holds no example.
  std::string constant_text;
  // Unigram weights for scoring; empty disables scoring.
  std::map<std::string, double> vocabulary;
  // Additive smoothing; one extra slot absorbs out-of-vocabulary tokens.
  double smoothing = 0.0;
  // Numerical jitter as a fraction of the examples' spread, scaled by temperature.
  double jitter = 0.5;
  // Probability of emitting a truncated (undecodable) record.
  double corruption_rate = 0.02;
};

struct BackendConfig {
  enum class Kind { http, mock };
  Kind kind = Kind::mock;
  std::string endpoint;  // e.g. http://localhost:8000/v1
  std::string auth_token;
  std::string model;
  MockConfig mock;
  std::chrono::milliseconds timeout{60000};
  std::size_t max_in_flight = 4;
  RetryPolicy retry;
  std::string audit_log;  // JSONL of every request/response; empty disables

  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
};

/// Deterministic stand-in for a fine-tuned generator.
///
/// generate() reads the JSON examples in the prompt and writes a new record
/// whose categorical values are drawn from the examples with weights
/// count^(1/T) and whose numerical values are an example value plus jitter
/// bounded by the examples' range. Output depends only on (prompt, seed).
///
/// score() applies a smoothed unigram model over whitespace tokens:
///   p(t) = (w_t + a) / (W + a (V + 1))
/// which gives log p = -ln V for a uniform vocabulary and a = 0.
class MockBackend final : public Backend {
 public:
  explicit MockBackend(MockConfig config);

  std::string generate(const GenerationRequest& request) const override;
  ScoredText score(std::string_view text) const override;
  bool supports_scoring() const override { return !config_.vocabulary.empty(); }
  std::string id() const override { return "mock"; }

  const MockConfig& config() const { return config_; }

  /// Token counts over whitespace-split texts, for fitting a unigram vocabulary.
  static std::map<std::string, double> count_tokens(std::span<const std::string> texts);

 private:
  std::string sample_record(std::string_view prompt, double temperature, std::uint64_t seed) const;

  MockConfig config_;
  double total_weight_ = 0.0;
};

/// OpenAI-compatible completions endpoint (POST {endpoint}/completions).
/// Scoring uses echo + logprobs with max_tokens = 0.
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(const BackendConfig& config);

  std::string generate(const GenerationRequest& request) const override;
  ScoredText score(std::string_view text) const override;
  bool supports_scoring() const override { return true; }
  std::string id() const override { return endpoint_ + "#" + model_; }

 private:
  std::string post(const std::string& body) const;

  std::string endpoint_;
  std::string host_;    // scheme://host[:port]
  std::string prefix_;  // path prefix, may be empty
  std::string token_;
  std::string model_;
  std::chrono::milliseconds timeout_;
};

std::shared_ptr<const Backend> make_backend(const BackendConfig& config);

struct Completion {
  std::string text;
  int retries = 0;
};

struct BatchItem {
  std::optional<std::string> text;  // absent when every attempt failed
  std::string error;
  int retries = 0;
};

/// Retry, concurrency limit and audit logging around a backend.
class Client {
 public:
  Client(std::shared_ptr<const Backend> backend, RetryPolicy retry, std::size_t max_in_flight,
         std::string audit_log = {});
  explicit Client(const BackendConfig& config);

  /// Throws BackendError once retries are exhausted or on a non-retryable error.
  Completion generate(const GenerationRequest& request) const;
  ScoredText score(std::string_view text) const;

  /// Issues up to max_in_flight requests at a time. Results are returned in
  /// request order and do not depend on the concurrency limit.
  std::vector<BatchItem> generate_batch(std::span<const GenerationRequest> requests) const;
  std::vector<ScoredText> score_batch(std::span<const std::string> texts) const;

  const Backend& backend() const { return *backend_; }
  std::size_t max_in_flight() const { return max_in_flight_; }
  std::size_t retries_used() const { return retries_->load(); }

 private:
  template <typename F>
  auto with_retry(F&& call, int& retries) const -> decltype(call());
  std::string generate_counted(const GenerationRequest& request, int& retries) const;
  void audit(std::string_view kind, std::string_view input, std::string_view output, int retries) const;

  std::shared_ptr<const Backend> backend_;
  RetryPolicy retry_;
  std::size_t max_in_flight_;
  std::string audit_log_;
  std::shared_ptr<std::mutex> audit_mutex_ = std::make_shared<std::mutex>();
  std::shared_ptr<std::atomic<std::size_t>> retries_ = std::make_shared<std::atomic<std::size_t>>(0);
};

/// Runs fn(i) for i in [0, n) on up to `workers` threads.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace harmonic
