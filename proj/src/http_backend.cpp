#include <httplib.h>

#include <json.hpp>

#include "harmonic/llm.hpp"

namespace harmonic {

using nlohmann::json;

HttpBackend::HttpBackend(const BackendConfig& config)
    : endpoint_(config.endpoint), token_(config.auth_token), model_(config.model), timeout_(config.timeout) {
  const auto scheme = endpoint_.find("://");
  if (scheme == std::string::npos) throw std::invalid_argument("endpoint '" + endpoint_ + "' lacks a scheme");
  const auto path = endpoint_.find('/', scheme + 3);
  host_ = endpoint_.substr(0, path);
  prefix_ = path == std::string::npos ? "" : endpoint_.substr(path);
  while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
}

std::string HttpBackend::post(const std::string& body) const {
  // httplib clients are not thread-safe; one per call.
  httplib::Client cli(host_);
  cli.set_connection_timeout(timeout_);
  cli.set_read_timeout(timeout_);
  cli.set_write_timeout(timeout_);
  if (!token_.empty()) cli.set_bearer_token_auth(token_);

  auto res = cli.Post(prefix_ + "/completions", body, "application/json");
  if (!res) {
    const auto err = res.error();
    const auto kind = (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read)
                          ? BackendErrorKind::timeout
                          : BackendErrorKind::network;
    throw BackendError(kind, "request to " + endpoint_ + " failed: " + httplib::to_string(err));
  }
  if (res->status < 200 || res->status >= 300) {
    throw BackendError(BackendErrorKind::http_status,
                       "HTTP " + std::to_string(res->status) + " from " + endpoint_ + ": " + res->body.substr(0, 200),
                       res->status);
  }
  return res->body;
}

std::string HttpBackend::generate(const GenerationRequest& request) const {
  json body = {{"model", model_},
               {"prompt", request.prompt},
               {"temperature", request.temperature},
               {"max_tokens", request.max_new_tokens}};
  if (!request.stop.empty()) body["stop"] = request.stop;
  if (request.seed) body["seed"] = *request.seed;

  const std::string raw = post(body.dump());
  try {
    json res = json::parse(raw);
    return res.at("choices").at(0).at("text").get<std::string>();
  } catch (const json::exception& e) {
    throw BackendError(BackendErrorKind::malformed_response, std::string("completion response: ") + e.what());
  }
}

ScoredText HttpBackend::score(std::string_view text) const {
  json body = {{"model", model_}, {"prompt", text}, {"max_tokens", 0}, {"echo", true}, {"logprobs", 0}, {"temperature", 0}};
  const std::string raw = post(body.dump());
  json lp;
  try {
    lp = json::parse(raw).at("choices").at(0).value("logprobs", json());
  } catch (const json::exception& e) {
    throw BackendError(BackendErrorKind::malformed_response, std::string("score response: ") + e.what());
  }
  if (lp.is_null() || !lp.contains("token_logprobs")) {
    throw BackendError(BackendErrorKind::capability, "endpoint " + endpoint_ + " returned no token logprobs");
  }
  ScoredText out;
  try {
    const auto& tokens = lp.at("tokens");
    const auto& logprobs = lp.at("token_logprobs");
    const json offsets = lp.value("text_offset", json());
    if (tokens.size() != logprobs.size()) throw BackendError(BackendErrorKind::malformed_response, "token/logprob length mismatch");
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      // The first token has no conditional probability; servers send null.
      if (logprobs[i].is_null()) continue;
      // Some servers emit one generated token despite max_tokens = 0.
      if (offsets.is_array() && i < offsets.size() && offsets[i].get<std::size_t>() >= text.size()) continue;
      out.tokens.push_back(tokens[i].get<std::string>());
      out.logprobs.push_back(logprobs[i].get<double>());
    }
  } catch (const json::exception& e) {
    throw BackendError(BackendErrorKind::malformed_response, std::string("score response: ") + e.what());
  }
  if (out.tokens.empty()) throw BackendError(BackendErrorKind::malformed_response, "score response had no scored tokens");
  return out;
}

}  // namespace harmonic
