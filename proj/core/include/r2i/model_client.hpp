#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <semaphore>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "r2i/rate_limiter.hpp"

namespace r2i {

class ResponseCache;
class RequestLog;

struct DecodeParams {
  double temperature = 0.0;
  int max_tokens = 1024;
  std::optional<std::int64_t> seed;
  friend bool operator==(const DecodeParams&, const DecodeParams&) = default;
};

/// One chat turn: an optional image followed by a text prompt.
struct ChatRequest {
  std::string prompt;
  std::string image;  // encoded bytes (JPEG/PNG); empty for text-only turns
  DecodeParams params;
};

/// OpenAI-compatible chat-completions body; the image travels as a base64 data URL.
nlohmann::json build_chat_payload(std::string_view model, const ChatRequest& request);

/// Cache and transcript key: SHA-256 over endpoint id, model and the full payload.
std::string request_digest(std::string_view endpoint_id, std::string_view model, const ChatRequest& request);

/// Extracts choices[0].message.content; throws DataError on any other shape.
std::string parse_chat_response(std::string_view body);

/// The single wire contract every model role (teacher, judge, proposer, ...) speaks.
class ModelClient {
 public:
  virtual ~ModelClient() = default;
  virtual std::string chat(const ChatRequest& request) = 0;
  virtual const std::string& endpoint_id() const = 0;
  virtual const std::string& model() const = 0;
};

struct ModelEndpoint {
  std::string endpoint_id;
  std::string base_url;   // e.g. http://localhost:8000/v1
  std::string token_env;  // environment variable holding the bearer token; empty = no auth
  std::string model;
  int max_concurrency = 4;
  int requests_per_minute = 600;
  int max_retries = 5;
  double timeout_s = 120.0;
};

struct HttpResponse {
  int status = 0;  // 0 when the connection itself failed
  std::string body;
  std::string error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post_json(const std::string& base_url, const std::string& path, const std::string& body,
                                 const std::vector<std::pair<std::string, std::string>>& headers,
                                 double timeout_s) = 0;
};

/// cpp-httplib backed transport (HTTP and HTTPS).
std::shared_ptr<Transport> make_http_transport();

/// Exponential backoff: base * factor^attempt, capped, then scaled by (1 + jitter * u), u in [-1, 1].
struct BackoffPolicy {
  double base_s = 0.5;
  double factor = 2.0;
  double jitter = 0.2;
  double cap_s = 30.0;

  double delay(int attempt, double u) const;
};

/// True for statuses worth retrying: connection failures, 408, 429 and 5xx.
bool is_retryable_status(int status);

/// Append-only JSONL log of every wire attempt (digest, status, latency).
class RequestLog {
 public:
  explicit RequestLog(const std::string& path);
  void record(const nlohmann::json& entry);

 private:
  std::mutex mu_;
  std::string path_;
};

class HttpModelClient final : public ModelClient {
 public:
  HttpModelClient(ModelEndpoint endpoint, std::shared_ptr<Transport> transport,
                  std::shared_ptr<RateLimiter> limiter, std::shared_ptr<Clock> clock,
                  BackoffPolicy backoff = {}, std::shared_ptr<RequestLog> log = nullptr);

  std::string chat(const ChatRequest& request) override;
  const std::string& endpoint_id() const override { return endpoint_.endpoint_id; }
  const std::string& model() const override { return endpoint_.model; }

 private:
  double next_jitter();

  ModelEndpoint endpoint_;
  std::shared_ptr<Transport> transport_;
  std::shared_ptr<RateLimiter> limiter_;
  std::shared_ptr<Clock> clock_;
  BackoffPolicy backoff_;
  std::shared_ptr<RequestLog> log_;
  std::string token_;
  std::counting_semaphore<1024> slots_;
  std::mutex rng_mu_;
  std::mt19937_64 rng_;
};

/// Serves repeated requests from a content-addressed cache before asking `inner`.
class CachingClient final : public ModelClient {
 public:
  CachingClient(std::shared_ptr<ModelClient> inner, std::shared_ptr<ResponseCache> cache);

  std::string chat(const ChatRequest& request) override;
  const std::string& endpoint_id() const override { return inner_->endpoint_id(); }
  const std::string& model() const override { return inner_->model(); }

 private:
  std::shared_ptr<ModelClient> inner_;
  std::shared_ptr<ResponseCache> cache_;
};

}  // namespace r2i
