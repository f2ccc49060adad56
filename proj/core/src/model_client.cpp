#include "r2i/model_client.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>

#include <spdlog/spdlog.h>

#include "r2i/cache.hpp"
#include "r2i/error.hpp"
#include "r2i/hash.hpp"
#include "r2i/image.hpp"

namespace r2i {

using json = nlohmann::json;

json build_chat_payload(std::string_view model, const ChatRequest& request) {
  json content = json::array();
  if (!request.image.empty()) {
    const char* mime = sniff_codec(request.image) == ImageCodec::png ? "image/png" : "image/jpeg";
    content.push_back({{"type", "image_url"},
                       {"image_url", {{"url", std::string("data:") + mime + ";base64," + base64_encode(request.image)}}}});
  }
  content.push_back({{"type", "text"}, {"text", request.prompt}});
  json payload = {
      {"model", model},
      {"messages", json::array({{{"role", "user"}, {"content", std::move(content)}}})},
      {"temperature", request.params.temperature},
      {"max_tokens", request.params.max_tokens},
  };
  if (request.params.seed) payload["seed"] = *request.params.seed;
  return payload;
}

std::string request_digest(std::string_view endpoint_id, std::string_view model, const ChatRequest& request) {
  std::string material;
  material.append(endpoint_id).push_back('\n');
  material.append(model).push_back('\n');
  material += build_chat_payload(model, request).dump();
  return sha256_hex(material);
}

std::string parse_chat_response(std::string_view body) {
  try {
    const auto j = json::parse(body);
    const auto& content = j.at("choices").at(0).at("message").at("content");
    if (content.is_string()) return content.get<std::string>();
    // Some servers return content parts; concatenate the text ones.
    std::string text;
    for (const auto& part : content) {
      if (part.value("type", "") == "text") text += part.value("text", "");
    }
    return text;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed chat response: ") + e.what());
  }
}

double BackoffPolicy::delay(int attempt, double u) const {
  const double raw = std::min(cap_s, base_s * std::pow(factor, attempt));
  return raw * (1.0 + jitter * std::clamp(u, -1.0, 1.0));
}

bool is_retryable_status(int status) {
  return status == 0 || status == 408 || status == 429 || status >= 500;
}

RequestLog::RequestLog(const std::string& path) : path_(path) {}

void RequestLog::record(const json& entry) {
  std::lock_guard lock(mu_);
  std::ofstream out(path_, std::ios::app);
  out << entry.dump() << '\n';
}

HttpModelClient::HttpModelClient(ModelEndpoint endpoint, std::shared_ptr<Transport> transport,
                                 std::shared_ptr<RateLimiter> limiter, std::shared_ptr<Clock> clock,
                                 BackoffPolicy backoff, std::shared_ptr<RequestLog> log)
    : endpoint_(std::move(endpoint)),
      transport_(std::move(transport)),
      limiter_(std::move(limiter)),
      clock_(std::move(clock)),
      backoff_(backoff),
      log_(std::move(log)),
      slots_(std::clamp(endpoint_.max_concurrency, 1, 1024)),
      rng_(sha256_u64(endpoint_.endpoint_id)) {
  if (endpoint_.max_concurrency < 1) throw PreconditionError("max_concurrency must be >= 1");
  if (endpoint_.max_retries < 0) throw PreconditionError("max_retries must be >= 0");
  if (!endpoint_.token_env.empty()) {
    const char* token = std::getenv(endpoint_.token_env.c_str());
    if (token == nullptr) {
      throw PreconditionError("endpoint " + endpoint_.endpoint_id + ": environment variable " + endpoint_.token_env +
                              " is not set");
    }
    token_ = token;
  }
}

double HttpModelClient::next_jitter() {
  std::lock_guard lock(rng_mu_);
  return to_unit_interval(rng_()) * 2.0 - 1.0;
}

std::string HttpModelClient::chat(const ChatRequest& request) {
  const std::string body = build_chat_payload(endpoint_.model, request).dump();
  const std::string digest = request_digest(endpoint_.endpoint_id, endpoint_.model, request);
  std::vector<std::pair<std::string, std::string>> headers;
  if (!token_.empty()) headers.emplace_back("Authorization", "Bearer " + token_);

  slots_.acquire();
  struct Release {
    std::counting_semaphore<1024>& s;
    ~Release() { s.release(); }
  } release{slots_};

  std::string last_error;
  for (int attempt = 0; attempt <= endpoint_.max_retries; ++attempt) {
    if (limiter_) limiter_->acquire();
    const double started = clock_->now();
    HttpResponse resp = transport_->post_json(endpoint_.base_url, "/chat/completions", body, headers, endpoint_.timeout_s);
    if (log_) {
      log_->record({{"endpoint", endpoint_.endpoint_id}, {"digest", digest}, {"attempt", attempt},
                    {"status", resp.status}, {"latency_s", clock_->now() - started}});
    }
    if (resp.status >= 200 && resp.status < 300) {
      try {
        return parse_chat_response(resp.body);
      } catch (const DataError& e) {
        last_error = e.what();
      }
    } else if (!is_retryable_status(resp.status)) {
      throw TransportError(endpoint_.endpoint_id + ": HTTP " + std::to_string(resp.status) + " " + resp.body,
                           resp.status, false);
    } else {
      last_error = resp.status == 0 ? resp.error : "HTTP " + std::to_string(resp.status);
    }
    if (attempt < endpoint_.max_retries) {
      const double wait = backoff_.delay(attempt, next_jitter());
      spdlog::debug("{}: attempt {} failed ({}), retrying in {:.2f}s", endpoint_.endpoint_id, attempt, last_error, wait);
      clock_->sleep_for(wait);
    }
  }
  throw TransportError(endpoint_.endpoint_id + ": retry budget exhausted: " + last_error, 0, true);
}

CachingClient::CachingClient(std::shared_ptr<ModelClient> inner, std::shared_ptr<ResponseCache> cache)
    : inner_(std::move(inner)), cache_(std::move(cache)) {}

std::string CachingClient::chat(const ChatRequest& request) {
  const std::string key = request_digest(inner_->endpoint_id(), inner_->model(), request);
  if (auto hit = cache_->get(key)) return *hit;
  std::string response = inner_->chat(request);
  cache_->put(key, response);
  return response;
}

}  // namespace r2i
