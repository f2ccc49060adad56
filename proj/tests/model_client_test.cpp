#include <httplib.h>

#include <atomic>
#include <cstdlib>
#include <deque>
#include <thread>

#include <gtest/gtest.h>

#include "r2i/cache.hpp"
#include "r2i/error.hpp"
#include "r2i/hash.hpp"
#include "r2i/io.hpp"
#include "r2i/model_client.hpp"
#include "r2i/stub_clients.hpp"
#include "support.hpp"

namespace r2i {
namespace {

using testing::TempDir;

std::string ok_body(const std::string& text) {
  return json{{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", text}}}}})}}.dump();
}

class FakeTransport final : public Transport {
 public:
  explicit FakeTransport(std::deque<HttpResponse> replies) : replies_(std::move(replies)) {}

  HttpResponse post_json(const std::string& base_url, const std::string& path, const std::string& body,
                         const std::vector<std::pair<std::string, std::string>>& headers, double) override {
    calls.push_back({base_url + path, body, headers});
    HttpResponse r = replies_.front();
    replies_.pop_front();
    return r;
  }

  struct Call {
    std::string url;
    std::string body;
    std::vector<std::pair<std::string, std::string>> headers;
  };
  std::vector<Call> calls;

 private:
  std::deque<HttpResponse> replies_;
};

ModelEndpoint endpoint(int retries = 5) {
  ModelEndpoint e;
  e.endpoint_id = "teacher-a";
  e.base_url = "http://localhost:1/v1";
  e.model = "m";
  e.max_retries = retries;
  return e;
}

TEST(Payload, ChatShapeWithImageDataUrl) {
  const Image img(2, 2, {1, 2, 3});
  ChatRequest req{"hi", encode_png(img), {0.5, 64, 7}};
  const json p = build_chat_payload("m", req);
  EXPECT_EQ(p["model"], "m");
  EXPECT_EQ(p["seed"], 7);
  EXPECT_EQ(p["max_tokens"], 64);
  const auto& content = p["messages"][0]["content"];
  ASSERT_EQ(content.size(), 2u);
  EXPECT_EQ(content[0]["image_url"]["url"].get<std::string>().rfind("data:image/png;base64,", 0), 0u);
  EXPECT_EQ(content[1]["text"], "hi");
  req.params.seed.reset();
  EXPECT_FALSE(build_chat_payload("m", req).contains("seed"));
  EXPECT_NE(request_digest("a", "m", req), request_digest("b", "m", req));
  req.image.clear();
  EXPECT_EQ(build_chat_payload("m", req)["messages"][0]["content"].size(), 1u);
}

TEST(Payload, ResponseParsing) {
  EXPECT_EQ(parse_chat_response(ok_body("yo")), "yo");
  EXPECT_EQ(parse_chat_response(
                R"({"choices": [{"message": {"content": [{"type": "text", "text": "a"}, {"type": "text", "text": "b"}]}}]})"),
            "ab");
  EXPECT_THROW(parse_chat_response("{}"), DataError);
  EXPECT_THROW(parse_chat_response("<html>"), DataError);
}

TEST(Backoff, ExponentialCappedJittered) {
  const BackoffPolicy p;
  EXPECT_DOUBLE_EQ(p.delay(0, 0.0), 0.5);
  EXPECT_DOUBLE_EQ(p.delay(3, 0.0), 4.0);
  EXPECT_DOUBLE_EQ(p.delay(20, 0.0), 30.0);
  EXPECT_DOUBLE_EQ(p.delay(1, 1.0), 1.2);
  EXPECT_DOUBLE_EQ(p.delay(1, -5.0), 0.8);
  for (int s : {0, 408, 429, 500, 503}) EXPECT_TRUE(is_retryable_status(s)) << s;
  for (int s : {400, 401, 403, 404}) EXPECT_FALSE(is_retryable_status(s)) << s;
}

TEST(HttpClient, RetriesServerErrorsThenSucceeds) {
  auto transport = std::make_shared<FakeTransport>(
      std::deque<HttpResponse>{{503, "busy", ""}, {0, "", "connection refused"}, {200, "garbage", ""}, {200, ok_body("done"), ""}});
  auto clock = std::make_shared<FakeClock>();
  TempDir dir;
  auto log = std::make_shared<RequestLog>((dir / "requests.jsonl").string());
  HttpModelClient client(endpoint(), transport, nullptr, clock, BackoffPolicy{1.0, 2.0, 0.0, 30.0}, log);
  EXPECT_EQ(client.chat({"q", "", {}}), "done");
  EXPECT_EQ(transport->calls.size(), 4u);
  EXPECT_EQ(transport->calls[0].url, "http://localhost:1/v1/chat/completions");
  EXPECT_DOUBLE_EQ(clock->slept(), 1.0 + 2.0 + 4.0);
  const auto rows = read_jsonl(dir / "requests.jsonl");
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0]["status"], 503);
  EXPECT_EQ(rows[3]["attempt"], 3);
}

TEST(HttpClient, ClientErrorsFailFastAndBudgetIsBounded) {
  auto clock = std::make_shared<FakeClock>();
  auto denied = std::make_shared<FakeTransport>(std::deque<HttpResponse>{{401, "no", ""}});
  HttpModelClient a(endpoint(), denied, nullptr, clock);
  try {
    a.chat({"q", "", {}});
    FAIL();
  } catch (const TransportError& e) {
    EXPECT_EQ(e.status(), 401);
    EXPECT_FALSE(e.retryable());
  }
  EXPECT_EQ(denied->calls.size(), 1u);

  auto busy = std::make_shared<FakeTransport>(std::deque<HttpResponse>(4, HttpResponse{500, "", ""}));
  HttpModelClient b(endpoint(3), busy, nullptr, clock);
  EXPECT_THROW(b.chat({"q", "", {}}), TransportError);
  EXPECT_EQ(busy->calls.size(), 4u);
}

TEST(HttpClient, BearerTokenFromEnvironment) {
  ::setenv("R2I_TEST_TOKEN", "sekrit", 1);
  ModelEndpoint e = endpoint();
  e.token_env = "R2I_TEST_TOKEN";
  auto t = std::make_shared<FakeTransport>(std::deque<HttpResponse>{{200, ok_body("x"), ""}});
  HttpModelClient c(e, t, nullptr, std::make_shared<FakeClock>());
  c.chat({"q", "", {}});
  EXPECT_EQ(t->calls[0].headers.at(0), (std::pair<std::string, std::string>{"Authorization", "Bearer sekrit"}));
  e.token_env = "R2I_TEST_TOKEN_UNSET";
  EXPECT_THROW(HttpModelClient(e, t, nullptr, std::make_shared<FakeClock>()), PreconditionError);
}

TEST(HttpClient, RealServerRoundTrip) {
  httplib::Server server;
  std::atomic<int> hits{0};
  std::string seen_auth;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    const int n = ++hits;
    seen_auth = req.get_header_value("Authorization");
    const json body = json::parse(req.body);
    if (body["messages"][0]["content"].back()["text"] == "deny") {
      res.status = 401;
      return;
    }
    if (n <= 2) {
      res.status = 500;
      return;
    }
    res.set_content(ok_body("echo: " + body["messages"][0]["content"].back()["text"].get<std::string>()),
                    "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  ::setenv("R2I_TEST_TOKEN", "tkn", 1);
  ModelEndpoint e = endpoint();
  e.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1/";
  e.token_env = "R2I_TEST_TOKEN";
  auto clock = std::make_shared<FakeClock>();
  HttpModelClient client(e, make_http_transport(), nullptr, clock);
  EXPECT_EQ(client.chat({"ping", "", {}}), "echo: ping");
  EXPECT_EQ(hits.load(), 3);
  EXPECT_EQ(seen_auth, "Bearer tkn");
  try {
    client.chat({"deny", "", {}});
    ADD_FAILURE();
  } catch (const TransportError& err) {
    EXPECT_EQ(err.status(), 401);
  }
  EXPECT_EQ(hits.load(), 4);
  server.stop();
  th.join();

  auto dead = make_http_transport()->post_json("http://127.0.0.1:" + std::to_string(port), "/x", "{}", {}, 1.0);
  EXPECT_EQ(dead.status, 0);
  EXPECT_FALSE(dead.error.empty());
}

TEST(RateLimiter, SlidingWindowOnFakeClock) {
  auto clock = std::make_shared<FakeClock>(100.0);
  RateLimiter limiter(3, clock);
  std::vector<double> grants;
  for (int i = 0; i < 7; ++i) {
    limiter.acquire();
    grants.push_back(clock->now());
    if (i == 1) clock->sleep_for(10.0);
  }
  EXPECT_EQ(grants, (std::vector<double>{100, 100, 110, 160, 160, 170, 220}));
  for (std::size_t i = 0; i + 3 < grants.size(); ++i) EXPECT_GE(grants[i + 3] - grants[i], 60.0);
  EXPECT_EQ(limiter.recent_grants(), (std::vector<double>{170, 220}));
  EXPECT_THROW(RateLimiter(0, clock), PreconditionError);
}

TEST(RateLimiter, ConcurrentAcquiresNeverExceedTheWindow) {
  auto clock = std::make_shared<FakeClock>();
  RateLimiter limiter(5, clock);
  std::mutex mu;
  std::vector<double> grants;
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&] {
      for (int i = 0; i < 6; ++i) {
        limiter.acquire();
        std::lock_guard lock(mu);
        grants.push_back(clock->now());
      }
    });
  }
  for (auto& t : threads) t.join();
  std::sort(grants.begin(), grants.end());
  ASSERT_EQ(grants.size(), 24u);
  for (std::size_t i = 0; i + 5 < grants.size(); ++i) EXPECT_GE(grants[i + 5] - grants[i], 60.0);
}

TEST(Cache, ContentAddressedAndImmutable) {
  TempDir dir;
  ResponseCache cache(dir / "c");
  const std::string k = sha256_hex("x");
  EXPECT_FALSE(cache.get(k));
  EXPECT_TRUE(cache.put(k, "first"));
  EXPECT_FALSE(cache.put(k, "second"));
  EXPECT_EQ(cache.get(k), "first");
  EXPECT_TRUE(fs::exists(dir / "c" / k.substr(0, 2) / (k + ".json")));
  EXPECT_EQ(cache.size(), 1u);
  EXPECT_THROW(cache.get("../etc/passwd"), PreconditionError);
  write_file_atomic(dir / "c" / k.substr(0, 2) / (k + ".json"), "{broken");
  EXPECT_FALSE(cache.get(k));
}

TEST(Cache, CachingClientServesRepeatsWithoutTheInnerClient) {
  TempDir dir;
  auto cache = std::make_shared<ResponseCache>(dir / "c");
  auto inner = std::make_shared<ScriptedClient>("teacher-a", [](const ChatRequest& r) { return "re: " + r.prompt; });
  CachingClient client(inner, cache);
  EXPECT_EQ(client.chat({"a", "", {}}), "re: a");
  EXPECT_EQ(client.chat({"a", "", {}}), "re: a");
  EXPECT_EQ(client.chat({"a", "", {1.0, 1024, 1}}), "re: a");
  EXPECT_EQ(inner->request_count(), 2u);
  EXPECT_EQ(client.endpoint_id(), "teacher-a");

  auto other = std::make_shared<ScriptedClient>("teacher-b", [](const ChatRequest&) { return std::string("b"); });
  CachingClient b(other, cache);
  EXPECT_EQ(b.chat({"a", "", {}}), "b");
}

}  // namespace
}  // namespace r2i
