#include <httplib.h>

#include <regex>

#include "r2i/error.hpp"
#include "r2i/model_client.hpp"

namespace r2i {
namespace {

struct ParsedUrl {
  std::string scheme_host_port;
  std::string prefix;
};

ParsedUrl split_base_url(const std::string& base_url) {
  static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(base_url, m, re)) throw PreconditionError("invalid base_url: " + base_url);
  std::string prefix = m[2].matched ? m[2].str() : "";
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {m[1].str(), prefix};
}

class HttplibTransport final : public Transport {
 public:
  HttpResponse post_json(const std::string& base_url, const std::string& path, const std::string& body,
                         const std::vector<std::pair<std::string, std::string>>& headers,
                         double timeout_s) override {
    const ParsedUrl url = split_base_url(base_url);
    httplib::Client client(url.scheme_host_port);
    const auto secs = static_cast<time_t>(timeout_s);
    const auto usecs = static_cast<time_t>((timeout_s - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    httplib::Headers hdrs;
    for (const auto& [k, v] : headers) hdrs.emplace(k, v);
    auto res = client.Post(url.prefix + path, hdrs, body, "application/json");
    if (!res) return {0, {}, httplib::to_string(res.error())};
    return {res->status, res->body, {}};
  }
};

}  // namespace

std::shared_ptr<Transport> make_http_transport() { return std::make_shared<HttplibTransport>(); }

}  // namespace r2i
