#include <httplib.h>

#include <spdlog/spdlog.h>

#include "r2i/error.hpp"
#include "r2i/io.hpp"
#include "r2i/review.hpp"

namespace r2i {

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", message}});
}

json item_view(const BenchItem& item) {
  json j = to_json(item);
  j.erase("full_image");
  j.erase("crop_image");
  j["images"] = {{"full", "/items/" + item.item_id + "/image/full"},
                 {"crop", "/items/" + item.item_id + "/image/crop"}};
  return j;
}

std::string content_type_for(const fs::path& p) {
  const std::string ext = p.extension().string();
  return ext == ".png" || ext == ".PNG" ? "image/png" : "image/jpeg";
}

}  // namespace

struct ReviewServer::Impl {
  std::shared_ptr<ReviewStore> store;
  std::map<std::string, std::string> tokens;
  std::size_t page_size;
  httplib::Server server;

  std::optional<std::string> annotator(const httplib::Request& req) const {
    const std::string auth = req.get_header_value("Authorization");
    constexpr std::string_view prefix = "Bearer ";
    if (auth.size() <= prefix.size() || auth.compare(0, prefix.size(), prefix) != 0) return std::nullopt;
    const auto it = tokens.find(auth.substr(prefix.size()));
    if (it == tokens.end()) return std::nullopt;
    return it->second;
  }

  template <typename Fn>
  httplib::Server::Handler guarded(Fn fn) {
    return [this, fn](const httplib::Request& req, httplib::Response& res) {
      const auto who = annotator(req);
      if (!who) return send_error(res, 401, "missing or unknown bearer token");
      try {
        fn(*who, req, res);
      } catch (const NotFoundError& e) {
        send_error(res, 404, e.what());
      } catch (const ConflictError& e) {
        send_error(res, 409, e.what());
      } catch (const PreconditionError& e) {
        send_error(res, 400, e.what());
      } catch (const json::exception& e) {
        send_error(res, 400, e.what());
      } catch (const std::exception& e) {
        spdlog::error("review api: {}", e.what());
        send_error(res, 500, "internal error");
      }
    };
  }

  void routes() {
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Headers", "Authorization, Content-Type"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server.Get("/items", guarded([this](const std::string&, const httplib::Request& req, httplib::Response& res) {
      std::optional<ItemStatus> status;
      if (req.has_param("status")) {
        try {
          status = item_status_from_string(req.get_param_value("status"));
        } catch (const DataError& e) {
          return send_error(res, 400, e.what());
        }
      }
      std::size_t page = 1;
      std::size_t size = page_size;
      try {
        if (req.has_param("page")) page = std::stoul(req.get_param_value("page"));
        if (req.has_param("page_size")) size = std::stoul(req.get_param_value("page_size"));
      } catch (const std::exception&) {
        return send_error(res, 400, "page and page_size must be positive integers");
      }
      const ItemPage p = store->list(status, page, size);
      json items = json::array();
      for (const auto& item : p.items) items.push_back(item_view(item));
      send_json(res, 200, {{"items", items}, {"total", p.total}, {"page", p.page}, {"pages", p.pages}});
    }));

    server.Get(R"(/items/([^/]+))",
               guarded([this](const std::string&, const httplib::Request& req, httplib::Response& res) {
                 send_json(res, 200, item_view(store->get(req.matches[1].str())));
               }));

    server.Get(R"(/items/([^/]+)/image/([^/]+))",
               guarded([this](const std::string&, const httplib::Request& req, httplib::Response& res) {
                 const BenchItem item = store->get(req.matches[1].str());
                 const std::string view = req.matches[2].str();
                 if (view != "full" && view != "crop") return send_error(res, 404, "unknown view " + view);
                 const fs::path& path = view == "full" ? item.full_image : item.crop_image;
                 res.status = 200;
                 res.set_content(read_file(path), content_type_for(path));
               }));

    server.Post(R"(/items/([^/]+)/verdict)",
                guarded([this](const std::string& who, const httplib::Request& req, httplib::Response& res) {
                  const json body = json::parse(req.body);
                  for (const char* key : {"valid", "difficult", "correct"}) {
                    if (!body.contains(key) || !body[key].is_boolean()) {
                      return send_error(res, 400, std::string("verdict needs boolean '") + key + "'");
                    }
                  }
                  ReviewVerdict v;
                  v.annotator_id = who;
                  v.valid = body["valid"].get<bool>();
                  v.difficult = body["difficult"].get<bool>();
                  v.correct = body["correct"].get<bool>();
                  if (body.contains("comment") && body["comment"].is_string()) v.comment = body["comment"].get<std::string>();
                  const BenchItem item = store->submit(req.matches[1].str(), std::move(v));
                  send_json(res, 200, {{"item_id", item.item_id}, {"status", to_string(item.status)},
                                       {"verdicts", item.review.size()}});
                }));

    server.Post("/promote", guarded([this](const std::string&, const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, {{"promoted", store->promote_ready()}});
    }));
  }
};

ReviewServer::ReviewServer(std::shared_ptr<ReviewStore> store, std::map<std::string, std::string> tokens,
                           std::size_t page_size)
    : impl_(std::make_unique<Impl>()) {
  if (tokens.empty()) throw PreconditionError("review server needs at least one annotator token");
  impl_->store = std::move(store);
  impl_->tokens = std::move(tokens);
  impl_->page_size = page_size;
  impl_->routes();
}

ReviewServer::~ReviewServer() { stop(); }

int ReviewServer::start(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error("cannot bind review server to " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void ReviewServer::run(const std::string& host, int port) {
  if (!impl_->server.listen(host, port)) throw Error("cannot serve on " + host + ":" + std::to_string(port));
}

void ReviewServer::stop() {
  impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace r2i
