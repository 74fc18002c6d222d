#include "tod/serve/http.hpp"

#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

namespace tod::serve {

namespace {

constexpr const char* kJson = "application/json";

void error(httplib::Response& res, int status, const std::string& message) {
  res.status = status;
  res.set_content(nlohmann::json{{"error", message}}.dump(), kJson);
}

template <typename Fn>
void handle(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const RequestError& e) {
    error(res, 400, e.what());
  } catch (const std::exception& e) {
    spdlog::error("request failed: {}", e.what());
    error(res, 500, e.what());
  }
}

}  // namespace

struct HttpServer::Impl {
  explicit Impl(Service& s) : service(s) {}
  Service& service;
  httplib::Server server;
};

HttpServer::HttpServer(Service& service) : impl_(std::make_unique<Impl>(service)) {
  auto& svc = impl_->service;
  auto& srv = impl_->server;

  srv.Get("/healthz", [&svc](const httplib::Request&, httplib::Response& res) {
    const auto snap = svc.snapshot();
    nlohmann::json j{{"status", "ok"},
                     {"snapshot_version", snap->version},
                     {"pool_size", snap->pool.templates.size()},
                     {"fingerprint", snap->fingerprint}};
    res.set_content(j.dump(), kJson);
  });

  srv.Post("/v1/rank", [&svc](const httplib::Request& req, httplib::Response& res) {
    handle(res, [&] { res.set_content(rank_response_to_json(svc.rank(rank_request_from_json(req.body))), kJson); });
  });

  srv.Post("/v1/feedback", [&svc](const httplib::Request& req, httplib::Response& res) {
    handle(res, [&] {
      const auto ack = svc.feedback(feedback_request_from_json(req.body));
      res.set_content(nlohmann::json{{"status", ack.recorded ? "recorded" : "duplicate"}}.dump(), kJson);
    });
  });

  srv.Get("/v1/templates", [&svc](const httplib::Request& req, httplib::Response& res) {
    handle(res, [&] {
      std::size_t limit = 20;
      if (req.has_param("limit")) {
        const auto text = req.get_param_value("limit");
        try {
          const long v = std::stol(text);
          if (v < 1) throw RequestError("limit must be at least 1");
          limit = std::size_t(v);
        } catch (const std::logic_error&) {
          throw RequestError("limit must be an integer");
        }
      }
      res.set_content(templates_to_json(svc.templates(req.get_param_value("q"), limit)), kJson);
    });
  });

  srv.Get(R"(/v1/session/([^/]+)/history)", [&svc](const httplib::Request& req, httplib::Response& res) {
    handle(res, [&] {
      const std::string id = req.matches[1];
      if (auto h = svc.history(id)) {
        res.set_content(history_to_json(*h), kJson);
      } else {
        error(res, 404, "unknown session " + id);
      }
    });
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw std::runtime_error("cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) {
    throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

bool HttpServer::running() const { return impl_->server.is_running(); }

}  // namespace tod::serve
