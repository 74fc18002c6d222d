#pragma once

#include "tod/serve/service.hpp"

#include <memory>
#include <string>

namespace tod::serve {

// JSON-over-HTTP front end for a Service. Routes:
//   POST /v1/rank, POST /v1/feedback, GET /v1/templates?q=&limit=,
//   GET /v1/session/{id}/history, GET /healthz
class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Binds and returns the port; port 0 picks a free one.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void listen();
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Environment variable naming the feedback log file.
inline constexpr const char* kFeedbackLogEnv = "TOD_FEEDBACK_LOG";

}  // namespace tod::serve
