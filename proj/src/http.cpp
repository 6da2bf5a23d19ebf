// Eigen must come first: <resolv.h>, pulled in by httplib, defines _res.
#include "docmap/error.hpp"
#include "docmap/service.hpp"

#include <httplib.h>

namespace docmap::service {

struct HttpServer::Impl {
  SessionManager& manager;
  httplib::Server server;

  explicit Impl(SessionManager& m) : manager(m) {
    auto handler = [this](const httplib::Request& req, httplib::Response& res) {
      const auto out = manager.handle(req.method, req.path, req.body);
      res.status = out.status;
      res.set_content(out.body.dump(), "application/json");
    };
    server.Post(R"(/sessions(/.*)?)", handler);
    server.Patch(R"(/sessions(/.*)?)", handler);
    server.Get(R"(/sessions(/.*)?)", handler);
  }
};

HttpServer::HttpServer(SessionManager& manager) : impl_(std::make_unique<Impl>(manager)) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace docmap::service
