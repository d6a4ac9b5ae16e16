// HTTP transport for the main-unit API plus the wall-clock pacing thread.
#pragma once

#include <atomic>
#include <memory>
#include <string>
#include <thread>

#include "lnr/service.hpp"

namespace httplib {
class Server;
}

namespace lnr::service {

struct ListenAddress {
  std::string host;
  int port = 0;
};

// "host:port"; port 0 asks for an ephemeral port. Throws ValidationError.
ListenAddress parse_listen(const std::string& text);

class HttpServer {
 public:
  HttpServer(MainUnit& unit, const ServiceConfig& cfg);
  ~HttpServer();

  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Binds, starts the listener and the sim pacing thread. Returns the bound port.
  int start(const ListenAddress& addr);
  void stop();

  Api& api() { return api_; }
  int port() const { return port_; }

 private:
  void install_routes();
  void pace_simulation();

  MainUnit& unit_;
  ServiceConfig cfg_;
  Api api_;
  std::unique_ptr<httplib::Server> server_;
  std::thread listener_;
  std::thread sim_thread_;
  std::atomic<bool> running_{false};
  int port_ = 0;
};

}  // namespace lnr::service
