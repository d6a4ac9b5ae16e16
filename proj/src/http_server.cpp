#include "lnr/http_server.hpp"

#include <chrono>
#include <charconv>

#include "httplib.h"
#include "lnr/errors.hpp"

namespace lnr::service {

ListenAddress parse_listen(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0) throw ValidationError("listen", "expected host:port, got '" + text + "'");
  ListenAddress a;
  a.host = text.substr(0, colon);
  const auto port = std::string_view(text).substr(colon + 1);
  auto [ptr, ec] = std::from_chars(port.data(), port.data() + port.size(), a.port);
  if (ec != std::errc{} || ptr != port.data() + port.size() || a.port < 0 || a.port > 65535) {
    throw ValidationError("listen", "bad port in '" + text + "'");
  }
  return a;
}

namespace {

Request to_request(const httplib::Request& in) {
  Request r;
  r.method = in.method;
  r.path = in.path;
  for (const auto& [k, v] : in.params) r.query.emplace(k, v);
  r.body = in.body;
  if (in.is_multipart_form_data()) {
    // Manifest uploads from a form: take the "manifest" part, else the first.
    r.body.clear();
    if (in.has_file("manifest")) {
      r.body = in.get_file_value("manifest").content;
    } else if (!in.files.empty()) {
      r.body = in.files.begin()->second.content;
    }
  }
  if (auto b = bearer_token(in.get_header_value("Authorization"))) {
    r.bearer = *b;
  } else if (in.has_param("access_token")) {
    // EventSource cannot set headers.
    r.bearer = in.get_param_value("access_token");
  }
  return r;
}

void send(httplib::Response& out, const Response& r) {
  out.status = r.status;
  out.set_content(r.body, r.content_type);
}

}  // namespace

HttpServer::HttpServer(MainUnit& unit, const ServiceConfig& cfg)
    : unit_(unit), cfg_(cfg), api_(unit, cfg), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

HttpServer::~HttpServer() { stop(); }

void HttpServer::install_routes() {
  auto& svr = *server_;

  svr.Get("/api/telemetry/stream", [this](const httplib::Request& in, httplib::Response& out) {
    auto auth = api_.authorize(to_request(in), Role::User);
    if (auto* denied = std::get_if<Response>(&auth)) return send(out, *denied);
    out.set_header("Cache-Control", "no-cache");
    auto last = std::make_shared<std::uint64_t>(0);
    out.set_chunked_content_provider("text/event-stream", [this, last](std::size_t, httplib::DataSink& sink) {
      if (!running_) return false;
      auto frame = unit_.wait_for_frame(*last, std::chrono::milliseconds(500));
      if (frame && frame->cycle > *last) {
        *last = frame->cycle;
        const std::string event = "id: " + std::to_string(frame->cycle) + "\ndata: " + to_json(*frame).dump() + "\n\n";
        if (!sink.write(event.data(), event.size())) return false;
      } else {
        static constexpr std::string_view keepalive = ": keepalive\n\n";
        if (!sink.write(keepalive.data(), keepalive.size())) return false;
      }
      return running_.load();
    });
  });

  auto dispatch = [this](const httplib::Request& in, httplib::Response& out) { send(out, api_.handle(to_request(in))); };
  svr.Get("/api/.*", dispatch);
  svr.Post("/api/.*", dispatch);
  svr.Put("/api/.*", dispatch);
  svr.Delete("/api/.*", dispatch);

  if (!cfg_.console_dir.empty()) svr.set_mount_point("/", cfg_.console_dir);
}

void HttpServer::pace_simulation() {
  using clock = std::chrono::steady_clock;
  const auto wall0 = clock::now();
  const SimTime sim0 = unit_.now();
  while (running_) {
    const double elapsed = std::chrono::duration<double, std::milli>(clock::now() - wall0).count();
    unit_.run_until(sim0 + static_cast<SimTime>(elapsed * cfg_.realtime_factor));
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
}

int HttpServer::start(const ListenAddress& addr) {
  if (running_) return port_;
  if (addr.port == 0) {
    port_ = server_->bind_to_any_port(addr.host);
  } else {
    port_ = server_->bind_to_port(addr.host, addr.port) ? addr.port : -1;
  }
  if (port_ < 0) throw TransportError("cannot bind " + addr.host + ":" + std::to_string(addr.port));
  running_ = true;
  listener_ = std::thread([this] { server_->listen_after_bind(); });
  sim_thread_ = std::thread([this] { pace_simulation(); });
  server_->wait_until_ready();
  return port_;
}

void HttpServer::stop() {
  if (!running_.exchange(false)) return;
  server_->stop();
  if (listener_.joinable()) listener_.join();
  if (sim_thread_.joinable()) sim_thread_.join();
}

}  // namespace lnr::service
