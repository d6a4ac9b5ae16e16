// Main-unit web API, independent of the HTTP transport. Handlers take a
// parsed request and return status + body; the HTTP server and the headless
// scenario runner both go through here.
#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "lnr/config.hpp"
#include "lnr/main_unit.hpp"

namespace lnr::service {

enum class Role { User, Admin };
std::string_view to_string(Role r);
std::optional<Role> parse_role(std::string_view text);

struct Principal {
  std::string token;
  Role role = Role::User;
  std::string name;
};

class PrincipalRegistry {
 public:
  explicit PrincipalRegistry(const std::string& admin_token);

  // False when the token is already registered.
  bool add(Principal p);
  std::optional<Principal> find(const std::string& token) const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, Principal> by_token_;
};

struct Request {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
  std::optional<std::string> bearer;
};

struct Response {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

struct RouteInfo {
  std::string method;
  std::string path;  // {sensor} marks the path parameter
  std::optional<Role> min_role;
};

struct AuditRecord {
  double t = 0.0;
  std::string principal;
  std::string action;
  std::string outcome;
};

inline constexpr std::string_view kServiceName = "lnr-main-unit";
inline constexpr std::string_view kServiceVersion = "1.0.0";

// Extracts the token from "Authorization: Bearer <token>".
std::optional<std::string> bearer_token(std::string_view authorization_header);

class Api {
 public:
  Api(MainUnit& unit, const ServiceConfig& cfg);

  Response handle(const Request& req);

  // Resolves the caller or produces the 401/403 response to send instead.
  std::variant<Principal, Response> authorize(const Request& req, Role min_role) const;

  std::vector<AuditRecord> audit() const;
  MainUnit& unit() { return unit_; }

  static const std::vector<RouteInfo>& routes();

 private:
  Response info() const;
  Response drive(const Request& req, const Principal& who);
  Response telemetry() const;
  Response path(const Request& req) const;
  Response data(const Request& req, const std::string& sensor) const;
  Response events() const;
  Response warnings() const;
  Response install(const Request& req, const Principal& who);
  Response retune(const Request& req, const Principal& who);
  Response add_user(const Request& req, const Principal& who);
  Response audit_log() const;

  void record(const Principal& who, std::string action, const Response& outcome);

  MainUnit& unit_;
  ServiceConfig cfg_;
  PrincipalRegistry principals_;
  mutable std::mutex audit_mu_;
  std::vector<AuditRecord> audit_;
};

Response json_response(int status, const nlohmann::json& body);
Response error_response(int status, const std::string& message);

}  // namespace lnr::service
