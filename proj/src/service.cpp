#include "lnr/service.hpp"

#include <charconv>
#include <cmath>

#include "lnr/errors.hpp"

namespace lnr::service {

using nlohmann::json;

std::string_view to_string(Role r) { return r == Role::Admin ? "admin" : "user"; }

std::optional<Role> parse_role(std::string_view text) {
  if (text == "admin") return Role::Admin;
  if (text == "user") return Role::User;
  return std::nullopt;
}

PrincipalRegistry::PrincipalRegistry(const std::string& admin_token) {
  if (!admin_token.empty()) by_token_[admin_token] = {admin_token, Role::Admin, "admin"};
}

bool PrincipalRegistry::add(Principal p) {
  std::lock_guard lock(mu_);
  return by_token_.emplace(p.token, p).second;
}

std::optional<Principal> PrincipalRegistry::find(const std::string& token) const {
  std::lock_guard lock(mu_);
  auto it = by_token_.find(token);
  if (it == by_token_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::string> bearer_token(std::string_view header) {
  constexpr std::string_view prefix = "Bearer ";
  if (header.size() <= prefix.size() || header.substr(0, prefix.size()) != prefix) return std::nullopt;
  auto token = header.substr(prefix.size());
  while (!token.empty() && token.front() == ' ') token.remove_prefix(1);
  while (!token.empty() && (token.back() == ' ' || token.back() == '\r')) token.remove_suffix(1);
  if (token.empty()) return std::nullopt;
  return std::string(token);
}

Response json_response(int status, const json& body) { return {status, "application/json", body.dump()}; }

Response error_response(int status, const std::string& message) {
  return json_response(status, {{"error", message}});
}

const std::vector<RouteInfo>& Api::routes() {
  static const std::vector<RouteInfo> table = {
      {"GET", "/api/info", std::nullopt},
      {"POST", "/api/control/drive", Role::User},
      {"GET", "/api/telemetry", Role::User},
      {"GET", "/api/telemetry/stream", Role::User},
      {"GET", "/api/path", Role::User},
      {"GET", "/api/data/{sensor}", Role::User},
      {"GET", "/api/events", Role::User},
      {"GET", "/api/warnings", Role::User},
      {"POST", "/api/admin/daps", Role::Admin},
      {"POST", "/api/admin/dsp/retune", Role::Admin},
      {"POST", "/api/admin/users", Role::Admin},
      {"GET", "/api/admin/audit", Role::Admin},
  };
  return table;
}

Api::Api(MainUnit& unit, const ServiceConfig& cfg)
    : unit_(unit), cfg_(cfg), principals_(cfg.admin_token) {}

std::variant<Principal, Response> Api::authorize(const Request& req, Role min_role) const {
  if (!req.bearer) return error_response(401, "missing bearer token");
  auto who = principals_.find(*req.bearer);
  if (!who) return error_response(401, "invalid token");
  if (min_role == Role::Admin && who->role != Role::Admin) return error_response(403, "admin role required");
  return *who;
}

Response Api::handle(const Request& req) {
  constexpr std::string_view data_prefix = "/api/data/";
  const RouteInfo* route = nullptr;
  std::string sensor;
  bool path_known = false;
  for (const auto& r : routes()) {
    bool match = r.path == req.path;
    if (!match && r.path == "/api/data/{sensor}" && req.path.size() > data_prefix.size() &&
        req.path.compare(0, data_prefix.size(), data_prefix) == 0 &&
        req.path.find('/', data_prefix.size()) == std::string::npos) {
      match = true;
      sensor = req.path.substr(data_prefix.size());
    }
    if (!match) continue;
    path_known = true;
    if (r.method == req.method) {
      route = &r;
      break;
    }
  }
  if (!route) return error_response(path_known ? 405 : 404, "no route for " + req.method + " " + req.path);

  if (!route->min_role) return info();

  auto auth = authorize(req, *route->min_role);
  if (auto* denied = std::get_if<Response>(&auth)) return *denied;
  const auto& who = std::get<Principal>(auth);

  try {
    const std::string& p = route->path;
    if (p == "/api/control/drive") return drive(req, who);
    if (p == "/api/telemetry") return telemetry();
    if (p == "/api/telemetry/stream") return error_response(400, "the event stream needs the HTTP transport");
    if (p == "/api/path") return path(req);
    if (p == "/api/data/{sensor}") return data(req, sensor);
    if (p == "/api/events") return events();
    if (p == "/api/warnings") return warnings();
    if (p == "/api/admin/daps") return install(req, who);
    if (p == "/api/admin/dsp/retune") return retune(req, who);
    if (p == "/api/admin/users") return add_user(req, who);
    if (p == "/api/admin/audit") return audit_log();
  } catch (const std::exception& e) {
    return error_response(500, e.what());
  }
  return error_response(404, "no route");
}

Response Api::info() const {
  const auto& world = unit_.config().world;
  json sensors = json::array();
  for (const auto& sp : unit_.config().profile.sensors) {
    sensors.push_back({{"id", to_string(sp.id)}, {"unit", sp.unit}, {"calibration", daps::to_json(sp.calibration)}});
  }
  json packages = json::array();
  for (const auto& m : unit_.registry().snapshot()->packages) {
    packages.push_back({{"name", m.name}, {"version", m.version.str()}, {"description", m.description}});
  }
  return json_response(200, {{"name", kServiceName},
                             {"version", kServiceVersion},
                             {"hardware_profile",
                              {{"wheel_radius_m", world.wheel_radius},
                               {"track_width_m", world.track_width},
                               {"wheel_speed_mps", world.wheel_speed},
                               {"ticks_per_revolution", world.ticks_per_revolution},
                               {"port_base", kPortBase},
                               {"sensors", sensors}}},
                             {"packages", packages}});
}

namespace {

std::optional<json> parse_body(const Request& req) {
  try {
    return json::parse(req.body);
  } catch (const json::parse_error&) {
    return std::nullopt;
  }
}

std::optional<double> query_number(const Request& req, const std::string& key) {
  auto it = req.query.find(key);
  if (it == req.query.end()) return std::nullopt;
  double v = 0;
  const auto& s = it->second;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ValidationError(key, "expected a number, got '" + s + "'");
  }
  return v;
}

}  // namespace

Response Api::drive(const Request& req, const Principal& who) {
  auto body = parse_body(req);
  if (!body || !body->is_object()) return error_response(400, "expected a JSON object");
  if (!body->contains("command") || !(*body)["command"].is_string()) {
    return error_response(422, "command: expected one of forward, backward, left, right, stop");
  }
  const auto text = (*body)["command"].get<std::string>();
  auto c = parse_drive_command(text);
  if (!c) return error_response(422, "command: unknown command '" + text + "'");
  std::optional<SimTime> duration;
  if (body->contains("duration_ms") && !(*body)["duration_ms"].is_null()) {
    const json& d = (*body)["duration_ms"];
    if (!d.is_number_integer() || d.get<long long>() < 0) {
      return error_response(422, "duration_ms: expected a non-negative integer");
    }
    duration = d.get<SimTime>();
  }
  try {
    const auto id = unit_.submit_drive(*c, duration, who.name);
    return json_response(202, {{"id", id},
                               {"command", to_string(*c)},
                               {"duration_ms", duration ? json(*duration) : json(nullptr)},
                               {"submitted_at_ms", unit_.now()}});
  } catch (const QueueFullError& e) {
    return error_response(409, e.what());
  }
}

Response Api::telemetry() const { return json_response(200, to_json(*unit_.telemetry())); }

Response Api::path(const Request& req) const {
  const auto log = unit_.path();
  auto fmt = req.query.find("format");
  if (fmt != req.query.end() && fmt->second == "csv") return {200, "text/csv", nav::path_csv(log)};
  return json_response(200, to_json(log));
}

Response Api::data(const Request& req, const std::string& sensor) const {
  auto id = parse_sensor_id(sensor);
  if (!id || !unit_.config().profile.find(*id)) return error_response(404, "unknown sensor '" + sensor + "'");
  try {
    const double t1 = query_number(req, "t1").value_or(0.0);
    const double t2 = query_number(req, "t2").value_or(to_seconds(unit_.now()));
    const double stride_d = query_number(req, "stride").value_or(1.0);
    if (stride_d < 1 || stride_d != std::floor(stride_d)) throw ValidationError("stride", "must be an integer >= 1");
    if (t1 > t2) throw ValidationError("t1", "must not exceed t2");
    const auto stride = static_cast<std::size_t>(stride_d);
    json buckets = json::array();
    for (const auto& b : unit_.store().query(*id, t1, t2, stride)) {
      buckets.push_back({{"t", b.t}, {"raw", b.raw}, {"value", b.value}, {"min", b.min}, {"max", b.max}, {"count", b.count}});
    }
    return json_response(200, {{"sensor", sensor},
                               {"unit", unit_.dsp().channel(*id).unit},
                               {"t1", t1},
                               {"t2", t2},
                               {"stride", stride},
                               {"buckets", buckets}});
  } catch (const ValidationError& e) {
    return error_response(422, e.what());
  }
}

Response Api::events() const {
  json out = json::array();
  for (const auto& r : unit_.commands()) out.push_back(to_json(r));
  return json_response(200, {{"commands", out}});
}

Response Api::warnings() const {
  json log = json::array();
  for (const auto& tr : unit_.warning_log()) log.push_back(daps::to_json(tr));
  json active = json::array();
  for (const auto& e : unit_.active_warnings()) active.push_back(daps::to_json(e));
  return json_response(200, {{"transitions", log}, {"active", active}});
}

void Api::record(const Principal& who, std::string action, const Response& outcome) {
  std::string result = std::to_string(outcome.status);
  if (outcome.status >= 400) {
    try {
      result += " " + json::parse(outcome.body).value("error", "");
    } catch (const json::parse_error&) {
    }
  }
  std::lock_guard lock(audit_mu_);
  audit_.push_back({to_seconds(unit_.now()), who.name, std::move(action), std::move(result)});
}

Response Api::install(const Request& req, const Principal& who) {
  Response out;
  std::string action = "daps.install";
  try {
    auto manifest = daps::parse_manifest(req.body, "upload");
    action += " " + manifest.name + "@" + manifest.version.str();
    auto result = unit_.registry().install(std::move(manifest), to_seconds(unit_.now()), who.name);
    out = json_response(200, {{"installed", {{"name", result.name}, {"version", result.version.str()}}},
                              {"superseded", result.superseded ? json(result.superseded->str()) : json(nullptr)},
                              {"generation", result.generation}});
  } catch (const ParseError& e) {
    // Syntax errors carry a line; schema errors carry the field path.
    out = error_response(e.line() > 0 ? 400 : 422, e.what());
  } catch (const ValidationError& e) {
    out = error_response(422, e.what());
  } catch (const VersionConflictError& e) {
    out = error_response(409, e.what());
  }
  record(who, action, out);
  return out;
}

Response Api::retune(const Request& req, const Principal& who) {
  Response out;
  std::string action = "dsp.retune";
  try {
    auto body = parse_body(req);
    if (!body || !body->is_object()) throw ParseError("retune", 0, "", "expected a JSON object");
    if (!body->contains("sensor") || !(*body)["sensor"].is_string()) throw ValidationError("sensor", "expected a string");
    const auto sensor = (*body)["sensor"].get<std::string>();
    action += " " + sensor;
    auto id = parse_sensor_id(sensor);
    if (!id || !unit_.config().profile.find(*id)) throw NotFoundError("unknown sensor '" + sensor + "'");
    const auto current = unit_.dsp().channel(*id);
    auto filters = current.filters;
    if (body->contains("filters")) filters = daps::filters_from_json((*body)["filters"], "filters");
    auto cal = current.calibration;
    if (body->contains("calibration")) cal = daps::calibration_from_json((*body)["calibration"], "calibration.");
    unit_.dsp().retune(sensor, filters, cal, to_seconds(unit_.now()));
    out = json_response(200, {{"sensor", sensor}, {"applied", true}});
  } catch (const ParseError& e) {
    out = error_response(400, e.what());
  } catch (const NotFoundError& e) {
    out = error_response(404, e.what());
  } catch (const ValidationError& e) {
    out = error_response(422, e.what());
  }
  record(who, action, out);
  return out;
}

Response Api::add_user(const Request& req, const Principal& who) {
  Response out;
  std::string action = "users.add";
  auto body = parse_body(req);
  if (!body || !body->is_object()) {
    out = error_response(400, "expected a JSON object");
  } else if (!body->contains("token") || !(*body)["token"].is_string() || (*body)["token"].get<std::string>().empty()) {
    out = error_response(422, "token: expected a non-empty string");
  } else if (!body->contains("role") || !(*body)["role"].is_string() ||
             !parse_role((*body)["role"].get<std::string>())) {
    out = error_response(422, "role: expected admin or user");
  } else {
    Principal p;
    p.token = (*body)["token"].get<std::string>();
    p.role = *parse_role((*body)["role"].get<std::string>());
    p.name = body->value("name", std::string(to_string(p.role)) + "-" + p.token.substr(0, 4));
    action += " " + p.name;
    if (principals_.add(p)) {
      out = json_response(201, {{"name", p.name}, {"role", to_string(p.role)}});
    } else {
      out = error_response(409, "token already registered");
    }
  }
  record(who, action, out);
  return out;
}

Response Api::audit_log() const {
  json out = json::array();
  {
    std::lock_guard lock(audit_mu_);
    for (const auto& a : audit_) {
      out.push_back({{"t", a.t}, {"principal", a.principal}, {"action", a.action}, {"outcome", a.outcome}});
    }
  }
  json retunes = json::array();
  for (const auto& r : unit_.dsp().audit_log()) {
    retunes.push_back({{"t", r.t}, {"sensor", r.sensor}, {"detail", r.detail}});
  }
  return json_response(200, {{"admin", out}, {"dsp_retunes", retunes}});
}

std::vector<AuditRecord> Api::audit() const {
  std::lock_guard lock(audit_mu_);
  return audit_;
}

}  // namespace lnr::service
