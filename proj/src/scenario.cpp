#include "lnr/scenario.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lnr/errors.hpp"
#include "lnr/service.hpp"

namespace lnr {

using nlohmann::json;

namespace {

std::optional<long long> parse_int(std::string_view s) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace

std::vector<ScenarioStep> parse_scenario(std::istream& in, const std::string& source) {
  std::vector<ScenarioStep> steps;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::vector<std::string> tok;
    for (std::string t; fields >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    if (tok.size() > 3) throw ParseError(source, line_no, "", "expected '<t_ms> <command> [duration_ms]'");

    ScenarioStep s;
    s.line = line_no;
    auto t = parse_int(tok[0]);
    if (!t || *t < 0) throw ParseError(source, line_no, "t_ms", "expected a non-negative integer, got '" + tok[0] + "'");
    s.at_ms = *t;
    auto c = parse_drive_command(tok[1]);
    if (!c) throw ParseError(source, line_no, "command", "unknown command '" + tok[1] + "'");
    s.command = *c;
    if (tok.size() == 3) {
      auto d = parse_int(tok[2]);
      if (!d || *d < 0) {
        throw ParseError(source, line_no, "duration_ms", "expected a non-negative integer, got '" + tok[2] + "'");
      }
      s.duration_ms = *d;
    }
    if (!steps.empty() && s.at_ms < steps.back().at_ms) {
      throw ParseError(source, line_no, "t_ms", "time goes backwards");
    }
    steps.push_back(s);
  }
  return steps;
}

std::vector<ScenarioStep> load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "", "cannot open file");
  return parse_scenario(in, path.string());
}

ScenarioResult run_scenario(const RobotConfig& cfg, const std::vector<ScenarioStep>& steps) {
  RobotConfig run_cfg = cfg;
  run_cfg.trace = true;
  MainUnit unit(run_cfg);
  service::Api api(unit, run_cfg.service);

  std::string telemetry;
  unit.on_telemetry([&](const TelemetryFrame& f) {
    telemetry += to_json(f).dump();
    telemetry += '\n';
  });

  for (const auto& s : steps) {
    unit.run_until(s.at_ms);
    json body = {{"command", to_string(s.command)}};
    if (s.duration_ms) body["duration_ms"] = *s.duration_ms;
    service::Request req{"POST", "/api/control/drive", {}, body.dump(), run_cfg.service.admin_token};
    auto resp = api.handle(req);
    if (resp.status != 202) {
      throw std::runtime_error("scenario line " + std::to_string(s.line) + ": drive rejected (" +
                               std::to_string(resp.status) + "): " + resp.body);
    }
  }
  if (!steps.empty()) {
    SimTime budget = 0;
    for (const auto& s : steps) budget += s.duration_ms.value_or(0);
    unit.run_until_idle(unit.now() + budget + run_cfg.timing.tick_ms);
    unit.run_for(kScenarioTailMs);
  }
  unit.finish();

  ScenarioResult r;
  r.path = unit.path();
  r.summary = nav::summarize(r.path);
  r.path_csv = nav::path_csv(r.path);
  r.telemetry_ndjson = std::move(telemetry);
  for (const auto& tr : unit.warning_log()) {
    r.warnings_ndjson += daps::to_json(tr).dump();
    r.warnings_ndjson += '\n';
  }
  TraceLog log;
  for (const auto& rec : unit.trace()) log.record(rec);
  std::ostringstream trace;
  log.write(trace);
  r.trace_log = trace.str();
  r.truth = unit.truth();
  r.commands = unit.commands();
  return r;
}

void write_artifacts(const ScenarioResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto put = [&](const char* name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::binary);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
  };
  put("path.csv", r.path_csv);
  put("telemetry.ndjson", r.telemetry_ndjson);
  put("warnings.ndjson", r.warnings_ndjson);
  put("trace.log", r.trace_log);
}

std::string_view to_string(DivergenceKind k) { return k == DivergenceKind::Sensor ? "sensor" : "protocol"; }

std::size_t ReplayReport::count(DivergenceKind k) const {
  std::size_t n = 0;
  for (const auto& d : divergences) n += d.kind == k;
  return n;
}

ReplayReport replay(const std::vector<TraceRecord>& trace, const WorldConfig& world) {
  ReplayReport report;
  Simulator sim(world);
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto& rec = trace[i];
    sim.advance_to(rec.t);
    ++report.records;
    if (rec.write) {
      sim.write(rec.reg, rec.value);
      continue;
    }
    ++report.reads_checked;
    const std::uint8_t got = sim.read(rec.reg);
    if (got == rec.value) continue;
    const auto kind = cmd::is_sensor_select(sim.registers().data) && rec.reg == Register::Status
                          ? DivergenceKind::Sensor
                          : DivergenceKind::Protocol;
    report.divergences.push_back({i, rec, got, kind});
  }
  return report;
}

std::string format_report(const ReplayReport& r) {
  std::ostringstream out;
  out << "records " << r.records << ", reads checked " << r.reads_checked << ", divergences "
      << r.divergences.size() << " (sensor " << r.count(DivergenceKind::Sensor) << ", protocol "
      << r.count(DivergenceKind::Protocol) << ")\n";
  for (const auto& d : r.divergences) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "#%zu t=%lld %s expected %02x got %02x [%s]\n", d.index,
                  static_cast<long long>(d.expected.t), std::string(to_string(d.expected.reg)).c_str(),
                  d.expected.value, d.actual, std::string(to_string(d.kind)).c_str());
    out << buf;
  }
  return out.str();
}

}  // namespace lnr
