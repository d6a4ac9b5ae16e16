// Headless scenario runs and trace replay.
#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lnr/config.hpp"
#include "lnr/main_unit.hpp"
#include "lnr/port_protocol.hpp"

namespace lnr {

struct ScenarioStep {
  SimTime at_ms = 0;
  DriveCommand command = DriveCommand::Stop;
  std::optional<SimTime> duration_ms;
  std::size_t line = 0;
};

// `<t_ms> <command> [duration_ms]` per line, '#' starts a comment.
// Throws ParseError with the line number.
std::vector<ScenarioStep> parse_scenario(std::istream& in, const std::string& source = "scenario");
std::vector<ScenarioStep> load_scenario(const std::filesystem::path& path);

struct ScenarioResult {
  std::string path_csv;
  std::string telemetry_ndjson;
  std::string warnings_ndjson;
  std::string trace_log;
  nav::PathLog path;
  nav::PathSummary summary;
  RobotState truth;
  std::vector<CommandRecord> commands;
};

// Quiet time simulated after the last command settles, so the final poll
// cycles and segment close land in the logs.
inline constexpr SimTime kScenarioTailMs = 500;

// Boots a main unit from `cfg` and submits each step through the API at its
// sim time. Deterministic for a fixed config.
ScenarioResult run_scenario(const RobotConfig& cfg, const std::vector<ScenarioStep>& steps);

// Writes path.csv, telemetry.ndjson, warnings.ndjson and trace.log.
void write_artifacts(const ScenarioResult& r, const std::filesystem::path& dir);

enum class DivergenceKind { Sensor, Protocol };
std::string_view to_string(DivergenceKind k);

struct Divergence {
  std::size_t index = 0;  // position in the trace
  TraceRecord expected;
  std::uint8_t actual = 0;
  DivergenceKind kind = DivergenceKind::Protocol;
};

struct ReplayReport {
  std::size_t records = 0;
  std::size_t reads_checked = 0;
  std::vector<Divergence> divergences;

  std::size_t count(DivergenceKind k) const;
};

// Replays host writes against a fresh simulator and compares every read.
// A read is classed as a sensor divergence when the device has an ADC
// select latched, otherwise as protocol.
ReplayReport replay(const std::vector<TraceRecord>& trace, const WorldConfig& world);

std::string format_report(const ReplayReport& r);

}  // namespace lnr
