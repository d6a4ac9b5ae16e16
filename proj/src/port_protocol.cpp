#include "lnr/port_protocol.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "lnr/errors.hpp"

namespace lnr {

std::uint8_t command_byte(DriveCommand c) {
  switch (c) {
    case DriveCommand::Forward: return cmd::kForward;
    case DriveCommand::Backward: return cmd::kBackward;
    case DriveCommand::TurnLeft: return cmd::kTurnLeft;
    case DriveCommand::TurnRight: return cmd::kTurnRight;
    case DriveCommand::Stop: return cmd::kStop;
  }
  return cmd::kStop;
}

std::optional<DriveCommand> drive_command_from_byte(std::uint8_t b) {
  for (auto c : kAllDriveCommands) {
    if (command_byte(c) == b) return c;
  }
  return std::nullopt;
}

std::string_view to_string(DriveCommand c) {
  switch (c) {
    case DriveCommand::Forward: return "forward";
    case DriveCommand::Backward: return "backward";
    case DriveCommand::TurnLeft: return "left";
    case DriveCommand::TurnRight: return "right";
    case DriveCommand::Stop: return "stop";
  }
  return "stop";
}

std::optional<DriveCommand> parse_drive_command(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  if (lower == "turn_left" || lower == "turnleft") return DriveCommand::TurnLeft;
  if (lower == "turn_right" || lower == "turnright") return DriveCommand::TurnRight;
  for (auto c : kAllDriveCommands) {
    if (to_string(c) == lower) return c;
  }
  return std::nullopt;
}

double compass_degrees(std::uint8_t raw) { return static_cast<double>(raw) * 360.0 / 256.0; }

std::string format_trace_record(const TraceRecord& r) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%lld %s %c %02x", static_cast<long long>(r.t),
                std::string(to_string(r.reg)).c_str(), r.write ? 'W' : 'R', r.value);
  return buf;
}

TraceRecord parse_trace_record(std::string_view line, std::size_t line_no,
                               const std::string& source) {
  std::istringstream is{std::string(line)};
  long long t = 0;
  std::string reg, dir, hex, extra;
  if (!(is >> t >> reg >> dir >> hex) || (is >> extra)) {
    throw ParseError(source, line_no, "", "expected '<t_ms> <register> <R|W> <hex>'");
  }
  TraceRecord r;
  r.t = t;
  auto parsed_reg = parse_register(reg);
  if (!parsed_reg) throw ParseError(source, line_no, "register", "unknown register '" + reg + "'");
  r.reg = *parsed_reg;
  if (dir == "W") {
    r.write = true;
  } else if (dir != "R") {
    throw ParseError(source, line_no, "direction", "expected R or W, got '" + dir + "'");
  }
  unsigned value = 0;
  auto [ptr, ec] = std::from_chars(hex.data(), hex.data() + hex.size(), value, 16);
  if (ec != std::errc{} || ptr != hex.data() + hex.size() || value > 0xFF || hex.size() > 2) {
    throw ParseError(source, line_no, "value", "expected a hex byte, got '" + hex + "'");
  }
  r.value = static_cast<std::uint8_t>(value);
  return r;
}

void TraceLog::write(std::ostream& os) const {
  os << kTraceHeader << '\n';
  for (const auto& r : records_) os << format_trace_record(r) << '\n';
}

std::vector<TraceRecord> read_trace(std::istream& is, const std::string& source) {
  std::vector<TraceRecord> out;
  std::string line;
  std::size_t line_no = 0;
  SimTime last_t = 0;
  while (std::getline(is, line)) {
    ++line_no;
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    auto r = parse_trace_record(line, line_no, source);
    if (r.t < last_t) throw ParseError(source, line_no, "t_ms", "timestamps must not decrease");
    last_t = r.t;
    out.push_back(r);
  }
  return out;
}

Simulator& SimBus::sim() {
  if (!sim_) throw TransportError("parallel port bus detached");
  return *sim_;
}

std::uint8_t SimBus::read(Register r) { return sim().read(r); }
void SimBus::write(Register r, std::uint8_t value) { sim().write(r, value); }
void SimBus::settle(SimTime ms) { sim().advance(ms); }
SimTime SimBus::now() const { return sim_ ? sim_->now() : 0; }

void PortDriver::require_attached() const {
  if (!bus_.attached()) throw TransportError("parallel port bus detached");
}

std::uint8_t PortDriver::in(Register r) {
  std::uint8_t v = bus_.read(r);
  if (trace_) trace_->record({bus_.now(), r, false, v});
  return v;
}

void PortDriver::out(Register r, std::uint8_t value) {
  bus_.write(r, value);
  if (trace_) trace_->record({bus_.now(), r, true, value});
}

void PortDriver::send_command(DriveCommand c) {
  require_attached();
  out(Register::Data, command_byte(c));
  bus_.settle(cfg_.settle_ms);
}

std::uint8_t PortDriver::read_nibble_byte(std::uint8_t select_command) {
  require_attached();
  out(Register::Data, select_command);
  bus_.settle(cfg_.settle_ms);

  // Strobe bit set: device presents the low nibble on status 7..4.
  out(Register::Control, static_cast<std::uint8_t>(in(Register::Control) | 0x01));
  bus_.settle(cfg_.settle_ms);
  std::uint8_t input = static_cast<std::uint8_t>(in(Register::Status) & 0xF0);
  input = static_cast<std::uint8_t>(input >> 4);

  // Strobe bit cleared: high nibble. The original listing comments this phase
  // as "strobe = 1"; the code clears bit 0 and that is what we follow.
  out(Register::Control, static_cast<std::uint8_t>(in(Register::Control) & 0xFE));
  bus_.settle(cfg_.settle_ms);
  input = static_cast<std::uint8_t>(input | (in(Register::Status) & 0xF0));

  // Undo the inverted BUSY line, which lands on bit 3 and bit 7.
  return static_cast<std::uint8_t>(input ^ 0x88);
}

CompassReading PortDriver::read_compass() {
  const std::uint8_t raw = read_nibble_byte(cmd::kReadCompass);
  return {raw, compass_degrees(raw)};
}

TickDeltas PortDriver::accumulate_ticks(std::uint8_t left_byte, std::uint8_t right_byte) {
  TickDeltas d{wrapping_delta(prev_left_, left_byte), wrapping_delta(prev_right_, right_byte)};
  prev_left_ = left_byte;
  prev_right_ = right_byte;
  left_total_ += d.left;
  right_total_ += d.right;
  return d;
}

TickDeltas PortDriver::read_wheel_ticks() {
  const std::uint8_t left = read_nibble_byte(cmd::kReadLeftTicks);
  const std::uint8_t right = read_nibble_byte(cmd::kReadRightTicks);
  return accumulate_ticks(left, right);
}

void PortDriver::capture_sensors() {
  require_attached();
  out(Register::Data, cmd::kCaptureSensors);
  bus_.settle(cfg_.settle_ms);
}

std::uint16_t PortDriver::read_sensor(std::size_t channel) {
  const auto ch = static_cast<std::uint8_t>(channel);
  const std::uint8_t low = read_nibble_byte(static_cast<std::uint8_t>(cmd::kSensorLowBase + ch));
  const std::uint8_t high = read_nibble_byte(static_cast<std::uint8_t>(cmd::kSensorHighBase + ch));
  return static_cast<std::uint16_t>(((high & 0x03) << 8) | low);
}

SensorReadings PortDriver::read_sensors() {
  capture_sensors();
  SensorReadings out{};
  for (std::size_t i = 0; i < kSensorCount; ++i) out[i] = read_sensor(i);
  return out;
}

}  // namespace lnr
