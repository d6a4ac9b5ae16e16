// Host-side parallel-port driver: command writes, strobe sequencing and nibble
// assembly exactly as the main unit's C driver does it.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lnr/hw_sim.hpp"

namespace lnr {

enum class DriveCommand : std::uint8_t { Forward, Backward, TurnLeft, TurnRight, Stop };

inline constexpr std::array<DriveCommand, 5> kAllDriveCommands = {
    DriveCommand::Forward, DriveCommand::Backward, DriveCommand::TurnLeft, DriveCommand::TurnRight,
    DriveCommand::Stop};

std::uint8_t command_byte(DriveCommand c);
std::optional<DriveCommand> drive_command_from_byte(std::uint8_t b);
std::string_view to_string(DriveCommand c);
// Accepts forward/backward/left/right/stop plus turn_left/turn_right, any case.
std::optional<DriveCommand> parse_drive_command(std::string_view text);

struct CompassReading {
  std::uint8_t raw = 0;
  double degrees = 0.0;
};

double compass_degrees(std::uint8_t raw);
inline constexpr double kCompassQuantumDeg = 360.0 / 256.0;

struct TickDeltas {
  std::uint32_t left = 0;
  std::uint32_t right = 0;
};

// Byte delta modulo 256, as seen by a reader that polls within 255 ticks.
inline std::uint32_t wrapping_delta(std::uint8_t previous, std::uint8_t current) {
  return static_cast<std::uint8_t>(current - previous);
}

// One register transaction as written to the conformance trace.
struct TraceRecord {
  SimTime t = 0;
  Register reg = Register::Data;
  bool write = false;
  std::uint8_t value = 0;
};

std::string format_trace_record(const TraceRecord& r);
// Throws ParseError naming `line_no` on malformed input.
TraceRecord parse_trace_record(std::string_view line, std::size_t line_no,
                               const std::string& source = "trace");

inline constexpr std::string_view kTraceHeader = "# lnr-trace v1 (t_ms register R|W hex)";

class TraceLog {
 public:
  void record(const TraceRecord& r) { records_.push_back(r); }
  const std::vector<TraceRecord>& records() const { return records_; }
  void write(std::ostream& os) const;
  void clear() { records_.clear(); }

 private:
  std::vector<TraceRecord> records_;
};

std::vector<TraceRecord> read_trace(std::istream& is, const std::string& source);

// Register bus as seen by the host. `settle` lets simulated time pass.
class Bus {
 public:
  virtual ~Bus() = default;
  virtual std::uint8_t read(Register r) = 0;
  virtual void write(Register r, std::uint8_t value) = 0;
  virtual void settle(SimTime ms) = 0;
  virtual SimTime now() const = 0;
  virtual bool attached() const = 0;
};

// Bus backed by an in-process Simulator.
class SimBus final : public Bus {
 public:
  explicit SimBus(Simulator& sim) : sim_(&sim) {}

  std::uint8_t read(Register r) override;
  void write(Register r, std::uint8_t value) override;
  void settle(SimTime ms) override;
  SimTime now() const override;
  bool attached() const override { return sim_ != nullptr; }

  void detach() { sim_ = nullptr; }
  void attach(Simulator& sim) { sim_ = &sim; }

 private:
  Simulator& sim();
  Simulator* sim_;
};

struct DriverConfig {
  // Mirrors the usleep(5000) between port phases.
  SimTime settle_ms = 5;
};

class PortDriver {
 public:
  PortDriver(Bus& bus, DriverConfig cfg = {}, TraceLog* trace = nullptr)
      : bus_(bus), cfg_(cfg), trace_(trace) {}

  // Motion commands need no feedback: write, settle, done.
  void send_command(DriveCommand c);

  // Two-phase nibble read of the byte latched by `select_command`.
  std::uint8_t read_nibble_byte(std::uint8_t select_command);

  CompassReading read_compass();

  // Reads both wheel-counter bytes and folds them into the wide counters.
  TickDeltas read_wheel_ticks();
  TickDeltas accumulate_ticks(std::uint8_t left_byte, std::uint8_t right_byte);

  // Captures an ADC frame and reads all five 10-bit channels.
  SensorReadings read_sensors();
  void capture_sensors();
  std::uint16_t read_sensor(std::size_t channel);

  std::uint64_t left_total() const { return left_total_; }
  std::uint64_t right_total() const { return right_total_; }
  const DriverConfig& config() const { return cfg_; }

 private:
  std::uint8_t in(Register r);
  void out(Register r, std::uint8_t value);
  void require_attached() const;

  Bus& bus_;
  DriverConfig cfg_;
  TraceLog* trace_;
  std::uint8_t prev_left_ = 0;
  std::uint8_t prev_right_ = 0;
  std::uint64_t left_total_ = 0;
  std::uint64_t right_total_ = 0;
};

}  // namespace lnr
