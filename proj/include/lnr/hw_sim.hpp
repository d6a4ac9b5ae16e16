// Emulated LNR hardware: differential-drive world, parallel-port registers and
// the microcontroller that sits on the other side of them.
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace lnr {

// Simulation time is integer milliseconds; the physics grid is 1 ms.
using SimTime = std::int64_t;

inline double to_seconds(SimTime ms) { return static_cast<double>(ms) / 1000.0; }

enum class Motor : std::uint8_t { Stopped, Forward, Backward };

std::string_view to_string(Motor m);

// Sensor order is fixed: it doubles as the ADC channel index on the device.
enum class SensorId : std::uint8_t { Co = 0, No, Smoke, Temperature, Humidity };
inline constexpr std::size_t kSensorCount = 5;
inline constexpr std::array<SensorId, kSensorCount> kAllSensors = {
    SensorId::Co, SensorId::No, SensorId::Smoke, SensorId::Temperature, SensorId::Humidity};

std::string_view to_string(SensorId id);
std::optional<SensorId> parse_sensor_id(std::string_view name);

using SensorReadings = std::array<std::uint16_t, kSensorCount>;

inline constexpr std::uint16_t kAdcMax = 1023;

// Register indices relative to the 0x378 base: data, status, control.
enum class Register : std::uint8_t { Data = 0, Status = 1, Control = 2 };
inline constexpr std::uint16_t kPortBase = 0x378;

std::string_view to_string(Register r);
std::optional<Register> parse_register(std::string_view name);

// Command bytes understood by the emulated microcontroller.
namespace cmd {
inline constexpr std::uint8_t kStop = 0x00;
inline constexpr std::uint8_t kForward = 0x01;
inline constexpr std::uint8_t kBackward = 0x02;
inline constexpr std::uint8_t kTurnLeft = 0x03;
inline constexpr std::uint8_t kTurnRight = 0x04;
inline constexpr std::uint8_t kReadCompass = 0x09;
inline constexpr std::uint8_t kReadLeftTicks = 0x0A;
inline constexpr std::uint8_t kReadRightTicks = 0x0B;
// Sample all five ADC channels into the device's frame buffer.
inline constexpr std::uint8_t kCaptureSensors = 0x0F;
// 0x10 + channel latches bits 7..0 of a captured reading, 0x18 + channel bits 9..8.
inline constexpr std::uint8_t kSensorLowBase = 0x10;
inline constexpr std::uint8_t kSensorHighBase = 0x18;

inline constexpr bool is_sensor_select(std::uint8_t b) {
  return b == kCaptureSensors || (b >= kSensorLowBase && b < kSensorLowBase + kSensorCount) ||
         (b >= kSensorHighBase && b < kSensorHighBase + kSensorCount);
}
}  // namespace cmd

// The three 8-bit registers shared by host and device. `status_lines` holds the
// electrical level the device drives; host reads see bit 7 inverted (BUSY).
struct PortRegisters {
  std::uint8_t data = 0;
  std::uint8_t status_lines = 0;
  std::uint8_t control = 0;
  // Incremented on each host write to `data` so the device acts on edges.
  std::uint64_t data_writes = 0;

  std::uint8_t read(Register r) const;
  void write(Register r, std::uint8_t value);
};

struct Pose {
  double x = 0.0;        // meters, East
  double y = 0.0;        // meters, North
  double heading = 0.0;  // degrees clockwise from North, [0, 360)
};

struct RobotState {
  Pose pose;
  Motor left_motor = Motor::Stopped;
  Motor right_motor = Motor::Stopped;
  std::uint64_t left_ticks = 0;
  std::uint64_t right_ticks = 0;
  // Wheel travel not yet converted into a whole tick.
  double left_carry = 0.0;
  double right_carry = 0.0;
  double sim_time = 0.0;  // seconds
};

// Piecewise-constant ambient field over (x, y, t). Regions are checked in
// order; the first one containing the point wins, otherwise `base` applies.
struct FieldRegion {
  double x_min = -1e300, x_max = 1e300;
  double y_min = -1e300, y_max = 1e300;
  double t_min = -1e300, t_max = 1e300;  // seconds, half-open [t_min, t_max)
  double value = 0.0;
};

struct SensorField {
  double base = 0.0;
  std::vector<FieldRegion> regions;

  double at(double x, double y, double t) const;
};

struct WorldConfig {
  double wheel_radius = 0.05;
  double track_width = 0.30;
  double wheel_speed = 0.20;
  unsigned ticks_per_revolution = 8;
  std::array<SensorField, kSensorCount> sensor_field{};
  std::array<double, kSensorCount> sensor_noise_sigma{};
  std::uint64_t seed = 1;

  double tick_length() const;
  // Throws ValidationError naming the offending field.
  void validate() const;
};

// Wraps an angle in degrees into [0, 360).
double normalize_degrees(double deg);

// Advances the ground-truth robot by dt seconds under its current motor states.
RobotState step(const RobotState& state, const WorldConfig& cfg, double dt);

std::uint8_t compass_byte(const RobotState& state);

// Deterministic Gaussian noise source. Box-Muller over mt19937_64 so streams do
// not depend on the standard library's distribution implementation.
class NoiseSource {
 public:
  explicit NoiseSource(std::uint64_t seed) : engine_(seed) {}
  double gaussian();

 private:
  double uniform();
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

SensorReadings sample_sensors(const RobotState& state, const WorldConfig& cfg, NoiseSource& noise);

struct DeviceDiagnostic {
  double t = 0.0;
  std::uint8_t command = 0;
  std::string message;
};

// The microcontroller firmware: decodes commands from `data`, drives the motor
// pair, latches bytes for nibble readout and presents them on status 7..4.
class Device {
 public:
  explicit Device(std::uint64_t seed) : noise_(seed) {}

  void poll(PortRegisters& regs, RobotState& state, const WorldConfig& cfg);

  std::optional<std::uint8_t> latched() const { return latched_; }
  const SensorReadings& sensor_frame() const { return sensor_frame_; }
  const std::vector<DeviceDiagnostic>& diagnostics() const { return diagnostics_; }

 private:
  void execute(std::uint8_t command, RobotState& state, const WorldConfig& cfg);

  NoiseSource noise_;
  std::uint64_t seen_writes_ = 0;
  std::optional<std::uint8_t> latched_;
  SensorReadings sensor_frame_{};
  std::vector<DeviceDiagnostic> diagnostics_;
};

// Owns world, device and registers and advances them on the 1 ms physics grid.
class Simulator {
 public:
  explicit Simulator(WorldConfig cfg);

  const WorldConfig& config() const { return cfg_; }
  const RobotState& state() const { return state_; }
  const PortRegisters& registers() const { return regs_; }
  const Device& device() const { return device_; }
  SimTime now() const { return now_; }

  // Host side of the bus. Writes are seen by the device on its next poll.
  std::uint8_t read(Register r) const { return regs_.read(r); }
  void write(Register r, std::uint8_t value) { regs_.write(r, value); }

  // Steps physics in 1 ms increments, polling the device after each.
  void advance(SimTime duration_ms);
  void advance_to(SimTime t_ms);

  // Lets the device see host writes without time passing.
  void settle_device();

 private:
  WorldConfig cfg_;
  RobotState state_;
  PortRegisters regs_;
  Device device_;
  SimTime now_ = 0;
};

}  // namespace lnr
