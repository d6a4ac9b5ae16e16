#include "lnr/hw_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "lnr/errors.hpp"

namespace lnr {

std::string_view to_string(Motor m) {
  switch (m) {
    case Motor::Stopped: return "stopped";
    case Motor::Forward: return "forward";
    case Motor::Backward: return "backward";
  }
  return "stopped";
}

std::string_view to_string(SensorId id) {
  switch (id) {
    case SensorId::Co: return "co";
    case SensorId::No: return "no";
    case SensorId::Smoke: return "smoke";
    case SensorId::Temperature: return "temperature";
    case SensorId::Humidity: return "humidity";
  }
  return "co";
}

std::optional<SensorId> parse_sensor_id(std::string_view name) {
  for (auto id : kAllSensors) {
    if (to_string(id) == name) return id;
  }
  return std::nullopt;
}

std::string_view to_string(Register r) {
  switch (r) {
    case Register::Data: return "data";
    case Register::Status: return "status";
    case Register::Control: return "control";
  }
  return "data";
}

std::optional<Register> parse_register(std::string_view name) {
  if (name == "data") return Register::Data;
  if (name == "status") return Register::Status;
  if (name == "control") return Register::Control;
  return std::nullopt;
}

std::uint8_t PortRegisters::read(Register r) const {
  switch (r) {
    case Register::Data: return data;
    case Register::Status: return static_cast<std::uint8_t>(status_lines ^ 0x80);
    case Register::Control: return control;
  }
  return 0;
}

void PortRegisters::write(Register r, std::uint8_t value) {
  switch (r) {
    case Register::Data:
      data = value;
      ++data_writes;
      break;
    case Register::Control:
      control = value;
      break;
    case Register::Status:
      // Input-only lane on a real port; host writes are dropped.
      break;
  }
}

double SensorField::at(double x, double y, double t) const {
  for (const auto& r : regions) {
    if (x >= r.x_min && x < r.x_max && y >= r.y_min && y < r.y_max && t >= r.t_min &&
        t < r.t_max) {
      return r.value;
    }
  }
  return base;
}

double WorldConfig::tick_length() const {
  return 2.0 * std::numbers::pi * wheel_radius / static_cast<double>(ticks_per_revolution);
}

void WorldConfig::validate() const {
  if (!(wheel_radius > 0.0) || !std::isfinite(wheel_radius)) throw ValidationError("wheel_radius", "must be > 0");
  if (!(track_width > 0.0) || !std::isfinite(track_width)) throw ValidationError("track_width", "must be > 0");
  if (!(wheel_speed > 0.0) || !std::isfinite(wheel_speed)) throw ValidationError("wheel_speed", "must be > 0");
  if (ticks_per_revolution < 1) throw ValidationError("ticks_per_revolution", "must be >= 1");
  for (double s : sensor_noise_sigma) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw ValidationError("sensor_noise_sigma", "must be finite and >= 0");
  }
}

double normalize_degrees(double deg) {
  double r = std::fmod(deg, 360.0);
  if (r < 0.0) r += 360.0;
  if (r >= 360.0) r = 0.0;
  return r;
}

namespace {

double wheel_velocity(Motor m, double speed) {
  switch (m) {
    case Motor::Forward: return speed;
    case Motor::Backward: return -speed;
    case Motor::Stopped: return 0.0;
  }
  return 0.0;
}

void add_travel(std::uint64_t& ticks, double& carry, double travel, double tick_len) {
  carry += travel;
  if (carry >= tick_len) {
    auto whole = static_cast<std::uint64_t>(std::floor(carry / tick_len));
    ticks += whole;
    carry -= static_cast<double>(whole) * tick_len;
    if (carry < 0.0) carry = 0.0;
  }
}

}  // namespace

RobotState step(const RobotState& state, const WorldConfig& cfg, double dt) {
  RobotState next = state;
  next.sim_time = state.sim_time + dt;

  const double vl = wheel_velocity(state.left_motor, cfg.wheel_speed);
  const double vr = wheel_velocity(state.right_motor, cfg.wheel_speed);
  if (vl == 0.0 && vr == 0.0) return next;

  // Midpoint speed and clockwise yaw rate; the closed-form arc is exact for
  // constant wheel speeds, including rotation about a stopped wheel.
  const double v = 0.5 * (vl + vr);
  const double omega = (vl - vr) / cfg.track_width;
  const double h0 = state.pose.heading * std::numbers::pi / 180.0;

  if (omega == 0.0) {
    next.pose.x += v * dt * std::sin(h0);
    next.pose.y += v * dt * std::cos(h0);
  } else {
    const double h1 = h0 + omega * dt;
    const double radius = v / omega;
    next.pose.x += radius * (std::cos(h0) - std::cos(h1));
    next.pose.y += radius * (std::sin(h1) - std::sin(h0));
    next.pose.heading = normalize_degrees(state.pose.heading + omega * dt * 180.0 / std::numbers::pi);
  }

  const double tick_len = cfg.tick_length();
  add_travel(next.left_ticks, next.left_carry, std::abs(vl) * dt, tick_len);
  add_travel(next.right_ticks, next.right_carry, std::abs(vr) * dt, tick_len);
  return next;
}

std::uint8_t compass_byte(const RobotState& state) {
  const double scaled = std::floor(normalize_degrees(state.pose.heading) * 256.0 / 360.0);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

double NoiseSource::uniform() {
  // 53 random bits mapped into (0, 1].
  return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
}

double NoiseSource::gaussian() {
  if (spare_) {
    double z = *spare_;
    spare_.reset();
    return z;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double mag = std::sqrt(-2.0 * std::log(u1));
  spare_ = mag * std::sin(2.0 * std::numbers::pi * u2);
  return mag * std::cos(2.0 * std::numbers::pi * u2);
}

SensorReadings sample_sensors(const RobotState& state, const WorldConfig& cfg, NoiseSource& noise) {
  SensorReadings out{};
  for (std::size_t i = 0; i < kSensorCount; ++i) {
    const double ambient = cfg.sensor_field[i].at(state.pose.x, state.pose.y, state.sim_time);
    // Noise is drawn for every channel so the stream does not depend on sigma.
    const double value = ambient + cfg.sensor_noise_sigma[i] * noise.gaussian();
    const double q = std::floor(value);
    out[i] = static_cast<std::uint16_t>(std::clamp(q, 0.0, static_cast<double>(kAdcMax)));
  }
  return out;
}

void Device::execute(std::uint8_t command, RobotState& state, const WorldConfig& cfg) {
  auto drive = [&](Motor left, Motor right) {
    state.left_motor = left;
    state.right_motor = right;
  };
  switch (command) {
    case cmd::kStop: drive(Motor::Stopped, Motor::Stopped); return;
    case cmd::kForward: drive(Motor::Forward, Motor::Forward); return;
    case cmd::kBackward: drive(Motor::Backward, Motor::Backward); return;
    case cmd::kTurnLeft: drive(Motor::Stopped, Motor::Forward); return;
    case cmd::kTurnRight: drive(Motor::Forward, Motor::Stopped); return;
    case cmd::kReadCompass: latched_ = compass_byte(state); return;
    case cmd::kReadLeftTicks: latched_ = static_cast<std::uint8_t>(state.left_ticks & 0xFF); return;
    case cmd::kReadRightTicks: latched_ = static_cast<std::uint8_t>(state.right_ticks & 0xFF); return;
    case cmd::kCaptureSensors: sensor_frame_ = sample_sensors(state, cfg, noise_); return;
    default: break;
  }
  if (command >= cmd::kSensorLowBase && command < cmd::kSensorLowBase + kSensorCount) {
    latched_ = static_cast<std::uint8_t>(sensor_frame_[command - cmd::kSensorLowBase] & 0xFF);
    return;
  }
  if (command >= cmd::kSensorHighBase && command < cmd::kSensorHighBase + kSensorCount) {
    latched_ = static_cast<std::uint8_t>((sensor_frame_[command - cmd::kSensorHighBase] >> 8) & 0x03);
    return;
  }
  std::ostringstream os;
  os << "unknown command 0x" << std::hex << static_cast<int>(command) << " ignored";
  diagnostics_.push_back({state.sim_time, command, os.str()});
}

void Device::poll(PortRegisters& regs, RobotState& state, const WorldConfig& cfg) {
  if (regs.data_writes != seen_writes_) {
    seen_writes_ = regs.data_writes;
    execute(regs.data, state, cfg);
  }
  if (!latched_) {
    regs.status_lines = 0;
    return;
  }
  // Strobe bit set selects the low nibble, cleared selects the high nibble.
  const std::uint8_t nibble = (regs.control & 0x01) ? (*latched_ & 0x0F) : (*latched_ >> 4);
  regs.status_lines = static_cast<std::uint8_t>(nibble << 4);
}

Simulator::Simulator(WorldConfig cfg) : cfg_(std::move(cfg)), device_(cfg_.seed) {
  cfg_.validate();
}

void Simulator::advance(SimTime duration_ms) {
  for (SimTime i = 0; i < duration_ms; ++i) {
    state_ = step(state_, cfg_, 0.001);
    ++now_;
    state_.sim_time = to_seconds(now_);
    device_.poll(regs_, state_, cfg_);
  }
}

void Simulator::advance_to(SimTime t_ms) {
  if (t_ms > now_) advance(t_ms - now_);
}

void Simulator::settle_device() { device_.poll(regs_, state_, cfg_); }

}  // namespace lnr
