// The robot's main unit: one simulation clock driving the port driver,
// navigation, DSP and DAPS pipelines, plus the serialized actuation lane.
#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lnr/config.hpp"
#include "lnr/daps.hpp"
#include "lnr/dsp.hpp"
#include "lnr/hw_sim.hpp"
#include "lnr/navigation.hpp"
#include "lnr/port_protocol.hpp"

namespace lnr {

struct CommandRecord {
  std::uint64_t id = 0;
  DriveCommand command = DriveCommand::Stop;
  std::optional<SimTime> duration_ms;
  std::string origin;
  SimTime submitted_at = 0;
  std::optional<SimTime> started_at;
  std::optional<SimTime> stopped_at;  // auto-stop of a timed command

  std::string status() const;
};

nlohmann::json to_json(const CommandRecord& r);

struct SensorValue {
  SensorId id = SensorId::Co;
  std::uint16_t raw = 0;
  double value = 0.0;
  std::string unit;
  std::string package;  // "name@version", empty for factory calibration
};

// One consistent snapshot, assembled at the end of a poll cycle.
struct TelemetryFrame {
  std::uint64_t cycle = 0;
  double t = 0.0;
  nav::EstimatedPose pose;
  CompassReading compass;
  Motor left_motor = Motor::Stopped;
  Motor right_motor = Motor::Stopped;
  std::uint64_t left_ticks = 0;
  std::uint64_t right_ticks = 0;
  std::optional<double> sensors_t;
  std::vector<SensorValue> sensors;
  std::vector<daps::WarningEvent> active_warnings;
  nav::PathSummary path;
};

nlohmann::json to_json(const TelemetryFrame& f);
nlohmann::json to_json(const nav::PathLog& log);

// A processed ADC frame with the package version that produced each channel.
struct ProcessedFrame {
  dsp::SensorFrame frame;
  std::uint64_t registry_generation = 0;
  std::array<std::string, kSensorCount> package{};
};

class MainUnit {
 public:
  explicit MainUnit(RobotConfig cfg);

  const RobotConfig& config() const { return cfg_; }

  // Queues a drive command. Timed commands hold the actuator until their
  // auto-stop; later commands wait behind them. Throws QueueFullError.
  std::uint64_t submit_drive(DriveCommand c, std::optional<SimTime> duration_ms, std::string origin);

  // Runs the scheduler until simulated time reaches `t`.
  void run_until(SimTime t);
  void run_for(SimTime d) { run_until(now() + d); }
  // Runs until no command is queued or active, bounded by `limit`.
  void run_until_idle(SimTime limit);
  // Closes open path segments at the current time.
  void finish();

  SimTime now() const;
  bool idle() const;

  std::shared_ptr<const TelemetryFrame> telemetry() const;
  // Blocks until a frame newer than `after_cycle` exists or the timeout expires.
  std::shared_ptr<const TelemetryFrame> wait_for_frame(std::uint64_t after_cycle,
                                                       std::chrono::milliseconds timeout) const;

  nav::PathLog path() const;
  std::vector<CommandRecord> commands() const;
  std::vector<daps::WarningTransition> warning_log() const;
  std::vector<daps::WarningEvent> active_warnings() const;
  RobotState truth() const;
  std::vector<TraceRecord> trace() const;
  std::vector<DeviceDiagnostic> diagnostics() const;

  daps::Registry& registry() { return registry_; }
  dsp::DspEngine& dsp() { return dsp_; }
  const daps::TimeSeriesStore& store() const { return store_; }

  void on_telemetry(std::function<void(const TelemetryFrame&)> cb);
  void on_sensor_frame(std::function<void(const ProcessedFrame&)> cb);
  void on_warning(std::function<void(const daps::WarningTransition&)> cb);

 private:
  struct PollJob {
    int stage = 0;
    std::uint8_t compass = 0;
    std::uint8_t left = 0;
    nav::MotionMode mode = nav::MotionMode::Idle;
  };
  struct SensorJob {
    int stage = 0;
    SensorReadings readings{};
    std::uint8_t low = 0;
  };

  // One scheduling decision; idle physics never runs past `limit`.
  void step(SimTime limit);
  SimTime next_wakeup() const;
  void dispatch(CommandRecord& rec);
  void continue_poll();
  void continue_sensors();
  void finish_poll(const PollJob& job);
  void process_sensors(const SensorReadings& readings);
  void apply_registry_if_changed();
  void publish(std::shared_ptr<const TelemetryFrame> f);

  RobotConfig cfg_;
  mutable std::mutex mu_;

  Simulator sim_;
  SimBus bus_;
  TraceLog trace_;
  PortDriver driver_;
  nav::DeadReckoner nav_;
  dsp::DspEngine dsp_;
  daps::Registry registry_;
  daps::TimeSeriesStore store_;

  std::deque<CommandRecord> queue_;
  std::vector<CommandRecord> history_;
  std::optional<std::size_t> active_;  // index into history_
  std::uint64_t next_command_id_ = 1;
  DriveCommand commanded_ = DriveCommand::Stop;

  SimTime next_poll_ = 0;
  SimTime next_sensor_ = 0;
  std::optional<PollJob> poll_job_;
  std::optional<SensorJob> sensor_job_;
  std::uint64_t cycle_ = 0;

  std::uint64_t applied_generation_ = 0;
  std::array<std::string, kSensorCount> channel_package_{};
  std::vector<daps::WarningRule> rules_;
  std::vector<std::string> rule_package_;
  std::vector<daps::RuleState> rule_state_;
  std::vector<daps::WarningTransition> warning_log_;
  std::optional<ProcessedFrame> last_sensor_frame_;

  std::function<void(const TelemetryFrame&)> telemetry_cb_;
  std::function<void(const ProcessedFrame&)> sensor_cb_;
  std::function<void(const daps::WarningTransition&)> warning_cb_;

  mutable std::mutex frame_mu_;
  mutable std::condition_variable frame_cv_;
  std::shared_ptr<const TelemetryFrame> latest_;
};

nav::MotionMode motion_mode(DriveCommand c);

}  // namespace lnr
