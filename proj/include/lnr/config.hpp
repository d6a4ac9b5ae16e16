// Robot configuration: world model, hardware profile, timing, service and
// storage settings, loaded from a JSON document.
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "lnr/daps.hpp"
#include "lnr/hw_sim.hpp"

namespace lnr {

struct TimingConfig {
  SimTime tick_ms = 10;
  SimTime settle_ms = 5;
  SimTime poll_interval_ms = 50;     // compass + wheel counters, 20 Hz
  SimTime sensor_interval_ms = 1000;  // ADC frame, 1 Hz
};

struct ServiceConfig {
  std::string listen = "127.0.0.1:8080";
  std::string admin_token = "lnr-admin";
  std::size_t queue_bound = 32;
  // Simulated seconds per wall-clock second when serving.
  double realtime_factor = 1.0;
  std::string console_dir;
};

struct StoreConfig {
  std::string dir;  // empty keeps the store in memory
  double retention_s = 86400.0;
};

struct RobotConfig {
  WorldConfig world;
  daps::HardwareProfile profile = daps::HardwareProfile::default_profile();
  TimingConfig timing;
  double split_threshold_deg = 5.0;
  ServiceConfig service;
  StoreConfig store;
  // Manifests installed at boot, resolved relative to the config file.
  std::vector<std::filesystem::path> packages;
  // Record every register transaction (headless runs and replay).
  bool trace = false;

  void validate() const;  // throws ValidationError
};

// Defaults plus a benign indoor ambient field and mild sensor noise.
RobotConfig default_config();

// Throws ParseError with file:line for syntax errors and the dotted key path
// for schema errors.
RobotConfig load_config(const std::filesystem::path& path);
RobotConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {},
                             const std::string& source = "config");

// Parses a sensor-field document ({"co": {"base": .., "noise_sigma": ..,
// "regions": [..], "grid": {..}}, ...}) into `world`.
void apply_sensor_fields(const nlohmann::json& j, WorldConfig& world, const std::string& path);

}  // namespace lnr
