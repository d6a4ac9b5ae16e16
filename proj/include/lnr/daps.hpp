// Data Acquisition and Processing Systems: declarative packages that bind
// sensors to calibrations, filter chains and air-quality warning rules.
#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "lnr/dsp.hpp"
#include "lnr/hw_sim.hpp"

namespace lnr::daps {

struct Version {
  std::uint32_t major = 0, minor = 0, patch = 0;

  static Version parse(std::string_view text);  // throws ValidationError("version")
  std::string str() const;
  auto operator<=>(const Version&) const = default;
};

enum class Severity { Info, Warning, Critical };
std::string_view to_string(Severity s);
std::optional<Severity> parse_severity(std::string_view text);

struct WarningRule {
  SensorId sensor = SensorId::Co;
  double raise_threshold = 0.0;
  double clear_threshold = 0.0;
  double min_duration = 0.0;  // seconds
  Severity severity = Severity::Warning;

  void validate() const;
  bool operator==(const WarningRule&) const = default;
};

struct SensorBinding {
  SensorId sensor = SensorId::Co;
  dsp::Calibration calibration;
  std::vector<dsp::FilterSpec> filters;
  std::string unit;
};

struct DapsManifest {
  std::string name;
  Version version;
  std::string description;
  std::vector<SensorBinding> sensors;
  std::vector<WarningRule> warnings;
};

// Sensors physically present on the robot and their factory calibration.
struct SensorProfile {
  SensorId id = SensorId::Co;
  dsp::Calibration calibration;
  std::string unit;
};

struct HardwareProfile {
  std::vector<SensorProfile> sensors;

  static HardwareProfile default_profile();
  const SensorProfile* find(SensorId id) const;
};

// Parses the manifest file format. Syntax errors carry a line number, schema
// errors the offending field path.
DapsManifest parse_manifest(std::string_view text, const std::string& source = "manifest");
DapsManifest manifest_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DapsManifest& m);

std::vector<dsp::FilterSpec> filters_from_json(const nlohmann::json& j, const std::string& path);
dsp::Calibration calibration_from_json(const nlohmann::json& j, const std::string& path);
nlohmann::json to_json(const dsp::FilterSpec& f);
nlohmann::json to_json(const dsp::Calibration& c);

// Checks sensor references against the profile and every rule's invariants.
void validate_manifest(const DapsManifest& m, const HardwareProfile& profile);

struct AuditEntry {
  double t = 0.0;
  std::string principal;
  std::string action;
  std::string outcome;
};

struct RegistrySnapshot {
  std::uint64_t generation = 0;
  std::vector<DapsManifest> packages;
};

struct InstallOutcome {
  std::string name;
  Version version;
  std::optional<Version> superseded;
  std::uint64_t generation = 0;
};

// Installed packages. Every install publishes a new immutable snapshot, so a
// reader holding one snapshot sees exactly one version of each package.
class Registry {
 public:
  explicit Registry(HardwareProfile profile) : profile_(std::move(profile)) {
    current_ = std::make_shared<const RegistrySnapshot>();
  }

  // Throws ValidationError, VersionConflictError.
  InstallOutcome install(DapsManifest m, double t, const std::string& principal = "system");

  std::shared_ptr<const RegistrySnapshot> snapshot() const;
  std::vector<AuditEntry> audit() const;
  const HardwareProfile& profile() const { return profile_; }

 private:
  HardwareProfile profile_;
  mutable std::mutex mu_;
  std::shared_ptr<const RegistrySnapshot> current_;
  std::vector<AuditEntry> audit_;
};

struct WarningEvent {
  SensorId sensor = SensorId::Co;
  Severity severity = Severity::Warning;
  double raised_at = 0.0;
  std::optional<double> cleared_at;
  double peak_value = 0.0;
  std::string package;
};

enum class TransitionKind { Raised, Cleared };
std::string_view to_string(TransitionKind k);

struct WarningTransition {
  TransitionKind kind = TransitionKind::Raised;
  double t = 0.0;
  WarningEvent event;
};

struct RuleState {
  enum class Phase { Clear, Pending, Raised };
  Phase phase = Phase::Clear;
  double pending_since = 0.0;
  double pending_peak = 0.0;
  WarningEvent event;
};

// Hysteresis automaton with a duration gate, evaluated against the filtered
// values of one frame. `state` is resized to match `rules`.
std::vector<WarningTransition> evaluate_warnings(const dsp::SensorFrame& frame,
                                                 std::span<const WarningRule> rules,
                                                 std::vector<RuleState>& state);

nlohmann::json to_json(const WarningEvent& e);
nlohmann::json to_json(const WarningTransition& tr);

struct StoredSample {
  double t = 0.0;
  std::uint16_t raw = 0;
  double filtered = 0.0;
};

struct Bucket {
  double t = 0.0;
  std::uint16_t raw = 0;
  double value = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::size_t count = 0;
};

inline constexpr int kStoreFormatVersion = 1;

// Append-only per-sensor series with a retention horizon, optionally mirrored
// to newline-delimited JSON files (one per sensor, with a versioned header).
class TimeSeriesStore {
 public:
  explicit TimeSeriesStore(double retention_s = 86400.0, std::optional<std::filesystem::path> dir = {});

  void append(SensorId id, const StoredSample& s);
  // Throws NotFoundError for unknown sensor names, ValidationError for bad ranges.
  std::vector<Bucket> query(std::string_view sensor, double t1, double t2, std::size_t stride = 1) const;
  std::vector<Bucket> query(SensorId id, double t1, double t2, std::size_t stride = 1) const;
  std::size_t size(SensorId id) const;
  void flush();

 private:
  void load();
  void prune(std::deque<StoredSample>& series);

  double retention_s_;
  std::optional<std::filesystem::path> dir_;
  mutable std::shared_mutex mu_;
  std::array<std::deque<StoredSample>, kSensorCount> series_;
  std::array<std::unique_ptr<std::ofstream>, kSensorCount> files_;
};

}  // namespace lnr::daps
