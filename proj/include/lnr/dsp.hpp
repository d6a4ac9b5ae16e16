// Software signal conditioning: affine calibration followed by a configurable
// chain of causal filters, one independent chain per sensor.
#pragma once

#include <array>
#include <deque>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lnr/hw_sim.hpp"

namespace lnr::dsp {

enum class FilterKind { MovingAverage, Median, ExponentialSmoothing };

std::string_view to_string(FilterKind k);
std::optional<FilterKind> parse_filter_kind(std::string_view text);

struct FilterSpec {
  FilterKind kind = FilterKind::MovingAverage;
  std::size_t window = 1;  // MovingAverage, Median
  double alpha = 1.0;      // ExponentialSmoothing, in (0, 1]

  static FilterSpec moving_average(std::size_t window) { return {FilterKind::MovingAverage, window, 1.0}; }
  static FilterSpec median(std::size_t window) { return {FilterKind::Median, window, 1.0}; }
  static FilterSpec exponential(double alpha) { return {FilterKind::ExponentialSmoothing, 1, alpha}; }

  // Throws ValidationError naming "window" or "alpha".
  void validate() const;
  bool operator==(const FilterSpec&) const = default;
};

struct Calibration {
  double gain = 1.0;    // engineering units per count
  double offset = 0.0;  // engineering units

  void validate() const;
  bool operator==(const Calibration&) const = default;
};

double calibrate(int raw, const Calibration& cal);

// One stateful stage. Windowed kinds warm up on partial windows.
class FilterStage {
 public:
  explicit FilterStage(FilterSpec spec) : spec_(spec) {}
  double push(double x);
  void reset();
  const FilterSpec& spec() const { return spec_; }

 private:
  FilterSpec spec_;
  std::deque<double> window_;
  std::optional<double> ema_;
};

class FilterChain {
 public:
  FilterChain() = default;
  explicit FilterChain(std::vector<FilterSpec> specs);

  double push(double x);
  void reset();
  std::vector<FilterSpec> specs() const;

 private:
  std::vector<FilterStage> stages_;
};

// Runs a fresh chain over a whole stream. Empty chain is the identity.
std::vector<double> apply_filter_chain(std::span<const double> stream, std::span<const FilterSpec> specs);

// Raw, calibrated and filtered values from one acquisition cycle.
struct SensorFrame {
  double t = 0.0;
  SensorReadings raw{};
  std::array<double, kSensorCount> value{};
  std::array<double, kSensorCount> filtered{};
};

struct ChannelConfig {
  Calibration calibration;
  std::vector<FilterSpec> filters;
  std::string unit;
};

struct RetuneRecord {
  double t = 0.0;
  std::string sensor;
  std::string detail;
};

// Per-sensor calibration and filter state. Configuration changes and frame
// processing are serialized, so a frame never sees half of a retune.
class DspEngine {
 public:
  DspEngine();

  void configure(SensorId id, ChannelConfig cfg);
  ChannelConfig channel(SensorId id) const;

  // Throws NotFoundError for an unknown sensor, ValidationError for bad specs.
  void retune(std::string_view sensor, std::vector<FilterSpec> filters, Calibration cal, double t);

  SensorFrame process(double t, const SensorReadings& raw);

  std::vector<RetuneRecord> audit_log() const;

 private:
  struct Channel {
    ChannelConfig cfg;
    FilterChain chain;
  };

  mutable std::mutex mu_;
  std::array<Channel, kSensorCount> channels_;
  std::vector<RetuneRecord> audit_;
};

}  // namespace lnr::dsp
