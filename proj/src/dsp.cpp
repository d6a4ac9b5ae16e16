#include "lnr/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "lnr/errors.hpp"

namespace lnr::dsp {

std::string_view to_string(FilterKind k) {
  switch (k) {
    case FilterKind::MovingAverage: return "moving_average";
    case FilterKind::Median: return "median";
    case FilterKind::ExponentialSmoothing: return "exponential_smoothing";
  }
  return "moving_average";
}

std::optional<FilterKind> parse_filter_kind(std::string_view text) {
  for (auto k : {FilterKind::MovingAverage, FilterKind::Median, FilterKind::ExponentialSmoothing}) {
    if (to_string(k) == text) return k;
  }
  return std::nullopt;
}

void FilterSpec::validate() const {
  switch (kind) {
    case FilterKind::MovingAverage:
    case FilterKind::Median:
      if (window < 1) throw ValidationError("window", "must be >= 1");
      break;
    case FilterKind::ExponentialSmoothing:
      if (!(alpha > 0.0 && alpha <= 1.0)) throw ValidationError("alpha", "must be in (0, 1]");
      break;
  }
}

void Calibration::validate() const {
  if (!std::isfinite(gain) || gain == 0.0) throw ValidationError("gain", "must be finite and nonzero");
  if (!std::isfinite(offset)) throw ValidationError("offset", "must be finite");
}

double calibrate(int raw, const Calibration& cal) {
  return static_cast<double>(raw) * cal.gain + cal.offset;
}

double FilterStage::push(double x) {
  switch (spec_.kind) {
    case FilterKind::MovingAverage: {
      window_.push_back(x);
      if (window_.size() > spec_.window) window_.pop_front();
      // Summed fresh each time so warm-up outputs are exact.
      const double sum = std::accumulate(window_.begin(), window_.end(), 0.0);
      return sum / static_cast<double>(window_.size());
    }
    case FilterKind::Median: {
      window_.push_back(x);
      if (window_.size() > spec_.window) window_.pop_front();
      std::vector<double> sorted(window_.begin(), window_.end());
      std::sort(sorted.begin(), sorted.end());
      const std::size_t n = sorted.size();
      return n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    }
    case FilterKind::ExponentialSmoothing:
      ema_ = ema_ ? spec_.alpha * x + (1.0 - spec_.alpha) * *ema_ : x;
      return *ema_;
  }
  return x;
}

void FilterStage::reset() {
  window_.clear();
  ema_.reset();
}

FilterChain::FilterChain(std::vector<FilterSpec> specs) {
  stages_.reserve(specs.size());
  for (const auto& s : specs) {
    s.validate();
    stages_.emplace_back(s);
  }
}

double FilterChain::push(double x) {
  for (auto& s : stages_) x = s.push(x);
  return x;
}

void FilterChain::reset() {
  for (auto& s : stages_) s.reset();
}

std::vector<FilterSpec> FilterChain::specs() const {
  std::vector<FilterSpec> out;
  for (const auto& s : stages_) out.push_back(s.spec());
  return out;
}

std::vector<double> apply_filter_chain(std::span<const double> stream, std::span<const FilterSpec> specs) {
  FilterChain chain(std::vector<FilterSpec>(specs.begin(), specs.end()));
  std::vector<double> out;
  out.reserve(stream.size());
  for (double x : stream) out.push_back(chain.push(x));
  return out;
}

DspEngine::DspEngine() = default;

void DspEngine::configure(SensorId id, ChannelConfig cfg) {
  cfg.calibration.validate();
  FilterChain chain(cfg.filters);
  std::lock_guard lock(mu_);
  auto& ch = channels_[static_cast<std::size_t>(id)];
  ch.cfg = std::move(cfg);
  ch.chain = std::move(chain);
}

ChannelConfig DspEngine::channel(SensorId id) const {
  std::lock_guard lock(mu_);
  return channels_[static_cast<std::size_t>(id)].cfg;
}

void DspEngine::retune(std::string_view sensor, std::vector<FilterSpec> filters, Calibration cal, double t) {
  auto id = parse_sensor_id(sensor);
  if (!id) throw NotFoundError("unknown sensor '" + std::string(sensor) + "'");
  for (std::size_t i = 0; i < filters.size(); ++i) {
    try {
      filters[i].validate();
    } catch (const ValidationError& e) {
      throw e.nested("filters[" + std::to_string(i) + "].");
    }
  }
  try {
    cal.validate();
  } catch (const ValidationError& e) {
    throw e.nested("calibration.");
  }

  std::ostringstream detail;
  detail << "gain=" << cal.gain << " offset=" << cal.offset << " filters=[";
  for (std::size_t i = 0; i < filters.size(); ++i) {
    if (i) detail << ",";
    detail << to_string(filters[i].kind);
    if (filters[i].kind == FilterKind::ExponentialSmoothing) {
      detail << "(" << filters[i].alpha << ")";
    } else {
      detail << "(" << filters[i].window << ")";
    }
  }
  detail << "]";

  std::lock_guard lock(mu_);
  auto& ch = channels_[static_cast<std::size_t>(*id)];
  ch.cfg.calibration = cal;
  ch.cfg.filters = filters;
  ch.chain = FilterChain(std::move(filters));
  audit_.push_back({t, std::string(sensor), detail.str()});
}

SensorFrame DspEngine::process(double t, const SensorReadings& raw) {
  SensorFrame f;
  f.t = t;
  f.raw = raw;
  std::lock_guard lock(mu_);
  for (std::size_t i = 0; i < kSensorCount; ++i) {
    auto& ch = channels_[i];
    f.value[i] = calibrate(raw[i], ch.cfg.calibration);
    f.filtered[i] = ch.chain.push(f.value[i]);
  }
  return f;
}

std::vector<RetuneRecord> DspEngine::audit_log() const {
  std::lock_guard lock(mu_);
  return audit_;
}

}  // namespace lnr::dsp
