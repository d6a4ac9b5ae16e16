#include "lnr/daps.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "lnr/errors.hpp"

namespace lnr::daps {

using nlohmann::json;

Version Version::parse(std::string_view text) {
  Version v;
  std::uint32_t* parts[3] = {&v.major, &v.minor, &v.patch};
  const char* p = text.data();
  const char* end = text.data() + text.size();
  for (int i = 0; i < 3; ++i) {
    auto [next, ec] = std::from_chars(p, end, *parts[i]);
    if (ec != std::errc{} || next == p) {
      throw ValidationError("version", "expected a dotted triple like 1.0.0, got '" + std::string(text) + "'");
    }
    p = next;
    if (i < 2) {
      if (p == end || *p != '.') {
        throw ValidationError("version", "expected a dotted triple like 1.0.0, got '" + std::string(text) + "'");
      }
      ++p;
    }
  }
  if (p != end) throw ValidationError("version", "trailing characters in '" + std::string(text) + "'");
  return v;
}

std::string Version::str() const {
  return std::to_string(major) + "." + std::to_string(minor) + "." + std::to_string(patch);
}

std::string_view to_string(Severity s) {
  switch (s) {
    case Severity::Info: return "info";
    case Severity::Warning: return "warning";
    case Severity::Critical: return "critical";
  }
  return "warning";
}

std::optional<Severity> parse_severity(std::string_view text) {
  for (auto s : {Severity::Info, Severity::Warning, Severity::Critical}) {
    if (to_string(s) == text) return s;
  }
  return std::nullopt;
}

std::string_view to_string(TransitionKind k) { return k == TransitionKind::Raised ? "raised" : "cleared"; }

void WarningRule::validate() const {
  if (!std::isfinite(raise_threshold)) throw ValidationError("raise_threshold", "must be finite");
  if (!std::isfinite(clear_threshold)) throw ValidationError("clear_threshold", "must be finite");
  if (!(clear_threshold < raise_threshold)) {
    throw ValidationError("clear_threshold", "must be below raise_threshold");
  }
  if (!(min_duration >= 0.0) || !std::isfinite(min_duration)) {
    throw ValidationError("min_duration", "must be >= 0");
  }
}

HardwareProfile HardwareProfile::default_profile() {
  return HardwareProfile{{
      {SensorId::Co, {0.1, 0.0}, "ppm"},
      {SensorId::No, {0.01, 0.0}, "ppm"},
      {SensorId::Smoke, {0.01, 0.0}, "%obs/m"},
      {SensorId::Temperature, {0.1, -20.0}, "degC"},
      {SensorId::Humidity, {0.1, 0.0}, "%RH"},
  }};
}

const SensorProfile* HardwareProfile::find(SensorId id) const {
  for (const auto& s : sensors) {
    if (s.id == id) return &s;
  }
  return nullptr;
}

namespace {

const json& require(const json& obj, const char* key, const std::string& path) {
  if (!obj.is_object()) throw ValidationError(path.empty() ? std::string("<root>") : path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError(path + key, "missing required field");
  return *it;
}

double number(const json& obj, const char* key, const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_number()) throw ValidationError(path + key, "expected a number");
  return v.get<double>();
}

double number_or(const json& obj, const char* key, const std::string& path, double fallback) {
  if (!obj.contains(key)) return fallback;
  return number(obj, key, path);
}

std::string text(const json& obj, const char* key, const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_string()) throw ValidationError(path + key, "expected a string");
  return v.get<std::string>();
}

std::string text_or(const json& obj, const char* key, const std::string& path, std::string fallback) {
  if (!obj.contains(key)) return fallback;
  return text(obj, key, path);
}

SensorId sensor(const json& obj, const std::string& path) {
  const std::string name = text(obj, "sensor_id", path);
  auto id = parse_sensor_id(name);
  if (!id) throw ValidationError(path + "sensor_id", "unknown sensor '" + name + "'");
  return *id;
}

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& path) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = std::any_of(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; });
    if (!ok) throw ValidationError(path + it.key(), "unknown field");
  }
}

std::size_t line_of_offset(std::string_view text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

}  // namespace

dsp::Calibration calibration_from_json(const json& j, const std::string& path) {
  if (!j.is_object()) throw ValidationError(path.empty() ? "calibration" : path.substr(0, path.size() - 1), "expected an object");
  reject_unknown_keys(j, {"gain", "offset"}, path);
  dsp::Calibration c{number(j, "gain", path), number_or(j, "offset", path, 0.0)};
  try {
    c.validate();
  } catch (const ValidationError& e) {
    throw e.nested(path);
  }
  return c;
}

std::vector<dsp::FilterSpec> filters_from_json(const json& j, const std::string& path) {
  if (!j.is_array()) throw ValidationError(path, "expected an array");
  std::vector<dsp::FilterSpec> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "].";
    const json& f = j[i];
    const std::string kind_name = text(f, "kind", p);
    auto kind = dsp::parse_filter_kind(kind_name);
    if (!kind) throw ValidationError(p + "kind", "unknown filter kind '" + kind_name + "'");
    dsp::FilterSpec spec;
    spec.kind = *kind;
    if (*kind == dsp::FilterKind::ExponentialSmoothing) {
      reject_unknown_keys(f, {"kind", "alpha"}, p);
      spec.alpha = number(f, "alpha", p);
    } else {
      reject_unknown_keys(f, {"kind", "window"}, p);
      const json& w = require(f, "window", p);
      if (!w.is_number_integer()) throw ValidationError(p + "window", "expected an integer");
      const auto win = w.get<long long>();
      if (win < 1) throw ValidationError(p + "window", "must be >= 1");
      spec.window = static_cast<std::size_t>(win);
    }
    try {
      spec.validate();
    } catch (const ValidationError& e) {
      throw e.nested(p);
    }
    out.push_back(spec);
  }
  return out;
}

json to_json(const dsp::FilterSpec& f) {
  json j{{"kind", dsp::to_string(f.kind)}};
  if (f.kind == dsp::FilterKind::ExponentialSmoothing) {
    j["alpha"] = f.alpha;
  } else {
    j["window"] = f.window;
  }
  return j;
}

json to_json(const dsp::Calibration& c) { return {{"gain", c.gain}, {"offset", c.offset}}; }

DapsManifest manifest_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("<root>", "expected an object");
  reject_unknown_keys(j, {"name", "version", "description", "sensors", "warnings"}, "");
  DapsManifest m;
  m.name = text(j, "name", "");
  if (m.name.empty()) throw ValidationError("name", "must not be empty");
  for (char c : m.name) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) {
      throw ValidationError("name", "must be an identifier ([A-Za-z0-9._-])");
    }
  }
  m.version = Version::parse(text(j, "version", ""));
  m.description = text_or(j, "description", "", "");

  static const json kNone = json::array();
  const json& sensors = j.contains("sensors") ? j["sensors"] : kNone;
  if (!sensors.is_array()) throw ValidationError("sensors", "expected an array");
  for (std::size_t i = 0; i < sensors.size(); ++i) {
    const std::string p = "sensors[" + std::to_string(i) + "].";
    const json& s = sensors[i];
    if (!s.is_object()) throw ValidationError(p.substr(0, p.size() - 1), "expected an object");
    reject_unknown_keys(s, {"sensor_id", "calibration", "filters", "unit"}, p);
    SensorBinding b;
    b.sensor = sensor(s, p);
    b.calibration = calibration_from_json(require(s, "calibration", p), p + "calibration.");
    if (s.contains("filters")) b.filters = filters_from_json(s["filters"], p + "filters");
    b.unit = text_or(s, "unit", p, "");
    m.sensors.push_back(std::move(b));
  }

  if (j.contains("warnings")) {
    const json& warnings = j["warnings"];
    if (!warnings.is_array()) throw ValidationError("warnings", "expected an array");
    for (std::size_t i = 0; i < warnings.size(); ++i) {
      const std::string p = "warnings[" + std::to_string(i) + "].";
      const json& w = warnings[i];
      if (!w.is_object()) throw ValidationError(p.substr(0, p.size() - 1), "expected an object");
      reject_unknown_keys(w, {"sensor_id", "raise_threshold", "clear_threshold", "min_duration", "severity"}, p);
      WarningRule r;
      r.sensor = sensor(w, p);
      r.raise_threshold = number(w, "raise_threshold", p);
      r.clear_threshold = number(w, "clear_threshold", p);
      r.min_duration = number_or(w, "min_duration", p, 0.0);
      const std::string sev = text_or(w, "severity", p, "warning");
      auto parsed = parse_severity(sev);
      if (!parsed) throw ValidationError(p + "severity", "expected info, warning or critical");
      r.severity = *parsed;
      try {
        r.validate();
      } catch (const ValidationError& e) {
        throw e.nested(p);
      }
      m.warnings.push_back(r);
    }
  }
  return m;
}

DapsManifest parse_manifest(std::string_view text, const std::string& source) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(source, line_of_offset(text, e.byte == 0 ? 0 : e.byte - 1), "", "malformed manifest");
  }
  try {
    return manifest_from_json(j);
  } catch (const ValidationError& e) {
    throw ParseError(source, 0, e.field(), e.message());
  }
}

json to_json(const DapsManifest& m) {
  json sensors = json::array();
  for (const auto& b : m.sensors) {
    json f = json::array();
    for (const auto& spec : b.filters) f.push_back(to_json(spec));
    sensors.push_back({{"sensor_id", to_string(b.sensor)},
                       {"calibration", to_json(b.calibration)},
                       {"filters", f},
                       {"unit", b.unit}});
  }
  json warnings = json::array();
  for (const auto& r : m.warnings) {
    warnings.push_back({{"sensor_id", to_string(r.sensor)},
                        {"raise_threshold", r.raise_threshold},
                        {"clear_threshold", r.clear_threshold},
                        {"min_duration", r.min_duration},
                        {"severity", to_string(r.severity)}});
  }
  return {{"name", m.name},
          {"version", m.version.str()},
          {"description", m.description},
          {"sensors", sensors},
          {"warnings", warnings}};
}

void validate_manifest(const DapsManifest& m, const HardwareProfile& profile) {
  for (std::size_t i = 0; i < m.sensors.size(); ++i) {
    const std::string p = "sensors[" + std::to_string(i) + "].";
    const auto& b = m.sensors[i];
    if (!profile.find(b.sensor)) {
      throw ValidationError(p + "sensor_id", "sensor '" + std::string(to_string(b.sensor)) +
                                                 "' is not in the hardware profile");
    }
    for (std::size_t k = 0; k < i; ++k) {
      if (m.sensors[k].sensor == b.sensor) throw ValidationError(p + "sensor_id", "sensor bound twice");
    }
    try {
      b.calibration.validate();
    } catch (const ValidationError& e) {
      throw e.nested(p + "calibration.");
    }
    for (std::size_t f = 0; f < b.filters.size(); ++f) {
      try {
        b.filters[f].validate();
      } catch (const ValidationError& e) {
        throw e.nested(p + "filters[" + std::to_string(f) + "].");
      }
    }
  }
  for (std::size_t i = 0; i < m.warnings.size(); ++i) {
    const std::string p = "warnings[" + std::to_string(i) + "].";
    if (!profile.find(m.warnings[i].sensor)) {
      throw ValidationError(p + "sensor_id", "sensor '" + std::string(to_string(m.warnings[i].sensor)) +
                                                 "' is not in the hardware profile");
    }
    try {
      m.warnings[i].validate();
    } catch (const ValidationError& e) {
      throw e.nested(p);
    }
  }
}

InstallOutcome Registry::install(DapsManifest m, double t, const std::string& principal) {
  const std::string action = "install " + m.name + "@" + m.version.str();
  std::lock_guard lock(mu_);
  try {
    validate_manifest(m, profile_);
    const RegistrySnapshot& cur = *current_;
    std::optional<Version> superseded;
    for (const auto& pkg : cur.packages) {
      if (pkg.name == m.name) {
        if (!(m.version > pkg.version)) {
          throw VersionConflictError("package '" + m.name + "' version " + m.version.str() +
                                     " is not newer than installed " + pkg.version.str());
        }
        superseded = pkg.version;
        continue;
      }
      for (std::size_t i = 0; i < m.sensors.size(); ++i) {
        for (const auto& b : pkg.sensors) {
          if (b.sensor == m.sensors[i].sensor) {
            throw ValidationError("sensors[" + std::to_string(i) + "].sensor_id",
                                  "sensor '" + std::string(to_string(b.sensor)) + "' already bound by package '" +
                                      pkg.name + "'");
          }
        }
      }
    }

    auto next = std::make_shared<RegistrySnapshot>();
    next->generation = cur.generation + 1;
    for (const auto& pkg : cur.packages) {
      if (pkg.name != m.name) next->packages.push_back(pkg);
    }
    InstallOutcome out{m.name, m.version, superseded, next->generation};
    next->packages.push_back(std::move(m));
    std::sort(next->packages.begin(), next->packages.end(),
              [](const DapsManifest& a, const DapsManifest& b) { return a.name < b.name; });
    current_ = std::move(next);
    audit_.push_back({t, principal, action,
                      superseded ? "ok (superseded " + superseded->str() + ")" : std::string("ok")});
    return out;
  } catch (const std::exception& e) {
    audit_.push_back({t, principal, action, std::string("rejected: ") + e.what()});
    throw;
  }
}

std::shared_ptr<const RegistrySnapshot> Registry::snapshot() const {
  std::lock_guard lock(mu_);
  return current_;
}

std::vector<AuditEntry> Registry::audit() const {
  std::lock_guard lock(mu_);
  return audit_;
}

std::vector<WarningTransition> evaluate_warnings(const dsp::SensorFrame& frame,
                                                 std::span<const WarningRule> rules,
                                                 std::vector<RuleState>& state) {
  using Phase = RuleState::Phase;
  state.resize(rules.size());
  std::vector<WarningTransition> out;
  for (std::size_t i = 0; i < rules.size(); ++i) {
    const auto& rule = rules[i];
    auto& st = state[i];
    const double v = frame.filtered[static_cast<std::size_t>(rule.sensor)];

    switch (st.phase) {
      case Phase::Clear:
        if (v < rule.raise_threshold) break;
        st.phase = Phase::Pending;
        st.pending_since = frame.t;
        st.pending_peak = v;
        [[fallthrough]];
      case Phase::Pending:
        if (v < rule.raise_threshold) {
          st.phase = Phase::Clear;
          break;
        }
        st.pending_peak = std::max(st.pending_peak, v);
        if (frame.t - st.pending_since >= rule.min_duration) {
          st.phase = Phase::Raised;
          st.event = WarningEvent{rule.sensor, rule.severity, frame.t, std::nullopt, st.pending_peak, st.event.package};
          out.push_back({TransitionKind::Raised, frame.t, st.event});
        }
        break;
      case Phase::Raised:
        st.event.peak_value = std::max(st.event.peak_value, v);
        if (v <= rule.clear_threshold) {
          st.phase = Phase::Clear;
          st.event.cleared_at = frame.t;
          out.push_back({TransitionKind::Cleared, frame.t, st.event});
        }
        break;
    }
  }
  return out;
}

json to_json(const WarningEvent& e) {
  json j{{"sensor", to_string(e.sensor)},
         {"severity", to_string(e.severity)},
         {"raised_at", e.raised_at},
         {"cleared_at", nullptr},
         {"peak_value", e.peak_value},
         {"package", e.package}};
  if (e.cleared_at) j["cleared_at"] = *e.cleared_at;
  return j;
}

json to_json(const WarningTransition& tr) {
  return {{"transition", to_string(tr.kind)}, {"t", tr.t}, {"event", to_json(tr.event)}};
}

TimeSeriesStore::TimeSeriesStore(double retention_s, std::optional<std::filesystem::path> dir)
    : retention_s_(retention_s), dir_(std::move(dir)) {
  if (dir_) load();
}

void TimeSeriesStore::prune(std::deque<StoredSample>& series) {
  if (series.empty()) return;
  const double horizon = series.back().t - retention_s_;
  while (!series.empty() && series.front().t < horizon) series.pop_front();
}

void TimeSeriesStore::load() {
  std::filesystem::create_directories(*dir_);
  for (auto id : kAllSensors) {
    const auto idx = static_cast<std::size_t>(id);
    const auto path = *dir_ / (std::string(to_string(id)) + ".ndjson");
    if (std::filesystem::exists(path)) {
      std::ifstream in(path);
      std::string line;
      std::size_t line_no = 0;
      while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
          j = json::parse(line);
        } catch (const json::parse_error&) {
          throw ParseError(path.string(), line_no, "", "malformed store record");
        }
        if (line_no == 1) {
          if (j.value("format", "") != "lnr-timeseries" || j.value("version", 0) != kStoreFormatVersion) {
            throw ParseError(path.string(), 1, "format", "unsupported store header");
          }
          continue;
        }
        series_[idx].push_back({j.at("t").get<double>(), j.at("raw").get<std::uint16_t>(),
                                j.at("filtered").get<double>()});
      }
      prune(series_[idx]);
      files_[idx] = std::make_unique<std::ofstream>(path, std::ios::app);
    } else {
      files_[idx] = std::make_unique<std::ofstream>(path);
      json header{{"format", "lnr-timeseries"}, {"version", kStoreFormatVersion}, {"sensor", to_string(id)}};
      *files_[idx] << header.dump() << '\n';
    }
  }
}

void TimeSeriesStore::append(SensorId id, const StoredSample& s) {
  const auto idx = static_cast<std::size_t>(id);
  std::unique_lock lock(mu_);
  auto& series = series_[idx];
  if (!series.empty() && s.t < series.back().t) {
    throw ValidationError("t", "samples must be appended in time order");
  }
  series.push_back(s);
  prune(series);
  if (files_[idx]) {
    *files_[idx] << json{{"t", s.t}, {"raw", s.raw}, {"filtered", s.filtered}}.dump() << '\n';
  }
}

std::vector<Bucket> TimeSeriesStore::query(std::string_view sensor, double t1, double t2, std::size_t stride) const {
  auto id = parse_sensor_id(sensor);
  if (!id) throw NotFoundError("unknown sensor '" + std::string(sensor) + "'");
  return query(*id, t1, t2, stride);
}

std::vector<Bucket> TimeSeriesStore::query(SensorId id, double t1, double t2, std::size_t stride) const {
  if (t1 > t2) throw ValidationError("t1", "must not exceed t2");
  if (stride < 1) throw ValidationError("stride", "must be >= 1");
  std::shared_lock lock(mu_);
  const auto& series = series_[static_cast<std::size_t>(id)];
  auto lo = std::lower_bound(series.begin(), series.end(), t1,
                             [](const StoredSample& s, double t) { return s.t < t; });
  auto hi = std::upper_bound(series.begin(), series.end(), t2,
                             [](double t, const StoredSample& s) { return t < s.t; });
  std::vector<Bucket> out;
  for (auto it = lo; it < hi;) {
    const auto remaining = static_cast<std::size_t>(hi - it);
    const auto n = std::min(stride, remaining);
    Bucket b{it->t, it->raw, it->filtered, it->filtered, it->filtered, n};
    for (auto k = it; k != it + static_cast<std::ptrdiff_t>(n); ++k) {
      b.min = std::min(b.min, k->filtered);
      b.max = std::max(b.max, k->filtered);
    }
    out.push_back(b);
    it += static_cast<std::ptrdiff_t>(n);
  }
  return out;
}

std::size_t TimeSeriesStore::size(SensorId id) const {
  std::shared_lock lock(mu_);
  return series_[static_cast<std::size_t>(id)].size();
}

void TimeSeriesStore::flush() {
  std::unique_lock lock(mu_);
  for (auto& f : files_) {
    if (f) f->flush();
  }
}

}  // namespace lnr::daps
