#include "lnr/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "lnr/errors.hpp"

namespace lnr {

using nlohmann::json;

void RobotConfig::validate() const {
  try {
    world.validate();
  } catch (const ValidationError& e) {
    throw e.nested("world.");
  }
  if (timing.tick_ms < 1) throw ValidationError("timing.tick_ms", "must be >= 1");
  if (timing.settle_ms < 0) throw ValidationError("timing.settle_ms", "must be >= 0");
  if (timing.poll_interval_ms < 1) throw ValidationError("timing.poll_interval_ms", "must be >= 1");
  if (timing.sensor_interval_ms < 1) throw ValidationError("timing.sensor_interval_ms", "must be >= 1");
  if (!(split_threshold_deg > 0.0)) throw ValidationError("navigation.split_threshold_deg", "must be > 0");
  if (service.queue_bound < 1) throw ValidationError("service.queue_bound", "must be >= 1");
  if (!(service.realtime_factor > 0.0)) throw ValidationError("service.realtime_factor", "must be > 0");
  if (!(store.retention_s > 0.0)) throw ValidationError("store.retention_s", "must be > 0");
}

RobotConfig default_config() {
  RobotConfig cfg;
  // Counts on the 10-bit ADC; see the default hardware profile for units.
  const std::array<double, kSensorCount> base = {120.0, 50.0, 20.0, 470.0, 650.0};
  for (std::size_t i = 0; i < kSensorCount; ++i) {
    cfg.world.sensor_field[i].base = base[i];
    cfg.world.sensor_noise_sigma[i] = 2.0;
  }
  return cfg;
}

namespace {

class Reader {
 public:
  explicit Reader(std::string path) : path_(std::move(path)) {}

  std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

  void object(const json& j) const {
    if (!j.is_object()) throw ValidationError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  void only(const json& j, std::initializer_list<const char*> allowed) const {
    object(j);
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return it.key() == a; })) {
        throw ValidationError(key(it.key()), "unknown key");
      }
    }
  }

  template <typename T>
  void number(const json& j, const char* k, T& out) const {
    if (!j.contains(k)) return;
    const json& v = j[k];
    if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ValidationError(key(k), "expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.get<long long>() < 0) throw ValidationError(key(k), "must be >= 0");
      }
    } else {
      if (!v.is_number()) throw ValidationError(key(k), "expected a number");
    }
    out = v.get<T>();
  }

  void text(const json& j, const char* k, std::string& out) const {
    if (!j.contains(k)) return;
    if (!j[k].is_string()) throw ValidationError(key(k), "expected a string");
    out = j[k].get<std::string>();
  }

 private:
  std::string path_;
};

std::pair<double, double> range(const json& j, const char* k, const std::string& path) {
  if (!j.contains(k)) return {-1e300, 1e300};
  const json& v = j[k];
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    throw ValidationError(path + "." + k, "expected [min, max]");
  }
  return {v[0].get<double>(), v[1].get<double>()};
}

}  // namespace

void apply_sensor_fields(const json& j, WorldConfig& world, const std::string& path) {
  Reader r(path);
  r.object(j);
  for (auto it = j.begin(); it != j.end(); ++it) {
    auto id = parse_sensor_id(it.key());
    if (!id) throw ValidationError(r.key(it.key()), "unknown sensor");
    const auto idx = static_cast<std::size_t>(*id);
    const std::string sp = r.key(it.key());
    Reader s(sp);
    const json& f = it.value();
    s.only(f, {"base", "noise_sigma", "regions", "grid"});
    auto& field = world.sensor_field[idx];
    s.number(f, "base", field.base);
    s.number(f, "noise_sigma", world.sensor_noise_sigma[idx]);
    field.regions.clear();

    // Time-windowed regions come first so they override the static grid.
    if (f.contains("regions")) {
      const json& regions = f["regions"];
      if (!regions.is_array()) throw ValidationError(sp + ".regions", "expected an array");
      for (std::size_t i = 0; i < regions.size(); ++i) {
        const std::string rp = sp + ".regions[" + std::to_string(i) + "]";
        Reader rr(rp);
        rr.only(regions[i], {"x", "y", "t", "value"});
        FieldRegion reg;
        std::tie(reg.x_min, reg.x_max) = range(regions[i], "x", rp);
        std::tie(reg.y_min, reg.y_max) = range(regions[i], "y", rp);
        std::tie(reg.t_min, reg.t_max) = range(regions[i], "t", rp);
        if (!regions[i].contains("value")) throw ValidationError(rp + ".value", "missing required key");
        rr.number(regions[i], "value", reg.value);
        field.regions.push_back(reg);
      }
    }
    if (f.contains("grid")) {
      const json& g = f["grid"];
      const std::string gp = sp + ".grid";
      Reader gr(gp);
      gr.only(g, {"x0", "y0", "cell", "cols", "rows", "values"});
      double x0 = 0, y0 = 0, cell = 1;
      std::size_t cols = 0, rows = 0;
      gr.number(g, "x0", x0);
      gr.number(g, "y0", y0);
      gr.number(g, "cell", cell);
      gr.number(g, "cols", cols);
      gr.number(g, "rows", rows);
      if (!(cell > 0)) throw ValidationError(gp + ".cell", "must be > 0");
      if (!g.contains("values") || !g["values"].is_array() || g["values"].size() != cols * rows) {
        throw ValidationError(gp + ".values", "expected rows*cols numbers, row-major from y0 upwards");
      }
      for (std::size_t row = 0; row < rows; ++row) {
        for (std::size_t col = 0; col < cols; ++col) {
          const json& v = g["values"][row * cols + col];
          if (!v.is_number()) throw ValidationError(gp + ".values", "expected numbers");
          FieldRegion reg;
          reg.x_min = x0 + static_cast<double>(col) * cell;
          reg.x_max = reg.x_min + cell;
          reg.y_min = y0 + static_cast<double>(row) * cell;
          reg.y_max = reg.y_min + cell;
          reg.value = v.get<double>();
          field.regions.push_back(reg);
        }
      }
    }
  }
}

RobotConfig config_from_json(const json& j, const std::filesystem::path& base_dir, const std::string& source) {
  RobotConfig cfg = default_config();
  try {
    Reader root("");
    root.only(j, {"world", "profile", "timing", "navigation", "service", "store", "packages"});

    if (j.contains("world")) {
      const json& w = j["world"];
      Reader r("world");
      r.only(w, {"wheel_radius", "track_width", "wheel_speed", "ticks_per_revolution", "seed", "sensors",
                 "sensor_fields_file"});
      r.number(w, "wheel_radius", cfg.world.wheel_radius);
      r.number(w, "track_width", cfg.world.track_width);
      r.number(w, "wheel_speed", cfg.world.wheel_speed);
      r.number(w, "ticks_per_revolution", cfg.world.ticks_per_revolution);
      r.number(w, "seed", cfg.world.seed);
      if (w.contains("sensor_fields_file")) {
        std::string file;
        r.text(w, "sensor_fields_file", file);
        const auto p = base_dir / file;
        std::ifstream in(p);
        if (!in) throw ValidationError("world.sensor_fields_file", "cannot open '" + p.string() + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        json fields;
        try {
          fields = json::parse(ss.str());
        } catch (const json::parse_error& e) {
          const std::string text = ss.str();
          const auto off = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
          throw ParseError(p.string(), 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(off), '\n')),
                           "", "malformed sensor field file");
        }
        apply_sensor_fields(fields, cfg.world, "");
      }
      if (w.contains("sensors")) apply_sensor_fields(w["sensors"], cfg.world, "world.sensors");
    }

    if (j.contains("profile")) {
      const json& p = j["profile"];
      Reader r("profile");
      r.object(p);
      cfg.profile.sensors.clear();
      for (auto it = p.begin(); it != p.end(); ++it) {
        auto id = parse_sensor_id(it.key());
        if (!id) throw ValidationError(r.key(it.key()), "unknown sensor");
        Reader s(r.key(it.key()));
        s.only(it.value(), {"gain", "offset", "unit"});
        daps::SensorProfile sp{*id, {1.0, 0.0}, ""};
        s.number(it.value(), "gain", sp.calibration.gain);
        s.number(it.value(), "offset", sp.calibration.offset);
        s.text(it.value(), "unit", sp.unit);
        try {
          sp.calibration.validate();
        } catch (const ValidationError& e) {
          throw e.nested(s.key(""));
        }
        cfg.profile.sensors.push_back(sp);
      }
    }

    if (j.contains("timing")) {
      Reader r("timing");
      const json& t = j["timing"];
      r.only(t, {"tick_ms", "settle_ms", "poll_interval_ms", "sensor_interval_ms"});
      r.number(t, "tick_ms", cfg.timing.tick_ms);
      r.number(t, "settle_ms", cfg.timing.settle_ms);
      r.number(t, "poll_interval_ms", cfg.timing.poll_interval_ms);
      r.number(t, "sensor_interval_ms", cfg.timing.sensor_interval_ms);
    }

    if (j.contains("navigation")) {
      Reader r("navigation");
      r.only(j["navigation"], {"split_threshold_deg"});
      r.number(j["navigation"], "split_threshold_deg", cfg.split_threshold_deg);
    }

    if (j.contains("service")) {
      Reader r("service");
      const json& s = j["service"];
      r.only(s, {"listen", "admin_token", "queue_bound", "realtime_factor", "console_dir"});
      r.text(s, "listen", cfg.service.listen);
      r.text(s, "admin_token", cfg.service.admin_token);
      r.number(s, "queue_bound", cfg.service.queue_bound);
      r.number(s, "realtime_factor", cfg.service.realtime_factor);
      r.text(s, "console_dir", cfg.service.console_dir);
      if (!cfg.service.console_dir.empty()) cfg.service.console_dir = (base_dir / cfg.service.console_dir).string();
    }

    if (j.contains("store")) {
      Reader r("store");
      r.only(j["store"], {"dir", "retention_s"});
      r.text(j["store"], "dir", cfg.store.dir);
      r.number(j["store"], "retention_s", cfg.store.retention_s);
      if (!cfg.store.dir.empty()) cfg.store.dir = (base_dir / cfg.store.dir).string();
    }

    if (j.contains("packages")) {
      const json& p = j["packages"];
      if (!p.is_array()) throw ValidationError("packages", "expected an array of manifest paths");
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (!p[i].is_string()) throw ValidationError("packages[" + std::to_string(i) + "]", "expected a path");
        cfg.packages.push_back(base_dir / p[i].get<std::string>());
      }
    }

    cfg.validate();
  } catch (const ValidationError& e) {
    throw ParseError(source, 0, e.field(), e.message());
  }
  return cfg;
}

RobotConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "", "cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto off = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    const auto line = 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(off), '\n'));
    throw ParseError(path.string(), line, "", "malformed JSON");
  }
  return config_from_json(j, path.parent_path(), path.string());
}

}  // namespace lnr
