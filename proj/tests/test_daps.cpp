#include <atomic>
#include <filesystem>
#include <random>
#include <thread>

#include <unistd.h>

#include "doctest.h"
#include "lnr/daps.hpp"
#include "lnr/errors.hpp"

using namespace lnr;
using namespace lnr::daps;

namespace {

std::string manifest_text(const std::string& name, const std::string& version, const std::string& sensor = "co",
                          double gain = 0.1) {
  return R"({
  "name": ")" + name + R"(",
  "version": ")" + version + R"(",
  "description": "air quality",
  "sensors": [
    {"sensor_id": ")" + sensor + R"(", "calibration": {"gain": )" + std::to_string(gain) + R"(, "offset": 0},
     "filters": [{"kind": "moving_average", "window": 3}], "unit": "ppm"}
  ],
  "warnings": [
    {"sensor_id": ")" + sensor + R"(", "raise_threshold": 50, "clear_threshold": 45, "min_duration": 0, "severity": "warning"}
  ]
})";
}

dsp::SensorFrame frame(double t, SensorId id, double v) {
  dsp::SensorFrame f;
  f.t = t;
  f.filtered[static_cast<std::size_t>(id)] = v;
  return f;
}

std::vector<WarningTransition> feed(const WarningRule& rule, std::vector<std::pair<double, double>> samples) {
  std::vector<RuleState> st;
  std::vector<WarningTransition> all;
  const std::vector<WarningRule> rules{rule};
  for (auto [t, v] : samples) {
    auto tr = evaluate_warnings(frame(t, rule.sensor, v), rules, st);
    all.insert(all.end(), tr.begin(), tr.end());
  }
  return all;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("lnr_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_SUITE("daps") {
  TEST_CASE("versions compare numerically per component") {
    CHECK(Version::parse("1.0.1") > Version::parse("1.0.0"));
    CHECK(Version::parse("1.10.0") > Version::parse("1.9.9"));
    CHECK(Version::parse("0.9.0") < Version::parse("1.0.0"));
    CHECK(Version::parse("2.3.4").str() == "2.3.4");
    CHECK_THROWS_AS(Version::parse("1.0"), ValidationError);
    CHECK_THROWS_AS(Version::parse("1.a.0"), ValidationError);
  }

  TEST_CASE("manifest parsing round-trips through JSON") {
    auto m = parse_manifest(manifest_text("air", "1.0.0"));
    CHECK(m.name == "air");
    CHECK(m.version == Version{1, 0, 0});
    REQUIRE(m.sensors.size() == 1);
    CHECK(m.sensors[0].sensor == SensorId::Co);
    CHECK(m.sensors[0].filters[0] == dsp::FilterSpec::moving_average(3));
    REQUIRE(m.warnings.size() == 1);
    CHECK(m.warnings[0].raise_threshold == 50);
    auto again = manifest_from_json(to_json(m));
    CHECK(to_json(again) == to_json(m));
  }

  TEST_CASE("malformed manifests report line or field") {
    try {
      parse_manifest("{\n  \"name\": \"x\",\n  \"version\": \n}", "bad.json");
      FAIL("accepted");
    } catch (const ParseError& e) {
      CHECK(e.line() == 4);
      CHECK(std::string(e.what()).find("bad.json:4") != std::string::npos);
    }
    try {
      parse_manifest(R"({"name": "x", "version": "1.0.0", "sensors": [{"sensor_id": "co", "calibration": {"gain": 1}, "filters": [{"kind": "median", "window": 0}]}]})");
      FAIL("accepted");
    } catch (const ParseError& e) {
      CHECK(e.field() == "sensors[0].filters[0].window");
    }
    try {
      parse_manifest(R"({"name": "x", "version": "1.0.0", "colour": "red"})");
      FAIL("accepted");
    } catch (const ParseError& e) {
      CHECK(e.field() == "colour");
    }
    try {
      parse_manifest(R"({"name": "x", "version": "1.0.0", "warnings": [{"sensor_id": "co", "raise_threshold": 40, "clear_threshold": 45}]})");
      FAIL("accepted");
    } catch (const ParseError& e) {
      INFO(e.field());
      CHECK(e.field().find("warnings[0]") == 0);
    }
  }

  TEST_CASE("install, upgrade, conflict") {
    Registry reg(HardwareProfile::default_profile());
    auto a = reg.install(parse_manifest(manifest_text("air", "1.0.0")), 1.0, "admin");
    CHECK(!a.superseded);
    CHECK(a.generation == 1);
    REQUIRE(reg.snapshot()->packages.size() == 1);

    auto b = reg.install(parse_manifest(manifest_text("air", "1.0.1")), 2.0, "admin");
    REQUIRE(b.superseded);
    CHECK(*b.superseded == Version{1, 0, 0});
    REQUIRE(reg.snapshot()->packages.size() == 1);
    CHECK(reg.snapshot()->packages[0].version == Version{1, 0, 1});

    CHECK_THROWS_AS(reg.install(parse_manifest(manifest_text("air", "0.9.0")), 3.0), VersionConflictError);
    CHECK_THROWS_AS(reg.install(parse_manifest(manifest_text("air", "1.0.1")), 3.0), VersionConflictError);
    CHECK(reg.snapshot()->packages[0].version == Version{1, 0, 1});
    CHECK(reg.snapshot()->generation == 2);

    const auto audit = reg.audit();
    REQUIRE(audit.size() == 4);
    CHECK(audit[0].outcome == "ok");
    CHECK(audit[1].outcome.find("superseded 1.0.0") != std::string::npos);
    CHECK(audit[2].outcome.find("rejected") == 0);
  }

  TEST_CASE("sensors outside the profile and double bindings are rejected") {
    HardwareProfile partial;
    partial.sensors.push_back({SensorId::Temperature, {0.1, -20}, "degC"});
    Registry reg(partial);
    try {
      reg.install(parse_manifest(manifest_text("air", "1.0.0", "co")), 0);
      FAIL("accepted");
    } catch (const ValidationError& e) {
      CHECK(e.field() == "sensors[0].sensor_id");
    }
    CHECK(reg.snapshot()->packages.empty());

    Registry full(HardwareProfile::default_profile());
    full.install(parse_manifest(manifest_text("one", "1.0.0", "no")), 0);
    CHECK_THROWS_AS(full.install(parse_manifest(manifest_text("two", "1.0.0", "no")), 0), ValidationError);
    CHECK_NOTHROW(full.install(parse_manifest(manifest_text("two", "1.0.0", "smoke")), 0));
  }

  TEST_CASE("snapshots are immutable while installs proceed") {
    Registry reg(HardwareProfile::default_profile());
    reg.install(parse_manifest(manifest_text("air", "1.0.0", "co", 1.0)), 0);
    std::atomic<bool> stop{false};
    std::atomic<int> bad{0};
    std::vector<std::thread> readers;
    for (int r = 0; r < 4; ++r) {
      readers.emplace_back([&] {
        while (!stop) {
          auto snap = reg.snapshot();
          // Exactly one version of the package, and its gain matches its version.
          if (snap->packages.size() != 1) ++bad;
          const auto& p = snap->packages[0];
          if (p.sensors[0].calibration.gain != p.version.patch + 1.0) ++bad;
        }
      });
    }
    for (std::uint32_t v = 1; v < 300; ++v) {
      reg.install(parse_manifest(manifest_text("air", "1.0." + std::to_string(v), "co", v + 1.0)), v);
    }
    stop = true;
    for (auto& t : readers) t.join();
    CHECK(bad == 0);
    CHECK(reg.snapshot()->generation == 300);
  }

  TEST_CASE("hysteresis: CO trace 49, 51, 47, 44") {
    WarningRule co{SensorId::Co, 50, 45, 0, Severity::Warning};
    std::vector<RuleState> st;
    const std::vector<WarningRule> rules{co};
    CHECK(evaluate_warnings(frame(0, SensorId::Co, 49), rules, st).empty());
    auto r = evaluate_warnings(frame(1, SensorId::Co, 51), rules, st);
    REQUIRE(r.size() == 1);
    CHECK(r[0].kind == TransitionKind::Raised);
    CHECK(r[0].event.raised_at == 1);
    CHECK(evaluate_warnings(frame(2, SensorId::Co, 47), rules, st).empty());
    CHECK(st[0].phase == RuleState::Phase::Raised);
    auto c = evaluate_warnings(frame(3, SensorId::Co, 44), rules, st);
    REQUIRE(c.size() == 1);
    CHECK(c[0].kind == TransitionKind::Cleared);
    CHECK(c[0].event.cleared_at == 3);
    CHECK(c[0].event.peak_value == 51);
  }

  TEST_CASE("values below the clear threshold never raise") {
    WarningRule co{SensorId::Co, 50, 45, 0, Severity::Info};
    std::vector<std::pair<double, double>> s;
    for (int i = 0; i < 100; ++i) s.push_back({double(i), 10.0 + i % 30});
    CHECK(feed(co, s).empty());
  }

  TEST_CASE("duration gate raises on the third of three 1 Hz samples") {
    WarningRule co{SensorId::Co, 50, 45, 2, Severity::Critical};
    auto tr = feed(co, {{0, 51}, {1, 51}, {2, 51}});
    REQUIRE(tr.size() == 1);
    CHECK(tr[0].t == 2);
    CHECK(tr[0].event.severity == Severity::Critical);
    // A dip below raise restarts the gate.
    CHECK(feed(co, {{0, 51}, {1, 49}, {2, 51}, {3, 51}}).empty());
  }

  TEST_CASE("transitions alternate on random streams") {
    std::mt19937 rng(31);
    std::uniform_real_distribution<double> v(30, 70);
    for (int trial = 0; trial < 50; ++trial) {
      WarningRule r{SensorId::Smoke, 55, 45, static_cast<double>(trial % 4), Severity::Warning};
      std::vector<std::pair<double, double>> s;
      for (int i = 0; i < 300; ++i) s.push_back({double(i), v(rng)});
      auto tr = feed(r, s);
      for (std::size_t i = 0; i < tr.size(); ++i) {
        REQUIRE(tr[i].kind == (i % 2 == 0 ? TransitionKind::Raised : TransitionKind::Cleared));
        if (tr[i].event.cleared_at) REQUIRE(*tr[i].event.cleared_at >= tr[i].event.raised_at);
      }
    }
  }

  TEST_CASE("rule validation requires a nonempty band") {
    CHECK_THROWS_AS((WarningRule{SensorId::Co, 50, 50, 0, Severity::Info}.validate()), ValidationError);
    CHECK_THROWS_AS((WarningRule{SensorId::Co, 50, 40, -1, Severity::Info}.validate()), ValidationError);
  }

  TEST_CASE("store query: ranges and stride buckets") {
    TimeSeriesStore store;
    for (int i = 0; i < 100; ++i) store.append(SensorId::Co, {double(i), std::uint16_t(i), double(i % 17)});
    CHECK(store.query("co", 200, 300).empty());
    CHECK(store.query("co", 10.5, 10.7).empty());
    CHECK(store.query("co", 0, 99).size() == 100);
    auto inclusive = store.query(SensorId::Co, 10, 20);
    CHECK(inclusive.size() == 11);
    CHECK(inclusive.front().t == 10);
    CHECK(inclusive.back().t == 20);

    auto b = store.query("co", 0, 99, 10);
    REQUIRE(b.size() == 10);
    for (std::size_t k = 0; k < b.size(); ++k) {
      CHECK(b[k].count == 10);
      CHECK(b[k].t == 10.0 * k);
      double mn = 1e9, mx = -1e9;
      for (int i = 10 * k; i < 10 * (int(k) + 1); ++i) {
        mn = std::min(mn, double(i % 17));
        mx = std::max(mx, double(i % 17));
      }
      CHECK(b[k].min == mn);
      CHECK(b[k].max == mx);
    }
    CHECK(store.query("co", 0, 99, 30).back().count == 10);
    CHECK_THROWS_AS(store.query("ozone", 0, 1), NotFoundError);
    CHECK_THROWS_AS(store.query("co", 5, 1), ValidationError);
    CHECK_THROWS_AS(store.append(SensorId::Co, {50.0, 0, 0}), ValidationError);
  }

  TEST_CASE("store retention drops old samples") {
    TimeSeriesStore store(10.0);
    for (int i = 0; i <= 30; ++i) store.append(SensorId::No, {double(i), 0, 0});
    CHECK(store.size(SensorId::No) == 11);
    CHECK(store.query("no", 0, 100).front().t == 20);
  }

  TEST_CASE("store survives a restart with identical query results") {
    const auto dir = temp_dir("store");
    std::vector<std::vector<Bucket>> before;
    {
      TimeSeriesStore store(86400.0, dir);
      std::mt19937 rng(4);
      std::uniform_int_distribution<int> raw(0, 1023);
      for (int i = 0; i < 200; ++i) {
        for (auto id : kAllSensors) {
          const auto r = static_cast<std::uint16_t>(raw(rng));
          store.append(id, {i * 0.5, r, r * 0.1 + 0.123456789});
        }
      }
      store.flush();
      for (auto id : kAllSensors) {
        before.push_back(store.query(id, 0, 1000));
        before.push_back(store.query(id, 13.5, 47.25, 7));
      }
    }
    TimeSeriesStore reopened(86400.0, dir);
    std::size_t k = 0;
    for (auto id : kAllSensors) {
      for (auto q : {reopened.query(id, 0, 1000), reopened.query(id, 13.5, 47.25, 7)}) {
        const auto& ref = before[k++];
        REQUIRE(q.size() == ref.size());
        for (std::size_t i = 0; i < q.size(); ++i) {
          CHECK(q[i].t == ref[i].t);
          CHECK(q[i].raw == ref[i].raw);
          CHECK(q[i].value == ref[i].value);
          CHECK(q[i].min == ref[i].min);
          CHECK(q[i].max == ref[i].max);
        }
      }
    }
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("store files carry a versioned header") {
    const auto dir = temp_dir("header");
    {
      TimeSeriesStore store(100.0, dir);
      store.append(SensorId::Humidity, {1.0, 650, 65.0});
    }
    std::ifstream in(dir / "humidity.ndjson");
    std::string header;
    std::getline(in, header);
    auto j = nlohmann::json::parse(header);
    CHECK(j["format"] == "lnr-timeseries");
    CHECK(j["version"] == kStoreFormatVersion);
    CHECK(j["sensor"] == "humidity");
    std::filesystem::remove_all(dir);
  }
}
