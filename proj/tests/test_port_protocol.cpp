#include <random>
#include <set>
#include <sstream>

#include "device_bus.hpp"
#include "doctest.h"
#include "lnr/errors.hpp"
#include "lnr/port_protocol.hpp"

using namespace lnr;
using lnr::testing::DeviceBus;

TEST_SUITE("port_protocol") {
  TEST_CASE("command table is a bijection with the device bytes") {
    std::set<std::uint8_t> seen;
    for (auto c : kAllDriveCommands) {
      const auto b = command_byte(c);
      CHECK(seen.insert(b).second);
      CHECK(drive_command_from_byte(b) == c);
      CHECK(parse_drive_command(to_string(c)) == c);
    }
    CHECK(command_byte(DriveCommand::Forward) == 0x01);
    CHECK(command_byte(DriveCommand::Stop) == 0x00);
    CHECK(!drive_command_from_byte(0x09));
    CHECK(parse_drive_command("TURN_LEFT") == DriveCommand::TurnLeft);
    CHECK(!parse_drive_command("sideways"));
  }

  TEST_CASE("send_command writes the byte and lets 5 ms pass") {
    Simulator sim(WorldConfig{});
    SimBus bus(sim);
    PortDriver drv(bus);
    drv.send_command(DriveCommand::Forward);
    CHECK(sim.registers().data == 0x01);
    CHECK(sim.now() == 5);
    CHECK(sim.state().left_motor == Motor::Forward);
    drv.send_command(DriveCommand::Stop);
    CHECK(sim.registers().data == 0x00);
    CHECK(sim.state().left_motor == Motor::Stopped);
    CHECK(sim.state().right_motor == Motor::Stopped);
  }

  TEST_CASE("detached bus raises a transport error") {
    Simulator sim(WorldConfig{});
    SimBus bus(sim);
    PortDriver drv(bus);
    bus.detach();
    CHECK_THROWS_AS(drv.send_command(DriveCommand::Forward), TransportError);
    CHECK_THROWS_AS(drv.read_compass(), TransportError);
    CHECK_THROWS_AS(drv.read_wheel_ticks(), TransportError);
    bus.attach(sim);
    CHECK_NOTHROW(drv.send_command(DriveCommand::Stop));
  }

  TEST_CASE("nibble read follows the listing sequence") {
    DeviceBus bus;
    bus.set_compass(0x40);
    TraceLog trace;
    PortDriver drv(bus, {}, &trace);
    CHECK(drv.read_nibble_byte(cmd::kReadCompass) == 0x40);
    const auto& r = trace.records();
    REQUIRE(r.size() == 7);
    auto is = [](const TraceRecord& x, SimTime t, Register reg, bool w, std::uint8_t v) {
      return x.t == t && x.reg == reg && x.write == w && x.value == v;
    };
    CHECK(is(r[0], 0, Register::Data, true, 0x09));
    CHECK(is(r[1], 5, Register::Control, false, 0x00));
    CHECK(is(r[2], 5, Register::Control, true, 0x01));
    CHECK(is(r[3], 10, Register::Status, false, 0x80));
    CHECK(is(r[4], 10, Register::Control, false, 0x01));
    CHECK(is(r[5], 10, Register::Control, true, 0x00));
    CHECK(is(r[6], 15, Register::Status, false, 0xC0));
  }

  TEST_CASE("latched zero reads 0x80 in both phases and returns zero") {
    DeviceBus bus;
    bus.set_compass(0);
    TraceLog trace;
    PortDriver drv(bus, {}, &trace);
    CHECK(drv.read_nibble_byte(cmd::kReadCompass) == 0x00);
    CHECK(trace.records()[3].value == 0x80);
    CHECK(trace.records()[6].value == 0x80);
  }

  TEST_CASE("round trip is the identity for all 256 bytes on every channel") {
    DeviceBus bus;
    PortDriver drv(bus);
    for (int b = 0; b < 256; ++b) {
      bus.set_compass(static_cast<std::uint8_t>(b));
      bus.state.left_ticks = 1000 + b;
      bus.state.right_ticks = 512 * 3 + b;
      REQUIRE(drv.read_nibble_byte(cmd::kReadCompass) == b);
      REQUIRE(drv.read_nibble_byte(cmd::kReadLeftTicks) == (1000 + b) % 256);
      REQUIRE(drv.read_nibble_byte(cmd::kReadRightTicks) == b);
    }
  }

  TEST_CASE("compass conversion examples and monotonicity") {
    CHECK(compass_degrees(0) == 0.0);
    CHECK(compass_degrees(128) == 180.0);
    CHECK(compass_degrees(191) == 268.59375);
    CHECK(compass_degrees(255) < 360.0);
    for (int b = 1; b < 256; ++b) {
      REQUIRE(compass_degrees(static_cast<std::uint8_t>(b - 1)) < compass_degrees(static_cast<std::uint8_t>(b)));
    }
    DeviceBus bus;
    bus.set_compass(191);
    PortDriver drv(bus);
    auto c = drv.read_compass();
    CHECK(c.raw == 191);
    CHECK(c.degrees == 268.59375);
  }

  TEST_CASE("wrapping tick deltas") {
    CHECK(wrapping_delta(250, 4) == 10);
    CHECK(wrapping_delta(7, 7) == 0);
    CHECK(wrapping_delta(0, 8) == 8);
    DeviceBus bus;
    PortDriver drv(bus);
    drv.accumulate_ticks(250, 0);
    auto d = drv.accumulate_ticks(4, 8);
    CHECK(d.left == 10);
    CHECK(d.right == 8);
    CHECK(drv.left_total() == 260);
  }

  TEST_CASE("randomized poll schedules never lose ticks") {
    std::mt19937 rng(2024);
    const double tick_s = WorldConfig{}.tick_length() / WorldConfig{}.wheel_speed;
    const auto max_gap = static_cast<int>(254 * tick_s * 1000);  // stays within 255 ticks
    for (int trial = 0; trial < 20; ++trial) {
      Simulator sim(WorldConfig{});
      SimBus bus(sim);
      PortDriver drv(bus);
      std::uniform_int_distribution<int> gap(1, max_gap);
      std::uniform_int_distribution<int> pick(0, 4);
      for (int i = 0; i < 30; ++i) {
        drv.send_command(kAllDriveCommands[pick(rng)]);
        sim.advance(gap(rng));
        drv.read_wheel_ticks();
        // counters keep moving during the ~30 ms read-out
        REQUIRE(drv.left_total() <= sim.state().left_ticks);
        REQUIRE(sim.state().left_ticks - drv.left_total() <= 1);
        REQUIRE(drv.right_total() <= sim.state().right_ticks);
        REQUIRE(sim.state().right_ticks - drv.right_total() <= 1);
      }
      drv.send_command(DriveCommand::Stop);
      drv.read_wheel_ticks();
      REQUIRE(drv.left_total() == sim.state().left_ticks);
      REQUIRE(drv.right_total() == sim.state().right_ticks);
    }
  }

  TEST_CASE("sensor channels carry 10-bit readings") {
    WorldConfig cfg;
    const double bases[] = {0, 255, 256, 777, 1023};
    for (std::size_t i = 0; i < kSensorCount; ++i) cfg.sensor_field[i].base = bases[i];
    Simulator sim(cfg);
    SimBus bus(sim);
    PortDriver drv(bus);
    auto r = drv.read_sensors();
    for (std::size_t i = 0; i < kSensorCount; ++i) CHECK(r[i] == bases[i]);
  }

  TEST_CASE("trace records format and parse back") {
    TraceRecord r{1005, Register::Data, true, 0x01};
    CHECK(format_trace_record(r) == "1005 data W 01");
    auto back = parse_trace_record("1005 data W 01", 1);
    CHECK(back.t == 1005);
    CHECK(back.reg == Register::Data);
    CHECK(back.write);
    CHECK(back.value == 1);

    TraceLog log;
    log.record(r);
    log.record({1010, Register::Status, false, 0xC0});
    std::stringstream ss;
    log.write(ss);
    auto rt = read_trace(ss, "mem");
    REQUIRE(rt.size() == 2);
    CHECK(rt[1].value == 0xC0);
    CHECK(!rt[1].write);
  }

  TEST_CASE("corrupt traces report the line") {
    std::istringstream bad("# header\n1 data W 01\n2 data X 01\n");
    try {
      read_trace(bad, "t.log");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
      CHECK(std::string(e.what()).find("t.log:3") != std::string::npos);
    }
    std::istringstream backwards("5 data W 01\n4 data W 00\n");
    CHECK_THROWS_AS(read_trace(backwards, "t"), ParseError);
    std::istringstream bad_hex("5 data W 1FF\n");
    CHECK_THROWS_AS(read_trace(bad_hex, "t"), ParseError);
    std::istringstream empty("");
    CHECK(read_trace(empty, "t").empty());
  }
}
