#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <thread>

#include "doctest.h"
#include "lnr/dsp.hpp"
#include "lnr/errors.hpp"

using namespace lnr;
using namespace lnr::dsp;

namespace {

std::vector<double> run(std::vector<double> xs, std::vector<FilterSpec> specs) {
  return apply_filter_chain(xs, specs);
}

// Naive oracle: statistic over the trailing window of up to w samples.
std::vector<double> naive(const std::vector<double>& xs, std::size_t w, bool median) {
  std::vector<double> out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const std::size_t lo = i + 1 > w ? i + 1 - w : 0;
    std::vector<double> win(xs.begin() + lo, xs.begin() + i + 1);
    if (median) {
      std::sort(win.begin(), win.end());
      const std::size_t n = win.size();
      out.push_back(n % 2 ? win[n / 2] : 0.5 * (win[n / 2 - 1] + win[n / 2]));
    } else {
      double s = 0;
      for (double v : win) s += v;
      out.push_back(s / win.size());
    }
  }
  return out;
}

std::vector<double> random_stream(std::mt19937& rng, std::size_t n) {
  std::uniform_real_distribution<double> d(-500, 500);
  std::vector<double> xs(n);
  for (auto& x : xs) x = d(rng);
  return xs;
}

}  // namespace

TEST_SUITE("dsp") {
  TEST_CASE("calibration is affine") {
    CHECK(calibrate(512, {1, 0}) == 512.0);
    CHECK(calibrate(100, {0.5, -10}) == 40.0);
    CHECK(calibrate(0, {3.7, 2.5}) == 2.5);
  }

  TEST_CASE("calibration gain must be finite and nonzero") {
    CHECK_THROWS_AS((Calibration{0, 1}.validate()), ValidationError);
    CHECK_THROWS_AS((Calibration{NAN, 1}.validate()), ValidationError);
    CHECK_THROWS_AS((Calibration{INFINITY, 1}.validate()), ValidationError);
    CHECK_NOTHROW((Calibration{-2, 1}.validate()));
  }

  TEST_CASE("moving average warms up on partial windows") {
    CHECK(run({1, 2, 3, 4}, {FilterSpec::moving_average(3)}) == std::vector<double>{1, 1.5, 2, 3});
  }

  TEST_CASE("identity cases") {
    const std::vector<double> xs{5, -1, 9, 9, 0.25, 3};
    CHECK(run(xs, {FilterSpec::median(1)}) == xs);
    CHECK(run({5, 7, 9}, {FilterSpec::exponential(1.0)}) == std::vector<double>{5, 7, 9});
    CHECK(run(xs, {}) == xs);
    CHECK(run({}, {FilterSpec::moving_average(4)}).empty());
  }

  TEST_CASE("median with even window averages the middle pair") {
    CHECK(run({1, 5, 2, 8}, {FilterSpec::median(4)}) == std::vector<double>{1, 3, 2, 3.5});
  }

  TEST_CASE("windowed filters match a naive oracle") {
    std::mt19937 rng(11);
    for (std::size_t w : {1u, 2u, 3u, 5u, 8u}) {
      auto xs = random_stream(rng, 60);
      auto ma = run(xs, {FilterSpec::moving_average(w)});
      auto md = run(xs, {FilterSpec::median(w)});
      auto ma_ref = naive(xs, w, false);
      auto md_ref = naive(xs, w, true);
      for (std::size_t i = 0; i < xs.size(); ++i) {
        REQUIRE(ma[i] == doctest::Approx(ma_ref[i]).epsilon(1e-12));
        REQUIRE(md[i] == md_ref[i]);
      }
    }
  }

  TEST_CASE("moving average is linear") {
    std::mt19937 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      auto x = random_stream(rng, 40);
      auto y = random_stream(rng, 40);
      const double a = 1.7, b = -0.3;
      std::vector<double> mix(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) mix[i] = a * x[i] + b * y[i];
      const auto spec = FilterSpec::moving_average(1 + trial % 7);
      auto lhs = run(mix, {spec});
      auto mx = run(x, {spec});
      auto my = run(y, {spec});
      for (std::size_t i = 0; i < x.size(); ++i) {
        REQUIRE(lhs[i] == doctest::Approx(a * mx[i] + b * my[i]).epsilon(1e-9));
      }
    }
  }

  TEST_CASE("windowed outputs stay within the window's range") {
    std::mt19937 rng(8);
    for (std::size_t w : {2u, 4u, 9u}) {
      auto xs = random_stream(rng, 80);
      for (const auto& spec : {FilterSpec::moving_average(w), FilterSpec::median(w)}) {
        auto ys = run(xs, {spec});
        for (std::size_t i = 0; i < xs.size(); ++i) {
          const std::size_t lo = i + 1 > w ? i + 1 - w : 0;
          auto [mn, mx] = std::minmax_element(xs.begin() + lo, xs.begin() + i + 1);
          REQUIRE(ys[i] >= *mn - 1e-9);
          REQUIRE(ys[i] <= *mx + 1e-9);
        }
      }
    }
  }

  TEST_CASE("median is idempotent on constant streams") {
    std::vector<double> c(20, 42.5);
    CHECK(run(c, {FilterSpec::median(5)}) == c);
    CHECK(run(run(c, {FilterSpec::median(5)}), {FilterSpec::median(5)}) == c);
  }

  TEST_CASE("exponential smoothing converges geometrically") {
    const double c = 10.0, x0 = 100.0;
    for (double alpha : {0.1, 0.3, 0.75}) {
      std::vector<double> xs{x0};
      xs.resize(50, c);
      auto ys = run(xs, {FilterSpec::exponential(alpha)});
      for (std::size_t n = 0; n < ys.size(); ++n) {
        REQUIRE(std::abs(ys[n] - c) <= std::abs(x0 - c) * std::pow(1 - alpha, n) + 1e-9);
      }
    }
  }

  TEST_CASE("inserting Median(1) anywhere leaves the chain unchanged") {
    std::mt19937 rng(3);
    auto xs = random_stream(rng, 50);
    std::vector<FilterSpec> base{FilterSpec::moving_average(3), FilterSpec::exponential(0.4), FilterSpec::median(3)};
    auto ref = run(xs, base);
    for (std::size_t pos = 0; pos <= base.size(); ++pos) {
      auto chain = base;
      chain.insert(chain.begin() + static_cast<long>(pos), FilterSpec::median(1));
      CHECK(run(xs, chain) == ref);
    }
  }

  TEST_CASE("filter spec validation names the field") {
    try {
      FilterSpec::moving_average(0).validate();
      FAIL("window 0 accepted");
    } catch (const ValidationError& e) {
      CHECK(e.field() == "window");
    }
    for (double a : {0.0, -0.1, 1.5, std::nan("")}) {
      try {
        FilterSpec::exponential(a).validate();
        FAIL("bad alpha accepted");
      } catch (const ValidationError& e) {
        CHECK(e.field() == "alpha");
      }
    }
  }

  TEST_CASE("retune: unknown sensor, bad window, success with reset and audit") {
    DspEngine eng;
    CHECK_THROWS_AS(eng.retune("ozone", {}, {1, 0}, 0), NotFoundError);
    try {
      eng.retune("co", {FilterSpec::median(3), FilterSpec::moving_average(0)}, {1, 0}, 0);
      FAIL("window 0 accepted");
    } catch (const ValidationError& e) {
      CHECK(e.field() == "filters[1].window");
    }
    try {
      eng.retune("co", {}, {0, 0}, 0);
      FAIL("gain 0 accepted");
    } catch (const ValidationError& e) {
      CHECK(e.field() == "calibration.gain");
    }
    CHECK(eng.audit_log().empty());

    SensorReadings raw{};
    raw[0] = 100;
    eng.configure(SensorId::Co, {{1, 0}, {FilterSpec::moving_average(4)}, "ppm"});
    eng.process(0, raw);
    raw[0] = 200;
    CHECK(eng.process(1, raw).filtered[0] == 150);

    eng.retune("co", {FilterSpec::moving_average(2)}, {0.5, -10}, 2.0);
    raw[0] = 100;
    auto f = eng.process(3, raw);
    CHECK(f.value[0] == 40.0);
    CHECK(f.filtered[0] == 40.0);  // state was reset, no carry from the old chain
    REQUIRE(eng.audit_log().size() == 1);
    CHECK(eng.audit_log()[0].sensor == "co");
    CHECK(eng.audit_log()[0].t == 2.0);
    CHECK(eng.channel(SensorId::Co).unit == "ppm");
  }

  TEST_CASE("retune is atomic with respect to frame processing") {
    DspEngine eng;
    eng.configure(SensorId::No, {{1, 0}, {}, ""});
    SensorReadings raw{};
    raw[1] = 10;
    std::atomic<bool> done{false};
    std::vector<double> seen;
    std::thread reader([&] {
      for (int i = 0; i < 4000; ++i) seen.push_back(eng.process(i, raw).value[1]);
      done = true;
    });
    int k = 0;
    while (!done) {
      const double g = (k++ % 2) ? 2.0 : 3.0;
      eng.retune("no", {}, {g, g}, k);
    }
    reader.join();
    // Each frame uses one consistent (gain, offset) pair.
    for (double v : seen) REQUIRE((v == 10.0 || v == 22.0 || v == 33.0));
  }
}
