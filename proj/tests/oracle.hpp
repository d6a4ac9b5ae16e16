#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "lnr/main_unit.hpp"
#include "lnr/scenario.hpp"

namespace lnr::testing {

// Random drive script: timed moves, occasionally with idle gaps.
inline std::vector<ScenarioStep> random_script(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> count(3, 8), pick(0, 3), dur(150, 3000), gap(0, 1);
  const DriveCommand moves[] = {DriveCommand::Forward, DriveCommand::Backward, DriveCommand::TurnLeft,
                                DriveCommand::TurnRight};
  std::vector<ScenarioStep> steps;
  SimTime t = 0;
  const int n = count(rng);
  for (int i = 0; i < n; ++i) {
    const SimTime d = dur(rng);
    steps.push_back({t, moves[pick(rng)], d, 0});
    t += d + (gap(rng) ? 400 : 0);
  }
  return steps;
}

struct OracleCheck {
  double error = 0.0;  // distance between dead-reckoned and true midpoint
  double bound = 0.0;
  std::size_t segments = 0;
};

// Per-segment budget: two tick lengths plus the heading-quantization term.
inline OracleCheck oracle_check(const ScenarioResult& r, double tick_length) {
  const double half_q = (360.0 / 256.0) / 2.0 * std::numbers::pi / 180.0;
  OracleCheck c;
  for (const auto& s : r.path.segments()) c.bound += 2.0 * tick_length + s.distance * std::sin(half_q);
  c.segments = r.path.segments().size();
  const auto& end = r.path.last();
  c.error = std::hypot(end.x - r.truth.pose.x, end.y - r.truth.pose.y);
  return c;
}

}  // namespace lnr::testing
