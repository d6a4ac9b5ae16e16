#pragma once

#include <cmath>
#include <numbers>

#include "lnr/config.hpp"
#include "lnr/hw_sim.hpp"

namespace lnr::testing {

inline constexpr double kPi = std::numbers::pi;

// Default geometry, constant noiseless ambient fields.
inline RobotConfig quiet_config(std::uint64_t seed = 1) {
  RobotConfig cfg = default_config();
  cfg.world.seed = seed;
  for (auto& s : cfg.world.sensor_noise_sigma) s = 0.0;
  return cfg;
}

inline double deg_diff(double a, double b) {
  double d = std::fmod(a - b, 360.0);
  if (d > 180.0) d -= 360.0;
  if (d < -180.0) d += 360.0;
  return d;
}

}  // namespace lnr::testing
