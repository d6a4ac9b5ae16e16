// Dead reckoning from compass headings and wheel-tick deltas.
//
// Axis convention everywhere: x East, y North, heading in degrees clockwise
// from North. A straight step of length d at heading h moves the pose by
// (d sin h, d cos h).
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lnr/hw_sim.hpp"

namespace lnr::nav {

struct WheelGeometry {
  double wheel_radius = 0.05;
  unsigned ticks_per_revolution = 8;
  double track_width = 0.30;

  double tick_length() const;
};

double ticks_to_distance(std::uint64_t delta, const WheelGeometry& geom);

// Run segments are straight drives; pivot segments are the chord travelled by
// the axle midpoint while one wheel stays put. Only runs count towards the
// running distance.
enum class SegmentKind { Run, Pivot };

std::string_view to_string(SegmentKind k);

struct PathSegment {
  double heading = 0.0;   // direction of travel, degrees [0, 360)
  double distance = 0.0;  // meters, >= 0
  double t_start = 0.0;
  double t_end = 0.0;
  SegmentKind kind = SegmentKind::Run;
};

struct EstimatedPose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
};

EstimatedPose advance(const EstimatedPose& pose, const PathSegment& seg);

class PathLog {
 public:
  PathLog() = default;
  explicit PathLog(EstimatedPose origin) : origin_(origin) {}

  void append(const PathSegment& seg);

  const EstimatedPose& origin() const { return origin_; }
  const std::vector<PathSegment>& segments() const { return segments_; }
  const std::vector<EstimatedPose>& waypoints() const { return waypoints_; }
  // Last waypoint, or the origin when empty.
  const EstimatedPose& last() const { return waypoints_.empty() ? origin_ : waypoints_.back(); }

 private:
  EstimatedPose origin_;
  std::vector<PathSegment> segments_;
  std::vector<EstimatedPose> waypoints_;
};

struct PathSummary {
  double total_distance = 0.0;
  double net_displacement = 0.0;
};

PathSummary summarize(const PathLog& log);

// Mean direction of a set of angles; {359, 1} gives 0, not 180.
// Returns nullopt when the resultant vanishes.
std::optional<double> circular_mean(std::span<const double> degrees);

// Smallest unsigned angle between two headings, in [0, 180].
double angular_distance(double a, double b);

// What the host last commanded, as seen at the moment the compass was read.
enum class MotionMode { Idle, Forward, Backward, PivotLeft, PivotRight };

struct PollSample {
  double t = 0.0;
  double compass_deg = 0.0;
  std::uint32_t left_delta = 0;
  std::uint32_t right_delta = 0;
  MotionMode mode = MotionMode::Idle;
};

struct SegmenterConfig {
  WheelGeometry geometry;
  double split_threshold_deg = 5.0;
  // Readings are floor-quantized; adding half a quantum centers them in their bin.
  double compass_bias_deg = 360.0 / 512.0;
  std::size_t smoothing_window = 3;
};

// Turns a poll stream into path segments. A run opens when the host starts a
// straight drive and closes when it stops, turns, or the smoothed heading
// drifts past the split threshold. Pivots are closed with the first heading
// read after the turn ends.
class Segmenter {
 public:
  explicit Segmenter(SegmenterConfig cfg) : cfg_(cfg) {}

  std::vector<PathSegment> push(const PollSample& s);
  // Closes whatever is open at time t.
  std::vector<PathSegment> flush(double t);

  // Displacement of the segment still in progress, if any.
  std::optional<PathSegment> provisional() const;
  std::optional<double> heading() const { return last_heading_; }
  const SegmenterConfig& config() const { return cfg_; }

 private:
  struct OpenRun {
    double t_start = 0.0;
    std::uint64_t left = 0;
    std::uint64_t right = 0;
    std::vector<double> headings;
    bool backward = false;
  };
  struct OpenPivot {
    double t_start = 0.0;
    double heading_start = 0.0;
    bool left = true;
  };

  double centered(double compass_deg) const;
  std::optional<PathSegment> close_run(double t_end);
  std::optional<PathSegment> pivot_segment(const OpenPivot& p, double heading_end, double t_end) const;
  double run_distance(const OpenRun& r) const;
  std::optional<double> run_heading(const OpenRun& r) const;

  SegmenterConfig cfg_;
  MotionMode prev_mode_ = MotionMode::Idle;
  double prev_t_ = 0.0;
  std::optional<double> last_heading_;
  std::optional<OpenRun> run_;
  std::optional<OpenPivot> pivot_;
};

std::vector<PathSegment> segment_stream(std::span<const PollSample> samples, const SegmenterConfig& cfg);

// Segmenter plus path log: the dead-reckoned track of one robot.
class DeadReckoner {
 public:
  DeadReckoner(SegmenterConfig cfg, EstimatedPose origin = {})
      : segmenter_(cfg), log_(origin) {}

  void observe(const PollSample& s);
  void flush(double t);

  // Live estimate including any segment still in progress.
  EstimatedPose estimate() const;
  const PathLog& log() const { return log_; }

 private:
  Segmenter segmenter_;
  PathLog log_;
};

// Columns: t_start,t_end,heading_deg,distance_m,x,y,kind; x/y are the waypoint
// reached at the end of the segment.
std::string path_csv(const PathLog& log);

}  // namespace lnr::nav
