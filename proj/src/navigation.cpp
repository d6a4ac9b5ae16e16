#include "lnr/navigation.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

namespace lnr::nav {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kRadToDeg = 180.0 / std::numbers::pi;

bool is_run(MotionMode m) { return m == MotionMode::Forward || m == MotionMode::Backward; }
bool is_pivot(MotionMode m) { return m == MotionMode::PivotLeft || m == MotionMode::PivotRight; }

}  // namespace

double WheelGeometry::tick_length() const {
  return 2.0 * std::numbers::pi * wheel_radius / static_cast<double>(ticks_per_revolution);
}

double ticks_to_distance(std::uint64_t delta, const WheelGeometry& geom) {
  return static_cast<double>(delta) * geom.tick_length();
}

std::string_view to_string(SegmentKind k) { return k == SegmentKind::Run ? "run" : "pivot"; }

EstimatedPose advance(const EstimatedPose& pose, const PathSegment& seg) {
  const double h = seg.heading * kDegToRad;
  return {pose.x + seg.distance * std::sin(h), pose.y + seg.distance * std::cos(h), seg.heading};
}

void PathLog::append(const PathSegment& seg) {
  waypoints_.push_back(advance(last(), seg));
  segments_.push_back(seg);
}

PathSummary summarize(const PathLog& log) {
  PathSummary s;
  for (const auto& seg : log.segments()) {
    if (seg.kind == SegmentKind::Run) s.total_distance += seg.distance;
  }
  const auto& end = log.last();
  s.net_displacement = std::hypot(end.x - log.origin().x, end.y - log.origin().y);
  return s;
}

std::optional<double> circular_mean(std::span<const double> degrees) {
  if (degrees.empty()) return std::nullopt;
  double sx = 0.0, sy = 0.0;
  for (double d : degrees) {
    sx += std::sin(d * kDegToRad);
    sy += std::cos(d * kDegToRad);
  }
  if (std::hypot(sx, sy) < 1e-12 * static_cast<double>(degrees.size())) return std::nullopt;
  return normalize_degrees(std::atan2(sx, sy) * kRadToDeg);
}

double angular_distance(double a, double b) {
  double d = std::fmod(std::abs(a - b), 360.0);
  return d > 180.0 ? 360.0 - d : d;
}

double Segmenter::centered(double compass_deg) const {
  return normalize_degrees(compass_deg + cfg_.compass_bias_deg);
}

double Segmenter::run_distance(const OpenRun& r) const {
  return 0.5 * (ticks_to_distance(r.left, cfg_.geometry) + ticks_to_distance(r.right, cfg_.geometry));
}

std::optional<double> Segmenter::run_heading(const OpenRun& r) const {
  auto mean = circular_mean(r.headings);
  if (!mean) return std::nullopt;
  return r.backward ? normalize_degrees(*mean + 180.0) : *mean;
}

std::optional<PathSegment> Segmenter::close_run(double t_end) {
  std::optional<PathSegment> out;
  if (run_) {
    const double d = run_distance(*run_);
    auto h = run_heading(*run_);
    if (d > 0.0 && h) out = PathSegment{*h, d, run_->t_start, t_end, SegmentKind::Run};
  }
  run_.reset();
  return out;
}

std::optional<PathSegment> Segmenter::pivot_segment(const OpenPivot& p, double heading_end,
                                                    double t_end) const {
  // The stationary wheel sits half a track to the left (or right) of the
  // midpoint; rotating about it moves the midpoint by the difference of the
  // two lateral offsets.
  const double half = 0.5 * cfg_.geometry.track_width;
  const double h0 = p.heading_start * kDegToRad;
  const double h1 = heading_end * kDegToRad;
  const double lx0 = -std::cos(h0), ly0 = std::sin(h0);
  const double lx1 = -std::cos(h1), ly1 = std::sin(h1);
  const double sign = p.left ? 1.0 : -1.0;
  const double dx = sign * half * (lx0 - lx1);
  const double dy = sign * half * (ly0 - ly1);
  const double d = std::hypot(dx, dy);
  if (d < 1e-12) return std::nullopt;
  return PathSegment{normalize_degrees(std::atan2(dx, dy) * kRadToDeg), d, p.t_start, t_end,
                     SegmentKind::Pivot};
}

std::vector<PathSegment> Segmenter::push(const PollSample& s) {
  std::vector<PathSegment> out;
  const double h = centered(s.compass_deg);
  const MotionMode m0 = prev_mode_;
  const MotionMode m1 = s.mode;

  if (pivot_ && m1 != m0) {
    // This sample's wheel deltas belong to whatever follows, so the pivot
    // ends at the previous poll; the heading is the first one read after it.
    if (auto seg = pivot_segment(*pivot_, h, std::max(pivot_->t_start, prev_t_))) out.push_back(*seg);
    pivot_.reset();
  }

  if (run_) {
    if (m1 == m0) {
      // Split when the smoothed heading leaves the segment's heading.
      std::vector<double> recent;
      const std::size_t n = run_->headings.size();
      const std::size_t k = cfg_.smoothing_window > 0 ? cfg_.smoothing_window - 1 : 0;
      for (std::size_t i = n > k ? n - k : 0; i < n; ++i) recent.push_back(run_->headings[i]);
      recent.push_back(h);
      auto smoothed = circular_mean(recent);
      auto current = circular_mean(run_->headings);
      if (smoothed && current && angular_distance(*smoothed, *current) > cfg_.split_threshold_deg) {
        const bool backward = run_->backward;
        if (auto seg = close_run(prev_t_)) out.push_back(*seg);
        run_ = OpenRun{prev_t_, 0, 0, {}, backward};
      }
      run_->headings.push_back(h);
    } else if (m1 == MotionMode::Idle) {
      run_->headings.push_back(h);
    }
    run_->left += s.left_delta;
    run_->right += s.right_delta;
    if (m1 != m0) {
      if (auto seg = close_run(s.t)) out.push_back(*seg);
      if (is_run(m1)) run_ = OpenRun{s.t, 0, 0, {h}, m1 == MotionMode::Backward};
    }
  } else if (is_run(m1)) {
    run_ = OpenRun{prev_t_, s.left_delta, s.right_delta, {h}, m1 == MotionMode::Backward};
  }

  if (is_pivot(m1) && m1 != m0) {
    pivot_ = OpenPivot{s.t, last_heading_.value_or(h), m1 == MotionMode::PivotLeft};
  }

  last_heading_ = h;
  prev_mode_ = m1;
  prev_t_ = s.t;
  return out;
}

std::vector<PathSegment> Segmenter::flush(double t) {
  std::vector<PathSegment> out;
  if (auto seg = close_run(t)) out.push_back(*seg);
  if (pivot_) {
    if (auto seg = pivot_segment(*pivot_, last_heading_.value_or(pivot_->heading_start), t)) {
      out.push_back(*seg);
    }
    pivot_.reset();
  }
  prev_mode_ = MotionMode::Idle;
  prev_t_ = t;
  return out;
}

std::optional<PathSegment> Segmenter::provisional() const {
  if (run_) {
    auto h = run_heading(*run_);
    const double d = run_distance(*run_);
    if (h && d > 0.0) return PathSegment{*h, d, run_->t_start, prev_t_, SegmentKind::Run};
  }
  if (pivot_ && last_heading_) return pivot_segment(*pivot_, *last_heading_, prev_t_);
  return std::nullopt;
}

std::vector<PathSegment> segment_stream(std::span<const PollSample> samples, const SegmenterConfig& cfg) {
  Segmenter seg(cfg);
  std::vector<PathSegment> out;
  for (const auto& s : samples) {
    auto closed = seg.push(s);
    out.insert(out.end(), closed.begin(), closed.end());
  }
  if (!samples.empty()) {
    auto closed = seg.flush(samples.back().t);
    out.insert(out.end(), closed.begin(), closed.end());
  }
  return out;
}

void DeadReckoner::observe(const PollSample& s) {
  for (const auto& seg : segmenter_.push(s)) log_.append(seg);
}

void DeadReckoner::flush(double t) {
  for (const auto& seg : segmenter_.flush(t)) log_.append(seg);
}

EstimatedPose DeadReckoner::estimate() const {
  EstimatedPose p = log_.last();
  if (auto prov = segmenter_.provisional()) p = advance(p, *prov);
  if (auto h = segmenter_.heading()) p.heading = *h;
  return p;
}

std::string path_csv(const PathLog& log) {
  std::string out = "t_start,t_end,heading_deg,distance_m,x,y,kind\n";
  char buf[160];
  for (std::size_t i = 0; i < log.segments().size(); ++i) {
    const auto& s = log.segments()[i];
    const auto& w = log.waypoints()[i];
    std::snprintf(buf, sizeof buf, "%.3f,%.3f,%.6f,%.6f,%.6f,%.6f,%s\n", s.t_start, s.t_end, s.heading,
                  s.distance, w.x, w.y, std::string(to_string(s.kind)).c_str());
    out += buf;
  }
  return out;
}

}  // namespace lnr::nav
