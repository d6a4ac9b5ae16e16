#include "lnr/main_unit.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "lnr/errors.hpp"

namespace lnr {

using nlohmann::json;

namespace {

std::pair<Motor, Motor> motors_for(nav::MotionMode m) {
  switch (m) {
    case nav::MotionMode::Forward: return {Motor::Forward, Motor::Forward};
    case nav::MotionMode::Backward: return {Motor::Backward, Motor::Backward};
    case nav::MotionMode::PivotLeft: return {Motor::Stopped, Motor::Forward};
    case nav::MotionMode::PivotRight: return {Motor::Forward, Motor::Stopped};
    case nav::MotionMode::Idle: break;
  }
  return {Motor::Stopped, Motor::Stopped};
}

json pose_json(const nav::EstimatedPose& p) { return {{"x", p.x}, {"y", p.y}, {"heading", p.heading}}; }

std::string package_label(const daps::DapsManifest& m) { return m.name + "@" + m.version.str(); }

}  // namespace

nav::MotionMode motion_mode(DriveCommand c) {
  switch (c) {
    case DriveCommand::Forward: return nav::MotionMode::Forward;
    case DriveCommand::Backward: return nav::MotionMode::Backward;
    case DriveCommand::TurnLeft: return nav::MotionMode::PivotLeft;
    case DriveCommand::TurnRight: return nav::MotionMode::PivotRight;
    case DriveCommand::Stop: break;
  }
  return nav::MotionMode::Idle;
}

std::string CommandRecord::status() const {
  if (!started_at) return "queued";
  if (duration_ms && !stopped_at) return "active";
  return "done";
}

json to_json(const CommandRecord& r) {
  auto opt = [](const std::optional<SimTime>& v) -> json { return v ? json(*v) : json(nullptr); };
  return {{"id", r.id},
          {"command", to_string(r.command)},
          {"duration_ms", opt(r.duration_ms)},
          {"origin", r.origin},
          {"submitted_at_ms", r.submitted_at},
          {"started_at_ms", opt(r.started_at)},
          {"stopped_at_ms", opt(r.stopped_at)},
          {"status", r.status()}};
}

json to_json(const TelemetryFrame& f) {
  json sensors = json::array();
  for (const auto& s : f.sensors) {
    sensors.push_back({{"id", to_string(s.id)},
                       {"raw", s.raw},
                       {"value", s.value},
                       {"unit", s.unit},
                       {"package", s.package}});
  }
  json warnings = json::array();
  for (const auto& w : f.active_warnings) warnings.push_back(daps::to_json(w));
  return {{"cycle", f.cycle},
          {"t", f.t},
          {"pose", pose_json(f.pose)},
          {"compass", {{"raw", f.compass.raw}, {"degrees", f.compass.degrees}}},
          {"motors", {{"left", to_string(f.left_motor)}, {"right", to_string(f.right_motor)}}},
          {"ticks", {{"left", f.left_ticks}, {"right", f.right_ticks}}},
          {"sensors_t", f.sensors_t ? json(*f.sensors_t) : json(nullptr)},
          {"sensors", sensors},
          {"active_warnings", warnings},
          {"path", {{"total_distance_m", f.path.total_distance}, {"net_displacement_m", f.path.net_displacement}}},
          {"camera", {{"status", "placeholder"}, {"description", "camera feed not emulated"}}}};
}

json to_json(const nav::PathLog& log) {
  json segments = json::array();
  for (const auto& s : log.segments()) {
    segments.push_back({{"kind", nav::to_string(s.kind)},
                        {"heading_deg", s.heading},
                        {"distance_m", s.distance},
                        {"t_start", s.t_start},
                        {"t_end", s.t_end}});
  }
  json waypoints = json::array();
  for (const auto& w : log.waypoints()) waypoints.push_back(pose_json(w));
  const auto summary = nav::summarize(log);
  return {{"origin", pose_json(log.origin())},
          {"segments", segments},
          {"waypoints", waypoints},
          {"total_distance_m", summary.total_distance},
          {"net_displacement_m", summary.net_displacement}};
}

namespace {

nav::SegmenterConfig segmenter_config(const RobotConfig& cfg) {
  nav::SegmenterConfig s;
  s.geometry = {cfg.world.wheel_radius, cfg.world.ticks_per_revolution, cfg.world.track_width};
  s.split_threshold_deg = cfg.split_threshold_deg;
  return s;
}

std::optional<std::filesystem::path> store_dir(const RobotConfig& cfg) {
  if (cfg.store.dir.empty()) return std::nullopt;
  return std::filesystem::path(cfg.store.dir);
}

}  // namespace

MainUnit::MainUnit(RobotConfig cfg)
    : cfg_((cfg.validate(), std::move(cfg))),
      sim_(cfg_.world),
      bus_(sim_),
      driver_(bus_, DriverConfig{cfg_.timing.settle_ms}, cfg_.trace ? &trace_ : nullptr),
      nav_(segmenter_config(cfg_)),
      registry_(cfg_.profile),
      store_(cfg_.store.retention_s, store_dir(cfg_)) {
  for (const auto& sp : cfg_.profile.sensors) dsp_.configure(sp.id, {sp.calibration, {}, sp.unit});
  for (const auto& path : cfg_.packages) {
    std::ifstream in(path);
    if (!in) throw ParseError(path.string(), 0, "", "cannot open manifest");
    std::stringstream ss;
    ss << in.rdbuf();
    registry_.install(daps::parse_manifest(ss.str(), path.string()), 0.0, "boot");
  }
  auto initial = std::make_shared<TelemetryFrame>();
  initial->pose = nav_.estimate();
  latest_ = std::move(initial);
}

std::uint64_t MainUnit::submit_drive(DriveCommand c, std::optional<SimTime> duration_ms, std::string origin) {
  if (duration_ms && *duration_ms < 0) throw ValidationError("duration_ms", "must be >= 0");
  std::lock_guard lock(mu_);
  if (queue_.size() >= cfg_.service.queue_bound) {
    throw QueueFullError("command queue full (" + std::to_string(cfg_.service.queue_bound) + " pending)");
  }
  CommandRecord rec;
  rec.id = next_command_id_++;
  rec.command = c;
  rec.duration_ms = duration_ms;
  rec.origin = std::move(origin);
  rec.submitted_at = sim_.now();
  queue_.push_back(rec);
  return rec.id;
}

SimTime MainUnit::now() const {
  std::lock_guard lock(mu_);
  return sim_.now();
}

bool MainUnit::idle() const {
  std::lock_guard lock(mu_);
  return queue_.empty() && !active_;
}

void MainUnit::run_until(SimTime t) {
  for (;;) {
    std::lock_guard lock(mu_);
    if (sim_.now() >= t) return;
    step(t);
  }
}

void MainUnit::run_until_idle(SimTime limit) {
  for (;;) {
    {
      std::lock_guard lock(mu_);
      if ((queue_.empty() && !active_) || sim_.now() >= limit) return;
    }
    run_until(std::min(limit, now() + cfg_.timing.tick_ms));
  }
}

SimTime MainUnit::next_wakeup() const {
  const SimTime now = sim_.now();
  const SimTime tick = cfg_.timing.tick_ms;
  SimTime next = (now / tick + 1) * tick;
  next = std::min({next, next_poll_, next_sensor_});
  if (active_) {
    const auto& rec = history_[*active_];
    next = std::min(next, *rec.started_at + *rec.duration_ms);
  }
  return std::max(next, now + 1);
}

void MainUnit::dispatch(CommandRecord& rec) {
  rec.started_at = sim_.now();
  driver_.send_command(rec.command);
  commanded_ = rec.command;
}

void MainUnit::step(SimTime limit) {
  const SimTime t = sim_.now();

  if (active_) {
    auto& rec = history_[*active_];
    if (t >= *rec.started_at + *rec.duration_ms) {
      driver_.send_command(DriveCommand::Stop);
      commanded_ = DriveCommand::Stop;
      rec.stopped_at = t;
      active_.reset();
      return;
    }
  } else if (!queue_.empty()) {
    history_.push_back(queue_.front());
    queue_.pop_front();
    dispatch(history_.back());
    if (history_.back().duration_ms) active_ = history_.size() - 1;
    return;
  }

  // A due sensor frame goes ahead of the next poll; the bus cannot carry
  // both at full cadence, and polls only skip slots.
  if (!poll_job_ && !sensor_job_ && t >= next_sensor_) {
    sensor_job_ = SensorJob{};
    while (next_sensor_ <= t) next_sensor_ += cfg_.timing.sensor_interval_ms;
  }
  if (!poll_job_ && !sensor_job_ && t >= next_poll_) {
    poll_job_ = PollJob{0, 0, 0, motion_mode(commanded_)};
    while (next_poll_ <= t) next_poll_ += cfg_.timing.poll_interval_ms;
  }
  if (poll_job_ || sensor_job_) {
    // Never start a transaction that would run past a pending auto-stop.
    const SimTime settle = cfg_.timing.settle_ms;
    const SimTime cost = (sensor_job_ && !poll_job_ && sensor_job_->stage == 0) ? settle : 3 * settle;
    if (active_) {
      const auto& rec = history_[*active_];
      const SimTime deadline = *rec.started_at + *rec.duration_ms;
      if (t + cost > deadline) {
        sim_.advance_to(std::min(deadline, limit));
        return;
      }
    }
    if (poll_job_) {
      continue_poll();
    } else {
      continue_sensors();
    }
    return;
  }

  sim_.advance_to(std::min(next_wakeup(), limit));
}

void MainUnit::continue_poll() {
  auto& job = *poll_job_;
  switch (job.stage++) {
    case 0: job.compass = driver_.read_nibble_byte(cmd::kReadCompass); return;
    case 1: job.left = driver_.read_nibble_byte(cmd::kReadLeftTicks); return;
    default: break;
  }
  const std::uint8_t right = driver_.read_nibble_byte(cmd::kReadRightTicks);
  const PollJob done = job;
  poll_job_.reset();

  const auto deltas = driver_.accumulate_ticks(done.left, right);
  const double t = to_seconds(sim_.now());
  nav_.observe({t, compass_degrees(done.compass), deltas.left, deltas.right, done.mode});

  auto frame = std::make_shared<TelemetryFrame>();
  frame->cycle = ++cycle_;
  frame->t = t;
  frame->pose = nav_.estimate();
  frame->compass = {done.compass, compass_degrees(done.compass)};
  std::tie(frame->left_motor, frame->right_motor) = motors_for(done.mode);
  frame->left_ticks = driver_.left_total();
  frame->right_ticks = driver_.right_total();
  if (last_sensor_frame_) {
    frame->sensors_t = last_sensor_frame_->frame.t;
    for (const auto& sp : cfg_.profile.sensors) {
      const auto idx = static_cast<std::size_t>(sp.id);
      frame->sensors.push_back({sp.id, last_sensor_frame_->frame.raw[idx], last_sensor_frame_->frame.filtered[idx],
                                dsp_.channel(sp.id).unit, last_sensor_frame_->package[idx]});
    }
  }
  for (std::size_t i = 0; i < rules_.size(); ++i) {
    if (rule_state_[i].phase == daps::RuleState::Phase::Raised) frame->active_warnings.push_back(rule_state_[i].event);
  }
  frame->path = nav::summarize(nav_.log());
  if (telemetry_cb_) telemetry_cb_(*frame);
  publish(std::move(frame));
}

void MainUnit::continue_sensors() {
  auto& job = *sensor_job_;
  const int stage = job.stage++;
  if (stage == 0) {
    driver_.capture_sensors();
    return;
  }
  const auto channel = static_cast<std::size_t>((stage - 1) / 2);
  if ((stage - 1) % 2 == 0) {
    job.low = driver_.read_nibble_byte(static_cast<std::uint8_t>(cmd::kSensorLowBase + channel));
    return;
  }
  const std::uint8_t high = driver_.read_nibble_byte(static_cast<std::uint8_t>(cmd::kSensorHighBase + channel));
  job.readings[channel] = static_cast<std::uint16_t>(((high & 0x03) << 8) | job.low);
  if (channel + 1 < kSensorCount) return;

  const SensorReadings readings = job.readings;
  sensor_job_.reset();
  process_sensors(readings);
}

void MainUnit::apply_registry_if_changed() {
  auto snap = registry_.snapshot();
  if (snap->generation == applied_generation_) return;

  for (const auto& sp : cfg_.profile.sensors) {
    const auto idx = static_cast<std::size_t>(sp.id);
    std::string label;
    dsp::ChannelConfig channel{sp.calibration, {}, sp.unit};
    for (const auto& pkg : snap->packages) {
      for (const auto& b : pkg.sensors) {
        if (b.sensor != sp.id) continue;
        label = package_label(pkg);
        channel = {b.calibration, b.filters, b.unit.empty() ? sp.unit : b.unit};
      }
    }
    if (label != channel_package_[idx]) {
      dsp_.configure(sp.id, channel);
      channel_package_[idx] = label;
    }
  }

  std::vector<daps::WarningRule> rules;
  std::vector<std::string> owners;
  std::vector<daps::RuleState> states;
  for (const auto& pkg : snap->packages) {
    for (const auto& r : pkg.warnings) {
      daps::RuleState st;
      st.event.package = package_label(pkg);
      for (std::size_t i = 0; i < rules_.size(); ++i) {
        const auto old_name = rule_package_[i].substr(0, rule_package_[i].find('@'));
        if (rules_[i] == r && old_name == pkg.name) {
          st = rule_state_[i];
          st.event.package = package_label(pkg);
          break;
        }
      }
      rules.push_back(r);
      owners.push_back(package_label(pkg));
      states.push_back(st);
    }
  }
  rules_ = std::move(rules);
  rule_package_ = std::move(owners);
  rule_state_ = std::move(states);
  applied_generation_ = snap->generation;
}

void MainUnit::process_sensors(const SensorReadings& readings) {
  apply_registry_if_changed();
  const double t = to_seconds(sim_.now());
  ProcessedFrame pf{dsp_.process(t, readings), applied_generation_, channel_package_};
  for (const auto& sp : cfg_.profile.sensors) {
    const auto idx = static_cast<std::size_t>(sp.id);
    store_.append(sp.id, {t, pf.frame.raw[idx], pf.frame.filtered[idx]});
  }
  for (auto& tr : daps::evaluate_warnings(pf.frame, rules_, rule_state_)) {
    warning_log_.push_back(tr);
    if (warning_cb_) warning_cb_(tr);
  }
  if (sensor_cb_) sensor_cb_(pf);
  last_sensor_frame_ = std::move(pf);
}

void MainUnit::publish(std::shared_ptr<const TelemetryFrame> f) {
  {
    std::lock_guard lock(frame_mu_);
    latest_ = std::move(f);
  }
  frame_cv_.notify_all();
}

void MainUnit::finish() {
  std::lock_guard lock(mu_);
  nav_.flush(to_seconds(sim_.now()));
  store_.flush();
}

std::shared_ptr<const TelemetryFrame> MainUnit::telemetry() const {
  std::lock_guard lock(frame_mu_);
  return latest_;
}

std::shared_ptr<const TelemetryFrame> MainUnit::wait_for_frame(std::uint64_t after_cycle,
                                                               std::chrono::milliseconds timeout) const {
  std::unique_lock lock(frame_mu_);
  frame_cv_.wait_for(lock, timeout, [&] { return latest_->cycle > after_cycle; });
  return latest_;
}

nav::PathLog MainUnit::path() const {
  std::lock_guard lock(mu_);
  return nav_.log();
}

std::vector<CommandRecord> MainUnit::commands() const {
  std::lock_guard lock(mu_);
  std::vector<CommandRecord> out = history_;
  out.insert(out.end(), queue_.begin(), queue_.end());
  return out;
}

std::vector<daps::WarningTransition> MainUnit::warning_log() const {
  std::lock_guard lock(mu_);
  return warning_log_;
}

std::vector<daps::WarningEvent> MainUnit::active_warnings() const {
  std::lock_guard lock(mu_);
  std::vector<daps::WarningEvent> out;
  for (const auto& st : rule_state_) {
    if (st.phase == daps::RuleState::Phase::Raised) out.push_back(st.event);
  }
  return out;
}

RobotState MainUnit::truth() const {
  std::lock_guard lock(mu_);
  return sim_.state();
}

std::vector<TraceRecord> MainUnit::trace() const {
  std::lock_guard lock(mu_);
  return trace_.records();
}

std::vector<DeviceDiagnostic> MainUnit::diagnostics() const {
  std::lock_guard lock(mu_);
  return sim_.device().diagnostics();
}

void MainUnit::on_telemetry(std::function<void(const TelemetryFrame&)> cb) {
  std::lock_guard lock(mu_);
  telemetry_cb_ = std::move(cb);
}

void MainUnit::on_sensor_frame(std::function<void(const ProcessedFrame&)> cb) {
  std::lock_guard lock(mu_);
  sensor_cb_ = std::move(cb);
}

void MainUnit::on_warning(std::function<void(const daps::WarningTransition&)> cb) {
  std::lock_guard lock(mu_);
  warning_cb_ = std::move(cb);
}

}  // namespace lnr
