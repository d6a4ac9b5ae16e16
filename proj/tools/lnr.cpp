// lnr: boots the simulated robot and its main unit.
//
//   lnr run [--config F] [--scenario F] [--out DIR]   headless run or serve
//   lnr replay TRACE [--config F] [--seed N]          re-check a register trace

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "lnr/config.hpp"
#include "lnr/errors.hpp"
#include "lnr/http_server.hpp"
#include "lnr/scenario.hpp"

namespace {

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<lnr::SimTime> tick_ms;
};

lnr::RobotConfig resolve(const Common& c) {
  lnr::RobotConfig cfg = c.config.empty() ? lnr::default_config() : lnr::load_config(c.config);
  if (c.seed) cfg.world.seed = *c.seed;
  if (c.tick_ms) cfg.timing.tick_ms = *c.tick_ms;
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "robot config (JSON)")->envname("LNR_CONFIG");
  app->add_option("--seed", c.seed, "noise seed override")->envname("LNR_SEED");
  app->add_option("--tick-ms", c.tick_ms, "host tick in ms")->envname("LNR_TICK_MS")->check(CLI::PositiveNumber);
}

int serve(lnr::RobotConfig cfg, const std::string& out_dir) {
  lnr::MainUnit unit(cfg);
  lnr::service::HttpServer server(unit, cfg.service);
  const auto addr = lnr::service::parse_listen(cfg.service.listen);
  const int port = server.start(addr);
  std::cerr << "lnr: serving on " << addr.host << ":" << port << "\n";
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  unit.finish();
  if (cfg.trace && !out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream out(std::filesystem::path(out_dir) / "trace.log");
    lnr::TraceLog log;
    for (const auto& r : unit.trace()) log.record(r);
    log.write(out);
  }
  std::cerr << "lnr: stopped at t=" << unit.now() << " ms\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LNR networked robot: simulator, main unit and web API"};
  app.require_subcommand(1);

  Common run_opts;
  std::string scenario;
  std::string listen;
  std::string out_dir = "lnr-out";
  bool trace = false;
  auto* run = app.add_subcommand("run", "run a scenario headlessly, or serve the API without one");
  add_common(run, run_opts);
  run->add_option("--scenario", scenario, "scenario script")->envname("LNR_SCENARIO");
  run->add_option("--listen", listen, "listen address host:port")->envname("LNR_LISTEN");
  run->add_option("--out", out_dir, "artifact directory")->envname("LNR_OUT");
  run->add_flag("--trace", trace, "record register transactions to trace.log");

  Common replay_opts;
  std::string trace_path;
  auto* rep = app.add_subcommand("replay", "replay a register trace against a fresh simulator");
  add_common(rep, replay_opts);
  rep->add_option("trace", trace_path, "trace.log from a previous run")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      auto cfg = resolve(run_opts);
      if (!listen.empty()) cfg.service.listen = listen;
      cfg.trace = cfg.trace || trace;
      if (scenario.empty()) return serve(cfg, out_dir);
      const auto steps = lnr::load_scenario(scenario);
      const auto result = lnr::run_scenario(cfg, steps);
      lnr::write_artifacts(result, out_dir);
      std::cout << "steps " << steps.size() << ", total distance " << result.summary.total_distance
                << " m, net displacement " << result.summary.net_displacement << " m, artifacts in " << out_dir
                << "\n";
      return 0;
    }
    const auto cfg = resolve(replay_opts);
    std::ifstream in(trace_path);
    if (!in) throw lnr::ParseError(trace_path, 0, "", "cannot open file");
    const auto records = lnr::read_trace(in, trace_path);
    const auto report = lnr::replay(records, cfg.world);
    std::cout << lnr::format_report(report);
    return report.divergences.empty() ? 0 : 1;
  } catch (const lnr::ParseError& e) {
    std::cerr << "lnr: " << e.what() << "\n";
    return 2;
  } catch (const lnr::ValidationError& e) {
    std::cerr << "lnr: invalid configuration: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "lnr: " << e.what() << "\n";
    return 1;
  }
}
