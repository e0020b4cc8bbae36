#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "platoon/properties.hpp"
#include "platoon/sim.hpp"

namespace fs = std::filesystem;
using namespace platoon;

namespace {

struct RunArgs {
  std::string scenario;
  std::string out_dir{"out"};
  std::optional<std::uint64_t> seed;
  std::optional<double> duration;
  std::optional<double> drop;
  std::optional<int> delay;
  bool report{false};
};

struct FuzzArgs {
  std::string suite;
  long iters{100};
  std::uint64_t seed{1};
  std::optional<double> drop;
  std::optional<int> delay;
  bool inject_fault{false};
  std::string out_dir{"."};
  std::string replay;
  int threads{0};
};

bool open_out(const fs::path& dir, const char* name, std::ofstream& f) {
  f.open(dir / name);
  if (!f) std::cerr << "error: cannot write " << (dir / name).string() << '\n';
  return static_cast<bool>(f);
}

int cmd_run(const RunArgs& a) {
  Scenario sc;
  try {
    sc = load_scenario_file(a.scenario);
    if (a.seed) sc.seed = *a.seed;
    if (a.duration) sc.duration = *a.duration;
    if (a.drop) sc.channel.drop_prob = *a.drop;
    if (a.delay) {
      sc.channel.delay_min = 0;
      sc.channel.delay_max = *a.delay;
    }
    validate(sc);
  } catch (const ScenarioError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }

  std::error_code ec;
  fs::create_directories(a.out_dir, ec);
  if (ec) {
    std::cerr << "error: cannot create output directory " << a.out_dir << ": " << ec.message() << '\n';
    return 1;
  }

  RunResult r;
  try {
    r = run(sc);
  } catch (const ScenarioError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }

  std::ofstream steps, summary, trace;
  if (!open_out(a.out_dir, "steps.csv", steps) || !open_out(a.out_dir, "summary.csv", summary) ||
      !open_out(a.out_dir, "channel_trace.csv", trace))
    return 1;
  write_steps_csv(steps, r.log);
  write_summary_csv(summary, r.summary);
  write_trace_csv(trace, r.trace);

  print_summary(std::cout, r.summary);
  if (a.report) {
    std::ofstream rep;
    if (!open_out(a.out_dir, "report.txt", rep)) return 1;
    print_summary(rep, r.summary);
  }
  return r.summary.collisions.empty() ? 0 : 2;
}

void print_report(const FuzzReport& r) {
  std::cout << suite_name(r.suite) << ": " << r.iterations << " iterations, " << r.violations << " violations, "
            << r.seconds << " s\n";
  for (const auto& [k, v] : r.counters) std::cout << "  " << k << ": " << v << '\n';
  if (r.first) std::cout << "first violation at iteration " << r.first->iteration << ": " << r.first->detail << '\n';
}

int cmd_fuzz(const FuzzArgs& a) {
  FuzzConfig cfg;
  long iteration = -1;
  if (!a.replay.empty()) {
    try {
      std::tie(cfg, iteration) = read_reproducer(a.replay);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return 1;
    }
  } else {
    const auto suite = suite_by_name(a.suite);
    if (!suite) {
      std::cerr << "error: unknown suite '" << a.suite
                << "' (monotonicity, verify-soundness, failsafe-minimality, consensus-invariance)\n";
      return 1;
    }
    cfg.suite = *suite;
    cfg.iterations = a.iters;
    cfg.seed = a.seed;
    cfg.drop = a.drop;
    cfg.delay_max = a.delay;
    cfg.inject_fault = a.inject_fault;
  }
  cfg.threads = a.threads;

  const FuzzReport r = iteration >= 0 ? replay(cfg, iteration) : run_suite(cfg);
  print_report(r);
  if (r.violations == 0) return 0;

  if (iteration < 0) {
    std::error_code ec;
    fs::create_directories(a.out_dir, ec);
    const fs::path path =
        fs::path(a.out_dir) / ("repro_" + std::string(suite_name(cfg.suite)) + "_" + std::to_string(r.first->iteration) + ".yaml");
    std::ofstream f(path);
    if (!f) {
      std::cerr << "error: cannot write " << path.string() << '\n';
    } else {
      write_reproducer(f, cfg, *r.first);
      std::cout << "reproducer: " << path.string() << '\n';
    }
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Verified-safe platoon simulator"};
  app.require_subcommand(1);

  RunArgs ra;
  auto* run_cmd = app.add_subcommand("run", "Run a scenario and write steps.csv, summary.csv, channel_trace.csv");
  run_cmd->add_option("--scenario", ra.scenario, "Scenario file")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--out", ra.out_dir, "Output directory")->capture_default_str();
  run_cmd->add_option("--seed", ra.seed, "Override the scenario seed");
  run_cmd->add_option("--duration", ra.duration, "Override the duration [s]")->check(CLI::PositiveNumber);
  run_cmd->add_option("--drop", ra.drop, "Override the message drop probability")->check(CLI::Range(0.0, 1.0));
  run_cmd->add_option("--delay", ra.delay, "Override the maximum message delay [steps]")->check(CLI::NonNegativeNumber);
  run_cmd->add_flag("--report", ra.report, "Also write report.txt");

  FuzzArgs fa;
  auto* fuzz_cmd = app.add_subcommand("fuzz", "Run a property suite");
  auto* suite_opt = fuzz_cmd->add_option("--suite", fa.suite,
                                         "monotonicity | verify-soundness | failsafe-minimality | consensus-invariance");
  fuzz_cmd->add_option("--iters", fa.iters, "Iterations")->capture_default_str()->check(CLI::PositiveNumber);
  fuzz_cmd->add_option("--seed", fa.seed, "Seed")->capture_default_str();
  fuzz_cmd->add_option("--drop", fa.drop, "Fixed drop probability (consensus suite)")->check(CLI::Range(0.0, 1.0));
  fuzz_cmd->add_option("--delay", fa.delay, "Fixed maximum delay [steps] (consensus suite)")
      ->check(CLI::NonNegativeNumber);
  fuzz_cmd->add_flag("--inject-fault", fa.inject_fault, "Break the checked component to test the harness");
  fuzz_cmd->add_option("--out", fa.out_dir, "Directory for reproducer files")->capture_default_str();
  auto* replay_opt = fuzz_cmd->add_option("--replay", fa.replay, "Replay a reproducer file")->check(CLI::ExistingFile);
  fuzz_cmd->add_option("--threads", fa.threads, "Worker threads (default: PLATOON_SAFE_THREADS or all cores)");
  suite_opt->excludes(replay_opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (*run_cmd) return cmd_run(ra);
  if (fa.suite.empty() && fa.replay.empty()) {
    std::cerr << "error: fuzz needs --suite or --replay\n";
    return 1;
  }
  return cmd_fuzz(fa);
}
