#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "polymerlab/config.hpp"
#include "polymerlab/report.hpp"
#include "polymerlab/verify.hpp"

namespace fs = std::filesystem;
using namespace polymerlab;

namespace {

enum Exit { kPass = 0, kSuiteFailure = 1, kConfigError = 2, kCapacityError = 3 };

std::vector<std::string> suites_for(const std::string& command) {
  if (command == "pi") return {"pi", "overlap"};
  if (command == "all") return suite_names();
  return {command};
}

void print_outcome(const std::string& command, const RunOutcome& out) {
  for (const auto& s : out.suites) {
    std::printf("%-10s %s", s.name.c_str(), status_name(s.status).c_str());
    if (!s.detail.empty()) std::printf("  (%s)", s.detail.c_str());
    std::printf("\n");
    for (const auto& r : s.records) {
      if (!r.gating || r.pass) continue;
      std::printf("    failed: %s", r.experiment.c_str());
      if (r.n >= 0) std::printf(" N=%d", r.n);
      std::printf(" statistic=%.6g threshold=%.6g", r.statistic, r.threshold);
      if (!r.note.empty()) std::printf(" [%s]", r.note.c_str());
      std::printf("\n");
    }
  }
  if (command == "pi") {
    if (out.pi.recurrent) {
      std::printf("d = %d is recurrent: pi_d = 1\n", out.pi.dim);
    } else {
      std::printf("pi_%d = %.12f  interval [%.12f, %.12f]  (T_max = %d)\n", out.pi.dim, out.pi.pi_d, out.pi.pi_lower,
                  out.pi.pi_upper, out.pi.t_max);
    }
  }
  if (command == "l2check") {
    for (const auto& s : out.suites) {
      for (const auto& r : s.records) {
        if (r.experiment == "l2_margin") std::printf("margin = %.12f  (beta = %g, gamma = %.12g)\n", r.statistic, out.params.beta, out.params.gamma);
      }
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Directed polymer transfer-matrix engine and verification suites"};
  app.require_subcommand(1, 1);

  std::map<std::string, std::string> flags;  // config key -> raw value
  std::string config_path;
  std::string out_dir = "polymerlab_out";
  int threads = 0;
  bool timings = false;
  double umax = 0.0;

  auto keyed = [&](const char* name, const char* key, const char* help) {
    app.add_option_function<std::string>(name, [&flags, key](const std::string& v) { flags[key] = v; }, help);
  };
  keyed("--dim", "dim", "lattice dimension d");
  keyed("--beta", "beta", "inverse temperature (default: half the L2 threshold)");
  keyed("--law", "law", "gaussian | uniform | rademacher");
  keyed("--n", "n_grid", "horizon grid, comma separated");
  keyed("--m", "m_grid", "forward horizons paired with --n (qnm)");
  keyed("--samples", "samples", "Monte Carlo samples per statistic");
  keyed("--seed", "seed", "master seed");
  keyed("--alpha", "alpha", "exponent of the local-limit window l_N");
  keyed("--bigA", "big_a", "window constant A in |x| < A sqrt(N)");
  keyed("--khorizon", "k_horizon", "finite horizon K standing in for infinity");
  app.add_option("--umax", umax, "largest deviation level; the grid is umax/4, umax/2, 3umax/4, umax");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--threads", threads, "worker threads (fallback: POLYMERLAB_THREADS)");
  app.add_option("--config", config_path, "flat key = value configuration file");
  app.add_flag("--timings", timings, "fill the seconds column of the records");

  std::string command;
  const std::pair<const char*, const char*> commands[] = {
      {"pi", "collision probability and the overlap law"},
      {"l2check", "check that beta lies in the L2 region"},
      {"moments", "exact first and second moment identities"},
      {"martingale", "Q(W_N) = 1 and bounded variance"},
      {"conc", "lower tail concentration of log Z_N"},
      {"qn", "convergence of the point-to-line density q_N"},
      {"qnm", "convergence of the two-sided density q_{N,M}"},
      {"llt", "decay of the local limit remainder"},
      {"diffusion", "diffusive scaling of the endpoint"},
      {"all", "every suite"}};
  for (const auto& [name, about] : commands) {
    auto* sub = app.add_subcommand(name, about);
    sub->fallthrough();
    sub->callback([&command, name] { command = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kPass : kConfigError;
  }

  try {
    ParsedConfig parsed;
    if (!config_path.empty()) parsed = parse_config(config_path);
    ExperimentConfig cfg = parsed.config;
    if (umax > 0.0) flags["u_grid"] = std::to_string(umax / 4) + "," + std::to_string(umax / 2) + "," +
                                      std::to_string(3 * umax / 4) + "," + std::to_string(umax);
    else if (app.count("--umax")) throw ConfigError("u_grid: --umax must be positive");
    if (flags.count("n_grid") && !flags.count("m_grid") && !parsed.keys.count("m_grid")) flags["m_grid"] = flags["n_grid"];
    for (const auto& [key, value] : flags) {
      if (parsed.keys.count(key)) {
        std::cerr << "warning: flag for '" << key << "' conflicts with " << config_path
                  << "; using the config file value\n";
        continue;
      }
      apply_setting(cfg, key, value);
    }
    validate(cfg);

    RunManifest manifest{config_path, cfg, suites_for(command), out_dir};
    const auto t0 = std::chrono::steady_clock::now();
    const RunOutcome outcome = run_suites(cfg, manifest.suites, resolve_threads(threads), timings);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    fs::create_directories(out_dir);
    const fs::path csv = fs::path(out_dir) / "records.csv";
    const fs::path summary = fs::path(out_dir) / "summary.json";
    {
      std::ofstream f(csv, std::ios::binary);
      write_records_csv(f, outcome.suites);
    }
    {
      std::ofstream f(summary, std::ios::binary);
      f << summary_json(manifest, outcome, {csv.string(), summary.string()}, wall).dump(2) << '\n';
    }
    print_outcome(command, outcome);
    std::printf("records: %s\nsummary: %s\n", csv.string().c_str(), summary.string().c_str());
    return outcome.ok() ? kPass : kSuiteFailure;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfigError;
  } catch (const CapacityError& e) {
    std::cerr << "capacity error: " << e.what() << '\n';
    return kCapacityError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kSuiteFailure;
  }
}
