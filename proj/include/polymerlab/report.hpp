#pragma once

// Records CSV and run summary JSON.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "config.hpp"
#include "verify.hpp"

namespace polymerlab {

inline constexpr std::string_view kCsvHeader = "experiment,dim,law,beta,N,M,u,statistic,std_error,threshold,pass,seconds";
inline constexpr std::string_view kArtifactVersion = "polymerlab 1.0.0";

namespace detail {

inline std::string csv_number(double v) {
  if (std::isnan(v)) return "";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline void write_records_csv(std::ostream& out, const std::vector<SuiteResult>& suites) {
  out << kCsvHeader << '\n';
  for (const auto& s : suites) {
    for (const auto& r : s.records) {
      out << r.experiment << ',' << r.dim << ',' << r.law << ',' << detail::csv_number(r.beta) << ','
          << (r.n >= 0 ? std::to_string(r.n) : "") << ',' << (r.m >= 0 ? std::to_string(r.m) : "") << ','
          << detail::csv_number(r.u) << ',' << detail::csv_number(r.statistic) << ','
          << detail::csv_number(r.std_error) << ',' << detail::csv_number(r.threshold) << ','
          << (r.pass ? "true" : "false") << ',' << detail::csv_number(r.seconds) << '\n';
    }
  }
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

struct RunManifest {
  std::string config_path;  // empty when the run was configured by flags only
  ExperimentConfig config;
  std::vector<std::string> suites;
  std::string output_dir;

  /// Canonical text covering everything that determines the records.
  std::string canonical() const {
    std::string s = std::string(kArtifactVersion) + "\n" + emit_config(config) + "suites =";
    for (const auto& name : suites) s += " " + name;
    return s + "\n";
  }
  std::string hash() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canonical())));
    return buf;
  }
};

inline nlohmann::json summary_json(const RunManifest& manifest, const RunOutcome& outcome,
                                   const std::vector<std::string>& outputs, double wall_seconds) {
  using nlohmann::json;
  json j;
  j["artifact_version"] = kArtifactVersion;
  j["manifest_hash"] = manifest.hash();
  j["config_path"] = manifest.config_path;
  j["config"] = emit_config(manifest.config);
  j["master_seed"] = manifest.config.seed;
  j["output_dir"] = manifest.output_dir;
  j["outputs"] = outputs;
  j["beta"] = outcome.params.beta;
  j["lambda"] = outcome.params.lambda;
  j["gamma"] = outcome.params.gamma;
  j["pi"] = {{"pi_d", outcome.pi.pi_d},
             {"lower", outcome.pi.pi_lower},
             {"upper", outcome.pi.pi_upper},
             {"recurrent", outcome.pi.recurrent},
             {"t_max", outcome.pi.t_max}};
  json suites = json::array();
  for (const auto& s : outcome.suites) {
    std::size_t failed = 0;
    for (const auto& r : s.records) failed += r.gating && !r.pass ? 1 : 0;
    json notes = json::array();
    for (const auto& r : s.records) {
      if (!r.note.empty()) notes.push_back(r.experiment + (r.n >= 0 ? " N=" + std::to_string(r.n) : "") + ": " + r.note);
    }
    suites.push_back({{"name", s.name},
                      {"status", status_name(s.status)},
                      {"detail", s.detail},
                      {"records", s.records.size()},
                      {"failed_records", failed},
                      {"seconds", s.seconds},
                      {"notes", notes}});
  }
  j["suites"] = suites;
  j["status"] = outcome.ok() ? "pass" : "fail";
  j["wall_seconds"] = wall_seconds;
  return j;
}

}  // namespace polymerlab
