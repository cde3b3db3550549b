#pragma once

// Flat "key = value" experiment configuration. Lines starting with '#' are
// comments; lists are comma separated; unknown keys are rejected.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "verify.hpp"

namespace polymerlab {

struct ParsedConfig {
  ExperimentConfig config;
  std::set<std::string> keys;  // keys present in the source
};

namespace detail {

inline std::string trim(std::string_view s) {
  auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string_view::npos) return {};
  auto end = s.find_last_not_of(" \t\r");
  return std::string(s.substr(begin, end - begin + 1));
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) throw ConfigError(key + ": cannot parse '" + text + "'");
  return value;
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<T>(key, trim(item)));
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>) {
      out += format_double(xs[i]);
    } else {
      out += std::to_string(xs[i]);
    }
  }
  return out;
}

}  // namespace detail

/// Checks every invariant; the message names the offending field.
inline void validate(const ExperimentConfig& c) {
  if (c.dim < 1 || c.dim > kMaxDim) throw ConfigError("dim: must lie in [1, " + std::to_string(kMaxDim) + "]");
  if (c.beta && !(*c.beta >= 0.0 && std::isfinite(*c.beta))) throw ConfigError("beta: must be finite and >= 0");
  if (c.n_grid.empty()) throw ConfigError("n_grid: must not be empty");
  for (int n : c.n_grid) {
    if (n < 1) throw ConfigError("n_grid: horizons must be positive");
  }
  for (int m : c.m_grid) {
    if (m < 0) throw ConfigError("m_grid: horizons must be nonnegative");
  }
  if (c.samples < 100) throw ConfigError("samples: Monte Carlo suites need at least 100 samples");
  if (c.overlap_samples < 100) throw ConfigError("overlap_samples: need at least 100 samples");
  if (c.u_grid.empty()) throw ConfigError("u_grid: must not be empty");
  for (std::size_t i = 0; i < c.u_grid.size(); ++i) {
    if (!(c.u_grid[i] > 0.0)) throw ConfigError("u_grid: deviation levels must be positive");
    if (i > 0 && !(c.u_grid[i] > c.u_grid[i - 1])) throw ConfigError("u_grid: deviation levels must increase");
  }
  if (!(c.big_a > 0.0)) throw ConfigError("big_a: window constant must be positive");
  if (!(c.alpha > 0.0 && c.alpha < 0.5)) throw ConfigError("alpha: need 0 < alpha < 1/2");
  if (c.k_horizon < 1) throw ConfigError("k_horizon: must be at least 1");
  if (c.pi_tmax < 1) throw ConfigError("pi_tmax: must be at least 1");
  if (c.overlap_n < 0) throw ConfigError("overlap_n: must be nonnegative");
  if (c.llt_probes < 1) throw ConfigError("llt_probes: must be at least 1");
  if (!(c.se_multiple > 0.0)) throw ConfigError("se_multiple: must be positive");
  if (!(c.trend_se_multiple > 0.0)) throw ConfigError("trend_se_multiple: must be positive");
  if (!(c.overlap_level > 0.0 && c.overlap_level < 1.0)) throw ConfigError("overlap_level: must lie in (0, 1)");
}

/// Sets one key on a config; throws ConfigError for unknown keys or bad values.
inline void apply_setting(ExperimentConfig& c, const std::string& key, const std::string& value) {
  using detail::parse_list;
  using detail::parse_number;
  if (key == "dim") c.dim = parse_number<int>(key, value);
  else if (key == "law") {
    try {
      c.law = parse_law(value);
    } catch (const ConfigError& e) {
      throw ConfigError("law: " + std::string(e.what()));
    }
  } else if (key == "beta") {
    if (value == "auto") c.beta.reset();
    else c.beta = parse_number<double>(key, value);
  } else if (key == "n_grid") c.n_grid = parse_list<int>(key, value);
  else if (key == "m_grid") c.m_grid = parse_list<int>(key, value);
  else if (key == "samples") c.samples = parse_number<std::uint64_t>(key, value);
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "u_grid") c.u_grid = parse_list<double>(key, value);
  else if (key == "big_a") c.big_a = parse_number<double>(key, value);
  else if (key == "alpha") c.alpha = parse_number<double>(key, value);
  else if (key == "k_horizon") c.k_horizon = parse_number<int>(key, value);
  else if (key == "pi_tmax") c.pi_tmax = parse_number<int>(key, value);
  else if (key == "overlap_n") c.overlap_n = parse_number<int>(key, value);
  else if (key == "overlap_samples") c.overlap_samples = parse_number<std::uint64_t>(key, value);
  else if (key == "llt_probes") c.llt_probes = parse_number<int>(key, value);
  else if (key == "se_multiple") c.se_multiple = parse_number<double>(key, value);
  else if (key == "trend_se_multiple") c.trend_se_multiple = parse_number<double>(key, value);
  else if (key == "overlap_level") c.overlap_level = parse_number<double>(key, value);
  else throw ConfigError("unknown key '" + key + "'");
}

inline ParsedConfig parse_config_text(std::string_view text) {
  ParsedConfig out;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = detail::trim(line);
    if (body.empty() || body[0] == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = detail::trim(std::string_view(body).substr(0, eq));
    const std::string value = detail::trim(std::string_view(body).substr(eq + 1));
    if (!out.keys.insert(key).second) throw ConfigError(key + ": set twice");
    apply_setting(out.config, key, value);
  }
  validate(out.config);
  return out;
}

inline ParsedConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

/// Every key with its resolved value, in a fixed order.
inline std::string emit_config(const ExperimentConfig& c) {
  using detail::format_double;
  using detail::join;
  std::string s;
  auto line = [&](const char* key, const std::string& value) { s += std::string(key) + " = " + value + "\n"; };
  line("dim", std::to_string(c.dim));
  line("law", std::string(law_name(c.law)));
  line("beta", c.beta ? format_double(*c.beta) : "auto");
  line("n_grid", join(c.n_grid));
  line("m_grid", join(c.m_grid));
  line("samples", std::to_string(c.samples));
  line("seed", std::to_string(c.seed));
  line("u_grid", join(c.u_grid));
  line("big_a", format_double(c.big_a));
  line("alpha", format_double(c.alpha));
  line("k_horizon", std::to_string(c.k_horizon));
  line("pi_tmax", std::to_string(c.pi_tmax));
  line("overlap_n", std::to_string(c.overlap_n));
  line("overlap_samples", std::to_string(c.overlap_samples));
  line("llt_probes", std::to_string(c.llt_probes));
  line("se_multiple", format_double(c.se_multiple));
  line("trend_se_multiple", format_double(c.trend_se_multiple));
  line("overlap_level", format_double(c.overlap_level));
  return s;
}

}  // namespace polymerlab
