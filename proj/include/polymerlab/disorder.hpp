#pragma once

// Disorder laws, their log-moment generating function, and environment
// fields: lazily generated (counter-based), materialized on a cone, or
// exhaustively enumerated for tiny windows.

#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "counter_rng.hpp"
#include "errors.hpp"
#include "lattice.hpp"

namespace polymerlab {

enum class LawKind : std::uint8_t { Gaussian = 0, Uniform = 1, Rademacher = 2 };

/// Law of one disorder value. Uniform is on [-1, 1], Rademacher is +-1.
struct DisorderLaw {
  LawKind kind = LawKind::Gaussian;

  bool bounded() const { return kind != LawKind::Gaussian; }
  friend bool operator==(const DisorderLaw&, const DisorderLaw&) = default;
};

inline std::string_view law_name(DisorderLaw law) {
  switch (law.kind) {
    case LawKind::Gaussian: return "gaussian";
    case LawKind::Uniform: return "uniform";
    case LawKind::Rademacher: return "rademacher";
  }
  return "unknown";
}

inline DisorderLaw parse_law(std::string_view name) {
  if (name == "gaussian") return {LawKind::Gaussian};
  if (name == "uniform") return {LawKind::Uniform};
  if (name == "rademacher") return {LawKind::Rademacher};
  throw ConfigError("law: unknown disorder law '" + std::string(name) +
                    "' (expected gaussian, uniform or rademacher)");
}

/// lambda(beta) = log E exp(beta * eta).
inline double lambda_of_beta(DisorderLaw law, double beta) {
  if (!std::isfinite(beta)) throw std::invalid_argument("beta must be finite");
  if (beta == 0.0) return 0.0;
  const double b = std::fabs(beta);
  switch (law.kind) {
    case LawKind::Gaussian:
      return 0.5 * beta * beta;
    case LawKind::Uniform: {
      // log(sinh(b) / b)
      if (b < 1e-3) {
        const double b2 = b * b;
        return b2 / 6.0 - b2 * b2 / 180.0 + b2 * b2 * b2 / 2835.0;
      }
      if (b > 20.0) return b - std::log(2.0 * b) + std::log1p(-std::exp(-2.0 * b));
      return std::log(std::sinh(b) / b);
    }
    case LawKind::Rademacher:
      // log cosh(b)
      return b + std::log1p(std::exp(-2.0 * b)) - std::log(2.0);
  }
  return 0.0;
}

/// Model parameters with the derived cumulants.
struct ModelParams {
  int dim = 3;
  double beta = 0.0;
  DisorderLaw law{};
  double lambda = 0.0;   // lambda(beta)
  double lambda2 = 0.0;  // lambda(2 beta)
  double gamma = 0.0;    // lambda(2 beta) - 2 lambda(beta)

  static ModelParams make(int dim, double beta, DisorderLaw law) {
    check_dimension(dim);
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw std::invalid_argument("beta must be finite and >= 0");
    ModelParams p;
    p.dim = dim;
    p.beta = beta;
    p.law = law;
    p.lambda = lambda_of_beta(law, beta);
    p.lambda2 = lambda_of_beta(law, 2.0 * beta);
    p.gamma = beta == 0.0 ? 0.0 : p.lambda2 - 2.0 * p.lambda;
    return p;
  }
};

/// Standard normal quantile (Acklam's rational approximation, relative
/// error below 1.2e-9). Deterministic and branch-cheap.
inline double normal_quantile(double p) {
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - p_low) {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

/// Maps 64 random bits to one draw of the law.
inline double draw_disorder(DisorderLaw law, std::uint64_t bits) {
  switch (law.kind) {
    case LawKind::Gaussian: return normal_quantile(to_open_unit(bits));
    case LawKind::Uniform: return 2.0 * to_open_unit(bits) - 1.0;
    case LawKind::Rademacher: return (bits >> 63) != 0 ? 1.0 : -1.0;
  }
  return 0.0;
}

/// Anything that assigns a disorder value to a space-time site.
template <class E>
concept Environment = requires(const E& env, int t, const Site& x) {
  { env.dim() } -> std::convertible_to<int>;
  { env.value(t, x) } -> std::convertible_to<double>;
};

/// Environments that can produce a whole row (x, x + 2 e_d, x + 4 e_d, ...) at once.
template <class E>
concept RowEnvironment = Environment<E> && requires(const E& env, int t, const Site& x, int n, double* out) {
  env.fill_row(t, x, n, out);
};

/// Writes env(t, first + 2k e_d) for k < count.
template <Environment E>
void fill_row(const E& env, int t, const Site& first, int count, double* out) {
  if constexpr (RowEnvironment<E>) {
    env.fill_row(t, first, count, out);
  } else {
    Site x = first;
    const int last = env.dim() - 1;
    for (int k = 0; k < count; ++k, x[last] += 2) out[k] = env.value(t, x);
  }
}

/// The i.i.d. field on all of Z^{1+d} for one (master_seed, sample_index).
/// Each value is a pure function of (master_seed, sample_index, t, x), so
/// fields agree on overlapping windows and never depend on visiting order.
class SeededEnvironment {
 public:
  SeededEnvironment(int dim, DisorderLaw law, std::uint64_t master_seed, std::uint64_t sample_index)
      : dim_(dim), law_(law), master_seed_(master_seed), sample_index_(sample_index),
        key_(mix_key(mix_key(0x504f4c59ULL, master_seed), sample_index)) {
    check_dimension(dim);
  }

  int dim() const { return dim_; }
  DisorderLaw law() const { return law_; }
  std::uint64_t master_seed() const { return master_seed_; }
  std::uint64_t sample_index() const { return sample_index_; }

  double value(int t, const Site& x) const {
    std::uint64_t k = time_key(t);
    for (int i = 0; i < dim_; ++i) k = mix_key(k, coordinate_word(x[i], i));
    return draw_disorder(law_, mix64(k));
  }

  void fill_row(int t, const Site& first, int count, double* out) const {
    std::uint64_t k = time_key(t);
    for (int i = 0; i + 1 < dim_; ++i) k = mix_key(k, coordinate_word(first[i], i));
    const int last = dim_ - 1;
    for (int j = 0; j < count; ++j) {
      out[j] = draw_disorder(law_, mix64(mix_key(k, coordinate_word(first[last] + 2 * j, last))));
    }
  }

 private:
  std::uint64_t time_key(int t) const {
    return mix_key(key_, static_cast<std::uint64_t>(static_cast<std::uint32_t>(t)));
  }
  static std::uint64_t coordinate_word(int c, int axis) {
    return (static_cast<std::uint64_t>(axis) << 32) | static_cast<std::uint32_t>(c);
  }

  int dim_;
  DisorderLaw law_;
  std::uint64_t master_seed_;
  std::uint64_t sample_index_;
  std::uint64_t key_;
};

/// Where a stored field came from.
struct FieldProvenance {
  DisorderLaw law{};
  std::uint64_t master_seed = 0;
  std::uint64_t sample_index = 0;
  bool enumerated = false;  // enumerated(k): sample_index holds k

  friend bool operator==(const FieldProvenance&, const FieldProvenance&) = default;
};

/// Disorder values materialized on a cone window.
struct EnvironmentField {
  LatticeCone cone;
  std::vector<double> values;  // one per cone site, in cone index order
  FieldProvenance provenance;

  int dim() const { return cone.dim(); }

  double value(int t, const Site& x) const {
    const std::ptrdiff_t i = cone.index(t, x);
    if (i < 0) {
      std::string where = "(" + std::to_string(t) + ";";
      for (int k = 0; k < cone.dim(); ++k) where += (k ? "," : "") + std::to_string(x[k]);
      throw WindowError("site " + where + ") lies outside the stored field window");
    }
    return values[static_cast<std::size_t>(i)];
  }

  friend bool operator==(const EnvironmentField& a, const EnvironmentField& b) {
    return a.cone == b.cone && a.values == b.values && a.provenance == b.provenance;
  }
};

/// Materializes the seeded field on a cone.
inline EnvironmentField sample_environment(const LatticeCone& cone, DisorderLaw law, std::uint64_t master_seed,
                                           std::uint64_t sample_index) {
  const SeededEnvironment source(cone.dim(), law, master_seed, sample_index);
  EnvironmentField field{cone, std::vector<double>(cone.site_count()), {law, master_seed, sample_index, false}};
  for (int t = cone.t_min(); t <= cone.t_max(); ++t) {
    const BallSlice& slice = cone.slice(t);
    double* base = field.values.data() + cone.slice_offset(t);
    for (const auto& row : slice.rows()) {
      Site first = slice.center() + row.prefix;
      first[cone.dim() - 1] = slice.center()[cone.dim() - 1] - row.half_width;
      source.fill_row(t, first, row.half_width + 1, base + row.start);
    }
  }
  return field;
}

inline constexpr std::size_t kMaxEnumeratedSites = 24;

/// Visits all 2^n sign assignments of a Rademacher field on the cone,
/// each with probability 2^-n: f(field, probability).
template <class F>
void enumerate_environments(const LatticeCone& cone, F&& f) {
  const std::size_t n = cone.site_count();
  if (n > kMaxEnumeratedSites) {
    throw CapacityError("refusing to enumerate " + std::to_string(n) + " sites (limit " +
                        std::to_string(kMaxEnumeratedSites) + ")");
  }
  const std::uint64_t total = std::uint64_t{1} << n;
  const double probability = std::ldexp(1.0, -static_cast<int>(n));
  EnvironmentField field{cone, std::vector<double>(n), {{LawKind::Rademacher}, 0, 0, true}};
  for (std::uint64_t mask = 0; mask < total; ++mask) {
    for (std::size_t i = 0; i < n; ++i) field.values[i] = ((mask >> i) & 1U) != 0 ? 1.0 : -1.0;
    field.provenance.sample_index = mask;
    f(static_cast<const EnvironmentField&>(field), probability);
  }
}

/// Field with values eta(-t, x), stored on the reflected cone.
inline EnvironmentField time_reverse(const EnvironmentField& field) {
  const auto& c = field.cone;
  EnvironmentField out{LatticeCone::build(c.dim(), -c.t_max(), -c.t_min(), {-c.anchor().time, c.anchor().site}),
                       {}, field.provenance};
  out.values.resize(out.cone.site_count());
  for (int t = out.cone.t_min(); t <= out.cone.t_max(); ++t) {
    const std::size_t offset = out.cone.slice_offset(t);
    out.cone.slice(t).for_each_site(
        [&](std::size_t i, const Site& x) { out.values[offset + i] = field.value(-t, x); });
  }
  return out;
}

/// Field with values eta(-t, x) on a caller-chosen window; throws WindowError
/// when a reflected site is not stored in the input.
inline EnvironmentField time_reverse(const EnvironmentField& field, const LatticeCone& target) {
  EnvironmentField out{target, std::vector<double>(target.site_count()), field.provenance};
  for (int t = target.t_min(); t <= target.t_max(); ++t) {
    const std::size_t offset = target.slice_offset(t);
    target.slice(t).for_each_site(
        [&](std::size_t i, const Site& x) { out.values[offset + i] = field.value(-t, x); });
  }
  return out;
}

/// Lazy view eta'(t, x) = eta(-t, x) of another environment.
template <Environment E>
class ReversedEnvironment {
 public:
  explicit ReversedEnvironment(const E& inner) : inner_(&inner) {}
  int dim() const { return inner_->dim(); }
  double value(int t, const Site& x) const { return inner_->value(-t, x); }
  void fill_row(int t, const Site& first, int count, double* out) const {
    polymerlab::fill_row(*inner_, -t, first, count, out);
  }

 private:
  const E* inner_;
};

template <Environment E>
ReversedEnvironment<E> reversed(const E& env) {
  return ReversedEnvironment<E>(env);
}

/// Smallest beta at which gamma(beta) reaches log(1/pi), or +infinity when
/// gamma stays below it (e.g. Rademacher, whose gamma saturates at log 2).
inline double l2_threshold_beta(DisorderLaw law, double pi) {
  if (!(pi > 0.0 && pi < 1.0)) return 0.0;
  const double target = std::log(1.0 / pi);
  auto gamma = [&](double b) { return lambda_of_beta(law, 2.0 * b) - 2.0 * lambda_of_beta(law, b); };
  double lo = 0.0;
  double hi = 1.0;
  while (gamma(hi) < target) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e6) return std::numeric_limits<double>::infinity();
  }
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (gamma(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace polymerlab
