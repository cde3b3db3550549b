#pragma once

// Transfer-matrix evaluation of partition functions, polymer marginals and
// the densities of the environment seen from the polymer endpoint, for one
// fixed environment.
//
// Conventions. A path based at (M, x) with horizon N collects the weight
// exp(beta * sum_{t=M+1..N} eta(t, w_t)); the disorder at the starting time
// is never included. Sweeps store slice weights in direct space together
// with a binary scale exponent, so rescaling is exact.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "disorder.hpp"
#include "errors.hpp"
#include "lattice.hpp"
#include "summation.hpp"

namespace polymerlab {

struct SweepOptions {
  bool renormalize_every_slice = false;  // rescale even when weights are in range
  bool retain_all = true;                // otherwise keep only the final slice of the sweep
};

/// Weights of one time slice; the represented value is weights[i] * 2^scale_exponent.
struct SliceVector {
  int time = 0;
  std::vector<double> weights;
  int scale_exponent = 0;

  double log_offset() const { return scale_exponent * std::numbers::ln2; }
  double value(std::size_t i) const { return std::ldexp(weights[i], scale_exponent); }
  double log_value(std::size_t i) const { return std::log(weights[i]) + log_offset(); }
};

/// Slices of one sweep over a cone, in ascending time.
struct SliceSequence {
  LatticeCone cone;
  std::vector<SliceVector> slices;

  const SliceVector& at(int t) const {
    for (const auto& s : slices) {
      if (s.time == t) return s;
    }
    throw std::out_of_range("time " + std::to_string(t) + " not retained by the sweep");
  }
  double value(int t, const Site& x) const {
    const std::ptrdiff_t i = cone.slice(t).index(x);
    return i < 0 ? 0.0 : at(t).value(static_cast<std::size_t>(i));
  }
};

namespace detail {

inline void renormalize(SliceVector& s, bool force) {
  double peak = 0.0;
  for (double w : s.weights) peak = std::max(peak, w);
  if (!std::isfinite(peak)) throw NumericRangeError("non-finite weight at time " + std::to_string(s.time));
  if (peak == 0.0) return;
  const int e = std::ilogb(peak);
  if (!force && e > -100 && e < 100) return;
  for (double& w : s.weights) w = std::ldexp(w, -e);
  s.scale_exponent += e;
}

/// w * 2^k * exp(log_factor) without spurious overflow.
inline double scaled(double w, int k, double log_factor) {
  if (w == 0.0) return 0.0;
  if (std::abs(k) < 900 && std::abs(log_factor) < 600) return std::ldexp(w, k) * std::exp(log_factor);
  return std::exp(std::log(w) + k * std::numbers::ln2 + log_factor);
}

template <Environment E>
void check_dims(const E& env, const ModelParams& p) {
  if (env.dim() != p.dim) {
    throw std::invalid_argument("environment dimension " + std::to_string(env.dim()) +
                                " differs from model dimension " + std::to_string(p.dim));
  }
}

/// exp(beta * eta(t, x)) over a slice, in slice index order.
template <Environment E>
void boltzmann_factors(const E& env, double beta, int t, const BallSlice& slice, std::vector<double>& out) {
  out.resize(slice.size());
  const int last = slice.dim() - 1;
  for (const auto& row : slice.rows()) {
    Site first = slice.center() + row.prefix;
    first[last] = slice.center()[last] - row.half_width;
    fill_row(env, t, first, row.half_width + 1, out.data() + row.start);
  }
  for (double& v : out) v = std::exp(beta * v);
}

/// prev(x) = (1/2d) sum_e exp(beta eta(t+1, x+e)) next(x+e), from the cone's
/// last slice down to its first.
template <Environment E>
SliceSequence backward_sweep(const E& env, const ModelParams& p, LatticeCone cone, SliceVector top,
                             const SweepOptions& opt) {
  const double branching = 2.0 * p.dim;
  SliceSequence seq{std::move(cone), {}};
  std::vector<double> factors;
  std::vector<double> g;
  if (opt.retain_all || seq.cone.t_min() == seq.cone.t_max()) seq.slices.push_back(top);
  SliceVector cur = std::move(top);
  for (int t = seq.cone.t_max() - 1; t >= seq.cone.t_min(); --t) {
    const BallSlice& upper = seq.cone.slice(t + 1);
    const BallSlice& lower = seq.cone.slice(t);
    boltzmann_factors(env, p.beta, t + 1, upper, factors);
    g.resize(upper.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = factors[i] * cur.weights[i];
    SliceVector prev{t, std::vector<double>(lower.size()), cur.scale_exponent};
    neighbor_sum(upper, g, lower, prev.weights);
    for (double& w : prev.weights) w = w / branching;
    renormalize(prev, opt.renormalize_every_slice);
    cur = std::move(prev);
    if (opt.retain_all || t == seq.cone.t_min()) seq.slices.push_back(cur);
  }
  std::reverse(seq.slices.begin(), seq.slices.end());
  return seq;
}

}  // namespace detail

/// Endpoint-resolved weights P^x[exp(beta sum eta); w_{t-M} = y] for every
/// t in [M, N] and every y of the cone opening at the start point.
template <Environment E>
SliceSequence forward_point_to_point(const E& env, const ModelParams& p, const SpaceTimePoint& start, int end_time,
                                     const SweepOptions& opt = {}) {
  detail::check_dims(env, p);
  if (end_time < start.time) throw std::invalid_argument("end time precedes start time");
  const double branching = 2.0 * p.dim;
  SliceSequence seq{LatticeCone::build(p.dim, start.time, end_time, start), {}};
  SliceVector cur{start.time, {1.0}, 0};
  std::vector<double> factors;
  if (opt.retain_all || end_time == start.time) seq.slices.push_back(cur);
  for (int t = start.time + 1; t <= end_time; ++t) {
    const BallSlice& from = seq.cone.slice(t - 1);
    const BallSlice& to = seq.cone.slice(t);
    SliceVector next{t, std::vector<double>(to.size()), cur.scale_exponent};
    neighbor_sum(from, cur.weights, to, next.weights);
    detail::boltzmann_factors(env, p.beta, t, to, factors);
    for (std::size_t i = 0; i < next.weights.size(); ++i) next.weights[i] = next.weights[i] / branching * factors[i];
    detail::renormalize(next, opt.renormalize_every_slice);
    cur = std::move(next);
    if (opt.retain_all || t == end_time) seq.slices.push_back(cur);
  }
  return seq;
}

/// Free-endpoint partition functions Z^x_{t,N} for t in [M, N] and every x
/// within base_radius + (t - M) of `center`. At t = N the slice is all ones.
template <Environment E>
SliceSequence backward_free(const E& env, const ModelParams& p, int horizon, int start_time, const Site& center = {},
                            int base_radius = 0, const SweepOptions& opt = {}) {
  detail::check_dims(env, p);
  if (horizon < start_time) throw std::invalid_argument("horizon precedes start time");
  if (base_radius < 0) throw std::invalid_argument("base radius must be nonnegative");
  auto cone = LatticeCone::build(p.dim, start_time, horizon, {start_time - base_radius, center});
  SliceVector top{horizon, std::vector<double>(cone.slice(horizon).size(), 1.0), 0};
  return detail::backward_sweep(env, p, std::move(cone), std::move(top), opt);
}

/// Weights P^x[exp(beta sum_{s=t+1..N} eta(s, w_s)); w reaches `end`] for
/// every (t, x) of the cone closing at the end point.
template <Environment E>
SliceSequence backward_point_to_point(const E& env, const ModelParams& p, const SpaceTimePoint& end, int start_time,
                                      const SweepOptions& opt = {}) {
  detail::check_dims(env, p);
  if (end.time < start_time) throw std::invalid_argument("end time precedes start time");
  auto cone = LatticeCone::build(p.dim, start_time, end.time, end);
  SliceVector top{end.time, {1.0}, 0};
  return detail::backward_sweep(env, p, std::move(cone), std::move(top), opt);
}

/// log Z^x_{M,N}.
template <Environment E>
double log_partition_function(const E& env, const ModelParams& p, int start_time, int horizon, const Site& x) {
  const auto bf = backward_free(env, p, horizon, start_time, x, 0, {.retain_all = false});
  return bf.slices.front().log_value(0);
}

/// W_{M,N}(x) = Z^x_{M,N} exp(-(N-M) lambda).
template <Environment E>
double normalized_W(const E& env, const ModelParams& p, int start_time, int horizon, const Site& x,
                    const SweepOptions& opt = {.retain_all = false}) {
  SweepOptions o = opt;
  o.retain_all = false;
  const auto bf = backward_free(env, p, horizon, start_time, x, 0, o);
  const SliceVector& s = bf.slices.front();
  return detail::scaled(s.weights[0], s.scale_exponent, -(horizon - start_time) * p.lambda);
}

/// Backward W_{M,N}(y): paths from y collect eta(N - t, w_t), t = 1..N-M.
/// Evaluated as the forward W_{-N,-M}(y) of the time-reversed environment.
template <Environment E>
double backward_W(const E& env, const ModelParams& p, int start_time, int horizon, const Site& y) {
  return normalized_W(reversed(env), p, -horizon, -start_time, y);
}

/// W_{M,N}(x|y): the partition function of walks pinned at y, divided by the
/// pinning probability p_{N-M}(x, y).
template <Environment E>
double conditional_W(const E& env, const ModelParams& p, int start_time, int horizon, const Site& x, const Site& y,
                     const WalkDistribution* walk = nullptr) {
  const int steps = horizon - start_time;
  if (!reachable(p.dim, x, y, steps)) {
    throw UnreachableEndpoint("endpoint is not reachable in " + std::to_string(steps) + " steps");
  }
  std::optional<WalkDistribution> own;
  if (walk == nullptr || walk->time != steps || walk->dim != p.dim) {
    own = n_step_distribution(p.dim, steps);
    walk = &*own;
  }
  const auto fp = forward_point_to_point(env, p, {start_time, x}, horizon, {.retain_all = false});
  const SliceVector& last = fp.slices.back();
  const auto i = static_cast<std::size_t>(fp.cone.slice(horizon).index(y));
  return detail::scaled(last.weights[i] / walk->mass(y - x), last.scale_exponent, -steps * p.lambda);
}

/// One-time marginals of the polymer measure based at (M, x) with horizon N.
struct PolymerMarginals {
  LatticeCone cone;                           // anchored at the base point
  std::vector<std::vector<double>> by_time;   // by_time[t - M][i]: probability of site i of slice t
  double log_z = 0.0;

  std::span<const double> at(int t) const { return by_time.at(static_cast<std::size_t>(t - cone.t_min())); }
  double probability(int t, const Site& z) const {
    const std::ptrdiff_t i = cone.slice(t).index(z);
    return i < 0 ? 0.0 : at(t)[static_cast<std::size_t>(i)];
  }
};

/// mu(w_t = z) = forward(t, z) * backward_free(t, z) / Z.
template <Environment E>
PolymerMarginals path_marginals(const E& env, const ModelParams& p, int start_time, int horizon, const Site& x,
                                const SweepOptions& opt = {}) {
  SweepOptions all = opt;
  all.retain_all = true;
  const auto fw = forward_point_to_point(env, p, {start_time, x}, horizon, all);
  const auto bw = backward_free(env, p, horizon, start_time, x, 0, all);
  const SliceVector& base = bw.slices.front();
  const double z = base.weights[0];
  if (!(z > 0.0) || !std::isfinite(z)) throw NumericRangeError("partition function left the representable range");
  PolymerMarginals m{fw.cone, {}, base.log_value(0)};
  for (std::size_t k = 0; k < fw.slices.size(); ++k) {
    const SliceVector& f = fw.slices[k];
    const SliceVector& b = bw.slices[k];
    const int shift = f.scale_exponent + b.scale_exponent - base.scale_exponent;
    std::vector<double> probs(f.weights.size());
    for (std::size_t i = 0; i < probs.size(); ++i) probs[i] = std::ldexp(f.weights[i] * b.weights[i] / z, shift);
    m.by_time.push_back(std::move(probs));
  }
  return m;
}

/// Quenched mean overlap of two replicas: sum_{t=M+1..N} sum_z mu(w_t = z)^2.
template <Environment E>
double replica_overlap(const E& env, const ModelParams& p, int start_time, int horizon, const Site& x) {
  const auto m = path_marginals(env, p, start_time, horizon, x);
  std::vector<double> per_time;
  for (int t = start_time + 1; t <= horizon; ++t) {
    const auto probs = m.at(t);
    std::vector<double> sq(probs.size());
    for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = probs[i] * probs[i];
    per_time.push_back(pairwise_sum(sq));
  }
  return pairwise_sum(per_time);
}

/// Second moments of the endpoint displacement under the polymer measure.
struct EndpointMoments {
  int dim = 0;
  double mean_square = 0.0;                               // E |w_N - x|^2
  std::array<std::array<double, kMaxDim>, kMaxDim> second{};  // E (w_N - x)_i (w_N - x)_j
};

template <Environment E>
EndpointMoments endpoint_moments(const E& env, const ModelParams& p, int start_time, int horizon, const Site& x) {
  const auto fw = forward_point_to_point(env, p, {start_time, x}, horizon, {.retain_all = false});
  const SliceVector& last = fw.slices.back();
  const BallSlice& slice = fw.cone.slice(horizon);
  const double total = pairwise_sum(last.weights);
  EndpointMoments out;
  out.dim = p.dim;
  std::vector<double> terms(last.weights.size());
  auto moment = [&](auto&& weight_of) {
    slice.for_each_site([&](std::size_t i, const Site& z) { terms[i] = weight_of(z - x) * last.weights[i]; });
    return pairwise_sum(terms) / total;
  };
  out.mean_square = moment([&](const Site& r) { return static_cast<double>(squared_norm(r, p.dim)); });
  for (int i = 0; i < p.dim; ++i) {
    for (int j = i; j < p.dim; ++j) {
      out.second[i][j] = out.second[j][i] =
          moment([&](const Site& r) { return static_cast<double>(r[i]) * static_cast<double>(r[j]); });
    }
  }
  return out;
}

template <Environment E>
double endpoint_mean_square(const E& env, const ModelParams& p, int start_time, int horizon, const Site& x) {
  return endpoint_moments(env, p, start_time, horizon, x).mean_square;
}

/// A density of the environment seen from the endpoint with respect to the
/// product law. The decomposition fields are filled by density_qN_decomposed
/// and are NaN otherwise.
struct DensityValue {
  static constexpr double kUnset = std::numeric_limits<double>::quiet_NaN();
  double q = 0.0;
  double outside_mass = 0.0;        // contribution of starting points with |x| >= window radius
  double backward_factor = kUnset;  // backward W_{-l,0}(0)
  double site_factor = kUnset;      // exp(beta eta(0,0) - lambda)
  double main_sum = kUnset;         // sum_{|x|<r} W_{-N,-N+l}(x) / W_{-N,0}(x) p_N(x,0)
  double remainder_sum = kUnset;    // sum_{|x|<r} R_{-N,0}(x,0) / W_{-N,0}(x) p_N(x,0)
};

namespace detail {

/// Terms mu^x_{-N,H}(w at time 0 = 0) for every x with |x|_1 <= N, sharing
/// the ball of radius N around the origin at time -N.
template <Environment E>
std::vector<double> endpoint_terms(const E& env, const ModelParams& p, int n, int forward_horizon,
                                   const SweepOptions& opt, SliceVector* numerator_out = nullptr,
                                   SliceVector* denominator_out = nullptr) {
  SweepOptions last = opt;
  last.retain_all = false;
  const auto to_origin = backward_point_to_point(env, p, {0, Site{}}, -n, last);
  const auto free = backward_free(env, p, forward_horizon, -n, Site{}, n, last);
  const SliceVector& num = to_origin.slices.front();
  const SliceVector& den = free.slices.front();
  double future = 1.0;
  int future_exponent = 0;
  if (forward_horizon > 0) {
    const auto ahead = backward_free(env, p, forward_horizon, 0, Site{}, 0, last);
    future = ahead.slices.front().weights[0];
    future_exponent = ahead.slices.front().scale_exponent;
  }
  std::vector<double> terms(num.weights.size());
  const int shift = num.scale_exponent + future_exponent - den.scale_exponent;
  for (std::size_t i = 0; i < terms.size(); ++i) terms[i] = std::ldexp(num.weights[i] / den.weights[i] * future, shift);
  if (numerator_out) *numerator_out = num;
  if (denominator_out) *denominator_out = den;
  return terms;
}

}  // namespace detail

/// q_N = sum_x mu^x_{-N,0}(w_N = 0). `window_radius` splits off the
/// contribution of starting points with Euclidean |x| >= window_radius.
template <Environment E>
DensityValue density_qN(const E& env, const ModelParams& p, int n,
                        double window_radius = std::numeric_limits<double>::infinity(), const SweepOptions& opt = {}) {
  if (n < 0) throw std::invalid_argument("N must be nonnegative");
  const auto terms = detail::endpoint_terms(env, p, n, 0, opt);
  const BallSlice ball(p.dim, n, Site{});
  std::vector<double> outside(terms.size(), 0.0);
  ball.for_each_site([&](std::size_t i, const Site& x) {
    if (std::sqrt(static_cast<double>(squared_norm(x, p.dim))) >= window_radius) outside[i] = terms[i];
  });
  DensityValue v;
  v.q = pairwise_sum(terms);
  v.outside_mass = pairwise_sum(outside);
  return v;
}

/// q_{N,M} = sum_x mu^x_{-N,M}(w_N = 0), factorized at time 0.
template <Environment E>
DensityValue density_qNM(const E& env, const ModelParams& p, int n, int m, const SweepOptions& opt = {}) {
  if (n < 0 || m < 0) throw std::invalid_argument("N and M must be nonnegative");
  DensityValue v;
  v.q = pairwise_sum(detail::endpoint_terms(env, p, n, m, opt));
  return v;
}

/// q_N together with its local-limit split over |x| < A sqrt(N):
/// q_N = backward_factor * site_factor * main_sum + remainder_sum + outside_mass.
template <Environment E>
DensityValue density_qN_decomposed(const E& env, const ModelParams& p, int n, int l, double window_constant) {
  if (!(l > 0 && 2 * l < n)) throw std::invalid_argument("need 0 < l < N/2");
  SliceVector num;
  SliceVector den;
  const auto terms = detail::endpoint_terms(env, p, n, 0, {}, &num, &den);
  const auto early = backward_free(env, p, -n + l, -n, Site{}, n, {.retain_all = false}).slices.front();
  const auto walk = n_step_distribution(p.dim, n);
  const double radius = window_constant * std::sqrt(static_cast<double>(n));

  DensityValue v;
  v.backward_factor = backward_W(env, p, -l, 0, Site{});
  v.site_factor = std::exp(p.beta * env.value(0, Site{}) - p.lambda);
  const double g = v.backward_factor * v.site_factor;
  std::vector<double> main(terms.size(), 0.0);
  std::vector<double> rest(terms.size(), 0.0);
  std::vector<double> outside(terms.size(), 0.0);
  walk.support.for_each_site([&](std::size_t i, const Site& x) {
    if (std::sqrt(static_cast<double>(squared_norm(x, p.dim))) >= radius) {
      outside[i] = terms[i];
      return;
    }
    const double pn = walk.masses[i];
    const double w_full = detail::scaled(den.weights[i], den.scale_exponent, -n * p.lambda);
    const double w_early = detail::scaled(early.weights[i], early.scale_exponent, -l * p.lambda);
    const double w_cond = detail::scaled(num.weights[i] / pn, num.scale_exponent, -n * p.lambda);
    main[i] = w_early / w_full * pn;
    rest[i] = (w_cond - w_early * g) / w_full * pn;
  });
  v.q = pairwise_sum(terms);
  v.main_sum = pairwise_sum(main);
  v.remainder_sum = pairwise_sum(rest);
  v.outside_mass = pairwise_sum(outside);
  return v;
}

/// Finite-horizon proxy of the limiting density:
/// backward W_{-K,0}(0) * exp(beta eta(0,0) - lambda) [* W_{0,M}(0)].
struct LimitDensity {
  double value = 0.0;
  double backward_factor = 0.0;
  double site_factor = 0.0;
  double forward_factor = 1.0;
};

template <Environment E>
LimitDensity limit_density(const E& env, const ModelParams& p, int k, std::optional<int> forward_horizon = {}) {
  if (k < 0) throw std::invalid_argument("K must be nonnegative");
  LimitDensity d;
  d.backward_factor = backward_W(env, p, -k, 0, Site{});
  d.site_factor = std::exp(p.beta * env.value(0, Site{}) - p.lambda);
  if (forward_horizon) d.forward_factor = normalized_W(env, p, 0, *forward_horizon, Site{});
  d.value = d.backward_factor * d.site_factor * d.forward_factor;
  return d;
}

/// Local-limit split W_{M,N}(x|y) = W_{M,M+l}(x) * backW_{N-l,N}(y) * exp(beta eta(N,y) - lambda) + R.
struct LltDecomposition {
  double remainder = 0.0;
  double conditional = 0.0;
  double forward_factor = 0.0;
  double backward_factor = 0.0;
  double site_factor = 0.0;
};

/// max(1, floor(N^alpha)).
inline int default_llt_window(int n, double alpha = 0.3) {
  return std::max(1, static_cast<int>(std::floor(std::pow(static_cast<double>(n), alpha))));
}

template <Environment E>
LltDecomposition llt_remainder(const E& env, const ModelParams& p, int start_time, int horizon, const Site& x,
                               const Site& y, int l, const WalkDistribution* walk = nullptr) {
  if (!reachable(p.dim, x, y, horizon - start_time)) {
    throw UnreachableEndpoint("endpoint is not reachable in " + std::to_string(horizon - start_time) + " steps");
  }
  if (!(l > 0 && 2 * l < horizon - start_time)) throw std::invalid_argument("need 0 < l < (N - M)/2");
  LltDecomposition r;
  r.conditional = conditional_W(env, p, start_time, horizon, x, y, walk);
  r.forward_factor = normalized_W(env, p, start_time, start_time + l, x);
  r.backward_factor = backward_W(env, p, horizon - l, horizon, y);
  r.site_factor = std::exp(p.beta * env.value(horizon, y) - p.lambda);
  r.remainder = r.conditional - r.forward_factor * r.backward_factor * r.site_factor;
  return r;
}

/// Transition law of the infinite-horizon polymer from (N, x), with W_{+inf}
/// replaced by the horizon-T partition functions. Entry k is the probability
/// of the step unit_step(k).
template <Environment E>
std::vector<double> h_transform_kernel(const E& env, const ModelParams& p, int n, const Site& x, int horizon) {
  if (horizon <= n) throw std::invalid_argument("horizon must exceed N");
  const auto bf = backward_free(env, p, horizon, n, x, 0);
  const SliceVector& here = bf.at(n);
  const SliceVector& next = bf.at(n + 1);
  const BallSlice& ring = bf.cone.slice(n + 1);
  const double w_here = detail::scaled(here.weights[0], here.scale_exponent, -(horizon - n) * p.lambda);
  std::vector<double> kernel(static_cast<std::size_t>(2 * p.dim));
  for (int k = 0; k < 2 * p.dim; ++k) {
    const Site y = x + unit_step(k);
    const auto i = static_cast<std::size_t>(ring.index(y));
    const double w_next = detail::scaled(next.weights[i], next.scale_exponent, -(horizon - n - 1) * p.lambda);
    kernel[k] = std::exp(p.beta * env.value(n + 1, y) - p.lambda) * w_next / w_here / (2.0 * p.dim);
  }
  return kernel;
}

/// Everything about one based polymer: Z, W, endpoint weights and marginals.
struct PartitionSet {
  double log_z = 0.0;
  double W = 0.0;
  SliceSequence endpoint;  // single retained slice at the horizon
  PolymerMarginals marginals;
};

template <Environment E>
PartitionSet partition_set(const E& env, const ModelParams& p, int start_time, int horizon, const Site& x) {
  PartitionSet s;
  s.marginals = path_marginals(env, p, start_time, horizon, x);
  s.log_z = s.marginals.log_z;
  s.W = normalized_W(env, p, start_time, horizon, x);
  s.endpoint = forward_point_to_point(env, p, {start_time, x}, horizon, {.retain_all = false});
  return s;
}

}  // namespace polymerlab
