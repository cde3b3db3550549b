#pragma once

// Directed space-time lattice geometry, simple random walk kernels and the
// collision statistics of two independent walks.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "counter_rng.hpp"
#include "errors.hpp"
#include "summation.hpp"

namespace polymerlab {

inline constexpr int kMaxDim = 4;
inline constexpr std::uint64_t kMaxSites = std::uint64_t{1} << 28;

/// A lattice site; only the first `dim` coordinates are meaningful, the rest stay 0.
using Site = std::array<int, kMaxDim>;

struct SpaceTimePoint {
  int time = 0;
  Site site{};
};

inline int l1_norm(const Site& x, int dim) {
  int s = 0;
  for (int i = 0; i < dim; ++i) s += std::abs(x[i]);
  return s;
}

inline long squared_norm(const Site& x, int dim) {
  long s = 0;
  for (int i = 0; i < dim; ++i) s += static_cast<long>(x[i]) * x[i];
  return s;
}

inline Site operator+(Site a, const Site& b) {
  for (int i = 0; i < kMaxDim; ++i) a[i] += b[i];
  return a;
}

inline Site operator-(Site a, const Site& b) {
  for (int i = 0; i < kMaxDim; ++i) a[i] -= b[i];
  return a;
}

/// Direction k in [0, 2d): +e_{k/2} for even k, -e_{k/2} for odd k.
inline Site unit_step(int k) {
  Site e{};
  e[k / 2] = (k % 2 == 0) ? 1 : -1;
  return e;
}

/// True when a nearest-neighbour walk can go from `from` to `to` in exactly `steps` steps.
inline bool reachable(int dim, const Site& from, const Site& to, int steps) {
  if (steps < 0) return false;
  const int dist = l1_norm(to - from, dim);
  return dist <= steps && (steps - dist) % 2 == 0;
}

inline void check_dimension(int dim) {
  if (dim < 1 || dim > kMaxDim) {
    throw std::invalid_argument("dimension must lie in [1, " + std::to_string(kMaxDim) +
                                "], got " + std::to_string(dim));
  }
}

/// Number of z in Z^d with |z|_1 <= r and sum(z) = r (mod 2), saturating at 2^62.
inline std::uint64_t ball_count(int dim, int radius) {
  check_dimension(dim);
  if (radius < 0) return 0;
  constexpr std::uint64_t kCap = std::uint64_t{1} << 62;
  std::vector<std::uint64_t> f(static_cast<std::size_t>(radius) + 1);
  for (int m = 0; m <= radius; ++m) f[m] = static_cast<std::uint64_t>(m) + 1;
  for (int k = 2; k <= dim; ++k) {
    std::vector<std::uint64_t> g(f.size());
    std::uint64_t below = 0;  // sum_{j<m} f[j]
    for (int m = 0; m <= radius; ++m) {
      g[m] = std::min(kCap, f[m] + 2 * std::min(below, kCap));
      below = std::min(kCap, below + f[m]);
    }
    f = std::move(g);
  }
  return f[radius];
}

/// One time slice of a cone: the parity-admissible l1 ball of a given radius
/// around a centre, stored row by row. A row fixes the first d-1 relative
/// coordinates; its sites run over the last coordinate -s, -s+2, ..., s.
/// Sites are indexed in lexicographic order of their coordinates.
class BallSlice {
 public:
  struct Row {
    Site prefix{};  // relative to the centre; last coordinate unused
    int half_width = 0;
    std::size_t start = 0;
  };

  BallSlice() = default;

  BallSlice(int dim, int radius, const Site& center) : dim_(dim), radius_(radius), center_(center) {
    check_dimension(dim);
    if (radius < 0) throw std::invalid_argument("slice radius must be nonnegative");
    side_ = 2 * radius + 1;
    std::uint64_t box = 1;
    for (int i = 0; i + 1 < dim; ++i) {
      box *= static_cast<std::uint64_t>(side_);
      if (box > kMaxSites) throw CapacityError("slice of radius " + std::to_string(radius) + " exceeds capacity");
    }
    row_of_prefix_.assign(box, -1);
    Site prefix{};
    build_rows(0, radius, prefix);
  }

  int dim() const { return dim_; }
  int radius() const { return radius_; }
  const Site& center() const { return center_; }
  std::size_t size() const { return size_; }
  std::span<const Row> rows() const { return rows_; }

  /// Row holding the given relative prefix, or -1.
  std::ptrdiff_t row_index(const Site& prefix) const {
    std::size_t key = 0;
    std::size_t stride = 1;
    for (int i = 0; i + 1 < dim_; ++i) {
      const int c = prefix[i] + radius_;
      if (c < 0 || c >= side_) return -1;
      key += static_cast<std::size_t>(c) * stride;
      stride *= static_cast<std::size_t>(side_);
    }
    return row_of_prefix_[key];
  }

  /// Dense index of an absolute site, or -1 when it is not in the slice.
  std::ptrdiff_t index(const Site& x) const {
    const Site rel = x - center_;
    const std::ptrdiff_t r = row_index(rel);
    if (r < 0) return -1;
    const Row& row = rows_[static_cast<std::size_t>(r)];
    const int z = rel[dim_ - 1];
    if (z < -row.half_width || z > row.half_width || ((z + row.half_width) & 1) != 0) return -1;
    return static_cast<std::ptrdiff_t>(row.start) + (z + row.half_width) / 2;
  }

  /// Absolute site stored at a dense index.
  Site site(std::size_t i) const {
    auto it = std::upper_bound(rows_.begin(), rows_.end(), i,
                               [](std::size_t v, const Row& row) { return v < row.start; });
    const Row& row = *(it - 1);
    Site rel = row.prefix;
    rel[dim_ - 1] = -row.half_width + 2 * static_cast<int>(i - row.start);
    return center_ + rel;
  }

  /// Calls f(index, site) for every site in index order.
  template <class F>
  void for_each_site(F&& f) const {
    for (const Row& row : rows_) {
      Site x = center_ + row.prefix;
      for (int k = 0; k <= row.half_width; ++k) {
        x[dim_ - 1] = center_[dim_ - 1] - row.half_width + 2 * k;
        f(row.start + static_cast<std::size_t>(k), static_cast<const Site&>(x));
      }
    }
  }

 private:
  void build_rows(int axis, int budget, Site& prefix) {
    if (axis == dim_ - 1) {
      std::size_t key = 0;
      std::size_t stride = 1;
      for (int i = 0; i + 1 < dim_; ++i) {
        key += static_cast<std::size_t>(prefix[i] + radius_) * stride;
        stride *= static_cast<std::size_t>(side_);
      }
      row_of_prefix_[key] = static_cast<std::int32_t>(rows_.size());
      rows_.push_back(Row{prefix, budget, size_});
      size_ += static_cast<std::size_t>(budget) + 1;
      return;
    }
    for (int c = -budget; c <= budget; ++c) {
      prefix[axis] = c;
      build_rows(axis + 1, budget - std::abs(c), prefix);
    }
    prefix[axis] = 0;
  }

  int dim_ = 1;
  int radius_ = 0;
  Site center_{};
  int side_ = 1;
  std::size_t size_ = 0;
  std::vector<Row> rows_;
  std::vector<std::int32_t> row_of_prefix_;
};

/// out(y) = sum over the 2d neighbours y +- e_i of in(.), absent neighbours
/// counting as 0. Both slices must share a centre and have radii of
/// opposite parity (adjacent times of a cone).
inline void neighbor_sum(const BallSlice& from, std::span<const double> in, const BallSlice& to,
                         std::span<double> out) {
  if (((from.radius() - to.radius()) & 1) == 0) {
    throw std::invalid_argument("neighbor_sum needs slices of opposite parity");
  }
  const int d = to.dim();
  const auto from_rows = from.rows();
  std::fill(out.begin(), out.end(), 0.0);

  // Adds in[row_from.start + k + shift] to out[row_to.start + k] for every valid k.
  auto add_shifted = [&](const BallSlice::Row& target, const BallSlice::Row& source, int twice_shift) {
    const int shift = twice_shift / 2;
    const int k_lo = std::max(0, -shift);
    const int k_hi = std::min(target.half_width, source.half_width - shift);
    double* dst = out.data() + target.start;
    const double* src = in.data() + source.start + shift;
    for (int k = k_lo; k <= k_hi; ++k) dst[k] += src[k];
  };

  for (const auto& row : to.rows()) {
    const int s = row.half_width;
    const std::ptrdiff_t same = from.row_index(row.prefix);
    if (same >= 0) {
      const auto& src = from_rows[static_cast<std::size_t>(same)];
      // last coordinate z +- 1: source index (z +- 1 + s')/2 = k + (s' - s +- 1)/2
      add_shifted(row, src, src.half_width - s + 1);
      add_shifted(row, src, src.half_width - s - 1);
    }
    for (int axis = 0; axis + 1 < d; ++axis) {
      for (int sign : {1, -1}) {
        Site q = row.prefix;
        q[axis] += sign;
        const std::ptrdiff_t r = from.row_index(q);
        if (r < 0) continue;
        const auto& src = from_rows[static_cast<std::size_t>(r)];
        add_shifted(row, src, src.half_width - s);
      }
    }
  }
}

/// Space-time window {(t, x): t_min <= t <= t_max, |x - a|_1 <= |t - t_a|,
/// parity-consistent} around an anchor (t_a, a), densely indexed by
/// (t ascending, lexicographic site). The anchor time may lie outside the
/// window, which yields a truncated cone.
class LatticeCone {
 public:
  LatticeCone() = default;

  static LatticeCone build(int dim, int t_min, int t_max, const SpaceTimePoint& anchor) {
    check_dimension(dim);
    if (t_min > t_max) throw std::invalid_argument("cone needs t_min <= t_max");
    std::uint64_t total = 0;
    for (int t = t_min; t <= t_max; ++t) {
      total += ball_count(dim, std::abs(t - anchor.time));
      if (total > kMaxSites) {
        throw CapacityError("cone over t in [" + std::to_string(t_min) + ", " + std::to_string(t_max) +
                            "] in dimension " + std::to_string(dim) + " exceeds " +
                            std::to_string(kMaxSites) + " sites");
      }
    }
    LatticeCone cone;
    cone.dim_ = dim;
    cone.t_min_ = t_min;
    cone.t_max_ = t_max;
    cone.anchor_ = anchor;
    std::size_t offset = 0;
    for (int t = t_min; t <= t_max; ++t) {
      cone.offsets_.push_back(offset);
      cone.slices_.emplace_back(dim, std::abs(t - anchor.time), anchor.site);
      offset += cone.slices_.back().size();
    }
    cone.site_count_ = offset;
    return cone;
  }

  int dim() const { return dim_; }
  int t_min() const { return t_min_; }
  int t_max() const { return t_max_; }
  const SpaceTimePoint& anchor() const { return anchor_; }
  std::size_t site_count() const { return site_count_; }
  bool covers_time(int t) const { return t >= t_min_ && t <= t_max_; }

  const BallSlice& slice(int t) const { return slices_.at(static_cast<std::size_t>(t - t_min_)); }
  std::size_t slice_offset(int t) const { return offsets_.at(static_cast<std::size_t>(t - t_min_)); }
  int radius(int t) const { return std::abs(t - anchor_.time); }

  /// Dense index of (t, x), or -1 outside the window.
  std::ptrdiff_t index(int t, const Site& x) const {
    if (!covers_time(t)) return -1;
    const std::size_t k = static_cast<std::size_t>(t - t_min_);
    const std::ptrdiff_t i = slices_[k].index(x);
    return i < 0 ? -1 : static_cast<std::ptrdiff_t>(offsets_[k]) + i;
  }

  bool contains(int t, const Site& x) const { return index(t, x) >= 0; }

  SpaceTimePoint point(std::size_t global) const {
    auto it = std::upper_bound(offsets_.begin(), offsets_.end(), global);
    const std::size_t k = static_cast<std::size_t>(it - offsets_.begin()) - 1;
    return {t_min_ + static_cast<int>(k), slices_[k].site(global - offsets_[k])};
  }

  friend bool operator==(const LatticeCone& a, const LatticeCone& b) {
    return a.dim_ == b.dim_ && a.t_min_ == b.t_min_ && a.t_max_ == b.t_max_ &&
           a.anchor_.time == b.anchor_.time && a.anchor_.site == b.anchor_.site;
  }

 private:
  int dim_ = 1;
  int t_min_ = 0;
  int t_max_ = 0;
  SpaceTimePoint anchor_{};
  std::size_t site_count_ = 0;
  std::vector<BallSlice> slices_;
  std::vector<std::size_t> offsets_;
};

inline LatticeCone build_cone(int dim, int t_min, int t_max, const SpaceTimePoint& anchor) {
  return LatticeCone::build(dim, t_min, t_max, anchor);
}

/// Law of the simple random walk after `time` steps from the origin.
struct WalkDistribution {
  int dim = 1;
  int time = 0;
  BallSlice support;
  std::vector<double> masses;

  double mass(const Site& x) const {
    const std::ptrdiff_t i = support.index(x);
    return i < 0 ? 0.0 : masses[static_cast<std::size_t>(i)];
  }
};

/// Exact n-step law by iterated convolution with the uniform nearest-neighbour kernel.
inline WalkDistribution n_step_distribution(int dim, int steps) {
  check_dimension(dim);
  if (steps < 0) throw std::invalid_argument("step count must be nonnegative");
  const double branching = 2.0 * dim;
  BallSlice current(dim, 0, Site{});
  std::vector<double> mass{1.0};
  for (int t = 1; t <= steps; ++t) {
    BallSlice next(dim, t, Site{});
    std::vector<double> next_mass(next.size());
    neighbor_sum(current, mass, next, next_mass);
    for (double& m : next_mass) m = m / branching;
    current = std::move(next);
    mass = std::move(next_mass);
  }
  return WalkDistribution{dim, steps, std::move(current), std::move(mass)};
}

/// p_n(0, 0) for n = 0..max_steps, by splitting the steps between the first
/// coordinate and the remaining d-1 (binomially), recursively in d.
inline std::vector<double> return_probabilities(int dim, int max_steps) {
  check_dimension(dim);
  const std::size_t n_max = static_cast<std::size_t>(max_steps);
  std::vector<double> one(n_max + 1, 0.0);
  one[0] = 1.0;
  for (std::size_t n = 2; n <= n_max; n += 2) {
    one[n] = one[n - 2] * static_cast<double>(n - 1) / static_cast<double>(n);
  }
  std::vector<double> log_factorial(n_max + 1, 0.0);
  for (std::size_t n = 1; n <= n_max; ++n) log_factorial[n] = std::lgamma(static_cast<double>(n) + 1.0);

  std::vector<double> current = one;
  for (int k = 2; k <= dim; ++k) {
    const double log_q = std::log(1.0 / k);
    const double log_rest = std::log(1.0 - 1.0 / k);
    std::vector<double> next(n_max + 1, 0.0);
    std::vector<double> terms;
    for (std::size_t n = 0; n <= n_max; n += 2) {
      terms.clear();
      for (std::size_t m = 0; m <= n; m += 2) {
        const double log_binom = log_factorial[n] - log_factorial[m] - log_factorial[n - m] +
                                 static_cast<double>(m) * log_q + static_cast<double>(n - m) * log_rest;
        terms.push_back(std::exp(log_binom) * one[m] * current[n - m]);
      }
      next[n] = pairwise_sum(terms);
    }
    current = std::move(next);
  }
  return current;
}

/// Green-function estimate of the collision probability of two independent walks.
struct CollisionEstimate {
  int dim = 0;
  int t_max = 0;
  std::vector<double> u;        // u_t = sum_x p_t(x)^2, t = 0..t_max
  double partial_green = 0.0;   // sum_{t <= t_max} u_t
  double tail_bound = 0.0;      // fitted sum_{t > t_max} u_t
  double tail_upper = 0.0;      // conservative tail (2 x fitted)
  double pi_d = 1.0;
  double pi_lower = 1.0;        // tail taken as 0
  double pi_upper = 1.0;        // tail taken as tail_upper
  double decade_ratio = 0.0;    // increment over the last decade / previous decade
  bool recurrent = false;

  double interval_width() const { return pi_upper - pi_lower; }
};

/// u_t through the identity sum_x p_t(x)^2 = p_{2t}(0,0); the series is
/// summed up to t_max and the tail fitted to c t^{-d/2}. Divergence is
/// detected when the last decade still adds more than 1% of the total and
/// decade increments fail to shrink.
inline CollisionEstimate collision_green_function(int dim, int t_max) {
  check_dimension(dim);
  if (t_max < 1) throw std::invalid_argument("t_max must be at least 1");
  const int last_lo = t_max / 10;   // last decade: (t_max/10, t_max]
  const int prev_lo = t_max / 100;  // previous decade: (t_max/100, t_max/10]
  if (t_max - last_lo < 8 || last_lo - prev_lo < 1) {
    throw DiagnosticError("t_max = " + std::to_string(t_max) +
                          " leaves fewer than 8 usable points for the tail fit");
  }

  CollisionEstimate est;
  est.dim = dim;
  est.t_max = t_max;
  const auto returns = return_probabilities(dim, 2 * t_max);
  est.u.resize(static_cast<std::size_t>(t_max) + 1);
  for (int t = 0; t <= t_max; ++t) est.u[t] = returns[2 * static_cast<std::size_t>(t)];

  const std::span<const double> u(est.u);
  est.partial_green = pairwise_sum(u);
  const double last = pairwise_sum(u.subspan(last_lo + 1, t_max - last_lo));
  const double prev = pairwise_sum(u.subspan(prev_lo + 1, last_lo - prev_lo));
  est.decade_ratio = last / prev;
  const double exponent = 0.5 * dim;
  constexpr double kShrinkThreshold = 0.5623413251903491;  // 10^{-1/4}
  est.recurrent = exponent <= 1.0 ||
                  (last > 0.01 * est.partial_green && est.decade_ratio > kShrinkThreshold);
  if (est.recurrent) {
    est.tail_bound = est.tail_upper = INFINITY;
    est.pi_d = est.pi_lower = est.pi_upper = 1.0;
    return est;
  }

  // least squares of u_t ~ c t^{-a} on the last decade
  double num = 0.0;
  double den = 0.0;
  for (int t = last_lo + 1; t <= t_max; ++t) {
    const double basis = std::pow(static_cast<double>(t), -exponent);
    num += u[t] * basis;
    den += basis * basis;
  }
  const double c = num / den;
  est.tail_bound = c * std::pow(t_max + 0.5, 1.0 - exponent) / (exponent - 1.0);
  est.tail_upper = 2.0 * est.tail_bound;
  est.pi_d = 1.0 - 1.0 / (est.partial_green + est.tail_bound);
  est.pi_lower = 1.0 - 1.0 / est.partial_green;
  est.pi_upper = 1.0 - 1.0 / (est.partial_green + est.tail_upper);
  return est;
}

/// Empirical law of L_N = #{1 <= t <= N : w_t = w'_t} for two independent walks.
struct CollisionHistogram {
  int dim = 0;
  int steps = 0;
  std::uint64_t samples = 0;
  std::vector<std::uint64_t> counts;  // counts[k] = #pairs with L_N = k

  double mean() const {
    double s = 0.0;
    for (std::size_t k = 0; k < counts.size(); ++k) s += static_cast<double>(k) * static_cast<double>(counts[k]);
    return samples == 0 ? 0.0 : s / static_cast<double>(samples);
  }
};

/// Overlap of one walk pair; pair i uses the streams keyed by (seed, i).
inline int collision_count(int dim, int steps, std::uint64_t seed, std::uint64_t pair) {
  const std::uint64_t key = mix_key(mix_key(mix_key(0x4f564c50ULL, seed), pair), 0);
  const CounterStream first(mix_key(key, 1));
  const CounterStream second(mix_key(key, 2));
  const auto branching = static_cast<std::uint32_t>(2 * dim);
  Site gap{};
  int overlap = 0;
  for (int t = 1; t <= steps; ++t) {
    const int a = static_cast<int>(to_range(first.draw(static_cast<std::uint64_t>(t)), branching));
    const int b = static_cast<int>(to_range(second.draw(static_cast<std::uint64_t>(t)), branching));
    gap[a / 2] += (a % 2 == 0) ? 1 : -1;
    gap[b / 2] -= (b % 2 == 0) ? 1 : -1;
    bool zero = true;
    for (int i = 0; i < dim; ++i) zero = zero && gap[i] == 0;
    overlap += zero ? 1 : 0;
  }
  return overlap;
}

inline CollisionHistogram sample_collision_count(int dim, int steps, std::uint64_t seed, std::uint64_t samples) {
  check_dimension(dim);
  if (steps < 0) throw std::invalid_argument("step count must be nonnegative");
  CollisionHistogram h;
  h.dim = dim;
  h.steps = steps;
  h.samples = samples;
  h.counts.assign(1, 0);
  for (std::uint64_t i = 0; i < samples; ++i) {
    const auto k = static_cast<std::size_t>(collision_count(dim, steps, seed, i));
    if (k >= h.counts.size()) h.counts.resize(k + 1, 0);
    ++h.counts[k];
  }
  return h;
}

/// Calls f(path) for each of the (2d)^n nearest-neighbour paths of length n
/// starting at `start`; path[t] is the position at step t.
template <class F>
void for_each_path(int dim, int steps, const Site& start, F&& f) {
  check_dimension(dim);
  const int branching = 2 * dim;
  std::vector<int> dirs(static_cast<std::size_t>(steps), 0);
  std::vector<Site> path(static_cast<std::size_t>(steps) + 1, start);
  auto rebuild_from = [&](int t0) {
    for (int t = t0; t < steps; ++t) path[t + 1] = path[t] + unit_step(dirs[t]);
  };
  rebuild_from(0);
  while (true) {
    f(std::span<const Site>(path));
    int pos = steps - 1;
    while (pos >= 0 && dirs[pos] == branching - 1) dirs[pos--] = 0;
    if (pos < 0) return;
    ++dirs[pos];
    rebuild_from(pos);
  }
}

}  // namespace polymerlab
