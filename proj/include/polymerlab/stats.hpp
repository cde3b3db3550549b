#pragma once

// Sample statistics used by the verification suites. All reductions go
// through pairwise_sum over index-ordered data, so results do not depend on
// how the samples were produced.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "summation.hpp"

namespace polymerlab {

struct SampleSummary {
  std::size_t n = 0;
  double mean = 0.0;
  double variance = 0.0;  // unbiased
  double std_error = 0.0;
};

inline SampleSummary summarize(std::span<const double> xs) {
  SampleSummary s;
  s.n = xs.size();
  if (s.n == 0) throw std::invalid_argument("empty sample");
  s.mean = pairwise_sum(xs) / static_cast<double>(s.n);
  if (s.n < 2) return s;
  std::vector<double> sq(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) sq[i] = (xs[i] - s.mean) * (xs[i] - s.mean);
  s.variance = pairwise_sum(sq) / static_cast<double>(s.n - 1);
  s.std_error = std::sqrt(s.variance / static_cast<double>(s.n));
  return s;
}

template <class F>
SampleSummary summarize_map(std::span<const double> xs, F&& f) {
  std::vector<double> ys(xs.size());
  std::transform(xs.begin(), xs.end(), ys.begin(), f);
  return summarize(ys);
}

/// Pearson correlation of paired samples.
inline double correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("correlation needs two equal samples");
  const auto sx = summarize(x);
  const auto sy = summarize(y);
  std::vector<double> cross(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) cross[i] = (x[i] - sx.mean) * (y[i] - sy.mean);
  const double cov = pairwise_sum(cross) / static_cast<double>(x.size() - 1);
  return cov / std::sqrt(sx.variance * sy.variance);
}

/// Standard error of an empirical frequency.
inline double binomial_se(double p, std::size_t n) { return std::sqrt(std::max(p * (1.0 - p), 0.0) / static_cast<double>(n)); }

struct ChiSquareResult {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 0.0;
  int bins = 0;
};

/// Pearson goodness of fit of integer counts against fully specified cell
/// probabilities. Cells are merged from the right until every expected count
/// reaches min_expected; the last cell absorbs the remaining probability mass.
inline ChiSquareResult chi_square_gof(std::span<const std::uint64_t> counts, std::span<const double> probs,
                                      double min_expected = 5.0) {
  if (counts.empty() || probs.size() != counts.size()) throw std::invalid_argument("counts and probabilities differ");
  double total = 0.0;
  for (auto c : counts) total += static_cast<double>(c);
  if (total <= 0.0) throw std::invalid_argument("no observations");

  std::vector<double> obs;
  std::vector<double> expect;
  double prob_used = 0.0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    obs.push_back(static_cast<double>(counts[k]));
    expect.push_back(probs[k] * total);
    prob_used += probs[k];
  }
  expect.back() += std::max(0.0, 1.0 - prob_used) * total;
  while (expect.size() > 1 && expect.back() < min_expected) {
    const double o = obs.back();
    const double e = expect.back();
    obs.pop_back();
    expect.pop_back();
    obs.back() += o;
    expect.back() += e;
  }

  ChiSquareResult r;
  r.bins = static_cast<int>(obs.size());
  r.dof = r.bins - 1;
  for (std::size_t k = 0; k < obs.size(); ++k) {
    if (expect[k] <= 0.0) {
      if (obs[k] > 0.0) r.statistic = std::numeric_limits<double>::infinity();
      continue;
    }
    r.statistic += (obs[k] - expect[k]) * (obs[k] - expect[k]) / expect[k];
  }
  if (r.dof < 1) {
    r.p_value = 1.0;
  } else if (!std::isfinite(r.statistic)) {
    r.p_value = 0.0;
  } else {
    r.p_value = boost::math::gamma_q(0.5 * r.dof, 0.5 * r.statistic);
  }
  return r;
}

/// Least-squares fit of y = a - b u^2.
struct QuadraticTailFit {
  double a = 0.0;
  double b = 0.0;
  double max_abs_residual = 0.0;
  int points = 0;
};

inline QuadraticTailFit fit_quadratic_tail(std::span<const double> u, std::span<const double> y) {
  if (u.size() != y.size() || u.size() < 2) throw std::invalid_argument("fit needs at least two points");
  const double n = static_cast<double>(u.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double x = u[i] * u[i];
    sx += x;
    sy += y[i];
    sxx += x * x;
    sxy += x * y[i];
  }
  const double det = n * sxx - sx * sx;
  if (!(std::fabs(det) > 0.0)) throw std::invalid_argument("fit needs two distinct u values");
  const double slope = (n * sxy - sx * sy) / det;
  QuadraticTailFit f;
  f.b = -slope;
  f.a = (sy - slope * sx) / n;
  f.points = static_cast<int>(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    f.max_abs_residual = std::max(f.max_abs_residual, std::fabs(y[i] - (f.a - f.b * u[i] * u[i])));
  }
  return f;
}

}  // namespace polymerlab
