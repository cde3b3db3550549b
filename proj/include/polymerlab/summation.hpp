#pragma once

#include <cstddef>
#include <span>

namespace polymerlab {

/// Pairwise (cascade) summation in a fixed order. The result depends only on
/// the input sequence, never on how the caller partitioned the work.
inline double pairwise_sum(std::span<const double> values) {
  constexpr std::size_t kBlock = 16;
  if (values.size() <= kBlock) {
    double acc = 0.0;
    for (double v : values) acc += v;
    return acc;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

}  // namespace polymerlab
