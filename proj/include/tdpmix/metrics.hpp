#pragma once

#include <span>
#include <vector>

#include "tdpmix/common.hpp"

namespace tdpmix {

// Fraction of item pairs on which two partitions agree.
double rand_index(std::span<const int> pred, std::span<const int> truth);

struct AlignmentScore {
  double mean = 0.0;
  double std = 0.0;  // population std of the pair distances
  double std_error = 0.0;  // std / sqrt(pairs)
  std::size_t pairs = 0;
};

// Euclidean distances over all within-cluster pairs of aligned vectors.
AlignmentScore alignment_score(std::span<const Vector> aligned, std::span<const int> z);

// Mean over pixels of the binary entropy (bits) of the per-pixel mean value.
double mean_pixel_entropy(std::span<const Vector> images);

// Sum over time steps of the population std across curves.
double stddev_score(std::span<const Vector> curves);

}  // namespace tdpmix
