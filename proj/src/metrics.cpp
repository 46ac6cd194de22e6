#include "tdpmix/metrics.hpp"

#include <cmath>
#include <map>

namespace tdpmix {

double rand_index(std::span<const int> pred, std::span<const int> truth) {
  if (pred.size() != truth.size()) {
    throw DimensionError("rand_index: " + std::to_string(pred.size()) + " predictions for " +
                         std::to_string(truth.size()) + " labels");
  }
  const std::size_t n = pred.size();
  if (n < 2) throw DomainError("rand_index needs at least two items");
  std::size_t agree = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if ((pred[i] == pred[j]) == (truth[i] == truth[j])) ++agree;
    }
  }
  const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  return static_cast<double>(agree) / pairs;
}

AlignmentScore alignment_score(std::span<const Vector> aligned, std::span<const int> z) {
  if (aligned.size() != z.size()) throw DimensionError("alignment_score: length mismatch");
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < z.size(); ++i) members[z[i]].push_back(i);

  std::vector<double> dist;
  for (const auto& [label, idx] : members) {
    for (std::size_t a = 0; a < idx.size(); ++a) {
      const Vector& u = aligned[idx[a]];
      for (std::size_t b = a + 1; b < idx.size(); ++b) {
        const Vector& v = aligned[idx[b]];
        if (u.size() != v.size()) throw DimensionError("alignment_score: ragged items");
        double ss = 0.0;
        for (std::size_t d = 0; d < u.size(); ++d) ss += (u[d] - v[d]) * (u[d] - v[d]);
        dist.push_back(std::sqrt(ss));
      }
    }
  }
  if (dist.empty()) throw DomainError("alignment_score: no cluster has two members");

  AlignmentScore s;
  s.pairs = dist.size();
  const double n = static_cast<double>(s.pairs);
  for (double d : dist) s.mean += d;
  s.mean /= n;
  double var = 0.0;
  for (double d : dist) var += (d - s.mean) * (d - s.mean);
  s.std = std::sqrt(var / n);
  s.std_error = s.std / std::sqrt(n);
  return s;
}

double mean_pixel_entropy(std::span<const Vector> images) {
  if (images.empty()) throw DomainError("mean_pixel_entropy: no images");
  const std::size_t dim = images.front().size();
  if (dim == 0) throw DomainError("mean_pixel_entropy: empty images");
  Vector mean(dim, 0.0);
  for (const Vector& img : images) {
    if (img.size() != dim) throw DimensionError("mean_pixel_entropy: ragged images");
    for (std::size_t d = 0; d < dim; ++d) {
      const double v = img[d];
      if (!(v >= 0.0 && v <= 1.0)) throw DomainError("mean_pixel_entropy: value outside [0,1]");
      mean[d] += v;
    }
  }
  double total = 0.0;
  for (double m : mean) {
    const double p = m / static_cast<double>(images.size());
    if (p > 0.0) total -= p * std::log2(p);
    if (p < 1.0) total -= (1.0 - p) * std::log2(1.0 - p);
  }
  return total / static_cast<double>(dim);
}

double stddev_score(std::span<const Vector> curves) {
  if (curves.size() < 2) throw DomainError("stddev_score needs at least two curves");
  const std::size_t len = curves.front().size();
  for (const Vector& c : curves) {
    if (c.size() != len) throw DimensionError("stddev_score: curves differ in length");
  }
  const double n = static_cast<double>(curves.size());
  double score = 0.0;
  for (std::size_t t = 0; t < len; ++t) {
    double mean = 0.0;
    for (const Vector& c : curves) mean += c[t];
    mean /= n;
    double var = 0.0;
    for (const Vector& c : curves) var += (c[t] - mean) * (c[t] - mean);
    score += std::sqrt(var / n);
  }
  return score;
}

}  // namespace tdpmix
