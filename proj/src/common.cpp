#include "tdpmix/common.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace tdpmix {

std::string to_string(DataKind kind) {
  switch (kind) {
    case DataKind::points2d:
      return "points2d";
    case DataKind::curves:
      return "curves";
    case DataKind::images:
      return "images";
  }
  return "unknown";
}

DataKind data_kind_from_string(const std::string& name) {
  if (name == "points2d" || name == "points") return DataKind::points2d;
  if (name == "curves") return DataKind::curves;
  if (name == "images") return DataKind::images;
  throw ConfigError("unknown data kind '" + name + "'");
}

DataItem make_point(double x, double y) {
  return DataItem{DataKind::points2d, 2, 1, {x, y}};
}

DataItem make_curve(Vector values) {
  const int n = static_cast<int>(values.size());
  return DataItem{DataKind::curves, n, 1, std::move(values)};
}

DataItem make_image(int width, int height, Vector values) {
  if (width <= 0 || height <= 0 ||
      values.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw DimensionError("image buffer does not match " + std::to_string(width) + "x" +
                         std::to_string(height));
  }
  return DataItem{DataKind::images, width, height, std::move(values)};
}

double log_sum_exp(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

std::size_t sample_log_categorical(std::span<const double> log_weights, Rng& rng) {
  if (log_weights.empty()) throw DomainError("categorical draw over an empty set");
  const double norm = log_sum_exp(log_weights);
  if (!std::isfinite(norm)) throw DomainError("categorical draw with no finite weight");
  double u = sample_uniform(rng);
  std::size_t last_positive = 0;
  for (std::size_t k = 0; k < log_weights.size(); ++k) {
    const double p = std::exp(log_weights[k] - norm);
    if (p > 0.0) last_positive = k;
    if (u < p) return k;
    u -= p;
  }
  return last_positive;
}

double sample_gamma(double shape, double rate, Rng& rng) {
  std::gamma_distribution<double> dist(shape, 1.0 / rate);
  return dist(rng);
}

double sample_beta(double a, double b, Rng& rng) {
  const double x = sample_gamma(a, 1.0, rng);
  const double y = sample_gamma(b, 1.0, rng);
  return x / (x + y);
}

double sample_normal(double mean, double sd, Rng& rng) {
  std::normal_distribution<double> dist(mean, sd);
  return dist(rng);
}

double sample_uniform(Rng& rng) {
  // 53 random bits mapped onto [0,1).
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  return mix64(mix64(base) ^ (index * 0xd1b54a32d192ed03ULL));
}

std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Explicit Fisher-Yates keeps the stream consumption independent of the
  // standard library's shuffle implementation.
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

}  // namespace tdpmix
