#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tdpmix {

using Vector = std::vector<double>;
using Rng = std::mt19937_64;

// Error hierarchy. Each subsystem throws the most specific type so the CLI
// can map failures onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class TransformError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class DataKind { points2d, curves, images };

std::string to_string(DataKind kind);
DataKind data_kind_from_string(const std::string& name);

// One observation: a flat real vector plus the shape needed to interpret it.
// Points use width=2, height=1; curves use width=length, height=1; images are
// stored row-major with values in [0,1].
struct DataItem {
  DataKind kind = DataKind::curves;
  int width = 0;
  int height = 1;
  Vector values;

  std::size_t size() const { return values.size(); }
  friend bool operator==(const DataItem&, const DataItem&) = default;
};

DataItem make_point(double x, double y);
DataItem make_curve(Vector values);
DataItem make_image(int width, int height, Vector values);

// Numerically stable log(sum(exp(v))); returns -inf for an empty or all -inf input.
double log_sum_exp(std::span<const double> v);

// Draws an index with probability proportional to exp(log_weights[k]).
std::size_t sample_log_categorical(std::span<const double> log_weights, Rng& rng);

double sample_gamma(double shape, double rate, Rng& rng);
double sample_beta(double a, double b, Rng& rng);
double sample_normal(double mean, double sd, Rng& rng);
double sample_uniform(Rng& rng);

// splitmix64 finalizer; used to derive independent per-item streams.
std::uint64_t mix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng);

}  // namespace tdpmix
