#pragma once

// Conjugate exponential-family components backed by sufficient statistics.
//
// Three families are provided:
//   * BernoulliStats      - product of per-pixel Bernoullis with a shared Beta(a,b)
//                           prior. Pixel values in [0,1] act as fractional counts.
//   * DiagGaussianStats   - diagonal Gaussian with an independent
//                           Normal-Inverse-Gamma prior per dimension.
//   * TransformPriorStats - zero-mean diagonal Gaussian with an Inverse-Gamma
//                           prior on each variance (transformation parameters).
//
// Every family supports signed updates, the leave-one-out posterior predictive
// density, the closed-form log marginal likelihood and the posterior mode. The
// predictive caches are refreshed eagerly on every update so that const reads
// are safe to run concurrently.

#include <cstdint>
#include <span>
#include <variant>

#include "tdpmix/common.hpp"

namespace tdpmix {

struct BernoulliPrior {
  double a = 1.0;
  double b = 1.0;

  friend bool operator==(const BernoulliPrior&, const BernoulliPrior&) = default;
};

struct GaussianPrior {
  double mu0 = 0.0;
  double kappa0 = 0.01;
  double a0 = 1.0;
  double b0 = 0.1;

  friend bool operator==(const GaussianPrior&, const GaussianPrior&) = default;
};

// Clamp applied to Bernoulli modes that leave (0,1).
inline constexpr double kBernoulliModeEps = 1e-6;

// Point estimate of a Bernoulli product; evaluates log p(x | theta) for soft x.
struct BernoulliMode {
  Vector prob;
  Vector log_ratio;  // log(p) - log(1-p)
  double log_base = 0.0;  // sum log(1-p)

  explicit BernoulliMode(Vector p);
  double log_density(std::span<const double> x) const;
};

struct GaussianMode {
  Vector mean;
  Vector var;
  double log_norm = 0.0;  // -0.5 * sum log(2 pi var)

  GaussianMode(Vector m, Vector v);
  double log_density(std::span<const double> x) const;
};

struct ZeroMeanGaussianMode {
  Vector var;
  double log_norm = 0.0;

  explicit ZeroMeanGaussianMode(Vector v);
  double log_density(std::span<const double> x) const;
};

class BernoulliStats {
 public:
  BernoulliStats(std::size_t dim, BernoulliPrior prior);

  std::size_t dim() const { return ones_.size(); }
  std::int64_t count() const { return count_; }
  const Vector& ones() const { return ones_; }
  const BernoulliPrior& prior() const { return prior_; }

  void update(std::span<const double> item, int sign);
  double log_predictive(std::span<const double> item) const;
  double log_marginal() const;
  BernoulliMode mode() const;

  // Rebuilds from raw fields (checkpoint restore).
  static BernoulliStats from_fields(BernoulliPrior prior, std::int64_t count, Vector ones);
  bool same_fields(const BernoulliStats& other) const;

 private:
  void refresh();

  BernoulliPrior prior_;
  std::int64_t count_ = 0;
  Vector ones_;
  Vector log_ratio_;
  double log_base_ = 0.0;
};

class DiagGaussianStats {
 public:
  DiagGaussianStats(std::size_t dim, GaussianPrior prior);
  DiagGaussianStats(Vector mu0, double kappa0, double a0, double b0);

  std::size_t dim() const { return sum_.size(); }
  std::int64_t count() const { return count_; }
  const Vector& sum() const { return sum_; }
  const Vector& sumsq() const { return sumsq_; }
  const Vector& mu0() const { return mu0_; }
  double kappa0() const { return kappa0_; }
  double a0() const { return a0_; }
  double b0() const { return b0_; }

  void update(std::span<const double> item, int sign);
  double log_predictive(std::span<const double> item) const;
  double log_marginal() const;
  GaussianMode mode() const;

  // Per-dimension posterior (kappa_n, mu_n, a_n, b_n).
  struct Posterior {
    double kappa;
    double mu;
    double a;
    double b;
  };
  Posterior posterior(std::size_t d) const;

  static DiagGaussianStats from_fields(Vector mu0, double kappa0, double a0, double b0,
                                       std::int64_t count, Vector sum, Vector sumsq);
  bool same_fields(const DiagGaussianStats& other) const;

 private:
  void refresh();

  Vector mu0_;
  double kappa0_;
  double a0_;
  double b0_;
  std::int64_t count_ = 0;
  Vector sum_;
  Vector sumsq_;
  // Student-t predictive caches.
  Vector loc_;
  Vector inv_nu_scale2_;
  double log_const_ = 0.0;
  double half_nu_plus_one_ = 0.0;
};

class TransformPriorStats {
 public:
  TransformPriorStats(Vector prior_a, Vector prior_b);

  std::size_t dim() const { return sumsq_.size(); }
  std::int64_t count() const { return count_; }
  const Vector& sumsq() const { return sumsq_; }
  const Vector& prior_a() const { return prior_a_; }
  const Vector& prior_b() const { return prior_b_; }

  void update(std::span<const double> rho, int sign);
  double log_predictive(std::span<const double> rho) const;
  double log_marginal() const;
  // Posterior mode of each variance.
  ZeroMeanGaussianMode mode() const;

  static TransformPriorStats from_fields(Vector prior_a, Vector prior_b, std::int64_t count,
                                         Vector sumsq);
  bool same_fields(const TransformPriorStats& other) const;

 private:
  void refresh();

  Vector prior_a_;
  Vector prior_b_;
  std::int64_t count_ = 0;
  Vector sumsq_;
  Vector inv_nu_scale2_;
  Vector half_nu_plus_one_;
  double log_const_ = 0.0;
};

using DataMode = std::variant<BernoulliMode, GaussianMode>;

double log_density(const DataMode& mode, std::span<const double> x);

// Data-side component: one of the two data families.
class DataStats {
 public:
  using Impl = std::variant<BernoulliStats, DiagGaussianStats>;

  DataStats(BernoulliStats s) : impl_(std::move(s)) {}
  DataStats(DiagGaussianStats s) : impl_(std::move(s)) {}

  std::size_t dim() const;
  std::int64_t count() const;
  void update(std::span<const double> item, int sign);
  double log_predictive(std::span<const double> item) const;
  double log_marginal() const;
  DataMode mode() const;
  // An empty copy with the same prior.
  DataStats empty_like() const;
  bool same_fields(const DataStats& other) const;
  // Largest relative deviation of the moment fields, for integrity checks.
  double max_relative_difference(const DataStats& other) const;

  const Impl& impl() const { return impl_; }

 private:
  Impl impl_;
};

// Sufficient statistics of one mixture component: data side and transform side.
struct ComponentStats {
  DataStats data;
  TransformPriorStats transform;

  ComponentStats empty_like() const;
};

double max_relative_difference(const TransformPriorStats& a, const TransformPriorStats& b);

// Student-t log density with nu degrees of freedom, location loc and scale s.
double student_t_logpdf(double x, double nu, double loc, double scale);

}  // namespace tdpmix
