#include "tdpmix/expfam.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace tdpmix {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void check_dim(std::size_t expected, std::size_t got, const char* what) {
  if (expected != got) {
    throw DimensionError(std::string(what) + ": expected dimension " + std::to_string(expected) +
                         ", got " + std::to_string(got));
  }
}

void check_sign(int sign) {
  if (sign != 1 && sign != -1) throw DomainError("update sign must be +1 or -1");
}

void check_finite_result(double value, std::span<const double> item) {
  if (std::isfinite(value)) return;
  for (double x : item) {
    if (!std::isfinite(x)) throw DomainError("non-finite input to predictive density");
  }
}

double lbeta(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

double rel_diff(double x, double y) {
  const double scale = std::max({1.0, std::abs(x), std::abs(y)});
  return std::abs(x - y) / scale;
}

double rel_diff(const Vector& x, const Vector& y) {
  if (x.size() != y.size()) return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, rel_diff(x[i], y[i]));
  return worst;
}

}  // namespace

double student_t_logpdf(double x, double nu, double loc, double scale) {
  const double z = (x - loc) / scale;
  return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
         0.5 * std::log(nu * std::numbers::pi) - std::log(scale) -
         0.5 * (nu + 1.0) * std::log1p(z * z / nu);
}

// ---------------------------------------------------------------------------
// Modes

BernoulliMode::BernoulliMode(Vector p) : prob(std::move(p)), log_ratio(prob.size()) {
  for (std::size_t d = 0; d < prob.size(); ++d) {
    const double l1 = std::log(prob[d]);
    const double l0 = std::log1p(-prob[d]);
    log_ratio[d] = l1 - l0;
    log_base += l0;
  }
}

double BernoulliMode::log_density(std::span<const double> x) const {
  check_dim(prob.size(), x.size(), "BernoulliMode::log_density");
  double s = log_base;
  for (std::size_t d = 0; d < x.size(); ++d) s += x[d] * log_ratio[d];
  return s;
}

GaussianMode::GaussianMode(Vector m, Vector v) : mean(std::move(m)), var(std::move(v)) {
  for (double s2 : var) log_norm -= 0.5 * (kLog2Pi + std::log(s2));
}

double GaussianMode::log_density(std::span<const double> x) const {
  check_dim(mean.size(), x.size(), "GaussianMode::log_density");
  double q = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) {
    const double r = x[d] - mean[d];
    q += r * r / var[d];
  }
  return log_norm - 0.5 * q;
}

ZeroMeanGaussianMode::ZeroMeanGaussianMode(Vector v) : var(std::move(v)) {
  for (double s2 : var) log_norm -= 0.5 * (kLog2Pi + std::log(s2));
}

double ZeroMeanGaussianMode::log_density(std::span<const double> x) const {
  check_dim(var.size(), x.size(), "ZeroMeanGaussianMode::log_density");
  double q = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) q += x[d] * x[d] / var[d];
  return log_norm - 0.5 * q;
}

double log_density(const DataMode& mode, std::span<const double> x) {
  return std::visit([&](const auto& m) { return m.log_density(x); }, mode);
}

// ---------------------------------------------------------------------------
// Beta-Bernoulli

BernoulliStats::BernoulliStats(std::size_t dim, BernoulliPrior prior)
    : prior_(prior), ones_(dim, 0.0), log_ratio_(dim, 0.0) {
  if (!(prior.a > 0.0) || !(prior.b > 0.0)) throw DomainError("Beta prior must be positive");
  refresh();
}

BernoulliStats BernoulliStats::from_fields(BernoulliPrior prior, std::int64_t count, Vector ones) {
  BernoulliStats s(ones.size(), prior);
  if (count < 0) throw DomainError("negative count");
  s.count_ = count;
  s.ones_ = std::move(ones);
  s.refresh();
  return s;
}

void BernoulliStats::update(std::span<const double> item, int sign) {
  check_dim(dim(), item.size(), "BernoulliStats::update");
  check_sign(sign);
  if (sign < 0 && count_ == 0) throw DomainError("removal from empty Bernoulli stats");
  count_ += sign;
  for (std::size_t d = 0; d < item.size(); ++d) ones_[d] += sign * item[d];
  refresh();
}

void BernoulliStats::refresh() {
  const double total = static_cast<double>(count_) + prior_.a + prior_.b;
  const double log_total = std::log(total);
  log_base_ = 0.0;
  for (std::size_t d = 0; d < ones_.size(); ++d) {
    const double l1 = std::log(ones_[d] + prior_.a) - log_total;
    const double l0 = std::log(static_cast<double>(count_) - ones_[d] + prior_.b) - log_total;
    log_ratio_[d] = l1 - l0;
    log_base_ += l0;
  }
}

double BernoulliStats::log_predictive(std::span<const double> item) const {
  check_dim(dim(), item.size(), "BernoulliStats::log_predictive");
  double s = log_base_;
  for (std::size_t d = 0; d < item.size(); ++d) s += item[d] * log_ratio_[d];
  check_finite_result(s, item);
  return s;
}

double BernoulliStats::log_marginal() const {
  const double n = static_cast<double>(count_);
  const double prior_term = lbeta(prior_.a, prior_.b);
  double s = 0.0;
  for (double k : ones_) s += lbeta(prior_.a + k, prior_.b + n - k) - prior_term;
  return s;
}

BernoulliMode BernoulliStats::mode() const {
  const double n = static_cast<double>(count_);
  const double den = n + prior_.a + prior_.b - 2.0;
  Vector p(dim());
  for (std::size_t d = 0; d < dim(); ++d) {
    double v;
    if (den > 0.0) {
      v = (ones_[d] + prior_.a - 1.0) / den;
    } else {
      // Mode undefined (flat or U-shaped posterior); fall back to the mean.
      v = (ones_[d] + prior_.a) / (n + prior_.a + prior_.b);
    }
    p[d] = std::clamp(v, kBernoulliModeEps, 1.0 - kBernoulliModeEps);
  }
  return BernoulliMode(std::move(p));
}

bool BernoulliStats::same_fields(const BernoulliStats& other) const {
  return count_ == other.count_ && ones_ == other.ones_ && prior_.a == other.prior_.a &&
         prior_.b == other.prior_.b;
}

// ---------------------------------------------------------------------------
// Normal-Inverse-Gamma diagonal Gaussian

DiagGaussianStats::DiagGaussianStats(std::size_t dim, GaussianPrior prior)
    : DiagGaussianStats(Vector(dim, prior.mu0), prior.kappa0, prior.a0, prior.b0) {}

DiagGaussianStats::DiagGaussianStats(Vector mu0, double kappa0, double a0, double b0)
    : mu0_(std::move(mu0)),
      kappa0_(kappa0),
      a0_(a0),
      b0_(b0),
      sum_(mu0_.size(), 0.0),
      sumsq_(mu0_.size(), 0.0),
      loc_(mu0_.size()),
      inv_nu_scale2_(mu0_.size()) {
  if (!(kappa0 > 0.0) || !(a0 > 0.0) || !(b0 > 0.0)) {
    throw DomainError("Normal-Inverse-Gamma prior must be positive");
  }
  refresh();
}

DiagGaussianStats DiagGaussianStats::from_fields(Vector mu0, double kappa0, double a0, double b0,
                                                 std::int64_t count, Vector sum, Vector sumsq) {
  DiagGaussianStats s(std::move(mu0), kappa0, a0, b0);
  check_dim(s.dim(), sum.size(), "DiagGaussianStats::from_fields");
  check_dim(s.dim(), sumsq.size(), "DiagGaussianStats::from_fields");
  if (count < 0) throw DomainError("negative count");
  s.count_ = count;
  s.sum_ = std::move(sum);
  s.sumsq_ = std::move(sumsq);
  s.refresh();
  return s;
}

void DiagGaussianStats::update(std::span<const double> item, int sign) {
  check_dim(dim(), item.size(), "DiagGaussianStats::update");
  check_sign(sign);
  if (sign < 0 && count_ == 0) throw DomainError("removal from empty Gaussian stats");
  count_ += sign;
  if (count_ == 0) {
    // Exact reset avoids carrying rounding residue through an empty state.
    std::fill(sum_.begin(), sum_.end(), 0.0);
    std::fill(sumsq_.begin(), sumsq_.end(), 0.0);
  } else {
    for (std::size_t d = 0; d < item.size(); ++d) {
      sum_[d] += sign * item[d];
      sumsq_[d] += sign * item[d] * item[d];
    }
  }
  refresh();
}

DiagGaussianStats::Posterior DiagGaussianStats::posterior(std::size_t d) const {
  const double n = static_cast<double>(count_);
  const double kappa = kappa0_ + n;
  const double mu = (kappa0_ * mu0_[d] + sum_[d]) / kappa;
  const double a = a0_ + 0.5 * n;
  double b = b0_;
  if (count_ > 0) {
    const double mean = sum_[d] / n;
    const double ss = std::max(0.0, sumsq_[d] - sum_[d] * mean);
    const double dev = mean - mu0_[d];
    b += 0.5 * ss + 0.5 * kappa0_ * n * dev * dev / kappa;
  }
  return {kappa, mu, a, b};
}

void DiagGaussianStats::refresh() {
  const double a = a0_ + 0.5 * static_cast<double>(count_);
  const double nu = 2.0 * a;
  half_nu_plus_one_ = 0.5 * (nu + 1.0);
  const double per_dim_const =
      std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) - 0.5 * std::log(nu * std::numbers::pi);
  log_const_ = 0.0;
  for (std::size_t d = 0; d < dim(); ++d) {
    const Posterior p = posterior(d);
    const double scale2 = p.b * (p.kappa + 1.0) / (p.a * p.kappa);
    loc_[d] = p.mu;
    inv_nu_scale2_[d] = 1.0 / (nu * scale2);
    log_const_ += per_dim_const - 0.5 * std::log(scale2);
  }
}

double DiagGaussianStats::log_predictive(std::span<const double> item) const {
  check_dim(dim(), item.size(), "DiagGaussianStats::log_predictive");
  double s = 0.0;
  for (std::size_t d = 0; d < item.size(); ++d) {
    const double r = item[d] - loc_[d];
    s += std::log1p(r * r * inv_nu_scale2_[d]);
  }
  const double value = log_const_ - half_nu_plus_one_ * s;
  check_finite_result(value, item);
  return value;
}

double DiagGaussianStats::log_marginal() const {
  const double n = static_cast<double>(count_);
  double s = 0.0;
  for (std::size_t d = 0; d < dim(); ++d) {
    const Posterior p = posterior(d);
    s += std::lgamma(p.a) - std::lgamma(a0_) + a0_ * std::log(b0_) - p.a * std::log(p.b) +
         0.5 * (std::log(kappa0_) - std::log(p.kappa)) - 0.5 * n * kLog2Pi;
  }
  return s;
}

GaussianMode DiagGaussianStats::mode() const {
  Vector mean(dim()), var(dim());
  for (std::size_t d = 0; d < dim(); ++d) {
    const Posterior p = posterior(d);
    mean[d] = p.mu;
    var[d] = p.b / (p.a + 1.5);
  }
  return GaussianMode(std::move(mean), std::move(var));
}

bool DiagGaussianStats::same_fields(const DiagGaussianStats& other) const {
  return count_ == other.count_ && sum_ == other.sum_ && sumsq_ == other.sumsq_ &&
         mu0_ == other.mu0_ && kappa0_ == other.kappa0_ && a0_ == other.a0_ && b0_ == other.b0_;
}

// ---------------------------------------------------------------------------
// Zero-mean Gaussian with Inverse-Gamma variances

TransformPriorStats::TransformPriorStats(Vector prior_a, Vector prior_b)
    : prior_a_(std::move(prior_a)),
      prior_b_(std::move(prior_b)),
      sumsq_(prior_a_.size(), 0.0),
      inv_nu_scale2_(prior_a_.size()),
      half_nu_plus_one_(prior_a_.size()) {
  check_dim(prior_a_.size(), prior_b_.size(), "TransformPriorStats");
  for (std::size_t d = 0; d < dim(); ++d) {
    if (!(prior_a_[d] > 0.0) || !(prior_b_[d] > 0.0)) {
      throw DomainError("Inverse-Gamma prior must be positive");
    }
  }
  refresh();
}

TransformPriorStats TransformPriorStats::from_fields(Vector prior_a, Vector prior_b,
                                                     std::int64_t count, Vector sumsq) {
  TransformPriorStats s(std::move(prior_a), std::move(prior_b));
  check_dim(s.dim(), sumsq.size(), "TransformPriorStats::from_fields");
  if (count < 0) throw DomainError("negative count");
  s.count_ = count;
  s.sumsq_ = std::move(sumsq);
  s.refresh();
  return s;
}

void TransformPriorStats::update(std::span<const double> rho, int sign) {
  check_dim(dim(), rho.size(), "TransformPriorStats::update");
  check_sign(sign);
  if (sign < 0 && count_ == 0) throw DomainError("removal from empty transform stats");
  count_ += sign;
  if (count_ == 0) {
    std::fill(sumsq_.begin(), sumsq_.end(), 0.0);
  } else {
    for (std::size_t d = 0; d < rho.size(); ++d) {
      sumsq_[d] = std::max(0.0, sumsq_[d] + sign * rho[d] * rho[d]);
    }
  }
  refresh();
}

void TransformPriorStats::refresh() {
  const double n = static_cast<double>(count_);
  log_const_ = 0.0;
  for (std::size_t d = 0; d < dim(); ++d) {
    const double a = prior_a_[d] + 0.5 * n;
    const double b = prior_b_[d] + 0.5 * sumsq_[d];
    const double nu = 2.0 * a;
    const double scale2 = b / a;
    inv_nu_scale2_[d] = 1.0 / (nu * scale2);
    half_nu_plus_one_[d] = 0.5 * (nu + 1.0);
    log_const_ += std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
                  0.5 * std::log(nu * std::numbers::pi) - 0.5 * std::log(scale2);
  }
}

double TransformPriorStats::log_predictive(std::span<const double> rho) const {
  check_dim(dim(), rho.size(), "TransformPriorStats::log_predictive");
  double value = log_const_;
  for (std::size_t d = 0; d < rho.size(); ++d) {
    value -= half_nu_plus_one_[d] * std::log1p(rho[d] * rho[d] * inv_nu_scale2_[d]);
  }
  check_finite_result(value, rho);
  return value;
}

double TransformPriorStats::log_marginal() const {
  const double n = static_cast<double>(count_);
  double s = 0.0;
  for (std::size_t d = 0; d < dim(); ++d) {
    const double a = prior_a_[d] + 0.5 * n;
    const double b = prior_b_[d] + 0.5 * sumsq_[d];
    s += std::lgamma(a) - std::lgamma(prior_a_[d]) + prior_a_[d] * std::log(prior_b_[d]) -
         a * std::log(b) - 0.5 * n * kLog2Pi;
  }
  return s;
}

ZeroMeanGaussianMode TransformPriorStats::mode() const {
  const double n = static_cast<double>(count_);
  Vector var(dim());
  for (std::size_t d = 0; d < dim(); ++d) {
    var[d] = (prior_b_[d] + 0.5 * sumsq_[d]) / (prior_a_[d] + 0.5 * n + 1.0);
  }
  return ZeroMeanGaussianMode(std::move(var));
}

bool TransformPriorStats::same_fields(const TransformPriorStats& other) const {
  return count_ == other.count_ && sumsq_ == other.sumsq_ && prior_a_ == other.prior_a_ &&
         prior_b_ == other.prior_b_;
}

double max_relative_difference(const TransformPriorStats& a, const TransformPriorStats& b) {
  if (a.count() != b.count()) return std::numeric_limits<double>::infinity();
  return rel_diff(a.sumsq(), b.sumsq());
}

// ---------------------------------------------------------------------------
// DataStats

std::size_t DataStats::dim() const {
  return std::visit([](const auto& s) { return s.dim(); }, impl_);
}

std::int64_t DataStats::count() const {
  return std::visit([](const auto& s) { return s.count(); }, impl_);
}

void DataStats::update(std::span<const double> item, int sign) {
  std::visit([&](auto& s) { s.update(item, sign); }, impl_);
}

double DataStats::log_predictive(std::span<const double> item) const {
  return std::visit([&](const auto& s) { return s.log_predictive(item); }, impl_);
}

double DataStats::log_marginal() const {
  return std::visit([](const auto& s) { return s.log_marginal(); }, impl_);
}

DataMode DataStats::mode() const {
  return std::visit([](const auto& s) -> DataMode { return s.mode(); }, impl_);
}

DataStats DataStats::empty_like() const {
  return std::visit(
      [](const auto& s) -> DataStats {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, BernoulliStats>) {
          return BernoulliStats(s.dim(), s.prior());
        } else {
          return DiagGaussianStats(s.mu0(), s.kappa0(), s.a0(), s.b0());
        }
      },
      impl_);
}

bool DataStats::same_fields(const DataStats& other) const {
  if (impl_.index() != other.impl_.index()) return false;
  if (const auto* b = std::get_if<BernoulliStats>(&impl_)) {
    return b->same_fields(std::get<BernoulliStats>(other.impl_));
  }
  return std::get<DiagGaussianStats>(impl_).same_fields(std::get<DiagGaussianStats>(other.impl_));
}

double DataStats::max_relative_difference(const DataStats& other) const {
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (impl_.index() != other.impl_.index() || count() != other.count()) return inf;
  if (const auto* b = std::get_if<BernoulliStats>(&impl_)) {
    return rel_diff(b->ones(), std::get<BernoulliStats>(other.impl_).ones());
  }
  const auto& g = std::get<DiagGaussianStats>(impl_);
  const auto& h = std::get<DiagGaussianStats>(other.impl_);
  return std::max(rel_diff(g.sum(), h.sum()), rel_diff(g.sumsq(), h.sumsq()));
}

ComponentStats ComponentStats::empty_like() const {
  return ComponentStats{data.empty_like(),
                        TransformPriorStats(transform.prior_a(), transform.prior_b())};
}

}  // namespace tdpmix
