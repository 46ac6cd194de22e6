#pragma once

#include <atomic>
#include <functional>
#include <memory>

#include "tdpmix/expfam.hpp"
#include "tdpmix/transforms.hpp"

namespace tdpmix {

struct Hyperparams {
  BernoulliPrior bernoulli;
  GaussianPrior gaussian;
  // Inverse-Gamma shape on each transform variance. Large values act as many
  // pseudo-observations and keep the learned variances near the prior mode.
  double transform_a = 1000.0;
  // Prior standard deviation mode sqrt(b/(a+1)) equals this multiple of each
  // dimension's scale hint.
  double transform_prior_scale = 1.0;
  // Explicit per-dimension Inverse-Gamma scales; overrides the fraction when non-empty.
  Vector transform_b;
  // Gamma(shape, rate) hyperprior on the DP concentration.
  double gamma_shape = 1.0;
  double gamma_rate = 1.0;

  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

// Rescales b0 by the mean per-dimension variance of the data (no-op for
// constant data).
GaussianPrior scale_gaussian_prior(GaussianPrior prior, std::span<const DataItem> items);

// Maps an aligned item onto the vector the data distribution sees. The default
// (empty) map is the raw values; a named map (e.g. gradient histograms) can
// replace it. The name lets checkpoints rebuild the model.
struct FeatureMap {
  std::string name;
  std::size_t dim = 0;
  std::function<Vector(const DataItem&)> fn;

  explicit operator bool() const { return static_cast<bool>(fn); }
};

// Immutable model definition shared by samplers: transformation family, data
// family choice and hyperparameters. Also counts transform applications.
class Model {
 public:
  Model(FamilyPtr family, DataKind kind, std::size_t data_dim, Hyperparams hyper,
        FeatureMap features = {});

  const TransformFamily& family() const { return *family_; }
  const FamilyPtr& family_ptr() const { return family_; }
  DataKind kind() const { return kind_; }
  std::size_t data_dim() const { return data_dim_; }
  // Dimension of the vectors held by the data statistics.
  std::size_t stats_dim() const { return features_ ? features_.dim : data_dim_; }
  const FeatureMap& features() const { return features_; }
  const Hyperparams& hyper() const { return hyper_; }
  bool uses_bernoulli() const;

  DataStats empty_data_stats() const { return prior_.data; }
  TransformPriorStats empty_transform_stats() const { return prior_.transform; }
  ComponentStats empty_component() const { return prior_; }
  // Statistics of an empty component; its predictives are the prior predictives.
  const ComponentStats& prior() const { return prior_; }
  const Vector& transform_prior_b() const { return transform_b_; }

  // y = features(tau(x, rho^{-1})). Counts one transform application.
  Vector canonical(const DataItem& x, std::span<const double> rho) const;

  std::uint64_t transform_calls() const { return calls_.load(std::memory_order_relaxed); }
  void reset_transform_calls() const { calls_.store(0, std::memory_order_relaxed); }

 private:
  FamilyPtr family_;
  DataKind kind_;
  std::size_t data_dim_;
  Hyperparams hyper_;
  FeatureMap features_;
  Vector transform_b_;
  ComponentStats prior_;
  mutable std::atomic<std::uint64_t> calls_{0};
};

using ModelPtr = std::shared_ptr<const Model>;

}  // namespace tdpmix
