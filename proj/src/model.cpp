#include "tdpmix/model.hpp"

#include <numeric>

namespace tdpmix {

GaussianPrior scale_gaussian_prior(GaussianPrior prior, std::span<const DataItem> items) {
  if (items.size() < 2) return prior;
  const std::size_t dim = items.front().size();
  const double n = static_cast<double>(items.size());
  double total_var = 0.0;
  for (std::size_t d = 0; d < dim; ++d) {
    double s = 0.0, ss = 0.0;
    for (const auto& item : items) {
      s += item.values[d];
      ss += item.values[d] * item.values[d];
    }
    const double mean = s / n;
    total_var += std::max(0.0, ss / n - mean * mean);
  }
  const double mean_var = total_var / static_cast<double>(dim);
  if (mean_var > 0.0) prior.b0 *= mean_var;
  return prior;
}

namespace {

DataStats make_data_stats(bool bernoulli, std::size_t dim, const Hyperparams& hyper) {
  if (bernoulli) return BernoulliStats(dim, hyper.bernoulli);
  return DiagGaussianStats(dim, hyper.gaussian);
}

}  // namespace

Model::Model(FamilyPtr family, DataKind kind, std::size_t data_dim, Hyperparams hyper,
             FeatureMap features)
    : family_(std::move(family)),
      kind_(kind),
      data_dim_(data_dim),
      hyper_(std::move(hyper)),
      features_(std::move(features)),
      prior_{make_data_stats(kind == DataKind::images && !features_, stats_dim(), hyper_),
             TransformPriorStats({}, {})} {
  if (!family_) throw ConfigError("model needs a transformation family");
  if (features_ && features_.dim == 0) throw ConfigError("feature map needs a dimension");
  const auto hints = family_->scale_hints();
  if (!hyper_.transform_b.empty()) {
    if (hyper_.transform_b.size() != hints.size()) {
      throw ConfigError("transform prior scale has " + std::to_string(hyper_.transform_b.size()) +
                        " entries, family has " + std::to_string(hints.size()));
    }
    transform_b_ = hyper_.transform_b;
  } else {
    transform_b_.resize(hints.size());
    for (std::size_t d = 0; d < hints.size(); ++d) {
      const double sd = hyper_.transform_prior_scale * hints[d];
      transform_b_[d] = (hyper_.transform_a + 1.0) * sd * sd;
    }
  }
  prior_.transform = TransformPriorStats(Vector(family_->dim(), hyper_.transform_a), transform_b_);
}

bool Model::uses_bernoulli() const { return kind_ == DataKind::images && !features_; }

Vector Model::canonical(const DataItem& x, std::span<const double> rho) const {
  calls_.fetch_add(1, std::memory_order_relaxed);
  DataItem y = family_->apply_inverse(x, rho);
  if (features_) return features_.fn(y);
  return std::move(y.values);
}

}  // namespace tdpmix
