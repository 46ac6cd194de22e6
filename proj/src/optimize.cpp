#include "tdpmix/optimize.hpp"

#include <cmath>
#include <limits>

namespace tdpmix {

namespace {

constexpr double kInvPhi = 0.6180339887498949;

class Search {
 public:
  Search(const Objective& objective, const TransformFamily& family, int budget)
      : objective_(objective), family_(family), budget_(budget) {}

  bool exhausted() const { return evaluations_ >= budget_; }
  int evaluations() const { return evaluations_; }
  const Params& best() const { return best_; }
  double best_score() const { return best_score_; }

  // Scores rho and keeps it if it beats the incumbent (ties keep the incumbent).
  double visit(const Params& rho) {
    if (exhausted()) return -std::numeric_limits<double>::infinity();
    ++evaluations_;
    double score = -std::numeric_limits<double>::infinity();
    if (family_.valid(rho)) {
      score = objective_(rho);
      if (std::isnan(score)) score = -std::numeric_limits<double>::infinity();
    }
    if (best_.empty() || score > best_score_) {
      best_ = rho;
      best_score_ = score;
    }
    return score;
  }

 private:
  const Objective& objective_;
  const TransformFamily& family_;
  int budget_;
  int evaluations_ = 0;
  Params best_;
  double best_score_ = -std::numeric_limits<double>::infinity();
};

}  // namespace

int default_budget(std::size_t dim, const OptimizerSettings& settings) {
  return 2 + settings.perturbations +
         settings.passes * static_cast<int>(dim) * (settings.golden_iterations + 2);
}

OptimizeResult optimize_rho(const Objective& objective, std::span<const double> rho_init,
                            const TransformFamily& family, int budget, Rng& rng,
                            const OptimizerSettings& settings) {
  if (rho_init.size() != family.dim()) {
    throw DimensionError("optimize_rho: initial point has wrong dimension");
  }
  budget = std::max(budget, 1);
  Search search(objective, family, budget);
  const Params init(rho_init.begin(), rho_init.end());
  search.visit(init);
  const std::size_t dim = family.dim();
  if (dim == 0) return {search.best(), search.best_score(), search.evaluations()};

  const auto hints = family.scale_hints();
  const Params zero(dim, 0.0);
  if (init != zero) search.visit(zero);

  for (int k = 0; k < settings.perturbations && !search.exhausted(); ++k) {
    Params p = init;
    for (std::size_t d = 0; d < dim; ++d) {
      p[d] += sample_normal(0.0, settings.perturbation_scale * hints[d], rng);
    }
    search.visit(p);
  }

  for (int pass = 0; pass < settings.passes && !search.exhausted(); ++pass) {
    for (std::size_t d = 0; d < dim && !search.exhausted(); ++d) {
      if (!(hints[d] > 0.0)) continue;
      const Params base = search.best();
      const double half = settings.bracket * hints[d];
      double lo = base[d] - half;
      double hi = base[d] + half;
      auto at = [&](double v) {
        Params p = base;
        p[d] = v;
        return search.visit(p);
      };
      double x1 = hi - kInvPhi * (hi - lo);
      double x2 = lo + kInvPhi * (hi - lo);
      double f1 = at(x1);
      double f2 = at(x2);
      for (int it = 0; it < settings.golden_iterations && !search.exhausted(); ++it) {
        if (f1 >= f2) {
          hi = x2;
          x2 = x1;
          f2 = f1;
          x1 = hi - kInvPhi * (hi - lo);
          f1 = at(x1);
        } else {
          lo = x1;
          x1 = x2;
          f1 = f2;
          x2 = lo + kInvPhi * (hi - lo);
          f2 = at(x2);
        }
      }
    }
  }
  return {search.best(), search.best_score(), search.evaluations()};
}

}  // namespace tdpmix
