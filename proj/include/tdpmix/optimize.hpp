#pragma once

#include <functional>

#include "tdpmix/transforms.hpp"

namespace tdpmix {

struct OptimizerSettings {
  int perturbations = 20;
  double perturbation_scale = 0.25;  // times the scale hint
  int passes = 2;
  int golden_iterations = 10;
  double bracket = 1.0;  // half-width of each line search, in scale hints
};

using Objective = std::function<double(std::span<const double>)>;

struct OptimizeResult {
  Params rho;
  double score;
  int evaluations;
};

// Evaluations used by a full run of the search for a family of dimension dim.
int default_budget(std::size_t dim, const OptimizerSettings& settings = {});

// Derivative-free maximisation of objective over the family's parameters:
// a random screen around rho_init (plus the identity), then coordinate-wise
// golden-section refinement. Never returns a point scoring below rho_init.
// Parameters the family rejects score -inf without calling the objective.
OptimizeResult optimize_rho(const Objective& objective, std::span<const double> rho_init,
                            const TransformFamily& family, int budget, Rng& rng,
                            const OptimizerSettings& settings = {});

}  // namespace tdpmix
