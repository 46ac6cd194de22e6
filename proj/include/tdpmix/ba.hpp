#pragma once

// Bayesian joint alignment of a unimodal collection. Every item carries its own
// transformation rho_i; the canonical items y_i = tau(x_i, rho_i^{-1}) share one
// data distribution and the rho_i share one zero-mean transform distribution,
// both integrated out through their sufficient statistics.

#include <vector>

#include "tdpmix/model.hpp"
#include "tdpmix/optimize.hpp"

namespace tdpmix {

struct BAOptions {
  int max_sweeps = 30;
  double rel_tol = 1e-4;
  int budget = 0;  // evaluations per site; 0 selects default_budget
  OptimizerSettings optimizer;
};

struct BAState {
  ModelPtr model;
  std::vector<DataItem> items;
  std::vector<Params> rho;
  std::vector<Vector> aligned;  // cached y_i
  DataStats data_stats;
  TransformPriorStats t_stats;
  int iteration = 0;
  Rng rng;

  BAState(ModelPtr model, std::vector<DataItem> items, std::uint64_t seed);
};

// Leave-one-out score of candidate rho for item i. Requires item i to be
// removed from both statistics.
double ba_objective(const BAState& state, std::size_t i, std::span<const double> rho);

struct SiteUpdate {
  std::size_t item;
  double before;  // objective at the previous rho
  double after;   // objective at the chosen rho
};

struct SweepResult {
  std::vector<SiteUpdate> sites;
  double joint_score = 0.0;
};

// One pass over a fresh random permutation: remove, maximise, re-add.
SweepResult ba_sweep(BAState& state, const BAOptions& options = {});

struct BATrace {
  std::vector<double> joint_scores;  // entry 0 is the initial state
  int sweeps = 0;
  bool converged = false;
};

// Sweeps until max_sweeps or until the joint score improves by less than
// rel_tol (relative).
BATrace run_ba(BAState& state, const BAOptions& options = {});

// log p(y_1..N) + log p(rho_1..N) under the collapsed model.
double ba_joint_score(const BAState& state);

// Largest relative deviation between cached statistics and a from-scratch
// accumulation of the current y and rho.
double ba_stats_deviation(const BAState& state);

}  // namespace tdpmix
