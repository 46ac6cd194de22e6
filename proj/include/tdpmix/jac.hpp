#pragma once

// Joint alignment and clustering under a Dirichlet-process mixture over
// (data, transform) parameter pairs. Mixture weights are integrated out (CRP
// representation); cluster parameters are summarised by sufficient statistics.
//
// Two per-item samplers are provided:
//   sampler 1 - blocked: for every cluster, find the best rho under the
//               leave-one-out predictives, then draw the cluster;
//   sampler 2 - rho is integrated out by importance sampling with L proposals
//               shared by all clusters, cluster parameters are replaced by
//               their posterior modes, and rho is set to the best proposal.

#include <map>
#include <optional>
#include <vector>

#include "tdpmix/model.hpp"
#include "tdpmix/optimize.hpp"

namespace tdpmix {

inline constexpr int kUnassigned = -1;
inline constexpr int kNewCluster = -2;

struct Cluster {
  int id = 0;
  ComponentStats stats;
  // Items in the current batch plus members carried in from a checkpoint.
  std::int64_t member_count = 0;
  std::int64_t external_count = 0;
  bool locked = false;
  // Statistics that did not come from the current items (checkpoint restore).
  std::optional<ComponentStats> base;

  // Cached posterior modes; refreshed lazily by the samplers.
  std::optional<DataMode> data_mode;
  std::optional<ZeroMeanGaussianMode> transform_mode;

  void invalidate_modes() {
    data_mode.reset();
    transform_mode.reset();
  }
  void refresh_modes();
};

struct JACOptions {
  int sampler = 2;
  int L = 50;
  int budget = 0;  // sampler-1 optimiser budget per cluster; 0 = default
  OptimizerSettings optimizer;
  bool resample_gamma = true;
  // E-step of sampler 2 also keeps the current rho when it beats every proposal.
  bool keep_current_rho = true;
  // Sampler 2 evaluates the data and transform terms with posterior
  // predictives instead of posterior modes. Always on for the identity family,
  // where no transform integral remains.
  bool predictive_terms = false;
  bool validate = true;
};

enum class InitMode {
  single_cluster,  // all items in one cluster with rho = 0
  unassigned,      // items are placed by the first iteration
};

struct JACState {
  ModelPtr model;
  std::vector<DataItem> items;
  std::vector<int> z;
  std::vector<Params> rho;
  std::vector<Vector> aligned;
  std::vector<int> weight;   // replication count of each item in its cluster stats
  std::vector<char> fixed;   // labelled items are never resampled
  std::map<int, Cluster> clusters;
  double gamma = 1.0;
  double gamma_shape = 1.0;
  double gamma_rate = 1.0;
  int next_id = 0;
  std::int64_t iteration = 0;
  Rng rng;

  std::size_t cluster_count() const { return clusters.size(); }
  std::int64_t total_members() const;
};

JACState make_jac_state(ModelPtr model, std::vector<DataItem> items, double gamma,
                        std::uint64_t seed, InitMode init = InitMode::single_cluster);

// Moves item i out of its cluster (deleting the cluster if it empties and is
// unlocked). No-op for unassigned items.
void remove_item(JACState& state, std::size_t i);
// Adds item i to cluster id (kNewCluster creates one) with the given rho and
// canonical vector. Returns the cluster id used.
int add_item(JACState& state, std::size_t i, int cluster_id, Params rho, Vector aligned);

// log CRP predictive of item i joining cluster_id (or kNewCluster), with item i
// removed from the counts.
double crp_log_prior(const JACState& state, std::size_t i, int cluster_id);

void sampler1_step(JACState& state, std::size_t i, const JACOptions& options = {});
void sampler2_step(JACState& state, std::size_t i, const JACOptions& options = {});

// Random permutation sweep, then concentration resampling.
void gibbs_iteration(JACState& state, const JACOptions& options = {});

// Escobar-West auxiliary-variable update of the DP concentration.
void resample_gamma(JACState& state);
double escobar_west_draw(double gamma, std::int64_t n, std::int64_t k, double shape, double rate,
                         Rng& rng);

// Creates one locked cluster per distinct label and adds each labelled item r
// times (at rho = 0). All other items become unassigned.
void seed_clusters(JACState& state, const std::vector<std::pair<std::size_t, int>>& labelled,
                   int replication);

// log p(z) + sum_k log p(y_k) + log p(rho_k), z under the CRP.
double jac_joint_score(const JACState& state);

// Throws if the partition is inconsistent; returns the largest relative
// deviation between cached and recomputed cluster statistics.
double jac_validate(const JACState& state);

struct JACTraceEntry {
  std::int64_t iteration;
  std::size_t clusters;
  double joint_score;
  double gamma;
};

struct JACRun {
  std::vector<JACTraceEntry> trace;
  std::vector<int> best_z;
  std::vector<Params> best_rho;
  double best_score = 0.0;
  std::int64_t best_iteration = -1;
};

JACRun run_jac(JACState& state, int iterations, const JACOptions& options = {});

// ---------------------------------------------------------------------------
// Importance-sampling core shared by sampler 2 and the parallel map step.

// Frozen densities of one candidate cluster. Mode pointers are used for
// the plug-in terms; stats pointers for predictive terms.
struct ClusterTerms {
  int id;
  double log_crp;
  const DataMode* data_mode = nullptr;
  const ZeroMeanGaussianMode* transform_mode = nullptr;
  const DataStats* data_stats = nullptr;
  const TransformPriorStats* transform_stats = nullptr;
  bool predictive = false;

  double data_term(std::span<const double> y) const;
  double transform_term(std::span<const double> rho) const;
};

struct ProposalSample {
  Params rho;
  Vector y;
  double log_q;
};

// Mixture proposal: current rho with 0.25-hint noise, zero-mean at the hints,
// and zero-mean at the item's cluster variances; equal weights.
struct Proposal {
  Params current;
  Vector cluster_var;

  double log_density(const TransformFamily& family, std::span<const double> rho) const;
  Params draw(const TransformFamily& family, Rng& rng) const;
};

// Draws L proposals and transforms the item once per proposal.
std::vector<ProposalSample> draw_proposals(const Model& model, const DataItem& x,
                                           const Proposal& proposal, int L, Rng& rng);

// Self-normalised estimate of log p(x | cluster) for each target.
std::vector<double> importance_log_marginals(std::span<const ProposalSample> samples,
                                             std::span<const ClusterTerms> targets);

struct Sampler2Outcome {
  std::size_t choice;  // index into targets
  Params rho;
  Vector aligned;
  std::vector<double> log_marginals;
};

// Complete sampler-2 decision for one item given frozen cluster terms. The
// last target is expected to be the fresh-cluster entry when one exists.
Sampler2Outcome sampler2_decide(const Model& model, const DataItem& x, const Params& current_rho,
                                const Vector* current_aligned, const Vector& proposal_var,
                                std::span<const ClusterTerms> targets, int L, bool keep_current,
                                Rng& rng);

}  // namespace tdpmix
