#pragma once

// Map/reduce iteration: every item is updated against one frozen snapshot of
// the cluster parameters (map), then cluster statistics are rebuilt once
// (reduce). Each item draws from its own stream derive_seed(seed, i), so the
// result does not depend on how items are split across workers.

#include <map>
#include <vector>

#include "tdpmix/jac.hpp"

namespace tdpmix {

struct SnapshotCluster {
  int id;
  std::int64_t member_count;
  bool locked;
  ComponentStats stats;
  DataMode data_mode;
  ZeroMeanGaussianMode transform_mode;
};

struct Snapshot {
  ModelPtr model;
  std::vector<SnapshotCluster> clusters;  // ascending id
  double gamma = 0.0;
  std::int64_t iteration = 0;
  std::uint64_t seed = 0;

  const SnapshotCluster* find(int id) const;
};

Snapshot make_snapshot(const JACState& state, std::uint64_t seed);

struct MapOutput {
  int z;  // kNewCluster marks a fresh-cluster draw
  Params rho;
  Vector aligned;

  friend bool operator==(const MapOutput&, const MapOutput&) = default;
};

// Sampler-2 update of one item against the snapshot. current_z is the item's
// cluster in the snapshot (kUnassigned if none); it is removed from that
// cluster's CRP count only.
MapOutput map_item(const Snapshot& snapshot, const DataItem& x, int current_z,
                   const Params& current_rho, const Vector& current_aligned,
                   const JACOptions& options, Rng& rng);

// Rebuilds cluster statistics from scratch given the complete map output.
// Fresh-cluster items are merged into one cluster with id fresh_id. Saved
// (checkpoint) contributions and lock flags carry over; empty unlocked
// clusters are dropped.
std::map<int, Cluster> reduce_clusters(const JACState& state, std::span<const MapOutput> outputs,
                                       int fresh_id, int workers = 1);

// Snapshot, parallel map, barrier, reduce, concentration update. On failure the
// state is left untouched and the first error is rethrown.
void parallel_iteration(JACState& state, int workers, const JACOptions& options = {});

JACRun run_parallel_jac(JACState& state, int iterations, int workers,
                        const JACOptions& options = {});

}  // namespace tdpmix
