#include "tdpmix/distributed.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

namespace tdpmix {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Runs fn(i) for i in [0, n) over contiguous chunks; rethrows the first error.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn fn) {
  const std::size_t w = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), 1,
                                                std::max<std::size_t>(n, 1));
  if (w == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  threads.reserve(w);
  const std::size_t chunk = (n + w - 1) / w;
  for (std::size_t t = 0; t < w; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    threads.emplace_back([&, begin, end] {
      try {
        for (std::size_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

const SnapshotCluster* Snapshot::find(int id) const {
  auto it = std::lower_bound(clusters.begin(), clusters.end(), id,
                             [](const SnapshotCluster& c, int v) { return c.id < v; });
  return it != clusters.end() && it->id == id ? &*it : nullptr;
}

Snapshot make_snapshot(const JACState& state, std::uint64_t seed) {
  Snapshot s;
  s.model = state.model;
  s.gamma = state.gamma;
  s.iteration = state.iteration;
  s.seed = seed;
  s.clusters.reserve(state.clusters.size());
  for (const auto& [id, c] : state.clusters) {
    s.clusters.push_back({id, c.member_count, c.locked, c.stats, c.stats.data.mode(),
                          c.stats.transform.mode()});
  }
  return s;
}

MapOutput map_item(const Snapshot& snapshot, const DataItem& x, int current_z,
                   const Params& current_rho, const Vector& current_aligned,
                   const JACOptions& options, Rng& rng) {
  const Model& model = *snapshot.model;
  const bool predictive = options.predictive_terms || model.family().dim() == 0;

  double total = 0.0;
  for (const SnapshotCluster& c : snapshot.clusters) {
    total += static_cast<double>(c.member_count - (c.id == current_z ? 1 : 0));
  }
  const double denom = total + snapshot.gamma;

  std::vector<ClusterTerms> targets;
  targets.reserve(snapshot.clusters.size() + 1);
  for (const SnapshotCluster& c : snapshot.clusters) {
    const double n = static_cast<double>(c.member_count - (c.id == current_z ? 1 : 0));
    if (!(n > 0.0) || !(denom > 0.0)) continue;
    ClusterTerms t{c.id, std::log(n / denom)};
    t.predictive = predictive;
    t.data_mode = &c.data_mode;
    t.transform_mode = &c.transform_mode;
    t.data_stats = &c.stats.data;
    t.transform_stats = &c.stats.transform;
    targets.push_back(t);
  }
  if (snapshot.gamma > 0.0 && denom > 0.0) {
    ClusterTerms t{kNewCluster, std::log(snapshot.gamma / denom)};
    t.predictive = true;
    t.data_stats = &model.prior().data;
    t.transform_stats = &model.prior().transform;
    targets.push_back(t);
  }
  if (targets.empty()) throw Error("map_item: no admissible cluster");

  const SnapshotCluster* own = snapshot.find(current_z);
  const Vector proposal_var =
      own ? own->transform_mode.var : model.prior().transform.mode().var;
  const Vector* aligned = current_z == kUnassigned ? nullptr : &current_aligned;
  Sampler2Outcome out = sampler2_decide(model, x, current_rho, aligned, proposal_var, targets,
                                        options.L, options.keep_current_rho, rng);
  return {targets[out.choice].id, std::move(out.rho), std::move(out.aligned)};
}

std::map<int, Cluster> reduce_clusters(const JACState& state, std::span<const MapOutput> outputs,
                                       int fresh_id, int workers) {
  if (outputs.size() != state.items.size()) {
    throw DimensionError("reduce_clusters: map output does not cover every item");
  }
  std::map<int, std::vector<std::size_t>> members;
  for (const auto& [id, c] : state.clusters) members[id];
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const int z = outputs[i].z == kNewCluster ? fresh_id : outputs[i].z;
    if (z == kUnassigned) continue;
    if (z != fresh_id && !state.clusters.contains(z)) {
      throw Error("reduce_clusters: item names a missing cluster");
    }
    members[z].push_back(i);
  }

  std::vector<int> ids;
  for (const auto& [id, m] : members) ids.push_back(id);
  std::vector<std::optional<Cluster>> built(ids.size());
  parallel_for(ids.size(), workers, [&](std::size_t k) {
    const int id = ids[k];
    auto old = state.clusters.find(id);
    const bool existing = old != state.clusters.end();
    Cluster c{id,
              existing && old->second.base ? *old->second.base : state.model->empty_component(),
              existing ? old->second.external_count : 0,
              existing ? old->second.external_count : 0,
              existing && old->second.locked,
              existing ? old->second.base : std::nullopt,
              std::nullopt,
              std::nullopt};
    for (std::size_t i : members[id]) {
      for (int r = 0; r < state.weight[i]; ++r) {
        c.stats.data.update(outputs[i].aligned, +1);
        c.stats.transform.update(outputs[i].rho, +1);
      }
      ++c.member_count;
    }
    if (c.member_count > 0 || c.locked) built[k] = std::move(c);
  });

  std::map<int, Cluster> result;
  for (auto& c : built) {
    if (c) result.emplace(c->id, std::move(*c));
  }
  return result;
}

void parallel_iteration(JACState& state, int workers, const JACOptions& options) {
  if (workers < 1) throw ConfigError("workers must be >= 1");
  const Rng saved_rng = state.rng;
  try {
    const std::uint64_t seed = state.rng();
    const Snapshot snapshot = make_snapshot(state, seed);
    const std::size_t n = state.items.size();

    std::vector<MapOutput> outputs(n);
    parallel_for(n, workers, [&](std::size_t i) {
      if (state.fixed[i]) {
        outputs[i] = {state.z[i], state.rho[i], state.aligned[i]};
        return;
      }
      Rng rng(derive_seed(seed, i));
      outputs[i] = map_item(snapshot, state.items[i], state.z[i], state.rho[i], state.aligned[i],
                            options, rng);
    });

    const bool any_fresh = std::any_of(outputs.begin(), outputs.end(),
                                       [](const MapOutput& o) { return o.z == kNewCluster; });
    const int fresh_id = state.next_id;
    std::map<int, Cluster> clusters = reduce_clusters(state, outputs, fresh_id, workers);

    state.clusters = std::move(clusters);
    if (any_fresh) ++state.next_id;
    for (std::size_t i = 0; i < n; ++i) {
      state.z[i] = outputs[i].z == kNewCluster ? fresh_id : outputs[i].z;
      state.rho[i] = std::move(outputs[i].rho);
      state.aligned[i] = std::move(outputs[i].aligned);
    }
  } catch (...) {
    state.rng = saved_rng;
    throw;
  }
  if (options.resample_gamma && state.gamma > 0.0) resample_gamma(state);
  ++state.iteration;
  if (options.validate) {
    const double deviation = jac_validate(state);
    if (deviation > 1e-9) throw Error("cluster statistics drifted from their members");
  }
}

JACRun run_parallel_jac(JACState& state, int iterations, int workers, const JACOptions& options) {
  JACRun run;
  run.best_score = kNegInf;
  for (int it = 0; it < iterations; ++it) {
    parallel_iteration(state, workers, options);
    const double score = jac_joint_score(state);
    run.trace.push_back({state.iteration, state.cluster_count(), score, state.gamma});
    if (score > run.best_score || run.best_iteration < 0) {
      run.best_score = score;
      run.best_iteration = state.iteration;
      run.best_z = state.z;
      run.best_rho = state.rho;
    }
  }
  return run;
}

}  // namespace tdpmix
