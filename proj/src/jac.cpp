#include "tdpmix/jac.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

namespace tdpmix {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr int kMaxProposalAttempts = 1000;

double normal_logpdf(double x, double mean, double var) {
  const double r = x - mean;
  return -0.5 * (kLog2Pi + std::log(var) + r * r / var);
}

Cluster new_cluster(int id, ComponentStats stats) {
  Cluster c{id, std::move(stats), 0, 0, false, std::nullopt, std::nullopt, std::nullopt};
  return c;
}

bool use_predictive_terms(const Model& model, const JACOptions& options) {
  return options.predictive_terms || model.family().dim() == 0;
}

}  // namespace

void Cluster::refresh_modes() {
  if (!data_mode) data_mode = stats.data.mode();
  if (!transform_mode) transform_mode = stats.transform.mode();
}

std::int64_t JACState::total_members() const {
  std::int64_t n = 0;
  for (const auto& [id, c] : clusters) n += c.member_count;
  return n;
}

JACState make_jac_state(ModelPtr model, std::vector<DataItem> items, double gamma,
                        std::uint64_t seed, InitMode init) {
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw DomainError("gamma must be >= 0");
  JACState s;
  s.model = std::move(model);
  s.items = std::move(items);
  const std::size_t n = s.items.size();
  s.z.assign(n, kUnassigned);
  s.rho.assign(n, s.model->family().identity());
  s.weight.assign(n, 1);
  s.fixed.assign(n, 0);
  s.gamma = gamma;
  s.gamma_shape = s.model->hyper().gamma_shape;
  s.gamma_rate = s.model->hyper().gamma_rate;
  s.rng.seed(seed);
  s.aligned.reserve(n);
  for (std::size_t i = 0; i < n; ++i) s.aligned.push_back(s.model->canonical(s.items[i], s.rho[i]));
  if (init == InitMode::single_cluster && n > 0) {
    const int id = add_item(s, 0, kNewCluster, s.rho[0], s.aligned[0]);
    for (std::size_t i = 1; i < n; ++i) add_item(s, i, id, s.rho[i], s.aligned[i]);
  }
  return s;
}

void remove_item(JACState& state, std::size_t i) {
  const int id = state.z.at(i);
  if (id == kUnassigned) return;
  auto it = state.clusters.find(id);
  if (it == state.clusters.end()) throw Error("item assigned to a missing cluster");
  Cluster& c = it->second;
  for (int r = 0; r < state.weight[i]; ++r) {
    c.stats.data.update(state.aligned[i], -1);
    c.stats.transform.update(state.rho[i], -1);
  }
  --c.member_count;
  c.invalidate_modes();
  state.z[i] = kUnassigned;
  if (c.member_count == 0 && !c.locked) state.clusters.erase(it);
}

int add_item(JACState& state, std::size_t i, int cluster_id, Params rho, Vector aligned) {
  if (state.z.at(i) != kUnassigned) throw Error("add_item on an assigned item");
  if (cluster_id == kNewCluster) {
    cluster_id = state.next_id++;
    Cluster c = new_cluster(cluster_id, state.model->empty_component());
    state.clusters.emplace(cluster_id, std::move(c));
  }
  auto it = state.clusters.find(cluster_id);
  if (it == state.clusters.end()) throw Error("add_item to a missing cluster");
  Cluster& c = it->second;
  state.rho[i] = std::move(rho);
  state.aligned[i] = std::move(aligned);
  for (int r = 0; r < state.weight[i]; ++r) {
    c.stats.data.update(state.aligned[i], +1);
    c.stats.transform.update(state.rho[i], +1);
  }
  ++c.member_count;
  c.invalidate_modes();
  state.z[i] = cluster_id;
  return cluster_id;
}

double crp_log_prior(const JACState& state, std::size_t i, int cluster_id) {
  const int own = state.z.at(i);
  double total = 0.0;
  double count = 0.0;
  for (const auto& [id, c] : state.clusters) {
    const double n = static_cast<double>(c.member_count - (id == own ? 1 : 0));
    total += n;
    if (id == cluster_id) count = n;
  }
  const double denom = total + state.gamma;
  if (!(denom > 0.0)) return kNegInf;
  if (cluster_id == kNewCluster) {
    return state.gamma > 0.0 ? std::log(state.gamma / denom) : kNegInf;
  }
  return count > 0.0 ? std::log(count / denom) : kNegInf;
}

// ---------------------------------------------------------------------------
// Sampler 1

void sampler1_step(JACState& state, std::size_t i, const JACOptions& options) {
  if (state.fixed.at(i)) return;
  remove_item(state, i);
  const Model& model = *state.model;
  const auto& family = model.family();
  const DataItem& x = state.items[i];
  const int budget =
      options.budget > 0 ? options.budget : default_budget(family.dim(), options.optimizer);

  std::vector<int> ids;
  std::vector<double> scores;
  std::vector<Params> rhos;
  auto consider = [&](int id, double log_crp, const ComponentStats& stats, const Params& init,
                      int evals) {
    Objective objective = [&](std::span<const double> r) {
      const Vector y = model.canonical(x, r);
      return stats.transform.log_predictive(r) + stats.data.log_predictive(y);
    };
    OptimizeResult best =
        optimize_rho(objective, init, family, evals, state.rng, options.optimizer);
    ids.push_back(id);
    scores.push_back(log_crp + best.score);
    rhos.push_back(std::move(best.rho));
  };

  for (const auto& [id, c] : state.clusters) {
    const double log_crp = crp_log_prior(state, i, id);
    if (log_crp == kNegInf) continue;
    consider(id, log_crp, c.stats, state.rho[i], budget);
  }
  const double log_new = crp_log_prior(state, i, kNewCluster);
  if (log_new > kNegInf) {
    consider(kNewCluster, log_new, model.prior(), family.identity(), std::max(1, budget / 2));
  }
  if (ids.empty()) throw Error("no admissible cluster for item " + std::to_string(i));

  const std::size_t k = sample_log_categorical(scores, state.rng);
  Vector y = model.canonical(x, rhos[k]);
  add_item(state, i, ids[k], std::move(rhos[k]), std::move(y));
}

// ---------------------------------------------------------------------------
// Importance-sampling core

double ClusterTerms::data_term(std::span<const double> y) const {
  if (predictive) return data_stats->log_predictive(y);
  return log_density(*data_mode, y);
}

double ClusterTerms::transform_term(std::span<const double> rho) const {
  if (predictive) return transform_stats->log_predictive(rho);
  return transform_mode->log_density(rho);
}

double Proposal::log_density(const TransformFamily& family, std::span<const double> rho) const {
  const std::size_t dim = family.dim();
  if (dim == 0) return 0.0;
  const auto hints = family.scale_hints();
  double local = 0.0, global = 0.0, fitted = 0.0;
  for (std::size_t d = 0; d < dim; ++d) {
    const double h = hints[d];
    local += normal_logpdf(rho[d], current[d], 0.0625 * h * h);
    global += normal_logpdf(rho[d], 0.0, h * h);
    fitted += normal_logpdf(rho[d], 0.0, cluster_var[d]);
  }
  const double parts[3] = {local, global, fitted};
  return log_sum_exp(parts) - std::log(3.0);
}

Params Proposal::draw(const TransformFamily& family, Rng& rng) const {
  const std::size_t dim = family.dim();
  const auto hints = family.scale_hints();
  Params rho(dim);
  for (int attempt = 0; attempt < kMaxProposalAttempts; ++attempt) {
    const auto component = rng() % 3;
    for (std::size_t d = 0; d < dim; ++d) {
      switch (component) {
        case 0:
          rho[d] = sample_normal(current[d], 0.25 * hints[d], rng);
          break;
        case 1:
          rho[d] = sample_normal(0.0, hints[d], rng);
          break;
        default:
          rho[d] = sample_normal(0.0, std::sqrt(cluster_var[d]), rng);
          break;
      }
    }
    if (family.valid(rho)) return rho;
  }
  return family.identity();
}

std::vector<ProposalSample> draw_proposals(const Model& model, const DataItem& x,
                                           const Proposal& proposal, int L, Rng& rng) {
  if (L < 1) throw DomainError("importance sampling needs L >= 1");
  const auto& family = model.family();
  std::vector<ProposalSample> samples;
  samples.reserve(static_cast<std::size_t>(L));
  for (int l = 0; l < L; ++l) {
    Params rho = proposal.draw(family, rng);
    const double log_q = proposal.log_density(family, rho);
    Vector y = model.canonical(x, rho);
    samples.push_back({std::move(rho), std::move(y), log_q});
  }
  return samples;
}

std::vector<double> importance_log_marginals(std::span<const ProposalSample> samples,
                                             std::span<const ClusterTerms> targets) {
  std::vector<double> result;
  result.reserve(targets.size());
  std::vector<double> log_w(samples.size()), log_wp(samples.size());
  for (const ClusterTerms& t : targets) {
    for (std::size_t l = 0; l < samples.size(); ++l) {
      log_w[l] = t.transform_term(samples[l].rho) - samples[l].log_q;
      log_wp[l] = log_w[l] + t.data_term(samples[l].y);
    }
    const double norm = log_sum_exp(log_w);
    // NaN marks a degenerate weight set; callers substitute a fallback.
    result.push_back(norm == kNegInf ? std::numeric_limits<double>::quiet_NaN()
                                     : log_sum_exp(log_wp) - norm);
  }
  return result;
}

Sampler2Outcome sampler2_decide(const Model& model, const DataItem& x, const Params& current_rho,
                                const Vector* current_aligned, const Vector& proposal_var,
                                std::span<const ClusterTerms> targets, int L, bool keep_current,
                                Rng& rng) {
  if (targets.empty()) throw Error("sampler 2 has no candidate cluster");
  const int draws = model.family().dim() == 0 ? 1 : L;
  const Proposal proposal{current_rho, proposal_var};
  std::vector<ProposalSample> samples = draw_proposals(model, x, proposal, draws, rng);

  std::vector<double> log_m = importance_log_marginals(samples, targets);
  const bool has_fresh = targets.back().id == kNewCluster;
  double fallback = kNegInf;
  if (has_fresh && !std::isnan(log_m.back())) fallback = log_m.back();
  std::vector<double> log_post(targets.size());
  for (std::size_t k = 0; k < targets.size(); ++k) {
    if (std::isnan(log_m[k])) log_m[k] = fallback;
    log_post[k] = targets[k].log_crp + log_m[k];
  }
  const std::size_t choice = sample_log_categorical(log_post, rng);

  const ClusterTerms& chosen = targets[choice];
  std::size_t best = 0;
  double best_score = kNegInf;
  for (std::size_t l = 0; l < samples.size(); ++l) {
    const double s = chosen.transform_term(samples[l].rho) + chosen.data_term(samples[l].y);
    if (s > best_score || l == 0) {
      best = l;
      best_score = s;
    }
  }
  Sampler2Outcome out{choice, {}, {}, std::move(log_m)};
  if (keep_current && current_aligned != nullptr) {
    const double current_score =
        chosen.transform_term(current_rho) + chosen.data_term(*current_aligned);
    if (current_score >= best_score) {
      out.rho = current_rho;
      out.aligned = *current_aligned;
      return out;
    }
  }
  out.rho = std::move(samples[best].rho);
  out.aligned = std::move(samples[best].y);
  return out;
}

// ---------------------------------------------------------------------------
// Sampler 2

void sampler2_step(JACState& state, std::size_t i, const JACOptions& options) {
  if (state.fixed.at(i)) return;
  const int previous = state.z[i];
  remove_item(state, i);
  const Model& model = *state.model;
  const bool predictive = use_predictive_terms(model, options);

  Vector proposal_var;
  if (auto it = state.clusters.find(previous); it != state.clusters.end()) {
    it->second.refresh_modes();
    proposal_var = it->second.transform_mode->var;
  } else {
    proposal_var = model.prior().transform.mode().var;
  }

  std::vector<ClusterTerms> targets;
  targets.reserve(state.clusters.size() + 1);
  for (auto& [id, c] : state.clusters) {
    const double log_crp = crp_log_prior(state, i, id);
    if (log_crp == kNegInf) continue;
    ClusterTerms t{id, log_crp};
    if (predictive) {
      t.predictive = true;
      t.data_stats = &c.stats.data;
      t.transform_stats = &c.stats.transform;
    } else {
      c.refresh_modes();
      t.data_mode = &*c.data_mode;
      t.transform_mode = &*c.transform_mode;
    }
    targets.push_back(t);
  }
  const double log_new = crp_log_prior(state, i, kNewCluster);
  if (log_new > kNegInf) {
    // A fresh cluster has no data to take a mode from; it scores with the
    // prior predictives.
    ClusterTerms t{kNewCluster, log_new};
    t.predictive = true;
    t.data_stats = &model.prior().data;
    t.transform_stats = &model.prior().transform;
    targets.push_back(t);
  }

  Sampler2Outcome out = sampler2_decide(model, state.items[i], state.rho[i], &state.aligned[i],
                                        proposal_var, targets, options.L,
                                        options.keep_current_rho, state.rng);
  add_item(state, i, targets[out.choice].id, std::move(out.rho), std::move(out.aligned));
}

// ---------------------------------------------------------------------------

void gibbs_iteration(JACState& state, const JACOptions& options) {
  if (options.sampler != 1 && options.sampler != 2) throw ConfigError("sampler must be 1 or 2");
  for (std::size_t i : random_permutation(state.items.size(), state.rng)) {
    if (state.fixed[i]) continue;
    if (options.sampler == 1) {
      sampler1_step(state, i, options);
    } else {
      sampler2_step(state, i, options);
    }
  }
  if (options.resample_gamma && state.gamma > 0.0) resample_gamma(state);
  ++state.iteration;
  if (options.validate) {
    const double deviation = jac_validate(state);
    if (deviation > 1e-9) {
      throw Error("cluster statistics drifted from their members (" + std::to_string(deviation) +
                  ")");
    }
  }
}

double escobar_west_draw(double gamma, std::int64_t n, std::int64_t k, double shape, double rate,
                         Rng& rng) {
  const double eta = sample_beta(gamma + 1.0, static_cast<double>(n), rng);
  const double post_rate = rate - std::log(eta);
  const double kk = static_cast<double>(k);
  const double odds_num = shape + kk - 1.0;
  const double pi = odds_num / (static_cast<double>(n) * post_rate + odds_num);
  if (sample_uniform(rng) < pi) return sample_gamma(shape + kk, post_rate, rng);
  return sample_gamma(shape + kk - 1.0, post_rate, rng);
}

void resample_gamma(JACState& state) {
  const std::int64_t n = state.total_members();
  const auto k = static_cast<std::int64_t>(state.clusters.size());
  if (n < 1 || k < 1) return;
  double g = escobar_west_draw(std::max(state.gamma, 1e-300), n, k, state.gamma_shape,
                               state.gamma_rate, state.rng);
  state.gamma = std::max(g, std::numeric_limits<double>::min());
}

void seed_clusters(JACState& state, const std::vector<std::pair<std::size_t, int>>& labelled,
                   int replication) {
  if (replication < 1) throw DomainError("replication must be >= 1");
  std::set<std::size_t> seen;
  std::set<int> labels;
  for (const auto& [item, label] : labelled) {
    if (item >= state.items.size()) throw DomainError("labelled item index out of range");
    if (!seen.insert(item).second) {
      throw DomainError("item " + std::to_string(item) + " is labelled more than once");
    }
    labels.insert(label);
  }
  for (std::size_t i = 0; i < state.items.size(); ++i) remove_item(state, i);

  std::map<int, int> cluster_of;
  for (int label : labels) {
    const int id = state.next_id++;
    Cluster c = new_cluster(id, state.model->empty_component());
    c.locked = true;
    state.clusters.emplace(id, std::move(c));
    cluster_of[label] = id;
  }
  const Params zero = state.model->family().identity();
  for (const auto& [item, label] : labelled) {
    state.fixed[item] = 1;
    state.weight[item] = replication;
    add_item(state, item, cluster_of[label], zero, state.model->canonical(state.items[item], zero));
  }
}

double jac_joint_score(const JACState& state) {
  double score = 0.0;
  double n = 0.0;
  std::size_t k = 0;
  for (const auto& [id, c] : state.clusters) {
    score += c.stats.data.log_marginal() + c.stats.transform.log_marginal();
    if (c.member_count > 0) {
      score += std::lgamma(static_cast<double>(c.member_count));
      n += static_cast<double>(c.member_count);
      ++k;
    }
  }
  if (n > 0.0 && state.gamma > 0.0) {
    score += static_cast<double>(k) * std::log(state.gamma) + std::lgamma(state.gamma) -
             std::lgamma(state.gamma + n);
  }
  return score;
}

double jac_validate(const JACState& state) {
  const std::size_t n = state.items.size();
  if (state.z.size() != n || state.rho.size() != n || state.aligned.size() != n) {
    throw Error("state vectors disagree in length");
  }
  std::map<int, std::int64_t> members;
  for (std::size_t i = 0; i < n; ++i) {
    const int id = state.z[i];
    if (id == kUnassigned) {
      if (state.fixed[i]) throw Error("labelled item is unassigned");
      continue;
    }
    if (!state.clusters.contains(id)) throw Error("item names a missing cluster");
    ++members[id];
  }
  double worst = 0.0;
  for (const auto& [id, c] : state.clusters) {
    if (c.member_count - c.external_count != members[id]) {
      throw Error("member count of cluster " + std::to_string(id) + " is inconsistent");
    }
    if (c.member_count == 0 && !c.locked) throw Error("empty unlocked cluster survived");
    ComponentStats fresh = c.base ? *c.base : state.model->empty_component();
    for (std::size_t i = 0; i < n; ++i) {
      if (state.z[i] != id) continue;
      for (int r = 0; r < state.weight[i]; ++r) {
        fresh.data.update(state.aligned[i], +1);
        fresh.transform.update(state.rho[i], +1);
      }
    }
    worst = std::max({worst, fresh.data.max_relative_difference(c.stats.data),
                      max_relative_difference(fresh.transform, c.stats.transform)});
  }
  return worst;
}

JACRun run_jac(JACState& state, int iterations, const JACOptions& options) {
  JACRun run;
  run.best_score = kNegInf;
  for (int it = 0; it < iterations; ++it) {
    gibbs_iteration(state, options);
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
