#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>

#include "families.hpp"
#include "oracles.hpp"
#include "tdpmix/data.hpp"
#include "tdpmix/jac.hpp"

using namespace tdpmix;

namespace {

ModelPtr shift_model(Hyperparams h = {}) {
  return std::make_shared<Model>(std::make_shared<testfam::Shift>(1.0), DataKind::curves, 1, h);
}

ModelPtr identity_model(std::size_t dim, DataKind kind, Hyperparams h = {}) {
  return std::make_shared<Model>(std::make_shared<IdentityFamily>(), kind, dim, h);
}

ModelPtr rotation_model() {
  return std::make_shared<Model>(std::make_shared<Rotation2D>(), DataKind::points2d, 2,
                                 Hyperparams{});
}

std::vector<DataItem> scalars(const std::vector<double>& v) {
  std::vector<DataItem> out;
  for (double x : v) out.push_back(make_curve({x}));
  return out;
}

// Places items according to labels (one cluster per distinct label).
void assign(JACState& s, const std::vector<int>& labels) {
  std::map<int, int> ids;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) continue;
    auto it = ids.find(labels[i]);
    const int target = it == ids.end() ? kNewCluster : it->second;
    const int id = add_item(s, i, target, s.rho[i], s.aligned[i]);
    ids[labels[i]] = id;
  }
}

std::vector<double> draws_ew(double gamma0, std::int64_t n, std::int64_t k, int count,
                             std::uint64_t seed) {
  Rng rng(seed);
  double g = gamma0;
  for (int i = 0; i < 1000; ++i) g = escobar_west_draw(g, n, k, 1.0, 1.0, rng);
  std::vector<double> out(count);
  for (double& v : out) v = g = escobar_west_draw(g, n, k, 1.0, 1.0, rng);
  return out;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

TEST_CASE("crp predictive example and seat frequencies") {
  auto model = shift_model();
  JACState s = make_jac_state(model, scalars({0, 0, 0, 0}), 1.0, 1, InitMode::unassigned);
  assign(s, {0, 0, 1, -1});
  const int a = s.z[0], b = s.z[2];
  CHECK(std::abs(std::exp(crp_log_prior(s, 3, a)) - 0.5) < 1e-15);
  CHECK(std::abs(std::exp(crp_log_prior(s, 3, b)) - 0.25) < 1e-15);
  CHECK(std::abs(std::exp(crp_log_prior(s, 3, kNewCluster)) - 0.25) < 1e-15);

  const std::vector<double> logs{crp_log_prior(s, 3, a), crp_log_prior(s, 3, b),
                                 crp_log_prior(s, 3, kNewCluster)};
  Rng rng(2);
  std::vector<int> seats(3, 0);
  const int n = 100000;
  for (int t = 0; t < n; ++t) ++seats[sample_log_categorical(logs, rng)];
  CHECK(std::abs(seats[0] / double(n) - 0.5) < 0.01);
  CHECK(std::abs(seats[1] / double(n) - 0.25) < 0.01);
  CHECK(std::abs(seats[2] / double(n) - 0.25) < 0.01);
}

TEST_CASE("crp predictive with gamma zero and normalisation") {
  auto model = shift_model();
  JACState s = make_jac_state(model, scalars({0, 0, 0, 0, 0}), 0.0, 1, InitMode::unassigned);
  assign(s, {0, 1, 1, 2, -1});
  CHECK(crp_log_prior(s, 4, kNewCluster) == -std::numeric_limits<double>::infinity());

  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const int n = 2 + static_cast<int>(rng() % 10);
    std::vector<int> labels(n);
    for (int& l : labels) l = static_cast<int>(rng() % 4);
    JACState r = make_jac_state(model, scalars(std::vector<double>(n, 0.0)),
                                sample_gamma(1.0, 1.0, rng), 4, InitMode::unassigned);
    assign(r, labels);
    const std::size_t i = rng() % n;
    remove_item(r, i);
    double total = std::exp(crp_log_prior(r, i, kNewCluster));
    for (const auto& [id, c] : r.clusters) total += std::exp(crp_log_prior(r, i, id));
    CHECK(std::abs(total - 1.0) < 1e-12);
    // Asking about an item still assigned must discount it from its own cluster.
    add_item(r, i, r.clusters.begin()->first, r.rho[i], r.aligned[i]);
    double again = std::exp(crp_log_prior(r, i, kNewCluster));
    for (const auto& [id, c] : r.clusters) again += std::exp(crp_log_prior(r, i, id));
    CHECK(std::abs(again - 1.0) < 1e-12);
  }
}

TEST_CASE("escobar-west draws match a slice-sampling oracle") {
  struct Case {
    std::int64_t k, n;
  };
  for (const Case c : {Case{1, 1}, Case{3, 20}, Case{8, 100}}) {
    const std::vector<double> draws = draws_ew(1.0, c.n, c.k, 100000, 5 + c.k);
    for (double g : draws) REQUIRE(g > 0.0);
    // p(gamma | K, N) under Gamma(1, 1).
    auto logp = [&](double g) {
      if (g <= 0.0) return -std::numeric_limits<double>::infinity();
      return -g + c.k * std::log(g) + std::lgamma(g) - std::lgamma(g + c.n);
    };
    oracle::SliceSampler slice(logp, 1.0, 1.0, 17 + c.k);
    for (int i = 0; i < 1000; ++i) slice.next();
    double oracle_sum = 0.0;
    for (int i = 0; i < 100000; ++i) oracle_sum += slice.next();
    const double target = oracle_sum / 100000;
    MESSAGE("K=" << c.k << " N=" << c.n << " mean " << mean(draws) << " oracle " << target);
    CHECK(std::abs(mean(draws) - target) / target <= 0.02);
  }
}

TEST_CASE("more clusters shift the concentration draw upward") {
  std::vector<double> k2 = draws_ew(1.0, 100, 2, 100000, 21);
  std::vector<double> k20 = draws_ew(1.0, 100, 20, 100000, 22);
  std::sort(k2.begin(), k2.end());
  std::sort(k20.begin(), k20.end());
  for (int q = 1; q < 100; ++q) {
    const std::size_t at = k2.size() * q / 100;
    CHECK(k20[at] > k2[at]);
  }
}

TEST_CASE("importance-sampled marginal matches quadrature") {
  auto model = shift_model();
  struct Case {
    double x, m, vd, vt;
  };
  for (const Case c : {Case{0.4, 0.0, 0.3, 1.0}, Case{-1.2, 0.5, 0.2, 0.5},
                       Case{2.0, 1.0, 1.0, 2.0}}) {
    const GaussianMode dm({c.m}, {c.vd});
    const ZeroMeanGaussianMode tm({c.vt});
    ClusterTerms t{0, 0.0, nullptr, nullptr};
    DataMode data_mode = dm;
    t.data_mode = &data_mode;
    t.transform_mode = &tm;
    const double exact = std::log(oracle::integrate(
        [&](double r) {
          return oracle::normal_pdf(r, 0.0, c.vt) * oracle::normal_pdf(c.x - r, c.m, c.vd);
        },
        -30, 30, 400));
    // The local proposal component sits where a previous E-step leaves rho: at
    // the posterior mode of rho for this cluster.
    const Proposal q{{c.vt / (c.vt + c.vd) * (c.x - c.m)}, {c.vt}};
    // The error bound applies to the estimator, so it is checked on the median
    // of independent repetitions.
    for (const auto& [L, tol] : {std::pair{10000, 0.05}, std::pair{100, 0.20}}) {
      std::vector<double> errors;
      for (int rep = 0; rep < 21; ++rep) {
        Rng rng(derive_seed(31 + L, rep));
        const auto samples = draw_proposals(*model, make_curve({c.x}), q, L, rng);
        const ClusterTerms targets[] = {t};
        const double est = importance_log_marginals(samples, targets)[0];
        errors.push_back(std::abs(std::exp(est - exact) - 1.0));
      }
      std::nth_element(errors.begin(), errors.begin() + 10, errors.end());
      MESSAGE("x=" << c.x << " L=" << L << " median relative error " << errors[10]);
      CHECK(errors[10] <= tol);
    }
  }
}

TEST_CASE("single proposal reduces to a weighted data term") {
  auto model = shift_model();
  const GaussianMode dm({0.1}, {0.4});
  DataMode data_mode = dm;
  const ZeroMeanGaussianMode tm({0.7});
  ClusterTerms t{0, 0.0, &data_mode, &tm};
  Rng rng(40);
  const auto samples = draw_proposals(*model, make_curve({0.9}), Proposal{{0.0}, {0.7}}, 1, rng);
  const ClusterTerms targets[] = {t};
  const double est = importance_log_marginals(samples, targets)[0];
  CHECK(std::abs(est - dm.log_density(samples[0].y)) < 1e-12);
}

TEST_CASE("sampler 2 transforms each item exactly L times") {
  auto model = shift_model();
  for (int k : {1, 5}) {
    std::vector<int> labels(10);
    for (int i = 0; i < 10; ++i) labels[i] = i % k;
    JACState s = make_jac_state(model, scalars({0, 1, 2, 3, 4, 5, 6, 7, 8, 9}), 1.0, 41,
                                InitMode::unassigned);
    assign(s, labels);
    JACOptions opt;
    opt.L = 37;
    for (std::size_t i = 0; i < 10; ++i) {
      model->reset_transform_calls();
      sampler2_step(s, i, opt);
      CHECK(model->transform_calls() == 37u);
    }
  }
}

TEST_CASE("identity-family sampler 2 matches the enumerated partition posterior") {
  const std::vector<double> xs{0.0, 0.3, 0.5, 1.0, 1.3, 2.0};
  const int n = static_cast<int>(xs.size());
  Hyperparams h;
  auto model = identity_model(1, DataKind::curves, h);
  const double gamma = 1.0;
  const GaussianPrior& g = h.gaussian;

  std::map<unsigned, double> block;
  auto block_marginal = [&](unsigned mask) {
    auto it = block.find(mask);
    if (it != block.end()) return it->second;
    std::vector<double> v;
    for (int i = 0; i < n; ++i) {
      if (mask >> i & 1u) v.push_back(xs[i]);
    }
    const double m = oracle::log_nig_marginal(v, g.mu0, g.kappa0, g.a0, g.b0);
    block.emplace(mask, m);
    return m;
  };
  std::map<std::vector<int>, double> exact;
  std::vector<double> logs;
  const auto parts = oracle::set_partitions(n);
  for (const auto& p : parts) {
    const int k = *std::max_element(p.begin(), p.end()) + 1;
    double l = k * std::log(gamma) + std::lgamma(gamma) - std::lgamma(gamma + n);
    for (int b = 0; b < k; ++b) {
      unsigned mask = 0;
      for (int i = 0; i < n; ++i) {
        if (p[i] == b) mask |= 1u << i;
      }
      l += std::lgamma(static_cast<double>(std::popcount(mask))) + block_marginal(mask);
    }
    logs.push_back(l);
  }
  const double norm = log_sum_exp(logs);
  for (std::size_t j = 0; j < parts.size(); ++j) exact[parts[j]] = std::exp(logs[j] - norm);

  JACState s = make_jac_state(model, scalars(xs), gamma, 43);
  JACOptions opt;
  opt.resample_gamma = false;
  opt.validate = false;
  for (int t = 0; t < 200; ++t) gibbs_iteration(s, opt);
  std::map<std::vector<int>, double> freq;
  const int sweeps = 100000;
  for (int t = 0; t < sweeps; ++t) {
    gibbs_iteration(s, opt);
    freq[oracle::canonical_labels(s.z)] += 1.0 / sweeps;
  }
  double tv = 0.0;
  for (const auto& [p, pr] : exact) tv += std::abs(pr - (freq.contains(p) ? freq[p] : 0.0));
  tv *= 0.5;
  MESSAGE("total variation " << tv);
  CHECK(tv <= 0.05);
  CHECK(jac_validate(s) <= 1e-9);
}

TEST_CASE("far-separated blobs are co-clustered") {
  Rng rng(50);
  std::vector<DataItem> items;
  std::vector<int> truth;
  for (int i = 0; i < 12; ++i) {
    const double cx = i < 6 ? -5.0 : 5.0;
    items.push_back(make_point(cx + sample_normal(0, 0.3, rng), sample_normal(0, 0.3, rng)));
    truth.push_back(i < 6 ? 0 : 1);
  }
  JACState s = make_jac_state(identity_model(2, DataKind::points2d), items, 1.0, 51);
  for (int t = 0; t < 50; ++t) gibbs_iteration(s);
  int agree = 0, total = 0;
  for (int t = 0; t < 100; ++t) {
    gibbs_iteration(s);
    for (std::size_t i = 0; i < items.size(); ++i) {
      for (std::size_t j = i + 1; j < items.size(); ++j) {
        agree += (truth[i] == truth[j]) == (s.z[i] == s.z[j]);
        ++total;
      }
    }
  }
  CHECK(static_cast<double>(agree) / total >= 0.95);
}

TEST_CASE("both samplers keep partitions and statistics consistent") {
  const Dataset d = synth_points2d({{1.0, 0.0, 0.4, 0.05, 15}, {3.0, 1.5, 0.4, 0.05, 15}}, 60);
  for (int sampler : {1, 2}) {
    JACState s = make_jac_state(rotation_model(), d.items, 1.0, 61);
    JACOptions opt;
    opt.sampler = sampler;
    for (int t = 0; t < 5; ++t) {
      gibbs_iteration(s, opt);
      CHECK(jac_validate(s) <= 1e-9);
      CHECK(s.total_members() == static_cast<std::int64_t>(d.size()));
      CHECK(s.gamma > 0.0);
      for (int id : s.z) CHECK(s.clusters.contains(id));
      for (const auto& [id, c] : s.clusters) CHECK(c.member_count > 0);
    }
  }
}

TEST_CASE("runs are deterministic for a fixed seed") {
  const Dataset d = synth_points2d({{1.0, 0.0, 0.4, 0.05, 10}, {3.0, 1.5, 0.4, 0.05, 10}}, 62);
  for (int sampler : {1, 2}) {
    JACOptions opt;
    opt.sampler = sampler;
    JACState a = make_jac_state(rotation_model(), d.items, 1.0, 63);
    JACState b = make_jac_state(rotation_model(), d.items, 1.0, 63);
    const JACRun ra = run_jac(a, 4, opt), rb = run_jac(b, 4, opt);
    CHECK(a.z == b.z);
    CHECK(a.rho == b.rho);
    CHECK(a.gamma == b.gamma);
    CHECK(ra.best_z == rb.best_z);
    REQUIRE(ra.trace.size() == rb.trace.size());
    for (std::size_t t = 0; t < ra.trace.size(); ++t) {
      CHECK(ra.trace[t].joint_score == rb.trace[t].joint_score);
    }
  }
}

TEST_CASE("edge cases: one item, no items, gamma zero") {
  for (int sampler : {1, 2}) {
    JACOptions opt;
    opt.sampler = sampler;
    JACState one = make_jac_state(rotation_model(), {make_point(1, 2)}, 1.0, 70,
                                  InitMode::unassigned);
    gibbs_iteration(one, opt);
    CHECK(one.cluster_count() == 1);
    CHECK(one.z[0] == one.clusters.begin()->first);

    JACState none = make_jac_state(rotation_model(), {}, 1.0, 71);
    gibbs_iteration(none, opt);
    CHECK(none.cluster_count() == 0);
    CHECK(none.gamma == 1.0);

    const Dataset d = synth_points2d({{1.0, 0.0, 0.4, 0.05, 8}, {3.0, 1.5, 0.4, 0.05, 8}}, 72);
    JACState zero = make_jac_state(rotation_model(), d.items, 0.0, 73);
    for (int t = 0; t < 4; ++t) {
      gibbs_iteration(zero, opt);
      CHECK(zero.cluster_count() == 1);
      CHECK(zero.gamma == 0.0);
    }
  }
  CHECK_THROWS_AS(make_jac_state(rotation_model(), {}, -1.0, 1), DomainError);
  JACState s = make_jac_state(rotation_model(), {make_point(1, 0)}, 1.0, 1);
  JACOptions bad;
  bad.sampler = 3;
  CHECK_THROWS_AS(gibbs_iteration(s, bad), ConfigError);
}

TEST_CASE("seeding places labelled items and keeps cluster count fixed at gamma zero") {
  const std::vector<double> xs{0.0, 0.1, 3.0, 0.05, 2.9, 3.1, -0.1, 3.05};
  for (int r : {1, 3}) {
    JACState s = make_jac_state(shift_model(), scalars(xs), 0.0, 80);
    seed_clusters(s, {{0, 4}, {1, 4}, {2, 9}}, r);
    REQUIRE(s.cluster_count() == 2);
    const Cluster& four = s.clusters.at(s.z[0]);
    const Cluster& nine = s.clusters.at(s.z[2]);
    CHECK(four.locked);
    CHECK(nine.locked);
    CHECK(four.stats.data.count() == 2 * r);
    CHECK(nine.stats.data.count() == r);
    CHECK(four.member_count == 2);
    CHECK(s.items.size() == xs.size());
    for (std::size_t i = 3; i < xs.size(); ++i) CHECK(s.z[i] == kUnassigned);
    CHECK(jac_validate(s) <= 1e-9);

    for (int t = 0; t < 5; ++t) {
      gibbs_iteration(s);
      CHECK(s.cluster_count() == 2);
      CHECK(s.z[0] == four.id);
      CHECK(s.z[2] == nine.id);
    }
    CHECK(s.z[3] == four.id);
    CHECK(s.z[4] == nine.id);
  }
  JACState s = make_jac_state(shift_model(), scalars(xs), 0.0, 81);
  CHECK_THROWS_AS(seed_clusters(s, {{0, 1}}, 0), DomainError);
  CHECK_THROWS_AS(seed_clusters(s, {{0, 1}, {0, 2}}, 1), DomainError);
  CHECK_THROWS_AS(seed_clusters(s, {{99, 1}}, 1), DomainError);
}
