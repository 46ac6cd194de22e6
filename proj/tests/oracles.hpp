#pragma once

// Independent reference computations for the tests: numerical quadrature,
// a slice sampler, exhaustive set-partition enumeration and a brute-force
// grid maximiser. None of these share code with the library's closed forms.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <vector>

namespace oracle {

// Composite 20-point Gauss-Legendre rule on [a, b] split into panels.
inline double integrate(const std::function<double(double)>& f, double a, double b,
                        int panels = 200) {
  static const double x[10] = {0.0765265211334973, 0.2277858511416451, 0.3737060887154195,
                               0.5108670019508271, 0.6360536807265150, 0.7463319064601508,
                               0.8391169718222188, 0.9122344282513259, 0.9639719272779138,
                               0.9931285991850949};
  static const double w[10] = {0.1527533871307258, 0.1491729864726037, 0.1420961093183820,
                               0.1316886384491766, 0.1181945319615184, 0.1019301198172404,
                               0.0832767415767048, 0.0626720483341091, 0.0406014298003869,
                               0.0176140071391521};
  const double h = (b - a) / panels;
  double total = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double mid = a + (p + 0.5) * h;
    const double half = 0.5 * h;
    double s = 0.0;
    for (int k = 0; k < 10; ++k) s += w[k] * (f(mid - half * x[k]) + f(mid + half * x[k]));
    total += s * half;
  }
  return total;
}

inline double normal_pdf(double x, double mean, double var) {
  const double d = x - mean;
  return std::exp(-0.5 * d * d / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

// log int exp(logf(t)) dt over [a, b], shifted by the largest value on a
// probe grid so that very small integrands do not underflow.
inline double log_integrate(const std::function<double(double)>& logf, double a, double b,
                            int panels = 200) {
  double shift = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 4 * panels; ++i) shift = std::max(shift, logf(a + (b - a) * i / (4 * panels)));
  if (!std::isfinite(shift)) return shift;
  return shift + std::log(integrate([&](double t) { return std::exp(logf(t) - shift); }, a, b,
                                    panels));
}

inline double log_normal(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * d * d / var - 0.5 * std::log(2.0 * std::numbers::pi * var);
}

inline double log_inv_gamma(double v, double a, double b) {
  return a * std::log(b) - std::lgamma(a) - (a + 1.0) * std::log(v) - b / v;
}

// Beta-Bernoulli predictive of binary x after binary observations xs, as the
// ratio of two integrals over theta.
inline double log_bernoulli_predictive(int x, const std::vector<int>& xs, double a, double b) {
  // theta = logistic(2s) removes the endpoint singularities of Beta(a<1, b<1);
  // dtheta = 2 theta (1 - theta) ds.
  auto joint = [&](bool with_x) {
    return log_integrate(
        [&](double s) {
          const double lt = -std::log1p(std::exp(-2.0 * s));
          const double l1t = -std::log1p(std::exp(2.0 * s));
          double l = a * lt + b * l1t + std::log(2.0);
          for (int v : xs) l += v ? lt : l1t;
          if (with_x) l += x ? lt : l1t;
          return l;
        },
        -60.0, 60.0, 600);
  };
  return joint(true) - joint(false);
}

// Zero-mean Gaussian with an Inverse-Gamma(a, b) variance: predictive of x after
// observations xs, integrating over log variance.
inline double log_zero_mean_predictive(double x, const std::vector<double>& xs, double a,
                                       double b) {
  auto joint = [&](bool with_x) {
    return log_integrate(
        [&](double s) {
          const double v = std::exp(s);
          double l = log_inv_gamma(v, a, b) + s;
          for (double r : xs) l += log_normal(r, 0.0, v);
          if (with_x) l += log_normal(x, 0.0, v);
          return l;
        },
        -40.0, 25.0, 600);
  };
  return joint(true) - joint(false);
}

// log of the Normal-Inverse-Gamma(m, k, a, b) marginal likelihood of xs, as a
// nested integral over log v and mu.
inline double log_nig_marginal(const std::vector<double>& xs, double m, double k, double a,
                               double b) {
  // The integrand is Gaussian in mu; its centre only places the window.
  double prec = k, centre = k * m;
  for (double r : xs) {
    prec += 1.0;
    centre += r;
  }
  centre /= prec;
  return log_integrate(
      [&](double s) {
        const double v = std::exp(s);
        const double half = 15.0 * std::sqrt(v / prec);
        const double inner = log_integrate(
            [&](double mu) {
              double l = log_normal(mu, m, v / k);
              for (double r : xs) l += log_normal(r, mu, v);
              return l;
            },
            centre - half, centre + half, 30);
        return inner + log_inv_gamma(v, a, b) + s;
      },
      -30.0, 20.0, 150);
}

// Predictive of x after xs under the same prior, as a ratio of marginals.
inline double log_nig_predictive(double x, const std::vector<double>& xs, double m, double k,
                                 double a, double b) {
  std::vector<double> with = xs;
  with.push_back(x);
  return log_nig_marginal(with, m, k, a, b) - log_nig_marginal(xs, m, k, a, b);
}

// Maximiser of f over a uniform grid on [lo, hi].
inline double grid_argmax(const std::function<double(double)>& f, double lo, double hi, int n) {
  double best = lo, best_v = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= n; ++i) {
    const double t = lo + (hi - lo) * i / n;
    const double v = f(t);
    if (v > best_v) {
      best_v = v;
      best = t;
    }
  }
  return best;
}

// Univariate slice sampler (stepping out, shrinkage) on an unnormalised log density.
class SliceSampler {
 public:
  SliceSampler(std::function<double(double)> log_density, double x0, double width,
               std::uint64_t seed)
      : f_(std::move(log_density)), x_(x0), w_(width), rng_(seed) {}

  double next() {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double level = f_(x_) + std::log(u(rng_));
    double l = x_ - w_ * u(rng_);
    double r = l + w_;
    while (f_(l) > level) l -= w_;
    while (f_(r) > level) r += w_;
    for (;;) {
      const double c = l + (r - l) * u(rng_);
      if (f_(c) > level) {
        x_ = c;
        return x_;
      }
      (c < x_ ? l : r) = c;
    }
  }

 private:
  std::function<double(double)> f_;
  double x_;
  double w_;
  std::mt19937_64 rng_;
};

// All set partitions of {0..n-1} as restricted growth strings.
inline std::vector<std::vector<int>> set_partitions(int n) {
  std::vector<std::vector<int>> out;
  std::vector<int> a(n, 0);
  std::function<void(int, int)> rec = [&](int i, int max_label) {
    if (i == n) {
      out.push_back(a);
      return;
    }
    for (int v = 0; v <= max_label + 1; ++v) {
      a[i] = v;
      rec(i + 1, std::max(max_label, v));
    }
  };
  if (n == 0) return {{}};
  a[0] = 0;
  rec(1, 0);
  return out;
}

// Relabels a partition in order of first appearance.
inline std::vector<int> canonical_labels(const std::vector<int>& z) {
  std::map<int, int> m;
  std::vector<int> out;
  for (int v : z) {
    auto it = m.find(v);
    if (it == m.end()) it = m.emplace(v, static_cast<int>(m.size())).first;
    out.push_back(it->second);
  }
  return out;
}

}  // namespace oracle
