#pragma once

// Population dynamics for the min-sum density evolution, the conditioned
// branching-random-walk recursion, and empirical drift estimation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <stdexcept>
#include <utility>
#include <variant>
#include <vector>

#include "shuffled/model.hpp"
#include "shuffled/random.hpp"
#include "shuffled/theory.hpp"

namespace shuffled::evolution {

using theory::Spectrum;

/// Empirical law of the message variable H.
struct Population {
  std::vector<double> samples;

  static Population zeros(std::size_t size) { return {std::vector<double>(size, 0.0)}; }

  std::size_t size() const { return samples.size(); }
  double mean() const {
    double s = 0.0;
    for (double v : samples) s += v;
    return s / double(samples.size());
  }
  void validate() const {
    if (samples.empty()) throw std::invalid_argument("Population: must be non-empty");
    for (double v : samples)
      if (!std::isfinite(v)) throw std::invalid_argument("Population: samples must be finite");
  }
  double draw(Rng& rng) const { return samples[rng.index(samples.size())]; }
};

/// One draw of the oracle Xi in rotated coordinates,
///   Xi = sum_i l_i^2 x_i (x_i - y_i) + sigma sum_i l_i w_i (x_i - y_i),
/// with x, y, w independent standard normals (3 rank draws).
inline double sample_xi_oracle(const Spectrum& spec, double sigma, Rng& rng) {
  double xi = 0.0;
  for (double lam : spec.values()) {
    const double x = rng.normal(), y = rng.normal(), w = rng.normal();
    xi += lam * lam * x * (x - y) + sigma * lam * w * (x - y);
  }
  return xi;
}

/// Oracle edge-weight laws, sampled exactly through chi-square mixtures over
/// the distinct singular values (cost independent of the multiplicities):
///   true edge   Omega     = -(x^T B B^T x + sigma w^T B^T x)
///   false edge  Omega_hat = -(x^T B B^T y + sigma w^T B^T y)
///   Xi = Omega_hat - Omega (a coupled pair on shared x, w)
class OracleEdges {
 public:
  OracleEdges(const Spectrum& spec, double sigma) : spec_(spec), sigma_(sigma) {
    if (!(sigma >= 0.0)) throw std::invalid_argument("OracleEdges: sigma must be non-negative");
    std::map<double, int> counts;
    for (double v : spec.values()) ++counts[v];
    for (auto [lam, k] : counts) {
      Group g;
      g.dof = k;
      const double l2 = lam * lam, s2 = sigma * sigma;
      // lam x (lam x + sigma w) = lam * (bilinear form with eigenvalues (lam +- sqrt(lam^2 + s2)) / 2)
      const double r1 = std::sqrt(l2 + s2);
      g.true_pos = lam * 0.5 * (lam + r1);
      g.true_neg = lam * 0.5 * (lam - r1);
      // lam (x - y)(lam x + sigma w): eigenvalues (lam +- sqrt(2 (lam^2 + s2))) / 2
      const double r2 = std::sqrt(2.0 * (l2 + s2));
      g.xi_pos = lam * 0.5 * (lam + r2);
      g.xi_neg = lam * 0.5 * (lam - r2);
      // Omega_hat | x, w ~ N(0, sum l^2 (l x + sigma w)^2)
      g.false_var = l2 * (l2 + s2);
      groups_.push_back(g);
    }
  }

  const Spectrum& spectrum() const { return spec_; }
  double sigma() const { return sigma_; }

  double sample_true(Rng& rng) const {
    double s = 0.0;
    for (const auto& g : groups_)
      s += g.true_pos * rng.chi_squared(g.dof) + g.true_neg * rng.chi_squared(g.dof);
    return -s;
  }
  double sample_false(Rng& rng) const {
    double q = 0.0;
    for (const auto& g : groups_) q += g.false_var * rng.chi_squared(g.dof);
    return -std::sqrt(q) * rng.normal();
  }
  double sample_xi(Rng& rng) const {
    double s = 0.0;
    for (const auto& g : groups_)
      s += g.xi_pos * rng.chi_squared(g.dof) + g.xi_neg * rng.chi_squared(g.dof);
    return s;
  }

 private:
  struct Group {
    int dof = 0;
    double true_pos = 0, true_neg = 0, xi_pos = 0, xi_neg = 0, false_var = 0;
  };
  Spectrum spec_;
  double sigma_;
  std::vector<Group> groups_;
};

/// Xi = Y_i Y^T X (X_{pi(i)} - X_j)^T for a given instance and rows i, j.
inline double nonoracle_xi(const Instance& inst, int i, int j) {
  const Vector d = (inst.X.row(inst.pi[i]) - inst.X.row(j)).transpose();
  const Vector Xd = inst.X * d;
  const Vector YtXd = inst.Y.transpose() * Xd;
  return inst.Y.row(i).dot(YtXd);
}

/// Non-oracle cost entry C_ij = -Y_i Y^T X X_j^T without forming C.
inline double nonoracle_edge(const Instance& inst, int i, int j) {
  const Vector Xxj = inst.X * inst.X.row(j).transpose();
  return -inst.Y.row(i).dot(inst.Y.transpose() * Xxj);
}

/// Non-oracle edge weights measured on freshly generated instances.
class NonOracleEmpirical {
 public:
  NonOracleEmpirical(Dimensions dims, SignalSpec signal, double sigma,
                     DesignDistribution design = {})
      : dims_(dims), signal_(std::move(signal)), noise_(NoiseSpec::from_sigma(sigma)),
        design_(design) {
    dims_.validate();
  }

  Instance draw_instance(Rng& rng) const {
    return generate_instance(dims_, signal_, noise_, design_, rng);
  }
  double sample_true(Rng& rng) const {
    const auto inst = draw_instance(rng);
    const int i = int(rng.index(std::size_t(dims_.n)));
    return nonoracle_edge(inst, i, inst.pi[i]);
  }
  double sample_false(Rng& rng) const {
    const auto inst = draw_instance(rng);
    const int i = int(rng.index(std::size_t(dims_.n)));
    int j = int(rng.index(std::size_t(dims_.n - 1)));
    if (j >= inst.pi[i]) ++j;
    return nonoracle_edge(inst, i, j);
  }
  /// i and j uniform and independent; j == pi(i) is kept.
  double sample_xi(Rng& rng) const {
    const auto inst = draw_instance(rng);
    const int i = int(rng.index(std::size_t(dims_.n)));
    const int j = int(rng.index(std::size_t(dims_.n)));
    return nonoracle_xi(inst, i, j);
  }

 private:
  Dimensions dims_;
  SignalSpec signal_;
  NoiseSpec noise_;
  DesignDistribution design_;
};

/// Point masses Omega = omega, Omega_hat = omega_hat; for checking the
/// recursions by hand.
struct DeterministicEdges {
  double omega = 0.0;
  double omega_hat = 0.0;
  double sample_true(Rng&) const { return omega; }
  double sample_false(Rng&) const { return omega_hat; }
  double sample_xi(Rng&) const { return omega_hat - omega; }
};

/// Edge-weight law feeding the recursions.
class EdgeWeightSampler {
 public:
  EdgeWeightSampler(DeterministicEdges e) : impl_(e) {}             // NOLINT
  EdgeWeightSampler(OracleEdges e) : impl_(std::move(e)) {}         // NOLINT
  EdgeWeightSampler(NonOracleEmpirical e) : impl_(std::move(e)) {}  // NOLINT

  double sample_true(Rng& rng) const {
    return std::visit([&](const auto& s) { return s.sample_true(rng); }, impl_);
  }
  double sample_false(Rng& rng) const {
    return std::visit([&](const auto& s) { return s.sample_false(rng); }, impl_);
  }
  double sample_xi(Rng& rng) const {
    return std::visit([&](const auto& s) { return s.sample_xi(rng); }, impl_);
  }

 private:
  std::variant<OracleEdges, NonOracleEmpirical, DeterministicEdges> impl_;
};

/// Density evolution by population dynamics:
///   Hhat = min(Omega - H, H'),   H_new = min_{1 <= i <= n-1} (Omega_hat_i - Hhat_i)
/// with H, H' resampled (with replacement) from the current population.
/// Sample k of iteration t uses its own stream derived from one base seed
/// drawn from `rng` per iteration, so results do not depend on `threads`.
inline Population de_iterate(Population pop, const EdgeWeightSampler& sampler, int n, int iters,
                             Rng& rng, unsigned threads = 1) {
  pop.validate();
  if (n < 2) throw std::invalid_argument("de_iterate: n must be >= 2");
  if (iters < 0) throw std::invalid_argument("de_iterate: iters must be >= 0");
  std::vector<double> next(pop.size());
  for (int t = 0; t < iters; ++t) {
    const std::uint64_t base = rng.engine()();
    parallel_for(pop.size(), threads, [&](std::size_t k) {
      Rng local(derive_seed(base, {k}));
      double best = std::numeric_limits<double>::infinity();
      for (int i = 0; i < n - 1; ++i) {
        const double h_hat = std::min(sampler.sample_true(local) - pop.draw(local), pop.draw(local));
        best = std::min(best, sampler.sample_false(local) - h_hat);
      }
      next[k] = best;
    });
    pop.samples.swap(next);
  }
  return pop;
}

/// Conditioned recursion H_new = min_{1 <= i <= n-1} (H_i + Xi_i).
inline Population brw_iterate(Population pop, const EdgeWeightSampler& sampler, int n, int iters,
                              Rng& rng, unsigned threads = 1) {
  pop.validate();
  if (n < 2) throw std::invalid_argument("brw_iterate: n must be >= 2");
  std::vector<double> next(pop.size());
  for (int t = 0; t < iters; ++t) {
    const std::uint64_t base = rng.engine()();
    parallel_for(pop.size(), threads, [&](std::size_t k) {
      Rng local(derive_seed(base, {k}));
      double best = std::numeric_limits<double>::infinity();
      for (int i = 0; i < n - 1; ++i) best = std::min(best, pop.draw(local) + sampler.sample_xi(local));
      next[k] = best;
    });
    pop.samples.swap(next);
  }
  return pop;
}

/// Fraction of probes with H + H' > Omega (the true edge gets selected).
inline double recovery_probability(const Population& pop, const EdgeWeightSampler& sampler,
                                   int probes, Rng& rng) {
  pop.validate();
  if (probes < 1) throw std::invalid_argument("recovery_probability: probes must be >= 1");
  int hits = 0;
  for (int k = 0; k < probes; ++k) {
    const double h1 = pop.draw(rng), h2 = pop.draw(rng);
    hits += h1 + h2 > sampler.sample_true(rng);
  }
  return double(hits) / probes;
}

/// 200 log-spaced points on [1e-4, theta_max], theta_max = 700 / max|Xi|
/// (the largest theta at which no exp(-theta Xi) can overflow).
inline std::vector<double> default_theta_grid(std::span<const double> xi, int points = 200) {
  double amax = 0.0;
  for (double v : xi) amax = std::max(amax, std::abs(v));
  double hi = amax > 0.0 ? 700.0 / amax : 1e4;
  double lo = 1e-4;
  if (!(hi > lo)) lo = hi * 1e-3;
  std::vector<double> grid(static_cast<std::size_t>(points));
  for (int k = 0; k < points; ++k)
    grid[std::size_t(k)] = std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * k / (points - 1));
  return grid;
}

/// log( mean_k exp(-theta xi_k) ) with max-shift normalization.
inline double empirical_log_mgf(std::span<const double> xi, double theta) {
  double shift = -std::numeric_limits<double>::infinity();
  for (double v : xi) shift = std::max(shift, -theta * v);
  double acc = 0.0;
  for (double v : xi) acc += std::exp(-theta * v - shift);
  return shift + std::log(acc / double(xi.size()));
}

inline constexpr std::size_t kMinDriftSamples = 10000;

/// min over the grid of (1/theta)(log n + log mean exp(-theta Xi)).
/// Returns +infinity if no grid point yields a finite value (for instance
/// when a sample is -infinity).
inline double empirical_drift(std::span<const double> xi, int n, std::span<const double> theta_grid) {
  if (xi.size() < kMinDriftSamples)
    throw std::invalid_argument("empirical_drift: need at least 1e4 samples");
  if (n < 2) throw std::invalid_argument("empirical_drift: n must be >= 2");
  const double logn = std::log(double(n));
  double best = std::numeric_limits<double>::infinity();
  for (double theta : theta_grid) {
    if (!(theta > 0.0)) throw std::invalid_argument("empirical_drift: theta must be positive");
    const double v = (logn + empirical_log_mgf(xi, theta)) / theta;
    if (std::isfinite(v)) best = std::min(best, v);
  }
  return best;
}

inline double empirical_drift(std::span<const double> xi, int n) {
  const auto grid = default_theta_grid(xi);
  return empirical_drift(xi, n, grid);
}

/// `count` oracle Xi draws via the chi-square route; draw k uses its own
/// counter-derived stream.
inline std::vector<double> sample_xi_batch(const OracleEdges& edges, std::size_t count,
                                           std::uint64_t seed, unsigned threads = 1) {
  std::vector<double> out(count);
  constexpr std::size_t kBlock = 4096;
  const std::size_t blocks = (count + kBlock - 1) / kBlock;
  parallel_for(blocks, threads, [&](std::size_t b) {
    Rng local(derive_seed(seed, {b}));
    for (std::size_t k = b * kBlock; k < std::min(count, (b + 1) * kBlock); ++k)
      out[k] = edges.sample_xi(local);
  });
  return out;
}

}  // namespace shuffled::evolution
