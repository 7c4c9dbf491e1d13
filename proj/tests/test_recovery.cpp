#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "shuffled/recovery.hpp"
#include "shuffled/theory.hpp"

using namespace shuffled;

namespace {

Permutation brute_argmin(const lap::CostMatrix& C) {
  const int n = C.size();
  Permutation perm(n), best;
  std::iota(perm.begin(), perm.end(), 0);
  double b = INFINITY;
  do {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += C(i, perm[i]);
    if (s < b) {
      b = s;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

Instance make(const Dimensions& d, const SignalSpec& s, const NoiseSpec& noise, std::uint64_t seed) {
  Rng rng(seed);
  return generate_instance(d, s, noise, DesignDistribution::gaussian(), rng);
}

}  // namespace

TEST_CASE("oracle cost entries", "[recovery]") {
  const Instance inst = make({6, 3, 4, 6}, signal::GaussianIID{}, NoiseSpec::from_sigma(0.5), 21);
  const auto C = oracle_cost(inst);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) {
      const double direct = -inst.Y.row(i).dot(inst.B.transpose() * inst.X.row(j).transpose());
      REQUIRE(C(i, j) == Catch::Approx(direct).margin(1e-12));
    }
}

TEST_CASE("non-oracle cost entries, m = 1", "[recovery]") {
  const Instance inst = make({7, 1, 3, 7}, signal::GaussianIID{}, NoiseSpec::from_sigma(0.3), 22);
  const auto C = nonoracle_cost(inst);
  // C_ij = -y_i * sum_k y_k <X_k, X_j>
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 7; ++j) {
      double s = 0.0;
      for (int k = 0; k < 7; ++k) s += inst.Y(k, 0) * inst.X.row(k).dot(inst.X.row(j));
      REQUIRE(C(i, j) == Catch::Approx(-inst.Y(i, 0) * s).margin(1e-10));
    }
}

TEST_CASE("noiseless identity-permutation costs recover the identity", "[recovery]") {
  int confirmed = 0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const Instance inst = make({5, 5, 5, 0}, signal::Identity{}, NoiseSpec::noiseless(), seed);
    const auto Co = oracle_cost(inst);
    const auto Cn = nonoracle_cost(inst);
    const Permutation id{0, 1, 2, 3, 4};
    if (brute_argmin(Co) == id && brute_argmin(Cn) == id) {
      ++confirmed;
      CHECK(*recover(inst, RecoveryMode::Oracle, ExactSolver{}) == id);
      CHECK(*recover(inst, RecoveryMode::NonOracle, ExactSolver{}) == id);
    }
    // oracle cost argmin always agrees with brute force
    CHECK(*recover(inst, RecoveryMode::Oracle, ExactSolver{}) == brute_argmin(Co));
  }
  CHECK(confirmed > 0);
}

TEST_CASE("scaling Y scales the cost and keeps the argmin", "[recovery]") {
  Instance inst = make({8, 3, 3, 8}, signal::Identity{}, NoiseSpec::from_sigma(0.2), 23);
  const auto C = oracle_cost(inst);
  const auto base = *recover(inst, RecoveryMode::Oracle, ExactSolver{});
  inst.Y *= 3.5;
  const auto C2 = oracle_cost(inst);
  CHECK(C2.values().isApprox(3.5 * C.values()));
  CHECK(*recover(inst, RecoveryMode::Oracle, ExactSolver{}) == base);
}

TEST_CASE("zero signal gives a degenerate cost without crashing", "[recovery]") {
  Instance inst = make({5, 2, 2, 5}, signal::Identity{}, NoiseSpec::noiseless(), 24);
  inst.B.setZero();
  inst.Y.setZero();
  const auto C = nonoracle_cost(inst);
  CHECK(C.values().isZero());
  CHECK_NOTHROW(recover(inst, RecoveryMode::NonOracle, MpSolver{}));
  CHECK_NOTHROW(recover(inst, RecoveryMode::NonOracle, ExactSolver{}));
}

TEST_CASE("strong signal, noiseless oracle recovery", "[recovery]") {
  RecoveryExperiment e;
  e.dims = {20, 20, 20, 20};
  e.signal = signal::ScaledIdentity{5.0};
  e.noise = NoiseSpec::noiseless();
  CHECK(full_recovery_error_rate(e, 100, 31) <= 0.01);
  e.dims = {2, 3, 3, 2};
  CHECK(full_recovery_error_rate(e, 50, 32) == 0.0);
}

TEST_CASE("far below threshold recovery fails", "[recovery]") {
  RecoveryExperiment e;
  e.dims = {500, 20, 20, 500};
  e.signal = signal::ScaledIdentity{1.0};
  const double pred = theory::oracle_snr_threshold(500, 20, 1.0 / 20);
  e.noise = NoiseSpec::from_snr(0.1 * pred);
  CHECK(full_recovery_error_rate(e, 100, 33) >= 0.95);
}

TEST_CASE("error rate is monotone in snr on matched seeds", "[recovery]") {
  RecoveryExperiment e;
  e.dims = {200, 50, 50, 200};
  const double s1 = 0.25;
  e.noise = NoiseSpec::from_snr(s1);
  const double r1 = full_recovery_error_rate(e, 100, 34);
  e.noise = NoiseSpec::from_snr(4 * s1);
  const double r4 = full_recovery_error_rate(e, 100, 34);
  const double slack = 2.0 * std::sqrt(0.25 / 100);
  CHECK(r1 + slack >= r4);
  CHECK(r1 >= 0.0);
  CHECK(r4 <= 1.0);
}

TEST_CASE("error rate does not depend on thread count", "[recovery]") {
  RecoveryExperiment e;
  e.dims = {60, 10, 10, 60};
  e.noise = NoiseSpec::from_snr(0.8);
  const double a = full_recovery_error_rate(e, 40, 35, 1);
  const double b = full_recovery_error_rate(e, 40, 35, 4);
  CHECK(a == b);
}

TEST_CASE("scaling B and sigma together leaves outcomes unchanged", "[recovery]") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Dimensions d{30, 6, 6, 30};
    const Instance a = make(d, signal::ScaledIdentity{1.0}, NoiseSpec::from_sigma(0.4), seed);
    const Instance b = make(d, signal::ScaledIdentity{3.0}, NoiseSpec::from_sigma(1.2), seed);
    CHECK(snr_of(a.B, 6, a.sigma) == Catch::Approx(snr_of(b.B, 6, b.sigma)));
    CHECK(*recover(a, RecoveryMode::Oracle, ExactSolver{}) == *recover(b, RecoveryMode::Oracle, ExactSolver{}));
  }
}

TEST_CASE("n = 2 swap with a huge signal", "[recovery]") {
  const Instance inst = make({2, 4, 4, 2}, signal::ScaledIdentity{100.0}, NoiseSpec::from_sigma(0.01), 36);
  CHECK(inst.pi == Permutation{1, 0});
  CHECK(*recover(inst, RecoveryMode::Oracle, ExactSolver{}) == Permutation{1, 0});
}

TEST_CASE("find_threshold on a synthetic step", "[recovery]") {
  ThresholdSearchConfig cfg;
  cfg.lower = 0.0;
  cfg.upper = 1.0;
  cfg.epsilon = 1e-3;
  cfg.repeats = 3;
  const auto est = find_threshold(cfg, [](double snr) { return snr < 0.5 ? 1.0 : 0.0; });
  // the +-eps nudges leave the last midpoint up to about 3 eps from the step
  CHECK(std::abs(est.mean - 0.5) <= 3e-3);
  CHECK(est.std == Catch::Approx(0.0).margin(1e-12));
  CHECK(est.per_repeat.size() == 3);
  CHECK(est.lower_rate == 1.0);
  CHECK(est.upper_rate == 0.0);
}

TEST_CASE("find_threshold probe count", "[recovery]") {
  ThresholdSearchConfig cfg;
  cfg.epsilon = 1e-4;
  cfg.repeats = 1;
  for (double step : {0.1, 0.37, 0.5, 0.93}) {
    const auto est = find_threshold(cfg, [step](double snr) { return snr < step ? 1.0 : 0.0; });
    CHECK(est.probes_used <= 14);
  }
}

TEST_CASE("find_threshold rejects a bad bracket", "[recovery]") {
  ThresholdSearchConfig cfg;
  cfg.repeats = 1;
  CHECK_THROWS_AS(find_threshold(cfg, [](double) { return 1.0; }), BracketError);
  CHECK_THROWS_AS(find_threshold(cfg, [](double) { return 0.0; }), BracketError);
  try {
    find_threshold(cfg, [](double) { return 0.5; });
  } catch (const BracketError& b) {
    CHECK(b.lower_rate == 0.5);
    CHECK(b.upper_rate == 0.5);
  }
  cfg.upper = -1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.epsilon = 2.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("find_threshold aggregates mean and sample std", "[recovery]") {
  ThresholdSearchConfig cfg;
  cfg.repeats = 2;
  cfg.epsilon = 1e-3;
  // step position depends on the repeat
  const auto est = find_threshold(cfg, [](double snr, ProbeIndex idx) {
    const double step = idx.repeat == ProbeIndex::kBracketRepeat ? 0.5 : (idx.repeat == 0 ? 0.3 : 0.7);
    return snr < step ? 1.0 : 0.0;
  });
  REQUIRE(est.per_repeat.size() == 2);
  const double a = est.per_repeat[0], b = est.per_repeat[1];
  CHECK(est.mean == Catch::Approx((a + b) / 2));
  CHECK(est.std == Catch::Approx(std::abs(a - b) / std::sqrt(2.0)));
}

TEST_CASE("snr experiment closure is deterministic per probe index", "[recovery]") {
  RecoveryExperiment e;
  e.dims = {40, 8, 8, 40};
  auto f = snr_error_rate_experiment(e, 20, 99);
  const double a = f(0.5, ProbeIndex{0, 3});
  const double b = f(0.5, ProbeIndex{0, 3});
  CHECK(a == b);
}
