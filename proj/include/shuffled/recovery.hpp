#pragma once

// Permutation recovery: oracle / non-oracle LAP costs, error-rate
// experiments and the bisection threshold search.

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "shuffled/lap.hpp"
#include "shuffled/model.hpp"
#include "shuffled/random.hpp"

namespace shuffled {

enum class RecoveryMode { Oracle, NonOracle };

struct ExactSolver {};
struct MpSolver { lap::MpParams params; };
using Solver = std::variant<ExactSolver, MpSolver>;

/// C = -Y B^T X^T, i.e. C_ij = -<Y_i, B^T X_j>.
inline lap::CostMatrix oracle_cost(const Instance& inst) {
  Matrix YB = inst.Y * inst.B.transpose();  // n x p
  return lap::CostMatrix(-(YB * inst.X.transpose()));
}

/// C = -Y Y^T X X^T, evaluated as ((-Y)(Y^T X)) X^T.
inline lap::CostMatrix nonoracle_cost(const Instance& inst) {
  Matrix YtX = inst.Y.transpose() * inst.X;  // m x p
  Matrix left = -(inst.Y * YtX);             // n x p
  return lap::CostMatrix(left * inst.X.transpose());
}

inline lap::CostMatrix recovery_cost(const Instance& inst, RecoveryMode mode) {
  return mode == RecoveryMode::Oracle ? oracle_cost(inst) : nonoracle_cost(inst);
}

/// Estimated permutation, or nullopt when message passing does not decode
/// to a permutation. Row i of Y is matched to row pi_hat[i] of X.
inline std::optional<Permutation> recover(const Instance& inst, RecoveryMode mode,
                                          const Solver& solver) {
  const auto C = recovery_cost(inst, mode);
  lap::AssignmentResult res = std::holds_alternative<ExactSolver>(solver)
                                  ? lap::solve_exact(C)
                                  : lap::solve_mp(C, std::get<MpSolver>(solver).params);
  if (!res.is_permutation) return std::nullopt;
  return Permutation(res.assignment.begin(), res.assignment.end());
}

/// Everything needed to draw and solve one recovery trial.
struct RecoveryExperiment {
  Dimensions dims;
  SignalSpec signal = signal::Identity{};
  NoiseSpec noise = NoiseSpec::noiseless();
  DesignDistribution design;
  RecoveryMode mode = RecoveryMode::Oracle;
  Solver solver = ExactSolver{};
};

/// Outcome of one trial: full recovery and (diagnostic) matched-row count.
struct TrialOutcome {
  bool recovered = false;
  int matched_rows = 0;
};

inline TrialOutcome run_trial(const RecoveryExperiment& exp, std::uint64_t seed) {
  Rng rng(seed);
  const Instance inst = generate_instance(exp.dims, exp.signal, exp.noise, exp.design, rng);
  const auto pi_hat = recover(inst, exp.mode, exp.solver);
  TrialOutcome out;
  if (!pi_hat) return out;
  for (int i = 0; i < exp.dims.n; ++i) out.matched_rows += (*pi_hat)[i] == inst.pi[i];
  out.recovered = out.matched_rows == exp.dims.n;
  return out;
}

/// Fraction of trials where pi_hat != pi (MP decode failures count as
/// errors). Trial t uses seed derive_seed(seed, {t}); the count does not
/// depend on `threads`.
inline double full_recovery_error_rate(const RecoveryExperiment& exp, int trials,
                                       std::uint64_t seed, unsigned threads = 1) {
  if (trials < 1) throw std::invalid_argument("full_recovery_error_rate: trials must be >= 1");
  exp.dims.validate();
  std::vector<char> failed(trials, 0);
  parallel_for(std::size_t(trials), threads, [&](std::size_t t) {
    failed[t] = !run_trial(exp, derive_seed(seed, {t})).recovered;
  });
  int errors = 0;
  for (char f : failed) errors += f;
  return double(errors) / trials;
}

struct ThresholdSearchConfig {
  double lower = 0.0;
  double upper = 1.0;
  double epsilon = 1e-3;
  int trials_per_probe = 100;
  double error_threshold = 0.05;
  int repeats = 20;

  void validate() const {
    if (!(lower < upper)) throw std::invalid_argument("ThresholdSearchConfig: lower < upper required");
    if (!(epsilon > 0.0) || !(epsilon < upper - lower))
      throw std::invalid_argument("ThresholdSearchConfig: need 0 < epsilon < upper - lower");
    if (trials_per_probe < 1 || repeats < 1)
      throw std::invalid_argument("ThresholdSearchConfig: trials and repeats must be >= 1");
    if (!(error_threshold > 0.0 && error_threshold <= 1.0))
      throw std::invalid_argument("ThresholdSearchConfig: error_threshold must be in (0, 1]");
  }
};

struct ThresholdEstimate {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1); 0 for one repeat
  std::vector<double> per_repeat;
  int probes_used = 0;  // bisection probes over all repeats
  double lower_rate = 0.0;  // error rate at the bracket ends
  double upper_rate = 0.0;
};

/// Identifies one experiment evaluation so callers can derive seeds.
/// Bracket checks use repeat == kBracketRepeat, probe 0 (lower) / 1 (upper).
struct ProbeIndex {
  static constexpr std::uint64_t kBracketRepeat = ~std::uint64_t{0};
  std::uint64_t repeat = 0;
  std::uint64_t probe = 0;
};

class BracketError : public std::runtime_error {
 public:
  BracketError(const std::string& what, double lower_rate, double upper_rate)
      : std::runtime_error(what), lower_rate(lower_rate), upper_rate(upper_rate) {}
  double lower_rate;
  double upper_rate;
};

namespace detail {
template <typename F>
double evaluate_probe(F& experiment, double snr, ProbeIndex idx) {
  if constexpr (std::is_invocable_r_v<double, F&, double, ProbeIndex>)
    return experiment(snr, idx);
  else
    return experiment(snr);
}
}  // namespace detail

/// Bisection for the smallest snr whose error rate is below the threshold.
/// Per repeat: mid = (l + r) / 2; below threshold -> r = mid - eps,
/// else l = mid + eps; stop once |l - r| <= eps and report the last mid.
/// The bracket is validated first: the upper end must already be below the
/// threshold and the lower end must not be. Throws BracketError otherwise.
///
/// `experiment` is callable as double(double snr) or
/// double(double snr, ProbeIndex).
template <typename F>
ThresholdEstimate find_threshold(const ThresholdSearchConfig& cfg, F&& experiment) {
  cfg.validate();
  const double lo_rate = detail::evaluate_probe(experiment, cfg.lower, {ProbeIndex::kBracketRepeat, 0});
  const double hi_rate = detail::evaluate_probe(experiment, cfg.upper, {ProbeIndex::kBracketRepeat, 1});
  if (!(hi_rate < cfg.error_threshold) || lo_rate < cfg.error_threshold)
    throw BracketError("find_threshold: error rate does not cross the threshold inside [lower, upper]",
                       lo_rate, hi_rate);

  ThresholdEstimate est;
  est.lower_rate = lo_rate;
  est.upper_rate = hi_rate;
  for (int rep = 0; rep < cfg.repeats; ++rep) {
    double l = cfg.lower, r = cfg.upper, mid = 0.5 * (l + r);
    std::uint64_t probe = 0;
    while (std::abs(l - r) > cfg.epsilon) {
      mid = 0.5 * (l + r);
      const double rate = detail::evaluate_probe(experiment, mid, {std::uint64_t(rep), probe++});
      if (rate < cfg.error_threshold)
        r = mid - cfg.epsilon;
      else
        l = mid + cfg.epsilon;
    }
    est.probes_used += int(probe);
    est.per_repeat.push_back(mid);
  }
  double sum = 0.0;
  for (double v : est.per_repeat) sum += v;
  est.mean = sum / est.per_repeat.size();
  if (est.per_repeat.size() > 1) {
    double ss = 0.0;
    for (double v : est.per_repeat) ss += (v - est.mean) * (v - est.mean);
    est.std = std::sqrt(ss / (est.per_repeat.size() - 1));
  }
  return est;
}

/// Adapts a RecoveryExperiment into a find_threshold closure over snr:
/// every probe draws fresh instances seeded by (seed, repeat, probe, trial).
inline auto snr_error_rate_experiment(RecoveryExperiment exp, int trials, std::uint64_t seed,
                                      unsigned threads = 1) {
  return [exp = std::move(exp), trials, seed, threads](double snr, ProbeIndex idx) mutable {
    exp.noise = NoiseSpec::from_snr(snr);
    return full_recovery_error_rate(exp, trials, derive_seed(seed, {idx.repeat, idx.probe}),
                                    threads);
  };
}

}  // namespace shuffled
