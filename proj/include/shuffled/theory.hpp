#pragma once

// Closed-form phase-transition predictors.
//
// All logarithms are natural. "Spectrum" always refers to the non-zero
// singular values of the signal matrix B.

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace shuffled::theory {

/// The requested threshold does not exist (non-positive denominator).
class NoFiniteThreshold : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// E exp(-theta Xi) is infinite at the requested theta.
class MgfDivergence : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class Spectrum {
 public:
  explicit Spectrum(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw std::invalid_argument("Spectrum: must be non-empty");
    for (double v : values_)
      if (!(v > 0.0) || !std::isfinite(v))
        throw std::invalid_argument("Spectrum: singular values must be positive and finite");
  }

  /// `count` copies of `value` (scaled identity of size count).
  static Spectrum uniform(int count, double value = 1.0) {
    return Spectrum(std::vector<double>(std::size_t(count), value));
  }
  /// Half of the values (rounded up) at `high`, the rest at `low`.
  static Spectrum two_level(int count, double high, double low) {
    std::vector<double> v(std::size_t(count), low);
    for (int i = 0; i < (count + 1) / 2; ++i) v[std::size_t(i)] = high;
    return Spectrum(std::move(v));
  }
  /// Non-zero singular values of B (relative cutoff 1e-12).
  static Spectrum of_matrix(const Eigen::MatrixXd& B) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(B);
    const auto& s = svd.singularValues();
    std::vector<double> v;
    const double cut = s.size() ? 1e-12 * s(0) : 0.0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
      if (s(i) > cut) v.push_back(s(i));
    return Spectrum(std::move(v));
  }

  const std::vector<double>& values() const { return values_; }
  std::size_t rank() const { return values_.size(); }

  /// ||B||_F^2 = sum lambda^2
  double fro2() const {
    double s = 0.0;
    for (double v : values_) s += v * v;
    return s;
  }
  /// ||B^T B||_F^2 = sum lambda^4
  double fro4() const {
    double s = 0.0;
    for (double v : values_) s += v * v * v * v;
    return s;
  }
  /// F = ||B^T B||_F^2 / ||B||_F^4, in [1/rank, 1].
  double shape_factor() const {
    const double f2 = fro2();
    return fro4() / (f2 * f2);
  }

 private:
  std::vector<double> values_;
};

/// Largest theta keeping every per-value factor of the oracle MGF finite:
/// theta^2 sigma^2 lambda^2 < 1 and 1 + 2 theta lambda^2 - theta^2 lambda^2 (lambda^2 + 2 sigma^2) > 0.
/// The feasible set is the open interval (0, result).
inline double oracle_theta_max(const Spectrum& spec, double sigma) {
  double tmax = std::numeric_limits<double>::infinity();
  for (double lam : spec.values()) {
    const double l2 = lam * lam;
    const double a = l2 * (l2 + 2.0 * sigma * sigma);
    const double b = 2.0 * l2;
    tmax = std::min(tmax, (b + std::sqrt(b * b + 4.0 * a)) / (2.0 * a));
    if (sigma > 0.0) tmax = std::min(tmax, 1.0 / (sigma * lam));
  }
  return tmax;
}

/// log E exp(-theta Xi) = -1/2 sum_i log(1 + 2 theta l_i^2 - theta^2 l_i^2 (l_i^2 + 2 sigma^2)).
inline double oracle_log_mgf(double theta, const Spectrum& spec, double sigma) {
  if (!(theta > 0.0)) throw std::domain_error("oracle_log_mgf: theta must be positive");
  double acc = 0.0;
  for (double lam : spec.values()) {
    const double l2 = lam * lam;
    const double arg = 1.0 + 2.0 * theta * l2 - theta * theta * l2 * (l2 + 2.0 * sigma * sigma);
    if (theta * theta * sigma * sigma * l2 >= 1.0 || !(arg > 0.0))
      throw MgfDivergence("oracle_log_mgf: theta outside the feasible region, MGF diverges");
    acc += std::log1p(2.0 * theta * l2 - theta * theta * l2 * (l2 + 2.0 * sigma * sigma));
  }
  return -0.5 * acc;
}

/// (1/theta)(log n + log E exp(-theta Xi)) for the oracle Xi.
inline double oracle_drift_at(double theta, int n, const Spectrum& spec, double sigma) {
  return (std::log(double(n)) + oracle_log_mgf(theta, spec, sigma)) / theta;
}

struct DriftResult {
  double value;  // the infimum; <= 0 means the recovery regime
  double theta;  // minimizer
};

/// inf_{theta > 0} (1/theta)(log n + log E exp(-theta Xi)), by golden-section
/// search in log(theta) over the feasible interval. The objective is
/// unimodal since the log-MGF is convex.
inline DriftResult oracle_drift_minimize(int n, const Spectrum& spec, double sigma,
                                         double tol = 1e-10) {
  if (n < 2) throw std::domain_error("oracle_drift: n must be >= 2");
  const double tmax = oracle_theta_max(spec, sigma);
  if (!(tmax > 0.0) || !std::isfinite(tmax))
    throw std::domain_error("oracle_drift: empty feasible interval");
  auto f = [&](double logt) { return oracle_drift_at(std::exp(logt), n, spec, sigma); };
  double a = std::log(tmax) - 40.0;
  double b = std::log(tmax * (1.0 - 1e-12));
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  const double t = 0.5 * (a + b);
  return {f(t), std::exp(t)};
}

inline double oracle_drift(int n, const Spectrum& spec, double sigma) {
  return oracle_drift_minimize(n, spec, sigma).value;
}

/// 2 log n / (||B^T B||_F^2 + 2 sigma^2 ||B||_F^2), the stated expression for the
/// lower-bound minimizer. n is real here so log n can be set directly.
inline double oracle_theta_star_lb(double n, const Spectrum& spec, double sigma) {
  if (!(n > 1.0)) throw std::domain_error("oracle_theta_star_lb: n must be > 1");
  return 2.0 * std::log(n) / (spec.fro4() + 2.0 * sigma * sigma * spec.fro2());
}

/// Actual minimizer of log n / theta + theta A / 2 - ||B||^2 with
/// A = ||B^T B||^2 + 2 sigma^2 ||B||^2, i.e. sqrt(2 log n / A). Setting the
/// minimum to zero gives the threshold equation solved by
/// oracle_snr_threshold.
inline double oracle_theta_lb_minimizer(double n, const Spectrum& spec, double sigma) {
  return std::sqrt(oracle_theta_star_lb(n, spec, sigma));
}

/// Root of 2 log(n) snr F + 4 log(n) / m = snr.
inline double oracle_snr_threshold(int n, int m, double F) {
  if (n < 2 || m < 1) throw std::domain_error("oracle_snr_threshold: need n >= 2, m >= 1");
  const double L = std::log(double(n));
  const double denom = 1.0 - 2.0 * F * L;
  if (!(denom > 0.0)) throw NoFiniteThreshold("oracle_snr_threshold: no finite threshold (1 - 2 F log n <= 0)");
  return (4.0 * L / m) / denom;
}

/// Gaussian approximation: root of 6 log(n) snr F + 4 log(n) / m = snr.
inline double oracle_snr_threshold_gaussian(int n, int m, double F) {
  if (n < 2 || m < 1) throw std::domain_error("oracle_snr_threshold_gaussian: need n >= 2, m >= 1");
  const double L = std::log(double(n));
  const double denom = 1.0 - 6.0 * F * L;
  if (!(denom > 0.0))
    throw NoFiniteThreshold("oracle_snr_threshold_gaussian: no finite threshold (1 - 6 F log n <= 0)");
  return (4.0 * L / m) / denom;
}

/// Oracle Xi moments: E Xi = ||B||^2, Var Xi = 3 ||B B^T||^2 + 2 sigma^2 ||B||^2.
inline std::pair<double, double> oracle_xi_moments(const Spectrum& spec, double sigma) {
  return {spec.fro2(), 3.0 * spec.fro4() + 2.0 * sigma * sigma * spec.fro2()};
}

struct NonOracleMoments {
  double mean;
  double variance;
};

/// Leading-order non-oracle moments with tau_p = p/n, tau_h = h/n:
///   E Xi   ~ n (1 - tau_h) [(1 + tau_p) ||B||^2 + m tau_p sigma^2]
///   Var Xi ~ n^2 tau_h (1 - tau_h) tau_p^2 [||B||^2 + m sigma^2]^2
///          + n^2 [2 tau_p + 3 (1 - tau_h)^2] ||B^T B||^2
///          + n^2 [6 tau_p (1 - tau_h)^2 + (3 - tau_h) tau_p^2] ||B^T B||^2
/// The two ||B^T B||^2 terms are kept separate as stated.
inline NonOracleMoments nonoracle_moments(int n, int m, int p, int h, double fro2, double fro4,
                                          double sigma) {
  if (n < 1 || p < 1 || h < 0 || h > n)
    throw std::domain_error("nonoracle_moments: need n >= 1, p >= 1, 0 <= h <= n");
  const double N = n, tp = double(p) / n, th = double(h) / n, s2 = sigma * sigma;
  const double mean = N * (1.0 - th) * ((1.0 + tp) * fro2 + m * tp * s2);
  const double a = fro2 + m * s2;
  const double var = N * N * th * (1.0 - th) * tp * tp * a * a +
                     N * N * (2.0 * tp + 3.0 * (1.0 - th) * (1.0 - th)) * fro4 +
                     N * N * (6.0 * tp * (1.0 - th) * (1.0 - th) + (3.0 - th) * tp * tp) * fro4;
  return {mean, var};
}

/// 2 log(n tau_h) Var Xi - (E Xi)^2 at the given snr (sigma^2 = ||B||^2 / (m snr)).
inline double nonoracle_criticality(double snr, int n, int m, int p, int h, const Spectrum& spec) {
  const double f2 = spec.fro2();
  const double sigma = std::isinf(snr) ? 0.0 : std::sqrt(f2 / (m * snr));
  const auto mo = nonoracle_moments(n, m, p, h, f2, spec.fro4(), sigma);
  return 2.0 * std::log(double(h)) * mo.variance - mo.mean * mo.mean;
}

/// Size-corrected non-oracle threshold: smallest snr in [1e-6, 1e6] where
/// 2 log(n tau_h) Var Xi = (E Xi)^2, located by scanning log-snr for the
/// first sign change and refining by bisection. nullopt when there is none.
inline std::optional<double> nonoracle_snr_threshold(int n, int m, int p, int h,
                                                     const Spectrum& spec) {
  if (h < 2 || h > n) throw std::domain_error("nonoracle_snr_threshold: need 2 <= h <= n");
  auto g = [&](double logsnr) { return nonoracle_criticality(std::exp(logsnr), n, m, p, h, spec); };
  const double lo = std::log(1e-6), hi = std::log(1e6);
  constexpr int kScan = 2400;
  double prev_x = lo, prev_g = g(lo);
  for (int k = 1; k <= kScan; ++k) {
    const double x = lo + (hi - lo) * k / kScan;
    const double gx = g(x);
    if ((prev_g > 0.0) != (gx > 0.0)) {
      double a = prev_x, b = x, ga = prev_g;
      for (int it = 0; it < 200 && b - a > 1e-15 * std::max(1.0, std::abs(a)); ++it) {
        const double c = 0.5 * (a + b);
        const double gc = g(c);
        if ((gc > 0.0) == (ga > 0.0)) {
          a = c;
          ga = gc;
        } else {
          b = c;
        }
      }
      return std::exp(0.5 * (a + b));
    }
    prev_x = x;
    prev_g = gx;
  }
  return std::nullopt;
}

struct EtaTerms {
  double eta1;
  double eta2;
};

inline EtaTerms nonoracle_eta(int n, double tau_p, double tau_h) {
  const double L = std::log(n * tau_h);
  const double eta1 = 2.0 * tau_h * tau_p * tau_p * L - tau_p * (tau_p + 1.0) * (1.0 - tau_h) +
                      tau_p * std::sqrt(2.0 * (1.0 - tau_h) * tau_h * L);
  const double eta2 = (1.0 - tau_h) * (tau_p + 1.0) * (tau_p + 1.0) - 2.0 * tau_h * tau_p * tau_p * L;
  return {eta1, eta2};
}

/// snr ~ eta1 / eta2 (equal-order singular values, large m). Throws
/// NoFiniteThreshold when eta2 <= singular_tol (at or past the tau_h
/// singularity; the default absorbs the 1e-6 root tolerance of
/// tau_h_singularity).
/// A negative return (eta1 < 0, small tau_h) lies outside the formula's
/// validity and is passed through for the caller to flag.
inline double nonoracle_snr_closed_form(int n, double tau_p, double tau_h,
                                        double singular_tol = 1e-6) {
  if (!(tau_h > 0.0 && tau_h < 1.0) || !(tau_p > 0.0) || !(n * tau_h > 1.0))
    throw std::domain_error("nonoracle_snr_closed_form: need 0 < tau_h < 1, tau_p > 0, n tau_h > 1");
  const auto e = nonoracle_eta(n, tau_p, tau_h);
  if (!(e.eta2 > singular_tol)) throw NoFiniteThreshold("nonoracle_snr_closed_form: eta2 <= 0 (singular)");
  return e.eta1 / e.eta2;
}

/// tau_h where eta2 changes sign, or nullopt when eta2 stays positive on
/// (1/n, 1) (threshold pushed to tau_h -> 1, the tau_p -> 0 regime).
inline std::optional<double> tau_h_singularity(int n, double tau_p, double tol = 1e-6) {
  if (!(tau_p > 0.0) || n < 2) throw std::domain_error("tau_h_singularity: need tau_p > 0, n >= 2");
  auto eta2 = [&](double t) { return nonoracle_eta(n, tau_p, t).eta2; };
  const double lo = 1.0 / n + 1e-9, hi = 1.0 - 1e-9;
  constexpr int kScan = 4000;
  double prev = lo, prev_v = eta2(lo);
  for (int k = 1; k <= kScan; ++k) {
    const double t = lo + (hi - lo) * k / kScan;
    const double v = eta2(t);
    if ((prev_v > 0.0) != (v > 0.0)) {
      double a = prev, b = t;
      while (b - a > tol) {
        const double c = 0.5 * (a + b);
        if ((eta2(c) > 0.0) == (prev_v > 0.0))
          a = c;
        else
          b = c;
      }
      return 0.5 * (a + b);
    }
    prev = t;
    prev_v = v;
  }
  return std::nullopt;
}

}  // namespace shuffled::theory
