#pragma once

// Shuffled linear regression instances: Y = Pi X B + sigma W.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "shuffled/random.hpp"

namespace shuffled {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// pi[i] is the row of X that observation row i was taken from.
using Permutation = std::vector<int>;

struct Dimensions {
  int n = 2;  // samples
  int m = 1;  // observation columns
  int p = 1;  // covariates
  int h = 0;  // permuted rows

  void validate() const {
    if (n < 2 || m < 1 || p < 1)
      throw std::domain_error("Dimensions: require n >= 2, m >= 1, p >= 1");
    if (h < 0 || h == 1 || h > n)
      throw std::domain_error("Dimensions: h must be 0 or in [2, n]");
  }

  double tau_m() const { return double(m) / n; }
  double tau_p() const { return double(p) / n; }
  double tau_h() const { return double(h) / n; }
};

namespace signal {
struct ScaledIdentity { double lambda = 1.0; };
struct Identity {};
struct GaussianIID {};
/// First ceil(p/2) diagonal entries are `high`, the rest `low`.
struct BlockDiagonal { double high = 1.0; double low = 0.5; };
/// Singular values embedded on the leading diagonal of a p x m matrix.
struct ExplicitSpectrum { std::vector<double> values; };
}  // namespace signal

using SignalSpec = std::variant<signal::ScaledIdentity, signal::Identity, signal::GaussianIID,
                                signal::BlockDiagonal, signal::ExplicitSpectrum>;

/// Noise level given either directly as sigma or through the SNR.
class NoiseSpec {
 public:
  static NoiseSpec from_sigma(double sigma) {
    if (!(sigma >= 0.0) || !std::isfinite(sigma))
      throw std::domain_error("NoiseSpec: sigma must be finite and non-negative");
    NoiseSpec s;
    s.sigma_ = sigma;
    return s;
  }
  /// snr may be +infinity (noiseless).
  static NoiseSpec from_snr(double snr) {
    if (!(snr > 0.0)) throw std::domain_error("NoiseSpec: snr must be positive");
    NoiseSpec s;
    s.snr_ = snr;
    return s;
  }
  static NoiseSpec noiseless() { return from_sigma(0.0); }

  bool has_snr() const { return snr_ > 0.0; }
  double snr() const { return snr_; }

  /// sigma^2 = ||B||_F^2 / (m snr).
  double resolve_sigma(const Matrix& B, int m) const {
    if (!has_snr()) return sigma_;
    if (std::isinf(snr_)) return 0.0;
    return std::sqrt(B.squaredNorm() / (double(m) * snr_));
  }

 private:
  NoiseSpec() = default;
  double sigma_ = 0.0;
  double snr_ = 0.0;  // 0 means "given as sigma"
};

struct DesignDistribution {
  enum class Law { StandardGaussian, UniformSymmetric };
  Law law = Law::StandardGaussian;
  /// Rescale Unif[-1,1] entries by sqrt(3) to unit variance. Off by default.
  bool standardize = false;

  static DesignDistribution gaussian() { return {}; }
  static DesignDistribution uniform(bool standardize = false) {
    return {Law::UniformSymmetric, standardize};
  }
};

struct Instance {
  Dimensions dims;
  Matrix X;  // n x p
  Matrix B;  // p x m
  Permutation pi;
  Matrix W;  // n x m
  double sigma = 0.0;
  Matrix Y;  // n x m
};

/// ||B||_F^2 / (m sigma^2); +infinity when sigma == 0.
inline double snr_of(const Matrix& B, int m, double sigma) {
  if (sigma == 0.0) return std::numeric_limits<double>::infinity();
  if (!(sigma > 0.0)) throw std::domain_error("snr_of: sigma must be non-negative");
  return B.squaredNorm() / (double(m) * sigma * sigma);
}

inline int count_displaced(const Permutation& pi) {
  int c = 0;
  for (std::size_t i = 0; i < pi.size(); ++i) c += pi[i] != int(i);
  return c;
}

inline bool is_bijection(const Permutation& pi) {
  std::vector<char> seen(pi.size(), 0);
  for (int v : pi) {
    if (v < 0 || std::size_t(v) >= pi.size() || seen[v]) return false;
    seen[v] = 1;
  }
  return true;
}

/// Uniform h-subset of rows, then a uniform derangement of that subset
/// (rejection sampling; about e shuffles expected).
inline Permutation sample_permutation(int n, int h, Rng& rng) {
  if (n < 1) throw std::domain_error("sample_permutation: n must be positive");
  if (h < 0 || h == 1 || h > n)
    throw std::domain_error("sample_permutation: h must be 0 or in [2, n]");
  Permutation pi(n);
  std::iota(pi.begin(), pi.end(), 0);
  if (h == 0) return pi;

  // partial Fisher-Yates for the subset
  std::vector<int> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  for (int k = 0; k < h; ++k) {
    auto r = k + int(rng.index(std::size_t(n - k)));
    std::swap(rows[k], rows[r]);
  }
  std::vector<int> order(h);
  auto& eng = rng.engine();
  for (;;) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), eng);
    bool deranged = true;
    for (int k = 0; k < h && deranged; ++k) deranged = order[k] != k;
    if (deranged) break;
  }
  for (int k = 0; k < h; ++k) pi[rows[k]] = rows[order[k]];
  return pi;
}

namespace detail {
template <class... Ts>
struct overloaded : Ts... { using Ts::operator()...; };
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

inline void require_square(int p, int m, const char* what) {
  if (p != m) throw std::domain_error(std::string("build_signal: ") + what + " requires p == m");
}
}  // namespace detail

inline Matrix build_signal(const SignalSpec& spec, int p, int m, Rng& rng) {
  if (p < 1 || m < 1) throw std::domain_error("build_signal: p, m must be positive");
  return std::visit(
      detail::overloaded{
          [&](const signal::ScaledIdentity& s) -> Matrix {
            detail::require_square(p, m, "ScaledIdentity");
            if (!(s.lambda > 0.0)) throw std::domain_error("build_signal: lambda must be positive");
            return s.lambda * Matrix::Identity(p, m);
          },
          [&](const signal::Identity&) -> Matrix {
            detail::require_square(p, m, "Identity");
            return Matrix::Identity(p, m);
          },
          [&](const signal::GaussianIID&) -> Matrix {
            Matrix B(p, m);
            for (int j = 0; j < m; ++j)
              for (int i = 0; i < p; ++i) B(i, j) = rng.normal();
            return B;
          },
          [&](const signal::BlockDiagonal& s) -> Matrix {
            detail::require_square(p, m, "BlockDiagonal");
            Matrix B = Matrix::Zero(p, m);
            const int high = (p + 1) / 2;
            for (int i = 0; i < p; ++i) B(i, i) = i < high ? s.high : s.low;
            return B;
          },
          [&](const signal::ExplicitSpectrum& s) -> Matrix {
            if (s.values.empty() || int(s.values.size()) > std::min(p, m))
              throw std::domain_error("build_signal: spectrum length must be in [1, min(p, m)]");
            Matrix B = Matrix::Zero(p, m);
            for (std::size_t i = 0; i < s.values.size(); ++i) {
              if (!(s.values[i] > 0.0))
                throw std::domain_error("build_signal: singular values must be positive");
              B(Eigen::Index(i), Eigen::Index(i)) = s.values[i];
            }
            return B;
          },
      },
      spec);
}

/// Draw order (fixed for reproducibility): B, X, pi, W.
inline Instance generate_instance(const Dimensions& dims, const SignalSpec& signal,
                                  const NoiseSpec& noise, const DesignDistribution& design,
                                  Rng& rng) {
  dims.validate();
  Instance inst;
  inst.dims = dims;
  inst.B = build_signal(signal, dims.p, dims.m, rng);
  inst.sigma = noise.resolve_sigma(inst.B, dims.m);

  inst.X.resize(dims.n, dims.p);
  if (design.law == DesignDistribution::Law::StandardGaussian) {
    for (Eigen::Index j = 0; j < inst.X.cols(); ++j)
      for (Eigen::Index i = 0; i < inst.X.rows(); ++i) inst.X(i, j) = rng.normal();
  } else {
    const double scale = design.standardize ? std::sqrt(3.0) : 1.0;
    for (Eigen::Index j = 0; j < inst.X.cols(); ++j)
      for (Eigen::Index i = 0; i < inst.X.rows(); ++i)
        inst.X(i, j) = scale * rng.uniform(-1.0, 1.0);
  }

  inst.pi = sample_permutation(dims.n, dims.h, rng);

  inst.W.resize(dims.n, dims.m);
  for (Eigen::Index j = 0; j < inst.W.cols(); ++j)
    for (Eigen::Index i = 0; i < inst.W.rows(); ++i) inst.W(i, j) = rng.normal();

  const Matrix XB = inst.X * inst.B;
  inst.Y.resize(dims.n, dims.m);
  for (int i = 0; i < dims.n; ++i) inst.Y.row(i) = XB.row(inst.pi[i]);
  if (inst.sigma > 0.0) inst.Y += inst.sigma * inst.W;
  return inst;
}

}  // namespace shuffled
