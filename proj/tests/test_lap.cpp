#include <catch_amalgamated.hpp>

#include <algorithm>
#include <limits>
#include <numeric>
#include <vector>

#include "shuffled/lap.hpp"
#include "shuffled/random.hpp"

using namespace shuffled;
using namespace shuffled::lap;

namespace {

Matrix gaussian_matrix(int n, Rng& rng) {
  Matrix C(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) C(i, j) = rng.normal();
  return C;
}

struct Brute {
  double best;
  std::vector<int> arg;
  int optima;  // number of permutations within 1e-12 of best
};

Brute brute_force(const Matrix& C) {
  const int n = int(C.rows());
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Brute b{std::numeric_limits<double>::infinity(), perm, 0};
  std::vector<double> costs;
  do {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += C(i, perm[i]);
    costs.push_back(s);
    if (s < b.best) {
      b.best = s;
      b.arg = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  for (double s : costs) b.optima += s <= b.best + 1e-12;
  return b;
}

}  // namespace

TEST_CASE("CostMatrix rejects non-square and non-finite input", "[lap]") {
  CHECK_THROWS_AS(CostMatrix(Matrix::Zero(2, 3)), std::invalid_argument);
  CHECK_THROWS_AS(CostMatrix(Matrix(0, 0)), std::invalid_argument);
  Matrix bad = Matrix::Zero(2, 2);
  bad(0, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(CostMatrix(bad), std::invalid_argument);
  bad(0, 1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(CostMatrix(bad), std::invalid_argument);
}

TEST_CASE("solve_exact small examples", "[lap]") {
  Matrix a(2, 2);
  a << 0, 1, 1, 0;
  const auto r = solve_exact(CostMatrix(a));
  CHECK(r.assignment == std::vector<int>{0, 1});
  CHECK(r.converged);
  REQUIRE(r.objective);
  CHECK(*r.objective == 0.0);

  Matrix b(3, 3);
  b << 5, 4, 3, 4, 3, 2, 3, 2, 1;
  const auto rb = solve_exact(CostMatrix(b));
  CHECK(rb.is_permutation);
  CHECK(*rb.objective == Catch::Approx(9.0));

  Matrix one(1, 1);
  one << 3.5;
  const auto r1 = solve_exact(CostMatrix(one));
  CHECK(r1.assignment == std::vector<int>{0});
  CHECK(*r1.objective == 3.5);
}

TEST_CASE("solve_exact matches brute force for n <= 7", "[lap]") {
  Rng rng(11);
  for (int n = 2; n <= 7; ++n) {
    for (int k = 0; k < 200; ++k) {
      const Matrix C = gaussian_matrix(n, rng);
      const auto r = solve_exact(CostMatrix(C));
      REQUIRE(r.is_permutation);
      REQUIRE(*r.objective == Catch::Approx(brute_force(C).best).margin(1e-12));
    }
  }
}

TEST_CASE("solve_exact is invariant to row shifts", "[lap]") {
  Rng rng(12);
  for (int k = 0; k < 50; ++k) {
    Matrix C = gaussian_matrix(8, rng);
    const auto base = solve_exact(CostMatrix(C));
    const int row = int(rng.index(8));
    C.row(row).array() += rng.uniform(-5.0, 5.0);
    CHECK(solve_exact(CostMatrix(C)).assignment == base.assignment);
  }
}

TEST_CASE("mp_step evaluates the min-sum update directly", "[lap]") {
  Matrix c(2, 2);
  c << 0, 10, 10, 0;
  const CostMatrix C(c);
  const MPState s = mp_step(MPState::zeros(2, 0.0), C);
  // l_{i->j} = min_{k != j} C_ik with r = 0
  Matrix expect(2, 2);
  expect << 10, 0, 0, 10;
  CHECK(s.L == expect);
  CHECK(s.R == expect);
  CHECK(s.iteration == 1);
  const auto dec = mp_decode(s, C);
  CHECK(dec.assignment == std::vector<int>{0, 1});
}

TEST_CASE("mp_step damping blends with the previous state", "[lap]") {
  Matrix c(2, 2);
  c << 0, 10, 10, 0;
  const CostMatrix C(c);
  MPState s = MPState::zeros(2, 0.3);
  s.L.setConstant(1.0);
  const MPState next = mp_step(s, C);
  // undamped L update uses R = 0: [[10, 0], [0, 10]]
  CHECK(next.L(0, 0) == Catch::Approx(0.7 * 10 + 0.3 * 1));
  CHECK(next.L(0, 1) == Catch::Approx(0.3 * 1));
  // undamped R update uses L = 1: min_{k != i}(C_kj - 1)
  CHECK(next.R(0, 0) == Catch::Approx(0.7 * 9));
  CHECK(next.R(1, 0) == Catch::Approx(0.7 * -1));
  CHECK_THROWS_AS(mp_step(MPState::zeros(3, 0.3), C), std::invalid_argument);
}

TEST_CASE("mp on a single row uses the empty-min cap", "[lap]") {
  Matrix c(1, 1);
  c << 7.0;
  const CostMatrix C(c);
  const MPState s = mp_step(MPState::zeros(1, 0.0), C, 1e18);
  CHECK(s.L(0, 0) == 1e18);
  CHECK(s.R(0, 0) == 1e18);
  const auto r = solve_mp(C);
  CHECK(r.assignment == std::vector<int>{0});
  CHECK(r.is_permutation);
}

TEST_CASE("mp decodes identity for a reward on the diagonal after one step", "[lap]") {
  const CostMatrix C(-Matrix::Identity(4, 4));
  for (double damping : {0.0, 0.3}) {
    const MPState s = mp_step(MPState::zeros(4, damping), C);
    const auto r = mp_decode(s, C);
    CHECK(r.assignment == std::vector<int>{0, 1, 2, 3});
  }
}

TEST_CASE("mp recovers a dominant diagonal within three steps", "[lap]") {
  Matrix c = Matrix::Constant(5, 5, 10.0);
  c.diagonal().setConstant(-10.0);
  const CostMatrix C(c);
  MPState s = MPState::zeros(5, 0.3);
  for (int k = 0; k < 3; ++k) s = mp_step(s, C);
  CHECK(mp_decode(s, C).assignment == std::vector<int>{0, 1, 2, 3, 4});
  const auto r = solve_mp(C);
  CHECK(r.assignment == std::vector<int>{0, 1, 2, 3, 4});
}

TEST_CASE("mp reports non-convergence instead of throwing", "[lap]") {
  Matrix c(3, 3);
  c << 1, 1, 2, 2, 0, 0, 2, 2, 0;
  MpParams prm;
  prm.damping = 0.0;
  prm.max_iters = 2000;
  AssignmentResult r;
  REQUIRE_NOTHROW(r = solve_mp(CostMatrix(c), prm));
  CHECK_FALSE(r.converged);
  CHECK(r.iterations_used == 2000);
}

TEST_CASE("mp on an all-equal matrix does not crash", "[lap]") {
  const CostMatrix C(Matrix::Constant(4, 4, 2.0));
  AssignmentResult r;
  REQUIRE_NOTHROW(r = solve_mp(C));
  CHECK(r.assignment.size() == 4);
  CHECK(r.is_permutation == assignment_is_permutation(r.assignment));
  if (!r.is_permutation) CHECK_FALSE(r.objective.has_value());
}

TEST_CASE("mp decode only selects edges with positive zeta", "[lap]") {
  Rng rng(13);
  for (int k = 0; k < 50; ++k) {
    const CostMatrix C(gaussian_matrix(6, rng));
    MPState s = MPState::zeros(6, 0.3);
    const int steps = 1 + int(rng.index(20));
    for (int t = 0; t < steps; ++t) s = mp_step(s, C);
    const auto r = mp_decode(s, C);
    const Matrix z = s.zeta(C);
    for (int i = 0; i < 6; ++i) {
      if (r.assignment[i] == kUnassigned)
        CHECK(z.row(i).maxCoeff() <= 0.0);
      else
        CHECK(z(i, r.assignment[i]) > 0.0);
    }
  }
}

TEST_CASE("mp agrees with brute force when it converges to a permutation", "[lap]") {
  Rng rng(14);
  int checked = 0;
  for (int n = 2; n <= 7; ++n) {
    for (int k = 0; k < 40; ++k) {
      const Matrix C = gaussian_matrix(n, rng);
      const auto r = solve_mp(CostMatrix(C));
      const auto b = brute_force(C);
      if (r.converged && r.is_permutation && b.optima == 1) {
        ++checked;
        REQUIRE(r.assignment == b.arg);
      }
    }
  }
  CHECK(checked > 150);
}

TEST_CASE("mp matches the exact solver on 30x30 Gaussian costs", "[lap]") {
  Rng rng(15);
  int match = 0;
  for (int k = 0; k < 100; ++k) {
    const CostMatrix C(gaussian_matrix(30, rng));
    match += solve_mp(C).assignment == solve_exact(C).assignment;
  }
  CHECK(match >= 99);
}

TEST_CASE("MpParams validation", "[lap]") {
  MpParams p;
  p.damping = 1.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = {};
  p.max_iters = 0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = {};
  p.tol = 0.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}
