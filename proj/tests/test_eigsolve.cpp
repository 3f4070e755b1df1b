#include <catch2/catch_amalgamated.hpp>

#include <complex>
#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#include <lapacke.h>

#include <random>

#include "htlab/eigsolve.hpp"

using namespace htlab;

namespace {

struct Pencil {
  Eigen::MatrixXcd A, B;
};

// A random complex, B = diag(SPD block, 0): the rank-deficient shape of the
// coupled problem.
Pencil random_pencil(int n, int n_fem, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Pencil p{Eigen::MatrixXcd(n, n), Eigen::MatrixXcd::Zero(n, n)};
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) p.A(i, j) = cplx(g(rng), g(rng));
  Eigen::MatrixXd X(n_fem, n_fem);
  for (int i = 0; i < n_fem; ++i)
    for (int j = 0; j < n_fem; ++j) X(i, j) = g(rng);
  p.B.topLeftCorner(n_fem, n_fem) = (X * X.transpose() / n_fem + Eigen::MatrixXd::Identity(n_fem, n_fem)).cast<cplx>();
  return p;
}

// Finite generalized eigenvalues from zggev.
std::vector<cplx> zggev_finite(const Pencil& p) {
  const int n = static_cast<int>(p.A.rows());
  Eigen::MatrixXcd a = p.A, b = p.B;
  std::vector<cplx> alpha(n), beta(n);
  const int info = LAPACKE_zggev(LAPACK_COL_MAJOR, 'N', 'N', n, a.data(), n, b.data(), n, alpha.data(), beta.data(), nullptr,
                                 1, nullptr, 1);
  REQUIRE(info == 0);
  double bmax = 0;
  for (auto v : beta) bmax = std::max(bmax, std::abs(v));
  std::vector<cplx> out;
  for (int i = 0; i < n; ++i)
    if (std::abs(beta[i]) > 1e-10 * bmax) out.push_back(alpha[i] / beta[i]);
  std::sort(out.begin(), out.end(), [](cplx x, cplx y) { return std::abs(x) < std::abs(y); });
  return out;
}

}  // namespace

TEST_CASE("shift-invert Arnoldi agrees with zggev on random rank-deficient pencils") {
  std::mt19937_64 rng(0xC0FFEE);
  ArnoldiOptions opt;
  opt.nev = 6;
  opt.tol = 1e-13;
  int matched = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_pencil(30, 20, rng);
    const auto ref = zggev_finite(p);
    REQUIRE(ref.size() == 20);
    const auto recs = shift_invert_eigs(lu_factor(p.A), p.A, p.B, opt);
    REQUIRE(recs.size() == 6);
    for (std::size_t i = 0; i < recs.size(); ++i) {
      CHECK(std::abs(recs[i].mu - ref[i]) < 1e-8 * std::max(1.0, std::abs(ref[i])));
      CHECK(recs[i].residual < 1e-12);
      ++matched;
    }
  }
  CHECK(matched == 120);
}

TEST_CASE("Arnoldi on a diagonal operator") {
  const int n = 200;
  Eigen::VectorXcd d(n);
  for (int i = 0; i < n; ++i) d[i] = cplx(1.0 / (i + 1), 0.1 / (i + 2));
  ArnoldiOptions opt;
  opt.nev = 5;
  const auto r = krylov_schur([&](const Eigen::VectorXcd& x) -> Eigen::VectorXcd { return d.cwiseProduct(x); }, n, opt);
  CHECK(r.all_converged);
  for (int i = 0; i < 5; ++i) {
    CHECK(std::abs(r.nu[i] - d[i]) < 1e-11);
    CHECK(std::abs(std::abs(r.vectors(i, i)) - 1) < 1e-8);
  }
}

TEST_CASE("Arnoldi results are deterministic for a fixed seed") {
  std::mt19937_64 rng(11);
  const auto p = random_pencil(40, 25, rng);
  ArnoldiOptions opt;
  opt.nev = 4;
  const auto a = shift_invert_eigs(lu_factor(p.A), p.A, p.B, opt);
  const auto b = shift_invert_eigs(lu_factor(p.A), p.A, p.B, opt);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].mu == b[i].mu);
    CHECK(a[i].vector == b[i].vector);
  }
}

TEST_CASE("sparse and dense factorizations give the same spectrum") {
  std::mt19937_64 rng(3);
  const auto p = random_pencil(30, 18, rng);
  const SpMatC As = p.A.sparseView(), Bs = p.B.sparseView();
  ArnoldiOptions opt;
  opt.nev = 5;
  const auto dense = shift_invert_eigs(lu_factor(p.A), p.A, p.B, opt);
  const auto sparse = shift_invert_eigs(lu_factor(As), As, Bs, opt);
  REQUIRE(dense.size() == sparse.size());
  for (std::size_t i = 0; i < dense.size(); ++i) CHECK(std::abs(dense[i].mu - sparse[i].mu) < 1e-10 * std::abs(dense[i].mu));
}

TEST_CASE("coupled-system solve normalizes the FEM part") {
  std::mt19937_64 rng(5);
  const auto p = random_pencil(24, 16, rng);
  CoupledSystem sys{p.A.sparseView(), p.B.sparseView(), 16, 8, 1.0};
  ArnoldiOptions opt;
  opt.nev = 3;
  for (const auto& r : shift_invert_arnoldi(sys, opt)) {
    CHECK(std::abs(r.vector.dot(sys.B * r.vector) - 1.0) < 1e-12);
    CHECK(r.residual < 1e-12);
    CHECK(r.k == 1.0);
  }
}

TEST_CASE("eig_residual") {
  Eigen::MatrixXcd A = Eigen::MatrixXcd::Identity(3, 3) * 2.0;
  Eigen::MatrixXcd B = Eigen::MatrixXcd::Identity(3, 3);
  Eigen::VectorXcd u = Eigen::VectorXcd::Unit(3, 1);
  CHECK(eig_residual(cplx(2, 0), u, A, B) == 0);
  CHECK(eig_residual(cplx(3, 0), u, A, B) == Catch::Approx(1 / std::sqrt(12.0)));
  CHECK_THROWS_AS(eig_residual(cplx(1, 0), Eigen::VectorXcd::Ones(2), A, B), std::invalid_argument);
}

TEST_CASE("factorization errors") {
  Eigen::MatrixXcd S = Eigen::MatrixXcd::Ones(4, 4);
  CHECK_THROWS_AS(lu_factor(S, 2.5), NumericalSingularityError);
  try {
    lu_factor(S, 2.5);
  } catch (const NumericalSingularityError& e) {
    CHECK(e.k() == 2.5);
  }
  const SpMatC Ss = S.sparseView();
  CHECK_THROWS_AS(lu_factor(Ss), NumericalSingularityError);
  Eigen::MatrixXcd N = Eigen::MatrixXcd::Identity(3, 3);
  N(1, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(lu_factor(N), std::invalid_argument);
  CHECK_THROWS_AS(lu_factor(Eigen::MatrixXcd(2, 3)), std::invalid_argument);
}

TEST_CASE("Arnoldi option validation") {
  ArnoldiOptions opt;
  opt.nev = 0;
  auto id = [](const Eigen::VectorXcd& x) -> Eigen::VectorXcd { return x; };
  CHECK_THROWS_AS(krylov_schur(id, 10, opt), std::invalid_argument);
  opt.nev = 3;
  CHECK_THROWS_AS(krylov_schur(id, 0, opt), std::invalid_argument);
}

TEST_CASE("infinite eigenvalues are filtered") {
  // B has rank 2, so only two finite mu exist even when more are requested
  Eigen::MatrixXcd A = Eigen::MatrixXcd::Identity(5, 5);
  A(0, 3) = 0.5;
  Eigen::MatrixXcd B = Eigen::MatrixXcd::Zero(5, 5);
  B(0, 0) = 1;
  B(1, 1) = 0.5;
  ArnoldiOptions opt;
  opt.nev = 4;
  const auto recs = shift_invert_eigs(lu_factor(A), A, B, opt);
  REQUIRE(recs.size() == 2);
  CHECK(std::abs(recs[0].mu - 1.0) < 1e-12);
  CHECK(std::abs(recs[1].mu - 2.0) < 1e-12);
}
