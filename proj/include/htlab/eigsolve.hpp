#pragma once

// Generalized eigenproblem A u = mu B u near mu = 0: LU factorizations and a
// Krylov-Schur (thick restart Arnoldi) iteration on v -> A^{-1} B v.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/UmfPackSupport>

#include "htlab/fem.hpp"

namespace htlab {

class NumericalSingularityError : public std::runtime_error {
 public:
  NumericalSingularityError(const std::string& what, double k) : std::runtime_error(what + at(k)), k_(k) {}
  double k() const { return k_; }

 private:
  static std::string at(double k) { return std::isnan(k) ? std::string() : " at k = " + std::to_string(k); }
  double k_;
};

class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kPivotThreshold = 1e-14;

/// Row-pivoted dense LU.
class DenseFactorization {
 public:
  DenseFactorization(const Eigen::MatrixXcd& A, double k) : lu_(checked(A)) {
    const auto& U = lu_.matrixLU();
    double umax = 0, umin = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < U.rows(); ++i) {
      umax = std::max(umax, std::abs(U(i, i)));
      umin = std::min(umin, std::abs(U(i, i)));
    }
    if (U.rows() > 0 && !(umin > kPivotThreshold * std::max(umax, 1e-300)))
      throw NumericalSingularityError("lu_factor: pivot below threshold", k);
    rcond_ = lu_.rcond();
  }
  Eigen::VectorXcd solve(const Eigen::VectorXcd& b) const { return lu_.solve(b); }
  double rcond() const { return rcond_; }
  cplx determinant() const { return lu_.determinant(); }
  Eigen::Index size() const { return lu_.rows(); }

 private:
  static const Eigen::MatrixXcd& checked(const Eigen::MatrixXcd& A) {
    if (A.rows() != A.cols()) throw std::invalid_argument("lu_factor: matrix must be square");
    if (!A.allFinite()) throw std::invalid_argument("lu_factor: non-finite entries");
    return A;
  }

  Eigen::PartialPivLU<Eigen::MatrixXcd> lu_;
  double rcond_ = 0;
};

/// Sparse complex LU (UMFPACK).
class SparseFactorization {
 public:
  SparseFactorization(const SpMatC& A, double k) : lu_(std::make_unique<Lu>()) {
    if (A.rows() != A.cols()) throw std::invalid_argument("lu_factor: matrix must be square");
    for (Eigen::Index i = 0; i < A.nonZeros(); ++i)
      if (!std::isfinite(A.valuePtr()[i].real()) || !std::isfinite(A.valuePtr()[i].imag()))
        throw std::invalid_argument("lu_factor: non-finite entries");
    lu_->umfpackControl()(UMFPACK_IRSTEP) = 0;  // residuals are checked on the pencil instead
    lu_->compute(A);
    if (lu_->info() != Eigen::Success) throw NumericalSingularityError("lu_factor: sparse factorization failed", k);
    if (!(lu_->rcond() > kPivotThreshold)) throw NumericalSingularityError("lu_factor: pivot below threshold", k);
  }
  Eigen::VectorXcd solve(const Eigen::VectorXcd& b) const {
    Eigen::VectorXcd x = lu_->solve(b);
    return x;
  }
  double rcond() const { return lu_->rcond(); }
  Eigen::Index size() const { return lu_->rows(); }

 private:
  struct Lu : Eigen::UmfPackLU<SpMatC> {
    double rcond() const { return this->m_umfpackInfo[UMFPACK_RCOND]; }
  };
  std::unique_ptr<Lu> lu_;
};

inline DenseFactorization lu_factor(const Eigen::MatrixXcd& A, double k = std::numeric_limits<double>::quiet_NaN()) {
  return DenseFactorization(A, k);
}

inline SparseFactorization lu_factor(const SpMatC& A, double k = std::numeric_limits<double>::quiet_NaN()) {
  return SparseFactorization(A, k);
}

struct ArnoldiOptions {
  int nev = 6;
  int ncv = 0;  // basis size; 0 picks max(3 nev, nev + 20) capped by n
  int max_iter = 300;
  double tol = 1e-12;        // relative Ritz residual
  std::uint64_t seed = 0x5EED;
  double nu_floor = 1e-12;   // |nu| below nu_floor * max|nu| is an infinite mu
};

struct ArnoldiResult {
  std::vector<cplx> nu;       // converged (or best) Ritz values, |nu| descending
  Eigen::MatrixXcd vectors;   // Ritz vectors (columns), unit 2-norm
  std::vector<double> ritz_residual;
  std::vector<bool> converged;
  int iterations = 0;
  bool all_converged = false;
};

namespace detail {

// Swap the adjacent diagonal entries i, i+1 of upper triangular T, updating Q.
inline void schur_swap(Eigen::MatrixXcd& T, Eigen::MatrixXcd& Q, Eigen::Index i) {
  const Eigen::Index n = T.rows();
  const cplx t11 = T(i, i), t22 = T(i + 1, i + 1);
  const cplx f = T(i, i + 1), g = t22 - t11;
  const double nf = std::abs(f), ng = std::abs(g);
  if (ng == 0) return;
  // Givens rotation [c s; -conj(s) c] [f; g] = [r; 0]
  double c;
  cplx s;
  if (nf == 0) {
    c = 0;
    s = std::conj(g) / ng;
  } else {
    const double r = std::hypot(nf, ng);
    c = nf / r;
    s = (f / nf) * std::conj(g) / r;
  }
  auto rot = [&](cplx& x, cplx& y, cplx sn) {
    const cplx xx = c * x + sn * y;
    y = c * y - std::conj(sn) * x;
    x = xx;
  };
  for (Eigen::Index j = i + 2; j < n; ++j) rot(T(i, j), T(i + 1, j), s);
  for (Eigen::Index j = 0; j < i; ++j) rot(T(j, i), T(j, i + 1), std::conj(s));
  for (Eigen::Index j = 0; j < Q.rows(); ++j) rot(Q(j, i), Q(j, i + 1), std::conj(s));
  T(i, i) = t22;
  T(i + 1, i + 1) = t11;
}

// Reorder so that diagonal magnitudes decrease along the first `count` entries.
inline void schur_sort_largest(Eigen::MatrixXcd& T, Eigen::MatrixXcd& Q, Eigen::Index count) {
  const Eigen::Index n = T.rows();
  for (Eigen::Index pos = 0; pos < std::min(count, n); ++pos) {
    Eigen::Index best = pos;
    for (Eigen::Index j = pos + 1; j < n; ++j)
      if (std::abs(T(j, j)) > std::abs(T(best, best))) best = j;
    for (Eigen::Index j = best; j > pos; --j) schur_swap(T, Q, j - 1);
  }
}

// Eigenvector of upper triangular T for the eigenvalue T(i,i).
inline Eigen::VectorXcd triangular_eigenvector(const Eigen::MatrixXcd& T, Eigen::Index i) {
  Eigen::VectorXcd y = Eigen::VectorXcd::Zero(T.rows());
  y[i] = 1;
  const cplx lam = T(i, i);
  const double small = std::numeric_limits<double>::epsilon() * std::max(T.norm(), 1e-300);
  for (Eigen::Index r = i - 1; r >= 0; --r) {
    cplx s = 0;
    for (Eigen::Index j = r + 1; j <= i; ++j) s += T(r, j) * y[j];
    cplx d = T(r, r) - lam;
    if (std::abs(d) < small) d = small;
    y[r] = -s / d;
  }
  return y / y.norm();
}

inline Eigen::VectorXcd random_vector(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::VectorXcd v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double re = g(rng);
    const double im = g(rng);
    v[i] = cplx(re, im);
  }
  return v;
}

}  // namespace detail

/// Largest-magnitude eigenvalues of the linear map `apply` (y = Op x) on C^n.
inline ArnoldiResult krylov_schur(const std::function<Eigen::VectorXcd(const Eigen::VectorXcd&)>& apply, Eigen::Index n,
                                  const ArnoldiOptions& opt) {
  if (opt.nev < 1) throw std::invalid_argument("krylov_schur: nev must be at least 1");
  if (n < 1) throw std::invalid_argument("krylov_schur: empty operator");
  const Eigen::Index nev = std::min<Eigen::Index>(opt.nev, n);
  Eigen::Index p = opt.ncv > 0 ? opt.ncv : std::max<Eigen::Index>(3 * nev, nev + 20);
  p = std::min(p, n);
  p = std::max(p, std::min(n, nev + 1));
  const Eigen::Index keep_max = std::max<Eigen::Index>(nev, std::min<Eigen::Index>(2 * nev, p - 2));

  std::mt19937_64 rng(opt.seed);
  Eigen::MatrixXcd V = Eigen::MatrixXcd::Zero(n, p + 1);
  Eigen::MatrixXcd H = Eigen::MatrixXcd::Zero(p + 1, p);

  auto orthogonalize = [&](Eigen::VectorXcd& w, Eigen::Index cols, Eigen::VectorXcd* h) {
    for (int pass = 0; pass < 2; ++pass) {  // Gram-Schmidt plus one re-orthogonalization pass
      const Eigen::VectorXcd c = V.leftCols(cols).adjoint() * w;
      w.noalias() -= V.leftCols(cols) * c;
      if (h) *h += c;
    }
  };

  // Start in the range of the operator to suppress its null space.
  Eigen::VectorXcd v0 = apply(detail::random_vector(n, rng));
  if (v0.norm() == 0) v0 = detail::random_vector(n, rng);
  V.col(0) = v0 / v0.norm();

  ArnoldiResult res;
  Eigen::Index k = 0;
  Eigen::MatrixXcd T, Q;
  Eigen::RowVectorXcd b;
  for (int iter = 0; iter < opt.max_iter; ++iter) {
    res.iterations = iter + 1;
    for (Eigen::Index j = k; j < p; ++j) {
      Eigen::VectorXcd w = apply(V.col(j));
      Eigen::VectorXcd h = Eigen::VectorXcd::Zero(j + 1);
      const double wn0 = w.norm();
      orthogonalize(w, j + 1, &h);
      H.col(j).head(j + 1) = h;
      const double beta = w.norm();
      if (beta <= 1e-13 * std::max(wn0, 1e-300)) {
        // invariant subspace: continue with a fresh direction
        H(j + 1, j) = 0;
        if (j + 1 < n) {
          Eigen::VectorXcd r = detail::random_vector(n, rng);
          orthogonalize(r, j + 1, nullptr);
          V.col(j + 1) = r / r.norm();
        } else {
          V.col(j + 1).setZero();
        }
      } else {
        H(j + 1, j) = beta;
        V.col(j + 1) = w / beta;
      }
    }
    Eigen::ComplexSchur<Eigen::MatrixXcd> cs(H.topRows(p));
    T = cs.matrixT();
    Q = cs.matrixU();
    detail::schur_sort_largest(T, Q, keep_max);
    b = H.row(p) * Q;
    const double hnorm = std::max(T.norm(), 1e-300);
    res.nu.assign(nev, 0);
    res.ritz_residual.assign(nev, 0);
    res.converged.assign(nev, false);
    int nconv = 0;
    for (Eigen::Index i = 0; i < nev; ++i) {
      const Eigen::VectorXcd y = detail::triangular_eigenvector(T, i);
      const double r = std::abs((b * y).value());
      res.nu[i] = T(i, i);
      res.ritz_residual[i] = r;
      const double scale = std::max(std::abs(T(i, i)), opt.nu_floor * hnorm);
      res.converged[i] = r <= opt.tol * scale;
      if (res.converged[i]) ++nconv;
    }
    if (nconv == nev) {
      res.all_converged = true;
      break;
    }
    if (iter + 1 == opt.max_iter) break;
    // thick restart on the leading Schur vectors
    const Eigen::Index keep = std::min<Eigen::Index>(keep_max + nconv / 2, p - 1);
    Eigen::MatrixXcd Vk = V.leftCols(p) * Q.leftCols(keep);
    V.leftCols(keep) = Vk;
    V.col(keep) = V.col(p);
    H.setZero();
    H.topLeftCorner(keep, keep) = T.topLeftCorner(keep, keep).triangularView<Eigen::Upper>();
    H.row(keep).head(keep) = b.head(keep);
    k = keep;
  }
  res.vectors.resize(n, nev);
  for (Eigen::Index i = 0; i < nev; ++i) {
    const Eigen::VectorXcd y = detail::triangular_eigenvector(T, i);
    Eigen::VectorXcd x = V.leftCols(p) * (Q * y);
    res.vectors.col(i) = x / x.norm();
  }
  return res;
}

/// Block pencil of the coupled problem: Atilde = [[A_k, C], [Mtr, -S]],
/// B = diag(M, 0).
struct CoupledSystem {
  SpMatC Atilde;
  SpMatC B;
  int n_fem = 0, n_bem = 0;
  double k = 0;

  int size() const { return n_fem + n_bem; }
};

struct EigenRecord {
  cplx mu;
  Eigen::VectorXcd vector;  // FEM part followed by the boundary part
  double residual = 0;      // ||A u - mu B u|| / (||A||_F ||u||)
  double k = 0;
  bool converged = true;
};

template <typename MatA, typename MatB>
double eig_residual(const cplx& mu, const Eigen::VectorXcd& u, const MatA& A, const MatB& B) {
  if (u.size() != A.cols() || A.cols() != B.cols()) throw std::invalid_argument("eig_residual: shape mismatch");
  const Eigen::VectorXcd r = A * u - mu * (B * u);
  const double an = A.norm(), un = u.norm();
  if (an == 0 || un == 0) return r.norm();
  return r.norm() / (an * un);
}

inline double eig_residual(const EigenRecord& rec, const CoupledSystem& sys) {
  return eig_residual(rec.mu, rec.vector, sys.Atilde, sys.B);
}

/// Shift-and-invert solve: eigenvalues mu = 1/nu of the pencil (A, B) for the
/// nev largest |nu| of A^{-1} B, with residuals checked against the pencil.
/// `factor` solves A x = y.  Ritz vectors are purified by one more
/// application of A^{-1} B.
template <typename Factor, typename MatA, typename MatB>
std::vector<EigenRecord> shift_invert_eigs(const Factor& factor, const MatA& A, const MatB& B, const ArnoldiOptions& opt,
                                           double k = 0) {
  const Eigen::Index n = A.rows();
  auto op = [&](const Eigen::VectorXcd& x) -> Eigen::VectorXcd { return factor.solve(B * x); };
  const ArnoldiResult ar = krylov_schur(op, n, opt);
  double numax = 0;
  for (const auto& v : ar.nu) numax = std::max(numax, std::abs(v));
  std::vector<EigenRecord> out;
  for (std::size_t i = 0; i < ar.nu.size(); ++i) {
    const cplx nu = ar.nu[i];
    if (std::abs(nu) < opt.nu_floor * std::max(numax, 1.0)) continue;
    EigenRecord rec;
    rec.mu = 1.0 / nu;
    rec.k = k;
    Eigen::VectorXcd u = op(ar.vectors.col(static_cast<Eigen::Index>(i)));
    u /= u.norm();
    rec.vector = u;
    rec.residual = eig_residual(rec.mu, u, A, B);
    rec.converged = ar.converged[i];
    out.push_back(std::move(rec));
  }
  std::stable_sort(out.begin(), out.end(), [](const EigenRecord& a, const EigenRecord& b) { return std::abs(a.mu) < std::abs(b.mu); });
  return out;
}

/// Shift-invert Arnoldi on a coupled system; eigenvectors are scaled so the
/// FEM part has unit discrete L2 norm (u^* M u = 1).
inline std::vector<EigenRecord> shift_invert_arnoldi(const CoupledSystem& sys, const ArnoldiOptions& opt) {
  const auto f = lu_factor(sys.Atilde, sys.k);
  auto recs = shift_invert_eigs(f, sys.Atilde, sys.B, opt, sys.k);
  for (auto& r : recs) {
    const double m2 = std::real(r.vector.dot(sys.B * r.vector));
    if (m2 > 0) r.vector /= std::sqrt(m2);
    r.residual = eig_residual(r, sys);
  }
  return recs;
}

}  // namespace htlab
