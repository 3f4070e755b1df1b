#pragma once

// Dirichlet-to-Neumann map on the truncation circle: Galerkin P1 single-layer
// and adjoint double-layer matrices, the Fourier-Hankel symbol, and both
// realizations of the map applied to a boundary trace.

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "htlab/fem.hpp"
#include "htlab/quadrature.hpp"
#include "htlab/specfun.hpp"

namespace htlab {

class SingularOperatorError : public std::runtime_error {
 public:
  SingularOperatorError(double k, double cond)
      : std::runtime_error("single-layer matrix numerically singular at k = " + std::to_string(k) +
                           " (condition estimate " + std::to_string(cond) + ")"),
        k_(k),
        cond_(cond) {}
  double k() const { return k_; }
  double cond() const { return cond_; }

 private:
  double k_, cond_;
};

struct BemOptions {
  int gauss = 10;      // Gauss-Legendre points per panel direction
  int gauss_log = 8;   // points of the -ln x rule for the singular split
  double cond_max = 1e8;
};

struct BemOperators {
  Eigen::MatrixXcd S;   // <S_k psi_j, psi_i>
  Eigen::MatrixXcd Dp;  // (l, i): <D'_k psi_i, psi_l>
  double k = 0, R = 0;
  double cond = 0;      // condition estimate of S
  bool circulant = false;
};

namespace detail {

// kernel(r) = L(r) ln r + Sm(r) with L, Sm smooth.
struct KernelSplit {
  cplx L, Sm;
};

struct SingleLayerKernel {
  double k;
  cplx full(double r) const { return cplx(0, 0.25) * specfun::hankel01(k * r).H0; }
  KernelSplit split(double r) const {
    const auto y = r > 0 ? specfun::bessel_y01_regular(k * r)
                         : specfun::YRegular{1.0, 0.0, 2 / std::numbers::pi * specfun::kEulerGamma, 0.0};
    const double inv2pi = 0.5 / std::numbers::pi;
    return {-inv2pi * y.J0, cplx(0, 0.25) * y.J0 - inv2pi * std::log(k / 2) * y.J0 - 0.25 * y.Y0reg};
  }
};

// d/dn_x Phi(x, y) on the circle of radius R, where (x - y).n_x / |x - y| = r / (2R).
struct AdjointDoubleLayerKernel {
  double k, R;
  cplx full(double r) const { return cplx(0, -0.25 * k) * specfun::hankel01(k * r).H1 * (r / (2 * R)); }
  KernelSplit split(double r) const {
    if (r == 0) return {0.0, -1.0 / (4 * std::numbers::pi * R)};
    const auto y = specfun::bessel_y01_regular(k * r);
    const double c = k * r / (4 * std::numbers::pi * R);
    return {c * y.J1, cplx(0, -k * r / (8 * R)) * y.J1 + c * std::log(k / 2) * y.J1 + (k * r / (8 * R)) * y.Y1reg};
  }
};

struct PanelRules {
  quad::Rule g, lg;
  explicit PanelRules(const BemOptions& o) : g(quad::gauss_legendre(o.gauss)), lg(quad::gauss_log(o.gauss_log)) {}
};

// ln(2R sin(x/2) / x), smooth in x, for angular distance x >= 0.
inline double log_chord_ratio(double R, double x) {
  if (x < 1e-6) return std::log(R) - x * x / 24;
  return std::log(2 * R * std::sin(x / 2) / x);
}

// I(a,b) = int int phi_a(s) K(r) phi_b(t) (R dP)(R dQ) ds dt over panels
// P = [thP, thP + dP], Q = [thQ, thQ + dQ]; phi_0 = 1 - s, phi_1 = s.
enum class PairKind { far, coincident, adjacent };

template <typename Kernel>
Eigen::Matrix2cd panel_pair(const Kernel& K, double R, double thP, double dP, double thQ, double dQ, PairKind kind,
                            const PanelRules& rules) {
  Eigen::Matrix2cd I = Eigen::Matrix2cd::Zero();
  const double J = R * dP * R * dQ;
  auto chord = [&](double ang) { return 2 * R * std::abs(std::sin(ang / 2)); };
  auto add = [&](double s, double t, cplx val) {
    const double ps[2] = {1 - s, s}, pt[2] = {1 - t, t};
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) I(a, b) += ps[a] * pt[b] * val;
  };
  const auto& g = rules.g;
  const auto& lg = rules.lg;
  if (kind == PairKind::far) {
    for (std::size_t i = 0; i < g.size(); ++i)
      for (std::size_t j = 0; j < g.size(); ++j) {
        const double s = g.x[i], t = g.x[j];
        const double r = chord(thP + s * dP - thQ - t * dQ);
        add(s, t, g.w[i] * g.w[j] * J * K.full(r));
      }
    return I;
  }
  if (kind == PairKind::coincident) {
    const double D = dP;
    // smooth part on the square: L (ln D + log_chord_ratio) + Sm
    for (std::size_t i = 0; i < g.size(); ++i)
      for (std::size_t j = 0; j < g.size(); ++j) {
        const double s = g.x[i], t = g.x[j];
        const double x = D * std::abs(s - t);
        const auto ks = K.split(chord(x));
        add(s, t, g.w[i] * g.w[j] * J * (ks.L * (std::log(D) + log_chord_ratio(R, x)) + ks.Sm));
      }
    // singular part L ln|s - t| via w = |s - t|, both triangles
    for (std::size_t i = 0; i < lg.size(); ++i) {
      const double w = lg.x[i];
      const auto ks = K.split(chord(D * w));
      for (std::size_t j = 0; j < g.size(); ++j) {
        const double tau = g.x[j];
        const double base = (1 - w) * tau;
        const cplx val = -lg.w[i] * g.w[j] * (1 - w) * J * ks.L;
        add(base + w, base, val);
        add(base, base + w, val);
      }
    }
    return I;
  }
  // adjacent: P ends where Q starts; sigma = 1 - s, angular distance
  // u = sigma dP + t dQ.  Duffy over the two triangles sigma >= t, t >= sigma.
  for (int tri = 0; tri < 2; ++tri) {
    for (std::size_t j = 0; j < g.size(); ++j) {
      const double v = g.x[j];
      const double lin = tri == 0 ? dP + dQ * v : dP * v + dQ;  // u = rho * lin
      // ln(rho) part with the log rule
      for (std::size_t i = 0; i < lg.size(); ++i) {
        const double rho = lg.x[i];
        const double sigma = tri == 0 ? rho : rho * v, t = tri == 0 ? rho * v : rho;
        const auto ks = K.split(chord(rho * lin));
        add(1 - sigma, t, -lg.w[i] * g.w[j] * rho * J * ks.L);
      }
      // remaining smooth part
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double rho = g.x[i];
        const double sigma = tri == 0 ? rho : rho * v, t = tri == 0 ? rho * v : rho;
        const double u = rho * lin;
        const auto ks = K.split(chord(u));
        const cplx f = ks.L * (std::log(lin) + log_chord_ratio(R, u)) + ks.Sm;
        add(1 - sigma, t, g.w[i] * g.w[j] * rho * J * f);
      }
    }
  }
  return I;
}

// Galerkin matrix of a rotation-invariant kernel in the P1 hat basis of bs.
template <typename Kernel>
Eigen::MatrixXcd galerkin_matrix(const Kernel& K, const BoundarySpace& bs, const PanelRules& rules) {
  const int n = bs.size();
  if (n < 4) throw std::invalid_argument("boundary space needs at least four nodes");
  const double R = bs.R;
  Eigen::MatrixXcd A = Eigen::MatrixXcd::Zero(n, n);
  auto kind_of = [&](int P, int Q) {
    if (P == Q) return PairKind::coincident;
    if ((P + 1) % n == Q || (Q + 1) % n == P) return PairKind::adjacent;
    return PairKind::far;
  };
  // scatter panel pair (P, Q): psi_P is phi_0 on P, psi_{P+1} is phi_1 on P
  auto scatter = [&](int P, int Q, const Eigen::Matrix2cd& I) {
    const int iP[2] = {P, (P + 1) % n}, iQ[2] = {Q, (Q + 1) % n};
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) A(iP[a], iQ[b]) += I(a, b);
  };
  auto pair = [&](int P, int Q) -> Eigen::Matrix2cd {
    const PairKind kind = kind_of(P, Q);
    if (kind == PairKind::adjacent && (Q + 1) % n == P)  // Q ends where P starts
      return panel_pair(K, R, bs.theta[Q], bs.dtheta(Q), bs.theta[P], bs.dtheta(P), kind, rules).transpose();
    return panel_pair(K, R, bs.theta[P], bs.dtheta(P), bs.theta[Q], bs.dtheta(Q), kind, rules);
  };
  if (bs.uniform) {
    std::vector<Eigen::Matrix2cd> off(n);
    for (int d = 0; d <= n / 2; ++d) off[d] = pair(0, d);
    for (int d = n / 2 + 1; d < n; ++d) off[d] = off[n - d].transpose();
    // first row of the circulant matrix
    Eigen::VectorXcd row = Eigen::VectorXcd::Zero(n);
    for (int P : {n - 1, 0})
      for (int Q = 0; Q < n; ++Q) {
        const Eigen::Matrix2cd& I = off[((Q - P) % n + n) % n];
        const int a = (P == 0) ? 0 : 1;
        row[Q] += I(a, 0);
        row[(Q + 1) % n] += I(a, 1);
      }
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) A(i, j) = row[((j - i) % n + n) % n];
    return A;
  }
  for (int P = 0; P < n; ++P)
    for (int Q = P; Q < n; ++Q) {
      const Eigen::Matrix2cd I = pair(P, Q);
      scatter(P, Q, I);
      if (Q != P) scatter(Q, P, I.transpose());
    }
  return A;
}

// Eigenvalues of a circulant matrix from its first row.
inline Eigen::VectorXcd circulant_eigenvalues(const Eigen::MatrixXcd& A) {
  const int n = static_cast<int>(A.rows());
  Eigen::VectorXcd lam(n);
  for (int m = 0; m < n; ++m) {
    cplx s = 0;
    for (int j = 0; j < n; ++j) s += A(0, j) * std::polar(1.0, 2 * std::numbers::pi * static_cast<double>(m) * j / n);
    lam[m] = s;
  }
  return lam;
}

}  // namespace detail

/// Galerkin single-layer matrix <S_k psi_j, psi_i> (complex symmetric).
inline Eigen::MatrixXcd assemble_single_layer(const BoundarySpace& bs, double k, const BemOptions& opt = {}) {
  if (!(k > 0)) throw std::invalid_argument("assemble_single_layer: k must be positive");
  detail::PanelRules rules(opt);
  Eigen::MatrixXcd S = detail::galerkin_matrix(detail::SingleLayerKernel{k}, bs, rules);
  const Eigen::MatrixXcd St = S.transpose();
  S = 0.5 * (S + St);
  return S;
}

/// Galerkin adjoint double-layer matrix, entry (l, i) = <D'_k psi_i, psi_l>,
/// kernel -(ik/4) H1(k|x-y|) (x-y).n_x/|x-y| with diagonal limit -1/(4 pi R).
inline Eigen::MatrixXcd assemble_adjoint_double_layer(const BoundarySpace& bs, double k, const BemOptions& opt = {}) {
  if (!(k > 0)) throw std::invalid_argument("assemble_adjoint_double_layer: k must be positive");
  detail::PanelRules rules(opt);
  return detail::galerkin_matrix(detail::AdjointDoubleLayerKernel{k, bs.R}, bs, rules);
}

/// Boundary mass matrix of the hat basis on the exact circle (arc length).
inline Eigen::MatrixXd boundary_mass(const BoundarySpace& bs) {
  const int n = bs.size();
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
  for (int p = 0; p < n; ++p) {
    const double L = bs.R * bs.dtheta(p);
    const int i = p, j = (p + 1) % n;
    M(i, i) += L / 3;
    M(j, j) += L / 3;
    M(i, j) += L / 6;
    M(j, i) += L / 6;
  }
  return M;
}

/// Condition estimate of S: exact spectral ratio for circulant S, LU-based
/// reciprocal condition estimate otherwise.
inline double single_layer_condition(const Eigen::MatrixXcd& S, bool circulant) {
  if (circulant) {
    const auto lam = detail::circulant_eigenvalues(S);
    double lo = 1e300, hi = 0;
    for (int i = 0; i < lam.size(); ++i) {
      lo = std::min(lo, std::abs(lam[i]));
      hi = std::max(hi, std::abs(lam[i]));
    }
    return lo > 0 ? hi / lo : 1e300;
  }
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(S);
  const double rc = lu.rcond();
  return rc > 0 ? 1.0 / rc : 1e300;
}

inline BemOperators assemble_bem(const BoundarySpace& bs, double k, const BemOptions& opt = {}) {
  BemOperators ops;
  ops.k = k;
  ops.R = bs.R;
  ops.circulant = bs.uniform;
  ops.S = assemble_single_layer(bs, k, opt);
  ops.Dp = assemble_adjoint_double_layer(bs, k, opt);
  ops.cond = single_layer_condition(ops.S, ops.circulant);
  if (ops.cond > opt.cond_max) throw SingularOperatorError(k, ops.cond);
  return ops;
}

/// d_n = k H_n'(kR) / H_n(kR), via the ratio recurrence.
inline cplx fourier_dtn_symbol(int n, double k, double R) {
  if (!(k > 0 && R > 0)) throw std::invalid_argument("fourier_dtn_symbol: k and R must be positive");
  const int m = std::abs(n);
  const auto ld = specfun::hankel_log_derivatives(m, k * R);
  const cplx d = k * ld[m];
  if (!std::isfinite(d.real()) || !std::isfinite(d.imag()))
    throw std::runtime_error("fourier_dtn_symbol: Hankel evaluation failed for n = " + std::to_string(n));
  return d;
}

struct FourierDtn {
  double R = 0, k = 0;
  std::vector<cplx> d;  // d[|n|], n = 0..N

  FourierDtn(double k_, double R_, int N) : R(R_), k(k_) {
    const auto ld = specfun::hankel_log_derivatives(N, k * R);
    d.resize(N + 1);
    for (int n = 0; n <= N; ++n) d[n] = k * ld[n];
  }
  cplx operator()(int n) const { return d.at(static_cast<std::size_t>(std::abs(n))); }
};

enum class DtnBackend { bem, fourier };

inline const char* to_string(DtnBackend b) { return b == DtnBackend::bem ? "bem" : "fourier"; }

inline DtnBackend dtn_backend_from_string(const std::string& s) {
  if (s == "bem") return DtnBackend::bem;
  if (s == "fourier") return DtnBackend::fourier;
  throw std::invalid_argument("unknown DtN backend '" + s + "' (expected bem or fourier)");
}

/// Boundary-integral DtN of nodal trace g: solve S phi = Mb g, form
/// w = (-Mb/2 + D') phi and return Mb^{-1} w (nodal Neumann values).
inline Eigen::VectorXcd dtn_apply_bem(const BemOperators& ops, const Eigen::MatrixXd& Mb, const Eigen::VectorXcd& g) {
  if (g.size() != ops.S.rows()) throw std::invalid_argument("dtn_apply: trace length does not match the boundary space");
  const Eigen::MatrixXcd Mbc = Mb.cast<cplx>();
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(ops.S);
  const Eigen::VectorXcd phi = lu.solve(Mbc * g);
  const Eigen::VectorXcd w = -0.5 * (Mbc * phi) + ops.Dp * phi;
  Eigen::LLT<Eigen::MatrixXd> mb(Mb);
  const Eigen::VectorXd wr = mb.solve(w.real()), wi = mb.solve(w.imag());
  Eigen::VectorXcd out(g.size());
  for (Eigen::Index i = 0; i < g.size(); ++i) out[i] = cplx(wr[i], wi[i]);
  return out;
}

/// Fourier DtN of a nodal trace on a uniform circle: discrete Fourier
/// coefficients multiplied mode-wise by d_n.
inline Eigen::VectorXcd dtn_apply_fourier(const BoundarySpace& bs, double k, const Eigen::VectorXcd& g) {
  if (!bs.uniform) throw std::invalid_argument("dtn_apply: the Fourier backend needs equally spaced boundary nodes");
  const int n = bs.size();
  if (g.size() != n) throw std::invalid_argument("dtn_apply: trace length does not match the boundary space");
  const FourierDtn sym(k, bs.R, n / 2 + 1);
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(n);
  const double th0 = bs.theta[0];
  for (int m = -((n - 1) / 2); m <= n / 2; ++m) {
    cplx c = 0;
    for (int j = 0; j < n; ++j) c += g[j] * std::polar(1.0, -m * (th0 + 2 * std::numbers::pi * j / n));
    c /= static_cast<double>(n);
    const cplx dm = sym(m);
    for (int j = 0; j < n; ++j) out[j] += dm * c * std::polar(1.0, m * (th0 + 2 * std::numbers::pi * j / n));
  }
  return out;
}

/// Galerkin DtN matrix T = Mb F^{-1} diag(d_n) F on a uniform circle
/// (nodal Fourier transform, |n| <= n/2).  T is circulant and symmetric.
template <typename MassMatrix>
Eigen::MatrixXcd fourier_dtn_matrix(const BoundarySpace& bs, double k, const MassMatrix& Mb) {
  if (!bs.uniform) throw std::invalid_argument("fourier_dtn_matrix: equally spaced boundary nodes required");
  const int n = bs.size();
  const FourierDtn sym(k, bs.R, n / 2 + 1);
  // C = F^{-1} diag(d) F is circulant with first column c_j = (1/n) sum_m d_m e^{i m theta_j}
  Eigen::VectorXcd col(n);
  for (int j = 0; j < n; ++j) {
    cplx s = 0;
    for (int m = -((n - 1) / 2); m <= n / 2; ++m) {
      s += sym(m) * std::polar(1.0, 2 * std::numbers::pi * static_cast<double>(m) * j / n);
    }
    col[j] = s / static_cast<double>(n);
  }
  Eigen::MatrixXcd C(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) C(i, j) = col[((i - j) % n + n) % n];
  Eigen::MatrixXcd T = Eigen::MatrixXcd(Mb.template cast<cplx>()) * C;
  const Eigen::MatrixXcd Tt = T.transpose();
  return 0.5 * (T + Tt);
}

}  // namespace htlab
