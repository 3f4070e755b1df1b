#pragma once

// Bessel/Hankel functions of integer order and real argument, plus Mathieu
// characteristic values and first-kind radial (modified) Mathieu functions.
//
// J_n is computed by Miller's backward recurrence normalised with
// J_0 + 2 sum J_2k = 1, which is accurate for every x > 0.  Y_0 and Y_1 come
// from the Neumann series in J_2k (x <= kAsymptoticCrossover) or from the
// Hankel asymptotic expansion (larger x); Y_n for n >= 2 by forward recurrence.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace htlab::specfun {

using cplx = std::complex<double>;

inline constexpr double kEulerGamma = 0.57721566490153286060651209008240243;
inline constexpr int kMaxOrder = 400;
inline constexpr double kAsymptoticCrossover = 25.0;

struct BesselJY {
  double J = 0, Y = 0, dJ = 0, dY = 0;
};

namespace detail {

inline int miller_start(int nmax, double x) {
  const double s = std::max<double>(nmax, x);
  int m = static_cast<int>(1.5 * s) + 30;
  return m + (m % 2);
}

}  // namespace detail

/// J_0(x) ... J_nmax(x) for x > 0 (x == 0 is also accepted).
inline std::vector<double> bessel_j_sequence(int nmax, double x) {
  if (nmax < 0) throw std::invalid_argument("bessel_j_sequence: negative order");
  std::vector<double> out(static_cast<std::size_t>(nmax) + 1, 0.0);
  if (x == 0.0) {
    out[0] = 1.0;
    return out;
  }
  if (!(x > 0.0)) throw std::domain_error("bessel_j_sequence: x must be positive");
  const int m = detail::miller_start(nmax, x);
  std::vector<double> j(static_cast<std::size_t>(m) + 2, 0.0);
  j[m + 1] = 0.0;
  j[m] = 1e-300;
  double norm = 0.0;  // j_0 + 2 sum j_2k, accumulated while recurring
  if (m % 2 == 0) norm += 2.0 * j[m];
  const double two_over_x = 2.0 / x;
  for (int k = m; k >= 1; --k) {
    j[k - 1] = k * two_over_x * j[k] - j[k + 1];
    if (std::abs(j[k - 1]) > 1e250) {
      for (int i = k - 1; i <= m; ++i) j[i] *= 1e-250;
      norm *= 1e-250;
    }
    if ((k - 1) % 2 == 0) norm += (k - 1 == 0 ? 1.0 : 2.0) * j[k - 1];
  }
  for (int n = 0; n <= nmax; ++n) out[n] = j[n] / norm;
  return out;
}

namespace detail {

// Hankel asymptotic expansion H^(1)_nu(x) for nu in {0,1}; accurate to ~e^{-2x}.
inline cplx hankel_asymptotic(int nu, double x) {
  const double mu = 4.0 * nu * nu;
  cplx sum = 1.0, term = 1.0;
  const cplx i(0, 1);
  double prev = 1.0;
  for (int k = 1; k < 60; ++k) {
    const double f = (mu - (2.0 * k - 1) * (2.0 * k - 1)) / (k * 8.0 * x);
    term *= i * f;
    const double a = std::abs(term);
    if (a > prev) break;
    sum += term;
    prev = a;
    if (a < 1e-18) break;
  }
  const double phase = x - nu * std::numbers::pi / 2 - std::numbers::pi / 4;
  return std::sqrt(2.0 / (std::numbers::pi * x)) * std::exp(i * phase) * sum;
}

}  // namespace detail

/// Regular parts of Y_0 and Y_1 after removing the logarithm:
/// Y_0 = (2/pi) ln(x/2) J_0 + y0_regular,  Y_1 = (2/pi) ln(x/2) J_1 + y1_regular.
/// y1_regular still carries the -2/(pi x) pole.
struct YRegular {
  double J0, J1, Y0reg, Y1reg;
};

inline YRegular bessel_y01_regular(double x) {
  if (!(x > 0.0)) throw std::domain_error("bessel_y01_regular: x must be positive");
  constexpr double pi = std::numbers::pi;
  if (x > kAsymptoticCrossover) {
    const cplx h0 = detail::hankel_asymptotic(0, x);
    const cplx h1 = detail::hankel_asymptotic(1, x);
    const double l = (2.0 / pi) * std::log(x / 2);
    return {h0.real(), h1.real(), h0.imag() - l * h0.real(), h1.imag() - l * h1.real()};
  }
  const int m = detail::miller_start(0, x);
  const auto j = bessel_j_sequence(m, x);
  double s0 = 0.0, s1 = 0.0;
  for (int k = 1; 2 * k + 1 <= m; ++k) {
    const double sgn = (k % 2 == 0) ? 1.0 : -1.0;
    s0 += sgn * j[2 * k] / k;
    s1 += sgn * (j[2 * k - 1] - j[2 * k + 1]) / k;
  }
  const double y0r = (2.0 / pi) * kEulerGamma * j[0] - (4.0 / pi) * s0;
  const double y1r = -(2.0 / (pi * x)) * j[0] + (2.0 / pi) * kEulerGamma * j[1] + (2.0 / pi) * s1;
  return {j[0], j[1], y0r, y1r};
}

struct Hankel01 {
  cplx H0, H1;
};

/// H^(1)_0(x) and H^(1)_1(x), the kernel functions of the 2-D boundary operators.
inline Hankel01 hankel01(double x) {
  if (!(x > 0.0)) throw std::domain_error("hankel01: x must be positive");
  if (x > kAsymptoticCrossover)
    return {detail::hankel_asymptotic(0, x), detail::hankel_asymptotic(1, x)};
  const auto r = bessel_y01_regular(x);
  const double l = (2.0 / std::numbers::pi) * std::log(x / 2);
  return {cplx(r.J0, r.Y0reg + l * r.J0), cplx(r.J1, r.Y1reg + l * r.J1)};
}

/// J_n, Y_n and their derivatives for integer 0 <= n <= kMaxOrder and x > 0.
inline BesselJY bessel_jy(int n, double x) {
  if (!(x > 0.0)) throw std::domain_error("bessel_jy: x must be positive");
  if (n < 0 || n > kMaxOrder)
    throw std::out_of_range("bessel_jy: order " + std::to_string(n) + " outside [0, " +
                            std::to_string(kMaxOrder) + "]");
  const auto j = bessel_j_sequence(n + 1, x);
  const auto h = hankel01(x);
  std::vector<double> y(static_cast<std::size_t>(n) + 2);
  y[0] = h.H0.imag();
  y[1] = h.H1.imag();
  for (int k = 1; k <= n; ++k) y[k + 1] = 2.0 * k / x * y[k] - y[k - 1];
  BesselJY r;
  r.J = j[n];
  r.Y = y[n];
  r.dJ = n == 0 ? -j[1] : j[n - 1] - n / x * j[n];
  r.dY = n == 0 ? -y[1] : y[n - 1] - n / x * y[n];
  return r;
}

/// H^(1)_n(x) for integer n >= 0 by forward recurrence (stable for H = J + iY).
inline cplx hankel1(int n, double x) {
  auto h = hankel01(x);
  if (n == 0) return h.H0;
  cplx a = h.H0, b = h.H1;
  for (int k = 1; k < n; ++k) {
    const cplx c = 2.0 * k / x * b - a;
    a = b;
    b = c;
  }
  return b;
}

/// Logarithmic derivatives H^(1)'_n(x) / H^(1)_n(x) for n = 0..nmax via the
/// ratio recurrence r_{n+1} = 2n/x - 1/r_n, r_n = H_n / H_{n-1}.  Never overflows.
inline std::vector<cplx> hankel_log_derivatives(int nmax, double x) {
  if (!(x > 0.0)) throw std::domain_error("hankel_log_derivatives: x must be positive");
  std::vector<cplx> out(static_cast<std::size_t>(nmax) + 1);
  const auto h = hankel01(x);
  cplx r = h.H1 / h.H0;  // r_1
  out[0] = -r;
  for (int n = 1; n <= nmax; ++n) {
    out[n] = 1.0 / r - static_cast<double>(n) / x;
    r = 2.0 * n / x - 1.0 / r;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mathieu functions

enum class Parity { even, odd };

inline const char* to_string(Parity p) { return p == Parity::even ? "even" : "odd"; }

/// Fourier representation of ce_n / se_n:
///   even:  ce_n(eta) = sum_r coef[r] cos((first + 2r) eta)
///   odd:   se_n(eta) = sum_r coef[r] sin((first + 2r) eta)
/// coef has unit Euclidean norm; sign fixed by ce_n(0) > 0 or se_n'(0) > 0.
struct MathieuCoefficients {
  int order = 0;
  Parity parity = Parity::even;
  double q = 0;
  double a = 0;  // characteristic value a_n(q) or b_n(q)
  int first = 0;  // lowest harmonic (0, 1 or 2)
  std::vector<double> coef;

  int harmonic(std::size_t r) const { return first + 2 * static_cast<int>(r); }
};

namespace detail {

// Symmetric tridiagonal T (diag d, off-diagonal e of size N-1).
struct Tridiag {
  std::vector<double> d, e;
};

// Number of eigenvalues of T strictly less than x (Sturm count via LDL^T).
inline int sturm_count(const Tridiag& t, double x) {
  int count = 0;
  double piv = 1.0;
  const std::size_t n = t.d.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double e2 = i == 0 ? 0.0 : t.e[i - 1] * t.e[i - 1];
    piv = t.d[i] - x - (i == 0 ? 0.0 : e2 / piv);
    if (piv == 0.0) piv = -1e-300;
    if (piv < 0) ++count;
  }
  return count;
}

// index-th smallest eigenvalue (0-based) by bisection.
inline double tridiag_eigenvalue(const Tridiag& t, int index) {
  const std::size_t n = t.d.size();
  double lo = t.d[0], hi = t.d[0];
  for (std::size_t i = 0; i < n; ++i) {
    const double r = (i > 0 ? std::abs(t.e[i - 1]) : 0.0) + (i + 1 < n ? std::abs(t.e[i]) : 0.0);
    lo = std::min(lo, t.d[i] - r);
    hi = std::max(hi, t.d[i] + r);
  }
  lo -= 1.0;
  hi += 1.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if (sturm_count(t, mid) > index)
      hi = mid;
    else
      lo = mid;
  }
  return 0.5 * (lo + hi);
}

// Solve (T - shift I) x = b for tridiagonal T with partial pivoting.
inline std::vector<double> tridiag_solve(const Tridiag& t, double shift, std::vector<double> b) {
  const std::size_t n = t.d.size();
  // Row i holds up to 3 nonzeros at columns i, i+1, i+2 after pivoting.
  std::vector<double> a0(n), a1(n, 0.0), a2(n, 0.0), sub(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    a0[i] = t.d[i] - shift;
    if (i + 1 < n) a1[i] = t.e[i];
    if (i > 0) sub[i] = t.e[i - 1];
  }
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (std::abs(sub[i + 1]) > std::abs(a0[i])) {
      // swap rows i and i+1 (row i+1 = [sub, a0, a1] at cols i, i+1, i+2)
      std::swap(b[i], b[i + 1]);
      const double r0 = sub[i + 1], r1 = a0[i + 1], r2 = a1[i + 1];
      sub[i + 1] = a0[i];
      a0[i + 1] = a1[i];
      a1[i + 1] = a2[i];
      a0[i] = r0;
      a1[i] = r1;
      a2[i] = r2;
    }
    if (a0[i] == 0.0) a0[i] = 1e-300;
    const double f = sub[i + 1] / a0[i];
    a0[i + 1] -= f * a1[i];
    a1[i + 1] -= f * a2[i];
    b[i + 1] -= f * b[i];
  }
  if (a0[n - 1] == 0.0) a0[n - 1] = 1e-300;
  std::vector<double> x(n);
  for (std::size_t ii = n; ii-- > 0;) {
    double s = b[ii];
    if (ii + 1 < n) s -= a1[ii] * x[ii + 1];
    if (ii + 2 < n) s -= a2[ii] * x[ii + 2];
    x[ii] = s / a0[ii];
  }
  return x;
}

struct MathieuClass {
  int first;      // lowest harmonic
  int index;      // position of the requested order within the class
  bool sqrt2;     // even-even class: symmetrised first coupling
  double d0_add;  // +q / -q correction on the first diagonal entry
};

inline MathieuClass mathieu_class(int n, Parity parity, double q) {
  if (n < 0) throw std::invalid_argument("Mathieu order must be non-negative");
  if (parity == Parity::even) {
    if (n % 2 == 0) return {0, n / 2, true, 0.0};
    return {1, (n - 1) / 2, false, q};
  }
  if (n == 0) throw std::invalid_argument("odd Mathieu functions start at order 1");
  if (n % 2 == 1) return {1, (n - 1) / 2, false, -q};
  return {2, (n - 2) / 2, false, 0.0};
}

inline Tridiag mathieu_matrix(const MathieuClass& c, double q, int size) {
  Tridiag t;
  t.d.resize(size);
  t.e.assign(size - 1, q);
  for (int r = 0; r < size; ++r) {
    const double m = c.first + 2.0 * r;
    t.d[r] = m * m;
  }
  t.d[0] += c.d0_add;
  if (c.sqrt2 && size > 1) t.e[0] = std::sqrt(2.0) * q;
  return t;
}

}  // namespace detail

/// Characteristic value and Fourier coefficients of ce_n / se_n at q >= 0.  The
/// truncation is doubled until the characteristic value moves by < 1e-12
/// (relative to max(1,|a|)).
inline MathieuCoefficients mathieu_coefficients(int n, Parity parity, double q) {
  if (!(q >= 0.0)) throw std::domain_error("mathieu: q must be non-negative");
  const auto cls = detail::mathieu_class(n, parity, q);
  int size = std::max(cls.index + 12, static_cast<int>(std::ceil(std::sqrt(q))) + cls.index + 12);
  double a_prev = std::numeric_limits<double>::quiet_NaN();
  double a = 0.0;
  detail::Tridiag t;
  for (int attempt = 0; attempt < 12; ++attempt) {
    t = detail::mathieu_matrix(cls, q, size);
    a = detail::tridiag_eigenvalue(t, cls.index);
    if (std::abs(a - a_prev) < 1e-12 * std::max(1.0, std::abs(a))) break;
    a_prev = a;
    size *= 2;
    if (attempt == 11)
      throw std::runtime_error("mathieu: characteristic value failed to stabilise (order " +
                               std::to_string(n) + ", q=" + std::to_string(q) + ")");
  }
  // Inverse iteration for the eigenvector, starting from a smooth guess.
  const double scale = std::max(1.0, std::abs(a));
  std::vector<double> v(t.d.size(), 1.0);
  for (int it = 0; it < 3; ++it) {
    v = detail::tridiag_solve(t, a + 1e-13 * scale, v);
    double nrm = 0.0;
    for (double x : v) nrm += x * x;
    nrm = std::sqrt(nrm);
    for (double& x : v) x /= nrm;
  }
  MathieuCoefficients out;
  out.order = n;
  out.parity = parity;
  out.q = q;
  out.a = a;
  out.first = cls.first;
  out.coef = v;
  if (cls.sqrt2) out.coef[0] /= std::sqrt(2.0);
  double nrm = 0.0, sgn = 0.0;
  for (std::size_t r = 0; r < out.coef.size(); ++r) {
    nrm += out.coef[r] * out.coef[r];
    sgn += parity == Parity::even ? out.coef[r] : out.harmonic(r) * out.coef[r];
  }
  nrm = std::sqrt(nrm) * (sgn < 0 ? -1.0 : 1.0);
  for (double& x : out.coef) x /= nrm;
  // Trim the negligible tail.
  while (out.coef.size() > 1 && std::abs(out.coef.back()) < 1e-18) out.coef.pop_back();
  return out;
}

/// Characteristic value a_n(q) (even) or b_n(q) (odd).
inline double mathieu_char(int n, Parity parity, double q) {
  return mathieu_coefficients(n, parity, q).a;
}

struct ValueDeriv {
  double value = 0, deriv = 0;
};

/// Angular function ce_n(eta) or se_n(eta) and its derivative.
inline ValueDeriv angular_mathieu(const MathieuCoefficients& c, double eta) {
  ValueDeriv r;
  for (std::size_t i = 0; i < c.coef.size(); ++i) {
    const double m = c.harmonic(i);
    if (c.parity == Parity::even) {
      r.value += c.coef[i] * std::cos(m * eta);
      r.deriv -= m * c.coef[i] * std::sin(m * eta);
    } else {
      r.value += c.coef[i] * std::sin(m * eta);
      r.deriv += m * c.coef[i] * std::cos(m * eta);
    }
  }
  return r;
}

/// First-kind radial Mathieu function Mc^(1)_n / Ms^(1)_n at radial coordinate
/// xi >= 0 via the Bessel-product series
///   sum_k (-1)^{k+p} c_k [J_{k-s}(u1) J_{k+s+d}(u2) +/- J_{k+s+d}(u1) J_{k-s}(u2)] / (eps_s c_s)
/// with u1 = sqrt(q) e^{-xi}, u2 = sqrt(q) e^{xi}.  The pivot index s is the
/// largest coefficient, so the result does not depend on small leading terms.
inline ValueDeriv radial_mathieu(const MathieuCoefficients& c, double xi, int pivot = -1) {
  if (!(c.q > 0.0)) throw std::domain_error("radial_mathieu: q must be positive");
  if (!(xi >= 0.0)) throw std::domain_error("radial_mathieu: xi must be non-negative");
  const int nc = static_cast<int>(c.coef.size());
  int s = pivot;
  if (s < 0) {
    s = 0;
    for (int r = 1; r < nc; ++r)
      if (std::abs(c.coef[r]) > std::abs(c.coef[s])) s = r;
  }
  const double sq = std::sqrt(c.q);
  const double u1 = sq * std::exp(-xi), u2 = sq * std::exp(xi);
  const int d = c.first == 2 ? 2 : (c.first == 1 ? 1 : 0);
  const int jmax = nc + s + d + 2;
  const auto j1 = bessel_j_sequence(jmax + 1, u1);
  const auto j2 = bessel_j_sequence(jmax + 1, u2);
  auto jv = [](const std::vector<double>& j, int m) {
    return m >= 0 ? j[m] : ((-m) % 2 == 0 ? j[-m] : -j[-m]);
  };
  // J_m' = (J_{m-1} - J_{m+1}) / 2 holds for every integer m
  auto djv = [&](const std::vector<double>& j, int m) { return 0.5 * (jv(j, m - 1) - jv(j, m + 1)); };
  const bool odd = c.parity == Parity::odd;
  const double sign_pair = odd ? -1.0 : 1.0;
  const int p = c.order / 2 - (c.first == 2 ? 1 : 0);
  double val = 0.0, der = 0.0;
  for (int k = 0; k < nc; ++k) {
    const int lo = k - s, hi = k + s + d;
    const double a1 = jv(j1, lo), b2 = jv(j2, hi), b1 = jv(j1, hi), a2 = jv(j2, lo);
    const double da1 = -u1 * djv(j1, lo), db2 = u2 * djv(j2, hi);
    const double db1 = -u1 * djv(j1, hi), da2 = u2 * djv(j2, lo);
    const double term = a1 * b2 + sign_pair * b1 * a2;
    const double dterm = da1 * b2 + a1 * db2 + sign_pair * (db1 * a2 + b1 * da2);
    const double w = (((k + p) % 2 == 0) ? 1.0 : -1.0) * c.coef[k];
    val += w * term;
    der += w * dterm;
  }
  const double eps = (d == 0 && s == 0) ? 2.0 : 1.0;
  const double norm = eps * c.coef[s];
  return {val / norm, der / norm};
}

/// Convenience overload computing the coefficients internally.
inline ValueDeriv radial_mathieu(int n, Parity parity, double q, double xi) {
  return radial_mathieu(mathieu_coefficients(n, parity, q), xi);
}

}  // namespace htlab::specfun
