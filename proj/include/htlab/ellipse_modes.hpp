#pragma once

// Dirichlet eigenmodes of the ellipse (x/a1)^2 + (y/a2)^2 < 1 in elliptic
// coordinates x = c cosh(xi) cos(eta), y = c sinh(xi) sin(eta), and an
// independent P1 finite-element oracle for the frequencies.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "htlab/eigsolve.hpp"
#include "htlab/fem.hpp"
#include "htlab/mesh.hpp"
#include "htlab/specfun.hpp"

namespace htlab {

using specfun::Parity;

struct EllipseMode {
  Parity parity = Parity::even;
  int m = 0;  // interior zeros of the radial factor on (0, xi0)
  int n = 0;  // zeros of the angular factor on [0, pi); also the Mathieu order
  double k = 0;
  double q = 0;
  double a = 0;    // characteristic value
  double xi0 = 0;  // boundary coordinate atanh(a2/a1)
  double a1 = 1, a2 = 0.5;
  double scale = 1;  // field = scale * angular * radial, unit L2(E) norm
  specfun::MathieuCoefficients coefs;

  double focal() const { return std::sqrt(a1 * a1 - a2 * a2); }
  std::string label() const {
    return std::string(parity == Parity::even ? "e" : "o") + ":" + std::to_string(m) + ":" + std::to_string(n);
  }
};

class ModeSearchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModeSearchOptions {
  double k_min = 0.05;
  double k_max = 120.0;
  double dk = 0.05;
  bool normalize = true;
};

/// Parses "e:m:n" / "o:m:n".
struct ModeLabel {
  Parity parity = Parity::even;
  int m = 0, n = 0;
};

inline ModeLabel parse_mode_label(const std::string& s) {
  ModeLabel l;
  const auto p1 = s.find(':');
  const auto p2 = p1 == std::string::npos ? std::string::npos : s.find(':', p1 + 1);
  if (p1 == std::string::npos || p2 == std::string::npos) throw std::invalid_argument("mode label '" + s + "' is not of the form e:m:n or o:m:n");
  const std::string par = s.substr(0, p1);
  if (par == "e" || par == "even")
    l.parity = Parity::even;
  else if (par == "o" || par == "odd")
    l.parity = Parity::odd;
  else
    throw std::invalid_argument("mode label '" + s + "': parity must be e or o");
  try {
    std::size_t used = 0;
    l.m = std::stoi(s.substr(p1 + 1, p2 - p1 - 1), &used);
    l.n = std::stoi(s.substr(p2 + 1), &used);
    if (used != s.size() - p2 - 1) throw std::invalid_argument("");
  } catch (const std::exception&) {
    throw std::invalid_argument("mode label '" + s + "': m and n must be integers");
  }
  if (l.m < 0 || l.n < 0) throw std::invalid_argument("mode label '" + s + "': m and n must be non-negative");
  if (l.parity == Parity::odd && l.n == 0) throw std::invalid_argument("mode label '" + s + "': odd modes need n >= 1");
  return l;
}

namespace detail {

/// Sign changes of a sampled function; samples with |x| <= floor * max|x| are skipped.
inline int sign_changes(const std::vector<double>& v, double floor = 0) {
  double vmax = 0;
  for (double x : v) vmax = std::max(vmax, std::abs(x));
  int count = 0;
  double last = 0;
  for (double x : v) {
    if (std::abs(x) <= floor * vmax) continue;
    if (last != 0 && (x > 0) != (last > 0)) ++count;
    last = x;
  }
  return count;
}

inline int radial_zero_count(const specfun::MathieuCoefficients& c, double xi0, int samples = 400) {
  std::vector<double> v;
  for (int i = 1; i < samples; ++i) v.push_back(specfun::radial_mathieu(c, xi0 * i / samples).value);
  return sign_changes(v);
}

// Brent's method on [a, b] with f(a) f(b) < 0.
template <typename F>
double brent_root(F&& f, double a, double b, double fa, double fb, double xtol) {
  double c = a, fc = fa, d = b - a, e = d;
  for (int it = 0; it < 200; ++it) {
    if ((fb > 0) == (fc > 0)) {
      c = a;
      fc = fa;
      d = e = b - a;
    }
    if (std::abs(fc) < std::abs(fb)) {
      a = b;
      b = c;
      c = a;
      fa = fb;
      fb = fc;
      fc = fa;
    }
    const double tol = 2 * std::numeric_limits<double>::epsilon() * std::abs(b) + 0.5 * xtol;
    const double m = 0.5 * (c - b);
    if (std::abs(m) <= tol || fb == 0) return b;
    if (std::abs(e) >= tol && std::abs(fa) > std::abs(fb)) {
      double p, q, r;
      const double s = fb / fa;
      if (a == c) {
        p = 2 * m * s;
        q = 1 - s;
      } else {
        q = fa / fc;
        r = fb / fc;
        p = s * (2 * m * q * (q - r) - (b - a) * (r - 1));
        q = (q - 1) * (r - 1) * (s - 1);
      }
      if (p > 0)
        q = -q;
      else
        p = -p;
      if (2 * p < std::min(3 * m * q - std::abs(tol * q), std::abs(e * q))) {
        e = d;
        d = p / q;
      } else {
        d = m;
        e = m;
      }
    } else {
      d = m;
      e = m;
    }
    a = b;
    fa = fb;
    b += std::abs(d) > tol ? d : (m > 0 ? tol : -tol);
    fb = f(b);
  }
  return b;
}

}  // namespace detail

struct FieldSample {
  double value = 0, dx = 0, dy = 0;
};

/// Mode field and gradient at p (inside the closed ellipse).
inline FieldSample ellipse_mode_eval(const EllipseMode& mode, Vec2 p) {
  const double r = (p.x / mode.a1) * (p.x / mode.a1) + (p.y / mode.a2) * (p.y / mode.a2);
  if (!(r <= 1 + 1e-12)) throw std::out_of_range("ellipse_mode_field: point outside the ellipse");
  const double c = mode.focal();
  const std::complex<double> w = std::acosh(std::complex<double>(p.x, p.y) / c);
  const double xi = std::min(std::abs(w.real()), mode.xi0), eta = w.real() < 0 ? -w.imag() : w.imag();
  const auto A = specfun::angular_mathieu(mode.coefs, eta);
  const auto R = specfun::radial_mathieu(mode.coefs, xi);
  FieldSample s;
  s.value = mode.scale * A.value * R.value;
  const std::complex<double> dz = c * std::sinh(w);
  if (std::abs(dz) > 1e-9 * c) {
    // u_x - i u_y = (u_xi - i u_eta) / (dz/dw)
    const std::complex<double> g = std::complex<double>(A.value * R.deriv, -A.deriv * R.value) / dz;
    s.dx = mode.scale * g.real();
    s.dy = -mode.scale * g.imag();
  } else {
    // at a focus: one-sided differences toward the interior
    const double h = 1e-6 * c, sx = p.x > 0 ? -1.0 : 1.0;
    const double f0 = s.value;
    s.dx = sx * (ellipse_mode_eval(mode, {p.x + sx * h, p.y}).value - f0) / h;
    s.dy = (ellipse_mode_eval(mode, {p.x, p.y + h}).value - ellipse_mode_eval(mode, {p.x, p.y - h}).value) / (2 * h);
  }
  return s;
}

inline double ellipse_mode_field(const EllipseMode& mode, Vec2 p) { return ellipse_mode_eval(mode, p).value; }

/// Midpoint rule on a grid x grid partition of the bounding box of the
/// ellipse; points outside contribute nothing.
template <typename F>
double ellipse_grid_integral(double a1, double a2, int grid, F&& f) {
  const double hx = 2 * a1 / grid, hy = 2 * a2 / grid;
  double s = 0;
  for (int i = 0; i < grid; ++i) {
    const double x = -a1 + (i + 0.5) * hx;
    for (int j = 0; j < grid; ++j) {
      const double y = -a2 + (j + 0.5) * hy;
      if ((x / a1) * (x / a1) + (y / a2) * (y / a2) >= 1) continue;
      s += f(Vec2{x, y});
    }
  }
  return s * hx * hy;
}

inline constexpr int kNormGrid = 400;

/// Sets mode.scale so the discrete L2(E) norm (400 x 400 midpoint rule) is 1.
inline void normalize_mode(EllipseMode& mode) {
  mode.scale = 1;
  const double n2 = ellipse_grid_integral(mode.a1, mode.a2, kNormGrid, [&](Vec2 p) {
    const double u = ellipse_mode_field(mode, p);
    return u * u;
  });
  if (!(n2 > 0)) throw ModeSearchError("normalize_mode: zero field");
  mode.scale = 1 / std::sqrt(n2);
}

/// Dirichlet frequency k_{m,n} of the ellipse by scanning k for sign changes
/// of the radial factor at xi0 and selecting the root whose radial factor has
/// m interior zeros.
inline EllipseMode ellipse_mode_frequency(int m, int n, Parity parity, double a1, double a2, const ModeSearchOptions& opt = {}) {
  if (!(a1 > a2 && a2 > 0)) throw std::invalid_argument("ellipse_mode_frequency: need a1 > a2 > 0");
  if (m < 0 || n < 0) throw std::invalid_argument("ellipse_mode_frequency: m and n must be non-negative");
  if (parity == Parity::odd && n == 0) throw std::invalid_argument("ellipse_mode_frequency: odd modes need n >= 1");
  EllipseMode mode;
  mode.parity = parity;
  mode.m = m;
  mode.n = n;
  mode.a1 = a1;
  mode.a2 = a2;
  mode.xi0 = std::atanh(a2 / a1);
  const double c = mode.focal();
  auto qk = [&](double k) { return 0.25 * k * k * c * c; };
  auto f = [&](double k) { return specfun::radial_mathieu(specfun::mathieu_coefficients(n, parity, qk(k)), mode.xi0).value; };
  double k0 = opt.k_min, f0 = f(k0);
  for (double k1 = k0 + opt.dk; k1 <= opt.k_max + 1e-12; k1 += opt.dk) {
    const double f1 = f(k1);
    if (f0 != 0 && (f0 > 0) != (f1 > 0)) {
      const double kr = detail::brent_root(f, k0, k1, f0, f1, 1e-14 * k1);
      const auto coefs = specfun::mathieu_coefficients(n, parity, qk(kr));
      const int zeros = detail::radial_zero_count(coefs, mode.xi0);
      if (zeros == m) {
        mode.k = kr;
        mode.q = qk(kr);
        mode.coefs = coefs;
        mode.a = coefs.a;
        if (opt.normalize) normalize_mode(mode);
        return mode;
      }
      if (zeros > m)
        throw ModeSearchError("ellipse_mode_frequency: branch " + mode.label() + " skipped (root at k = " + std::to_string(kr) +
                              " has " + std::to_string(zeros) + " radial zeros)");
    }
    k0 = k1;
    f0 = f1;
  }
  throw ModeSearchError("ellipse_mode_frequency: no bracket for " + mode.label() + " in k in [" + std::to_string(opt.k_min) +
                        ", " + std::to_string(opt.k_max) + "]");
}

inline EllipseMode ellipse_mode_frequency(const ModeLabel& l, double a1, double a2, const ModeSearchOptions& opt = {}) {
  return ellipse_mode_frequency(l.m, l.n, l.parity, a1, a2, opt);
}

// ---------------------------------------------------------------------------
// Finite-element oracle

struct FemModeCandidate {
  double k = 0;
  Parity parity = Parity::even;
  int m = -1, n = -1;
};

struct FemOracleResult {
  double k = 0;            // matched P1 frequency
  double h = 0;            // realized mesh h_max
  int n_dofs = 0;
  std::vector<FemModeCandidate> candidates;
};

/// Mesh of the ellipse interior with target size h.
inline Mesh ellipse_mesh(double a1, double a2, double h) {
  DomainSpec dom;
  dom.obstacle = ellipse_curve({0, 0}, a1, a2);
  dom.R = a1 + 0.25;
  MeshOptions o;
  o.obstacle_interior = true;
  return generate_mesh(dom, [&](Vec2 p) { return (p.x / a1) * (p.x / a1) + (p.y / a2) * (p.y / a2) <= 1.2 ? h : 0.1; }, o);
}

namespace detail {

// Labels of a P1 eigenvector: parity from the y -> -y reflection, zero counts
// along confocal ellipses (angular) and hyperbola branches (radial).
inline FemModeCandidate classify_fem_mode(const Mesh& mesh, const PointLocator& loc, const std::vector<double>& u, double a1,
                                          double a2) {
  FemModeCandidate c;
  const double cf = std::sqrt(a1 * a1 - a2 * a2), xi0 = std::atanh(a2 / a1);
  auto at = [&](double xi, double eta, double& out) {
    const Vec2 p{cf * std::cosh(xi) * std::cos(eta), cf * std::sinh(xi) * std::sin(eta)};
    return loc.interpolate(u, p, out);
  };
  // parity
  double sym = 0, anti = 0;
  for (int i = 1; i < 40; ++i)
    for (int j = 1; j < 10; ++j) {
      const double xi = xi0 * i / 40, eta = std::numbers::pi * j / 10;
      double up = 0, um = 0;
      if (!at(xi, eta, up) || !at(xi, -eta, um)) continue;
      sym += (up - um) * (up - um);
      anti += (up + um) * (up + um);
    }
  c.parity = sym < anti ? Parity::even : Parity::odd;
  (void)mesh;
  // Angular zeros along xi = const, radial zeros along eta = const.  Probe lines
  // close to a nodal curve (peak below 20% of the global peak) are dropped and
  // samples below 1% of the global peak ignored, so exponentially small tails
  // and P1 noise do not add sign changes.  The most frequent count wins.
  double peak = 0;
  for (double x : u) peak = std::max(peak, std::abs(x));
  auto count = [&](const std::vector<double>& v) {
    double vmax = 0;
    for (double x : v) vmax = std::max(vmax, std::abs(x));
    if (vmax < 0.2 * peak) return -1;
    return sign_changes(v, 0.01 * peak / vmax);
  };
  auto most_frequent = [](const std::vector<int>& xs) {
    int best = -1, best_n = 0;
    for (int x : xs) {
      if (x < 0) continue;
      const int n = static_cast<int>(std::count(xs.begin(), xs.end(), x));
      if (n > best_n || (n == best_n && x < best)) {
        best = x;
        best_n = n;
      }
    }
    return best;
  };
  constexpr int kProbes = 14;
  std::vector<int> ns, ms;
  for (int p = 0; p < kProbes; ++p) {
    const double fx = 0.3 + 0.65 * p / (kProbes - 1);
    std::vector<double> v;
    for (int j = 1; j < 720; ++j) {
      double val = 0;
      if (at(fx * xi0, std::numbers::pi * j / 720, val)) v.push_back(val);
    }
    const int z = count(v);
    ns.push_back(z < 0 ? -1 : z + (c.parity == Parity::odd ? 1 : 0));
  }
  for (int p = 0; p < kProbes; ++p) {
    const double fe = 0.3 + 0.68 * p / (kProbes - 1);
    std::vector<double> v;
    for (int i = 1; i < 400; ++i) {
      double val = 0;
      if (at(xi0 * i / 400 * 0.995, fe * std::numbers::pi / 2, val)) v.push_back(val);
    }
    ms.push_back(count(v));
  }
  c.n = most_frequent(ns);
  c.m = most_frequent(ms);
  return c;
}

}  // namespace detail

/// P1 Dirichlet eigenfrequency of the ellipse for the mode (m, n, parity),
/// identified among the eigenpairs nearest k_guess by parity and zero counts.
inline FemOracleResult fem_ellipse_oracle(int m, int n, Parity parity, double a1, double a2, double h, double k_guess,
                                          int nev = 12) {
  if (!(h > 0)) throw std::invalid_argument("fem_ellipse_oracle: h must be positive");
  const Mesh mesh = ellipse_mesh(a1, a2, h);
  const auto fem = assemble_fem(mesh, 0.0, {BoundaryTag::GammaD});
  const double sigma = k_guess * k_guess;
  SpMat Ashift = fem.K - sigma * fem.M;
  const SpMatC A = Ashift.cast<cplx>(), B = fem.M.cast<cplx>();
  const auto lu = lu_factor(A);
  ArnoldiOptions o;
  o.nev = nev;
  const auto recs = shift_invert_eigs(lu, A, B, o);
  FemOracleResult res;
  res.h = mesh.h_max;
  res.n_dofs = fem.n_dofs();
  const PointLocator loc(mesh);
  std::vector<const FemModeCandidate*> hits;
  res.candidates.reserve(recs.size());
  for (const auto& r : recs) {
    const double lam = sigma + r.mu.real();
    if (lam <= 0) continue;
    // real eigenvector: rotate the phase of the largest entry to zero
    Eigen::Index imax = 0;
    r.vector.cwiseAbs().maxCoeff(&imax);
    const Eigen::VectorXd v = (r.vector * std::polar(1.0, -std::arg(r.vector[imax]))).real();
    const auto nodes = dofs_to_nodes<double>(fem, v);
    auto cand = detail::classify_fem_mode(mesh, loc, nodes, a1, a2);
    cand.k = std::sqrt(lam);
    res.candidates.push_back(cand);
  }
  for (const auto& c : res.candidates)
    if (c.parity == parity && c.m == m && c.n == n) hits.push_back(&c);
  const std::string label = std::string(parity == Parity::even ? "e" : "o") + ":" + std::to_string(m) + ":" + std::to_string(n);
  if (hits.empty()) throw ModeSearchError("fem_ellipse_oracle: no eigenpair near k = " + std::to_string(k_guess) + " matches " + label);
  if (hits.size() > 1)
    throw ModeSearchError("fem_ellipse_oracle: ambiguous identification of " + label + " (" + std::to_string(hits.size()) + " candidates)");
  res.k = hits.front()->k;
  return res;
}

struct RichardsonResult {
  double k_fine = 0, k_coarse = 0, k_extrapolated = 0;
  double h_fine = 0, h_coarse = 0;
};

/// Oracle at h and 2h with one Richardson step on the eigenvalue (P1: O(h^2)).
inline RichardsonResult fem_ellipse_richardson(int m, int n, Parity parity, double a1, double a2, double h, double k_guess) {
  RichardsonResult r;
  const auto fine = fem_ellipse_oracle(m, n, parity, a1, a2, h, k_guess);
  const auto coarse = fem_ellipse_oracle(m, n, parity, a1, a2, 2 * h, k_guess);
  r.k_fine = fine.k;
  r.k_coarse = coarse.k;
  r.h_fine = fine.h;
  r.h_coarse = coarse.h;
  const double lf = fine.k * fine.k, lc = coarse.k * coarse.k;
  r.k_extrapolated = std::sqrt((4 * lf - lc) / 3);
  return r;
}

}  // namespace htlab
