#pragma once

// Quadrature rules on [0,1]: Gauss-Legendre, Gauss with weight -ln(x), and a
// degree-5 seven-point rule on the reference triangle.

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace htlab::quad {

struct Rule {
  std::vector<double> x, w;
  std::size_t size() const { return x.size(); }
};

namespace detail {

// Golub-Welsch: nodes and weights from a Jacobi matrix (alpha, beta), mu0 = beta[0].
inline Rule golub_welsch(const std::vector<double>& alpha, const std::vector<double>& beta) {
  const int n = static_cast<int>(alpha.size());
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) J(i, i) = alpha[i];
  for (int i = 1; i < n; ++i) J(i, i - 1) = J(i - 1, i) = std::sqrt(beta[i]);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  Rule r;
  for (int i = 0; i < n; ++i) {
    r.x.push_back(es.eigenvalues()(i));
    const double v = es.eigenvectors()(0, i);
    r.w.push_back(beta[0] * v * v);
  }
  return r;
}

}  // namespace detail

/// n-point Gauss-Legendre rule on [0,1].
inline Rule gauss_legendre(int n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: n must be positive");
  // monic shifted Legendre: alpha = 1/2, beta_k = k^2 / (4 (4k^2 - 1)), beta_0 = 1
  std::vector<double> alpha(n, 0.5), beta(n);
  beta[0] = 1.0;
  for (int k = 1; k < n; ++k) beta[k] = k * k / (4.0 * (4.0 * k * k - 1.0));
  Rule r = detail::golub_welsch(alpha, beta);
  // polish nodes by Newton on P_n(2x-1)
  for (auto& x : r.x) {
    for (int it = 0; it < 3; ++it) {
      const double t = 2 * x - 1;
      double p0 = 1, p1 = t;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2 * k - 1) * t * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      const double pn = n == 1 ? t : p1, pm = n == 1 ? 1.0 : p0;
      const double dp = n * (t * pn - pm) / (t * t - 1);
      x -= 0.5 * pn / dp;
    }
  }
  for (std::size_t i = 0; i < r.x.size(); ++i) {
    const double t = 2 * r.x[i] - 1;
    double p0 = 1, p1 = t;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2 * k - 1) * t * p1 - (k - 1) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    const double pm = n == 1 ? 1.0 : p0;
    // w = 2 (1 - t^2) / (n P_{n-1}(t))^2 on [-1,1], halved for [0,1]
    r.w[i] = (1 - t * t) / (n * n * pm * pm);
  }
  return r;
}

/// n-point Gauss rule for the weight -ln(x) on [0,1]
/// (exact for polynomials of degree < 2n against -ln x), from modified moments
/// of the shifted Legendre polynomials by the modified Chebyshev algorithm.
inline Rule gauss_log(int n) {
  if (n < 1 || n > 40) throw std::invalid_argument("gauss_log: n must be in [1, 40]");
  const int m = 2 * n;
  // int_0^1 -ln x P*_l(x) dx = 1 (l = 0), (-1)^l / (l (l+1)) otherwise; P*_l has
  // leading coefficient (2l)!/(l!)^2, so the monic moments carry its inverse.
  std::vector<double> mom(m);
  double inv_lead = 1.0;
  for (int l = 0; l < m; ++l) {
    if (l > 0) inv_lead *= static_cast<double>(l) * l / ((2.0 * l) * (2.0 * l - 1));
    const double nu = l == 0 ? 1.0 : ((l % 2 == 1) ? -1.0 : 1.0) / (static_cast<double>(l) * (l + 1));
    mom[l] = nu * inv_lead;
  }
  std::vector<double> a(m, 0.5), b(m, 0.0);
  for (int k = 1; k < m; ++k) b[k] = k * k / (4.0 * (4.0 * k * k - 1.0));
  std::vector<double> alpha(n), beta(n);
  std::vector<double> sig_prev(m + 1, 0.0), sig(m + 1, 0.0), sig_next(m + 1, 0.0);
  for (int l = 0; l < m; ++l) sig[l] = mom[l];
  alpha[0] = a[0] + mom[1] / mom[0];
  beta[0] = mom[0];
  for (int k = 1; k < n; ++k) {
    for (int l = k; l <= m - k - 1; ++l) {
      sig_next[l] = sig[l + 1] - (alpha[k - 1] - a[l]) * sig[l] - beta[k - 1] * sig_prev[l] + b[l] * sig[l - 1];
    }
    alpha[k] = a[k] + sig_next[k + 1] / sig_next[k] - sig[k] / sig[k - 1];
    beta[k] = sig_next[k] / sig[k - 1];
    sig_prev = sig;
    sig = sig_next;
  }
  return detail::golub_welsch(alpha, beta);
}

/// Seven-point degree-5 rule on the reference triangle (0,0),(1,0),(0,1);
/// barycentric points with weights summing to 1 (multiply by the area).
struct TriangleRule {
  std::array<std::array<double, 3>, 7> bary;
  std::array<double, 7> w;
};

inline const TriangleRule& triangle7() {
  static const TriangleRule r = [] {
    TriangleRule t{};
    const double a1 = 0.059715871789769820, b1 = 0.470142064105115090;
    const double a2 = 0.797426985353087322, b2 = 0.101286507323456339;
    const double w0 = 0.225, w1 = 0.132394152788506181, w2 = 0.125939180544827153;
    t.bary[0] = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    t.w[0] = w0;
    t.bary[1] = {a1, b1, b1};
    t.bary[2] = {b1, a1, b1};
    t.bary[3] = {b1, b1, a1};
    t.bary[4] = {a2, b2, b2};
    t.bary[5] = {b2, a2, b2};
    t.bary[6] = {b2, b2, a2};
    for (int i = 1; i <= 3; ++i) t.w[i] = w1;
    for (int i = 4; i <= 6; ++i) t.w[i] = w2;
    return t;
  }();
  return r;
}

}  // namespace htlab::quad
