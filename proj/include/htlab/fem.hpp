#pragma once

// P1 finite elements on a Mesh: stiffness, mass, Dirichlet elimination, the
// boundary P1 space on the truncation circle and the trace coupling matrix.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <ostream>
#include <set>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "htlab/mesh.hpp"

namespace htlab {

using cplx = std::complex<double>;
// Symmetric real matrices: the column-compressed arrays are also the
// row-compressed ones.
using SpMat = Eigen::SparseMatrix<double>;
using SpMatC = Eigen::SparseMatrix<cplx>;

using Mat3 = std::array<std::array<double, 3>, 3>;

/// Element stiffness int grad(phi_i) . grad(phi_j) for the P1 triangle abc.
inline Mat3 element_stiffness(Vec2 a, Vec2 b, Vec2 c) {
  const double area2 = cross(b - a, c - a);
  if (!(area2 > 0)) throw std::invalid_argument("element_stiffness: triangle must be counterclockwise and non-degenerate");
  // gradient of phi_i is perp(edge opposite i) / area2
  const std::array<Vec2, 3> e{c - b, a - c, b - a};
  Mat3 k{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) k[i][j] = dot(e[i], e[j]) / (2 * area2);
  return k;
}

/// Element mass area/12 * [2 1 1; 1 2 1; 1 1 2].
inline Mat3 element_mass(Vec2 a, Vec2 b, Vec2 c) {
  const double area = 0.5 * cross(b - a, c - a);
  Mat3 m{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m[i][j] = area / 12 * (i == j ? 2 : 1);
  return m;
}

struct FullMatrices {
  SpMat K, M;
};

/// Stiffness and mass on all mesh nodes (no boundary conditions).
inline FullMatrices assemble_full(const Mesh& mesh) {
  const int n = static_cast<int>(mesh.nodes.size());
  std::vector<Eigen::Triplet<double>> tk, tm;
  tk.reserve(9 * mesh.triangles.size());
  tm.reserve(9 * mesh.triangles.size());
  for (const auto& t : mesh.triangles) {
    const Vec2 a = mesh.nodes[t[0]], b = mesh.nodes[t[1]], c = mesh.nodes[t[2]];
    const Mat3 ke = element_stiffness(a, b, c), me = element_mass(a, b, c);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        tk.emplace_back(t[i], t[j], ke[i][j]);
        tm.emplace_back(t[i], t[j], me[i][j]);
      }
  }
  FullMatrices f;
  f.K.resize(n, n);
  f.M.resize(n, n);
  f.K.setFromTriplets(tk.begin(), tk.end());
  f.M.setFromTriplets(tm.begin(), tm.end());
  return f;
}

/// Maps nodes to retained dofs; nodes on edges tagged in `dirichlet` are
/// eliminated (-1).
inline std::vector<int> make_dof_map(const Mesh& mesh, const std::set<BoundaryTag>& dirichlet) {
  std::vector<int> map(mesh.nodes.size(), 0);
  for (const auto& e : mesh.boundary_edges)
    if (dirichlet.count(e.tag)) map[e.a] = map[e.b] = -1;
  int next = 0;
  for (auto& m : map)
    if (m == 0) m = next++;
  return map;
}

/// Restriction of a node-indexed matrix to retained dofs.
inline SpMat eliminate(const SpMat& A, const std::vector<int>& dof_map) {
  int n = 0;
  for (int d : dof_map) n = std::max(n, d + 1);
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(A.nonZeros());
  for (int col = 0; col < A.outerSize(); ++col)
    for (SpMat::InnerIterator it(A, col); it; ++it) {
      const int i = dof_map[it.row()], j = dof_map[it.col()];
      if (i >= 0 && j >= 0) t.emplace_back(i, j, it.value());
    }
  SpMat R(n, n);
  R.setFromTriplets(t.begin(), t.end());
  return R;
}

struct AssembledFem {
  SpMat K, M;   // on retained dofs
  SpMatC A_k;   // K - k^2 M
  double k = 0;
  std::vector<int> dof_map;    // node -> dof, -1 when eliminated
  std::vector<int> dof_nodes;  // dof -> node
  std::vector<int> gamma_tr_dofs;

  int n_dofs() const { return static_cast<int>(dof_nodes.size()); }
};

inline SpMatC helmholtz_matrix(const SpMat& K, const SpMat& M, double k) {
  SpMat A = K - (k * k) * M;
  return A.cast<cplx>();
}

/// P1 Helmholtz matrices with homogeneous Dirichlet conditions on the tagged
/// boundaries eliminated.
inline AssembledFem assemble_fem(const Mesh& mesh, double k, const std::set<BoundaryTag>& dirichlet = {BoundaryTag::GammaD}) {
  if (!(k >= 0)) throw std::invalid_argument("assemble_fem: k must be nonnegative");
  const auto q = validate_mesh(mesh);
  if (!q.degenerate.empty())
    throw std::invalid_argument("assemble_fem: invalid mesh (triangle " + std::to_string(q.degenerate.front()) + " degenerate)");
  AssembledFem f;
  f.k = k;
  f.dof_map = make_dof_map(mesh, dirichlet);
  for (std::size_t v = 0; v < f.dof_map.size(); ++v)
    if (f.dof_map[v] >= 0) f.dof_nodes.push_back(static_cast<int>(v));
  if (f.dof_nodes.empty()) throw std::invalid_argument("assemble_fem: no degrees of freedom left after elimination");
  const auto full = assemble_full(mesh);
  f.K = eliminate(full.K, f.dof_map);
  f.M = eliminate(full.M, f.dof_map);
  f.A_k = helmholtz_matrix(f.K, f.M, k);
  for (int v : mesh.boundary_nodes(BoundaryTag::GammaTr))
    if (f.dof_map[v] >= 0) f.gamma_tr_dofs.push_back(f.dof_map[v]);
  return f;
}

/// P1 space on the truncation circle, nodes ordered counterclockwise by angle
/// starting from the smallest angle in [0, 2 pi).
struct BoundarySpace {
  double R = 0;
  Vec2 center;
  std::vector<int> mesh_nodes;  // mesh node of each boundary basis function
  std::vector<double> theta;    // angles, increasing
  bool uniform = false;         // equally spaced angles

  int size() const { return static_cast<int>(theta.size()); }
  double dtheta(int p) const {  // angular length of panel p = [theta_p, theta_{p+1}]
    const int n = size();
    double d = (p + 1 < n ? theta[p + 1] : theta[0] + 2 * std::numbers::pi) - theta[p];
    return d;
  }
};

inline BoundarySpace make_boundary_space(const Mesh& mesh, double R, Vec2 center = {0, 0}) {
  BoundarySpace b;
  b.R = R;
  b.center = center;
  std::vector<std::pair<double, int>> nodes;
  for (int v : mesh.boundary_nodes(BoundaryTag::GammaTr)) {
    const Vec2 d = mesh.nodes[v] - center;
    if (std::abs(norm(d) - R) > std::max(1e-9, mesh.h_max * mesh.h_max))
      throw std::invalid_argument("make_boundary_space: GammaTr node off the truncation circle");
    double t = std::atan2(d.y, d.x);
    if (t < 0) t += 2 * std::numbers::pi;
    nodes.push_back({t, v});
  }
  if (nodes.size() < 3) throw std::invalid_argument("make_boundary_space: fewer than three GammaTr nodes");
  std::sort(nodes.begin(), nodes.end());
  for (auto& [t, v] : nodes) {
    b.theta.push_back(t);
    b.mesh_nodes.push_back(v);
  }
  const int n = b.size();
  const double d0 = 2 * std::numbers::pi / n;
  b.uniform = true;
  for (int p = 0; p < n; ++p)
    if (std::abs(b.dtheta(p) - d0) > 1e-12) b.uniform = false;
  return b;
}

/// Uniform boundary space on a circle with n nodes at theta = 2 pi j / n
/// (used by the boundary-operator oracles without a volume mesh).
inline BoundarySpace uniform_boundary_space(int n, double R, Vec2 center = {0, 0}) {
  BoundarySpace b;
  b.R = R;
  b.center = center;
  b.uniform = true;
  for (int j = 0; j < n; ++j) {
    b.theta.push_back(2 * std::numbers::pi * j / n);
    b.mesh_nodes.push_back(j);
  }
  return b;
}

struct TraceMatrix {
  SpMat Mtr;  // boundary basis x FEM dofs: <gamma_0 v_j, psi_i>
  SpMat Mb;   // boundary mass <psi_j, psi_i>
  SpMat E;    // boundary basis x FEM dofs selection (trace of nodal values)
};

/// Trace coupling by exact integration of hat products on the boundary edges
/// (L/3 on the diagonal, L/6 off it), L the edge length.
inline TraceMatrix assemble_trace(const Mesh& mesh, const AssembledFem& fem, const BoundarySpace& bs) {
  const int nb = bs.size();
  std::vector<int> bindex(mesh.nodes.size(), -1);
  for (int i = 0; i < nb; ++i) bindex[bs.mesh_nodes[i]] = i;
  std::vector<Eigen::Triplet<double>> tmb, te;
  int edges = 0;
  for (const auto& e : mesh.boundary_edges) {
    if (e.tag != BoundaryTag::GammaTr) continue;
    const int i = bindex[e.a], j = bindex[e.b];
    if (i < 0 || j < 0) throw std::invalid_argument("assemble_trace: GammaTr edge node missing from the boundary space");
    if ((i + 1) % nb != j && (j + 1) % nb != i)
      throw std::invalid_argument("assemble_trace: boundary space nodes do not match the mesh GammaTr edges");
    const double L = dist(mesh.nodes[e.a], mesh.nodes[e.b]);
    tmb.emplace_back(i, i, L / 3);
    tmb.emplace_back(j, j, L / 3);
    tmb.emplace_back(i, j, L / 6);
    tmb.emplace_back(j, i, L / 6);
    ++edges;
  }
  if (edges != nb) throw std::invalid_argument("assemble_trace: boundary space and mesh disagree on the number of GammaTr edges");
  for (int i = 0; i < nb; ++i) {
    const int d = fem.dof_map[bs.mesh_nodes[i]];
    if (d < 0) throw std::invalid_argument("assemble_trace: GammaTr node was eliminated");
    te.emplace_back(i, d, 1.0);
  }
  TraceMatrix tr;
  tr.Mb.resize(nb, nb);
  tr.Mb.setFromTriplets(tmb.begin(), tmb.end());
  tr.E.resize(nb, fem.n_dofs());
  tr.E.setFromTriplets(te.begin(), te.end());
  tr.Mtr = tr.Mb * tr.E;
  return tr;
}

/// Bucket grid over the triangles of a mesh for point location and P1
/// interpolation.
class PointLocator {
 public:
  explicit PointLocator(const Mesh& mesh) : mesh_(&mesh) {
    if (mesh.triangles.empty()) throw std::invalid_argument("PointLocator: empty mesh");
    lo_ = hi_ = mesh.nodes.front();
    for (const auto& p : mesh.nodes) {
      lo_ = {std::min(lo_.x, p.x), std::min(lo_.y, p.y)};
      hi_ = {std::max(hi_.x, p.x), std::max(hi_.y, p.y)};
    }
    const double area = std::max((hi_.x - lo_.x) * (hi_.y - lo_.y), 1e-300);
    const double cell = std::sqrt(area / static_cast<double>(mesh.triangles.size()));
    nx_ = std::max(1, static_cast<int>((hi_.x - lo_.x) / cell) + 1);
    ny_ = std::max(1, static_cast<int>((hi_.y - lo_.y) / cell) + 1);
    cell_ = cell;
    start_.assign(static_cast<std::size_t>(nx_) * ny_ + 1, 0);
    auto cells_of = [&](std::size_t t, auto&& fn) {
      const auto& tri = mesh.triangles[t];
      Vec2 a = mesh.nodes[tri[0]], b = a;
      for (int v : tri) {
        const Vec2 p = mesh.nodes[v];
        a = {std::min(a.x, p.x), std::min(a.y, p.y)};
        b = {std::max(b.x, p.x), std::max(b.y, p.y)};
      }
      const int i0 = cx(a.x), i1 = cx(b.x), j0 = cy(a.y), j1 = cy(b.y);
      for (int j = j0; j <= j1; ++j)
        for (int i = i0; i <= i1; ++i) fn(static_cast<std::size_t>(j) * nx_ + i);
    };
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) cells_of(t, [&](std::size_t c) { ++start_[c + 1]; });
    for (std::size_t c = 1; c < start_.size(); ++c) start_[c] += start_[c - 1];
    items_.resize(start_.back());
    std::vector<std::size_t> fill(start_.begin(), start_.end() - 1);
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t)
      cells_of(t, [&](std::size_t c) { items_[fill[c]++] = static_cast<int>(t); });
  }

  /// Triangle containing p and barycentric weights, or -1.
  int locate(Vec2 p, std::array<double, 3>& bary) const {
    if (p.x < lo_.x || p.x > hi_.x || p.y < lo_.y || p.y > hi_.y) return -1;
    const std::size_t c = static_cast<std::size_t>(cy(p.y)) * nx_ + cx(p.x);
    for (std::size_t i = start_[c]; i < start_[c + 1]; ++i) {
      const auto& tri = mesh_->triangles[items_[i]];
      const Vec2 a = mesh_->nodes[tri[0]], b = mesh_->nodes[tri[1]], d = mesh_->nodes[tri[2]];
      const double area2 = cross(b - a, d - a);
      const double l0 = cross(b - p, d - p) / area2, l1 = cross(d - p, a - p) / area2, l2 = 1 - l0 - l1;
      const double tol = -1e-12;
      if (l0 >= tol && l1 >= tol && l2 >= tol) {
        bary = {l0, l1, l2};
        return items_[i];
      }
    }
    return -1;
  }

  /// P1 interpolant of node values at p; false when p is outside the mesh.
  template <typename Vec, typename T>
  bool interpolate(const Vec& node_values, Vec2 p, T& out) const {
    std::array<double, 3> w{};
    const int t = locate(p, w);
    if (t < 0) return false;
    const auto& tri = mesh_->triangles[t];
    out = w[0] * node_values[tri[0]] + w[1] * node_values[tri[1]] + w[2] * node_values[tri[2]];
    return true;
  }

 private:
  int cx(double x) const { return std::clamp(static_cast<int>((x - lo_.x) / cell_), 0, nx_ - 1); }
  int cy(double y) const { return std::clamp(static_cast<int>((y - lo_.y) / cell_), 0, ny_ - 1); }

  const Mesh* mesh_;
  Vec2 lo_, hi_;
  double cell_ = 1;
  int nx_ = 1, ny_ = 1;
  std::vector<std::size_t> start_;
  std::vector<int> items_;
};

/// Node-indexed values from a dof vector (eliminated nodes get zero).
template <typename Scalar>
std::vector<Scalar> dofs_to_nodes(const AssembledFem& fem, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& u) {
  std::vector<Scalar> out(fem.dof_map.size(), Scalar(0));
  for (std::size_t v = 0; v < fem.dof_map.size(); ++v)
    if (fem.dof_map[v] >= 0) out[v] = u[fem.dof_map[v]];
  return out;
}

/// Coordinate text export, one "row col re im" line per stored entry.
template <typename Scalar>
void export_matrix(std::ostream& os, const Eigen::SparseMatrix<Scalar>& A) {
  os.precision(17);
  for (int col = 0; col < A.outerSize(); ++col)
    for (typename Eigen::SparseMatrix<Scalar>::InnerIterator it(A, col); it; ++it) {
      const cplx v(it.value());
      os << it.row() << " " << it.col() << " " << v.real() << " " << v.imag() << "\n";
    }
}

template <typename Derived>
void export_matrix(std::ostream& os, const Eigen::MatrixBase<Derived>& A) {
  os.precision(17);
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < A.cols(); ++j) {
      const cplx v(A(i, j));
      os << i << " " << j << " " << v.real() << " " << v.imag() << "\n";
    }
}

}  // namespace htlab
