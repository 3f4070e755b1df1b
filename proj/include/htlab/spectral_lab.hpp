#pragma once

// Experiments on the truncated exterior Dirichlet problem: coupled FEM/DtN
// pencils, near-origin spectra, frequency sweeps with trajectory matching, box
// counting, quasimode quality of ellipse modes and the mu_min <= k^alpha eps
// consistency check.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "htlab/bem_dtn.hpp"
#include "htlab/eigsolve.hpp"
#include "htlab/ellipse_modes.hpp"
#include "htlab/fem.hpp"
#include "htlab/geometry.hpp"
#include "htlab/mesh.hpp"
#include "htlab/quadrature.hpp"

namespace htlab {

// ---------------------------------------------------------------------------
// Discretization

struct LabMeshOptions {
  double h = 0;          // fine size near the cavity; 0 uses meshwidth_rule(k)
  double h_far = 0;      // cap away from the cavity; 0 picks max(h, min(0.06, 0.6 / k))
  double grading = 0.3;  // growth of the target size per unit distance from the cavity box
};

/// Mesh, k-independent FEM matrices and the boundary space on Gamma_tr.
struct LabDiscretization {
  DomainSpec domain;
  Mesh mesh;
  AssembledFem fem;  // K, M on dofs (k = 0)
  BoundarySpace bs;
  TraceMatrix tr;
  double h_fine = 0, h_far = 0;
  bool dirichlet_truncation = false;  // Gamma_tr eliminated (self-adjoint control)
};

inline SizingFunction lab_sizing(const DomainSpec& dom, double h, double h_far, double grading) {
  if (!dom.has_cavity) return [h](Vec2) { return h; };
  // radial distance outside the ellipse enclosing the cavity with a 0.05 pad
  const double bx = std::max(dom.cavity.A1, dom.cavity.a1) + 0.05, by = std::max(dom.cavity.A2, dom.cavity.a2) + 0.05;
  return [=](Vec2 p) {
    const double r = norm(p);
    double d = 0;
    if (r > 0) {
      const double c = p.x / r, s = p.y / r;
      d = std::max(0.0, r - 1 / std::sqrt(c * c / (bx * bx) + s * s / (by * by)));
    }
    return std::min(h_far, h + grading * d);
  };
}

inline LabDiscretization discretize(const DomainSpec& dom, Mesh mesh, bool dirichlet_truncation = false) {
  LabDiscretization d;
  d.domain = dom;
  d.mesh = std::move(mesh);
  d.dirichlet_truncation = dirichlet_truncation;
  const std::set<BoundaryTag> dir = dirichlet_truncation ? std::set<BoundaryTag>{BoundaryTag::GammaD, BoundaryTag::GammaTr}
                                                         : std::set<BoundaryTag>{BoundaryTag::GammaD};
  d.fem = assemble_fem(d.mesh, 0.0, dir);
  if (!dirichlet_truncation) {
    d.bs = make_boundary_space(d.mesh, dom.R, dom.center);
    d.tr = assemble_trace(d.mesh, d.fem, d.bs);
  }
  d.h_fine = d.h_far = d.mesh.h_max;
  return d;
}

/// Graded mesh: h near the cavity (meshwidth_rule(k_ref) unless overridden),
/// growing linearly to h_far.
inline LabDiscretization discretize(const DomainSpec& dom, double k_ref, const LabMeshOptions& opt = {},
                                    bool dirichlet_truncation = false) {
  const double h = opt.h > 0 ? opt.h : meshwidth_rule(k_ref);
  const double h_far = opt.h_far > 0 ? std::max(opt.h_far, h) : std::max(h, std::min(0.06, 0.6 / k_ref));
  auto d = discretize(dom, generate_mesh(dom, lab_sizing(dom, h, h_far, opt.grading)), dirichlet_truncation);
  d.h_fine = h;
  d.h_far = h_far;
  return d;
}

// ---------------------------------------------------------------------------
// Coupled pencil

struct CoupledOptions {
  DtnBackend backend = DtnBackend::bem;
  BemOptions bem;
};

/// Atilde = [[A_k, C], [Mtr, -D]], B = diag(M, 0) with
///   bem:     C = E^T (Mb/2 - D'),  D = S
///   fourier: C = -E^T T,           D = Mb   (T the Fourier DtN Galerkin matrix)
/// With a Dirichlet-truncated discretization the pencil is (K - k^2 M, M).
inline CoupledSystem assemble_coupled(const LabDiscretization& d, double k, const CoupledOptions& opt = {}) {
  if (!(k > 0)) throw std::invalid_argument("assemble_coupled: k must be positive");
  CoupledSystem sys;
  sys.k = k;
  sys.n_fem = d.fem.n_dofs();
  const SpMat Ak = d.fem.K - (k * k) * d.fem.M;
  std::vector<Eigen::Triplet<cplx>> ta, tb;
  ta.reserve(Ak.nonZeros());
  for (int col = 0; col < Ak.outerSize(); ++col)
    for (SpMat::InnerIterator it(Ak, col); it; ++it) ta.emplace_back(it.row(), it.col(), it.value());
  for (int col = 0; col < d.fem.M.outerSize(); ++col)
    for (SpMat::InnerIterator it(d.fem.M, col); it; ++it) tb.emplace_back(it.row(), it.col(), it.value());
  if (d.dirichlet_truncation) {
    sys.n_bem = 0;
  } else {
    const int nb = d.bs.size();
    sys.n_bem = nb;
    const int off = sys.n_fem;
    std::vector<int> dof(nb);
    for (int l = 0; l < nb; ++l) dof[l] = d.fem.dof_map[d.bs.mesh_nodes[l]];
    const Eigen::MatrixXd Mb = Eigen::MatrixXd(d.tr.Mb);
    Eigen::MatrixXcd C, D;
    if (opt.backend == DtnBackend::bem) {
      const BemOperators ops = assemble_bem(d.bs, k, opt.bem);
      C = 0.5 * Mb.cast<cplx>() - ops.Dp;
      D = ops.S;
    } else {
      C = -fourier_dtn_matrix(d.bs, k, Mb);
      D = Mb.cast<cplx>();
    }
    for (int l = 0; l < nb; ++l)
      for (int j = 0; j < nb; ++j) {
        if (C(l, j) != cplx(0)) ta.emplace_back(dof[l], off + j, C(l, j));
        if (D(l, j) != cplx(0)) ta.emplace_back(off + l, off + j, -D(l, j));
      }
    for (int col = 0; col < d.tr.Mtr.outerSize(); ++col)
      for (SpMat::InnerIterator it(d.tr.Mtr, col); it; ++it) ta.emplace_back(off + it.row(), it.col(), it.value());
  }
  const int n = sys.size();
  sys.Atilde.resize(n, n);
  sys.Atilde.setFromTriplets(ta.begin(), ta.end());
  sys.B.resize(n, n);
  sys.B.setFromTriplets(tb.begin(), tb.end());
  return sys;
}

// ---------------------------------------------------------------------------
// Spectra

struct SpectrumOptions {
  int nev = 10;
  CoupledOptions coupled;
  ArnoldiOptions arnoldi;  // nev is overwritten
  double residual_max = 1e-8;
};

/// The nev eigenvalues of smallest |mu| at frequency k; FEM parts of the
/// eigenvectors have unit discrete L2 norm.
inline std::vector<EigenRecord> spectrum_near_zero(const LabDiscretization& d, double k, const SpectrumOptions& opt = {}) {
  if (opt.nev < 1) throw std::invalid_argument("spectrum_near_zero: nev must be at least 1");
  const CoupledSystem sys = assemble_coupled(d, k, opt.coupled);
  ArnoldiOptions ao = opt.arnoldi;
  ao.nev = opt.nev;
  auto recs = shift_invert_arnoldi(sys, ao);
  if (static_cast<int>(recs.size()) > opt.nev) recs.resize(opt.nev);
  for (auto& r : recs) {
    r.k = k;
    if (!(r.residual < opt.residual_max)) r.converged = false;
  }
  return recs;
}

inline double min_abs_mu(const std::vector<EigenRecord>& recs) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& r : recs) m = std::min(m, std::abs(r.mu));
  return m;
}

/// |u| sampled at cell centres of an nx x ny grid over the bounding square of
/// Gamma_tr; NaN outside Omega_tr.
struct FieldGrid {
  int nx = 0, ny = 0;
  double x0 = 0, y0 = 0, dx = 0, dy = 0;
  std::vector<double> values;  // row-major, y outer

  Vec2 point(int i, int j) const { return {x0 + (i + 0.5) * dx, y0 + (j + 0.5) * dy}; }
  double at(int i, int j) const { return values[static_cast<std::size_t>(j) * nx + i]; }
  double l2_norm() const {
    double s = 0;
    for (double v : values)
      if (!std::isnan(v)) s += v * v;
    return std::sqrt(s * dx * dy);
  }
};

inline FieldGrid sample_eigenfunction(const LabDiscretization& d, const EigenRecord& rec, int nx, int ny) {
  if (nx < 1 || ny < 1) throw std::invalid_argument("sample_eigenfunction: grid must be non-empty");
  if (rec.vector.size() < d.fem.n_dofs()) throw std::invalid_argument("sample_eigenfunction: record carries no eigenvector");
  const Eigen::VectorXcd u = rec.vector.head(d.fem.n_dofs());
  const auto nodal = dofs_to_nodes(d.fem, u);
  const PointLocator loc(d.mesh);
  FieldGrid g;
  g.nx = nx;
  g.ny = ny;
  g.x0 = d.domain.center.x - d.domain.R;
  g.y0 = d.domain.center.y - d.domain.R;
  g.dx = 2 * d.domain.R / nx;
  g.dy = 2 * d.domain.R / ny;
  g.values.assign(static_cast<std::size_t>(nx) * ny, std::numeric_limits<double>::quiet_NaN());
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      cplx v;
      if (loc.interpolate(nodal, g.point(i, j), v)) g.values[static_cast<std::size_t>(j) * nx + i] = std::abs(v);
    }
  return g;
}

// ---------------------------------------------------------------------------
// Sweeps and trajectories

struct TrackPoint {
  double k = 0;
  cplx mu;
  double residual = 0;
  double confidence = 1;  // 1 - d_best / d_second at the matching step
};

struct Track {
  int id = 0;
  std::vector<TrackPoint> points;
};

struct TrajectorySet {
  std::vector<double> k_grid;
  std::vector<Track> tracks;
  double step = 0;
  std::vector<double> missing;  // grid ks whose solve failed
};

/// Grid k_i = k_min + i step, i < max(1, round((k_max - k_min) / step)).
inline std::vector<double> sweep_grid(double k_min, double k_max, double step) {
  if (!(step > 0)) throw std::invalid_argument("sweep: step must be positive");
  if (!(k_min > 0) || !(k_max >= k_min)) throw std::invalid_argument("sweep: need 0 < k_min <= k_max");
  const long n = std::max(1L, std::lround((k_max - k_min) / step));
  std::vector<double> g(n);
  for (long i = 0; i < n; ++i) g[i] = k_min + static_cast<double>(i) * step;
  return g;
}

struct MatchOptions {
  double gate_factor = 10;  // gate = gate_factor * step * median |d mu / d k|
};

/// Greedy nearest-neighbour matching of per-k spectra into tracks.  A missing
/// entry (nullopt) is bridged: the tracks continue from their last point.
inline TrajectorySet build_tracks(const std::vector<double>& grid, const std::vector<std::optional<std::vector<cplx>>>& spectra,
                                  double step, const MatchOptions& mo = {},
                                  const std::vector<std::optional<std::vector<double>>>* residuals = nullptr) {
  if (grid.size() != spectra.size()) throw std::invalid_argument("build_tracks: grid and spectra sizes differ");
  TrajectorySet ts;
  ts.k_grid = grid;
  ts.step = step;
  std::vector<double> rates;  // observed |d mu / d k|
  std::vector<int> active;    // track indices alive at the last solved k
  for (std::size_t gi = 0; gi < grid.size(); ++gi) {
    const double k = grid[gi];
    if (!spectra[gi]) {
      ts.missing.push_back(k);
      continue;
    }
    const auto& mus = *spectra[gi];
    auto res_of = [&](std::size_t j) {
      return residuals && (*residuals)[gi] && j < (*residuals)[gi]->size() ? (*(*residuals)[gi])[j] : 0.0;
    };
    double rate = 2 * k;  // free-space rate before anything is observed
    if (!rates.empty()) {
      std::vector<double> r = rates;
      std::nth_element(r.begin(), r.begin() + r.size() / 2, r.end());
      rate = r[r.size() / 2];
    }
    struct Cand {
      double dist;
      int track;
      std::size_t j;
    };
    std::vector<Cand> cands;
    for (int t : active) {
      const auto& last = ts.tracks[t].points.back();
      const double gate = mo.gate_factor * std::max(step, k - last.k) * rate;
      for (std::size_t j = 0; j < mus.size(); ++j) {
        const double dist = std::abs(mus[j] - last.mu);
        if (dist <= gate) cands.push_back({dist, t, j});
      }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.dist < b.dist; });
    std::vector<char> used_track(ts.tracks.size(), 0), used_mu(mus.size(), 0);
    std::vector<int> next_active;
    for (const auto& c : cands) {
      if (used_track[c.track] || used_mu[c.j]) continue;
      used_track[c.track] = 1;
      used_mu[c.j] = 1;
      // runner-up distance for the confidence score
      double second = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < mus.size(); ++j)
        if (j != c.j) second = std::min(second, std::abs(mus[j] - ts.tracks[c.track].points.back().mu));
      TrackPoint p{k, mus[c.j], res_of(c.j), std::isfinite(second) && second > 0 ? 1 - c.dist / second : 1.0};
      const double dk = k - ts.tracks[c.track].points.back().k;
      if (dk > 0) rates.push_back(c.dist / dk);
      ts.tracks[c.track].points.push_back(p);
      next_active.push_back(c.track);
    }
    for (std::size_t j = 0; j < mus.size(); ++j) {
      if (used_mu[j]) continue;
      Track t;
      t.id = static_cast<int>(ts.tracks.size());
      t.points.push_back({k, mus[j], res_of(j), 1.0});
      ts.tracks.push_back(std::move(t));
      next_active.push_back(ts.tracks.back().id);
    }
    std::sort(next_active.begin(), next_active.end());
    active = next_active;
  }
  return ts;
}

struct SweepOptions {
  SpectrumOptions spectrum;
  MatchOptions match;
  int jobs = 1;
};

struct SweepResult {
  TrajectorySet traj;
  std::vector<std::vector<EigenRecord>> spectra;  // per grid point (empty when failed)
  std::vector<std::string> failures;
};

/// Spectra on the k grid (in parallel over k when jobs > 1) and trajectory
/// matching in grid order.
inline SweepResult sweep(const LabDiscretization& d, double k_min, double k_max, double step, const SweepOptions& opt = {}) {
  const auto grid = sweep_grid(k_min, k_max, step);
  SweepResult out;
  out.spectra.resize(grid.size());
  std::vector<std::optional<std::vector<cplx>>> mus(grid.size());
  std::vector<std::optional<std::vector<double>>> res(grid.size());
  std::vector<std::string> errors(grid.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < grid.size(); i = next++) {
      try {
        out.spectra[i] = spectrum_near_zero(d, grid[i], opt.spectrum);
        std::vector<cplx> m;
        std::vector<double> r;
        for (const auto& e : out.spectra[i]) {
          m.push_back(e.mu);
          r.push_back(e.residual);
        }
        mus[i] = std::move(m);
        res[i] = std::move(r);
      } catch (const std::exception& ex) {
        errors[i] = ex.what();
      }
    }
  };
  const int jobs = std::max(1, opt.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& s : out.spectra)
    for (auto& e : s) e.vector = Eigen::VectorXcd();  // keep memory bounded
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (!errors[i].empty()) out.failures.push_back("k = " + std::to_string(grid[i]) + ": " + errors[i]);
  out.traj = build_tracks(grid, mus, step, opt.match, &res);
  return out;
}

// ---------------------------------------------------------------------------
// Box counting

struct BoxSpec {
  double eps1 = 0.2, eps0 = 0.05;
  double k_minus = 0, k_plus = std::numeric_limits<double>::infinity();
};

/// Open rectangle (-2 eps1, 2 eps1) - i (0, 2 eps0).
inline bool in_box(const cplx& mu, const BoxSpec& b) {
  return std::abs(mu.real()) < 2 * b.eps1 && mu.imag() < 0 && mu.imag() > -2 * b.eps0;
}

/// Number of tracks with a grid sample inside the box for some k in [k-, k+].
inline int box_count(const TrajectorySet& ts, const BoxSpec& b) {
  if (!(b.eps1 > 0 && b.eps0 > 0) || b.k_minus > b.k_plus) throw std::invalid_argument("box_count: invalid box");
  int count = 0;
  for (const auto& t : ts.tracks)
    for (const auto& p : t.points)
      if (p.k >= b.k_minus && p.k <= b.k_plus && in_box(p.mu, b)) {
        ++count;
        break;
      }
  return count;
}

inline std::vector<int> box_track_ids(const TrajectorySet& ts, const BoxSpec& b) {
  std::vector<int> ids;
  for (const auto& t : ts.tracks)
    for (const auto& p : t.points)
      if (p.k >= b.k_minus && p.k <= b.k_plus && in_box(p.mu, b)) {
        ids.push_back(t.id);
        break;
      }
  return ids;
}

// ---------------------------------------------------------------------------
// Quasimodes

/// chi(x) = s((x - x0) / (x1 - x0)), s(t) = 10 t^3 - 15 t^4 + 6 t^5 on [0, 1],
/// 0 left of x0 and 1 right of x1 (C^2).
struct CutoffSpec {
  double x0 = 0, x1 = 0;

  double value(double x) const {
    const double t = std::clamp((x - x0) / (x1 - x0), 0.0, 1.0);
    return t * t * t * (10 - 15 * t + 6 * t * t);
  }
  double d1(double x) const {
    const double t = (x - x0) / (x1 - x0);
    if (t <= 0 || t >= 1) return 0;
    return 30 * t * t * (1 - t) * (1 - t) / (x1 - x0);
  }
  double d2(double x) const {
    const double t = (x - x0) / (x1 - x0);
    if (t <= 0 || t >= 1) return 0;
    const double w = x1 - x0;
    return 60 * t * (1 - t) * (1 - 2 * t) / (w * w);
  }
};

inline constexpr double kCutoffMargin = 0.02;
inline constexpr double kCutoffWidth = 0.1;

/// Collar starting kCutoffMargin inside the mouth x = a1 cos(phi0) of the cavity.
inline CutoffSpec default_cutoff(const CavitySpec& cav) {
  const double xm = cav.a1 * std::cos(cav.phi0);
  return {xm + kCutoffMargin, xm + kCutoffMargin + kCutoffWidth};
}

struct QuasimodeReport {
  EllipseMode mode;
  CavitySpec cavity;
  CutoffSpec cutoff;
  double eps_raw = 0;     // ||(Delta + k^2)(chi u)|| with ||u||_{L2(E)} = 1
  double norm_check = 0;  // ||chi u||
  double eps = 0;         // eps_raw / norm_check
  double margin = 0;      // x0 - mouth position
  bool support_ok = false;
};

inline constexpr int kCollarCells = 160;

/// Quality of chi u for an ellipse mode u: (Delta + k^2)(chi u) =
/// chi'' u + 2 chi' u_x on the collar x0 < x < x1, integrated with the
/// seven-point rule on a structured triangulation of the collar.
inline QuasimodeReport quasimode_quality(const EllipseMode& mode, const CavitySpec& cav, std::optional<CutoffSpec> cutoff = {}) {
  QuasimodeReport r;
  r.mode = mode;
  r.cavity = cav;
  r.cutoff = cutoff ? *cutoff : default_cutoff(cav);
  const auto& ch = r.cutoff;
  if (!(ch.x1 > ch.x0)) throw std::invalid_argument("quasimode_quality: cutoff needs x1 > x0");
  if (std::abs(cav.a1 - mode.a1) > 1e-12 || std::abs(cav.a2 - mode.a2) > 1e-12)
    throw std::invalid_argument("quasimode_quality: mode and cavity use different ellipses");
  const double mouth = cav.a1 * std::cos(cav.phi0);
  r.margin = ch.x0 - mouth;
  r.support_ok = r.margin > 0 && ch.x0 > -mode.a1;
  const double a1 = mode.a1, a2 = mode.a2;
  auto ytop = [&](double x) { return a2 * std::sqrt(std::max(0.0, 1 - (x / a1) * (x / a1))); };
  // collar part inside the ellipse
  const double xa = std::max(ch.x0, -a1), xb = std::min(ch.x1, a1);
  double s = 0;
  if (xb > xa) {
    const auto& rule = quad::triangle7();
    const int nx = kCollarCells, ny = kCollarCells;
    auto node = [&](int i, int j) {
      const double x = xa + (xb - xa) * i / nx;
      const double yt = ytop(x);
      return Vec2{x, -yt + 2 * yt * j / ny};
    };
    auto f = [&](Vec2 p) {
      const auto u = ellipse_mode_eval(mode, p);
      const double g = ch.d2(p.x) * u.value + 2 * ch.d1(p.x) * u.dx;
      return g * g;
    };
    for (int i = 0; i < nx; ++i)
      for (int j = 0; j < ny; ++j) {
        const Vec2 p00 = node(i, j), p10 = node(i + 1, j), p01 = node(i, j + 1), p11 = node(i + 1, j + 1);
        for (const auto& tri : {std::array<Vec2, 3>{p00, p10, p11}, std::array<Vec2, 3>{p00, p11, p01}}) {
          const double area = 0.5 * std::abs(cross(tri[1] - tri[0], tri[2] - tri[0]));
          if (area == 0) continue;
          double acc = 0;
          for (int q = 0; q < 7; ++q) {
            const auto& b = rule.bary[q];
            acc += rule.w[q] * f(b[0] * tri[0] + b[1] * tri[1] + b[2] * tri[2]);
          }
          s += area * acc;
        }
      }
  }
  r.eps_raw = std::sqrt(s);
  const double n2 = ellipse_grid_integral(a1, a2, kNormGrid, [&](Vec2 p) {
    const double v = ch.value(p.x) * ellipse_mode_field(mode, p);
    return v * v;
  });
  r.norm_check = std::sqrt(n2);
  r.eps = r.norm_check > 0 ? r.eps_raw / r.norm_check : std::numeric_limits<double>::infinity();
  return r;
}

struct MultiplicityReport {
  int m = 0;
  std::vector<int> members;                  // indices into the input reports
  std::vector<std::vector<double>> overlap;  // |<chi u_i, chi u_j>| / (||chi u_i|| ||chi u_j||)
  std::vector<std::pair<int, int>> violations;
  double bound = 0;
};

/// Modes with k in [k-, k+] and their normalized overlaps; pairs with overlap
/// above the largest quality eps in the window are flagged.
inline MultiplicityReport multiplicity_in_window(const std::vector<QuasimodeReport>& reports, double k_minus, double k_plus) {
  MultiplicityReport out;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    if (i > 0 && (std::abs(reports[i].cavity.phi0 - reports[0].cavity.phi0) > 1e-12 ||
                  std::abs(reports[i].cavity.a1 - reports[0].cavity.a1) > 1e-12))
      throw std::invalid_argument("multiplicity_in_window: reports must share the cavity");
    if (reports[i].mode.k >= k_minus && reports[i].mode.k <= k_plus) out.members.push_back(static_cast<int>(i));
  }
  out.m = static_cast<int>(out.members.size());
  const std::size_t m = out.members.size();
  out.overlap.assign(m, std::vector<double>(m, 0.0));
  for (int i : out.members) out.bound = std::max(out.bound, reports[i].eps);
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = a; b < m; ++b) {
      const auto& ra = reports[out.members[a]];
      const auto& rb = reports[out.members[b]];
      double ov = 1;
      if (a != b) {
        const double ip = ellipse_grid_integral(ra.mode.a1, ra.mode.a2, kNormGrid, [&](Vec2 p) {
          return ra.cutoff.value(p.x) * rb.cutoff.value(p.x) * ellipse_mode_field(ra.mode, p) * ellipse_mode_field(rb.mode, p);
        });
        ov = std::abs(ip) / (ra.norm_check * rb.norm_check);
        if (ov > out.bound) out.violations.push_back({static_cast<int>(a), static_cast<int>(b)});
      }
      out.overlap[a][b] = out.overlap[b][a] = ov;
    }
  return out;
}

// ---------------------------------------------------------------------------
// Consistency check |mu_min| <= k^alpha eps(k)

struct Theorem1Report {
  bool applicable = true;
  double k = 0, alpha = 0;
  double mu_min = 0;   // |mu_min| at mesh size h
  double mu_min_coarse = 0;
  double eps = 0;
  double bound = 0;    // k^alpha eps
  double budget = 0;   // discretization error estimate of |mu_min|
  double h = 0;
  bool pass = false;
};

struct Theorem1Options {
  LabMeshOptions mesh;
  SpectrumOptions spectrum;
  double k_match_tol = 1e-6;  // relative distance of k from the mode frequency
};

inline constexpr double kAlphaThreshold = 4.5;  // 3 (d + 1) / 2 with d = 2

/// Computes |mu_min| at k on meshes h and 2h (Richardson error estimate
/// |mu(h) - mu(2h)| / 3 as the discretization budget) and the quality eps of
/// the mode; pass iff |mu_min| <= k^alpha eps + budget.  Not applicable when
/// k is not the mode frequency.
inline Theorem1Report theorem1_check(const DomainSpec& dom, const EllipseMode& mode, double alpha, const Theorem1Options& opt = {},
                                     std::optional<double> k_eval = {}) {
  if (!(alpha > kAlphaThreshold)) throw std::invalid_argument("theorem1_check: alpha must exceed 4.5");
  if (!dom.has_cavity) throw std::invalid_argument("theorem1_check: the domain has no cavity");
  Theorem1Report r;
  r.alpha = alpha;
  r.k = k_eval ? *k_eval : mode.k;
  if (std::abs(r.k - mode.k) > opt.k_match_tol * mode.k) {
    r.applicable = false;
    return r;
  }
  const auto q = quasimode_quality(mode, dom.cavity);
  r.eps = q.eps;
  r.bound = std::pow(r.k, alpha) * r.eps;
  LabMeshOptions mo = opt.mesh;
  const double h = mo.h > 0 ? mo.h : meshwidth_rule(r.k);
  mo.h = h;
  r.h = h;
  const auto fine = discretize(dom, r.k, mo);
  r.mu_min = min_abs_mu(spectrum_near_zero(fine, r.k, opt.spectrum));
  mo.h = 2 * h;
  const auto coarse = discretize(dom, r.k, mo);
  r.mu_min_coarse = min_abs_mu(spectrum_near_zero(coarse, r.k, opt.spectrum));
  r.budget = std::abs(r.mu_min - r.mu_min_coarse) / 3;
  r.pass = r.mu_min <= r.bound + r.budget;
  return r;
}

}  // namespace htlab
