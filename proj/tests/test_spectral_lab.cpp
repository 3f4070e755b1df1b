#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "htlab/spectral_lab.hpp"

using namespace htlab;
using specfun::Parity;
using Catch::Approx;

namespace {

const LabDiscretization& coarse_small() {
  static const auto d = discretize(make_domain(CavitySpec::small(), 1.5), 5.0, {.h = 0.05});
  return d;
}

void check_sign(const std::vector<EigenRecord>& recs) {
  for (const auto& r : recs) CHECK(r.mu.imag() <= 1e-6);
}

// Log-linear least squares, returns r^2.
double loglinear_r2(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i] / n;
    my += std::log(y[i]) / n;
  }
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = std::log(y[i]) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  return sxy * sxy / (sxx * syy);
}

TrajectorySet synthetic(const std::vector<double>& grid, const std::vector<std::vector<cplx>>& spectra) {
  std::vector<std::optional<std::vector<cplx>>> s(spectra.begin(), spectra.end());
  return build_tracks(grid, s, grid.size() > 1 ? grid[1] - grid[0] : 0.025);
}

Track track_of(std::vector<std::pair<double, cplx>> pts, int id = 0) {
  Track t;
  t.id = id;
  for (auto [k, mu] : pts) t.points.push_back({k, mu, 0, 1});
  return t;
}

}  // namespace

TEST_CASE("coupled pencil block structure") {
  const auto& d = coarse_small();
  const auto sys = assemble_coupled(d, 4.0);
  const int nf = d.fem.n_dofs(), nb = d.bs.size();
  CHECK(sys.n_fem == nf);
  CHECK(sys.n_bem == nb);
  CHECK(sys.Atilde.rows() == nf + nb);
  CHECK(sys.B.rows() == nf + nb);
  // B = diag(M, 0)
  for (int c = 0; c < sys.B.outerSize(); ++c)
    for (SpMatC::InnerIterator it(sys.B, c); it; ++it) {
      CHECK(it.row() < nf);
      CHECK(it.col() < nf);
    }
  CHECK(std::abs(SpMatC(sys.B).sum() - cplx(d.fem.M.sum(), 0)) < 1e-12);
  // trace block and single-layer block
  const Eigen::MatrixXcd lower = Eigen::MatrixXcd(sys.Atilde).bottomRows(nb);
  CHECK((lower.leftCols(nf).real() - Eigen::MatrixXd(d.tr.Mtr)).cwiseAbs().maxCoeff() == 0);
  const auto ops = assemble_bem(d.bs, 4.0);
  CHECK((lower.rightCols(nb) + ops.S).cwiseAbs().maxCoeff() == 0);
  CHECK_THROWS_AS(assemble_coupled(d, 0.0), std::invalid_argument);
}

TEST_CASE("coupled pencil with a Dirichlet truncation is the plain FEM pencil") {
  const auto d = discretize(make_domain(CavitySpec::small(), 1.5), 5.0, {.h = 0.05}, true);
  const auto sys = assemble_coupled(d, 4.0);
  CHECK(sys.n_bem == 0);
  CHECK(sys.size() == d.fem.n_dofs());
  const auto recs = spectrum_near_zero(d, 4.0, {.nev = 4});
  REQUIRE(recs.size() == 4);
  for (const auto& r : recs) {
    CHECK(std::abs(r.mu.imag()) < 1e-9);
    CHECK(r.residual < 1e-8);
  }
}

TEST_CASE("near-zero spectrum: residuals, normalization, ordering, sign") {
  const auto& d = coarse_small();
  const auto recs = spectrum_near_zero(d, 5.0, {.nev = 6});
  REQUIRE(recs.size() == 6);
  const int nf = d.fem.n_dofs();
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(recs[i].converged);
    CHECK(recs[i].residual < 1e-8);
    CHECK(recs[i].k == 5.0);
    const Eigen::VectorXcd u = recs[i].vector.head(nf);
    CHECK(std::abs(u.dot(d.fem.M.cast<cplx>() * u) - 1.0) < 1e-10);
    if (i > 0) CHECK(std::abs(recs[i].mu) >= std::abs(recs[i - 1].mu));
  }
  check_sign(recs);
  CHECK(min_abs_mu(recs) == std::abs(recs[0].mu));
  CHECK_THROWS_AS(spectrum_near_zero(d, 5.0, {.nev = 0}), std::invalid_argument);
}

TEST_CASE("Fourier and BEM backends agree near the origin") {
  // cavity at meshwidth_rule(5); circle spacing 0.03 so the boundary error stays below 1e-4
  const auto d = discretize(make_domain(CavitySpec::small(), 2.0), 5.0, {.h_far = 0.03});
  SpectrumOptions so{.nev = 3};
  so.arnoldi.tol = 1e-12;
  const auto bem = spectrum_near_zero(d, 5.0, so);
  so.coupled.backend = DtnBackend::fourier;
  const auto fou = spectrum_near_zero(d, 5.0, so);
  REQUIRE(bem.size() == fou.size());
  for (std::size_t i = 0; i < bem.size(); ++i) CHECK(std::abs(bem[i].mu - fou[i].mu) < 1e-4);
  check_sign(bem);
  check_sign(fou);
}

TEST_CASE("near-zero eigenvalue is insensitive to the truncation radius") {
  const auto mode = ellipse_mode_frequency(0, 0, Parity::even, 1, 0.5, {.normalize = false});
  std::vector<cplx> mu;
  for (double R : {1.5, 2.0}) {
    const auto d = discretize(make_domain(CavitySpec::large(), R), mode.k, {.h = 0.02});
    const auto at = spectrum_near_zero(d, mode.k, {.nev = 3});
    const auto detuned = spectrum_near_zero(d, mode.k + 0.3, {.nev = 3});
    check_sign(at);
    check_sign(detuned);
    CHECK(min_abs_mu(at) < 0.1 * min_abs_mu(detuned));
    mu.push_back(at[0].mu);
  }
  CHECK(std::abs(mu[0] - mu[1]) < 1e-3);
}

TEST_CASE("interior resonance of the disc raises the named error") {
  const double k = 2.404825557695773 / 2;  // Dirichlet eigenfrequency of the disc of radius 2
  const auto d = discretize(make_disc(2.0), 1.0, {.h = 0.1});
  CHECK_THROWS_AS(assemble_coupled(d, k), SingularOperatorError);
  CHECK_NOTHROW(assemble_coupled(d, 1.0));
}

TEST_CASE("sampled eigenfunction has unit norm and mirror symmetry") {
  const auto& d = coarse_small();
  const auto recs = spectrum_near_zero(d, 5.0, {.nev = 1});
  const auto g = sample_eigenfunction(d, recs[0], 240, 240);
  CHECK(g.l2_norm() == Approx(1).epsilon(0.03));
  CHECK(std::isnan(g.at(0, 0)));  // corner outside the circle
  double asym = 0, total = 0;
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      const double a = g.at(i, j), b = g.at(i, g.ny - 1 - j);
      if (std::isnan(a) || std::isnan(b)) continue;
      asym += (a - b) * (a - b);
      total += a * a;
    }
  CHECK(asym < 1e-2 * total);
  EigenRecord empty;
  CHECK_THROWS_AS(sample_eigenfunction(d, empty, 10, 10), std::invalid_argument);
  CHECK_THROWS_AS(sample_eigenfunction(d, recs[0], 0, 10), std::invalid_argument);
}

TEST_CASE("sweep grid convention") {
  const auto g = sweep_grid(8.5, 10.5, 0.025);
  CHECK(g.size() == 80);
  CHECK(g.front() == 8.5);
  CHECK(g.back() == Approx(10.475).margin(1e-12));
  CHECK(sweep_grid(2.5, 12.5, 0.025).size() == 400);
  CHECK(sweep_grid(3, 3, 0.1).size() == 1);
  CHECK_THROWS_AS(sweep_grid(1, 2, 0), std::invalid_argument);
  CHECK_THROWS_AS(sweep_grid(2, 1, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(sweep_grid(0, 1, 0.1), std::invalid_argument);
}

TEST_CASE("constant synthetic spectra give horizontal tracks") {
  const auto grid = sweep_grid(1, 2, 0.1);
  const std::vector<cplx> mus{{0.1, -0.01}, {-0.5, -0.2}, {1.0, -1.0}};
  const auto ts = synthetic(grid, std::vector<std::vector<cplx>>(grid.size(), mus));
  REQUIRE(ts.tracks.size() == 3);
  for (const auto& t : ts.tracks) {
    CHECK(t.points.size() == grid.size());
    for (const auto& p : t.points) CHECK(p.mu == t.points.front().mu);
  }
}

TEST_CASE("tracks follow linear motion through a near crossing") {
  const auto grid = sweep_grid(1, 2, 0.05);
  std::vector<std::vector<cplx>> spectra;
  for (double k : grid) spectra.push_back({cplx(k - 1.5, -0.1), cplx(1.5 - k, -0.12), cplx(3.0, -2.0)});
  const auto ts = synthetic(grid, spectra);
  REQUIRE(ts.tracks.size() == 3);
  for (const auto& t : ts.tracks) {
    REQUIRE(t.points.size() == grid.size());
    const double slope = (t.points.back().mu.real() - t.points.front().mu.real()) / (grid.back() - grid.front());
    CHECK((std::abs(slope - 1) < 1e-9 || std::abs(slope + 1) < 1e-9 || std::abs(slope) < 1e-9));
    for (const auto& p : t.points) CHECK(std::abs(p.mu.imag() - t.points.front().mu.imag()) < 1e-15);
  }
}

TEST_CASE("matching is optimal at each step and tracks never share an eigenvalue") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1, 1);
  const auto grid = sweep_grid(5, 6, 0.025);
  std::vector<cplx> base(6);
  for (auto& b : base) b = cplx(4 * u(rng), -2 - u(rng));
  std::vector<std::vector<cplx>> spectra;
  for (double k : grid) {
    std::vector<cplx> s;
    for (std::size_t j = 0; j < base.size(); ++j) s.push_back(base[j] + cplx(0.3 * (k - 5) * (j + 1), 0.01 * std::sin(7 * k + j)));
    std::shuffle(s.begin(), s.end(), rng);
    spectra.push_back(s);
  }
  const auto ts = synthetic(grid, spectra);
  CHECK(ts.tracks.size() == base.size());
  for (std::size_t gi = 0; gi < grid.size(); ++gi) {
    std::vector<cplx> seen;
    for (const auto& t : ts.tracks)
      for (const auto& p : t.points)
        if (p.k == grid[gi]) seen.push_back(p.mu);
    CHECK(seen.size() == base.size());
    for (std::size_t a = 0; a < seen.size(); ++a)
      for (std::size_t b = a + 1; b < seen.size(); ++b) CHECK(seen[a] != seen[b]);
  }
  for (const auto& t : ts.tracks)
    for (std::size_t i = 1; i < t.points.size(); ++i) {
      // no other eigenvalue at this k is closer to the previous point
      const cplx prev = t.points[i - 1].mu;
      for (const auto& mu : spectra[i]) CHECK(std::abs(t.points[i].mu - prev) <= std::abs(mu - prev) + 1e-15);
      CHECK(t.points[i].confidence > 0);
    }
}

TEST_CASE("a missing solve is bridged and flagged") {
  const auto grid = sweep_grid(1, 1.5, 0.1);
  std::vector<std::optional<std::vector<cplx>>> spectra;
  for (double k : grid) spectra.push_back(std::vector<cplx>{cplx(k, -0.1), cplx(-k, -0.5)});
  spectra[2].reset();
  const auto ts = build_tracks(grid, spectra, 0.1);
  CHECK(ts.missing == std::vector<double>{grid[2]});
  REQUIRE(ts.tracks.size() == 2);
  for (const auto& t : ts.tracks) CHECK(t.points.size() == grid.size() - 1);
  CHECK_THROWS_AS(build_tracks(grid, {}, 0.1), std::invalid_argument);
}

TEST_CASE("box membership and counting examples") {
  const BoxSpec b;
  CHECK(in_box(cplx(0, -0.01), b));
  CHECK_FALSE(in_box(cplx(0, 0), b));       // real axis excluded
  CHECK_FALSE(in_box(cplx(0, 1e-9), b));
  CHECK_FALSE(in_box(cplx(0.4, -0.01), b));  // open in Re
  CHECK_FALSE(in_box(cplx(0, -0.1), b));     // open in Im
  CHECK(in_box(cplx(-0.399, -0.099), b));
  TrajectorySet empty;
  CHECK(box_count(empty, b) == 0);
  TrajectorySet ts;
  ts.tracks.push_back(track_of({{5.0, {1, -1}}, {5.025, {0, -0.01}}, {5.05, {-1, -1}}}, 0));
  ts.tracks.push_back(track_of({{5.0, {2, -1}}, {5.025, {2, -0.01}}}, 1));
  CHECK(box_count(ts, b) == 1);
  CHECK(box_track_ids(ts, b) == std::vector<int>{0});
  CHECK(box_count(ts, {.k_minus = 5.03, .k_plus = 6}) == 0);
  CHECK(box_count(ts, {.k_minus = 5.025, .k_plus = 5.025}) == 1);
  CHECK_THROWS_AS(box_count(ts, {.eps1 = 0}), std::invalid_argument);
  CHECK_THROWS_AS(box_count(ts, {.k_minus = 2, .k_plus = 1}), std::invalid_argument);
}

TEST_CASE("box count is monotone in the box and the window") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0, 1);
  TrajectorySet ts;
  for (int id = 0; id < 40; ++id) {
    std::vector<std::pair<double, cplx>> pts;
    const cplx start(2 * u(rng) - 1, -0.3 * u(rng)), vel(u(rng) - 0.5, 0.05 * (u(rng) - 0.5));
    for (int i = 0; i < 20; ++i) pts.push_back({8.5 + 0.025 * i, start + vel * (0.025 * i)});
    ts.tracks.push_back(track_of(pts, id));
  }
  for (int trial = 0; trial < 200; ++trial) {
    BoxSpec a{0.01 + 0.3 * u(rng), 0.01 + 0.1 * u(rng), 8.5 + 0.3 * u(rng), 8.8 + 0.3 * u(rng)};
    BoxSpec b = a;
    b.eps1 += 0.1 * u(rng);
    b.eps0 += 0.05 * u(rng);
    b.k_minus -= 0.1 * u(rng);
    b.k_plus += 0.1 * u(rng);
    CHECK(box_count(ts, b) >= box_count(ts, a));
  }
}

TEST_CASE("sweep is deterministic, parallel-safe, and stable under step halving") {
  const auto& d = coarse_small();
  SweepOptions so;
  so.spectrum.nev = 4;
  const auto a = sweep(d, 5.0, 5.5, 0.05, so);
  so.jobs = 2;
  const auto b = sweep(d, 5.0, 5.5, 0.05, so);
  CHECK(a.failures.empty());
  REQUIRE(a.traj.tracks.size() == b.traj.tracks.size());
  for (std::size_t t = 0; t < a.traj.tracks.size(); ++t) {
    REQUIRE(a.traj.tracks[t].points.size() == b.traj.tracks[t].points.size());
    for (std::size_t i = 0; i < a.traj.tracks[t].points.size(); ++i) CHECK(a.traj.tracks[t].points[i].mu == b.traj.tracks[t].points[i].mu);
  }
  for (const auto& s : a.spectra) check_sign(s);
  // halving the step: every coarse track is a subsequence of one fine track
  so.jobs = 1;
  const auto f = sweep(d, 5.0, 5.5, 0.025, so);
  for (const auto& ct : a.traj.tracks) {
    const Track* match = nullptr;
    for (const auto& ft : f.traj.tracks)
      for (const auto& p : ft.points)
        if (p.k == ct.points.front().k && p.mu == ct.points.front().mu) match = &ft;
    REQUIRE(match);
    for (const auto& cp : ct.points) {
      bool found = false;
      for (const auto& fp : match->points) found = found || (fp.k == cp.k && fp.mu == cp.mu);
      CHECK(found);
    }
  }
}

TEST_CASE("cutoff function") {
  const CutoffSpec c{-0.5, -0.4};
  CHECK(c.value(-0.6) == 0);
  CHECK(c.value(-0.3) == 1);
  CHECK(c.value(-0.45) == Approx(0.5).margin(1e-15));
  const double h = 1e-6;
  for (double x : {-0.49, -0.46, -0.42, -0.401}) {
    CHECK(c.d1(x) == Approx((c.value(x + h) - c.value(x - h)) / (2 * h)).epsilon(1e-6));
    CHECK(c.d2(x) == Approx((c.d1(x + h) - c.d1(x - h)) / (2 * h)).epsilon(1e-5).margin(1e-6));
  }
  CHECK(c.d1(-0.5) == 0);
  CHECK(c.d2(-0.4) == 0);
  const auto dc = default_cutoff(CavitySpec::large());
  CHECK(dc.x0 == Approx(std::cos(0.9 * std::numbers::pi) + kCutoffMargin).margin(1e-15));
  CHECK(dc.x1 - dc.x0 == Approx(kCutoffWidth).margin(1e-15));
}

TEST_CASE("quasimode quality in the large cavity: frozen values and exponential trend") {
  const auto cav = CavitySpec::large();
  std::vector<double> ks, eps;
  for (int m = 1; m <= 3; ++m) {
    const auto r = quasimode_quality(ellipse_mode_frequency(m, 0, Parity::even, 1, 0.5), cav);
    CHECK(r.support_ok);
    CHECK(r.margin == Approx(kCutoffMargin).margin(1e-15));
    CHECK(r.norm_check > 0.99);
    CHECK(r.norm_check <= 1 + 1e-9);
    CHECK(r.eps == Approx(r.eps_raw / r.norm_check).epsilon(1e-15));
    ks.push_back(r.mode.k);
    eps.push_back(r.eps);
  }
  // regression values of the collar quadrature
  CHECK(eps[0] == Approx(0.8413).epsilon(2e-3));
  CHECK(eps[1] == Approx(0.06297).epsilon(2e-3));
  CHECK(eps[2] == Approx(0.004769).epsilon(2e-3));
  CHECK(eps[0] > eps[1]);
  CHECK(eps[1] > eps[2]);
  CHECK(loglinear_r2(ks, eps) > 0.9);
}

TEST_CASE("quasimode quality independent of the collar quadrature resolution") {
  // the collar identity against a direct five-point Laplacian of chi u
  const auto mode = ellipse_mode_frequency(2, 0, Parity::even, 1, 0.5);
  const auto r = quasimode_quality(mode, CavitySpec::large());
  const auto& ch = r.cutoff;
  const double h = 2.5e-4;
  auto w = [&](double x, double y) { return ch.value(x) * ellipse_mode_field(mode, {x, y}); };
  double s = 0;
  const int nx = 200, ny = 200;
  const double dx = (ch.x1 - ch.x0) / nx;
  for (int i = 0; i < nx; ++i) {
    const double x = ch.x0 + (i + 0.5) * dx;
    const double yt = 0.5 * std::sqrt(1 - x * x) - 2 * h;
    const double dy = 2 * yt / ny;
    for (int j = 0; j < ny; ++j) {
      const double y = -yt + (j + 0.5) * dy;
      const double lap = (w(x + h, y) + w(x - h, y) + w(x, y + h) + w(x, y - h) - 4 * w(x, y)) / (h * h);
      const double g = lap + mode.k * mode.k * w(x, y);
      s += g * g * dx * dy;
    }
  }
  CHECK(std::sqrt(s) == Approx(r.eps_raw).epsilon(2e-2));
}

TEST_CASE("small cavity leaks the (0,3) odd mode") {
  const auto large = quasimode_quality(ellipse_mode_frequency(1, 0, Parity::even, 1, 0.5), CavitySpec::large());
  const auto small = quasimode_quality(ellipse_mode_frequency(0, 3, Parity::odd, 1, 0.5), CavitySpec::small());
  CHECK((!small.support_ok || small.eps > 100 * large.eps));
  CHECK_THROWS_AS(quasimode_quality(ellipse_mode_frequency(0, 0, Parity::even, 1, 0.6), CavitySpec::large()), std::invalid_argument);
  CHECK_THROWS_AS(quasimode_quality(large.mode, CavitySpec::large(), CutoffSpec{0, 0}), std::invalid_argument);
  // cutoff reaching into the opening is flagged but still evaluated
  const auto mouth = std::cos(0.9 * std::numbers::pi);
  const auto bad = quasimode_quality(large.mode, CavitySpec::large(), CutoffSpec{mouth - 0.05, mouth + 0.05});
  CHECK_FALSE(bad.support_ok);
  CHECK(bad.eps > 0);
}

TEST_CASE("multiplicity in a window") {
  const auto cav = CavitySpec::large();
  const auto r30 = quasimode_quality(ellipse_mode_frequency(3, 0, Parity::even, 1, 0.5), cav);
  const auto r24 = quasimode_quality(ellipse_mode_frequency(2, 4, Parity::odd, 1, 0.5), cav);
  const auto r10 = quasimode_quality(ellipse_mode_frequency(1, 0, Parity::even, 1, 0.5), cav);
  const std::vector<QuasimodeReport> all{r10, r30, r24};
  const auto m = multiplicity_in_window(all, 22.5, 22.7);
  CHECK(m.m == 2);
  CHECK(m.members == std::vector<int>{1, 2});
  CHECK(m.overlap[0][0] == 1);
  CHECK(m.overlap[0][1] < 1e-12);
  CHECK(m.overlap[1][0] == m.overlap[0][1]);
  CHECK(m.violations.empty());
  const auto one = multiplicity_in_window(all, 9, 10);
  CHECK(one.m == 1);
  CHECK(one.overlap == std::vector<std::vector<double>>{{1.0}});
  CHECK(multiplicity_in_window(all, 30, 40).m == 0);
  // same-parity pair: overlap is small but not zero by symmetry
  const auto e = multiplicity_in_window(all, 9, 23);
  CHECK(e.m == 3);
  CHECK(e.overlap[0][1] < 0.1);
  auto mixed = all;
  mixed[1].cavity = CavitySpec::small();
  CHECK_THROWS_AS(multiplicity_in_window(mixed, 0, 100), std::invalid_argument);
}

TEST_CASE("theorem check preconditions") {
  const auto dom = make_domain(CavitySpec::large(), 1.5);
  const auto mode = ellipse_mode_frequency(1, 0, Parity::even, 1, 0.5);
  CHECK_THROWS_AS(theorem1_check(dom, mode, 4.4), std::invalid_argument);
  CHECK_THROWS_AS(theorem1_check(dom, mode, 4.5), std::invalid_argument);
  CHECK_THROWS_AS(theorem1_check(make_disc(1.5), mode, 4.6), std::invalid_argument);
  const auto r = theorem1_check(dom, mode, 4.6, {}, mode.k + 0.3);
  CHECK_FALSE(r.applicable);
  CHECK_FALSE(r.pass);
}

TEST_CASE("theorem check on a coarse mesh reports both sides") {
  const auto dom = make_domain(CavitySpec::large(), 1.5);
  const auto mode = ellipse_mode_frequency(0, 0, Parity::even, 1, 0.5);
  Theorem1Options opt;
  opt.mesh.h = 0.03;
  opt.spectrum.nev = 2;
  const auto r = theorem1_check(dom, mode, 4.6, opt);
  CHECK(r.applicable);
  CHECK(r.h == 0.03);
  CHECK(r.mu_min > 0);
  CHECK(r.mu_min_coarse > 0);
  CHECK(r.bound == Approx(std::pow(mode.k, 4.6) * r.eps).epsilon(1e-14));
  CHECK(r.budget == Approx(std::abs(r.mu_min - r.mu_min_coarse) / 3).epsilon(1e-14));
  CHECK(r.pass == (r.mu_min <= r.bound + r.budget));
  CHECK(r.pass);
}
