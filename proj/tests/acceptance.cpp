// Acceptance run: one PASS/FAIL line per primary criterion.  Artifacts
// (spectra.csv, boxcount.json, modes.json, quasimode.json, theorem1.json) go to
// argv[1], default ./acceptance_out.

#include <complex>
#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#include <lapacke.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "htlab/htlab.hpp"

using namespace htlab;
using specfun::Parity;

namespace {

// Tolerances
constexpr double kMathieuRelTol = 1e-9;
constexpr double kFemRelTol = 5e-3;
constexpr double kFemH = 0.01;
constexpr double kDtnRelTol = 1e-5;
constexpr double kBackendTol = 1e-5;
constexpr double kContrastRatio = 0.1;  // |mu_min(k)| / |mu_min(k + 0.3)| below this is a contrast
constexpr double kDetune = 0.3;
constexpr double kHighKMeshwidth = 0.004;  // used instead of meshwidth_rule(k) for k > 20
constexpr double kSignTol = 1e-6;
constexpr double kTrendR2 = 0.9;
constexpr double kPencilTol = 1e-8;
constexpr double kAlpha = 4.6;

double g_max_im = -std::numeric_limits<double>::infinity();
int g_n_mu = 0;

void record(const std::vector<EigenRecord>& recs) {
  for (const auto& r : recs) {
    g_max_im = std::max(g_max_im, r.mu.imag());
    ++g_n_mu;
  }
}

struct Line {
  std::string name;
  bool pass;
  std::string detail;
};
std::vector<Line> g_lines;

void report(const std::string& name, bool pass, const std::string& detail) {
  g_lines.push_back({name, pass, detail});
  std::cout << (pass ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
}

std::string fmt(const char* f, double x) {
  char b[64];
  std::snprintf(b, sizeof b, f, x);
  return b;
}

double secs(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct RefMode {
  int m, n;
  Parity p;
  double k;
};
const std::vector<RefMode> kRefModes{{0, 3, Parity::odd, 9.17017539835808},
                                     {1, 0, Parity::even, 9.977120156613617},
                                     {3, 0, Parity::even, 22.526496854613104},
                                     {2, 4, Parity::odd, 22.6811692253925}};

void mode_frequencies(const std::filesystem::path& out) {
  double worst_m = 0, worst_f = 0;
  std::vector<EllipseMode> modes;
  for (const auto& r : kRefModes) {
    const auto mode = ellipse_mode_frequency(r.m, r.n, r.p, 1, 0.5);
    modes.push_back(mode);
    worst_m = std::max(worst_m, std::abs(mode.k - r.k) / r.k);
    const auto rich = fem_ellipse_richardson(r.m, r.n, r.p, 1, 0.5, kFemH, r.k);
    const double e = std::abs(rich.k_extrapolated - r.k) / r.k;
    std::cerr << "  fem " << mode.label() << " k_h " << rich.k_fine << " k_2h " << rich.k_coarse << " extrapolated " << rich.k_extrapolated
              << " rel " << e << "\n";
    worst_f = std::max(worst_f, e);
  }
  io::write_json((out / "modes.json").string(), io::modes_document(1, 0.5, modes));
  report("ellipse mode frequencies", worst_m <= kMathieuRelTol && worst_f <= kFemRelTol,
         "max rel err Mathieu " + fmt("%.2e", worst_m) + " (tol 1e-9), FEM h=0.01 + Richardson " + fmt("%.2e", worst_f) + " (tol 5e-3)");
}

void dtn_oracle() {
  const double k = 5, R = 2;
  const auto bs = uniform_boundary_space(512, R);
  const auto ops = assemble_bem(bs, k);
  const Eigen::MatrixXd Mb = boundary_mass(bs);
  const cplx h0(std::cyl_bessel_j(0, k * R), std::cyl_neumann(0, k * R));
  const cplx dh0 = -k * cplx(std::cyl_bessel_j(1, k * R), std::cyl_neumann(1, k * R));
  const Eigen::VectorXcd out = dtn_apply_bem(ops, Mb, Eigen::VectorXcd::Constant(512, h0));
  const double e_h0 = (out.array() - dh0).abs().maxCoeff() / std::abs(dh0);
  double e_modes = 0;
  for (int n = -10; n <= 10; ++n) {
    Eigen::VectorXcd g(512);
    for (int j = 0; j < 512; ++j) g[j] = std::polar(1.0, n * bs.theta[j]);
    const Eigen::VectorXcd a = dtn_apply_bem(ops, Mb, g), b = dtn_apply_fourier(bs, k, g);
    e_modes = std::max(e_modes, (a - b).cwiseAbs().maxCoeff() / std::abs(fourier_dtn_symbol(n, k, R)));
  }
  report("DtN oracle", e_h0 <= kDtnRelTol && e_modes <= kBackendTol,
         "H0 trace rel err " + fmt("%.2e", e_h0) + " (tol 1e-5), BEM vs Fourier |n|<=10 " + fmt("%.2e", e_modes) + " (tol 1e-5)");
}

void contrast() {
  bool ok = true;
  std::ostringstream d;
  SpectrumOptions so;
  so.nev = 4;
  so.arnoldi.tol = 1e-10;
  for (auto kind : {CavityKind::large, CavityKind::small}) {
    const auto dom = make_domain(CavitySpec::of(kind), 2.0);
    for (const auto& r : kRefModes) {
      const auto t0 = std::chrono::steady_clock::now();
      LabMeshOptions mo;
      mo.h = r.k > 20 ? kHighKMeshwidth : meshwidth_rule(r.k);
      const auto disc = discretize(dom, r.k, mo);
      const auto at = spectrum_near_zero(disc, r.k, so);
      const auto off = spectrum_near_zero(disc, r.k + kDetune, so);
      record(at);
      record(off);
      const double ratio = min_abs_mu(at) / min_abs_mu(off);
      const bool expect = kind == CavityKind::large || r.p == Parity::even;
      const bool got = ratio < kContrastRatio;
      ok = ok && expect == got;
      std::cerr << "  " << to_string(kind) << " k " << r.k << " h " << mo.h << " dofs " << disc.fem.n_dofs() << " |mu_min| " << min_abs_mu(at)
                << " detuned " << min_abs_mu(off) << " ratio " << ratio << (got ? " contrast" : " none") << " (" << secs(t0) << " s)\n";
      d << to_string(kind)[0] << "@" << fmt("%.3f", r.k) << "=" << fmt("%.3g", ratio) << (expect == got ? "" : "!") << " ";
    }
  }
  report("near-zero contrast", ok, "ratios " + d.str() + "(contrast iff < 0.1; expected at all four for large, e-modes only for small)");
}

void sweep_box(const std::filesystem::path& out) {
  int count[2] = {0, 0};
  int idx = 0;
  std::ostringstream d;
  for (auto kind : {CavityKind::large, CavityKind::small}) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto dom = make_domain(CavitySpec::of(kind), 1.5);
    const auto disc = discretize(dom, 10.5);
    SweepOptions so;
    so.spectrum.nev = 6;
    so.spectrum.arnoldi.tol = 1e-10;
    const auto res = sweep(disc, 8.5, 10.5, 0.025, so);
    for (const auto& s : res.spectra) record(s);
    const BoxSpec box{0.2, 0.05, 8.5, 10.5};
    count[idx] = box_count(res.traj, box);
    const std::string tag = to_string(kind);
    io::write_text((out / ("spectra_" + tag + ".csv")).string(), [&](std::ostream& os) { io::write_spectra_csv(os, io::rows_from_tracks(res.traj)); });
    io::write_json((out / ("boxcount_" + tag + ".json")).string(), io::boxcount_document(dom, res.traj, box));
    std::cerr << "  sweep " << tag << " dofs " << disc.fem.n_dofs() << " tracks " << res.traj.tracks.size() << " box " << count[idx]
              << " failures " << res.failures.size() << " (" << secs(t0) << " s)\n";
    d << tag << " " << count[idx] << (res.failures.empty() ? "" : " (" + std::to_string(res.failures.size()) + " failed solves)") << ", ";
    ++idx;
  }
  report("sweep box count", count[0] > count[1], "E(0.2,0.05,8.5,10.5) at R=1.5: " + d.str() + "need large > small");
}

void quasimode_trend(const std::filesystem::path& out) {
  const auto cav = CavitySpec::large();
  std::vector<QuasimodeReport> reps;
  std::vector<double> x, y;
  for (int m = 1; m <= 3; ++m) {
    reps.push_back(quasimode_quality(ellipse_mode_frequency(m, 0, Parity::even, 1, 0.5), cav));
    x.push_back(reps.back().mode.k);
    y.push_back(std::log(reps.back().eps));
  }
  const double mx = (x[0] + x[1] + x[2]) / 3, my = (y[0] + y[1] + y[2]) / 3;
  double sxx = 0, sxy = 0, syy = 0;
  for (int i = 0; i < 3; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  const double r2 = sxy * sxy / (sxx * syy);
  const bool dec = reps[0].eps > reps[1].eps && reps[1].eps > reps[2].eps;
  io::write_json((out / "quasimode.json").string(), io::quasimode_document(make_domain(cav, 2.0), reps));
  report("quasimode exponential trend", dec && r2 > kTrendR2,
         "eps(e:1:0, e:2:0, e:3:0) = " + fmt("%.4g", reps[0].eps) + ", " + fmt("%.4g", reps[1].eps) + ", " + fmt("%.4g", reps[2].eps) +
             (dec ? " decreasing" : " NOT decreasing") + ", log-linear r^2 " + fmt("%.4f", r2) + " (need > 0.9)");
}

void pencil_oracle() {
  std::mt19937_64 rng(0x5EED);
  std::normal_distribution<double> g;
  const int n = 30, nf = 20, nev = 5, trials = 100;
  double worst = 0;
  int bad = 0;
  for (int t = 0; t < trials; ++t) {
    Eigen::MatrixXcd A(n, n), B = Eigen::MatrixXcd::Zero(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) A(i, j) = cplx(g(rng), g(rng));
    Eigen::MatrixXd X(nf, nf);
    for (int i = 0; i < nf; ++i)
      for (int j = 0; j < nf; ++j) X(i, j) = g(rng);
    B.topLeftCorner(nf, nf) = (X * X.transpose() / nf + Eigen::MatrixXd::Identity(nf, nf)).cast<cplx>();
    Eigen::MatrixXcd a = A, b = B;
    std::vector<cplx> alpha(n), beta(n);
    if (LAPACKE_zggev(LAPACK_COL_MAJOR, 'N', 'N', n, a.data(), n, b.data(), n, alpha.data(), beta.data(), nullptr, 1, nullptr, 1) != 0) {
      ++bad;
      continue;
    }
    double bmax = 0;
    for (auto v : beta) bmax = std::max(bmax, std::abs(v));
    std::vector<cplx> ref;
    for (int i = 0; i < n; ++i)
      if (std::abs(beta[i]) > 1e-10 * bmax) ref.push_back(alpha[i] / beta[i]);
    std::sort(ref.begin(), ref.end(), [](cplx x, cplx y) { return std::abs(x) < std::abs(y); });
    ArnoldiOptions opt;
    opt.nev = nev;
    opt.tol = 1e-13;
    const auto recs = shift_invert_eigs(lu_factor(A), A, B, opt);
    if (static_cast<int>(recs.size()) != nev) {
      ++bad;
      continue;
    }
    for (int i = 0; i < nev; ++i) worst = std::max(worst, std::abs(recs[i].mu - ref[i]) / std::max(1.0, std::abs(ref[i])));
  }
  report("pencil-solver oracle", bad == 0 && worst <= kPencilTol,
         std::to_string(trials) + " random 30x30 pencils, 5 nearest-origin mu vs zggev, max rel err " + fmt("%.2e", worst) + " (tol 1e-8)");
}

void theorem_check(const std::filesystem::path& out) {
  const auto dom = make_domain(CavitySpec::large(), 2.0);
  const auto mode = ellipse_mode_frequency(1, 0, Parity::even, 1, 0.5);
  Theorem1Options opt;
  opt.spectrum.nev = 4;
  opt.spectrum.arnoldi.tol = 1e-10;
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = theorem1_check(dom, mode, kAlpha, opt);
  std::cerr << "  theorem check h " << r.h << " mu_min " << r.mu_min << " coarse " << r.mu_min_coarse << " (" << secs(t0) << " s)\n";
  io::write_json((out / "theorem1.json").string(), io::theorem1_document(dom, mode, r));
  report("theorem check", r.applicable && r.pass,
         "k " + fmt("%.6f", r.k) + ", |mu_min| " + fmt("%.4g", r.mu_min) + " <= k^4.6 eps " + fmt("%.4g", r.bound) + " + budget " +
             fmt("%.2g", r.budget));
}

template <typename F>
void guarded(const std::string& name, F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    report(name, false, std::string("exception: ") + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  const std::filesystem::path out = argc > 1 ? argv[1] : "acceptance_out";
  std::filesystem::create_directories(out);
  guarded("ellipse mode frequencies", [&] { mode_frequencies(out); });
  guarded("DtN oracle", [&] { dtn_oracle(); });
  guarded("pencil-solver oracle", [&] { pencil_oracle(); });
  guarded("quasimode exponential trend", [&] { quasimode_trend(out); });
  guarded("theorem check", [&] { theorem_check(out); });
  guarded("near-zero contrast", [&] { contrast(); });
  guarded("sweep box count", [&] { sweep_box(out); });
  report("sign invariant", g_n_mu > 0 && g_max_im <= kSignTol,
         "max Im mu " + fmt("%.3e", g_max_im) + " over " + std::to_string(g_n_mu) + " eigenvalues (tol 1e-6)");

  int failed = 0;
  std::cout << "\nsummary\n";
  for (const auto& l : g_lines) {
    std::cout << (l.pass ? "PASS " : "FAIL ") << l.name << "\n";
    failed += !l.pass;
  }
  return failed == 0 ? 0 : 1;
}
