// htlab command-line driver.  Exit codes: 0 success, 1 usage, 2 numerical failure.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "htlab/htlab.hpp"

namespace fs = std::filesystem;
using namespace htlab;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --config FILE: a JSON object.  Top-level keys set global options, an object
// under a subcommand name sets that subcommand's options.  Flags given on the
// command line win.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}\n"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& is) const override {
    json j;
    try {
      is >> j;
    } catch (const json::exception& e) {
      throw CLI::ConversionError(std::string("config: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config: top level must be an object");
    std::vector<CLI::ConfigItem> items;
    collect(j, {}, items);
    return items;
  }

 private:
  static std::string scalar(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_number()) return io::num(v.get<double>());
    throw CLI::ConversionError("config: unsupported value " + v.dump());
  }

  static void collect(const json& obj, std::vector<std::string> parents, std::vector<CLI::ConfigItem>& items) {
    for (const auto& [key, v] : obj.items()) {
      if (v.is_object()) {
        auto p = parents;
        p.push_back(key);
        collect(v, p, items);
        continue;
      }
      CLI::ConfigItem it;
      it.parents = parents;
      it.name = key;
      if (v.is_array())
        for (const auto& e : v) it.inputs.push_back(scalar(e));
      else
        it.inputs.push_back(scalar(v));
      items.push_back(std::move(it));
    }
  }
};

struct Globals {
  std::string out = ".";
  int jobs = 1;
  std::string seed_hex = "5EED";
  bool verbose = false;
};

struct GeometryArgs {
  std::string cavity = "large";
  double R = 2.0;
  double h = 0;
  double h_far = 0;
  std::string mesh_file;
  std::string geometry_file;
};

void add_geometry(CLI::App* sub, GeometryArgs& g, double default_R) {
  g.R = default_R;
  sub->add_option("--cavity", g.cavity, "Cavity preset")->check(CLI::IsMember({"small", "large"}))->capture_default_str();
  sub->add_option("--R", g.R, "Truncation radius")->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--meshwidth", g.h, "Mesh size near the cavity (0: frequency rule)")->check(CLI::NonNegativeNumber);
  sub->add_option("--h-far", g.h_far, "Mesh size cap away from the cavity (0: automatic)")->check(CLI::NonNegativeNumber);
  sub->add_option("--geometry", g.geometry_file, "Geometry JSON, replaces --cavity/--R")->check(CLI::ExistingFile);
  sub->add_option("--mesh", g.mesh_file, "HTMESH file, replaces the built-in mesher")->check(CLI::ExistingFile);
}

DomainSpec make_geometry(const GeometryArgs& g) {
  if (!g.geometry_file.empty()) {
    std::ifstream is(g.geometry_file);
    json j;
    try {
      is >> j;
      return io::geometry_from_json(j);
    } catch (const json::exception& e) {
      throw UsageError("geometry file: " + std::string(e.what()));
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  return make_domain(CavitySpec::of(cavity_kind_from_string(g.cavity)), g.R);
}

LabDiscretization make_discretization(const DomainSpec& dom, const GeometryArgs& g, double k_ref) {
  if (!g.mesh_file.empty()) return discretize(dom, load_mesh(g.mesh_file));
  LabMeshOptions mo;
  mo.h = g.h;
  mo.h_far = g.h_far;
  return discretize(dom, k_ref, mo);
}

std::uint64_t parse_seed(const std::string& s) {
  std::string t = s;
  if (t.rfind("0x", 0) == 0 || t.rfind("0X", 0) == 0) t = t.substr(2);
  if (t.empty() || t.size() > 16 || t.find_first_not_of("0123456789abcdefABCDEF") != std::string::npos)
    throw UsageError("--seed expects a hexadecimal value, got '" + s + "'");
  return std::stoull(t, nullptr, 16);
}

std::pair<double, double> parse_pair(const std::string& s, const char* what) {
  const auto c = s.find(',');
  if (c == std::string::npos) throw UsageError(std::string(what) + " expects two comma-separated numbers");
  try {
    return {io::parse_num(s.substr(0, c)), io::parse_num(s.substr(c + 1))};
  } catch (const std::exception&) {
    throw UsageError(std::string(what) + ": cannot parse '" + s + "'");
  }
}

ModeLabel parse_label(const std::string& s) {
  try {
    return parse_mode_label(s);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

std::string out_path(const Globals& gl, const std::string& name) {
  fs::create_directories(gl.out);
  return (fs::path(gl.out) / name).string();
}

void note(const Globals& gl, const std::string& msg) {
  if (gl.verbose) std::cerr << msg << '\n';
}

SpectrumOptions spectrum_options(const Globals& gl, int nev, const std::string& backend, double tol) {
  SpectrumOptions so;
  so.nev = nev;
  so.coupled.backend = dtn_backend_from_string(backend);
  so.arnoldi.seed = parse_seed(gl.seed_hex);
  so.arnoldi.tol = tol;
  return so;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"htlab: near-zero spectra of truncated exterior Helmholtz problems around cavities"};
  app.require_subcommand(1);
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON configuration file");

  Globals gl;
  app.add_option("--out", gl.out, "Output directory")->capture_default_str();
  app.add_option("--jobs", gl.jobs, "Parallel solves in sweeps")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--seed", gl.seed_hex, "Start-vector seed (hex)")
      ->capture_default_str()
      ->check(CLI::Validator(
          [](std::string& v) {
            try {
              parse_seed(v);
            } catch (const UsageError& e) {
              return std::string(e.what());
            }
            return std::string();
          },
          "HEX"));
  app.add_flag("-v,--verbose", gl.verbose, "Progress on stderr");

  // modes
  auto* c_modes = app.add_subcommand("modes", "Dirichlet eigenfrequencies of an ellipse");
  double a1 = 0, a2 = 0;
  std::vector<std::string> mode_labels;
  c_modes->add_option("--a1", a1, "Semi-major axis")->required()->check(CLI::PositiveNumber);
  c_modes->add_option("--a2", a2, "Semi-minor axis")->required()->check(CLI::PositiveNumber);
  c_modes->add_option("--mode", mode_labels, "Mode label parity:m:n, e.g. e:1:0")->required();

  // spectrum
  auto* c_spec = app.add_subcommand("spectrum", "Eigenvalues mu nearest zero at one frequency");
  GeometryArgs g_spec;
  double k_spec = 0, tol = 1e-10;
  int nev = 10;
  std::string backend = "bem";
  add_geometry(c_spec, g_spec, 2.0);
  c_spec->add_option("--k", k_spec, "Frequency")->required()->check(CLI::PositiveNumber);
  c_spec->add_option("--nev", nev, "Number of eigenvalues")->check(CLI::PositiveNumber)->capture_default_str();
  c_spec->add_option("--backend", backend, "DtN realization")->check(CLI::IsMember({"bem", "fourier"}))->capture_default_str();
  c_spec->add_option("--tol", tol, "Krylov-Schur tolerance")->check(CLI::PositiveNumber)->capture_default_str();

  // sweep
  auto* c_sweep = app.add_subcommand("sweep", "Spectra on a k grid, trajectories and box count");
  GeometryArgs g_sweep;
  double kmin = 2.5, kmax = 12.5, step = 0.025;
  int nev_sweep = 6;
  std::string box_str = "0.2,0.05", window_str, backend_sweep = "bem";
  add_geometry(c_sweep, g_sweep, 1.5);
  c_sweep->add_option("--kmin", kmin)->check(CLI::PositiveNumber)->capture_default_str();
  c_sweep->add_option("--kmax", kmax)->check(CLI::PositiveNumber)->capture_default_str();
  c_sweep->add_option("--step", step)->check(CLI::PositiveNumber)->capture_default_str();
  c_sweep->add_option("--nev", nev_sweep)->check(CLI::PositiveNumber)->capture_default_str();
  c_sweep->add_option("--box", box_str, "eps1,eps0")->capture_default_str();
  c_sweep->add_option("--window", window_str, "k-,k+ (default: the swept range)");
  c_sweep->add_option("--backend", backend_sweep)->check(CLI::IsMember({"bem", "fourier"}))->capture_default_str();
  c_sweep->add_option("--tol", tol)->check(CLI::PositiveNumber);

  // eigenfunction
  auto* c_eig = app.add_subcommand("eigenfunction", "|u| of one eigenvector on a regular grid");
  GeometryArgs g_eig;
  double k_eig = 0;
  int index = 0, nev_eig = 0, grid = 200;
  std::string backend_eig = "bem";
  add_geometry(c_eig, g_eig, 2.0);
  c_eig->add_option("--k", k_eig)->required()->check(CLI::PositiveNumber);
  c_eig->add_option("--index", index, "0-based rank by |mu|")->capture_default_str();
  c_eig->add_option("--nev", nev_eig, "Eigenvalues to compute (default index + 1)");
  c_eig->add_option("--grid", grid, "Samples per axis")->check(CLI::PositiveNumber)->capture_default_str();
  c_eig->add_option("--backend", backend_eig)->check(CLI::IsMember({"bem", "fourier"}))->capture_default_str();
  c_eig->add_option("--tol", tol)->check(CLI::PositiveNumber);

  // quasimode
  auto* c_qm = app.add_subcommand("quasimode", "Quality of cut-off ellipse modes in a cavity");
  GeometryArgs g_qm;
  std::vector<std::string> qm_labels{"e:1:0", "e:2:0", "e:3:0"};
  std::string cutoff_str, qm_window;
  add_geometry(c_qm, g_qm, 2.0);
  c_qm->add_option("--mode", qm_labels)->capture_default_str();
  c_qm->add_option("--cutoff", cutoff_str, "x0,x1 of the collar (default: just inside the mouth)");
  c_qm->add_option("--window", qm_window, "k-,k+ for the multiplicity report");

  // check-theorem1
  auto* c_th = app.add_subcommand("check-theorem1", "Consistency check |mu_min| <= k^alpha eps(k)");
  GeometryArgs g_th;
  std::string th_label = "e:1:0";
  double alpha = 4.6, k_th = 0;
  int nev_th = 4;
  add_geometry(c_th, g_th, 2.0);
  c_th->add_option("--mode", th_label)->capture_default_str();
  c_th->add_option("--alpha", alpha)->capture_default_str();
  c_th->add_option("--k", k_th, "Evaluation frequency (default: the mode frequency)")->check(CLI::PositiveNumber);
  c_th->add_option("--nev", nev_th)->check(CLI::PositiveNumber)->capture_default_str();
  c_th->add_option("--tol", tol)->check(CLI::PositiveNumber);

  // mesh-export
  auto* c_mesh = app.add_subcommand("mesh-export", "Write the mesh, geometry and optionally FEM matrices");
  GeometryArgs g_mesh;
  double k_mesh = 10;
  bool matrices = false;
  add_geometry(c_mesh, g_mesh, 2.0);
  c_mesh->add_option("--k", k_mesh, "Frequency for the mesh-size rule and A_k")->check(CLI::PositiveNumber)->capture_default_str();
  c_mesh->add_flag("--matrices", matrices, "Also write stiffness.txt, mass.txt and helmholtz.txt");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*c_modes) {
      std::vector<EllipseMode> modes;
      for (const auto& s : mode_labels) {
        modes.push_back(ellipse_mode_frequency(parse_label(s), a1, a2));
        note(gl, modes.back().label() + " k = " + io::num(modes.back().k));
      }
      const auto path = out_path(gl, "modes.json");
      io::write_json(path, io::modes_document(a1, a2, modes));
      std::cout << path << '\n';
    } else if (*c_spec) {
      const auto dom = make_geometry(g_spec);
      const auto d = make_discretization(dom, g_spec, k_spec);
      note(gl, "mesh: " + std::to_string(d.mesh.nodes.size()) + " nodes, " + std::to_string(d.bs.size()) + " on Gamma_tr");
      const auto recs = spectrum_near_zero(d, k_spec, spectrum_options(gl, nev, backend, tol));
      const auto path = out_path(gl, "spectra.csv");
      io::write_text(path, [&](std::ostream& os) { io::write_spectra_csv(os, io::rows_from_spectrum(recs)); });
      std::cout << path << '\n';
    } else if (*c_sweep) {
      if (kmax < kmin) throw UsageError("--kmax must not be below --kmin");
      const auto [e1, e0] = parse_pair(box_str, "--box");
      if (!(e1 > 0 && e0 > 0)) throw UsageError("--box values must be positive");
      const auto dom = make_geometry(g_sweep);
      const auto d = make_discretization(dom, g_sweep, kmax);
      note(gl, "mesh: " + std::to_string(d.mesh.nodes.size()) + " nodes");
      SweepOptions so;
      so.spectrum = spectrum_options(gl, nev_sweep, backend_sweep, tol);
      so.jobs = gl.jobs;
      const auto res = sweep(d, kmin, kmax, step, so);
      for (const auto& f : res.failures) std::cerr << "warning: " << f << '\n';
      if (res.traj.missing.size() == res.traj.k_grid.size()) {
        std::cerr << "error: every solve failed\n";
        return 2;
      }
      BoxSpec box{e1, e0, res.traj.k_grid.front(), res.traj.k_grid.back()};
      if (!window_str.empty()) std::tie(box.k_minus, box.k_plus) = parse_pair(window_str, "--window");
      if (box.k_minus > box.k_plus) throw UsageError("--window must satisfy k- <= k+");
      const auto csv = out_path(gl, "spectra.csv");
      io::write_text(csv, [&](std::ostream& os) { io::write_spectra_csv(os, io::rows_from_tracks(res.traj)); });
      const auto bj = out_path(gl, "boxcount.json");
      io::write_json(bj, io::boxcount_document(dom, res.traj, box));
      std::cout << csv << '\n' << bj << '\n';
    } else if (*c_eig) {
      if (index < 0) throw UsageError("--index must be non-negative");
      const int want = nev_eig > 0 ? nev_eig : index + 1;
      if (index >= want) throw UsageError("--index " + std::to_string(index) + " out of range for --nev " + std::to_string(want));
      const auto dom = make_geometry(g_eig);
      const auto d = make_discretization(dom, g_eig, k_eig);
      const auto recs = spectrum_near_zero(d, k_eig, spectrum_options(gl, want, backend_eig, tol));
      if (index >= static_cast<int>(recs.size()))
        throw UsageError("--index " + std::to_string(index) + " out of range (" + std::to_string(recs.size()) + " eigenvalues)");
      const auto field = sample_eigenfunction(d, recs[index], grid, grid);
      note(gl, "mu = " + io::num(recs[index].mu.real()) + " " + io::num(recs[index].mu.imag()) + "i, sampled L2 norm " + io::num(field.l2_norm()));
      const auto path = out_path(gl, "field.csv");
      io::write_text(path, [&](std::ostream& os) { io::write_field_csv(os, field); });
      std::cout << path << '\n';
    } else if (*c_qm) {
      const auto dom = make_geometry(g_qm);
      if (!dom.has_cavity) throw UsageError("quasimode needs a cavity");
      std::optional<CutoffSpec> cut;
      if (!cutoff_str.empty()) {
        const auto [x0, x1] = parse_pair(cutoff_str, "--cutoff");
        if (!(x1 > x0)) throw UsageError("--cutoff must satisfy x0 < x1");
        cut = CutoffSpec{x0, x1};
      }
      std::vector<QuasimodeReport> reps;
      for (const auto& s : qm_labels) {
        const auto mode = ellipse_mode_frequency(parse_label(s), dom.cavity.a1, dom.cavity.a2);
        reps.push_back(quasimode_quality(mode, dom.cavity, cut));
        note(gl, mode.label() + " eps = " + io::num(reps.back().eps));
      }
      std::optional<MultiplicityReport> mult;
      if (!qm_window.empty()) {
        const auto [km, kp] = parse_pair(qm_window, "--window");
        mult = multiplicity_in_window(reps, km, kp);
      }
      const auto path = out_path(gl, "quasimode.json");
      io::write_json(path, io::quasimode_document(dom, reps, mult ? &*mult : nullptr));
      std::cout << path << '\n';
    } else if (*c_th) {
      if (!(alpha > kAlphaThreshold)) throw UsageError("--alpha must exceed 4.5");
      const auto dom = make_geometry(g_th);
      if (!dom.has_cavity) throw UsageError("check-theorem1 needs a cavity");
      const auto mode = ellipse_mode_frequency(parse_label(th_label), dom.cavity.a1, dom.cavity.a2);
      Theorem1Options to;
      to.mesh.h = g_th.h;
      to.mesh.h_far = g_th.h_far;
      to.spectrum = spectrum_options(gl, nev_th, "bem", tol);
      const auto rep = theorem1_check(dom, mode, alpha, to, k_th > 0 ? std::optional<double>(k_th) : std::nullopt);
      const auto path = out_path(gl, "theorem1.json");
      io::write_json(path, io::theorem1_document(dom, mode, rep));
      std::cout << path << '\n';
      if (rep.applicable)
        std::cout << "|mu_min| = " << io::num(rep.mu_min) << ", k^alpha eps = " << io::num(rep.bound) << ", budget = " << io::num(rep.budget)
                  << (rep.pass ? " : holds\n" : " : violated\n");
      else
        std::cout << "not applicable: k is not the mode frequency\n";
    } else if (*c_mesh) {
      const auto dom = make_geometry(g_mesh);
      const auto d = make_discretization(dom, g_mesh, k_mesh);
      const auto q = validate_mesh(d.mesh);
      note(gl, "mesh: " + std::to_string(d.mesh.nodes.size()) + " nodes, min angle " + io::num(q.min_angle_deg));
      const auto mp = out_path(gl, "mesh.htmesh");
      save_mesh(mp, d.mesh);
      const auto gp = out_path(gl, "geometry.json");
      io::write_json(gp, io::geometry_json(dom));
      std::cout << mp << '\n' << gp << '\n';
      if (matrices) {
        io::write_text(out_path(gl, "stiffness.txt"), [&](std::ostream& os) { export_matrix(os, d.fem.K); });
        io::write_text(out_path(gl, "mass.txt"), [&](std::ostream& os) { export_matrix(os, d.fem.M); });
        const SpMatC A = helmholtz_matrix(d.fem.K, d.fem.M, k_mesh);
        io::write_text(out_path(gl, "helmholtz.txt"), [&](std::ostream& os) { export_matrix(os, A); });
      }
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
