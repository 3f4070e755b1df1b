#pragma once

// Text outputs of the lab.  CSV: '.' decimal, '\n' endings, %.17g numbers,
// "nan" for missing samples.  JSON documents carry "format": 1.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "htlab/ellipse_modes.hpp"
#include "htlab/geometry.hpp"
#include "htlab/spectral_lab.hpp"

namespace htlab::io {

using json = nlohmann::json;

inline constexpr int kFormat = 1;

inline std::string num(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline double parse_num(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument("bad number '" + s + "'");
  return v;
}

// ---------------------------------------------------------------------------
// spectra.csv

struct SpectrumRow {
  double k = 0;
  cplx mu;
  double residual = 0;
  int track_id = -1;  // -1: single-frequency spectrum, no tracking
};

inline constexpr const char* kSpectraHeader = "k,re_mu,im_mu,residual,track_id";

inline std::vector<SpectrumRow> rows_from_spectrum(const std::vector<EigenRecord>& recs) {
  std::vector<SpectrumRow> rows;
  for (const auto& r : recs) rows.push_back({r.k, r.mu, r.residual, -1});
  return rows;
}

/// Rows ordered by k, then track id.
inline std::vector<SpectrumRow> rows_from_tracks(const TrajectorySet& ts) {
  std::vector<SpectrumRow> rows;
  for (const auto& t : ts.tracks)
    for (const auto& p : t.points) rows.push_back({p.k, p.mu, p.residual, t.id});
  std::stable_sort(rows.begin(), rows.end(), [](const SpectrumRow& a, const SpectrumRow& b) {
    return a.k < b.k || (a.k == b.k && a.track_id < b.track_id);
  });
  return rows;
}

inline void write_spectra_csv(std::ostream& os, const std::vector<SpectrumRow>& rows) {
  os << kSpectraHeader << '\n';
  for (const auto& r : rows)
    os << num(r.k) << ',' << num(r.mu.real()) << ',' << num(r.mu.imag()) << ',' << num(r.residual) << ',' << r.track_id << '\n';
}

inline std::vector<SpectrumRow> read_spectra_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kSpectraHeader) throw std::runtime_error("spectra.csv: missing or unexpected header");
  std::vector<SpectrumRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) f.push_back(c);
    if (f.size() != 5) throw std::runtime_error("spectra.csv: expected 5 columns in '" + line + "'");
    rows.push_back({parse_num(f[0]), {parse_num(f[1]), parse_num(f[2])}, parse_num(f[3]), std::stoi(f[4])});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// field.csv

inline void write_field_csv(std::ostream& os, const FieldGrid& g) {
  os << "x,y,abs_u\n";
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      const Vec2 p = g.point(i, j);
      os << num(p.x) << ',' << num(p.y) << ',' << num(g.at(i, j)) << '\n';
    }
}

// ---------------------------------------------------------------------------
// JSON documents

inline json geometry_json(const DomainSpec& d) {
  json j;
  if (!d.has_cavity) {
    j["kind"] = "disc";
  } else {
    const auto& c = d.cavity;
    j = {{"kind", to_string(c.kind)}, {"a1", c.a1}, {"a2", c.a2}, {"A1", c.A1}, {"A2", c.A2}, {"phi0", c.phi0}, {"phi1", c.phi1()}};
  }
  j["R"] = d.R;
  return j;
}

/// Inverse of geometry_json.  "small"/"large" start from the preset and take
/// any listed parameter as an override; phi1 is derived and only checked.
inline DomainSpec geometry_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  const double R = j.at("R").get<double>();
  if (kind == "disc") return make_disc(R);
  CavitySpec c = CavitySpec::of(cavity_kind_from_string(kind));
  c.a1 = j.value("a1", c.a1);
  c.a2 = j.value("a2", c.a2);
  c.A1 = j.value("A1", c.A1);
  c.A2 = j.value("A2", c.A2);
  c.phi0 = j.value("phi0", c.phi0);
  if (j.contains("phi1") && std::abs(j["phi1"].get<double>() - c.phi1()) > 1e-9)
    throw std::invalid_argument("geometry: phi1 inconsistent with A1 cos(phi1) = a1 cos(phi0)");
  return make_domain(c, R);
}

inline json mode_json(const EllipseMode& m) {
  return {{"parity", specfun::to_string(m.parity)}, {"m", m.m}, {"n", m.n}, {"k", m.k}, {"q", m.q}, {"a", m.a}, {"xi0", m.xi0}};
}

inline json modes_document(double a1, double a2, const std::vector<EllipseMode>& modes) {
  json arr = json::array();
  for (const auto& m : modes) arr.push_back(mode_json(m));
  return {{"format", kFormat}, {"a1", a1}, {"a2", a2}, {"modes", arr}};
}

inline json quasimode_json(const QuasimodeReport& r) {
  json j = mode_json(r.mode);
  j["cutoff"] = {{"x0", r.cutoff.x0}, {"x1", r.cutoff.x1}};
  j["eps_raw"] = r.eps_raw;
  j["norm_check"] = r.norm_check;
  j["eps"] = r.eps;
  j["margin"] = r.margin;
  j["support_ok"] = r.support_ok;
  return j;
}

inline json quasimode_document(const DomainSpec& d, const std::vector<QuasimodeReport>& reports, const MultiplicityReport* mult = nullptr) {
  json arr = json::array();
  for (const auto& r : reports) arr.push_back(quasimode_json(r));
  json doc = {{"format", kFormat}, {"geometry", geometry_json(d)}, {"modes", arr}};
  if (mult) doc["multiplicity"] = {{"m", mult->m}, {"members", mult->members}, {"overlap", mult->overlap}, {"bound", mult->bound}, {"violations", mult->violations}};
  return doc;
}

inline json boxcount_document(const DomainSpec& d, const TrajectorySet& ts, const BoxSpec& box) {
  json b = {{"eps1", box.eps1}, {"eps0", box.eps0}, {"k_minus", box.k_minus}, {"k_plus", box.k_plus}};
  const auto ids = box_track_ids(ts, box);
  json doc = {{"format", kFormat},
              {"geometry", geometry_json(d)},
              {"box", b},
              {"count", static_cast<int>(ids.size())},
              {"track_ids", ids},
              {"n_tracks", ts.tracks.size()},
              {"step", ts.step},
              {"k_grid_size", ts.k_grid.size()},
              {"missing", ts.missing}};
  if (!ts.k_grid.empty()) doc["k_range"] = {ts.k_grid.front(), ts.k_grid.back()};
  return doc;
}

inline json theorem1_document(const DomainSpec& d, const EllipseMode& mode, const Theorem1Report& r) {
  return {{"format", kFormat}, {"geometry", geometry_json(d)}, {"mode", mode_json(mode)}, {"applicable", r.applicable},
          {"k", r.k},          {"alpha", r.alpha},             {"mu_min", r.mu_min},       {"mu_min_coarse", r.mu_min_coarse},
          {"eps", r.eps},      {"bound", r.bound},             {"budget", r.budget},       {"h", r.h},
          {"pass", r.pass}};
}

inline void write_json(const std::string& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << j.dump(2) << '\n';
}

template <typename Fn>
void write_text(const std::string& path, Fn&& fn) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  fn(os);
}

}  // namespace htlab::io
