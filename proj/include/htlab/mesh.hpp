#pragma once

// Triangular meshes of Omega_tr: constrained Delaunay triangulation by
// Bowyer-Watson insertion, Ruppert refinement (minimum angle and size
// function), boundary tags, quality report, and the HTMESH ASCII format.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <functional>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "htlab/geometry.hpp"

namespace htlab {

enum class BoundaryTag : int { GammaD = 1, GammaTr = 2 };

inline const char* to_string(BoundaryTag t) { return t == BoundaryTag::GammaD ? "GammaD" : "GammaTr"; }

struct BoundaryEdge {
  int a = 0, b = 0;  // oriented with Omega_tr on the left
  BoundaryTag tag = BoundaryTag::GammaD;
};

struct Mesh {
  std::vector<Vec2> nodes;
  std::vector<std::array<int, 3>> triangles;  // counterclockwise
  std::vector<BoundaryEdge> boundary_edges;
  double h_max = 0;

  double triangle_area(std::size_t t) const {
    const auto& v = triangles[t];
    return 0.5 * cross(nodes[v[1]] - nodes[v[0]], nodes[v[2]] - nodes[v[0]]);
  }
  double area() const {
    double s = 0;
    for (std::size_t t = 0; t < triangles.size(); ++t) s += triangle_area(t);
    return s;
  }
  void update_h_max() {
    h_max = 0;
    for (const auto& v : triangles)
      for (int i = 0; i < 3; ++i) h_max = std::max(h_max, dist(nodes[v[i]], nodes[v[(i + 1) % 3]]));
  }
  /// Nodes of the edges tagged `tag`, each listed once, in edge order.
  std::vector<int> boundary_nodes(BoundaryTag tag) const {
    std::vector<int> out;
    std::vector<char> seen(nodes.size(), 0);
    for (const auto& e : boundary_edges) {
      if (e.tag != tag) continue;
      for (int v : {e.a, e.b})
        if (!seen[v]) {
          seen[v] = 1;
          out.push_back(v);
        }
    }
    return out;
  }
};

/// Meshwidth h = (2 pi / 30) k^{-3/2}.
inline double meshwidth_rule(double k) {
  if (!(k > 0)) throw std::invalid_argument("meshwidth_rule: k must be positive");
  return (2 * std::numbers::pi / 30) * std::pow(k, -1.5);
}

using SizingFunction = std::function<double(Vec2)>;

struct MeshOptions {
  double min_angle_deg = 20.0;
  std::size_t max_nodes = 4'000'000;
  // Number of uniformly spaced nodes on the truncation circle; 0 picks it from
  // the sizing function.  Circle edges are never split.
  int truncation_nodes = 0;
  // Mesh the inside of the obstacle curve instead of Omega_tr (used for
  // closed reference shapes such as the ellipse).
  bool obstacle_interior = false;
};

class MeshError : public std::runtime_error {
 public:
  MeshError(const std::string& what, Vec2 where)
      : std::runtime_error(what + " near (" + std::to_string(where.x) + ", " + std::to_string(where.y) + ")"),
        where_(where) {}
  Vec2 where() const { return where_; }

 private:
  Vec2 where_;
};

namespace detail {

inline double orient(Vec2 a, Vec2 b, Vec2 c) { return cross(b - a, c - a); }

// > 0 iff d lies inside the circumcircle of the counterclockwise triangle abc.
inline double incircle(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  const double adx = a.x - d.x, ady = a.y - d.y;
  const double bdx = b.x - d.x, bdy = b.y - d.y;
  const double cdx = c.x - d.x, cdy = c.y - d.y;
  const double ad = adx * adx + ady * ady, bd = bdx * bdx + bdy * bdy, cd = cdx * cdx + cdy * cdy;
  return adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx);
}

inline Vec2 circumcenter(Vec2 a, Vec2 b, Vec2 c) {
  const Vec2 ba = b - a, ca = c - a;
  const double d = 2 * cross(ba, ca);
  const double b2 = dot(ba, ba), c2 = dot(ca, ca);
  return {a.x + (ca.y * b2 - ba.y * c2) / d, a.y + (ba.x * c2 - ca.x * b2) / d};
}

inline std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

enum Region : std::uint8_t { kOutside = 0, kDomain = 1, kObstacle = 2 };

// A constrained edge and the curve piece it approximates.  seg < 0 marks a
// protected (never split) truncation-circle edge.
struct SegInfo {
  int seg = -1;
  double ta = 0, tb = 0;
};

class Triangulator {
 public:
  struct Tri {
    std::array<int, 3> v{};
    std::array<int, 3> n{-1, -1, -1};  // n[i] is across edge (v[i+1], v[i+2])
    std::uint8_t con = 0;              // bit i: edge i constrained
    std::uint8_t region = kOutside;
    bool alive = false;
    std::uint32_t stamp = 0;
  };

  std::vector<Vec2> pts;
  std::vector<Tri> tris;
  std::vector<int> vtri;  // some live triangle incident to each vertex
  std::unordered_map<std::uint64_t, SegInfo> segs;
  const std::vector<Segment>* curves = nullptr;
  int hint = 0;

  explicit Triangulator(double extent) {
    const double s = 20 * extent;
    pts = {{-s, -s}, {s, -s}, {0, s}};
    vtri = {0, 0, 0};
    Tri t;
    t.v = {0, 1, 2};
    t.alive = true;
    tris.push_back(t);
  }

  bool is_super(int v) const { return v < 3; }

  int new_tri() {
    if (!free_.empty()) {
      const int t = free_.back();
      free_.pop_back();
      return t;
    }
    tris.emplace_back();
    return static_cast<int>(tris.size()) - 1;
  }

  bool constrained(int t, int i) const { return (tris[t].con >> i) & 1; }

  int edge_index(int t, int a, int b) const {
    const auto& v = tris[t].v;
    for (int i = 0; i < 3; ++i)
      if ((v[(i + 1) % 3] == a && v[(i + 2) % 3] == b) || (v[(i + 1) % 3] == b && v[(i + 2) % 3] == a)) return i;
    return -1;
  }

  // Triangle containing p (visibility walk).
  int locate(Vec2 p, int start) const {
    int t = (start >= 0 && start < static_cast<int>(tris.size()) && tris[start].alive) ? start : hint;
    if (!tris[t].alive) {
      for (t = 0; !tris[t].alive; ++t) {
      }
    }
    int rot = 0;
    for (std::size_t steps = 0; steps < 4 * tris.size() + 16; ++steps) {
      const auto& tr = tris[t];
      bool moved = false;
      for (int j = 0; j < 3; ++j) {
        const int i = (j + rot) % 3;
        const Vec2 a = pts[tr.v[(i + 1) % 3]], b = pts[tr.v[(i + 2) % 3]];
        if (orient(a, b, p) < 0 && tr.n[i] >= 0) {
          t = tr.n[i];
          moved = true;
          break;
        }
      }
      if (!moved) return t;
      rot = (rot + 1) % 3;
    }
    throw std::logic_error("mesh: point location did not terminate");
  }

  struct Blocked {
    int tri = -1, edge = -1;  // constrained edge crossed by the straight walk
  };

  // Straight walk from the centroid of `from` to p; stops at the first
  // constrained edge crossed.  Returns the containing triangle or the block.
  int walk_line(int from, Vec2 p, Blocked& blk) const {
    blk = {};
    const auto& t0 = tris[from].v;
    const Vec2 o = (1.0 / 3.0) * (pts[t0[0]] + pts[t0[1]] + pts[t0[2]]);
    int t = from, prev = -1;
    for (std::size_t steps = 0; steps < 4 * tris.size() + 16; ++steps) {
      const auto& tr = tris[t];
      int exit = -1;
      for (int i = 0; i < 3 && exit < 0; ++i) {
        const Vec2 a = pts[tr.v[(i + 1) % 3]], b = pts[tr.v[(i + 2) % 3]];
        if (tr.n[i] == prev && prev >= 0) continue;
        if (orient(a, b, p) >= 0) continue;
        const double oa = orient(o, p, a), ob = orient(o, p, b);
        if ((oa >= 0 && ob <= 0) || (oa <= 0 && ob >= 0)) exit = i;
      }
      if (exit < 0) {
        for (int i = 0; i < 3 && exit < 0; ++i) {
          const Vec2 a = pts[tr.v[(i + 1) % 3]], b = pts[tr.v[(i + 2) % 3]];
          if (orient(a, b, p) < 0) exit = i;
        }
      }
      if (exit < 0) return t;
      if (constrained(t, exit) || tr.n[exit] < 0) {
        blk = {t, exit};
        return -1;
      }
      prev = t;
      t = tr.n[exit];
    }
    throw std::logic_error("mesh: line walk did not terminate");
  }

  struct Cavity {
    std::vector<int> tris;
    struct Edge {
      int a, b, outside;
      bool con;
      std::uint8_t region;
    };
    std::vector<Edge> boundary;
    bool ok = false;
  };

  Cavity cavity(Vec2 p, int t0) {
    Cavity cav;
    ++mark_gen_;
    if (mark_.size() < tris.size()) mark_.resize(tris.size(), 0);
    auto in = [&](int t) { return mark_[t] == mark_gen_; };
    std::vector<int> stack{t0};
    mark_[t0] = mark_gen_;
    cav.tris.push_back(t0);
    while (!stack.empty()) {
      const int t = stack.back();
      stack.pop_back();
      for (int i = 0; i < 3; ++i) {
        const int nb = tris[t].n[i];
        if (nb < 0 || in(nb) || constrained(t, i)) continue;
        const auto& v = tris[nb].v;
        if (incircle(pts[v[0]], pts[v[1]], pts[v[2]], p) > 0) {
          mark_[nb] = mark_gen_;
          stack.push_back(nb);
          cav.tris.push_back(nb);
        }
      }
    }
    // Shrink until every boundary edge sees p strictly on its left.
    for (int pass = 0; pass < 64; ++pass) {
      cav.boundary.clear();
      int drop = -1;
      for (int t : cav.tris) {
        if (!in(t)) continue;
        for (int i = 0; i < 3; ++i) {
          const int nb = tris[t].n[i];
          if (nb >= 0 && in(nb)) continue;
          const int a = tris[t].v[(i + 1) % 3], b = tris[t].v[(i + 2) % 3];
          const Vec2 pa = pts[a], pb = pts[b];
          const double scale = dot(pb - pa, pb - pa);
          if (orient(pa, pb, p) <= 1e-13 * scale) {
            if (t == t0) return cav;  // p on an edge of its own triangle
            drop = t;
            break;
          }
          cav.boundary.push_back({a, b, nb, constrained(t, i), tris[t].region});
        }
        if (drop >= 0) break;
      }
      if (drop < 0) {
        std::vector<int> kept;
        for (int t : cav.tris)
          if (in(t)) kept.push_back(t);
        cav.tris = std::move(kept);
        cav.ok = true;
        return cav;
      }
      mark_[drop] = 0;
    }
    return cav;
  }

  int commit(Vec2 p, const Cavity& cav) {
    const int pv = static_cast<int>(pts.size());
    pts.push_back(p);
    vtri.push_back(-1);
    for (int t : cav.tris) {
      tris[t].alive = false;
      free_.push_back(t);
    }
    std::vector<int> made;
    made.reserve(cav.boundary.size());
    // Free slots are reused in LIFO order; collect first so neighbor links
    // below never point at a slot that is about to be recycled.
    for (std::size_t i = 0; i < cav.boundary.size(); ++i) made.push_back(new_tri());
    for (std::size_t i = 0; i < cav.boundary.size(); ++i) {
      const auto& e = cav.boundary[i];
      Tri& t = tris[made[i]];
      t.v = {e.a, e.b, pv};
      t.n = {-1, -1, e.outside};
      t.con = e.con ? 4 : 0;
      t.region = e.region;
      t.alive = true;
      ++t.stamp;
      if (e.outside >= 0) {
        Tri& o = tris[e.outside];
        const int j = edge_index(e.outside, e.a, e.b);
        o.n[j] = made[i];
      }
      vtri[e.a] = vtri[e.b] = made[i];
    }
    vtri[pv] = made.empty() ? -1 : made[0];
    // Fan links: edge 0 is (b, p), edge 1 is (p, a).
    std::unordered_map<int, int> by_a;
    by_a.reserve(made.size() * 2);
    for (int t : made) by_a[tris[t].v[0]] = t;
    for (int t : made) {
      const int b = tris[t].v[1];
      const auto it = by_a.find(b);
      if (it != by_a.end()) {
        tris[t].n[0] = it->second;
        tris[it->second].n[1] = t;
      }
    }
    hint = made.empty() ? hint : made[0];
    last_made_ = std::move(made);
    return pv;
  }

  const std::vector<int>& last_made() const { return last_made_; }

  // Inserts p (plain Delaunay step inside current constraints).  Returns the
  // vertex index or -1 when the cavity is degenerate.
  int insert(Vec2 p, int start) {
    const int t = locate(p, start);
    auto cav = cavity(p, t);
    if (!cav.ok) {
      // p on an edge of t: retry from the neighbor across it when possible
      for (int i = 0; i < 3; ++i) {
        const int nb = tris[t].n[i];
        if (nb < 0 || constrained(t, i)) continue;
        cav = cavity(p, nb);
        if (cav.ok) break;
      }
      if (!cav.ok) return -1;
    }
    return commit(p, cav);
  }

  // Triangle having directed edge a->b (a, b consecutive counterclockwise),
  // or -1.
  int find_edge(int a, int b) const {
    const int start = vtri[a];
    if (start < 0) return -1;
    int t = start;
    for (int guard = 0; guard < 4096; ++guard) {
      const auto& v = tris[t].v;
      int ia = 0;
      while (v[ia] != a) ++ia;
      if (v[(ia + 1) % 3] == b) return t;
      if (v[(ia + 2) % 3] == b) return tris[t].n[(ia + 1) % 3];
      // rotate clockwise around a: across edge (a, v[ia+1]) which is edge ia+2
      const int nb = tris[t].n[(ia + 2) % 3];
      if (nb < 0 || nb == start) break;
      t = nb;
    }
    return -1;
  }

  bool has_edge(int a, int b) const { return find_edge(a, b) >= 0 || find_edge(b, a) >= 0; }

  void set_constraint(int a, int b, bool on) {
    for (int t : {find_edge(a, b), find_edge(b, a)}) {
      if (t < 0) continue;
      const int i = edge_index(t, a, b);
      if (on)
        tris[t].con |= static_cast<std::uint8_t>(1 << i);
      else
        tris[t].con &= static_cast<std::uint8_t>(~(1 << i));
    }
  }

  Vec2 curve_eval(const SegInfo& s, double t) const { return (*curves)[s.seg].eval(t); }

  // Makes (a,b) a constrained edge, inserting curve points until it is present.
  void recover(int a, int b, SegInfo info, int depth = 0) {
    if (has_edge(a, b)) {
      set_constraint(a, b, true);
      segs[edge_key(a, b)] = info;
      return;
    }
    if (info.seg < 0 || depth > 40) throw MeshError("mesh: cannot recover boundary edge", pts[a]);
    const double tm = 0.5 * (info.ta + info.tb);
    const int m = insert(curve_eval(info, tm), vtri[a]);
    if (m < 0) throw MeshError("mesh: degenerate insertion while recovering boundary", pts[a]);
    recover(a, m, {info.seg, info.ta, tm}, depth + 1);
    recover(m, b, {info.seg, tm, info.tb}, depth + 1);
  }

  // Splits constrained edge (a,b) at its curve midpoint.  Returns the new vertex.
  int split(int a, int b) {
    const auto it = segs.find(edge_key(a, b));
    const SegInfo info = it->second;
    segs.erase(it);
    set_constraint(a, b, false);
    // keep the (a,b) orientation consistent with the curve parameters
    const Vec2 pa = curve_eval(info, info.ta);
    if (dist(pa, pts[a]) > dist(pa, pts[b])) std::swap(a, b);
    const double tm = 0.5 * (info.ta + info.tb);
    const int t = find_edge(a, b) >= 0 ? find_edge(a, b) : find_edge(b, a);
    const int m = insert(curve_eval(info, tm), t);
    if (m < 0) throw MeshError("mesh: degenerate segment split", pts[a]);
    recover(a, m, {info.seg, info.ta, tm});
    recover(m, b, {info.seg, tm, info.tb});
    return m;
  }

  std::vector<int> free_;
  std::vector<std::uint32_t> mark_;
  std::uint32_t mark_gen_ = 0;
  std::vector<int> last_made_;
};

// Points along a segment so that chord lengths follow spacing(x), at least
// min_pieces of them.  Returns parameters.
inline std::vector<double> sample_parameters(const Segment& s, const SizingFunction& spacing, int min_pieces) {
  const int n = 4000;
  std::vector<double> cum(n + 1, 0.0);
  for (int i = 0; i < n; ++i) {
    const double ta = s.t0 + (s.t1 - s.t0) * i / n, tb = s.t0 + (s.t1 - s.t0) * (i + 1) / n;
    const Vec2 pa = s.eval(ta), pb = s.eval(tb);
    cum[i + 1] = cum[i] + dist(pa, pb) / spacing(0.5 * (pa + pb));
  }
  const int pieces = std::max(min_pieces, static_cast<int>(std::ceil(cum[n] - 1e-9)));
  std::vector<double> out{s.t0};
  int j = 0;
  for (int k = 1; k < pieces; ++k) {
    const double target = cum[n] * k / pieces;
    while (cum[j + 1] < target) ++j;
    const double f = (target - cum[j]) / (cum[j + 1] - cum[j]);
    out.push_back(s.t0 + (s.t1 - s.t0) * (j + f) / n);
  }
  out.push_back(s.t1);
  return out;
}

// Replaces corners of a closed curve set by quadratic blends of the given
// length, returning a polyline curve set with pieces no longer than `step`.
inline BoundaryCurveSet fillet_polyline(const BoundaryCurveSet& set, double r, double step) {
  std::vector<Vec2> poly;
  for (const auto& s : set.segments) {
    const int n = std::max(8, static_cast<int>(std::ceil(s.length() / (0.25 * step))));
    for (int i = 0; i < n; ++i) poly.push_back(s.eval(s.t0 + (s.t1 - s.t0) * i / n));
  }
  // corner positions are the segment start points
  std::vector<Vec2> corners;
  for (const auto& s : set.segments) corners.push_back(s.start());
  std::vector<Vec2> out;
  std::vector<char> drop(poly.size(), 0);
  for (const auto& c : corners)
    for (std::size_t i = 0; i < poly.size(); ++i)
      if (dist(poly[i], c) < r) drop[i] = 1;
  const std::size_t np = poly.size();
  for (std::size_t i = 0; i < np; ++i) {
    if (drop[i]) continue;
    out.push_back(poly[i]);
    const std::size_t j = (i + 1) % np;
    if (!drop[j]) continue;
    // blend from poly[i] across the dropped run to the next kept point
    std::size_t k = j;
    while (drop[k % np]) k = (k + 1) % np;
    Vec2 corner = poly[j];
    for (const auto& c : corners)
      if (dist(c, poly[j]) < r) corner = c;
    const Vec2 p0 = poly[i], p2 = poly[k];
    const int m = std::max(4, static_cast<int>(std::ceil((dist(p0, corner) + dist(corner, p2)) / (0.5 * step))));
    for (int q = 1; q < m; ++q) {
      const double s = static_cast<double>(q) / m;
      out.push_back((1 - s) * (1 - s) * p0 + 2 * s * (1 - s) * corner + s * s * p2);
    }
  }
  BoundaryCurveSet res;
  res.closed = true;
  for (std::size_t i = 0; i < out.size(); ++i)
    res.segments.push_back(Segment::line(out[i], out[(i + 1) % out.size()], true, "fillet"));
  return res;
}

}  // namespace detail

/// Mesh of Omega_tr graded by `size` (target edge length as a function of
/// position).  Gamma_D is sampled at size/2, the truncation circle uniformly.
inline Mesh generate_mesh(const DomainSpec& dom, const SizingFunction& size, const MeshOptions& opt = {}) {
  using namespace detail;
  if (!(dom.R > 0)) throw std::invalid_argument("generate_mesh: truncation radius must be positive");
  const double pi = std::numbers::pi;
  auto half = [&](Vec2 p) {
    const double h = size(p);
    if (!(h > 0)) throw std::invalid_argument("generate_mesh: sizing function must be positive");
    return 0.5 * h;
  };

  BoundaryCurveSet obstacle = dom.obstacle;
  if (!obstacle.empty() && dom.has_cavity && dom.cavity.fillet > 0) {
    double hmin = 1e300;
    for (const auto& s : obstacle.segments)
      for (const auto& p : detail::sample_segment(s, 64)) hmin = std::min(hmin, half(p));
    obstacle = fillet_polyline(obstacle, dom.cavity.fillet, hmin);
  }

  Triangulator tr(dom.R + norm(dom.center));
  tr.curves = &obstacle.segments;

  // Boundary samples.
  int ncirc = opt.truncation_nodes;
  if (ncirc <= 0) {
    double hmin = 1e300;
    for (int i = 0; i < 720; ++i) {
      const double t = 2 * pi * i / 720;
      hmin = std::min(hmin, half(dom.center + dom.R * Vec2{std::cos(t), std::sin(t)}));
    }
    ncirc = static_cast<int>(std::ceil(2 * pi * dom.R / hmin));
    ncirc = std::max(16, (ncirc + 3) / 4 * 4);
  }
  struct BPoint {
    Vec2 p;
    int id = -1;
  };
  std::vector<BPoint> circ(ncirc);
  for (int i = 0; i < ncirc; ++i) {
    const double t = 2 * pi * i / ncirc;
    circ[i].p = dom.center + dom.R * Vec2{std::cos(t), std::sin(t)};
  }
  struct Piece {
    int seg;
    std::vector<double> t;
    std::vector<int> id;
  };
  std::vector<Piece> pieces;
  for (std::size_t s = 0; s < obstacle.segments.size(); ++s) {
    Piece pc{static_cast<int>(s), sample_parameters(obstacle.segments[s], half, obstacle.segments.size() > 8 ? 1 : 8), {}};
    pieces.push_back(std::move(pc));
  }

  // Insert all boundary points in sorted order (deterministic), sharing the
  // corner points between consecutive segments.
  std::vector<std::pair<Vec2, int*>> order;
  for (auto& c : circ) order.push_back({c.p, &c.id});
  std::vector<std::vector<int>> ids(pieces.size());
  for (std::size_t s = 0; s < pieces.size(); ++s) {
    ids[s].assign(pieces[s].t.size(), -1);
  }
  for (std::size_t s = 0; s < pieces.size(); ++s)
    for (std::size_t i = 0; i + 1 < pieces[s].t.size(); ++i)  // last point is the next segment's first
      order.push_back({obstacle.segments[s].eval(pieces[s].t[i]), &ids[s][i]});
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    return a.first.x < b.first.x || (a.first.x == b.first.x && a.first.y < b.first.y);
  });
  for (auto& [p, slot] : order) {
    *slot = tr.insert(p, tr.hint);
    if (*slot < 0) throw MeshError("mesh: duplicate or degenerate boundary point", p);
  }
  for (std::size_t s = 0; s < pieces.size(); ++s) ids[s].back() = ids[(s + 1) % pieces.size()][0];

  for (int i = 0; i < ncirc; ++i) {
    const int a = circ[i].id, b = circ[(i + 1) % ncirc].id;
    if (!tr.has_edge(a, b)) throw MeshError("mesh: truncation circle too coarse for its own sampling", circ[i].p);
    tr.set_constraint(a, b, true);
    tr.segs[edge_key(a, b)] = SegInfo{-1, 0, 0};
  }
  for (std::size_t s = 0; s < pieces.size(); ++s)
    for (std::size_t i = 0; i + 1 < pieces[s].t.size(); ++i)
      tr.recover(ids[s][i], ids[s][i + 1], SegInfo{static_cast<int>(s), pieces[s].t[i], pieces[s].t[i + 1]});

  // Region classification by flood fill across unconstrained edges.
  {
    std::vector<int> comp(tr.tris.size(), -1);
    int nc = 0;
    for (std::size_t t0 = 0; t0 < tr.tris.size(); ++t0) {
      if (!tr.tris[t0].alive || comp[t0] >= 0) continue;
      std::vector<int> members{static_cast<int>(t0)}, stack{static_cast<int>(t0)};
      comp[t0] = nc;
      bool touches_super = false;
      while (!stack.empty()) {
        const int t = stack.back();
        stack.pop_back();
        for (int v : tr.tris[t].v) touches_super |= tr.is_super(v);
        for (int i = 0; i < 3; ++i) {
          const int nb = tr.tris[t].n[i];
          if (nb < 0 || comp[nb] >= 0 || tr.constrained(t, i)) continue;
          comp[nb] = nc;
          stack.push_back(nb);
          members.push_back(nb);
        }
      }
      std::uint8_t region = kOutside;
      if (!touches_super) {
        int best = members[0];
        double best_area = -1;
        for (int t : members) {
          const auto& v = tr.tris[t].v;
          const double a = orient(tr.pts[v[0]], tr.pts[v[1]], tr.pts[v[2]]);
          if (a > best_area) {
            best_area = a;
            best = t;
          }
        }
        const auto& v = tr.tris[best].v;
        const Vec2 c = (1.0 / 3.0) * (tr.pts[v[0]] + tr.pts[v[1]] + tr.pts[v[2]]);
        DomainSpec probe = dom;
        probe.obstacle = obstacle;
        region = contains(probe, c) ? kDomain : kObstacle;
      }
      for (int t : members) tr.tris[t].region = region;
      ++nc;
    }
  }

  // Ruppert refinement.
  const std::uint8_t target = opt.obstacle_interior ? kObstacle : kDomain;
  const double min_angle = opt.min_angle_deg * pi / 180;
  const double ratio_bound = 1.0 / (2.0 * std::sin(min_angle));
  auto encroaches = [&](Vec2 p, int a, int b) { return dot(tr.pts[a] - p, tr.pts[b] - p) < 0; };
  auto is_protected = [&](int a, int b) {
    const auto it = tr.segs.find(edge_key(a, b));
    return it != tr.segs.end() && it->second.seg < 0;
  };

  std::deque<std::pair<int, int>> seg_queue;
  auto check_segment = [&](int t, int i) {
    // edge i of t: apex v[i] encroaches?
    const auto& tt = tr.tris[t];
    const int a = tt.v[(i + 1) % 3], b = tt.v[(i + 2) % 3];
    if (is_protected(a, b)) return;
    const int apex = tt.v[i];
    if (tr.is_super(apex)) return;
    if (encroaches(tr.pts[apex], a, b)) seg_queue.push_back({a, b});
  };
  for (std::size_t t = 0; t < tr.tris.size(); ++t) {
    if (!tr.tris[t].alive || tr.tris[t].region != target) continue;
    for (int i = 0; i < 3; ++i)
      if (tr.constrained(static_cast<int>(t), i)) check_segment(static_cast<int>(t), i);
  }

  auto bad = [&](int t, double& r_out) {
    const auto& v = tr.tris[t].v;
    const Vec2 a = tr.pts[v[0]], b = tr.pts[v[1]], c = tr.pts[v[2]];
    const Vec2 cc = circumcenter(a, b, c);
    const double r = dist(cc, a);
    const double lmin = std::min({dist(a, b), dist(b, c), dist(c, a)});
    r_out = r;
    if (r / lmin > ratio_bound * (1 + 1e-12)) return true;
    const Vec2 g = (1.0 / 3.0) * (a + b + c);
    return r > size(g) / std::sqrt(3.0);
  };

  std::deque<std::pair<int, std::uint32_t>> tri_queue;
  auto enqueue_new = [&](const std::vector<int>& made) {
    for (int t : made) {
      if (tr.tris[t].region != target) continue;
      tri_queue.push_back({t, tr.tris[t].stamp});
      for (int i = 0; i < 3; ++i)
        if (tr.constrained(t, i)) check_segment(t, i);
    }
  };
  for (std::size_t t = 0; t < tr.tris.size(); ++t)
    if (tr.tris[t].alive && tr.tris[t].region == target) tri_queue.push_back({static_cast<int>(t), tr.tris[t].stamp});

  // After a split or insertion, re-scan triangles created by the last commit(s).
  auto after_insert = [&](std::size_t tri_count_before) {
    (void)tri_count_before;
    enqueue_new(tr.last_made());
  };

  auto split_segment = [&](int a, int b) {
    const int m = tr.split(a, b);
    // every triangle around m and the recovered pieces is new; scan the star
    std::vector<int> star;
    const int start = tr.vtri[m];
    int t = start;
    for (int guard = 0; guard < 256; ++guard) {
      star.push_back(t);
      const auto& v = tr.tris[t].v;
      int im = 0;
      while (v[im] != m) ++im;
      t = tr.tris[t].n[(im + 2) % 3];
      if (t < 0 || t == start) break;
    }
    enqueue_new(star);
    // also re-check neighbors of the star (their edges may now be encroached)
    std::vector<int> ring;
    for (int s : star)
      for (int i = 0; i < 3; ++i)
        if (tr.tris[s].n[i] >= 0) ring.push_back(tr.tris[s].n[i]);
    enqueue_new(ring);
  };

  auto inside_circle_polygon = [&](Vec2 p) {
    const Vec2 d = p - dom.center;
    double th = std::atan2(d.y, d.x);
    if (th < 0) th += 2 * pi;
    const int i = static_cast<int>(th / (2 * pi) * ncirc) % ncirc;
    const Vec2 a = circ[i].p, b = circ[(i + 1) % ncirc].p;
    return orient(a, b, p) > 1e-12 * dom.R * dom.R;
  };

  // Tries to insert p for bad triangle t.  Returns 1 inserted, 0 handled by a
  // segment split, -1 not insertable.
  auto try_insert = [&](int t, Vec2 p) -> int {
    if (!inside_circle_polygon(p)) return -1;
    Triangulator::Blocked blk;
    const int loc = tr.walk_line(t, p, blk);
    if (loc < 0) {
      const auto& bt = tr.tris[blk.tri];
      const int a = bt.v[(blk.edge + 1) % 3], b = bt.v[(blk.edge + 2) % 3];
      if (is_protected(a, b) || !tr.constrained(blk.tri, blk.edge)) return -1;
      split_segment(a, b);
      return 0;
    }
    if (tr.tris[loc].region != target) return -1;
    auto cav = tr.cavity(p, loc);
    if (!cav.ok) return -1;
    bool any_protected = false;
    std::vector<std::pair<int, int>> hit;
    for (const auto& e : cav.boundary)
      if (e.con && encroaches(p, e.a, e.b)) {
        if (is_protected(e.a, e.b))
          any_protected = true;
        else
          hit.push_back({e.a, e.b});
      }
    if (!hit.empty()) {
      for (auto [a, b] : hit)
        if (tr.segs.count(edge_key(a, b))) split_segment(a, b);
      return 0;
    }
    if (any_protected) return -1;
    tr.commit(p, cav);
    after_insert(0);
    return 1;
  };

  std::size_t skipped = 0;
  while (!seg_queue.empty() || !tri_queue.empty()) {
    if (tr.pts.size() > opt.max_nodes) {
      Vec2 where{};
      if (!tri_queue.empty() && tr.tris[tri_queue.front().first].alive) {
        const auto& v = tr.tris[tri_queue.front().first].v;
        where = (1.0 / 3.0) * (tr.pts[v[0]] + tr.pts[v[1]] + tr.pts[v[2]]);
      }
      throw MeshError("mesh: refinement exceeded " + std::to_string(opt.max_nodes) + " nodes", where);
    }
    if (!seg_queue.empty()) {
      const auto [a, b] = seg_queue.front();
      seg_queue.pop_front();
      const auto it = tr.segs.find(edge_key(a, b));
      if (it == tr.segs.end() || it->second.seg < 0) continue;
      // still encroached by an apex?
      bool enc = false;
      for (int t : {tr.find_edge(a, b), tr.find_edge(b, a)}) {
        if (t < 0) continue;
        const int i = tr.edge_index(t, a, b);
        const int apex = tr.tris[t].v[i];
        if (!tr.is_super(apex) && tr.tris[t].region == target && encroaches(tr.pts[apex], a, b)) enc = true;
      }
      if (enc) split_segment(a, b);
      continue;
    }
    const auto [t, stamp] = tri_queue.front();
    tri_queue.pop_front();
    if (!tr.tris[t].alive || tr.tris[t].stamp != stamp || tr.tris[t].region != target) continue;
    double r = 0;
    if (!bad(t, r)) continue;
    const auto& v = tr.tris[t].v;
    const Vec2 a = tr.pts[v[0]], b = tr.pts[v[1]], c = tr.pts[v[2]];
    int res = try_insert(t, circumcenter(a, b, c));
    if (res < 0) {
      // off-center on the bisector of the shortest edge, then the centroid
      Vec2 p0 = a, p1 = b;
      if (dist(b, c) < dist(p0, p1)) p0 = b, p1 = c;
      if (dist(c, a) < dist(p0, p1)) p0 = c, p1 = a;
      const Vec2 mid = 0.5 * (p0 + p1);
      const Vec2 cc = circumcenter(a, b, c);
      const double l = dist(p0, p1);
      const double hgt = 0.5 * l * ratio_bound * 1.0;  // apex height for an acceptable triangle
      Vec2 dir = cc - mid;
      const double dn = norm(dir);
      if (dn > 0) {
        dir = (1.0 / dn) * dir;
        res = try_insert(t, mid + std::min(dn, hgt) * dir);
      }
      if (res < 0) res = try_insert(t, (1.0 / 3.0) * (a + b + c));
    }
    if (res == 0 && tr.tris[t].alive && tr.tris[t].stamp == stamp) tri_queue.push_back({t, stamp});
    if (res < 0) ++skipped;
  }

  // Extract the domain part.
  Mesh mesh;
  std::vector<int> remap(tr.pts.size(), -1);
  for (std::size_t t = 0; t < tr.tris.size(); ++t) {
    const auto& tt = tr.tris[t];
    if (!tt.alive || tt.region != target) continue;
    std::array<int, 3> tri{};
    for (int i = 0; i < 3; ++i) {
      int& r2 = remap[tt.v[i]];
      if (r2 < 0) {
        r2 = static_cast<int>(mesh.nodes.size());
        mesh.nodes.push_back(tr.pts[tt.v[i]]);
      }
      tri[i] = r2;
    }
    mesh.triangles.push_back(tri);
    for (int i = 0; i < 3; ++i) {
      const int nb = tt.n[i];
      if (nb >= 0 && tr.tris[nb].region == target) continue;
      const int a = tt.v[(i + 1) % 3], b = tt.v[(i + 2) % 3];
      const auto it = tr.segs.find(edge_key(a, b));
      const BoundaryTag tag = (it != tr.segs.end() && it->second.seg < 0) ? BoundaryTag::GammaTr : BoundaryTag::GammaD;
      mesh.boundary_edges.push_back({a, b, tag});  // remapped below
    }
  }
  for (auto& e : mesh.boundary_edges) {
    e.a = remap[e.a];
    e.b = remap[e.b];
  }
  std::sort(mesh.boundary_edges.begin(), mesh.boundary_edges.end(), [](const BoundaryEdge& x, const BoundaryEdge& y) {
    return std::tie(x.tag, x.a, x.b) < std::tie(y.tag, y.a, y.b);
  });
  mesh.update_h_max();
  (void)skipped;
  return mesh;
}

/// Uniform target size.
inline Mesh generate_mesh(const DomainSpec& dom, double h_target, const MeshOptions& opt = {}) {
  if (!(h_target > 0)) throw std::invalid_argument("generate_mesh: h_target must be positive");
  return generate_mesh(dom, [h_target](Vec2) { return h_target; }, opt);
}

struct QualityReport {
  double min_angle_deg = 180;
  double max_aspect = 0;  // longest edge / shortest altitude
  double h_max = 0;
  long euler = 0;         // V - E + F
  int boundary_loops = 0;
  std::vector<std::size_t> degenerate;  // triangles with nonpositive signed area
  std::vector<std::string> issues;
  bool ok() const { return issues.empty(); }
};

inline QualityReport validate_mesh(const Mesh& m) {
  QualityReport q;
  std::unordered_map<std::uint64_t, int> edges;
  edges.reserve(m.triangles.size() * 2);
  for (std::size_t t = 0; t < m.triangles.size(); ++t) {
    const auto& v = m.triangles[t];
    const Vec2 a = m.nodes[v[0]], b = m.nodes[v[1]], c = m.nodes[v[2]];
    const double area2 = cross(b - a, c - a);
    if (!(area2 > 0)) {
      q.degenerate.push_back(t);
      continue;
    }
    const double la = dist(b, c), lb = dist(c, a), lc = dist(a, b);
    const double lmax = std::max({la, lb, lc});
    q.h_max = std::max(q.h_max, lmax);
    q.max_aspect = std::max(q.max_aspect, lmax * lmax / area2);
    auto angle = [](double opp, double s1, double s2) {
      return std::acos(std::clamp((s1 * s1 + s2 * s2 - opp * opp) / (2 * s1 * s2), -1.0, 1.0));
    };
    const double amin = std::min({angle(la, lb, lc), angle(lb, lc, la), angle(lc, la, lb)});
    q.min_angle_deg = std::min(q.min_angle_deg, amin * 180 / std::numbers::pi);
    for (int i = 0; i < 3; ++i) ++edges[detail::edge_key(v[i], v[(i + 1) % 3])];
  }
  for (std::size_t t : q.degenerate) q.issues.push_back("triangle " + std::to_string(t) + " has nonpositive area");
  for (const auto& [k, c] : edges)
    if (c > 2) q.issues.push_back("non-manifold edge shared by " + std::to_string(c) + " triangles");
  std::vector<char> used(m.nodes.size(), 0);
  for (const auto& v : m.triangles)
    for (int i : v) used[i] = 1;
  long nv = 0;
  for (char u : used) nv += u;
  q.euler = nv - static_cast<long>(edges.size()) + static_cast<long>(m.triangles.size());
  // boundary loops from the tagged edges
  std::unordered_map<int, int> next;
  for (const auto& e : m.boundary_edges) next[e.a] = e.b;
  std::unordered_map<int, char> seen;
  for (const auto& e : m.boundary_edges) {
    if (seen[e.a]) continue;
    int v = e.a;
    int steps = 0;
    while (!seen[v] && steps <= static_cast<int>(m.boundary_edges.size())) {
      seen[v] = 1;
      const auto it = next.find(v);
      if (it == next.end()) {
        q.issues.push_back("open boundary chain at node " + std::to_string(v));
        break;
      }
      v = it->second;
      ++steps;
    }
    ++q.boundary_loops;
  }
  return q;
}

// ---------------------------------------------------------------------------
// HTMESH 1 format

inline void write_mesh(std::ostream& os, const Mesh& m) {
  os << "HTMESH 1\n";
  os << "NODES " << m.nodes.size() << "\n";
  os.precision(17);
  for (const auto& p : m.nodes) os << p.x << " " << p.y << "\n";
  os << "TRIS " << m.triangles.size() << "\n";
  for (const auto& t : m.triangles) os << t[0] << " " << t[1] << " " << t[2] << "\n";
  os << "BEDGES " << m.boundary_edges.size() << "\n";
  for (const auto& e : m.boundary_edges) os << e.a << " " << e.b << " " << to_string(e.tag) << "\n";
}

inline Mesh read_mesh(std::istream& is) {
  auto fail = [](const std::string& msg) { throw std::runtime_error("HTMESH: " + msg); };
  std::string word;
  int version = 0;
  if (!(is >> word >> version) || word != "HTMESH" || version != 1) fail("missing 'HTMESH 1' header");
  Mesh m;
  std::size_t n = 0;
  if (!(is >> word >> n) || word != "NODES") fail("expected NODES block");
  m.nodes.resize(n);
  for (auto& p : m.nodes)
    if (!(is >> p.x >> p.y)) fail("truncated NODES block");
  if (!(is >> word >> n) || word != "TRIS") fail("expected TRIS block");
  m.triangles.resize(n);
  for (auto& t : m.triangles) {
    if (!(is >> t[0] >> t[1] >> t[2])) fail("truncated TRIS block");
    for (int i : t)
      if (i < 0 || static_cast<std::size_t>(i) >= m.nodes.size()) fail("triangle index out of range");
  }
  if (!(is >> word >> n) || word != "BEDGES") fail("expected BEDGES block");
  m.boundary_edges.resize(n);
  for (auto& e : m.boundary_edges) {
    std::string tag;
    if (!(is >> e.a >> e.b >> tag)) fail("truncated BEDGES block");
    if (e.a < 0 || e.b < 0 || static_cast<std::size_t>(std::max(e.a, e.b)) >= m.nodes.size())
      fail("boundary edge index out of range");
    if (tag == "GammaD")
      e.tag = BoundaryTag::GammaD;
    else if (tag == "GammaTr")
      e.tag = BoundaryTag::GammaTr;
    else
      fail("unknown boundary tag '" + tag + "'");
  }
  m.update_h_max();
  return m;
}

inline void save_mesh(const std::string& path, const Mesh& m) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  write_mesh(os, m);
}

inline Mesh load_mesh(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  return read_mesh(is);
}

}  // namespace htlab
