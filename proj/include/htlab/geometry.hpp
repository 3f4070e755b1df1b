#pragma once

// Parametric boundary curves: the two-arc obstacle cavities, the truncation
// circle, and point membership in the truncated domain Omega_tr.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace htlab {

struct Vec2 {
  double x = 0, y = 0;

  Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
  Vec2& operator-=(Vec2 o) { x -= o.x; y -= o.y; return *this; }
  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator-(Vec2 a) { return {-a.x, -a.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend Vec2 operator*(Vec2 a, double s) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2 a, Vec2 b) { return a.x == b.x && a.y == b.y; }
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline double dist(Vec2 a, Vec2 b) { return norm(a - b); }
inline Vec2 perp_left(Vec2 a) { return {-a.y, a.x}; }

inline double dist_to_segment(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 d = b - a;
  const double l2 = dot(d, d);
  double s = l2 > 0 ? dot(p - a, d) / l2 : 0.0;
  s = std::clamp(s, 0.0, 1.0);
  return dist(p, a + s * d);
}

inline constexpr double kBoundaryTol = 1e-10;
inline constexpr double kClosureTol = 1e-12;

/// One parametric piece of a boundary: an elliptic arc
/// center + (a cos t, b sin t) for t running from t0 to t1 (either direction),
/// or a straight line p0 + t (p1 - p0), t from 0 to 1.
struct Segment {
  enum class Kind { ellipse_arc, line };
  Kind kind = Kind::line;
  Vec2 center, p0, p1;
  double a = 0, b = 0, t0 = 0, t1 = 1;
  // The unit normal pointing out of Omega_tr is the left normal of the
  // traversal direction when true, the right normal otherwise.
  bool normal_left = true;
  std::string name;

  static Segment arc(Vec2 c, double a, double b, double t0, double t1, bool normal_left,
                     std::string name = {}) {
    Segment s;
    s.kind = Kind::ellipse_arc;
    s.center = c;
    s.a = a;
    s.b = b;
    s.t0 = t0;
    s.t1 = t1;
    s.normal_left = normal_left;
    s.name = std::move(name);
    return s;
  }
  static Segment line(Vec2 p0, Vec2 p1, bool normal_left, std::string name = {}) {
    Segment s;
    s.kind = Kind::line;
    s.p0 = p0;
    s.p1 = p1;
    s.t0 = 0;
    s.t1 = 1;
    s.normal_left = normal_left;
    s.name = std::move(name);
    return s;
  }

  double tmin() const { return std::min(t0, t1); }
  double tmax() const { return std::max(t0, t1); }

  Vec2 eval(double t) const {
    if (kind == Kind::line) return p0 + t * (p1 - p0);
    return {center.x + a * std::cos(t), center.y + b * std::sin(t)};
  }
  // d/dt of eval (parameter direction, not traversal direction).
  Vec2 deriv(double t) const {
    if (kind == Kind::line) return p1 - p0;
    return {-a * std::sin(t), b * std::cos(t)};
  }
  Vec2 start() const { return eval(t0); }
  Vec2 end() const { return eval(t1); }
  // Bound on |eval''|, used for chord sag estimates.
  double second_deriv_bound() const { return kind == Kind::line ? 0.0 : std::max(a, b); }
  double speed_bound() const { return kind == Kind::line ? norm(p1 - p0) : std::max(a, b); }

  double length(int n = 512) const {
    if (kind == Kind::line) return norm(p1 - p0);
    double s = 0;
    Vec2 prev = eval(t0);
    for (int i = 1; i <= n; ++i) {
      const Vec2 q = eval(t0 + (t1 - t0) * i / n);
      s += dist(prev, q);
      prev = q;
    }
    return s;
  }
};

struct CurvePoint {
  Vec2 point, tangent, normal;
};

/// Point, unit tangent along the traversal direction, and unit normal pointing
/// out of Omega_tr.
inline CurvePoint curve_point(const Segment& seg, double t) {
  const double slack = 1e-12 * std::max(1.0, std::abs(seg.tmax()));
  if (!(t >= seg.tmin() - slack && t <= seg.tmax() + slack))
    throw std::out_of_range("curve_point: parameter " + std::to_string(t) + " outside [" +
                            std::to_string(seg.tmin()) + ", " + std::to_string(seg.tmax()) + "]");
  CurvePoint cp;
  cp.point = seg.eval(t);
  Vec2 d = seg.deriv(t);
  if (seg.t1 < seg.t0) d = -d;
  cp.tangent = (1.0 / norm(d)) * d;
  cp.normal = seg.normal_left ? perp_left(cp.tangent) : -perp_left(cp.tangent);
  return cp;
}

struct BoundaryCurveSet {
  std::vector<Segment> segments;
  bool closed = false;

  bool empty() const { return segments.empty(); }

  double closure_gap() const {
    double g = 0;
    for (std::size_t i = 0; i < segments.size(); ++i) {
      const auto& s = segments[i];
      const auto& nx = segments[(i + 1) % segments.size()];
      if (i + 1 == segments.size() && !closed) break;
      g = std::max(g, dist(s.end(), nx.start()));
    }
    return g;
  }
};

enum class CavityKind { small, large, custom };

inline const char* to_string(CavityKind k) {
  switch (k) {
    case CavityKind::small: return "small";
    case CavityKind::large: return "large";
    default: return "custom";
  }
}

inline CavityKind cavity_kind_from_string(const std::string& s) {
  if (s == "small") return CavityKind::small;
  if (s == "large") return CavityKind::large;
  if (s == "custom") return CavityKind::custom;
  throw std::invalid_argument("unknown cavity kind '" + s + "' (expected small, large or custom)");
}

/// Inner arc (a1 cos t, a2 sin t), |t| <= phi0; outer arc (A1 cos t, A2 sin t),
/// |t| <= phi1 with A1 cos(phi1) = a1 cos(phi0); straight caps between the ends.
struct CavitySpec {
  CavityKind kind = CavityKind::small;
  double a1 = 1.0, a2 = 0.5;
  double A1 = 1.3, A2 = 0.6;
  double phi0 = 0.7 * std::numbers::pi;
  double fillet = 0.0;  // corner rounding length used by the mesher, 0 keeps corners

  double phi1() const { return std::acos(std::cos(phi0) * a1 / A1); }

  static CavitySpec small() { return CavitySpec{}; }
  static CavitySpec large() {
    CavitySpec c;
    c.kind = CavityKind::large;
    c.phi0 = 0.9 * std::numbers::pi;
    return c;
  }
  static CavitySpec of(CavityKind k) {
    if (k == CavityKind::large) return large();
    CavitySpec c;
    c.kind = k;
    return c;
  }
};

namespace detail {

inline std::vector<Vec2> sample_segment(const Segment& s, int n) {
  std::vector<Vec2> pts;
  for (int i = 0; i <= n; ++i) pts.push_back(s.eval(s.t0 + (s.t1 - s.t0) * i / n));
  return pts;
}

inline bool segments_cross(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  const double d1 = cross(b - a, c - a), d2 = cross(b - a, d - a);
  const double d3 = cross(d - c, a - c), d4 = cross(d - c, b - c);
  return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

inline bool self_intersects(const BoundaryCurveSet& set, int per_seg = 200) {
  std::vector<Vec2> poly;
  for (const auto& s : set.segments) {
    auto pts = sample_segment(s, per_seg);
    poly.insert(poly.end(), pts.begin(), pts.end() - 1);
  }
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 2; j < n; ++j) {
      if (i == 0 && j == n - 1) continue;
      if (segments_cross(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n])) return true;
    }
  }
  return false;
}

}  // namespace detail

/// Closed obstacle boundary Gamma_D, oriented counterclockwise around the
/// obstacle: outer arc (t increasing), top cap, inner arc (t decreasing),
/// bottom cap.
inline BoundaryCurveSet build_cavity(const CavitySpec& spec) {
  if (!(spec.a1 > 0 && spec.a2 > 0 && spec.A1 > 0 && spec.A2 > 0))
    throw std::invalid_argument("build_cavity: axes must be positive");
  if (!(spec.phi0 > 0 && spec.phi0 < std::numbers::pi))
    throw std::invalid_argument("build_cavity: phi0 must lie in (0, pi)");
  const double c = std::cos(spec.phi0) * spec.a1 / spec.A1;
  if (std::abs(c) > 1.0) throw std::invalid_argument("build_cavity: outer arc cannot reach the inner endpoints");
  const double phi1 = spec.phi1();
  const Vec2 o{0, 0};
  BoundaryCurveSet set;
  set.closed = true;
  set.segments.push_back(Segment::arc(o, spec.A1, spec.A2, -phi1, phi1, true, "outer"));
  const Vec2 top_out{spec.A1 * std::cos(phi1), spec.A2 * std::sin(phi1)};
  const Vec2 top_in{spec.a1 * std::cos(spec.phi0), spec.a2 * std::sin(spec.phi0)};
  set.segments.push_back(Segment::line(top_out, top_in, true, "cap_top"));
  set.segments.push_back(Segment::arc(o, spec.a1, spec.a2, spec.phi0, -spec.phi0, true, "inner"));
  const Vec2 bot_in{top_in.x, -top_in.y}, bot_out{top_out.x, -top_out.y};
  set.segments.push_back(Segment::line(bot_in, bot_out, true, "cap_bottom"));
  for (const auto& s : set.segments)
    if (s.kind == Segment::Kind::line && dist(s.p0, s.p1) < 1e-9)
      throw std::invalid_argument("build_cavity: degenerate cap (arc endpoints coincide)");
  if (set.closure_gap() > kClosureTol) throw std::logic_error("build_cavity: curve does not close");
  if (detail::self_intersects(set)) throw std::invalid_argument("build_cavity: curve self-intersects");
  return set;
}

inline BoundaryCurveSet build_cavity(CavityKind kind) { return build_cavity(CavitySpec::of(kind)); }

/// Circular obstacle center + r(cos t, sin t), counterclockwise like the
/// cavities, so the out-of-domain normal points into the hole.
inline BoundaryCurveSet circle_obstacle(Vec2 center, double r) {
  BoundaryCurveSet set;
  set.closed = true;
  set.segments.push_back(Segment::arc(center, r, r, 0.0, 2 * std::numbers::pi, true, "hole"));
  return set;
}

/// Full ellipse (a cos t, b sin t), counterclockwise.
inline BoundaryCurveSet ellipse_curve(Vec2 center, double a, double b) {
  if (!(a > 0 && b > 0)) throw std::invalid_argument("ellipse_curve: axes must be positive");
  BoundaryCurveSet set;
  set.closed = true;
  set.segments.push_back(Segment::arc(center, a, b, 0.0, 2 * std::numbers::pi, true, "ellipse"));
  return set;
}

struct DomainSpec {
  BoundaryCurveSet obstacle;  // Gamma_D (may be empty: plain disc)
  double R = 2.0;             // truncation radius
  Vec2 center{0, 0};
  CavitySpec cavity;          // parameters the obstacle was built from (for serialization)
  bool has_cavity = false;

  Segment truncation_circle() const {
    return Segment::arc(center, R, R, 0.0, 2 * std::numbers::pi, false, "truncation");
  }
};

inline DomainSpec make_domain(const CavitySpec& cav, double R) {
  DomainSpec d;
  d.obstacle = build_cavity(cav);
  d.R = R;
  d.cavity = cav;
  d.has_cavity = true;
  for (const auto& s : d.obstacle.segments)
    for (const auto& p : detail::sample_segment(s, 64))
      if (norm(p - d.center) >= R) throw std::invalid_argument("make_domain: obstacle does not fit inside the truncation circle");
  return d;
}

inline DomainSpec make_disc(double R) {
  DomainSpec d;
  d.R = R;
  return d;
}

namespace detail {

// Winding angle of the piece t in [ta, tb] of seg around p, accumulated by
// chord angles once p lies provably outside the lens between arc and chord.
// Sets on_boundary when p is within kBoundaryTol of the curve.
inline double winding_piece(const Segment& s, double ta, double tb, Vec2 p, bool& on_boundary, int depth) {
  const Vec2 A = s.eval(ta), B = s.eval(tb);
  const double dt = std::abs(tb - ta);
  const double sag = s.second_deriv_bound() * dt * dt / 8.0;
  const double d = dist_to_segment(p, A, B);
  if (d > sag + kBoundaryTol || depth > 60) {
    if (d <= kBoundaryTol) on_boundary = true;
    return std::atan2(cross(A - p, B - p), dot(A - p, B - p));
  }
  if (sag <= 1e-14) {
    // effectively straight: d <= tol
    on_boundary = true;
    return 0.0;
  }
  const double tm = 0.5 * (ta + tb);
  return winding_piece(s, ta, tm, p, on_boundary, depth + 1) + winding_piece(s, tm, tb, p, on_boundary, depth + 1);
}

}  // namespace detail

/// Winding number of a closed curve set around p; on_boundary set when p lies
/// within kBoundaryTol of the curve.
inline int winding_number(const BoundaryCurveSet& set, Vec2 p, bool& on_boundary) {
  double total = 0;
  for (const auto& s : set.segments) {
    const int n = s.kind == Segment::Kind::line ? 1 : 8;
    for (int i = 0; i < n; ++i) {
      const double ta = s.t0 + (s.t1 - s.t0) * i / n, tb = s.t0 + (s.t1 - s.t0) * (i + 1) / n;
      total += detail::winding_piece(s, ta, tb, p, on_boundary, 0);
    }
  }
  return static_cast<int>(std::lround(total / (2 * std::numbers::pi)));
}

/// True iff p lies strictly inside the truncation circle and strictly outside
/// the closed obstacle.  Points within 1e-10 of either boundary count as
/// not contained.
inline bool contains(const DomainSpec& dom, Vec2 p) {
  if (norm(p - dom.center) >= dom.R - kBoundaryTol) return false;
  if (dom.obstacle.empty()) return true;
  bool on_boundary = false;
  const int w = winding_number(dom.obstacle, p, on_boundary);
  return !on_boundary && w == 0;
}

}  // namespace htlab
