#pragma once

// Executes command sequences into solids. Booleans are evaluated on implicit
// occupancy; meshes are per-body and untrimmed (visualization grade).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include "skex/error.hpp"
#include "skex/seqmodel.hpp"
#include "skex/vec.hpp"

namespace skex {

inline constexpr double kDefaultSagitta = 1e-3;
inline constexpr double kDefaultBandFraction = 1e-4;
inline constexpr double kBoundaryTol = 1e-9;

// ---------------------------------------------------------------------------
// Sketch plane

struct Frame {
  Vec3 origin;
  Vec3 u{1, 0, 0};
  Vec3 v{0, 1, 0};
  Vec3 n{0, 0, 1};
  double scale = 1.0;

  Vec3 to_world(Vec2 uv, double w) const { return origin + scale * (uv.x * u + uv.y * v) + w * n; }
};

// Plane normal from polar angle theta and azimuth phi; gamma rotates the
// in-plane axes about the normal.
inline Frame sketch_plane_frame(double theta, double phi, double gamma, Vec3 origin, double scale) {
  if (!(scale > 0.0)) throw ScaleError("sketch scale must be positive, got " + std::to_string(scale));
  Frame f;
  f.origin = origin;
  f.scale = scale;
  f.n = {std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)};
  const Vec3 zc = cross(Vec3{0, 0, 1}, f.n);
  const Vec3 t0 = norm(zc) > 1e-9 ? normalized(zc) : Vec3{1, 0, 0};
  // t0 is perpendicular to n, so Rodrigues reduces to two terms.
  f.u = normalized(std::cos(gamma) * t0 + std::sin(gamma) * cross(f.n, t0));
  f.v = cross(f.n, f.u);
  return f;
}

// ---------------------------------------------------------------------------
// Curves and profiles (local sketch coordinates)

struct LineCurve {
  Vec2 start;
  Vec2 end;
};

struct ArcCurve {
  Vec2 start;
  Vec2 end;
  double sweep;  // radians, in (0, 2pi)
  bool ccw;
};

struct CircleCurve {
  Vec2 center;
  double radius;
};

using Curve = std::variant<LineCurve, ArcCurve, CircleCurve>;
using Loop = std::vector<Curve>;

struct Profile {
  std::vector<Loop> loops;
};

struct ArcGeometry {
  Vec2 center;
  double radius;
};

// The center sits on the chord's perpendicular bisector, on the left of the
// chord for a counter-clockwise traversal with sweep below pi.
inline ArcGeometry arc_geometry(Vec2 start, Vec2 end, double sweep, bool ccw) {
  const Vec2 chord = end - start;
  const double len = norm(chord);
  if (!(sweep > 0.0 && sweep < 2.0 * kPi)) throw DegenerateArcError("arc sweep must lie in (0, 2pi)");
  if (len <= kBoundaryTol) throw DegenerateArcError("arc endpoints coincide");
  const double radius = len / (2.0 * std::sin(sweep / 2.0));
  const double offset = radius * std::cos(sweep / 2.0);
  const Vec2 left = perp(chord) * (1.0 / len);
  const Vec2 mid = (start + end) * 0.5;
  return {ccw ? mid + left * offset : mid - left * offset, radius};
}

namespace detail {

// Number of chords so that chord-to-arc deviation stays within tol.
inline int arc_segments(double radius, double sweep, double tol) {
  double step = kPi / 2;
  if (tol < radius) step = std::min(step, 2.0 * std::acos(1.0 - tol / radius));
  return std::max(1, static_cast<int>(std::ceil(sweep / step - 1e-12)));
}

// Appends the points of `c` after its start point.
inline void append_curve(std::vector<Vec2>& out, const Curve& c, double tol) {
  if (const auto* l = std::get_if<LineCurve>(&c)) {
    out.push_back(l->end);
  } else if (const auto* a = std::get_if<ArcCurve>(&c)) {
    const ArcGeometry g = arc_geometry(a->start, a->end, a->sweep, a->ccw);
    const int n = arc_segments(g.radius, a->sweep, tol);
    const double a0 = std::atan2(a->start.y - g.center.y, a->start.x - g.center.x);
    const double step = (a->ccw ? a->sweep : -a->sweep) / n;
    for (int k = 1; k < n; ++k) {
      const double t = a0 + k * step;
      out.push_back(g.center + Vec2{std::cos(t), std::sin(t)} * g.radius);
    }
    out.push_back(a->end);
  } else {
    const auto& r = std::get<CircleCurve>(c);
    if (!(r.radius > 0.0)) throw DegenerateArcError("circle radius must be positive");
    const int n = std::max(8, arc_segments(r.radius, 2.0 * kPi, tol));
    for (int k = 1; k < n; ++k) {
      const double t = 2.0 * kPi * k / n;
      out.push_back(r.center + Vec2{std::cos(t), std::sin(t)} * r.radius);
    }
    out.push_back(r.center + Vec2{r.radius, 0.0});
  }
}

inline Vec2 curve_start(const Curve& c) {
  if (const auto* l = std::get_if<LineCurve>(&c)) return l->start;
  if (const auto* a = std::get_if<ArcCurve>(&c)) return a->start;
  const auto& r = std::get<CircleCurve>(c);
  return r.center + Vec2{r.radius, 0.0};
}

inline double segment_distance2(Vec2 q, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double l2 = norm2(ab);
  const double t = l2 > 0 ? std::clamp(dot(q - a, ab) / l2, 0.0, 1.0) : 0.0;
  return norm2(q - (a + ab * t));
}

}  // namespace detail

// Closed polyline: the last vertex equals the first.
inline std::vector<Vec2> tessellate_loop(const Loop& loop, double sagitta_tol = kDefaultSagitta) {
  std::vector<Vec2> pts;
  if (loop.empty()) return pts;
  pts.push_back(detail::curve_start(loop.front()));
  for (const Curve& c : loop) detail::append_curve(pts, c, sagitta_tol);
  pts.back() = pts.front();
  return pts;
}

// Tessellated profile with an even-odd inside test.
class TessellatedProfile {
 public:
  TessellatedProfile() = default;
  TessellatedProfile(const Profile& p, double sagitta_tol) {
    for (const Loop& l : p.loops) rings_.push_back(tessellate_loop(l, sagitta_tol));
    for (const auto& r : rings_)
      for (Vec2 q : r) {
        lo_ = {std::min(lo_.x, q.x), std::min(lo_.y, q.y)};
        hi_ = {std::max(hi_.x, q.x), std::max(hi_.y, q.y)};
      }
  }

  const std::vector<std::vector<Vec2>>& rings() const { return rings_; }

  // Points within kBoundaryTol of the boundary count as inside.
  bool contains(Vec2 q) const {
    if (q.x < lo_.x - kBoundaryTol || q.x > hi_.x + kBoundaryTol || q.y < lo_.y - kBoundaryTol ||
        q.y > hi_.y + kBoundaryTol)
      return false;
    bool inside = false;
    const double tol2 = kBoundaryTol * kBoundaryTol;
    for (const auto& r : rings_) {
      for (std::size_t i = 0; i + 1 < r.size(); ++i) {
        const Vec2 a = r[i];
        const Vec2 b = r[i + 1];
        if (detail::segment_distance2(q, a, b) <= tol2) return true;
        if ((a.y > q.y) != (b.y > q.y)) {
          const double x = a.x + (q.y - a.y) / (b.y - a.y) * (b.x - a.x);
          if (q.x < x) inside = !inside;
        }
      }
    }
    return inside;
  }

 private:
  std::vector<std::vector<Vec2>> rings_;
  Vec2 lo_{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  Vec2 hi_{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
};

inline bool point_in_profile(const Profile& profile, Vec2 q, double sagitta_tol = kDefaultSagitta) {
  return TessellatedProfile(profile, sagitta_tol).contains(q);
}

// ---------------------------------------------------------------------------
// Bodies and models

struct Interval {
  double lo;
  double hi;
};

inline Interval extent_interval(ExtrudeKind kind, double e1, double e2) {
  switch (kind) {
    case ExtrudeKind::OneSided: return {0.0, e1};
    case ExtrudeKind::Symmetric: return {-e1 / 2, e1 / 2};
    case ExtrudeKind::TwoSided: return {-e2, e1};
  }
  return {0.0, e1};
}

class ExtrusionBody {
 public:
  ExtrusionBody(Profile profile, Frame frame, double e1, double e2, ExtrudeKind kind, BooleanOp op,
                double sagitta_tol = kDefaultSagitta)
      : profile_(std::move(profile)),
        frame_(frame),
        e1_(e1),
        e2_(e2),
        kind_(kind),
        op_(op),
        tess_(profile_, sagitta_tol) {
    const Interval w = extent();
    if (!(w.hi - w.lo > 0.0)) throw Error("extrusion has zero extent");
  }

  const Profile& profile() const { return profile_; }
  const TessellatedProfile& tessellation() const { return tess_; }
  const Frame& frame() const { return frame_; }
  double e1() const { return e1_; }
  double e2() const { return e2_; }
  ExtrudeKind kind() const { return kind_; }
  BooleanOp op() const { return op_; }
  Interval extent() const { return extent_interval(kind_, e1_, e2_); }

  bool contains(Vec3 p) const {
    const Vec3 d = p - frame_.origin;
    const double w = dot(d, frame_.n);
    const Interval W = extent();
    if (w < W.lo || w > W.hi) return false;
    return tess_.contains({dot(d, frame_.u) / frame_.scale, dot(d, frame_.v) / frame_.scale});
  }

  ExtrusionBody with_op(BooleanOp op) const {
    ExtrusionBody b = *this;
    b.op_ = op;
    return b;
  }

  // Same body placed by p -> k * (p - center).
  ExtrusionBody rescaled(Vec3 center, double k) const {
    ExtrusionBody b = *this;
    b.frame_.origin = (frame_.origin - center) * k;
    b.frame_.scale *= k;
    b.e1_ *= k;
    b.e2_ *= k;
    return b;
  }

 private:
  Profile profile_;
  Frame frame_;
  double e1_, e2_;
  ExtrudeKind kind_;
  BooleanOp op_;
  TessellatedProfile tess_;
};

inline bool body_occupancy(const ExtrusionBody& body, Vec3 p) { return body.contains(p); }

class SolidModel {
 public:
  SolidModel() = default;
  explicit SolidModel(std::vector<ExtrusionBody> bodies) : bodies_(std::move(bodies)) {
    if (!bodies_.empty()) bodies_.front() = bodies_.front().with_op(BooleanOp::NewBody);
  }

  const std::vector<ExtrusionBody>& bodies() const { return bodies_; }
  bool empty() const { return bodies_.empty(); }

  // New bodies are merged into the running shape like joins.
  bool contains(Vec3 p) const {
    bool in = false;
    for (const auto& b : bodies_) {
      switch (b.op()) {
        case BooleanOp::NewBody:
        case BooleanOp::Join: in = in || b.contains(p); break;
        case BooleanOp::Cut: in = in && !b.contains(p); break;
        case BooleanOp::Intersect: in = in && b.contains(p); break;
      }
    }
    return in;
  }

  SolidModel rescaled(Vec3 center, double k) const {
    SolidModel m;
    for (const auto& b : bodies_) m.bodies_.push_back(b.rescaled(center, k));
    return m;
  }

 private:
  std::vector<ExtrusionBody> bodies_;
};

inline bool model_occupancy(const SolidModel& model, Vec3 p) { return model.contains(p); }

// Executes a valid sequence. Line and arc chains start at the sketch origin.
inline SolidModel execute(const CadSequence& seq, double sagitta_tol = kDefaultSagitta,
                          const ValidateOptions& opt = {}) {
  const ValidationReport rep = validate(seq, opt);
  if (!rep.valid())
    throw Error("cannot execute invalid sequence: " + std::string(to_string(rep.failures.front().code)) + " at " +
                std::to_string(rep.failures.front().index));

  std::vector<ExtrusionBody> bodies;
  Profile profile;
  Vec2 pen{0, 0};
  for (const Command& c : seq.commands) {
    switch (c.type) {
      case CommandType::SOL:
        profile.loops.emplace_back();
        pen = {0, 0};
        break;
      case CommandType::Line:
        profile.loops.back().push_back(LineCurve{pen, c.point()});
        pen = c.point();
        break;
      case CommandType::Arc:
        profile.loops.back().push_back(ArcCurve{pen, c.point(), sweep_radians(c[Slot::Alpha]), c.ccw()});
        pen = c.point();
        break;
      case CommandType::Circle:
        profile.loops.back().push_back(CircleCurve{c.point(), c[Slot::Radius]});
        break;
      case CommandType::Extrude: {
        const Frame f = sketch_plane_frame(polar_radians(c[Slot::Theta]), azimuth_radians(c[Slot::Phi]),
                                           roll_radians(c[Slot::Gamma]), {c[Slot::Px], c[Slot::Py], c[Slot::Pz]},
                                           c[Slot::Scale]);
        bodies.emplace_back(std::move(profile), f, c[Slot::E1], c[Slot::E2], c.extrude_kind(), c.boolean(),
                            sagitta_tol);
        profile = {};
        break;
      }
      case CommandType::EOS:
        break;
    }
  }
  return SolidModel(std::move(bodies));
}

// ---------------------------------------------------------------------------
// Meshes

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;

  bool empty() const { return triangles.empty(); }

  Vec3 normal(std::size_t t) const {
    const auto& f = triangles[t];
    return cross(vertices[f[1]] - vertices[f[0]], vertices[f[2]] - vertices[f[0]]);
  }
  double triangle_area(std::size_t t) const { return 0.5 * norm(normal(t)); }
  double area() const {
    double a = 0;
    for (std::size_t t = 0; t < triangles.size(); ++t) a += triangle_area(t);
    return a;
  }

  void append(const TriangleMesh& o) {
    const auto base = static_cast<std::uint32_t>(vertices.size());
    vertices.insert(vertices.end(), o.vertices.begin(), o.vertices.end());
    for (auto f : o.triangles) triangles.push_back({f[0] + base, f[1] + base, f[2] + base});
  }
};

struct Box3 {
  Vec3 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity()};
  Vec3 hi{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
          -std::numeric_limits<double>::infinity()};

  void add(Vec3 p) {
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
  }
  Vec3 center() const { return (lo + hi) * 0.5; }
  double diagonal() const { return norm(hi - lo); }
};

template <typename Points>
Box3 bounding_box(const Points& pts) {
  Box3 b;
  for (Vec3 p : pts) b.add(p);
  return b;
}

namespace detail {

inline double signed_area(std::span<const Vec2> ring) {
  double a = 0;
  for (std::size_t i = 0; i < ring.size(); ++i) a += cross(ring[i], ring[(i + 1) % ring.size()]);
  return 0.5 * a;
}

// Strict crossing of segments ab and cd (shared endpoints and touching do
// not count).
inline bool segments_cross(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  const double d1 = cross(b - a, c - a), d2 = cross(b - a, d - a);
  const double d3 = cross(d - c, a - c), d4 = cross(d - c, b - c);
  return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

inline bool ring_contains(std::span<const Vec2> ring, Vec2 q) {
  bool inside = false;
  for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
    if ((ring[i].y > q.y) != (ring[j].y > q.y)) {
      const double x = ring[i].x + (q.y - ring[i].y) / (ring[j].y - ring[i].y) * (ring[j].x - ring[i].x);
      if (q.x < x) inside = !inside;
    }
  }
  return inside;
}

inline bool on_ring(std::span<const Vec2> ring, Vec2 q) {
  for (std::size_t i = 0; i < ring.size(); ++i)
    if (segment_distance2(q, ring[i], ring[(i + 1) % ring.size()]) <= kBoundaryTol * kBoundaryTol) return true;
  return false;
}

// Whether ring `inner` lies inside ring `outer`, judged at its first vertex
// that is not on outer's boundary.
inline bool ring_inside(std::span<const Vec2> inner, std::span<const Vec2> outer) {
  for (Vec2 q : inner)
    if (!on_ring(outer, q)) return ring_contains(outer, q);
  return false;
}

struct IndexedPoint {
  Vec2 p;
  std::uint32_t id;
};

inline bool point_in_triangle(Vec2 p, Vec2 a, Vec2 b, Vec2 c) {
  return cross(b - a, p - a) >= 0 && cross(c - b, p - b) >= 0 && cross(a - c, p - c) >= 0;
}

// Ear clipping of a counter-clockwise simple polygon (bridged holes allowed).
inline std::vector<std::array<std::uint32_t, 3>> ear_clip(std::vector<IndexedPoint> poly) {
  std::vector<std::array<std::uint32_t, 3>> tris;
  while (poly.size() > 3) {
    const std::size_t n = poly.size();
    std::size_t ear = n;
    std::size_t fallback = n;
    for (std::size_t i = 0; i < n && ear == n; ++i) {
      const Vec2 a = poly[(i + n - 1) % n].p, b = poly[i].p, c = poly[(i + 1) % n].p;
      const double turn = cross(b - a, c - b);
      if (turn <= 0) {
        if (turn == 0 && fallback == n) fallback = i;
        continue;
      }
      if (fallback == n) fallback = i;
      bool blocked = false;
      for (std::size_t k = 0; k < n && !blocked; ++k) {
        const Vec2 q = poly[k].p;
        if (q == a || q == b || q == c) continue;
        blocked = point_in_triangle(q, a, b, c);
      }
      if (!blocked) ear = i;
    }
    if (ear == n) ear = fallback;
    if (ear == n) throw TessellationError("ear clipping found no ear");
    const std::uint32_t ia = poly[(ear + n - 1) % n].id, ib = poly[ear].id, ic = poly[(ear + 1) % n].id;
    if (cross(poly[ear].p - poly[(ear + n - 1) % n].p, poly[(ear + 1) % n].p - poly[ear].p) != 0)
      tris.push_back({ia, ib, ic});
    poly.erase(poly.begin() + static_cast<std::ptrdiff_t>(ear));
  }
  if (poly.size() == 3 && cross(poly[1].p - poly[0].p, poly[2].p - poly[1].p) != 0)
    tris.push_back({poly[0].id, poly[1].id, poly[2].id});
  return tris;
}

// Splices each hole into the outer ring through a bridge to a mutually
// visible vertex. Outer must be counter-clockwise, holes clockwise.
inline std::vector<IndexedPoint> bridge_holes(std::vector<IndexedPoint> outer,
                                              std::vector<std::vector<IndexedPoint>> holes) {
  std::sort(holes.begin(), holes.end(), [](const auto& a, const auto& b) {
    auto mx = [](const auto& h) {
      return std::max_element(h.begin(), h.end(), [](auto& p, auto& q) { return p.p.x < q.p.x; })->p.x;
    };
    return mx(a) > mx(b);
  });
  for (std::size_t h = 0; h < holes.size(); ++h) {
    auto& hole = holes[h];
    const auto m = static_cast<std::size_t>(
        std::max_element(hole.begin(), hole.end(), [](auto& p, auto& q) { return p.p.x < q.p.x; }) - hole.begin());
    const Vec2 M = hole[m].p;

    auto blocked = [&](Vec2 P) {
      auto hits = [&](const std::vector<IndexedPoint>& ring) {
        for (std::size_t i = 0; i < ring.size(); ++i)
          if (segments_cross(M, P, ring[i].p, ring[(i + 1) % ring.size()].p)) return true;
        return false;
      };
      if (hits(outer)) return true;
      for (std::size_t k = h; k < holes.size(); ++k)
        if (hits(holes[k])) return true;
      return false;
    };

    std::size_t best = outer.size();
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < outer.size(); ++i) {
      const double d = norm2(outer[i].p - M);
      if (d < best_d && !blocked(outer[i].p)) {
        best_d = d;
        best = i;
      }
    }
    if (best == outer.size()) throw TessellationError("no visible bridge vertex for hole");

    std::vector<IndexedPoint> merged(outer.begin(), outer.begin() + static_cast<std::ptrdiff_t>(best) + 1);
    for (std::size_t k = 0; k <= hole.size(); ++k) merged.push_back(hole[(m + k) % hole.size()]);
    merged.insert(merged.end(), outer.begin() + static_cast<std::ptrdiff_t>(best), outer.end());
    outer = std::move(merged);
  }
  return outer;
}

inline void check_simple(const std::vector<std::vector<Vec2>>& rings) {
  for (std::size_t r = 0; r < rings.size(); ++r)
    for (std::size_t s = r; s < rings.size(); ++s) {
      const auto& A = rings[r];
      const auto& B = rings[s];
      for (std::size_t i = 0; i < A.size(); ++i)
        for (std::size_t j = (r == s ? i + 1 : 0); j < B.size(); ++j)
          if (segments_cross(A[i], A[(i + 1) % A.size()], B[j], B[(j + 1) % B.size()]))
            throw TessellationError("self-intersecting profile polyline");
    }
}

}  // namespace detail

// Closed, outward-oriented triangulation of one extrusion body.
inline TriangleMesh body_mesh(const ExtrusionBody& body) {
  // Open rings (closing vertex dropped).
  std::vector<std::vector<Vec2>> rings;
  for (const auto& r : body.tessellation().rings()) {
    if (r.size() < 4) throw TessellationError("loop tessellates to fewer than 3 vertices");
    rings.emplace_back(r.begin(), r.end() - 1);
  }
  detail::check_simple(rings);

  // Even-odd nesting: rings at odd depth are holes.
  const std::size_t nr = rings.size();
  std::vector<int> depth(nr, 0);
  std::vector<std::size_t> parent(nr, nr);
  for (std::size_t i = 0; i < nr; ++i)
    for (std::size_t j = 0; j < nr; ++j)
      if (i != j && detail::ring_inside(rings[i], rings[j])) ++depth[i];
  for (std::size_t i = 0; i < nr; ++i) {
    const bool hole = depth[i] % 2 == 1;
    if ((detail::signed_area(rings[i]) > 0) == hole) std::reverse(rings[i].begin(), rings[i].end());
    if (!hole) continue;
    for (std::size_t j = 0; j < nr; ++j)
      if (depth[j] == depth[i] - 1 && detail::ring_inside(rings[i], rings[j])) parent[i] = j;
  }

  TriangleMesh mesh;
  const Frame& f = body.frame();
  const Interval W = body.extent();
  std::vector<std::uint32_t> base(nr);
  for (std::size_t r = 0; r < nr; ++r) {
    base[r] = static_cast<std::uint32_t>(mesh.vertices.size());
    for (Vec2 q : rings[r]) {
      mesh.vertices.push_back(f.to_world(q, W.lo));
      mesh.vertices.push_back(f.to_world(q, W.hi));
    }
  }
  auto bottom = [&](std::size_t r, std::size_t i) { return base[r] + static_cast<std::uint32_t>(2 * i); };
  auto top = [&](std::size_t r, std::size_t i) { return base[r] + static_cast<std::uint32_t>(2 * i + 1); };

  // Caps: triangulate in terms of bottom-vertex ids, then mirror to the top.
  for (std::size_t r = 0; r < nr; ++r) {
    if (depth[r] % 2 == 1) continue;
    auto indexed = [&](std::size_t k) {
      std::vector<detail::IndexedPoint> v;
      for (std::size_t i = 0; i < rings[k].size(); ++i) v.push_back({rings[k][i], bottom(k, i)});
      return v;
    };
    std::vector<std::vector<detail::IndexedPoint>> holes;
    for (std::size_t k = 0; k < nr; ++k)
      if (parent[k] == r) holes.push_back(indexed(k));
    for (auto t : detail::ear_clip(detail::bridge_holes(indexed(r), std::move(holes)))) {
      mesh.triangles.push_back({t[0] + 1, t[1] + 1, t[2] + 1});
      mesh.triangles.push_back({t[0], t[2], t[1]});
    }
  }

  // Side walls: ring interiors are on the left, so (edge x n) points out.
  for (std::size_t r = 0; r < nr; ++r) {
    const std::size_t m = rings[r].size();
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t j = (i + 1) % m;
      mesh.triangles.push_back({bottom(r, i), bottom(r, j), top(r, j)});
      mesh.triangles.push_back({bottom(r, i), top(r, j), top(r, i)});
    }
  }
  return mesh;
}

// Bodies are concatenated without boolean trimming.
inline TriangleMesh export_mesh(const SolidModel& model) {
  TriangleMesh mesh;
  for (const auto& b : model.bodies()) mesh.append(body_mesh(b));
  return mesh;
}

inline Box3 model_bounds(const SolidModel& model) { return bounding_box(export_mesh(model).vertices); }

// Same model translated to its bounding-box center and scaled to unit
// diagonal.
inline SolidModel normalize_model(const SolidModel& model) {
  const Box3 b = model_bounds(model);
  const double d = b.diagonal();
  return model.rescaled(b.center(), d > 0 ? 1.0 / d : 1.0);
}

// ---------------------------------------------------------------------------
// Point clouds

struct PointCloud {
  std::vector<Vec3> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool operator==(const PointCloud&) const = default;
};

inline PointCloud normalize_points(const PointCloud& pc) {
  if (pc.empty()) return pc;
  const Box3 b = bounding_box(pc.points);
  const Vec3 c = b.center();
  const double d = b.diagonal();
  const double k = d > 0 ? 1.0 / d : 1.0;
  PointCloud out;
  out.points.reserve(pc.size());
  for (Vec3 p : pc.points) out.points.push_back((p - c) * k);
  return out;
}

struct SampleOptions {
  // Survival band as a fraction of the model's bounding-box diagonal.
  double band_fraction = kDefaultBandFraction;
  // Candidates drawn with no acceptance before giving up.
  std::size_t empty_budget = 100000;
  // Hard cap on candidates per requested point.
  std::size_t candidates_per_point = 1000;
};

// Uniform-by-area samples of each body's boundary that survive the boolean
// composition: the model's occupancy flips across the surface.
inline PointCloud sample_surface(const SolidModel& model, std::size_t n, std::uint64_t seed,
                                 const SampleOptions& opt = {}) {
  if (n == 0) throw ArgumentError("sample count must be positive");
  const TriangleMesh mesh = export_mesh(model);
  if (mesh.empty()) throw EmptySurfaceError("model has no surface");
  const double band = opt.band_fraction * bounding_box(mesh.vertices).diagonal();

  std::vector<double> cdf(mesh.triangles.size());
  std::vector<Vec3> unit_normals(mesh.triangles.size());
  double total = 0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const Vec3 nrm = mesh.normal(t);
    const double len = norm(nrm);
    total += 0.5 * len;
    cdf[t] = total;
    unit_normals[t] = len > 0 ? nrm / len : Vec3{};
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  PointCloud out;
  out.points.reserve(n);
  const std::size_t budget = opt.candidates_per_point * n + opt.empty_budget;
  for (std::size_t drawn = 0; out.size() < n; ++drawn) {
    if (drawn >= budget || (out.empty() && drawn >= opt.empty_budget))
      throw EmptySurfaceError("surface sampling accepted " + std::to_string(out.size()) + " of " +
                              std::to_string(drawn) + " candidates");
    const double pick = uni(rng) * total;
    const auto t = std::min(static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), pick) - cdf.begin()),
                            cdf.size() - 1);
    const double r1 = std::sqrt(uni(rng));
    const double r2 = uni(rng);
    const auto& f = mesh.triangles[t];
    const Vec3 p = (1 - r1) * mesh.vertices[f[0]] + r1 * (1 - r2) * mesh.vertices[f[1]] +
                   r1 * r2 * mesh.vertices[f[2]];
    const Vec3 m = unit_normals[t];
    if (model.contains(p + band * m) != model.contains(p - band * m)) out.points.push_back(p);
  }
  return out;
}

}  // namespace skex
