#pragma once

// Line/junction binding for vectorized wireframes. Line proposals are bound
// to their nearest endpoint proposals and kept when the worse of the two
// squared snap distances is below a threshold.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "skex/error.hpp"
#include "skex/geomkern.hpp"
#include "skex/imaging.hpp"
#include "skex/vec.hpp"

namespace skex {

inline constexpr double kDefaultBindThreshold = 4.0;  // squared pixels
inline constexpr std::size_t kDefaultLoiSamples = 32;

struct LineProposal {
  Vec2 x1;
  Vec2 x2;
  bool operator==(const LineProposal&) const = default;
};

struct EndpointProposal {
  Vec2 position;
  double score = 1.0;
  bool operator==(const EndpointProposal&) const = default;
};

struct BoundLine {
  Vec2 x1, x2;  // line proposal endpoints
  Vec2 y1, y2;  // snapped endpoint proposals
  double delta1 = 0, delta2 = 0, delta = 0;
  std::size_t source = 0;  // index of the line proposal
  bool operator==(const BoundLine&) const = default;
};

struct Wireframe {
  std::vector<BoundLine> lines;
  std::vector<EndpointProposal> endpoints;
};

namespace detail {
// Nearest endpoint by squared distance; ties go to the lowest index.
inline std::pair<std::size_t, double> nearest_endpoint(Vec2 q, std::span<const EndpointProposal> endpoints) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < endpoints.size(); ++i) {
    const double d = norm2(endpoints[i].position - q);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return {best, best_d};
}
}  // namespace detail

inline Wireframe bind(std::span<const LineProposal> lines, std::span<const EndpointProposal> endpoints,
                      double threshold = kDefaultBindThreshold) {
  Wireframe wf;
  wf.endpoints.assign(endpoints.begin(), endpoints.end());
  if (endpoints.empty()) return wf;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto [j1, d1] = detail::nearest_endpoint(lines[i].x1, endpoints);
    const auto [j2, d2] = detail::nearest_endpoint(lines[i].x2, endpoints);
    const double delta = std::max(d1, d2);
    if (!(delta < threshold)) continue;
    wf.lines.push_back({lines[i].x1, lines[i].x2, endpoints[j1].position, endpoints[j2].position, d1, d2, delta, i});
  }
  return wf;
}

// ---------------------------------------------------------------------------
// Line-of-interest sampling

inline Vec2 interpolate(Vec2 a, Vec2 b, double t) { return (1.0 - t) * a + t * b; }

struct LoiPoints {
  std::array<Vec2, 2> endpoints;  // {y1, y2}
  std::vector<Vec2> on_line;      // along x1 -> x2
  std::vector<Vec2> on_snapped;   // along y1 -> y2
};

inline LoiPoints loi_points(const BoundLine& line, std::span<const double> ts) {
  if (ts.empty()) throw ArgumentError("LOI sampling needs at least one parameter");
  LoiPoints out{{line.y1, line.y2}, {}, {}};
  out.on_line.reserve(ts.size());
  out.on_snapped.reserve(ts.size());
  for (double t : ts) {
    if (!(t >= 0.0 && t <= 1.0)) throw RangeError("LOI parameter " + std::to_string(t) + " outside [0, 1]");
    out.on_line.push_back(interpolate(line.x1, line.x2, t));
    out.on_snapped.push_back(interpolate(line.y1, line.y2, t));
  }
  return out;
}

// n parameters spread evenly over [0, 1] including both ends.
inline std::vector<double> uniform_samples(std::size_t n = kDefaultLoiSamples) {
  if (n == 0) return {};
  if (n == 1) return {0.5};
  std::vector<double> ts(n);
  for (std::size_t i = 0; i < n; ++i) ts[i] = static_cast<double>(i) / static_cast<double>(n - 1);
  return ts;
}

// ---------------------------------------------------------------------------
// Oracle proposals

struct OracleOptions {
  double jitter_sigma = 0.0;  // pixels
  double drop_rate = 0.0;
  std::size_t clutter = 0;
  std::uint64_t seed = 0;
};

struct OracleProposals {
  std::vector<LineProposal> lines;
  std::vector<EndpointProposal> endpoints;
  std::vector<bool> is_true;          // per line: projected model edge vs clutter
  std::vector<LineProposal> truth;    // noiseless projected edges
};

// 3D edges of a body: tessellated loops at both caps plus a side edge at
// every curve junction.
inline std::vector<std::pair<Vec3, Vec3>> body_edges(const ExtrusionBody& body) {
  std::vector<std::pair<Vec3, Vec3>> edges;
  const Frame& f = body.frame();
  const Interval W = body.extent();
  const auto& rings = body.tessellation().rings();
  const auto& loops = body.profile().loops;
  for (std::size_t r = 0; r < rings.size(); ++r) {
    const auto& ring = rings[r];
    for (std::size_t i = 0; i + 1 < ring.size(); ++i)
      for (double w : {W.lo, W.hi}) edges.emplace_back(f.to_world(ring[i], w), f.to_world(ring[i + 1], w));
    for (const Curve& c : loops[r]) {
      if (std::holds_alternative<CircleCurve>(c)) continue;
      const Vec2 q = detail::curve_start(c);
      edges.emplace_back(f.to_world(q, W.lo), f.to_world(q, W.hi));
    }
  }
  return edges;
}

inline OracleProposals oracle_proposals(const SolidModel& model, const Camera& cam, const OracleOptions& opt) {
  if (!(opt.drop_rate >= 0.0 && opt.drop_rate < 1.0)) throw ArgumentError("drop rate must lie in [0, 1)");
  if (opt.jitter_sigma < 0) throw ArgumentError("jitter sigma must be non-negative");
  const Projector project(cam);
  OracleProposals out;
  std::vector<Vec2> junctions;
  for (const auto& body : model.bodies())
    for (const auto& [a, b] : body_edges(body)) {
      const auto pa = project(a), pb = project(b);
      if (!pa || !pb || pa->pixel == pb->pixel) continue;
      out.truth.push_back({pa->pixel, pb->pixel});
      junctions.push_back(pa->pixel);
      junctions.push_back(pb->pixel);
    }
  std::sort(junctions.begin(), junctions.end(), [](Vec2 a, Vec2 b) { return a.x != b.x ? a.x < b.x : a.y < b.y; });
  junctions.erase(std::unique(junctions.begin(), junctions.end()), junctions.end());

  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  auto jitter = [&](Vec2 p) {
    if (opt.jitter_sigma == 0) return p;
    const double dx = noise(rng), dy = noise(rng);
    return p + Vec2{dx, dy} * opt.jitter_sigma;
  };

  for (const auto& t : out.truth) {
    const bool drop = opt.drop_rate > 0 && uni(rng) < opt.drop_rate;
    const Vec2 a = jitter(t.x1), b = jitter(t.x2);
    if (drop || a == b) continue;
    out.lines.push_back({a, b});
    out.is_true.push_back(true);
  }
  for (std::size_t k = 0; k < opt.clutter;) {
    const Vec2 a{uni(rng) * cam.width, uni(rng) * cam.height};
    const Vec2 b{uni(rng) * cam.width, uni(rng) * cam.height};
    if (a == b) continue;
    out.lines.push_back({a, b});
    out.is_true.push_back(false);
    ++k;
  }
  for (Vec2 j : junctions) {
    const Vec2 p = jitter(j);
    out.endpoints.push_back({{std::clamp(p.x, 0.0, static_cast<double>(cam.width)),
                              std::clamp(p.y, 0.0, static_cast<double>(cam.height))},
                             1.0});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Interchange (pixel coordinates, origin top-left)

inline nlohmann::json to_json(const Wireframe& wf) {
  nlohmann::json lines = nlohmann::json::array(), ends = nlohmann::json::array();
  for (const auto& l : wf.lines)
    lines.push_back({l.x1.x, l.x1.y, l.x2.x, l.x2.y, l.y1.x, l.y1.y, l.y2.x, l.y2.y});
  for (const auto& e : wf.endpoints) ends.push_back({e.position.x, e.position.y, e.score});
  return {{"lines", std::move(lines)}, {"endpoints", std::move(ends)}};
}

inline nlohmann::json proposals_to_json(std::span<const LineProposal> lines,
                                        std::span<const EndpointProposal> endpoints) {
  nlohmann::json ls = nlohmann::json::array(), es = nlohmann::json::array();
  for (const auto& l : lines) ls.push_back({l.x1.x, l.x1.y, l.x2.x, l.x2.y});
  for (const auto& e : endpoints) es.push_back({e.position.x, e.position.y, e.score});
  return {{"lines", std::move(ls)}, {"endpoints", std::move(es)}};
}

struct ProposalSet {
  std::vector<LineProposal> lines;
  std::vector<EndpointProposal> endpoints;
};

// Reads a proposals document; extra per-line values beyond the first four
// are ignored, so a wireframe document is accepted too.
inline ProposalSet proposals_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("lines") || !doc.contains("endpoints"))
    throw SchemaError("proposal document needs 'lines' and 'endpoints'");
  ProposalSet ps;
  for (const auto& l : doc["lines"]) {
    if (!l.is_array() || l.size() < 4) throw SchemaError("each line needs at least 4 coordinates");
    ps.lines.push_back({{l[0].get<double>(), l[1].get<double>()}, {l[2].get<double>(), l[3].get<double>()}});
  }
  for (const auto& e : doc["endpoints"]) {
    if (!e.is_array() || e.size() < 2) throw SchemaError("each endpoint needs x and y");
    ps.endpoints.push_back({{e[0].get<double>(), e[1].get<double>()}, e.size() > 2 ? e[2].get<double>() : 1.0});
  }
  return ps;
}

}  // namespace skex
