#pragma once

// Evaluation metrics over token matrices and point clouds, and the
// cross-entropy training loss over decoder logits.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "skex/error.hpp"
#include "skex/geomkern.hpp"
#include "skex/seqmodel.hpp"

namespace skex {

inline constexpr int kDefaultParamTolerance = 3;  // tokens
inline constexpr double kDefaultLossWeight = 2.0;
inline constexpr std::size_t kDefaultChamferSamples = 2000;

struct Ratio {
  std::size_t hits = 0;
  std::size_t total = 0;

  Ratio& operator+=(Ratio o) {
    hits += o.hits;
    total += o.total;
    return *this;
  }
  // An empty denominator scores 1.
  double value() const { return total == 0 ? 1.0 : static_cast<double>(hits) / static_cast<double>(total); }
};

namespace detail {
inline void check_same_shape(const TokenMatrix& a, const TokenMatrix& b) {
  if (a.rows.size() != kMaxCommands || b.rows.size() != kMaxCommands)
    throw ShapeError("token matrices must have " + std::to_string(kMaxCommands) + " rows");
}
}  // namespace detail

// Rows compared: the ground truth up to and including its EOS.
inline Ratio command_hits(const TokenMatrix& pred, const TokenMatrix& gt) {
  detail::check_same_shape(pred, gt);
  Ratio r;
  r.total = gt.length();
  for (std::size_t i = 0; i < r.total; ++i) r.hits += pred.rows[i].type == gt.rows[i].type;
  return r;
}

inline double cmd_accuracy(const TokenMatrix& pred, const TokenMatrix& gt) { return command_hits(pred, gt).value(); }

// Every parameter slot the ground truth uses is one trial; it succeeds when
// the row types agree and the tokens differ by at most `tolerance`.
inline Ratio param_hits(const TokenMatrix& pred, const TokenMatrix& gt, int tolerance = kDefaultParamTolerance) {
  detail::check_same_shape(pred, gt);
  if (tolerance < 0) throw ArgumentError("parameter tolerance must be non-negative");
  Ratio r;
  const std::size_t n = gt.length();
  for (std::size_t i = 0; i < n; ++i) {
    const TokenRow& g = gt.rows[i];
    const TokenRow& p = pred.rows[i];
    const CommandType t = g.command_type();
    for (std::size_t s = 0; s < kSlotCount; ++s) {
      if (!uses_slot(t, s)) continue;
      ++r.total;
      if (p.type == g.type && p.params[s] >= 0 && std::abs(p.params[s] - g.params[s]) <= tolerance) ++r.hits;
    }
  }
  return r;
}

inline double param_accuracy(const TokenMatrix& pred, const TokenMatrix& gt, int tolerance = kDefaultParamTolerance) {
  return param_hits(pred, gt, tolerance).value();
}

// ---------------------------------------------------------------------------
// Invalid ratio

// A sample is either a token matrix or a failure upstream of tokens (nullopt).
using Sample = std::optional<TokenMatrix>;

// Decodes, validates and executes; false on any failure.
inline bool sample_is_valid(const Sample& s) {
  if (!s) return false;
  try {
    const CadSequence seq = dequantize(*s);
    const ValidateOptions opt{kDequantizedClosureTol};
    if (!validate(seq, opt).valid()) return false;
    return !export_mesh(execute(seq, kDefaultSagitta, opt)).empty();
  } catch (const Error&) {
    return false;
  }
}

inline double invalid_ratio(std::size_t invalid, std::size_t total) {
  if (total == 0) throw EmptyBatchError("invalid ratio of an empty batch");
  return static_cast<double>(invalid) / static_cast<double>(total);
}

inline double invalid_ratio(std::span<const Sample> batch) {
  std::size_t bad = 0;
  for (const auto& s : batch) bad += !sample_is_valid(s);
  return invalid_ratio(bad, batch.size());
}

// ---------------------------------------------------------------------------
// Chamfer distance

// Static 3-d tree for exact nearest-neighbour queries.
class KdTree {
 public:
  explicit KdTree(std::span<const Vec3> points) : pts_(points.begin(), points.end()) {
    idx_.resize(pts_.size());
    std::iota(idx_.begin(), idx_.end(), std::size_t{0});
    nodes_.reserve(pts_.size());
    root_ = build(0, idx_.size(), 0);
  }

  // Squared distance to the nearest point.
  double nearest2(Vec3 q) const {
    double best = std::numeric_limits<double>::infinity();
    search(root_, q, best);
    return best;
  }

 private:
  struct Node {
    std::size_t point;
    int axis;
    std::int64_t left = -1, right = -1;
  };

  static double coord(Vec3 p, int axis) { return axis == 0 ? p.x : axis == 1 ? p.y : p.z; }

  std::int64_t build(std::size_t lo, std::size_t hi, int depth) {
    if (lo >= hi) return -1;
    const int axis = depth % 3;
    const std::size_t mid = lo + (hi - lo) / 2;
    std::nth_element(idx_.begin() + static_cast<std::ptrdiff_t>(lo), idx_.begin() + static_cast<std::ptrdiff_t>(mid),
                     idx_.begin() + static_cast<std::ptrdiff_t>(hi), [&](std::size_t a, std::size_t b) {
                       return coord(pts_[a], axis) < coord(pts_[b], axis);
                     });
    const auto id = static_cast<std::int64_t>(nodes_.size());
    nodes_.push_back({idx_[mid], axis});
    const auto l = build(lo, mid, depth + 1);
    const auto r = build(mid + 1, hi, depth + 1);
    nodes_[static_cast<std::size_t>(id)].left = l;
    nodes_[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  void search(std::int64_t id, Vec3 q, double& best) const {
    if (id < 0) return;
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    const Vec3 p = pts_[n.point];
    best = std::min(best, norm2(q - p));
    const double diff = coord(q, n.axis) - coord(p, n.axis);
    const auto near = diff < 0 ? n.left : n.right;
    const auto far = diff < 0 ? n.right : n.left;
    search(near, q, best);
    if (diff * diff < best) search(far, q, best);
  }

  std::vector<Vec3> pts_;
  std::vector<std::size_t> idx_;
  std::vector<Node> nodes_;
  std::int64_t root_ = -1;
};

// Mean squared nearest-neighbour distance from a to b plus from b to a.
inline double chamfer(const PointCloud& a, const PointCloud& b) {
  if (a.empty() || b.empty()) throw EmptyCloudError("chamfer distance of an empty cloud");
  auto one_way = [](const PointCloud& from, const PointCloud& to) {
    const KdTree tree(to.points);
    double sum = 0;
    for (Vec3 p : from.points) sum += tree.nearest2(p);
    return sum / static_cast<double>(from.size());
  };
  return one_way(a, b) + one_way(b, a);
}

// ---------------------------------------------------------------------------
// Loss

struct LossResult {
  double value = 0;
  Logits gradient;  // d value / d logits
};

namespace detail {
// -log softmax(z)[target]; accumulates weight * (softmax - onehot) into grad.
inline double cross_entropy(std::span<const double> z, std::size_t target, double weight, std::span<double> grad) {
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0;
  for (double v : z) sum += std::exp(v - m);
  const double lse = m + std::log(sum);
  if (!grad.empty())
    for (std::size_t k = 0; k < z.size(); ++k) grad[k] += weight * (std::exp(z[k] - lse) - (k == target ? 1.0 : 0.0));
  return lse - z[target];
}
}  // namespace detail

// Sum over ground-truth rows (through EOS) of type cross-entropy plus
// `weight` times the cross-entropy of every parameter slot the row uses.
inline LossResult loss_with_gradient(const Logits& logits, const TokenMatrix& gt,
                                     double weight = kDefaultLossWeight, bool want_gradient = true) {
  check_logits(logits);
  if (gt.rows.size() != kMaxCommands) throw ShapeError("ground truth must have " + std::to_string(kMaxCommands) + " rows");
  LossResult out;
  if (want_gradient) {
    out.gradient.command.assign(logits.command.size(), 0.0);
    out.gradient.param.assign(logits.param.size(), 0.0);
  } else {
    out.gradient.command.clear();
    out.gradient.param.clear();
  }
  const std::size_t n = gt.length();
  for (std::size_t r = 0; r < n; ++r) {
    const TokenRow& row = gt.rows[r];
    if (row.type >= kTypeCount) throw CodeError("ground-truth type index out of range");
    const std::span<const double> z(logits.command.data() + r * kTypeCount, kTypeCount);
    std::span<double> g;
    if (want_gradient) g = std::span<double>(out.gradient.command.data() + r * kTypeCount, kTypeCount);
    out.value += detail::cross_entropy(z, row.type, 1.0, g);
    for (std::size_t s = 0; s < kSlotCount; ++s) {
      if (!uses_slot(row.command_type(), s)) continue;
      const int tok = row.params[s];
      if (tok < 0 || tok > kMaxToken) throw CodeError("ground-truth token out of range");
      const std::size_t off = (r * kSlotCount + s) * kQuantLevels;
      const std::span<const double> zp(logits.param.data() + off, kQuantLevels);
      std::span<double> gp;
      if (want_gradient) gp = std::span<double>(out.gradient.param.data() + off, kQuantLevels);
      out.value += weight * detail::cross_entropy(zp, static_cast<std::size_t>(tok), weight, gp);
    }
  }
  return out;
}

inline double loss(const Logits& logits, const TokenMatrix& gt, double weight = kDefaultLossWeight) {
  return loss_with_gradient(logits, gt, weight, false).value;
}

// ---------------------------------------------------------------------------
// Report

struct MetricReport {
  double cmd_acc = 1.0;
  double param_acc = 1.0;
  double invalid_ratio = 0.0;
  std::optional<double> cd;
  std::optional<double> loss;
  std::size_t sequences = 0;
  std::size_t valid_pairs = 0;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::vector<std::string> errors;
};

inline nlohmann::ordered_json to_json(const MetricReport& r) {
  nlohmann::ordered_json j;
  j["cmd_acc"] = r.cmd_acc;
  j["param_acc"] = r.param_acc;
  j["invalid_ratio"] = r.invalid_ratio;
  j["cd"] = r.cd ? nlohmann::ordered_json(*r.cd) : nlohmann::ordered_json(nullptr);
  j["loss"] = r.loss ? nlohmann::ordered_json(*r.loss) : nlohmann::ordered_json(nullptr);
  j["counts"] = {{"sequences", r.sequences}, {"valid_pairs", r.valid_pairs}};
  j["config"] = r.config;
  j["errors"] = r.errors;
  return j;
}

}  // namespace skex
