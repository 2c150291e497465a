#pragma once

// Random valid sketch-and-extrude sequences. Every returned sequence
// validates, executes, meshes and has a non-empty surviving surface.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "skex/error.hpp"
#include "skex/geomkern.hpp"
#include "skex/seqmodel.hpp"

namespace skex {

struct GeneratorOptions {
  // Place every continuous value on the 256-level token grid, so that
  // quantization is lossless.
  bool snap_to_grid = true;
  int max_bodies = 4;
  int max_attempts = 1000;
};

class SequenceGenerator {
 public:
  explicit SequenceGenerator(std::uint64_t seed, GeneratorOptions opt = {}) : rng_(seed), opt_(opt) {}

  CadSequence operator()() {
    for (int attempt = 0; attempt < opt_.max_attempts; ++attempt) {
      CadSequence seq = draw();
      if (acceptable(seq)) return seq;
    }
    throw Error("sequence generator exhausted its attempt budget");
  }

  // Structurally valid draw without the geometric post-check.
  CadSequence draw() {
    CadSequence seq;
    const int bodies = pick(1, opt_.max_bodies);
    ExtrudeParams first;
    for (int b = 0; b < bodies; ++b) {
      add_sketch(seq);
      ExtrudeParams e = extrude_params(b, first);
      if (b == 0) first = e;
      seq.commands.push_back(Command::extrude(e));
    }
    seq.commands.push_back(Command::eos());
    return seq;
  }

 private:
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  int pick(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool chance(double p) { return uniform(0, 1) < p; }

  double value(double lo, double hi) {
    const double v = uniform(lo, hi);
    return opt_.snap_to_grid ? std::round(v * kMaxToken) / kMaxToken : v;
  }

  // Convex outline starting and ending at the sketch origin, counter-
  // clockwise; some edges bulge outward as arcs.
  void add_sketch(CadSequence& seq) {
    auto& out = seq.commands;
    out.push_back(Command::sol());
    const int curves = pick(1, 4);
    if (curves == 1) {
      out.push_back(Command::circle(value(0.3, 0.7), value(0.3, 0.7), value(0.1, 0.3)));
      return;
    }
    const double w = value(0.2, 0.9), h = value(0.2, 0.9);
    std::vector<Vec2> verts;
    if (curves == 2) {
      verts = {{w, 0}};
    } else if (curves == 3) {
      verts = {{w, 0}, {value(0.0, w), h}};
    } else {
      verts = {{w, 0}, {w, h}, {0, h}};
    }
    verts.push_back({0, 0});
    for (std::size_t i = 0; i < verts.size(); ++i) {
      const bool closing_of_two = curves == 2 && i == 1;
      if (closing_of_two)
        out.push_back(Command::arc(verts[i].x, verts[i].y, value(0.15, 0.45), true));
      else if (chance(0.25))
        out.push_back(Command::arc(verts[i].x, verts[i].y, value(0.03, 0.2), true));
      else
        out.push_back(Command::line(verts[i].x, verts[i].y));
    }
    if (curves == 4 && chance(0.3)) {
      out.push_back(Command::sol());
      out.push_back(Command::circle(value(0.45 * w, 0.55 * w), value(0.45 * h, 0.55 * h),
                                    value(0.1 * std::min(w, h), 0.25 * std::min(w, h))));
    }
  }

  ExtrudeParams extrude_params(int body, const ExtrudeParams& first) {
    ExtrudeParams e;
    if (body > 0 && chance(0.6)) {
      e.theta = first.theta;
      e.phi = first.phi;
      e.gamma = first.gamma;
    } else if (chance(0.5)) {
      e.theta = value(0, 1) < 0.5 ? 0.0 : value(0.5, 0.5);
      e.phi = value(0, 1) < 0.5 ? 0.0 : value(0.25, 0.25);
      e.gamma = 0.0;
    } else {
      e.theta = value(0, 1);
      e.phi = value(0, 1);
      e.gamma = value(0, 1);
    }
    if (body == 0) {
      e.px = value(0.3, 0.7);
      e.py = value(0.3, 0.7);
      e.pz = value(0.3, 0.7);
    } else {
      e.px = value(std::max(0.0, first.px - 0.15), std::min(1.0, first.px + 0.15));
      e.py = value(std::max(0.0, first.py - 0.15), std::min(1.0, first.py + 0.15));
      e.pz = value(std::max(0.0, first.pz - 0.15), std::min(1.0, first.pz + 0.15));
    }
    e.scale = value(0.4, 1.0);
    e.kind = static_cast<ExtrudeKind>(pick(0, 2));
    e.e1 = value(0.1, 0.6);
    e.e2 = e.kind == ExtrudeKind::TwoSided ? value(0.1, 0.5) : 0.0;
    if (body == 0) {
      e.boolean = BooleanOp::NewBody;
    } else {
      const double r = uniform(0, 1);
      e.boolean = r < 0.5 ? BooleanOp::Join : r < 0.75 ? BooleanOp::Cut : r < 0.85 ? BooleanOp::Intersect
                                                                                    : BooleanOp::NewBody;
    }
    return e;
  }

  bool acceptable(const CadSequence& seq) {
    try {
      if (!validate(seq).valid()) return false;
      const SolidModel model = execute(seq);
      if (export_mesh(model).empty()) return false;
      SampleOptions so;
      so.empty_budget = 4000;
      so.candidates_per_point = 200;
      sample_surface(model, 32, 0, so);
      return true;
    } catch (const Error&) {
      return false;
    }
  }

  std::mt19937_64 rng_;
  GeneratorOptions opt_;
};

}  // namespace skex
