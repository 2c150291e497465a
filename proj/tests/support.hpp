#pragma once

// Shared fixtures: hand-built sequences with known geometry.

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "skex/geomkern.hpp"
#include "skex/seqmodel.hpp"

namespace skex::test {

// Unit square chain starting at the sketch origin.
inline void add_square(CadSequence& seq) {
  seq.commands.push_back(Command::sol());
  seq.commands.push_back(Command::line(1, 0));
  seq.commands.push_back(Command::line(1, 1));
  seq.commands.push_back(Command::line(0, 1));
  seq.commands.push_back(Command::line(0, 0));
}

// Axis-aligned extrusion with the sketch origin at o and scale s.
inline ExtrudeParams axis_extrude(Vec3 o, double s, double e1, BooleanOp op = BooleanOp::NewBody,
                                  ExtrudeKind kind = ExtrudeKind::OneSided, double e2 = 0.0) {
  ExtrudeParams e;
  e.px = o.x;
  e.py = o.y;
  e.pz = o.z;
  e.scale = s;
  e.e1 = e1;
  e.e2 = e2;
  e.boolean = op;
  e.kind = kind;
  return e;
}

// The box [o, o + s] x [o, o + s] x [o.z, o.z + h].
inline CadSequence box(Vec3 o = {0, 0, 0}, double s = 1.0, double h = 1.0) {
  CadSequence seq;
  add_square(seq);
  seq.commands.push_back(Command::extrude(axis_extrude(o, s, h)));
  seq.commands.push_back(Command::eos());
  return seq;
}

// Appends a second box combined with `op` before the trailing EOS.
inline CadSequence with_box(CadSequence seq, Vec3 o, double s, double h, BooleanOp op) {
  seq.commands.pop_back();
  add_square(seq);
  seq.commands.push_back(Command::extrude(axis_extrude(o, s, h, op)));
  seq.commands.push_back(Command::eos());
  return seq;
}

inline CadSequence cylinder(double cx = 0.5, double cy = 0.5, double r = 0.25, double h = 0.8) {
  CadSequence seq;
  seq.commands.push_back(Command::sol());
  seq.commands.push_back(Command::circle(cx, cy, r));
  seq.commands.push_back(Command::extrude(axis_extrude({0, 0, 0}, 1.0, h)));
  seq.commands.push_back(Command::eos());
  return seq;
}

// Unit square with a centered circular hole of radius r.
inline CadSequence plate_with_hole(double r = 0.2, double h = 0.5) {
  CadSequence seq;
  add_square(seq);
  seq.commands.push_back(Command::sol());
  seq.commands.push_back(Command::circle(0.5, 0.5, r));
  seq.commands.push_back(Command::extrude(axis_extrude({0, 0, 0}, 1.0, h)));
  seq.commands.push_back(Command::eos());
  return seq;
}

// Fraction of n uniform samples in [lo, hi]^3 inside the model, times the
// box volume.
inline double mc_volume(const SolidModel& m, Vec3 lo, Vec3 hi, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(lo.x, hi.x), uy(lo.y, hi.y), uz(lo.z, hi.z);
  std::size_t inside = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = ux(rng), y = uy(rng), z = uz(rng);
    inside += m.contains({x, y, z});
  }
  return static_cast<double>(inside) / static_cast<double>(n) * (hi.x - lo.x) * (hi.y - lo.y) * (hi.z - lo.z);
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("skex_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

}  // namespace skex::test
