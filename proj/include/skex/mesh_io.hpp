#pragma once

#include <cstdint>
#include <cstring>
#include <iomanip>
#include <ostream>

#include "skex/error.hpp"
#include "skex/geomkern.hpp"

namespace skex {

inline void write_obj(std::ostream& os, const TriangleMesh& mesh) {
  os << std::setprecision(17);
  for (Vec3 v : mesh.vertices) os << "v " << v.x << ' ' << v.y << ' ' << v.z << '\n';
  for (const auto& f : mesh.triangles) os << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  if (!os) throw IoError("failed to write OBJ");
}

// Binary STL: 80-byte header, u32 count, then per facet normal, three
// vertices (f32 little-endian) and a u16 attribute.
inline void write_stl(std::ostream& os, const TriangleMesh& mesh) {
  static_assert(sizeof(float) == 4);
  auto put32 = [&](std::uint32_t v) {
    const char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8), static_cast<char>(v >> 16),
                       static_cast<char>(v >> 24)};
    os.write(b, 4);
  };
  auto putf = [&](double d) {
    const float f = static_cast<float>(d);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put32(bits);
  };
  auto putv = [&](Vec3 v) {
    putf(v.x);
    putf(v.y);
    putf(v.z);
  };
  char header[80] = "skex binary STL";
  os.write(header, sizeof header);
  put32(static_cast<std::uint32_t>(mesh.triangles.size()));
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const Vec3 n = mesh.normal(t);
    const double len = norm(n);
    putv(len > 0 ? n / len : Vec3{});
    for (auto i : mesh.triangles[t]) putv(mesh.vertices[i]);
    os.write("\0\0", 2);
  }
  if (!os) throw IoError("failed to write STL");
}

// One "x y z" line per point.
inline void write_xyz(std::ostream& os, const PointCloud& pc) {
  os << std::setprecision(17);
  for (Vec3 p : pc.points) os << p.x << ' ' << p.y << ' ' << p.z << '\n';
  if (!os) throw IoError("failed to write point cloud");
}

}  // namespace skex
