#pragma once

// Software rendering of triangle meshes and Canny-style edge extraction.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "skex/error.hpp"
#include "skex/geomkern.hpp"
#include "skex/vec.hpp"

namespace skex {

inline constexpr int kDefaultImageSize = 512;
inline constexpr double kDefaultBlurSigma = 1.4;
inline constexpr double kDefaultLowThreshold = 0.05;
inline constexpr double kDefaultHighThreshold = 0.15;

struct Camera {
  Vec3 eye{2, 0, 0};
  Vec3 target{0, 0, 0};
  Vec3 up{0, 0, 1};
  double fov_y = 40.0 * kPi / 180.0;  // vertical, radians
  int width = kDefaultImageSize;
  int height = kDefaultImageSize;

  bool operator==(const Camera&) const = default;

  struct Basis {
    Vec3 right, up, forward;
  };

  Basis basis() const {
    const Vec3 f = normalized(target - eye);
    Vec3 r = cross(f, up);
    if (norm(r) < 1e-9) r = cross(f, std::abs(f.y) < 0.9 ? Vec3{0, 1, 0} : Vec3{1, 0, 0});
    r = normalized(r);
    return {r, cross(r, f), f};
  }

  double focal() const { return 0.5 * height / std::tan(0.5 * fov_y); }
};

inline void check_camera(const Camera& c) {
  if (c.eye == c.target) throw ArgumentError("camera eye coincides with look-at point");
  if (!(c.fov_y > 0 && c.fov_y < kPi)) throw ArgumentError("camera field of view must lie in (0, pi)");
  if (c.width <= 0 || c.height <= 0) throw ArgumentError("camera image size must be positive");
}

// Pixel coordinates (origin top-left, x right, y down) and view depth.
struct Projected {
  Vec2 pixel;
  double depth;
};

class Projector {
 public:
  explicit Projector(const Camera& cam) : cam_(cam), basis_(cam.basis()), focal_(cam.focal()) { check_camera(cam); }

  std::optional<Projected> operator()(Vec3 p) const {
    const Vec3 d = p - cam_.eye;
    const double z = dot(d, basis_.forward);
    if (z <= kNear) return std::nullopt;
    return Projected{{0.5 * cam_.width + focal_ * dot(d, basis_.right) / z,
                      0.5 * cam_.height - focal_ * dot(d, basis_.up) / z},
                     z};
  }

  const Camera::Basis& basis() const { return basis_; }

 private:
  static constexpr double kNear = 1e-6;
  Camera cam_;
  Camera::Basis basis_;
  double focal_;
};

inline nlohmann::ordered_json to_json(const Camera& c) {
  auto v = [](Vec3 p) { return nlohmann::ordered_json::array({p.x, p.y, p.z}); };
  return {{"eye", v(c.eye)},     {"look_at", v(c.target)}, {"up", v(c.up)},
          {"fov_y", c.fov_y},    {"width", c.width},       {"height", c.height}};
}

namespace detail {
// Trig values within rounding noise of zero are snapped so views at
// multiples of 90 degrees are exact.
inline double snap(double v) { return std::abs(v) < 1e-12 ? 0.0 : v; }
}  // namespace detail

// Cameras on a sphere around the origin: equally spaced azimuths (starting at
// +x) for each elevation, looking at the origin with +z up.
inline std::vector<Camera> camera_ring(std::size_t n_views, double radius, const std::vector<double>& elevations,
                                       double fov_y = 40.0 * kPi / 180.0, int width = kDefaultImageSize,
                                       int height = kDefaultImageSize) {
  if (elevations.empty() || n_views % elevations.size() != 0)
    throw ArgumentError("view count " + std::to_string(n_views) + " is not divisible by " +
                        std::to_string(elevations.size()) + " elevations");
  if (!(radius > 0)) throw ArgumentError("camera radius must be positive");
  const std::size_t per = n_views / elevations.size();
  std::vector<Camera> cams;
  cams.reserve(n_views);
  for (double e : elevations)
    for (std::size_t k = 0; k < per; ++k) {
      const double a = 2.0 * kPi * static_cast<double>(k) / static_cast<double>(per);
      const double ce = detail::snap(std::cos(e)), se = detail::snap(std::sin(e));
      const double ca = detail::snap(std::cos(a)), sa = detail::snap(std::sin(a));
      Camera c;
      c.eye = {radius * ce * ca, radius * ce * sa, radius * se};
      c.fov_y = fov_y;
      c.width = width;
      c.height = height;
      check_camera(c);
      cams.push_back(c);
    }
  return cams;
}

inline std::vector<double> default_elevations() { return {20.0 * kPi / 180, 40.0 * kPi / 180, 60.0 * kPi / 180}; }

// ---------------------------------------------------------------------------
// Images

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;  // row-major, [0, 1]

  GrayImage() = default;
  GrayImage(int w, int h, float fill = 0.0f) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  float& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const GrayImage&) const = default;
};

struct EdgeMap {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> mask;  // 1 = edge

  EdgeMap() = default;
  EdgeMap(int w, int h) : width(w), height(h), mask(static_cast<std::size_t>(w) * h, 0) {}

  std::uint8_t& at(int x, int y) { return mask[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return mask[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count() const { return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1)); }
  bool operator==(const EdgeMap&) const = default;
};

// Z-buffered flat shading with a headlight: intensity = max(0, n . l) where
// l points from the scene toward the camera. Background is white. Pixel
// centers sit at half-integer coordinates; coverage follows a top-left rule.
inline GrayImage render(const TriangleMesh& mesh, const Camera& cam) {
  const Projector project(cam);
  const Vec3 light = -project.basis().forward;
  GrayImage img(cam.width, cam.height, 1.0f);
  std::vector<double> inv_depth(img.pixels.size(), 0.0);

  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& f = mesh.triangles[t];
    std::array<Projected, 3> p;
    bool visible = true;
    for (int k = 0; k < 3; ++k) {
      const auto q = project(mesh.vertices[f[k]]);
      if (!q) {
        visible = false;
        break;
      }
      p[k] = *q;
    }
    if (!visible) continue;
    const Vec3 nrm = mesh.normal(t);
    const double len = norm(nrm);
    if (len == 0) continue;
    const auto shade = static_cast<float>(std::max(0.0, dot(nrm / len, light)));

    Vec2 a = p[0].pixel, b = p[1].pixel, c = p[2].pixel;
    double za = 1 / p[0].depth, zb = 1 / p[1].depth, zc = 1 / p[2].depth;
    double area = cross(b - a, c - a);
    if (area == 0) continue;
    if (area < 0) {
      std::swap(b, c);
      std::swap(zb, zc);
      area = -area;
    }
    // With y down, a positive-area triangle winds clockwise on screen.
    auto top_left = [](Vec2 from, Vec2 to) {
      const Vec2 e = to - from;
      return (e.y == 0 && e.x > 0) || e.y < 0;
    };
    const bool tl0 = top_left(b, c), tl1 = top_left(c, a), tl2 = top_left(a, b);

    const int x0 = std::max(0, static_cast<int>(std::floor(std::min({a.x, b.x, c.x}))));
    const int x1 = std::min(cam.width - 1, static_cast<int>(std::ceil(std::max({a.x, b.x, c.x}))));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min({a.y, b.y, c.y}))));
    const int y1 = std::min(cam.height - 1, static_cast<int>(std::ceil(std::max({a.y, b.y, c.y}))));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const Vec2 q{x + 0.5, y + 0.5};
        const double w0 = cross(c - b, q - b), w1 = cross(a - c, q - c), w2 = cross(b - a, q - a);
        if (w0 < 0 || w1 < 0 || w2 < 0) continue;
        if ((w0 == 0 && !tl0) || (w1 == 0 && !tl1) || (w2 == 0 && !tl2)) continue;
        const double iz = (w0 * za + w1 * zb + w2 * zc) / area;
        const std::size_t idx = static_cast<std::size_t>(y) * cam.width + x;
        if (iz > inv_depth[idx]) {
          inv_depth[idx] = iz;
          img.pixels[idx] = shade;
        }
      }
  }
  return img;
}

// ---------------------------------------------------------------------------
// Edge extraction

namespace detail {

// Symmetric reflection about the image border (-1 -> 0, n -> n-1).
inline int mirror(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

}  // namespace detail

inline GrayImage gaussian_blur(const GrayImage& img, double sigma) {
  if (sigma <= 0) return img;
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * r + 1);
  double sum = 0;
  for (int i = -r; i <= r; ++i) sum += k[i + r] = std::exp(-(i * i) / (2 * sigma * sigma));
  for (double& w : k) w /= sum;

  GrayImage tmp(img.width, img.height), out(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double acc = 0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * img.at(detail::mirror(x + i, img.width), y);
      tmp.at(x, y) = static_cast<float>(acc);
    }
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double acc = 0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp.at(x, detail::mirror(y + i, img.height));
      out.at(x, y) = static_cast<float>(acc);
    }
  return out;
}

struct Gradient {
  int width = 0;
  int height = 0;
  std::vector<double> gx, gy, magnitude;
};

// Sobel derivatives divided by 8, so a unit ramp has unit slope.
inline Gradient sobel(const GrayImage& img) {
  Gradient g{img.width, img.height, {}, {}, {}};
  const std::size_t n = img.pixels.size();
  g.gx.resize(n);
  g.gy.resize(n);
  g.magnitude.resize(n);
  auto px = [&](int x, int y) -> double {
    return img.at(detail::mirror(x, img.width), detail::mirror(y, img.height));
  };
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const double dx = (px(x + 1, y - 1) + 2 * px(x + 1, y) + px(x + 1, y + 1)) -
                        (px(x - 1, y - 1) + 2 * px(x - 1, y) + px(x - 1, y + 1));
      const double dy = (px(x - 1, y + 1) + 2 * px(x, y + 1) + px(x + 1, y + 1)) -
                        (px(x - 1, y - 1) + 2 * px(x, y - 1) + px(x + 1, y - 1));
      const std::size_t i = static_cast<std::size_t>(y) * img.width + x;
      g.gx[i] = dx / 8;
      g.gy[i] = dy / 8;
      g.magnitude[i] = std::hypot(g.gx[i], g.gy[i]);
    }
  return g;
}

// Thin to local maxima along the gradient direction quantized to 0, 45, 90
// or 135 degrees. Plateaus of width two keep only their far pixel.
inline EdgeMap non_max_suppression(const Gradient& g) {
  EdgeMap out(g.width, g.height);
  auto mag = [&](int x, int y) {
    if (x < 0 || y < 0 || x >= g.width || y >= g.height) return 0.0;
    return g.magnitude[static_cast<std::size_t>(y) * g.width + x];
  };
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * g.width + x;
      const double m = g.magnitude[i];
      if (m <= 0) continue;
      double angle = std::atan2(g.gy[i], g.gx[i]) * 180.0 / kPi;
      if (angle < 0) angle += 180.0;
      int dx, dy;
      if (angle < 22.5 || angle >= 157.5) {
        dx = 1, dy = 0;
      } else if (angle < 67.5) {
        dx = 1, dy = 1;
      } else if (angle < 112.5) {
        dx = 0, dy = 1;
      } else {
        dx = -1, dy = 1;
      }
      if (m > mag(x + dx, y + dy) && m >= mag(x - dx, y - dy)) out.mask[i] = 1;
    }
  return out;
}

// Strong pixels (>= high) seed; weak candidates (>= low) survive when
// 8-connected to a seed through other candidates.
inline EdgeMap hysteresis(const Gradient& g, const EdgeMap& thin, double t_low, double t_high) {
  EdgeMap out(g.width, g.height);
  std::deque<std::pair<int, int>> queue;
  auto candidate = [&](std::size_t i) { return thin.mask[i] && g.magnitude[i] >= t_low; };
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * g.width + x;
      if (thin.mask[i] && g.magnitude[i] >= t_high) {
        out.mask[i] = 1;
        queue.emplace_back(x, y);
      }
    }
  while (!queue.empty()) {
    const auto [x, y] = queue.front();
    queue.pop_front();
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int nx = x + dx, ny = y + dy;
        if (nx < 0 || ny < 0 || nx >= g.width || ny >= g.height) continue;
        const std::size_t j = static_cast<std::size_t>(ny) * g.width + nx;
        if (!out.mask[j] && candidate(j)) {
          out.mask[j] = 1;
          queue.emplace_back(nx, ny);
        }
      }
  }
  return out;
}

inline EdgeMap edge_map(const GrayImage& img, double sigma = kDefaultBlurSigma, double t_low = kDefaultLowThreshold,
                        double t_high = kDefaultHighThreshold) {
  if (!(t_low > 0 && t_low <= t_high))
    throw ArgumentError("edge thresholds must satisfy 0 < low <= high");
  const Gradient g = sobel(gaussian_blur(img, sigma));
  return hysteresis(g, non_max_suppression(g), t_low, t_high);
}

}  // namespace skex
