#pragma once

#include <algorithm>
#include <array>
#include <type_traits>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "pedit/image.hpp"

namespace pedit::draw {

// Shapes live in continuous pixel coordinates where pixel (x, y) covers
// [x, x+1) x [y, y+1); a pixel is hit when its centre (or, with
// supersampling, a sub-sample) lies inside the shape.

struct Bounds {
  double x0, y0, x1, y1;
};

/// Paints `color` over every pixel of `img` inside `bounds` whose sample
/// points satisfy `inside`. With supersample > 1 the colour is blended by
/// the covered fraction of an s x s sub-grid.
template <typename T, typename Inside>
void fill_shape(Image<T>& img, Bounds bounds, Inside&& inside, std::span<const T> color, int supersample = 1) {
  const int xa = std::max(0, static_cast<int>(std::floor(bounds.x0)) - 1);
  const int ya = std::max(0, static_cast<int>(std::floor(bounds.y0)) - 1);
  const int xb = std::min(img.width() - 1, static_cast<int>(std::ceil(bounds.x1)) + 1);
  const int yb = std::min(img.height() - 1, static_cast<int>(std::ceil(bounds.y1)) + 1);
  const int ss = std::max(1, supersample);
  const double step = 1.0 / ss;
  for (int y = ya; y <= yb; ++y) {
    for (int x = xa; x <= xb; ++x) {
      int hits = 0;
      for (int sy = 0; sy < ss; ++sy) {
        for (int sx = 0; sx < ss; ++sx) {
          if (inside(x + (sx + 0.5) * step, y + (sy + 0.5) * step)) ++hits;
        }
      }
      if (hits == 0) continue;
      T* p = img.pixel(y, x);
      if (hits == ss * ss) {
        for (int c = 0; c < img.channels(); ++c) p[c] = color[static_cast<std::size_t>(c)];
      } else {
        const double a = static_cast<double>(hits) / (ss * ss);
        for (int c = 0; c < img.channels(); ++c) {
          const double v = a * static_cast<double>(color[static_cast<std::size_t>(c)]) + (1.0 - a) * static_cast<double>(p[c]);
          if constexpr (std::is_integral_v<T>) {
            p[c] = static_cast<T>(std::lround(v));
          } else {
            p[c] = static_cast<T>(v);
          }
        }
      }
    }
  }
}

inline double segment_distance_sq(double px, double py, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  const Eigen::Vector2d ab = b - a;
  const Eigen::Vector2d ap(px - a.x(), py - a.y());
  const double len2 = ab.squaredNorm();
  double t = len2 > 0.0 ? ap.dot(ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return (ap - t * ab).squaredNorm();
}

/// Segment thickened to a capsule of the given radius.
template <typename T>
void capsule(Image<T>& img, const Eigen::Vector2d& a, const Eigen::Vector2d& b, double radius,
             std::span<const T> color, int supersample = 1) {
  const double r2 = radius * radius;
  const Bounds bb{std::min(a.x(), b.x()) - radius, std::min(a.y(), b.y()) - radius,
                  std::max(a.x(), b.x()) + radius, std::max(a.y(), b.y()) + radius};
  fill_shape(img, bb, [&](double x, double y) { return segment_distance_sq(x, y, a, b) <= r2; }, color,
             supersample);
}

template <typename T>
void disc(Image<T>& img, const Eigen::Vector2d& c, double radius, std::span<const T> color, int supersample = 1) {
  const double r2 = radius * radius;
  const Bounds bb{c.x() - radius, c.y() - radius, c.x() + radius, c.y() + radius};
  fill_shape(img, bb, [&](double x, double y) { return (Eigen::Vector2d(x, y) - c).squaredNorm() <= r2; },
             color, supersample);
}

/// Even-odd fill of a simple polygon.
template <typename T>
void polygon(Image<T>& img, const std::vector<Eigen::Vector2d>& pts, std::span<const T> color, int supersample = 1) {
  if (pts.size() < 3) return;
  Bounds bb{pts[0].x(), pts[0].y(), pts[0].x(), pts[0].y()};
  for (const auto& p : pts) {
    bb.x0 = std::min(bb.x0, p.x());
    bb.y0 = std::min(bb.y0, p.y());
    bb.x1 = std::max(bb.x1, p.x());
    bb.y1 = std::max(bb.y1, p.y());
  }
  fill_shape(img, bb, [&](double x, double y) {
    bool in = false;
    for (std::size_t i = 0, j = pts.size() - 1; i < pts.size(); j = i++) {
      const auto& pi = pts[i];
      const auto& pj = pts[j];
      if ((pi.y() > y) != (pj.y() > y) && x < (pj.x() - pi.x()) * (y - pi.y()) / (pj.y() - pi.y()) + pi.x()) {
        in = !in;
      }
    }
    return in;
  }, color, supersample);
}

inline std::array<std::uint8_t, 3> rgb(Rgb c) { return {c.r, c.g, c.b}; }

}  // namespace pedit::draw
