#pragma once

// Independent reference implementations used as test oracles. None of these
// call into the library code they check.

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "groundslam/features.hpp"
#include "groundslam/geometry.hpp"

namespace test {

using groundslam::GroundPoint;

inline std::vector<GroundPoint> square(double x0, double y0, double side) {
  return {{x0, y0}, {x0 + side, y0}, {x0 + side, y0 + side}, {x0, y0 + side}};
}

/// One point per quadrant of a random tilted ellipse: convex, CCW, no slivers.
/// Centres within +-centre_spread of the origin, so pairs with the default
/// spread always overlap.
inline std::vector<GroundPoint> random_convex_quad(std::mt19937_64& rng, double centre_spread = 0.3) {
  std::uniform_real_distribution<double> c(-centre_spread, centre_spread);
  std::uniform_real_distribution<double> axis(0.4, 1.0);
  std::uniform_real_distribution<double> ang(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> jitter(0.1, 0.4);
  const double cx = c(rng), cy = c(rng), rx = axis(rng), ry = axis(rng), tilt = ang(rng);
  std::vector<GroundPoint> q;
  for (int k = 0; k < 4; ++k) {
    const double a = (k + 2.5 * jitter(rng)) * std::numbers::pi / 2.0;
    const double ex = rx * std::cos(a), ey = ry * std::sin(a);
    q.emplace_back(cx + ex * std::cos(tilt) - ey * std::sin(tilt),
                   cy + ex * std::sin(tilt) + ey * std::cos(tilt));
  }
  return q;
}

/// Convex CCW polygon containment by edge cross products.
inline bool inside_convex(const std::vector<GroundPoint>& poly, const GroundPoint& p) {
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const GroundPoint& a = poly[i];
    const GroundPoint& b = poly[(i + 1) % poly.size()];
    const double cross = (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
    if (cross < 0.0) return false;
  }
  return true;
}

struct Box {
  double x0, y0, x1, y1;
  double area() const { return (x1 - x0) * (y1 - y0); }
};

inline Box bounds(const std::vector<GroundPoint>& poly) {
  Box b{poly[0].x(), poly[0].y(), poly[0].x(), poly[0].y()};
  for (const auto& p : poly) {
    b.x0 = std::min(b.x0, p.x());
    b.y0 = std::min(b.y0, p.y());
    b.x1 = std::max(b.x1, p.x());
    b.y1 = std::max(b.y1, p.y());
  }
  return b;
}

inline double bounding_box_area(const std::vector<GroundPoint>& poly) { return bounds(poly).area(); }

/// Area of a ∩ b by uniform sampling of the overlap of the two bounding boxes.
inline double monte_carlo_intersection(const std::vector<GroundPoint>& a,
                                       const std::vector<GroundPoint>& b, int samples,
                                       std::uint64_t seed) {
  const Box ba = bounds(a), bb = bounds(b);
  Box box{std::max(ba.x0, bb.x0), std::max(ba.y0, bb.y0), std::min(ba.x1, bb.x1), std::min(ba.y1, bb.y1)};
  if (box.x1 <= box.x0 || box.y1 <= box.y0) return 0.0;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(box.x0, box.x1), uy(box.y0, box.y1);
  long hits = 0;
  for (int i = 0; i < samples; ++i) {
    const GroundPoint p(ux(rng), uy(rng));
    if (inside_convex(a, p) && inside_convex(b, p)) ++hits;
  }
  return box.area() * static_cast<double>(hits) / samples;
}

inline int popcount_distance(const groundslam::Descriptor& a, const groundslam::Descriptor& b) {
  int d = 0;
  for (int w = 0; w < 4; ++w) d += std::popcount(a.bits[w] ^ b.bits[w]);
  return d;
}

/// Exhaustive mutual-nearest-neighbour + ratio matcher.
inline std::vector<groundslam::Match> brute_force_match(
    const std::vector<groundslam::Descriptor>& a, const std::vector<groundslam::Descriptor>& b,
    int max_distance, double ratio) {
  auto best_two = [](const std::vector<groundslam::Descriptor>& from,
                     const std::vector<groundslam::Descriptor>& to, std::size_t i) {
    int best = 1 << 20, second = 1 << 20, arg = -1;
    for (std::size_t j = 0; j < to.size(); ++j) {
      const int d = popcount_distance(from[i], to[j]);
      if (d < best) {
        second = best;
        best = d;
        arg = static_cast<int>(j);
      } else if (d < second) {
        second = d;
      }
    }
    return std::array<int, 3>{arg, best, second};
  };
  auto passes = [&](const std::array<int, 3>& r) {
    if (r[0] < 0 || r[1] > max_distance) return false;
    return r[2] >= (1 << 20) || r[1] < ratio * r[2];
  };
  std::vector<groundslam::Match> out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto fwd = best_two(a, b, i);
    if (!passes(fwd)) continue;
    const auto back = best_two(b, a, static_cast<std::size_t>(fwd[0]));
    if (!passes(back) || back[0] != static_cast<int>(i)) continue;
    out.push_back({static_cast<int>(i), fwd[0], fwd[1]});
  }
  return out;
}

inline groundslam::Descriptor random_descriptor(std::mt19937_64& rng) {
  groundslam::Descriptor d;
  for (auto& w : d.bits) w = rng();
  return d;
}

}  // namespace test
