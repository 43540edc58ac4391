// Procedural digit and scribble images: stroke skeletons in a unit box,
// jittered by a random affine map and rasterized with soft edges.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "pfcl/errors.hpp"
#include "pfcl/tasks.hpp"

namespace pfcl {

namespace {

struct Point {
  double x, y;
};
using Polyline = std::vector<Point>;
using Glyph = std::vector<Polyline>;

Polyline ellipse(double cx, double cy, double rx, double ry, int segments = 14) {
  Polyline p;
  for (int i = 0; i <= segments; ++i) {
    const double a = 2.0 * std::numbers::pi * i / segments;
    p.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
  }
  return p;
}

const std::array<Glyph, 10>& digit_skeletons() {
  static const std::array<Glyph, 10> glyphs = {
      Glyph{ellipse(0.5, 0.5, 0.33, 0.45)},
      Glyph{{{0.3, 0.25}, {0.55, 0.05}, {0.55, 0.95}}},
      Glyph{{{0.15, 0.25}, {0.3, 0.07}, {0.7, 0.07}, {0.85, 0.28}, {0.15, 0.93}, {0.88, 0.93}}},
      Glyph{{{0.15, 0.1}, {0.85, 0.1}, {0.45, 0.45}, {0.85, 0.65}, {0.7, 0.92}, {0.15, 0.88}}},
      Glyph{{{0.7, 0.95}, {0.7, 0.05}, {0.1, 0.65}, {0.9, 0.65}}},
      Glyph{{{0.85, 0.05}, {0.2, 0.05}, {0.15, 0.45}, {0.7, 0.42}, {0.85, 0.7}, {0.65, 0.95}, {0.15, 0.9}}},
      Glyph{{{0.75, 0.05}, {0.3, 0.35}, {0.15, 0.7}, {0.35, 0.95}, {0.7, 0.92}, {0.85, 0.7}, {0.6, 0.5}, {0.22, 0.6}}},
      Glyph{{{0.1, 0.05}, {0.9, 0.05}, {0.4, 0.95}}},
      Glyph{ellipse(0.5, 0.27, 0.27, 0.22), ellipse(0.5, 0.72, 0.33, 0.24)},
      Glyph{ellipse(0.5, 0.3, 0.3, 0.25), {{0.8, 0.3}, {0.6, 0.95}}},
  };
  return glyphs;
}

double segment_distance(Point p, Point a, Point b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0.0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = p.x - (a.x + t * vx), dy = p.y - (a.y + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

// Writes a side x side raster of `glyph` into `out` under a random affine jitter.
void render(const Glyph& glyph, std::size_t side, Rng& rng, std::span<double> out) {
  const double s = static_cast<double>(side);
  const double pad = std::max(1.0, s * 0.18);
  const double box = s - 2.0 * pad;
  const double scale = rng.uniform(0.8, 1.05);
  const double shear = rng.uniform(-0.2, 0.2);
  const double spin = rng.uniform(-0.12, 0.12);
  const double tx = rng.uniform(-0.06, 0.06) * box;
  const double ty = rng.uniform(-0.06, 0.06) * box;
  const double width = rng.uniform(0.9, 1.6) * s / 16.0;
  const double cs = std::cos(spin), sn = std::sin(spin);

  std::vector<std::pair<Point, Point>> segments;
  for (const auto& line : glyph) {
    std::vector<Point> mapped;
    for (auto p : line) {
      const double ux = (p.x - 0.5) * scale + shear * (p.y - 0.5);
      const double uy = (p.y - 0.5) * scale;
      const double rx = cs * ux - sn * uy;
      const double ry = sn * ux + cs * uy;
      mapped.push_back({pad + (rx + 0.5) * box + tx, pad + (ry + 0.5) * box + ty});
    }
    for (std::size_t i = 0; i + 1 < mapped.size(); ++i) segments.emplace_back(mapped[i], mapped[i + 1]);
  }
  for (std::size_t r = 0; r < side; ++r) {
    for (std::size_t c = 0; c < side; ++c) {
      const Point p{static_cast<double>(c), static_cast<double>(r)};
      double d = 1e9;
      for (const auto& [a, b] : segments) d = std::min(d, segment_distance(p, a, b));
      double v = std::clamp(1.0 + width / 2.0 - d, 0.0, 1.0);
      v = std::clamp(v + 0.04 * rng.normal(), 0.0, 1.0);
      out[r * side + c] = v;
    }
  }
}

}  // namespace

Dataset make_glyph_digits(std::size_t per_class, std::size_t side, Rng& rng) {
  if (per_class < 2) throw DomainError("need at least 2 samples per class");
  if (side < 8) throw DomainError("glyph side must be >= 8");
  const auto& glyphs = digit_skeletons();
  Dataset d;
  d.class_count = glyphs.size();
  d.image_rows = side;
  d.image_cols = side;
  d.x = Matrix(glyphs.size() * per_class, side * side);
  for (std::size_t c = 0; c < glyphs.size(); ++c) {
    for (std::size_t k = 0; k < per_class; ++k) {
      render(glyphs[c], side, rng, d.x.row(c * per_class + k));
      d.y.push_back(static_cast<int>(c));
    }
  }
  return d;
}

AuxiliaryPool make_scribble_pool(std::size_t size, std::size_t side, Rng& rng) {
  if (size == 0) throw DomainError("auxiliary pool size must be >= 1");
  if (side < 8) throw DomainError("scribble side must be >= 8");
  AuxiliaryPool pool;
  pool.source_tag = "scribble-pool";
  pool.x = Matrix(size, side * side);
  for (std::size_t i = 0; i < size; ++i) {
    Glyph g;
    const auto strokes = 1 + rng.below(2);
    for (std::uint64_t s = 0; s < strokes; ++s) {
      Polyline line;
      const auto points = 2 + rng.below(3);
      for (std::uint64_t p = 0; p < points; ++p) line.push_back({rng.uniform(), rng.uniform()});
      g.push_back(std::move(line));
    }
    render(g, side, rng, pool.x.row(i));
  }
  return pool;
}

}  // namespace pfcl
