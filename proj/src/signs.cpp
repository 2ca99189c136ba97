#include "rp2/signs.hpp"

#include <cmath>
#include <numbers>

#include "rp2/error.hpp"
#include "rp2/rng.hpp"

namespace rp2 {
namespace {

constexpr Rgb kRed{0.80f, 0.08f, 0.10f};
constexpr Rgb kWhite{0.95f, 0.95f, 0.95f};
constexpr Rgb kBlack{0.06f, 0.06f, 0.06f};
constexpr Rgb kBlue{0.08f, 0.25f, 0.75f};
constexpr Rgb kYellow{0.95f, 0.80f, 0.10f};

constexpr double kBorderShrink = 0.82;

std::vector<SignClassSpec> make_reference_classes() {
  return {
      {0, "stop", SignShape::octagon, kRed, Glyph::bar1, kWhite},
      {1, "yield", SignShape::triangle, kWhite, Glyph::none, kRed},
      {2, "speed-limit-25", SignShape::square, kWhite, Glyph::bar2, kBlack},
      {3, "speed-limit-45", SignShape::square, kWhite, Glyph::bar3, kBlack},
      {4, "turn-right", SignShape::circle, kBlue, Glyph::arrow, kWhite},
      {5, "no-entry", SignShape::circle, kRed, Glyph::cross, kWhite},
      {6, "warning", SignShape::diamond, kYellow, Glyph::none, kBlack},
      {7, "added-lane", SignShape::diamond, kYellow, Glyph::arrow, kBlack},
  };
}

bool inside_convex(const std::vector<Point2>& poly, double u, double v) {
  // Outlines are listed clockwise in a y-down frame, so interior points give positive cross products.
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Point2& a = poly[i];
    const Point2& b = poly[(i + 1) % poly.size()];
    if ((b.x - a.x) * (v - a.y) - (b.y - a.y) * (u - a.x) < 0.0) return false;
  }
  return true;
}

Point2 centroid(const std::vector<Point2>& poly) {
  Point2 c;
  for (const Point2& p : poly) {
    c.x += p.x;
    c.y += p.y;
  }
  c.x /= static_cast<double>(poly.size());
  c.y /= static_cast<double>(poly.size());
  return c;
}

bool in_box(double u, double v, double cx, double cy, double hw, double hh) {
  return std::abs(u - cx) <= hw && std::abs(v - cy) <= hh;
}

bool in_glyph(Glyph glyph, double u, double v) {
  switch (glyph) {
    case Glyph::none:
      return false;
    case Glyph::bar1:
      return in_box(u, v, 0, 0, 0.55, 0.14);
    case Glyph::bar2:
      return in_box(u, v, 0, -0.24, 0.45, 0.12) || in_box(u, v, 0, 0.24, 0.45, 0.12);
    case Glyph::bar3:
      return in_box(u, v, 0, -0.40, 0.45, 0.10) || in_box(u, v, 0, 0, 0.45, 0.10) ||
             in_box(u, v, 0, 0.40, 0.45, 0.10);
    case Glyph::arrow: {
      if (in_box(u, v, -0.15, 0, 0.33, 0.10)) return true;
      // Head: triangle (0.15,-0.33) (0.55,0) (0.15,0.33).
      if (u < 0.15 || u > 0.55) return false;
      return std::abs(v) <= 0.33 * (0.55 - u) / 0.40;
    }
    case Glyph::cross:
      return in_box(u, v, 0, 0, 0.12, 0.48) || in_box(u, v, 0, 0, 0.48, 0.12);
  }
  return false;
}

float luminance_distance(const Rgb& a, const Rgb& b) {
  return std::abs(a.r - b.r) + std::abs(a.g - b.g) + std::abs(a.b - b.b);
}

}  // namespace

const std::vector<SignClassSpec>& reference_sign_classes() {
  static const std::vector<SignClassSpec> classes = make_reference_classes();
  return classes;
}

const SignClassSpec& reference_sign_class(int class_id) {
  const auto& classes = reference_sign_classes();
  if (class_id < 0 || class_id >= static_cast<int>(classes.size())) {
    throw ValidationError("class id " + std::to_string(class_id) + " outside [0," + std::to_string(classes.size()) +
                          ")");
  }
  return classes[static_cast<std::size_t>(class_id)];
}

std::vector<Point2> sign_outline(SignShape shape) {
  switch (shape) {
    case SignShape::octagon: {
      std::vector<Point2> pts;
      for (int k = 0; k < 8; ++k) {
        const double a = (-112.5 + 45.0 * k) * std::numbers::pi / 180.0;
        pts.push_back({0.95 * std::cos(a), 0.95 * std::sin(a)});
      }
      return pts;
    }
    case SignShape::triangle:
      return {{-0.95, -0.80}, {0.95, -0.80}, {0.0, 0.88}};
    case SignShape::diamond:
      return {{0.0, -0.95}, {0.95, 0.0}, {0.0, 0.95}, {-0.95, 0.0}};
    case SignShape::square:
      return {{-0.85, -0.85}, {0.85, -0.85}, {0.85, 0.85}, {-0.85, 0.85}};
    case SignShape::circle:
      return {};
  }
  return {};
}

SignRegion sign_region(const SignClassSpec& spec, double u, double v) {
  double gu = u, gv = v;
  if (spec.shape == SignShape::circle) {
    const double r = std::hypot(u, v);
    if (r > kCircleRadius) return SignRegion::outside;
    if (r > kCircleRadius * kBorderShrink) return SignRegion::border;
  } else {
    const std::vector<Point2> outline = sign_outline(spec.shape);
    if (!inside_convex(outline, u, v)) return SignRegion::outside;
    const Point2 c = centroid(outline);
    // Interior outline is the outer one scaled about its centroid.
    const double su = c.x + (u - c.x) / kBorderShrink;
    const double sv = c.y + (v - c.y) / kBorderShrink;
    if (!inside_convex(outline, su, sv)) return SignRegion::border;
    gu = u - c.x;
    gv = v - c.y;
  }
  return in_glyph(spec.glyph, gu, gv) ? SignRegion::glyph : SignRegion::fill;
}

Rgb render_background(const SignClassSpec& spec, std::uint64_t seed) {
  Rng rng = make_rng(seed, "signs.background");
  for (;;) {
    const Rgb c{static_cast<float>(uniform(rng, 0, 1)), static_cast<float>(uniform(rng, 0, 1)),
                static_cast<float>(uniform(rng, 0, 1))};
    if (luminance_distance(c, spec.fill_color) > 0.45f && luminance_distance(c, spec.border_color) > 0.45f) return c;
  }
}

Tensor render_sign(const SignClassSpec& spec, int side, std::uint64_t seed) {
  if (side < 32) throw ValidationError("render_sign requires side >= 32, got " + std::to_string(side));
  const Rgb bg = render_background(spec, seed);
  const Rgb palette[4] = {bg, spec.border_color, spec.fill_color, spec.border_color};
  constexpr int kSub = 4;
  Tensor out({side, side, 3});
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      int counts[4] = {0, 0, 0, 0};
      for (int sy = 0; sy < kSub; ++sy) {
        for (int sx = 0; sx < kSub; ++sx) {
          const double u = 2.0 * (x + (sx + 0.5) / kSub) / side - 1.0;
          const double v = 2.0 * (y + (sy + 0.5) / kSub) / side - 1.0;
          ++counts[static_cast<int>(sign_region(spec, u, v))];
        }
      }
      float* px = out.data() + (static_cast<std::size_t>(y) * side + x) * 3;
      for (int r = 0; r < 4; ++r) {
        if (counts[r] == kSub * kSub) {
          px[0] = palette[r].r;
          px[1] = palette[r].g;
          px[2] = palette[r].b;
          break;
        }
        const float w = static_cast<float>(counts[r]) / (kSub * kSub);
        px[0] += w * palette[r].r;
        px[1] += w * palette[r].g;
        px[2] += w * palette[r].b;
      }
    }
  }
  return out;
}

Tensor sign_surface_mask(const SignClassSpec& spec, int side) {
  Tensor mask({side, side});
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      const double u = 2.0 * (x + 0.5) / side - 1.0;
      const double v = 2.0 * (y + 0.5) / side - 1.0;
      mask.at({y, x}) = sign_region(spec, u, v) == SignRegion::outside ? 0.0f : 1.0f;
    }
  }
  return mask;
}

}  // namespace rp2
