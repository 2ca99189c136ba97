#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rp2/geometry.hpp"
#include "rp2/tensor.hpp"

namespace rp2 {

enum class SignShape { octagon, triangle, circle, diamond, square };
enum class Glyph { none, bar1, bar2, bar3, arrow, cross };

struct Rgb {
  float r = 0.0f, g = 0.0f, b = 0.0f;
  bool operator==(const Rgb&) const = default;
};

/// One procedural sign class. Glyphs are drawn in the border color.
struct SignClassSpec {
  int class_id = 0;
  std::string name;
  SignShape shape = SignShape::octagon;
  Rgb fill_color;
  Glyph glyph = Glyph::none;
  Rgb border_color;
};

inline constexpr int kReferenceClassCount = 8;

/// The eight reference classes; (shape, glyph) pairs are unique.
const std::vector<SignClassSpec>& reference_sign_classes();
const SignClassSpec& reference_sign_class(int class_id);

enum class SignRegion { outside, border, fill, glyph };

/// Region of a point in normalized sign coordinates (u, v in [-1, 1], v down).
SignRegion sign_region(const SignClassSpec& spec, double u, double v);

/// Outer outline in normalized coordinates. Circles return an empty list.
std::vector<Point2> sign_outline(SignShape shape);

/// Outer radius used for circles (normalized units).
inline constexpr double kCircleRadius = 0.95;

/// Anti-aliased (4x4 supersampled) rendering over a per-seed solid background
/// color. Output [side, side, 3] in [0,1]. Requires side >= 32.
Tensor render_sign(const SignClassSpec& spec, int side, std::uint64_t seed);

/// Background color render_sign picks for this seed.
Rgb render_background(const SignClassSpec& spec, std::uint64_t seed);

/// [side, side] with 1 where the pixel center lies on the sign surface.
Tensor sign_surface_mask(const SignClassSpec& spec, int side);

}  // namespace rp2
