#pragma once

#include <array>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace rp2 {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Four points, clockwise from the top-left of the sign's canonical frame.
using Quad = std::array<Point2, 4>;

/// Axis-aligned rectangle in pixel units; (x, y) is the top-left corner.
struct CropRect {
  double x = 0.0, y = 0.0, w = 0.0, h = 0.0;
};

/// Projective map of the plane, normalized so the bottom-right entry is 1.
class Homography {
 public:
  Homography() : m_(Eigen::Matrix3d::Identity()) {}
  explicit Homography(const Eigen::Matrix3d& m);

  /// Direct linear transform from four point correspondences.
  static Homography from_correspondences(const Quad& src, const Quad& dst);

  Point2 apply(Point2 p) const;
  Homography inverse() const;
  double determinant() const;
  const Eigen::Matrix3d& matrix() const { return m_; }

 private:
  Eigen::Matrix3d m_;
};

/// Corners of an S x S canonical frame: (0,0), (S,0), (S,S), (0,S).
Quad canonical_corners(int side);

bool is_strictly_convex(const Quad& quad);

/// Shoelace area (absolute value).
double polygon_area(std::span<const Point2> polygon);

/// Sutherland-Hodgman clip of a convex polygon against a rectangle.
std::vector<Point2> clip_to_rect(std::span<const Point2> polygon, const CropRect& rect);

CropRect bounding_box(std::span<const Point2> points);

}  // namespace rp2
