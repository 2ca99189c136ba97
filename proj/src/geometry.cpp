#include "rp2/geometry.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <functional>

#include "rp2/error.hpp"

namespace rp2 {

double Homography::determinant() const { return m_.determinant(); }

Homography::Homography(const Eigen::Matrix3d& m) : m_(m) {
  if (std::abs(m_(2, 2)) < 1e-12) throw NumericError("homography has zero bottom-right entry");
  m_ /= m_(2, 2);
}

Homography Homography::from_correspondences(const Quad& src, const Quad& dst) {
  Eigen::Matrix<double, 8, 8> a;
  Eigen::Matrix<double, 8, 1> b;
  for (int i = 0; i < 4; ++i) {
    const double x = src[i].x, y = src[i].y, u = dst[i].x, v = dst[i].y;
    a.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y;
    a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
    b(2 * i) = u;
    b(2 * i + 1) = v;
  }
  Eigen::FullPivLU<Eigen::Matrix<double, 8, 8>> lu(a);
  if (!lu.isInvertible()) throw NumericError("degenerate point correspondences for homography");
  const Eigen::Matrix<double, 8, 1> h = lu.solve(b);
  Eigen::Matrix3d m;
  m << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0;
  return Homography(m);
}

Point2 Homography::apply(Point2 p) const {
  const Eigen::Vector3d q = m_ * Eigen::Vector3d(p.x, p.y, 1.0);
  return {q(0) / q(2), q(1) / q(2)};
}

Homography Homography::inverse() const {
  if (std::abs(determinant()) <= 1e-12) throw NumericError("homography is singular");
  return Homography(m_.inverse());
}

Quad canonical_corners(int side) {
  const double s = side;
  return {Point2{0, 0}, Point2{s, 0}, Point2{s, s}, Point2{0, s}};
}

bool is_strictly_convex(const Quad& q) {
  int sign = 0;
  for (int i = 0; i < 4; ++i) {
    const Point2& a = q[i];
    const Point2& b = q[(i + 1) % 4];
    const Point2& c = q[(i + 2) % 4];
    const double cross = (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x);
    if (std::abs(cross) < 1e-12) return false;
    const int s = cross > 0 ? 1 : -1;
    if (sign == 0) sign = s;
    if (s != sign) return false;
  }
  return true;
}

double polygon_area(std::span<const Point2> poly) {
  double acc = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Point2& a = poly[i];
    const Point2& b = poly[(i + 1) % poly.size()];
    acc += a.x * b.y - b.x * a.y;
  }
  return std::abs(acc) * 0.5;
}

std::vector<Point2> clip_to_rect(std::span<const Point2> polygon, const CropRect& r) {
  std::vector<Point2> poly(polygon.begin(), polygon.end());
  // Each edge: keep points where inside(p) holds; intersect along the boundary coordinate.
  auto clip = [&](const std::function<bool(const Point2&)>& inside,
                  const std::function<Point2(const Point2&, const Point2&)>& cut) {
    std::vector<Point2> out;
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const Point2& cur = poly[i];
      const Point2& prev = poly[(i + poly.size() - 1) % poly.size()];
      const bool ci = inside(cur), pi = inside(prev);
      if (ci) {
        if (!pi) out.push_back(cut(prev, cur));
        out.push_back(cur);
      } else if (pi) {
        out.push_back(cut(prev, cur));
      }
    }
    poly = std::move(out);
  };
  auto at_x = [](double x) {
    return [x](const Point2& a, const Point2& b) {
      const double t = (x - a.x) / (b.x - a.x);
      return Point2{x, a.y + t * (b.y - a.y)};
    };
  };
  auto at_y = [](double y) {
    return [y](const Point2& a, const Point2& b) {
      const double t = (y - a.y) / (b.y - a.y);
      return Point2{a.x + t * (b.x - a.x), y};
    };
  };
  const double x0 = r.x, x1 = r.x + r.w, y0 = r.y, y1 = r.y + r.h;
  clip([x0](const Point2& p) { return p.x >= x0; }, at_x(x0));
  if (!poly.empty()) clip([x1](const Point2& p) { return p.x <= x1; }, at_x(x1));
  if (!poly.empty()) clip([y0](const Point2& p) { return p.y >= y0; }, at_y(y0));
  if (!poly.empty()) clip([y1](const Point2& p) { return p.y <= y1; }, at_y(y1));
  return poly;
}

CropRect bounding_box(std::span<const Point2> points) {
  double x0 = points[0].x, x1 = points[0].x, y0 = points[0].y, y1 = points[0].y;
  for (const Point2& p : points) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  return {x0, y0, x1 - x0, y1 - y0};
}

}  // namespace rp2
