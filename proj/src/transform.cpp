#include "rp2/transform.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "rp2/error.hpp"

namespace rp2 {
namespace {

constexpr double kCameraDistance = 2.0;
constexpr double kMinCoverage = 0.6;

double radians(double deg) { return deg * std::numbers::pi / 180.0; }

struct Tap {
  int index;  // flat pixel index
  double weight;
};

// Bilinear taps into a W x H grid at continuous point p (pixel centers at +0.5).
// Edge mode clamps indices; zero mode drops taps outside the grid.
int bilinear_taps(double px, double py, int width, int height, bool clamp_edges, std::array<Tap, 4>& taps) {
  const double x = px - 0.5, y = py - 0.5;
  const double fx0 = std::floor(x), fy0 = std::floor(y);
  const double ax = x - fx0, ay = y - fy0;
  const int x0 = static_cast<int>(fx0), y0 = static_cast<int>(fy0);
  int n = 0;
  for (int dy = 0; dy < 2; ++dy) {
    for (int dx = 0; dx < 2; ++dx) {
      const double w = (dx ? ax : 1.0 - ax) * (dy ? ay : 1.0 - ay);
      if (w == 0.0) continue;
      int xi = x0 + dx, yi = y0 + dy;
      if (clamp_edges) {
        xi = std::clamp(xi, 0, width - 1);
        yi = std::clamp(yi, 0, height - 1);
      } else if (xi < 0 || xi >= width || yi < 0 || yi >= height) {
        continue;
      }
      taps[static_cast<std::size_t>(n++)] = {yi * width + xi, w};
    }
  }
  return n;
}

// Canonical taps seen by frame pixel (fx, fy). Points that map outside the
// canonical square contribute nothing.
int canonical_taps(const Homography& frame_to_canonical, int fx, int fy, int side, std::array<Tap, 4>& taps) {
  const Point2 q = frame_to_canonical.apply({fx + 0.5, fy + 0.5});
  if (!(q.x >= 0.0 && q.x < side && q.y >= 0.0 && q.y < side)) return 0;
  return bilinear_taps(q.x, q.y, side, side, false, taps);
}

// Frame taps for instance pixel (ox, oy) under the crop-and-resize.
int instance_taps(const CropRect& crop, int frame_w, int frame_h, int ox, int oy, std::array<Tap, 4>& taps) {
  const double px = crop.x + (ox + 0.5) * crop.w / kInstanceSide;
  const double py = crop.y + (oy + 0.5) * crop.h / kInstanceSide;
  return bilinear_taps(px, py, frame_w, frame_h, true, taps);
}

void check_canonical(const Tensor& field, int side, const char* what) {
  if (field.rank() != 3 || field.dim(0) != side || field.dim(1) != side || field.dim(2) != 3) {
    throw ShapeError(std::string(what) + ": expected canonical [" + std::to_string(side) + "," + std::to_string(side) +
                     ",3], got " + shape_string(field.shape()));
  }
}

Quad project_pose(const PoseSpec& pose, int frame_side) {
  const double cr = std::cos(radians(pose.roll_deg)), sr = std::sin(radians(pose.roll_deg));
  const double cy = std::cos(radians(pose.yaw_deg)), sy = std::sin(radians(pose.yaw_deg));
  const double cp = std::cos(radians(pose.pitch_deg)), sp = std::sin(radians(pose.pitch_deg));
  const double focal = pose.scale * frame_side * kCameraDistance;
  const double cx = frame_side * (0.5 + pose.offset_x), cyc = frame_side * (0.5 + pose.offset_y);
  const std::array<Point2, 4> unit{Point2{-0.5, -0.5}, Point2{0.5, -0.5}, Point2{0.5, 0.5}, Point2{-0.5, 0.5}};
  Quad out;
  for (std::size_t i = 0; i < 4; ++i) {
    // Roll in the sign plane.
    const double x1 = cr * unit[i].x - sr * unit[i].y;
    const double y1 = sr * unit[i].x + cr * unit[i].y;
    // Yaw about the vertical axis.
    const double x2 = cy * x1;
    const double z2 = -sy * x1;
    // Pitch about the horizontal axis.
    const double y3 = cp * y1 - sp * z2;
    const double z3 = sp * y1 + cp * z2 + kCameraDistance;
    out[i] = {cx + focal * x2 / z3, cyc + focal * y3 / z3};
  }
  return out;
}

}  // namespace

void DistributionConfig::validate(std::size_t photo_count) const {
  auto check = [](const Range& r, const char* name) {
    if (!(r.lo <= r.hi)) throw ValidationError(std::string("distribution range ") + name + " has lo > hi");
  };
  check(scale, "scale");
  check(yaw_deg, "yaw");
  check(pitch_deg, "pitch");
  check(brightness, "brightness");
  check(crop_margin, "crop_margin");
  if (scale.lo <= 0.0 || scale.hi > 1.5) throw ValidationError("scale range must lie in (0, 1.5]");
  if (std::abs(yaw_deg.lo) >= 89.0 || std::abs(yaw_deg.hi) >= 89.0) throw ValidationError("yaw must stay within (-89, 89) degrees");
  if (std::abs(pitch_deg.lo) >= 89.0 || std::abs(pitch_deg.hi) >= 89.0) throw ValidationError("pitch must stay within (-89, 89) degrees");
  if (brightness.lo < -0.3 || brightness.hi > 0.3) throw ValidationError("brightness range must lie in [-0.3, 0.3]");
  if (crop_margin.lo < 1.0) throw ValidationError("crop_margin must be >= 1");
  if (crop_shift < 0.0 || crop_shift > 0.5) throw ValidationError("crop_shift must lie in [0, 0.5]");
  if (noise_sigma < 0.0) throw ValidationError("noise_sigma must be non-negative");
  if (experimental_fraction < 0.0 || experimental_fraction > 1.0) {
    throw ValidationError("experimental_fraction must lie in [0, 1]");
  }
  if (photo_count == 0 && experimental_fraction != 0.0) {
    throw ValidationError("experimental_fraction must be 0 when no annotated photos are loaded");
  }
  if (background_variants < 1) throw ValidationError("background_variants must be positive");
}

CropRect crop_around(const Quad& projected, int frame_width, int frame_height, double margin, double shift_x,
                     double shift_y) {
  const CropRect box = bounding_box(projected);
  const double limit = std::min(frame_width, frame_height);
  const double side = std::min(std::max(box.w, box.h) * margin, limit);
  auto place = [&](double sx, double sy) {
    double x = box.x + box.w / 2 - side / 2 + sx * side;
    double y = box.y + box.h / 2 - side / 2 + sy * side;
    x = std::clamp(x, 0.0, frame_width - side);
    y = std::clamp(y, 0.0, frame_height - side);
    return CropRect{x, y, side, side};
  };
  const CropRect jittered = place(shift_x, shift_y);
  const double area = polygon_area(projected);
  if (area > 0.0 && polygon_area(clip_to_rect(projected, jittered)) / area >= kMinCoverage) return jittered;
  return place(0.0, 0.0);
}

TransformSample make_synthetic_sample(const PoseSpec& pose, int canonical_side) {
  if (canonical_side < 8) throw ValidationError("canonical side must be >= 8");
  const Quad projected = project_pose(pose, canonical_side);
  TransformSample s;
  s.homography = Homography::from_correspondences(canonical_corners(canonical_side), projected);
  s.brightness_delta = pose.brightness;
  s.background_id = pose.background_id;
  s.noise_seed = pose.noise_seed;
  s.noise_sigma = pose.noise_sigma;
  s.source = SampleSource::synthetic;
  s.frame_width = canonical_side;
  s.frame_height = canonical_side;
  s.canonical_side = canonical_side;
  if (pose.full_frame_crop) {
    s.crop_rect = {0.0, 0.0, static_cast<double>(canonical_side), static_cast<double>(canonical_side)};
  } else {
    s.crop_rect = crop_around(projected, canonical_side, canonical_side, pose.crop_margin, pose.crop_shift_x,
                              pose.crop_shift_y);
  }
  return s;
}

TransformSample identity_sample(int canonical_side) {
  PoseSpec pose;
  pose.full_frame_crop = true;
  TransformSample s = make_synthetic_sample(pose, canonical_side);
  s.homography = Homography();
  return s;
}

TransformSample sample_transform(const DistributionConfig& config, Rng& rng, int canonical_side,
                                 std::span<const AnnotatedPhoto> photos) {
  config.validate(photos.size());
  const double u_source = uniform(rng, 0.0, 1.0);
  const double brightness = uniform(rng, config.brightness.lo, config.brightness.hi);
  const double margin = uniform(rng, config.crop_margin.lo, config.crop_margin.hi);
  const double shift_x = uniform(rng, -config.crop_shift, config.crop_shift);
  const double shift_y = uniform(rng, -config.crop_shift, config.crop_shift);
  const std::uint64_t noise_seed = rng();

  if (!photos.empty() && u_source < config.experimental_fraction) {
    const int index = uniform_int(rng, 0, static_cast<int>(photos.size()) - 1);
    const AnnotatedPhoto& photo = photos[static_cast<std::size_t>(index)];
    TransformSample s;
    s.homography = Homography::from_correspondences(canonical_corners(canonical_side), photo.corners);
    s.brightness_delta = brightness;
    s.noise_seed = noise_seed;
    s.noise_sigma = config.noise_sigma;
    s.source = SampleSource::experimental;
    s.frame_width = photo.image.dim(1);
    s.frame_height = photo.image.dim(0);
    s.canonical_side = canonical_side;
    s.photo_index = index;
    s.crop_rect = crop_around(photo.corners, s.frame_width, s.frame_height, margin, shift_x, shift_y);
    return s;
  }

  PoseSpec pose;
  pose.scale = uniform(rng, config.scale.lo, config.scale.hi);
  pose.yaw_deg = uniform(rng, config.yaw_deg.lo, config.yaw_deg.hi);
  pose.pitch_deg = uniform(rng, config.pitch_deg.lo, config.pitch_deg.hi);
  const double place_x = uniform(rng, -1.0, 1.0);
  const double place_y = uniform(rng, -1.0, 1.0);
  pose.background_id = uniform_int(rng, 0, config.background_variants - 1);
  // Slide the sign anywhere it still fits inside the frame.
  const CropRect box = bounding_box(project_pose(pose, canonical_side));
  const double slack_x = std::max(0.0, (canonical_side - box.w) / 2.0) / canonical_side;
  const double slack_y = std::max(0.0, (canonical_side - box.h) / 2.0) / canonical_side;
  pose.offset_x = place_x * slack_x;
  pose.offset_y = place_y * slack_y;
  pose.crop_margin = margin;
  pose.crop_shift_x = shift_x;
  pose.crop_shift_y = shift_y;
  pose.brightness = brightness;
  pose.noise_seed = noise_seed;
  pose.noise_sigma = config.noise_sigma;
  return make_synthetic_sample(pose, canonical_side);
}

Quad projected_sign_quad(const TransformSample& sample) {
  Quad q = canonical_corners(sample.canonical_side);
  for (Point2& p : q) p = sample.homography.apply(p);
  return q;
}

double crop_coverage(const TransformSample& sample) {
  const Quad q = projected_sign_quad(sample);
  const double area = polygon_area(q);
  if (area <= 0.0) return 0.0;
  return polygon_area(clip_to_rect(q, sample.crop_rect)) / area;
}

void validate_sample(const TransformSample& s) {
  if (std::abs(s.homography.determinant()) <= 1e-6) throw ValidationError("sample homography is not invertible");
  if (s.canonical_side < 8) throw ValidationError("sample canonical side must be >= 8");
  const CropRect& c = s.crop_rect;
  constexpr double eps = 1e-6;
  if (!(c.w > 0.0 && c.h > 0.0) || c.x < -eps || c.y < -eps || c.x + c.w > s.frame_width + eps ||
      c.y + c.h > s.frame_height + eps) {
    throw ValidationError("crop_rect lies outside the instance frame");
  }
  if (crop_coverage(s) < kMinCoverage - 1e-9) throw ValidationError("crop_rect covers less than 60% of the sign");
}

void background_pixel(int background_id, int x, int y, int width, int height, float out[3]) {
  const std::uint64_t h = splitmix64(static_cast<std::uint64_t>(background_id) + 0x5bd1e995ull);
  auto channel = [&](int k) { return static_cast<float>((h >> (8 * k)) & 0xFF) / 255.0f; };
  const float a[3] = {channel(0), channel(1), channel(2)};
  const float b[3] = {channel(3), channel(4), channel(5)};
  float t = 0.0f;
  switch (background_id % 3) {
    case 0:  // solid
      break;
    case 1:  // vertical gradient
      t = height > 1 ? static_cast<float>(y) / static_cast<float>(height - 1) : 0.0f;
      break;
    default: {  // diagonal stripes
      const int period = 4 + static_cast<int>((h >> 48) % 8);
      t = ((x + y) / period) % 2 == 0 ? 0.0f : 1.0f;
      (void)width;
      break;
    }
  }
  for (int k = 0; k < 3; ++k) out[k] = a[k] + t * (b[k] - a[k]);
}

namespace {

// Pixel of the rendered frame before crop/resize.
void frame_pixel(const Tensor& canonical, const TransformSample& s, const Homography& inv,
                 std::span<const AnnotatedPhoto> photos, int fx, int fy, float out[3]) {
  if (s.source == SampleSource::experimental) {
    const Tensor& img = photos[static_cast<std::size_t>(s.photo_index)].image;
    const float* p = img.data() + (static_cast<std::size_t>(fy) * s.frame_width + fx) * 3;
    out[0] = p[0];
    out[1] = p[1];
    out[2] = p[2];
  } else {
    std::array<Tap, 4> taps{};
    const int n = canonical_taps(inv, fx, fy, s.canonical_side, taps);
    double acc[3] = {0, 0, 0};
    double alpha = 0.0;
    for (int t = 0; t < n; ++t) {
      const float* c = canonical.data() + static_cast<std::size_t>(taps[t].index) * 3;
      for (int k = 0; k < 3; ++k) acc[k] += taps[t].weight * c[k];
      alpha += taps[t].weight;
    }
    float bg[3];
    background_pixel(s.background_id, fx, fy, s.frame_width, s.frame_height, bg);
    for (int k = 0; k < 3; ++k) out[k] = static_cast<float>(acc[k] + (1.0 - alpha) * bg[k]);
  }
  const std::uint64_t pixel = static_cast<std::uint64_t>(fy) * static_cast<std::uint64_t>(s.frame_width) + fx;
  for (int k = 0; k < 3; ++k) {
    double v = out[k] + s.brightness_delta;
    if (s.noise_sigma > 0.0) v += s.noise_sigma * hashed_normal(s.noise_seed, pixel * 3 + k);
    out[k] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
}

}  // namespace

Tensor synthesize_instance(const Tensor& canonical, const TransformSample& s, std::span<const AnnotatedPhoto> photos) {
  check_canonical(canonical, s.canonical_side, "synthesize_instance");
  validate_sample(s);
  if (s.source == SampleSource::experimental) {
    if (s.photo_index < 0 || static_cast<std::size_t>(s.photo_index) >= photos.size()) {
      throw ValidationError("experimental sample refers to a photo that was not supplied");
    }
    const Tensor& img = photos[static_cast<std::size_t>(s.photo_index)].image;
    if (img.dim(0) != s.frame_height || img.dim(1) != s.frame_width) {
      throw ShapeError("photo size does not match the sample frame");
    }
  }
  const Homography inv = s.homography.inverse();
  Tensor out({kInstanceSide, kInstanceSide, 3});
  std::array<Tap, 4> taps{};
  for (int oy = 0; oy < kInstanceSide; ++oy) {
    for (int ox = 0; ox < kInstanceSide; ++ox) {
      const int n = instance_taps(s.crop_rect, s.frame_width, s.frame_height, ox, oy, taps);
      double acc[3] = {0, 0, 0};
      for (int t = 0; t < n; ++t) {
        float px[3];
        frame_pixel(canonical, s, inv, photos, taps[t].index % s.frame_width, taps[t].index / s.frame_width, px);
        for (int k = 0; k < 3; ++k) acc[k] += taps[t].weight * px[k];
      }
      float* o = out.data() + (static_cast<std::size_t>(oy) * kInstanceSide + ox) * 3;
      for (int k = 0; k < 3; ++k) o[k] = std::clamp(static_cast<float>(acc[k]), 0.0f, 1.0f);
    }
  }
  return out;
}

WarpOperator::WarpOperator(const TransformSample& s) : side_(s.canonical_side) {
  validate_sample(s);
  const Homography inv = s.homography.inverse();
  row_start_.reserve(kInstanceSide * kInstanceSide + 1);
  row_start_.push_back(0);
  std::array<Tap, 4> frame{};
  std::array<Tap, 4> canon{};
  for (int oy = 0; oy < kInstanceSide; ++oy) {
    for (int ox = 0; ox < kInstanceSide; ++ox) {
      const int nf = instance_taps(s.crop_rect, s.frame_width, s.frame_height, ox, oy, frame);
      for (int f = 0; f < nf; ++f) {
        const int nc = canonical_taps(inv, frame[f].index % s.frame_width, frame[f].index / s.frame_width, side_, canon);
        for (int c = 0; c < nc; ++c) {
          columns_.push_back(static_cast<std::uint32_t>(canon[c].index));
          weights_.push_back(static_cast<float>(frame[f].weight * canon[c].weight));
        }
      }
      row_start_.push_back(static_cast<std::uint32_t>(columns_.size()));
    }
  }
}

Tensor WarpOperator::apply(const Tensor& field) const {
  check_canonical(field, side_, "warp_perturbation");
  Tensor out({kInstanceSide, kInstanceSide, 3});
  for (std::size_t row = 0; row + 1 < row_start_.size(); ++row) {
    float acc[3] = {0, 0, 0};
    for (std::uint32_t e = row_start_[row]; e < row_start_[row + 1]; ++e) {
      const float* src = field.data() + static_cast<std::size_t>(columns_[e]) * 3;
      acc[0] += weights_[e] * src[0];
      acc[1] += weights_[e] * src[1];
      acc[2] += weights_[e] * src[2];
    }
    out[row * 3] = acc[0];
    out[row * 3 + 1] = acc[1];
    out[row * 3 + 2] = acc[2];
  }
  return out;
}

Tensor WarpOperator::adjoint(const Tensor& upstream) const {
  require_shape(upstream, {kInstanceSide, kInstanceSide, 3}, "warp_perturbation_adjoint upstream");
  Tensor out({side_, side_, 3});
  for (std::size_t row = 0; row + 1 < row_start_.size(); ++row) {
    const float* g = upstream.data() + row * 3;
    for (std::uint32_t e = row_start_[row]; e < row_start_[row + 1]; ++e) {
      float* dst = out.data() + static_cast<std::size_t>(columns_[e]) * 3;
      dst[0] += weights_[e] * g[0];
      dst[1] += weights_[e] * g[1];
      dst[2] += weights_[e] * g[2];
    }
  }
  return out;
}

Tensor warp_perturbation(const Tensor& delta_canonical, const TransformSample& sample) {
  check_canonical(delta_canonical, sample.canonical_side, "warp_perturbation");
  return WarpOperator(sample).apply(delta_canonical);
}

Tensor warp_perturbation_adjoint(const Tensor& upstream, const TransformSample& sample) {
  return WarpOperator(sample).adjoint(upstream);
}

Tensor warp_to_frame(const Tensor& field, const Homography& canonical_to_frame, int frame_width, int frame_height) {
  const int side = field.rank() == 3 ? field.dim(0) : 0;
  check_canonical(field, side, "warp_to_frame");
  const Homography inv = canonical_to_frame.inverse();
  Tensor out({frame_height, frame_width, 3});
  std::array<Tap, 4> taps{};
  for (int y = 0; y < frame_height; ++y) {
    for (int x = 0; x < frame_width; ++x) {
      const int n = canonical_taps(inv, x, y, side, taps);
      float* o = out.data() + (static_cast<std::size_t>(y) * frame_width + x) * 3;
      for (int t = 0; t < n; ++t) {
        const float* c = field.data() + static_cast<std::size_t>(taps[t].index) * 3;
        for (int k = 0; k < 3; ++k) o[k] += static_cast<float>(taps[t].weight) * c[k];
      }
    }
  }
  return out;
}

Tensor crop_resize(const Tensor& image, const CropRect& rect, int out_side) {
  if (image.rank() != 3 || image.dim(2) != 3) throw ShapeError("crop_resize expects [H,W,3], got " + shape_string(image.shape()));
  const int h = image.dim(0), w = image.dim(1);
  Tensor out({out_side, out_side, 3});
  std::array<Tap, 4> taps{};
  for (int oy = 0; oy < out_side; ++oy) {
    for (int ox = 0; ox < out_side; ++ox) {
      const double px = rect.x + (ox + 0.5) * rect.w / out_side;
      const double py = rect.y + (oy + 0.5) * rect.h / out_side;
      const int n = bilinear_taps(px, py, w, h, true, taps);
      double acc[3] = {0, 0, 0};
      for (int t = 0; t < n; ++t) {
        const float* c = image.data() + static_cast<std::size_t>(taps[t].index) * 3;
        for (int k = 0; k < 3; ++k) acc[k] += taps[t].weight * c[k];
      }
      float* o = out.data() + (static_cast<std::size_t>(oy) * out_side + ox) * 3;
      for (int k = 0; k < 3; ++k) o[k] = static_cast<float>(acc[k]);
    }
  }
  return out;
}

}  // namespace rp2
