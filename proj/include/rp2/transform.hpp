#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rp2/geometry.hpp"
#include "rp2/rng.hpp"
#include "rp2/tensor.hpp"

namespace rp2 {

/// Side of every synthesized instance (the classifier input).
inline constexpr int kInstanceSide = 32;

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const { return v >= lo && v <= hi; }
};

/// Physical-condition distribution the attack optimizes over. Zero-width
/// ranges are allowed and pin the parameter.
struct DistributionConfig {
  Range scale{0.3, 1.0};
  Range yaw_deg{-60.0, 60.0};
  Range pitch_deg{-15.0, 15.0};
  Range brightness{-0.3, 0.3};
  /// Crop side as a multiple of the projected sign's bounding box.
  Range crop_margin{1.05, 1.3};
  /// Crop center jitter as a fraction of the crop side.
  double crop_shift = 0.08;
  double noise_sigma = 0.01;
  /// Probability that a draw uses an annotated photo instead of a synthetic pose.
  double experimental_fraction = 0.0;
  int background_variants = 64;

  void validate(std::size_t photo_count) const;
};

/// Default mix when annotated photos are available.
inline constexpr double kDefaultExperimentalFraction = 0.5;

enum class SampleSource { synthetic, experimental };

/// One draw from the distribution. The homography maps canonical sign
/// coordinates to frame coordinates; the crop selects the instance window.
struct TransformSample {
  Homography homography;
  double brightness_delta = 0.0;
  CropRect crop_rect;
  int background_id = 0;
  std::uint64_t noise_seed = 0;
  double noise_sigma = 0.01;
  SampleSource source = SampleSource::synthetic;
  int frame_width = 0;
  int frame_height = 0;
  int canonical_side = 0;
  /// Index into the photo list for experimental samples, -1 otherwise.
  int photo_index = -1;
};

/// A real photograph of the sign with its corner annotation.
struct AnnotatedPhoto {
  std::string name;
  Tensor image;  // [H, W, 3]
  Quad corners;
  int label = 0;
};

/// Explicit pose for a synthetic sample. The sign plane is rotated (roll,
/// then yaw about the vertical axis, then pitch), viewed at distance 2 with
/// unit focal length, and scaled so an unrotated sign spans `scale` of the
/// frame. Offsets move the sign center, in frame-side units.
struct PoseSpec {
  double scale = 1.0;
  double roll_deg = 0.0;
  double yaw_deg = 0.0;
  double pitch_deg = 0.0;
  double offset_x = 0.0;
  double offset_y = 0.0;
  /// Crop is the whole frame when set; otherwise margin/shift as below.
  bool full_frame_crop = false;
  double crop_margin = 1.0;
  double crop_shift_x = 0.0;
  double crop_shift_y = 0.0;
  double brightness = 0.0;
  int background_id = 0;
  std::uint64_t noise_seed = 0;
  double noise_sigma = 0.0;
};

TransformSample make_synthetic_sample(const PoseSpec& pose, int canonical_side);

/// Identity pose, full crop, no brightness shift or noise.
TransformSample identity_sample(int canonical_side);

/// Square crop around the projected sign, clamped into the frame. Falls back
/// to a centered crop if the jittered one covers less than 60% of the sign.
CropRect crop_around(const Quad& projected, int frame_width, int frame_height, double margin, double shift_x,
                     double shift_y);

TransformSample sample_transform(const DistributionConfig& config, Rng& rng, int canonical_side,
                                 std::span<const AnnotatedPhoto> photos = {});

/// Canonical frame corners mapped into the frame.
Quad projected_sign_quad(const TransformSample& sample);

/// Fraction of the projected sign area that falls inside the crop.
double crop_coverage(const TransformSample& sample);

/// Throws ValidationError when the sample breaks its invariants.
void validate_sample(const TransformSample& sample);

/// Background pixel for a background id; solid, gradient or striped.
void background_pixel(int background_id, int x, int y, int width, int height, float out[3]);

/// Renders the sample's frame from the canonical sign (or photo), shifts
/// brightness, adds seeded noise, clamps, then crops and bilinearly resizes
/// to 32 x 32.
Tensor synthesize_instance(const Tensor& canonical, const TransformSample& sample,
                           std::span<const AnnotatedPhoto> photos = {});

/// Sparse linear map from a canonical [S, S, 3] field to a [32, 32, 3]
/// instance field: homography sampling with zero padding off the sign,
/// followed by the crop-and-resize of synthesize_instance. Channels share weights.
class WarpOperator {
 public:
  explicit WarpOperator(const TransformSample& sample);

  Tensor apply(const Tensor& canonical_field) const;
  /// Exact transpose of apply.
  Tensor adjoint(const Tensor& instance_field) const;

  int canonical_side() const { return side_; }
  std::size_t nonzeros() const { return weights_.size(); }

 private:
  int side_;
  std::vector<std::uint32_t> row_start_;
  std::vector<std::uint32_t> columns_;
  std::vector<float> weights_;
};

Tensor warp_perturbation(const Tensor& delta_canonical, const TransformSample& sample);
Tensor warp_perturbation_adjoint(const Tensor& upstream, const TransformSample& sample);

/// Warp a canonical field into a full W x H frame (no crop, zero off the sign).
Tensor warp_to_frame(const Tensor& canonical_field, const Homography& canonical_to_frame, int frame_width,
                     int frame_height);

/// Bilinear crop-and-resize with edge clamping, pixel centers at +0.5.
Tensor crop_resize(const Tensor& image, const CropRect& rect, int out_side);

}  // namespace rp2
