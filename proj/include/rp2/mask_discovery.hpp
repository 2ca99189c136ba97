#pragma once

#include <span>

#include "rp2/attack.hpp"

namespace rp2 {

struct MaskDiscoveryOptions {
  /// Pixels above this percentile of sign saliency seed the mask.
  double percentile = 90.0;
  /// Components smaller than this fraction of the sign area are dropped.
  double min_component_fraction = 0.01;
  /// Rectangles stop being added once the mask would exceed this share of the sign.
  double max_coverage = 0.4;
  /// Seeds are dilated by this many pixels before labeling, so fragments
  /// separated by small gaps join one component.
  int merge_radius = 2;
  double l1_lambda = kDefaultL1Lambda;
};

struct Component {
  std::vector<int> pixels;  // row-major indices
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // inclusive bounds
  double saliency_mass = 0.0;
};

/// 4-connected components of a binary [S, S] grid, ordered by first pixel.
std::vector<Component> connected_components(const Tensor& binary);

/// Binary [S, S] grid of the top (100 - percentile)% of sign pixels by
/// saliency; ties go to the lower row-major index and zero saliency is never kept.
Tensor threshold_saliency(const Tensor& saliency, const Tensor& sign_mask, double percentile);

/// Saliency [S, S] to mask: threshold, group the seeds into 4-connected
/// components (after bridging gaps up to merge_radius), drop small ones, and cover each remaining component with its
/// bounding rectangle clipped to the sign.
/// Rectangles are added in order of saliency mass while coverage stays
/// within max_coverage; a rectangle that does not fit contributes only its
/// component's pixels.
Mask mask_from_saliency(const Tensor& saliency, const Tensor& sign_mask, const MaskDiscoveryOptions& options = {});

/// max over channels of |delta|.
Tensor saliency_from_delta(const Tensor& delta);

struct MaskDiscoveryResult {
  Mask mask;
  AttackResult stage1;
  Tensor saliency;
};

/// Stage 1: L1 attack over the whole sign surface; stage-1 saliency then
/// becomes the sticker mask. `config` supplies everything except norm and lambda.
MaskDiscoveryResult discover_mask(const Tensor& canonical, int true_class, const ModelParameters& params,
                                  const Tensor& sign_mask, const AttackConfig& config,
                                  const MaskDiscoveryOptions& options = {},
                                  std::span<const AnnotatedPhoto> photos = {});

}  // namespace rp2
