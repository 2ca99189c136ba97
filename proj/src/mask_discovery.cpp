#include "rp2/mask_discovery.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rp2/error.hpp"

namespace rp2 {

std::vector<Component> connected_components(const Tensor& binary) {
  if (binary.rank() != 2) throw ShapeError("component labeling needs a rank-2 grid");
  const int h = binary.dim(0);
  const int w = binary.dim(1);
  std::vector<int> label(binary.size(), -1);
  std::vector<Component> out;
  std::vector<int> stack;
  for (int start = 0; start < h * w; ++start) {
    if (binary[start] == 0.0f || label[start] >= 0) continue;
    Component c;
    c.x0 = c.x1 = start % w;
    c.y0 = c.y1 = start / w;
    const int id = static_cast<int>(out.size());
    label[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      c.pixels.push_back(p);
      const int y = p / w, x = p % w;
      c.x0 = std::min(c.x0, x);
      c.x1 = std::max(c.x1, x);
      c.y0 = std::min(c.y0, y);
      c.y1 = std::max(c.y1, y);
      const int nbr[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
      for (const auto& n : nbr) {
        if (n[0] < 0 || n[0] >= h || n[1] < 0 || n[1] >= w) continue;
        const int q = n[0] * w + n[1];
        if (binary[q] != 0.0f && label[q] < 0) {
          label[q] = id;
          stack.push_back(q);
        }
      }
    }
    std::sort(c.pixels.begin(), c.pixels.end());
    out.push_back(std::move(c));
  }
  return out;
}

Tensor saliency_from_delta(const Tensor& delta) {
  if (delta.rank() != 3 || delta.dim(2) != 3) throw ShapeError("delta must be [S,S,3]");
  Tensor s({delta.dim(0), delta.dim(1)});
  for (std::size_t p = 0; p < s.size(); ++p) {
    s[p] = std::max({std::abs(delta[3 * p]), std::abs(delta[3 * p + 1]), std::abs(delta[3 * p + 2])});
  }
  return s;
}

Tensor threshold_saliency(const Tensor& saliency, const Tensor& sign_mask, double percentile) {
  if (saliency.rank() != 2 || saliency.dim(0) != saliency.dim(1)) throw ShapeError("saliency must be [S,S]");
  require_shape(sign_mask, saliency.shape(), "sign mask");
  if (!(percentile >= 0.0 && percentile < 100.0)) throw ValidationError("percentile must lie in [0,100)");
  std::vector<int> order;
  for (std::size_t p = 0; p < sign_mask.size(); ++p) {
    if (sign_mask[p] != 0.0f) order.push_back(static_cast<int>(p));
  }
  if (order.empty()) throw ValidationError("sign mask is empty");
  // Rank-based so ties cannot inflate the kept share.
  const auto keep = static_cast<std::size_t>(std::llround(order.size() * (100.0 - percentile) / 100.0));
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return saliency[a] > saliency[b]; });
  Tensor seeds(saliency.shape());
  for (std::size_t i = 0; i < keep && i < order.size(); ++i) {
    if (saliency[order[i]] > 0.0f) seeds[order[i]] = 1.0f;
  }
  return seeds;
}

Mask mask_from_saliency(const Tensor& saliency, const Tensor& sign_mask, const MaskDiscoveryOptions& options) {
  if (saliency.rank() != 2 || saliency.dim(0) != saliency.dim(1)) throw ShapeError("saliency must be [S,S]");
  require_shape(sign_mask, saliency.shape(), "sign mask");
  if (!(options.max_coverage > 0.0 && options.max_coverage <= 1.0)) throw ValidationError("max_coverage must lie in (0,1]");
  if (options.merge_radius < 0) throw ValidationError("merge_radius must be non-negative");
  const int side = saliency.dim(0);

  Tensor seeds = threshold_saliency(saliency, sign_mask, options.percentile);
  double sign_area = 0.0;
  for (float v : sign_mask.values()) sign_area += v != 0.0f;
  // Components are found on the seeds dilated by merge_radius, so nearby
  // fragments group together; each keeps only its own seed pixels.
  const int r = options.merge_radius;
  Tensor bridged = seeds;
  if (r > 0) {
    for (int y = 0; y < side; ++y) {
      for (int x = 0; x < side; ++x) {
        if (seeds[y * side + x] == 0.0f) continue;
        for (int yy = std::max(0, y - r); yy <= std::min(side - 1, y + r); ++yy) {
          for (int xx = std::max(0, x - r); xx <= std::min(side - 1, x + r); ++xx) bridged[yy * side + xx] = 1.0f;
        }
      }
    }
  }
  std::vector<Component> comps = connected_components(bridged);
  for (Component& c : comps) {
    std::erase_if(c.pixels, [&](int p) { return seeds[p] == 0.0f; });
    c.x0 = c.y0 = side;
    c.x1 = c.y1 = -1;
    for (int p : c.pixels) {
      c.x0 = std::min(c.x0, p % side);
      c.x1 = std::max(c.x1, p % side);
      c.y0 = std::min(c.y0, p / side);
      c.y1 = std::max(c.y1, p / side);
    }
  }
  const double min_size = options.min_component_fraction * sign_area;
  std::erase_if(comps, [&](const Component& c) { return static_cast<double>(c.pixels.size()) < min_size; });
  for (Component& c : comps) {
    c.saliency_mass = 0.0;
    for (int p : c.pixels) c.saliency_mass += saliency[p];
  }
  std::stable_sort(comps.begin(), comps.end(),
                   [](const Component& a, const Component& b) { return a.saliency_mass > b.saliency_mass; });

  Tensor grid({side, side});
  double covered = 0.0;
  const double budget = options.max_coverage * sign_area;
  for (const Component& c : comps) {
    std::vector<int> added;
    for (int y = c.y0; y <= c.y1; ++y) {
      for (int x = c.x0; x <= c.x1; ++x) {
        const int p = y * side + x;
        if (sign_mask[p] != 0.0f && grid[p] == 0.0f) added.push_back(p);
      }
    }
    if (covered + static_cast<double>(added.size()) > budget) {
      added.clear();
      for (int p : c.pixels) {
        if (grid[p] == 0.0f) added.push_back(p);
      }
      if (covered + static_cast<double>(added.size()) > budget) continue;
    }
    for (int p : added) grid[p] = 1.0f;
    covered += static_cast<double>(added.size());
  }
  return Mask(std::move(grid));
}

MaskDiscoveryResult discover_mask(const Tensor& canonical, int true_class, const ModelParameters& params,
                                  const Tensor& sign_mask, const AttackConfig& config,
                                  const MaskDiscoveryOptions& options, std::span<const AnnotatedPhoto> photos) {
  AttackConfig stage1 = config;
  stage1.norm = NormKind::l1;
  stage1.lambda = options.l1_lambda;
  MaskDiscoveryResult r;
  r.stage1 = run_attack(canonical, true_class, params, Mask(sign_mask), stage1, photos);
  r.saliency = saliency_from_delta(r.stage1.perturbation.delta);
  r.mask = mask_from_saliency(r.saliency, sign_mask, options);
  if (r.mask.coverage() <= 0.0) {
    throw ValidationError("mask discovery produced an empty mask (stage-1 perturbation has no salient region)");
  }
  return r;
}

}  // namespace rp2
