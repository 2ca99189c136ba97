#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rp2/classifier.hpp"
#include "rp2/palette.hpp"
#include "rp2/tensor.hpp"
#include "rp2/transform.hpp"

namespace rp2 {

/// Binary [S, S] grid; 1 where the perturbation may be non-zero.
class Mask {
 public:
  Mask() = default;
  /// Throws ValidationError unless `grid` is square rank-2 with entries in {0, 1}.
  explicit Mask(Tensor grid);
  static Mask full(int side);

  const Tensor& grid() const { return grid_; }
  int side() const { return grid_.rank() == 2 ? grid_.dim(0) : 0; }
  double coverage() const;
  bool covers(int y, int x) const { return grid_[static_cast<std::size_t>(y) * side() + x] != 0.0f; }

 private:
  Tensor grid_{Shape{0, 0}};
};

enum class NormKind { l1, l2 };

std::string to_string(NormKind norm);
NormKind parse_norm(const std::string& text);

/// Canonical-frame additive field plus the metadata it was made with.
struct Perturbation {
  Tensor delta;  // [S, S, 3] in [-1, 1], zero off the mask
  Mask mask;
  std::optional<int> target_class;  // empty for untargeted
  NormKind norm_used = NormKind::l2;
  double lambda_used = 0.0;
  std::string palette_id;
};

struct AttackConfig {
  double lambda = 1e-3;
  NormKind norm = NormKind::l2;
  double eta = 1e-2;
  int iterations = 1000;
  int batch_size = 16;
  std::optional<int> target_class;  // empty selects the untargeted objective
  DistributionConfig distribution;
  PrintablePalette palette = default_palette();
  double nps_weight = 1.0;
  std::uint64_t seed = 1;
  int probe_size = 64;
  int probe_every = 50;
  int threads = 1;

  bool untargeted() const { return !target_class.has_value(); }
  void validate(std::size_t photo_count = 0) const;
};

/// Lambda defaults for the mask-discovery stage and the sticker stage.
inline constexpr double kDefaultL1Lambda = 1e-2;
inline constexpr double kDefaultL2Lambda = 1e-3;

struct NpsResult {
  double score = 0.0;
  Tensor grad;  // d score / d delta, [S, S, 3]
};

/// Mean over masked pixels of prod_p (|clamp(canonical + delta) - p|_1 / 3).
NpsResult nps(const Tensor& canonical, const Tensor& delta, const Mask& mask, const PrintablePalette& palette);

/// One element of the expectation: a sampled instance and its pose.
struct BatchItem {
  Tensor instance;  // [32, 32, 3]
  TransformSample sample;
};

struct ObjectiveParts {
  double norm_term = 0.0;
  double nps_term = 0.0;
  double expectation_term = 0.0;
};

struct ObjectiveResult {
  double loss = 0.0;
  Tensor grad;  // [S, S, 3]
  ObjectiveParts parts;
};

/// lambda * ||M.delta||_p + nps_weight * NPS + mean_i J(f(clamp(x_i + T_i(M.delta))), y*).
/// Untargeted configs use -J(., true_class) as the expectation term.
ObjectiveResult objective(const Tensor& canonical, const Tensor& delta, const Mask& mask,
                          std::span<const BatchItem> batch, const ModelParameters& params,
                          const AttackConfig& config, int true_class);

struct TraceRow {
  int iteration = 0;
  double loss = 0.0;
  ObjectiveParts parts;
  std::optional<double> probe_success;
};

struct AttackResult {
  Perturbation perturbation;
  std::vector<TraceRow> trace;
  double probe_success = 0.0;  // of the returned iterate
  int best_iteration = 0;
  bool clean_prediction_ok = true;
  std::vector<std::string> warnings;
};

/// Called after every optimizer step with the projected iterate.
using StepObserver = std::function<void(int iteration, const Tensor& delta)>;

/// Canonical sign as the classifier sees it head-on (identity pose, no noise).
Tensor canonical_view(const Tensor& canonical);

/// Adam over the objective with a fresh batch per step. After each step delta
/// is zeroed off the mask and clipped to [-1, 1]. The probe set is drawn once
/// and scored every `probe_every` steps; the best-scoring iterate is returned.
AttackResult run_attack(const Tensor& canonical, int true_class, const ModelParameters& params, const Mask& mask,
                        const AttackConfig& config, std::span<const AnnotatedPhoto> photos = {},
                        const StepObserver& observer = {});

/// clamp(canonical + M.delta, 0, 1).
Tensor apply_perturbation(const Tensor& canonical, const Perturbation& perturbation);
/// clamp(instance + T(M.delta), 0, 1) for an instance synthesized from `sample`.
Tensor apply_perturbation(const Tensor& instance, const Perturbation& perturbation, const TransformSample& sample);
/// Dispatches on whether a pose is given; a non-canonical image without one is an error.
Tensor apply_perturbation(const Tensor& image, const Perturbation& perturbation, const TransformSample* sample);
/// Full-frame photo with the sign located by its corner annotation.
Tensor apply_perturbation_to_photo(const Tensor& photo, const Perturbation& perturbation, const Quad& corners);

}  // namespace rp2
