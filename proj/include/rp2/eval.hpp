#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include "rp2/attack.hpp"
#include "rp2/classifier.hpp"
#include "rp2/tensor.hpp"
#include "rp2/transform.hpp"

namespace rp2 {

/// A clean image and its attacked counterpart taken under the same conditions.
struct ConditionPair {
  Tensor clean;      // [32, 32, 3]
  Tensor perturbed;  // [32, 32, 3]
  std::string distance_tag;
  std::string angle_tag;
};

struct ConditionOutcome {
  int clean_label = 0;
  float clean_confidence = 0.0f;
  int perturbed_label = 0;
  float perturbed_confidence = 0.0f;
  /// Perturbed-image probability of the target class (of the top class when untargeted).
  float target_confidence = 0.0f;
};

ConditionOutcome make_outcome(const Prediction& clean, const Prediction& perturbed, std::optional<int> target);

/// Success needs a correct clean prediction; then the perturbed prediction
/// must hit the target, or (untargeted) differ from the true class.
bool is_success(const ConditionOutcome& outcome, int true_class, std::optional<int> target);

struct SuccessCount {
  int numerator = 0;
  int denominator = 0;
  double target_confidence_sum = 0.0;  // over successful pairs
};

SuccessCount count_success(std::span<const ConditionOutcome> outcomes, int true_class, std::optional<int> target);

enum class EvalMode { targeted, untargeted };

struct ConditionRecord {
  std::string distance_tag;
  std::string angle_tag;
  ConditionOutcome outcome;
};

struct EvalReport {
  std::vector<ConditionRecord> records;
  int numerator = 0;
  int denominator = 0;
  std::optional<double> success_rate;  // empty when no clean image was classified correctly
  EvalMode mode = EvalMode::targeted;
  int true_class = 0;
  std::optional<int> target_class;
  std::optional<double> average_target_confidence;
  std::string status = "ok";
  /// Frame indices used by drive-by evaluation.
  std::vector<int> sampled_indices;
  /// Untargeted counts, reported alongside targeted ones by the crop study.
  std::optional<int> untargeted_numerator;
  std::optional<double> untargeted_success_rate;
  std::vector<std::string> warnings;
};

/// Builds a report from already-classified conditions.
EvalReport report_from_records(std::vector<ConditionRecord> records, int true_class, std::optional<int> target);

EvalReport stationary_success_rate(std::span<const ConditionPair> pairs, int true_class, std::optional<int> target,
                                   const ModelParameters& params, int threads = 1);

/// Clean/perturbed instances rendered from the same samples. The perturbed
/// member renders the perturbed sign (or the photo with the perturbation
/// pasted at its corners), so lighting and noise act on both alike.
std::vector<ConditionPair> make_condition_pairs(const Tensor& canonical, const Perturbation& perturbation,
                                                std::span<const TransformSample> samples,
                                                std::span<const AnnotatedPhoto> photos = {}, int threads = 1);

/// Fixed grid of distances (5 to 40 ft) and viewing angles (0, 15, 30 deg),
/// with distance mapped to apparent scale 1.0 at 5 ft down to 0.3 at 40 ft.
struct StationaryCondition {
  std::string distance_tag;
  std::string angle_tag;
  TransformSample sample;
};
std::vector<StationaryCondition> stationary_grid(int canonical_side, std::uint64_t seed);
double scale_for_distance_ft(double feet);

/// `count` fresh draws from the distribution on the "eval.samples" stream.
std::vector<TransformSample> draw_samples(const DistributionConfig& config, int count, int canonical_side,
                                          std::uint64_t seed, std::span<const AnnotatedPhoto> photos = {});

struct DrivePathConfig {
  int frame_count = 150;
  double start_scale = 0.15;
  double end_scale = 1.0;
  double yaw_drift_deg = 10.0;
  /// Per-frame jitter of sign position (frame-side units) and roll (degrees).
  double position_jitter = 0.01;
  double roll_jitter_deg = 1.0;
  double crop_margin = 1.15;
  double noise_sigma = 0.01;

  void validate() const;
};

struct FramePair {
  ConditionPair pair;
  TransformSample sample;
};
using FrameSequence = std::vector<FramePair>;

/// Approach toward the sign: scale ramps linearly, yaw drifts smoothly
/// within +-yaw_drift_deg, and every frame carries a little jitter. Clean and
/// perturbed frames share their sample.
FrameSequence simulate_drive_by(const Tensor& canonical, const Perturbation& perturbation,
                                const DrivePathConfig& path, std::uint64_t seed, int threads = 1);

/// Classifies frames 0, k, 2k, ... and counts them like stationary pairs.
EvalReport drive_by_eval(std::span<const ConditionPair> frames, int k, int true_class, std::optional<int> target,
                         const ModelParameters& params, int threads = 1);
EvalReport drive_by_eval(const FrameSequence& frames, int k, int true_class, std::optional<int> target,
                         const ModelParameters& params, int threads = 1);

/// Re-crops every pair with seeded jitter (the same window for both members)
/// before classification. The window keeps at least (1 - crop_jitter) of the
/// image side, so most of the sign stays in view.
EvalReport randomized_crop_eval(std::span<const ConditionPair> pairs, double crop_jitter, std::uint64_t seed,
                                int true_class, std::optional<int> target, const ModelParameters& params,
                                int threads = 1);

std::string to_string(EvalMode mode);
nlohmann::json report_to_json(const EvalReport& report);
/// Throws FormatError unless `j` has the report layout.
void validate_report_json(const nlohmann::json& j);

/// Tab-separated "clean.png<TAB>perturbed.png<TAB>distance<TAB>angle" lines,
/// relative paths resolved against the file's directory. Throws FormatError.
std::vector<ConditionPair> load_pairs(const std::filesystem::path& tsv);
/// Directory with clean/ and perturbed/ subfolders of equally named PNG frames.
std::vector<ConditionPair> load_frames(const std::filesystem::path& dir);

}  // namespace rp2
