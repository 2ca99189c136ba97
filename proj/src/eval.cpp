#include "rp2/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "rp2/error.hpp"
#include "rp2/image_io.hpp"
#include "rp2/parallel.hpp"
#include "rp2/rng.hpp"

namespace rp2 {

ConditionOutcome make_outcome(const Prediction& clean, const Prediction& perturbed, std::optional<int> target) {
  ConditionOutcome o;
  o.clean_label = clean.label;
  o.clean_confidence = clean.confidence;
  o.perturbed_label = perturbed.label;
  o.perturbed_confidence = perturbed.confidence;
  if (target) {
    if (*target < 0 || static_cast<std::size_t>(*target) >= perturbed.probabilities.size()) {
      throw ValidationError("target class out of range");
    }
    o.target_confidence = perturbed.probabilities[static_cast<std::size_t>(*target)];
  } else {
    o.target_confidence = perturbed.confidence;
  }
  return o;
}

bool is_success(const ConditionOutcome& o, int true_class, std::optional<int> target) {
  if (o.clean_label != true_class) return false;
  return target ? o.perturbed_label == *target : o.perturbed_label != true_class;
}

SuccessCount count_success(std::span<const ConditionOutcome> outcomes, int true_class, std::optional<int> target) {
  SuccessCount c;
  for (const ConditionOutcome& o : outcomes) {
    if (o.clean_label != true_class) continue;
    ++c.denominator;
    if (is_success(o, true_class, target)) {
      ++c.numerator;
      c.target_confidence_sum += o.target_confidence;
    }
  }
  return c;
}

EvalReport report_from_records(std::vector<ConditionRecord> records, int true_class, std::optional<int> target) {
  EvalReport r;
  r.mode = target ? EvalMode::targeted : EvalMode::untargeted;
  r.true_class = true_class;
  r.target_class = target;
  std::vector<ConditionOutcome> outcomes;
  outcomes.reserve(records.size());
  for (const ConditionRecord& rec : records) outcomes.push_back(rec.outcome);
  const SuccessCount c = count_success(outcomes, true_class, target);
  r.numerator = c.numerator;
  r.denominator = c.denominator;
  if (c.denominator > 0) {
    r.success_rate = static_cast<double>(c.numerator) / c.denominator;
  } else {
    r.status = "undefined: no clean image was classified as the true class";
  }
  if (c.numerator > 0) r.average_target_confidence = c.target_confidence_sum / c.numerator;
  r.records = std::move(records);
  return r;
}

namespace {

std::vector<ConditionRecord> classify_pairs(std::span<const ConditionPair> pairs, std::optional<int> target,
                                            const ModelParameters& params, int threads) {
  std::vector<ConditionRecord> records(pairs.size());
  parallel_for(pairs.size(), threads, [&](std::size_t i) {
    const ConditionPair& p = pairs[i];
    require_shape(p.clean, {params.input_side, params.input_side, 3}, "clean image");
    require_shape(p.perturbed, {params.input_side, params.input_side, 3}, "perturbed image");
    records[i] = {p.distance_tag, p.angle_tag,
                  make_outcome(predict(params, p.clean), predict(params, p.perturbed), target)};
  });
  return records;
}

void check_target(std::optional<int> target, int true_class, const ModelParameters& params) {
  if (true_class < 0 || true_class >= params.class_count) throw ValidationError("true class out of range");
  if (target && (*target < 0 || *target >= params.class_count)) throw ValidationError("target class out of range");
}

std::string format_number(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

EvalReport stationary_success_rate(std::span<const ConditionPair> pairs, int true_class, std::optional<int> target,
                                   const ModelParameters& params, int threads) {
  if (pairs.empty()) throw ValidationError("stationary evaluation needs at least one pair");
  check_target(target, true_class, params);
  return report_from_records(classify_pairs(pairs, target, params, threads), true_class, target);
}

std::vector<ConditionPair> make_condition_pairs(const Tensor& canonical, const Perturbation& perturbation,
                                                std::span<const TransformSample> samples,
                                                std::span<const AnnotatedPhoto> photos, int threads) {
  const Tensor attacked = apply_perturbation(canonical, perturbation);
  std::vector<AnnotatedPhoto> attacked_photos(photos.begin(), photos.end());
  for (AnnotatedPhoto& p : attacked_photos) p.image = apply_perturbation_to_photo(p.image, perturbation, p.corners);
  std::vector<ConditionPair> pairs(samples.size());
  parallel_for(samples.size(), threads, [&](std::size_t i) {
    pairs[i].clean = synthesize_instance(canonical, samples[i], photos);
    pairs[i].perturbed = synthesize_instance(attacked, samples[i], attacked_photos);
    pairs[i].distance_tag = "sample" + std::to_string(i);
  });
  return pairs;
}

double scale_for_distance_ft(double feet) { return 1.0 - (feet - 5.0) / 35.0 * 0.7; }

std::vector<StationaryCondition> stationary_grid(int canonical_side, std::uint64_t seed) {
  static constexpr double kDistances[] = {5, 10, 15, 20, 25, 30, 40};
  static constexpr double kAngles[] = {0, 15, 30};
  std::vector<StationaryCondition> grid;
  Rng rng = make_rng(seed, "eval.stationary");
  for (double d : kDistances) {
    for (double a : kAngles) {
      PoseSpec pose;
      pose.scale = scale_for_distance_ft(d);
      pose.yaw_deg = a;
      pose.crop_margin = 1.15;
      pose.background_id = uniform_int(rng, 0, 63);
      pose.noise_seed = rng();
      pose.noise_sigma = 0.01;
      grid.push_back({format_number(d) + "ft", format_number(a) + "deg", make_synthetic_sample(pose, canonical_side)});
    }
  }
  return grid;
}

std::vector<TransformSample> draw_samples(const DistributionConfig& config, int count, int canonical_side,
                                          std::uint64_t seed, std::span<const AnnotatedPhoto> photos) {
  if (count < 0) throw ValidationError("sample count must be non-negative");
  Rng rng = make_rng(seed, "eval.samples");
  std::vector<TransformSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(sample_transform(config, rng, canonical_side, photos));
  return out;
}

void DrivePathConfig::validate() const {
  if (frame_count < 20) throw ValidationError("drive-by path needs at least 20 frames");
  if (!(start_scale > 0.0 && start_scale <= end_scale)) throw ValidationError("scale ramp must be positive and increasing");
  if (!(crop_margin >= 1.0)) throw ValidationError("crop margin must be >= 1");
  if (yaw_drift_deg < 0.0 || position_jitter < 0.0 || roll_jitter_deg < 0.0 || noise_sigma < 0.0) {
    throw ValidationError("drive-by jitter settings must be non-negative");
  }
}

FrameSequence simulate_drive_by(const Tensor& canonical, const Perturbation& perturbation,
                                const DrivePathConfig& path, std::uint64_t seed, int threads) {
  path.validate();
  const int side = canonical.dim(0);
  Rng rng = make_rng(seed, "eval.driveby");
  const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double brightness = uniform(rng, -0.1, 0.1);
  const int background = uniform_int(rng, 0, 63);
  const double lateral = uniform(rng, -0.05, 0.05);

  std::vector<TransformSample> samples;
  std::vector<double> yaws;
  const int n = path.frame_count;
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / (n - 1);
    PoseSpec pose;
    pose.scale = path.start_scale + (path.end_scale - path.start_scale) * t;
    pose.yaw_deg = path.yaw_drift_deg * std::sin(phase + 1.5 * std::numbers::pi * t);
    pose.roll_deg = uniform(rng, -path.roll_jitter_deg, path.roll_jitter_deg);
    // The sign drifts toward the frame edge as the camera gets close.
    pose.offset_x = lateral * t + uniform(rng, -path.position_jitter, path.position_jitter);
    pose.offset_y = uniform(rng, -path.position_jitter, path.position_jitter);
    pose.crop_margin = path.crop_margin;
    pose.brightness = brightness;
    pose.background_id = background;
    pose.noise_seed = rng();
    pose.noise_sigma = path.noise_sigma;
    samples.push_back(make_synthetic_sample(pose, side));
    yaws.push_back(pose.yaw_deg);
  }
  const std::vector<ConditionPair> pairs = make_condition_pairs(canonical, perturbation, samples, {}, threads);
  FrameSequence seq;
  seq.reserve(pairs.size());
  for (int i = 0; i < n; ++i) {
    FramePair f{pairs[static_cast<std::size_t>(i)], samples[static_cast<std::size_t>(i)]};
    f.pair.distance_tag = "frame" + std::to_string(i);
    f.pair.angle_tag = format_number(std::round(yaws[static_cast<std::size_t>(i)])) + "deg";
    seq.push_back(std::move(f));
  }
  return seq;
}

EvalReport drive_by_eval(std::span<const ConditionPair> frames, int k, int true_class, std::optional<int> target,
                         const ModelParameters& params, int threads) {
  if (k < 1) throw ValidationError("k must be >= 1");
  if (frames.empty()) throw ValidationError("drive-by evaluation needs at least one frame");
  check_target(target, true_class, params);
  std::vector<ConditionPair> sampled;
  std::vector<int> indices;
  for (std::size_t i = 0; i < frames.size(); i += static_cast<std::size_t>(k)) {
    sampled.push_back(frames[i]);
    indices.push_back(static_cast<int>(i));
  }
  EvalReport r = report_from_records(classify_pairs(sampled, target, params, threads), true_class, target);
  r.sampled_indices = std::move(indices);
  if (r.sampled_indices.size() < 2) {
    r.warnings.push_back("only " + std::to_string(r.sampled_indices.size()) + " frame sampled with k=" +
                         std::to_string(k));
  }
  return r;
}

EvalReport drive_by_eval(const FrameSequence& frames, int k, int true_class, std::optional<int> target,
                         const ModelParameters& params, int threads) {
  std::vector<ConditionPair> pairs;
  pairs.reserve(frames.size());
  for (const FramePair& f : frames) pairs.push_back(f.pair);
  return drive_by_eval(pairs, k, true_class, target, params, threads);
}

EvalReport randomized_crop_eval(std::span<const ConditionPair> pairs, double crop_jitter, std::uint64_t seed,
                                int true_class, std::optional<int> target, const ModelParameters& params,
                                int threads) {
  if (!(crop_jitter >= 0.0 && crop_jitter <= 0.2)) throw ValidationError("crop jitter must lie in [0, 0.2]");
  if (pairs.empty()) throw ValidationError("crop evaluation needs at least one pair");
  check_target(target, true_class, params);
  Rng rng = make_rng(seed, "eval.crop");
  std::vector<ConditionPair> cropped(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const int h = pairs[i].clean.dim(0);
    const int w = pairs[i].clean.dim(1);
    const double keep = 1.0 - uniform(rng, 0.0, crop_jitter);
    const double fx = uniform(rng, 0.0, 1.0);
    const double fy = uniform(rng, 0.0, 1.0);
    const CropRect rect{fx * w * (1.0 - keep), fy * h * (1.0 - keep), w * keep, h * keep};
    cropped[i] = {crop_resize(pairs[i].clean, rect, h), crop_resize(pairs[i].perturbed, rect, h),
                  pairs[i].distance_tag, pairs[i].angle_tag};
  }
  std::vector<ConditionRecord> records = classify_pairs(cropped, target, params, threads);
  std::vector<ConditionOutcome> outcomes;
  for (const ConditionRecord& rec : records) outcomes.push_back(rec.outcome);
  const SuccessCount untargeted = count_success(outcomes, true_class, std::nullopt);
  EvalReport r = report_from_records(std::move(records), true_class, target);
  r.untargeted_numerator = untargeted.numerator;
  if (untargeted.denominator > 0) {
    r.untargeted_success_rate = static_cast<double>(untargeted.numerator) / untargeted.denominator;
  }
  return r;
}

std::string to_string(EvalMode mode) { return mode == EvalMode::targeted ? "targeted" : "untargeted"; }

nlohmann::json report_to_json(const EvalReport& r) {
  using nlohmann::json;
  json j;
  j["success_rate"] = r.success_rate ? json(*r.success_rate) : json(nullptr);
  j["numerator"] = r.numerator;
  j["denominator"] = r.denominator;
  j["mode"] = to_string(r.mode);
  j["true_class"] = r.true_class;
  j["target_class"] = r.target_class ? json(*r.target_class) : json(nullptr);
  j["average_target_confidence"] = r.average_target_confidence ? json(*r.average_target_confidence) : json(nullptr);
  j["status"] = r.status;
  json rows = json::array();
  for (const ConditionRecord& rec : r.records) {
    rows.push_back({{"distance_tag", rec.distance_tag},
                    {"angle_tag", rec.angle_tag},
                    {"clean_top", {rec.outcome.clean_label, rec.outcome.clean_confidence}},
                    {"perturbed_top", {rec.outcome.perturbed_label, rec.outcome.perturbed_confidence}}});
  }
  j["per_condition"] = rows;
  if (!r.sampled_indices.empty()) j["sampled_indices"] = r.sampled_indices;
  if (r.untargeted_numerator) {
    j["untargeted_numerator"] = *r.untargeted_numerator;
    j["untargeted_success_rate"] = r.untargeted_success_rate ? json(*r.untargeted_success_rate) : json(nullptr);
  }
  j["warnings"] = r.warnings;
  return j;
}

void validate_report_json(const nlohmann::json& j) {
  auto fail = [](const std::string& why) { throw FormatError("report schema: " + why); };
  if (!j.is_object()) fail("not an object");
  for (const char* key : {"success_rate", "numerator", "denominator", "mode", "per_condition"}) {
    if (!j.contains(key)) fail(std::string("missing field '") + key + "'");
  }
  if (!j["numerator"].is_number_integer() || !j["denominator"].is_number_integer()) fail("counts must be integers");
  const auto num = j["numerator"].get<long long>();
  const auto den = j["denominator"].get<long long>();
  if (num < 0 || num > den) fail("need 0 <= numerator <= denominator");
  const auto& rate = j["success_rate"];
  if (den == 0) {
    if (!rate.is_null()) fail("success_rate must be null when denominator is 0");
  } else {
    if (!rate.is_number()) fail("success_rate must be a number");
    if (std::abs(rate.get<double>() - static_cast<double>(num) / den) > 1e-9) fail("success_rate != numerator/denominator");
  }
  if (!j["mode"].is_string() || (j["mode"] != "targeted" && j["mode"] != "untargeted")) fail("bad mode");
  if (!j["per_condition"].is_array()) fail("per_condition must be an array");
  if (static_cast<long long>(j["per_condition"].size()) < den) fail("denominator exceeds condition count");
  for (const auto& row : j["per_condition"]) {
    if (!row.is_object() || !row.contains("distance_tag") || !row.contains("angle_tag")) fail("condition row tags");
    if (!row["distance_tag"].is_string() || !row["angle_tag"].is_string()) fail("condition tags must be strings");
    for (const char* key : {"clean_top", "perturbed_top"}) {
      if (!row.contains(key)) fail(std::string("condition row missing ") + key);
      const auto& top = row[key];
      if (!top.is_array() || top.size() != 2 || !top[0].is_number_integer() || !top[1].is_number()) {
        fail(std::string(key) + " must be [label, confidence]");
      }
    }
  }
}

namespace {

Tensor load_instance(const std::filesystem::path& path) {
  Tensor img = read_png(path);
  if (img.dim(0) != kInstanceSide || img.dim(1) != kInstanceSide) {
    throw FormatError(path.string() + ": expected a 32x32 image, got " + shape_string(img.shape()));
  }
  return img;
}

}  // namespace

std::vector<ConditionPair> load_pairs(const std::filesystem::path& tsv) {
  std::ifstream in(tsv);
  if (!in) throw FormatError("cannot open pairs file " + tsv.string());
  const std::filesystem::path base = tsv.parent_path();
  std::vector<ConditionPair> pairs;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, '\t')) fields.push_back(f);
    if (fields.size() != 4) {
      throw FormatError(tsv.string() + ":" + std::to_string(line_no) + ": expected 4 tab-separated fields");
    }
    try {
      pairs.push_back({load_instance(base / fields[0]), load_instance(base / fields[1]), fields[2], fields[3]});
    } catch (const IoError& e) {
      throw FormatError(tsv.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (pairs.empty()) throw FormatError(tsv.string() + ": no pairs");
  return pairs;
}

std::vector<ConditionPair> load_frames(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const fs::path clean_dir = dir / "clean";
  const fs::path pert_dir = dir / "perturbed";
  if (!fs::is_directory(clean_dir) || !fs::is_directory(pert_dir)) {
    throw FormatError(dir.string() + ": expected clean/ and perturbed/ subdirectories");
  }
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(clean_dir)) {
    if (entry.path().extension() == ".png") names.push_back(entry.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  if (names.empty()) throw FormatError(clean_dir.string() + ": no PNG frames");
  std::vector<ConditionPair> frames;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (!fs::exists(pert_dir / names[i])) throw FormatError("no perturbed frame for " + names[i]);
    frames.push_back({load_instance(clean_dir / names[i]), load_instance(pert_dir / names[i]),
                      "frame" + std::to_string(i), ""});
  }
  return frames;
}

}  // namespace rp2
