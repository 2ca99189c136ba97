#include "commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "rp2/archive.hpp"
#include "rp2/attack.hpp"
#include "rp2/dataset.hpp"
#include "rp2/error.hpp"
#include "rp2/eval.hpp"
#include "rp2/image_io.hpp"
#include "rp2/mask_discovery.hpp"
#include "rp2/signs.hpp"
#include "rp2/sticker.hpp"
#include "rp2/training.hpp"
#include "rp2/weights_io.hpp"

namespace rp2::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
  const fs::path probe = dir / ".rp2-write-check";
  std::ofstream out(probe);
  if (!out) throw IoError("directory is not writable: " + dir.string());
  out.close();
  fs::remove(probe, ec);
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw ValidationError(what + " is required");
  if (!fs::exists(path)) throw IoError(what + " not found: " + path);
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) ensure_dir(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

Tensor canonical_for(int true_class, int side, std::uint64_t seed) {
  if (true_class < 0 || true_class >= kReferenceClassCount) {
    throw ValidationError("class must lie in [0, " + std::to_string(kReferenceClassCount - 1) + "]");
  }
  return render_sign(reference_sign_class(true_class), side, seed);
}

std::vector<AnnotatedPhoto> load_photos(const AttackOptions& o) {
  std::vector<AnnotatedPhoto> photos;
  if (o.photos.empty()) return photos;
  require_file(o.annotations, "--annotations");
  FolderLoad load = load_image_folder(o.photos, o.annotations);
  for (const std::string& w : load.warnings) std::cerr << "warning: " << w << '\n';
  for (ImageRecord& r : load.records) {
    if (!r.corners || r.label != o.true_class) continue;
    photos.push_back({r.filename, std::move(r.image), r.corners->corners, r.label});
  }
  if (photos.empty()) std::cerr << "warning: no annotated photos of class " << o.true_class << '\n';
  return photos;
}

DistributionConfig make_distribution(const DistributionOptions& d, std::size_t photo_count) {
  DistributionConfig c;
  c.scale = {d.scale_lo, d.scale_hi};
  c.yaw_deg = {-d.yaw_max, d.yaw_max};
  c.pitch_deg = {-d.pitch_max, d.pitch_max};
  c.brightness = {-d.brightness_max, d.brightness_max};
  c.noise_sigma = d.noise_sigma;
  c.experimental_fraction = d.experimental_fraction >= 0.0 ? d.experimental_fraction
                                                           : (photo_count > 0 ? kDefaultExperimentalFraction : 0.0);
  return c;
}

Mask read_mask_png(const fs::path& path, int side) {
  const Tensor rgb = read_png(path);
  if (rgb.dim(0) != side || rgb.dim(1) != side) {
    throw ValidationError("mask " + path.string() + " must be " + std::to_string(side) + "x" + std::to_string(side));
  }
  Tensor grid({side, side});
  for (std::size_t p = 0; p < grid.size(); ++p) grid[p] = rgb[3 * p] > 0.5f ? 1.0f : 0.0f;
  return Mask(std::move(grid));
}

void write_trace(const fs::path& path, const std::vector<TraceRow>& trace) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "iteration,loss,norm_term,nps_term,expectation_term,probe_success\n";
  char buf[256];
  for (const TraceRow& r : trace) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g,", r.iteration, r.loss, r.parts.norm_term,
                  r.parts.nps_term, r.parts.expectation_term);
    out << buf;
    if (r.probe_success) {
      std::snprintf(buf, sizeof buf, "%.6f", *r.probe_success);
      out << buf;
    }
    out << '\n';
  }
}

void print_report(const EvalReport& r) {
  for (const std::string& w : r.warnings) std::cerr << "warning: " << w << '\n';
  if (r.success_rate) {
    std::cout << "success_rate=" << fixed(*r.success_rate, 3) << " (" << r.numerator << "/" << r.denominator << ", "
              << to_string(r.mode) << ")\n";
  } else {
    std::cout << "success_rate=undefined (" << r.status << ")\n";
  }
  if (r.untargeted_success_rate) std::cout << "untargeted_success_rate=" << fixed(*r.untargeted_success_rate, 3) << '\n';
}

}  // namespace

int run_dataset_gen(const DatasetGenOptions& o) {
  if (o.out.empty()) throw ValidationError("--out is required");
  if (o.per_class < kMinPerClass) {
    throw ValidationError("--per-class must be at least " + std::to_string(kMinPerClass));
  }
  const fs::path out(o.out);
  ensure_dir(out);
  const SignDataset ds = generate_dataset(o.per_class, o.seed, o.threads);
  write_split(ds.train, out / "train");
  write_split(ds.val, out / "val");
  write_split(ds.test, out / "test");
  write_json(out / "dataset.json", {{"per_class", o.per_class}, {"seed", o.seed}, {"classes", kReferenceClassCount}});
  std::cout << "train=" << ds.train.size() << " val=" << ds.val.size() << " test=" << ds.test.size() << '\n';
  return 0;
}

int run_train(const TrainOptions& o) {
  if (o.data.empty() || o.out.empty()) throw ValidationError("--data and --out are required");
  if (o.epochs < 0 || o.batch_size < 1 || !(o.lr > 0.0)) throw ValidationError("bad training hyperparameters");
  const fs::path data(o.data);
  if (!fs::is_directory(data)) throw IoError("data directory not found: " + o.data);
  const fs::path out(o.out);
  if (out.has_parent_path()) ensure_dir(out.parent_path());

  SignDataset ds;
  ds.train = read_split(data / "train");
  ds.val = read_split(data / "val");
  ds.test = read_split(data / "test");
  TrainConfig c;
  c.epochs = o.epochs;
  c.seed = o.seed;
  c.batch_size = o.batch_size;
  c.learning_rate = o.lr;
  c.augmentation = !o.no_augment;
  c.threads = o.threads;
  const TrainResult r = train(ds, c, [](const EpochMetrics& m) {
    std::cerr << "epoch " << m.epoch << " loss=" << fixed(m.train_loss, 4) << " train_acc=" << fixed(m.train_accuracy, 4)
              << " val_acc=" << fixed(m.val_accuracy, 4) << '\n';
  });
  save_weights(r.params, out);
  std::cout << "test_accuracy=" << fixed(accuracy(r.params, ds.test, o.threads), 4) << '\n';
  return 0;
}

int run_attack_command(const AttackOptions& o) {
  require_file(o.model, "--model");
  if (o.out.empty()) throw ValidationError("--out is required");
  if (o.untargeted == o.target.has_value()) throw ValidationError("give exactly one of --target or --untargeted");
  if (!o.palette.empty()) require_file(o.palette, "--palette");
  if (o.mask != "auto" && o.mask != "full") require_file(o.mask, "--mask");
  const ModelParameters params = load_weights(o.model);
  if (o.true_class < 0 || o.true_class >= params.class_count) throw ValidationError("--class out of range");
  if (o.target && (*o.target < 0 || *o.target >= params.class_count)) throw ValidationError("--target out of range");
  const std::vector<AnnotatedPhoto> photos = load_photos(o);
  const fs::path out(o.out);
  ensure_dir(out);

  const SignClassSpec& spec = reference_sign_class(o.true_class);
  const Tensor canonical = canonical_for(o.true_class, o.canonical_side, o.canonical_seed);
  const Tensor sign_mask = sign_surface_mask(spec, o.canonical_side);

  AttackConfig c;
  c.norm = parse_norm(o.norm);
  c.lambda = o.lambda.value_or(c.norm == NormKind::l1 ? kDefaultL1Lambda : kDefaultL2Lambda);
  c.eta = o.eta;
  c.iterations = o.iterations;
  c.batch_size = o.batch_size;
  c.target_class = o.target;
  c.distribution = make_distribution(o.distribution, photos.size());
  if (!o.palette.empty()) c.palette = load_palette(o.palette);
  c.nps_weight = o.nps_weight;
  c.seed = o.seed;
  c.threads = o.threads;
  c.validate(photos.size());

  Mask mask;
  if (o.mask == "full") {
    mask = Mask(sign_mask);
  } else if (o.mask != "auto") {
    mask = read_mask_png(o.mask, o.canonical_side);
    if (mask.coverage() <= 0.0) throw ValidationError("empty mask: " + o.mask + " has no set pixels");
  }

  const Prediction clean = predict(params, canonical_view(canonical));
  if (clean.label != o.true_class) {
    const std::string msg = "clean canonical sign is classified as " + std::to_string(clean.label) + ", not " +
                            std::to_string(o.true_class);
    if (!o.force) throw PremiseError(msg + " (use --force to attack anyway)");
    std::cerr << "warning: " << msg << '\n';
  }

  json extra = to_json(c);
  extra["true_class"] = o.true_class;
  extra["canonical_seed"] = o.canonical_seed;
  extra["mask_source"] = o.mask;
  extra["photo_count"] = photos.size();

  if (o.mask == "auto") {
    MaskDiscoveryOptions mo;
    mo.percentile = o.percentile;
    mo.max_coverage = o.max_coverage;
    const MaskDiscoveryResult d = discover_mask(canonical, o.true_class, params, sign_mask, c, mo, photos);
    mask = d.mask;
    extra["discovery"] = {{"l1_lambda", mo.l1_lambda},
                          {"percentile", mo.percentile},
                          {"min_component_fraction", mo.min_component_fraction},
                          {"max_coverage", mo.max_coverage},
                          {"stage1_probe_success", d.stage1.probe_success}};
  }
  if (mask.coverage() <= 0.0) throw ValidationError("empty mask");

  const AttackResult r = run_attack(canonical, o.true_class, params, mask, c, photos);
  for (const std::string& w : r.warnings) std::cerr << "warning: " << w << '\n';
  extra["probe_success"] = r.probe_success;
  extra["best_iteration"] = r.best_iteration;
  write_archive(out, r.perturbation, extra);
  write_trace(out / "trace.csv", r.trace);
  std::cout << "probe_success=" << fixed(r.probe_success, 4) << " best_iteration=" << r.best_iteration
            << " mask_coverage=" << fixed(mask.coverage(), 4) << '\n';
  return 0;
}

int run_eval(const EvalOptions& o) {
  require_file(o.model, "--model");
  if (o.target && o.untargeted) throw ValidationError("--target and --untargeted are exclusive");
  if (o.k < 1) throw ValidationError("--k must be >= 1");
  const ModelParameters params = load_weights(o.model);

  std::optional<PerturbationArchive> archive;
  if (!o.archive.empty()) archive = read_archive(o.archive);
  int true_class = -1;
  std::optional<int> target = o.target;
  if (o.true_class) {
    true_class = *o.true_class;
  } else if (archive && archive->meta.contains("true_class")) {
    true_class = archive->meta["true_class"].get<int>();
  } else {
    throw ValidationError("--class is required without an archive");
  }
  if (!target && !o.untargeted && archive) target = archive->perturbation.target_class;
  if (!target && !o.untargeted) throw ValidationError("give --target or --untargeted");

  auto archive_canonical = [&]() {
    if (!archive) throw ValidationError("this mode needs --archive");
    const json& m = archive->meta;
    return canonical_for(m.at("true_class").get<int>(), m.at("canonical_side").get<int>(),
                         m.value("canonical_seed", std::uint64_t{7}));
  };

  EvalReport report;
  if (o.kind == "stationary" || o.kind == "crop") {
    std::vector<ConditionPair> pairs;
    if (!o.pairs.empty()) {
      require_file(o.pairs, "--pairs");
      pairs = load_pairs(o.pairs);
    } else {
      const Tensor canonical = archive_canonical();
      const int side = canonical.dim(0);
      if (o.kind == "stationary") {
        const std::vector<StationaryCondition> grid = stationary_grid(side, o.seed);
        std::vector<TransformSample> samples;
        for (const StationaryCondition& g : grid) samples.push_back(g.sample);
        pairs = make_condition_pairs(canonical, archive->perturbation, samples, {}, o.threads);
        for (std::size_t i = 0; i < grid.size(); ++i) {
          pairs[i].distance_tag = grid[i].distance_tag;
          pairs[i].angle_tag = grid[i].angle_tag;
        }
      } else {
        const std::vector<TransformSample> samples = draw_samples(DistributionConfig{}, o.samples, side, o.seed);
        pairs = make_condition_pairs(canonical, archive->perturbation, samples, {}, o.threads);
      }
    }
    report = o.kind == "stationary"
                 ? stationary_success_rate(pairs, true_class, target, params, o.threads)
                 : randomized_crop_eval(pairs, o.jitter, o.seed, true_class, target, params, o.threads);
  } else if (o.kind == "driveby") {
    if (o.simulate == !o.frames.empty()) throw ValidationError("driveby needs exactly one of --simulate or --frames");
    if (o.simulate) {
      const Tensor canonical = archive_canonical();
      DrivePathConfig path;
      path.frame_count = o.frame_count;
      const FrameSequence seq = simulate_drive_by(canonical, archive->perturbation, path, o.seed, o.threads);
      report = drive_by_eval(seq, o.k, true_class, target, params, o.threads);
    } else {
      if (!fs::is_directory(o.frames)) throw IoError("frames directory not found: " + o.frames);
      const std::vector<ConditionPair> frames = load_frames(o.frames);
      report = drive_by_eval(frames, o.k, true_class, target, params, o.threads);
    }
  } else {
    throw ValidationError("eval mode must be stationary, driveby or crop");
  }

  json j = report_to_json(report);
  if (o.kind == "driveby") j["k"] = o.k;
  validate_report_json(j);
  if (!o.out.empty()) write_json(o.out, j);
  print_report(report);
  return 0;
}

int run_export(const ExportOptions& o) {
  if (o.archive.empty() || o.out.empty()) throw ValidationError("--archive and --out are required");
  const PerturbationArchive a = read_archive(o.archive);
  const json& m = a.meta;
  const Tensor canonical =
      canonical_for(m.at("true_class").get<int>(), m.at("canonical_side").get<int>(), m.value("canonical_seed", std::uint64_t{7}));
  PrintablePalette palette = default_palette();
  if (!o.palette.empty()) {
    require_file(o.palette, "--palette");
    palette = load_palette(o.palette);
  }
  const StickerSheet sheet = export_sticker_sheet(canonical, a.perturbation, o.print_side, o.out, palette, o.sign_width_mm);
  std::cout << sheet.path.string() << " patches=" << sheet.patches.size() << '\n';
  return 0;
}

}  // namespace rp2::cli
