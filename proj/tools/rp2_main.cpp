#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"
#include "rp2/error.hpp"

namespace {

using namespace rp2::cli;

void add_eval_mode(CLI::App& eval, const std::string& kind, EvalOptions& o, int& true_class, int& target,
                   std::string& selected) {
  CLI::App* sub = eval.add_subcommand(kind, "Evaluate a " + kind + " experiment");
  sub->add_option("--model", o.model, "Classifier weights (.rpw)");
  sub->add_option("--class", true_class, "True class (defaults to the archive's)");
  sub->add_option("--target", target, "Target class (defaults to the archive's)");
  sub->add_flag("--untargeted", o.untargeted, "Score any misclassification");
  sub->add_option("--pairs", o.pairs, "TSV of clean/perturbed PNG pairs");
  sub->add_option("--archive", o.archive, "Perturbation archive for synthetic conditions");
  sub->add_option("--seed", o.seed, "Seed for synthetic conditions and crops");
  sub->add_option("--out", o.out, "Report JSON path");
  sub->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
  if (kind == "driveby") {
    sub->add_option("--k", o.k, "Classify every k-th frame")->capture_default_str();
    sub->add_option("--frames", o.frames, "Directory with clean/ and perturbed/ frames");
    sub->add_flag("--simulate", o.simulate, "Simulate an approach from --archive");
    sub->add_option("--frame-count", o.frame_count, "Simulated frames")->capture_default_str();
  }
  if (kind == "crop") {
    sub->add_option("--jitter", o.jitter, "Crop jitter as a fraction of the image side")->capture_default_str();
    sub->add_option("--samples", o.samples, "Synthetic samples drawn from --archive")->capture_default_str();
  }
  sub->callback([&selected, &o, kind] {
    selected = "eval";
    o.kind = kind;
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust physical perturbations for traffic-sign classifiers"};
  app.set_config("--config", "", "TOML file with option values; flags override it");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);
  std::string selected;

  DatasetGenOptions gen;
  CLI::App* dataset = app.add_subcommand("dataset", "Procedural sign dataset");
  dataset->require_subcommand(1);
  CLI::App* dataset_gen = dataset->add_subcommand("gen", "Generate train/val/test splits");
  dataset_gen->add_option("--per-class", gen.per_class, "Images per class")->capture_default_str();
  dataset_gen->add_option("--seed", gen.seed, "Seed")->capture_default_str();
  dataset_gen->add_option("--out", gen.out, "Output directory");
  dataset_gen->add_option("--threads", gen.threads, "Worker threads")->check(CLI::PositiveNumber);
  dataset_gen->callback([&] { selected = "dataset"; });

  TrainOptions tr;
  CLI::App* train = app.add_subcommand("train", "Train the reference classifier");
  train->add_option("--data", tr.data, "Dataset directory from 'dataset gen'");
  train->add_option("--out", tr.out, "Weights output (.rpw)");
  train->add_option("--epochs", tr.epochs, "Epochs")->capture_default_str();
  train->add_option("--seed", tr.seed, "Seed")->capture_default_str();
  train->add_option("--batch-size", tr.batch_size, "Minibatch size")->capture_default_str();
  train->add_option("--lr", tr.lr, "Adam step size")->capture_default_str();
  train->add_flag("--no-augment", tr.no_augment, "Disable shift/brightness augmentation");
  train->add_option("--threads", tr.threads, "Worker threads")->check(CLI::PositiveNumber);
  train->callback([&] { selected = "train"; });

  AttackOptions at;
  int attack_target = -1;
  double attack_lambda = -1.0;
  CLI::App* attack = app.add_subcommand("attack", "Optimize a physical perturbation");
  attack->add_option("--model", at.model, "Classifier weights (.rpw)");
  attack->add_option("--class", at.true_class, "True class of the attacked sign")->required();
  attack->add_option("--target", attack_target, "Target class");
  attack->add_flag("--untargeted", at.untargeted, "Push away from the true class instead");
  attack->add_option("--mask", at.mask, "full, auto (two-stage discovery) or a PNG path")->capture_default_str();
  attack->add_option("--out", at.out, "Archive directory");
  attack->add_option("--iterations", at.iterations, "Adam steps")->capture_default_str();
  attack->add_option("--batch-size", at.batch_size, "Samples per step")->capture_default_str();
  attack->add_option("--lambda", attack_lambda, "Norm weight (default 1e-3 for L2, 1e-2 for L1)");
  attack->add_option("--norm", at.norm, "L1 or L2")->capture_default_str();
  attack->add_option("--eta", at.eta, "Adam step size")->capture_default_str();
  attack->add_option("--seed", at.seed, "Seed")->capture_default_str();
  attack->add_option("--palette", at.palette, "Printable palette file");
  attack->add_option("--nps-weight", at.nps_weight, "Weight of the non-printability term")->capture_default_str();
  attack->add_option("--canonical-side", at.canonical_side, "Canonical sign side in pixels")->capture_default_str();
  attack->add_option("--canonical-seed", at.canonical_seed, "Seed of the rendered sign")->capture_default_str();
  attack->add_option("--photos", at.photos, "Folder of annotated photos of the sign");
  attack->add_option("--annotations", at.annotations, "Annotation file for --photos");
  attack->add_option("--experimental-fraction", at.distribution.experimental_fraction,
                     "Share of photo-based samples (default 0.5 with photos)");
  attack->add_option("--scale-min", at.distribution.scale_lo, "Smallest apparent sign scale")->capture_default_str();
  attack->add_option("--scale-max", at.distribution.scale_hi, "Largest apparent sign scale")->capture_default_str();
  attack->add_option("--yaw-max", at.distribution.yaw_max, "Yaw range in degrees")->capture_default_str();
  attack->add_option("--pitch-max", at.distribution.pitch_max, "Pitch range in degrees")->capture_default_str();
  attack->add_option("--brightness-max", at.distribution.brightness_max, "Brightness shift range")->capture_default_str();
  attack->add_option("--noise-sigma", at.distribution.noise_sigma, "Sensor noise")->capture_default_str();
  attack->add_option("--percentile", at.percentile, "Mask discovery saliency percentile")->capture_default_str();
  attack->add_option("--max-coverage", at.max_coverage, "Mask discovery coverage budget")->capture_default_str();
  attack->add_flag("--force", at.force, "Attack even if the clean sign is misclassified");
  attack->add_option("--threads", at.threads, "Worker threads")->check(CLI::PositiveNumber);
  attack->callback([&] { selected = "attack"; });

  EvalOptions ev;
  int eval_class = -1, eval_target = -1;
  CLI::App* eval = app.add_subcommand("eval", "Score perturbations with the success-rate formula");
  eval->require_subcommand(1);
  add_eval_mode(*eval, "stationary", ev, eval_class, eval_target, selected);
  add_eval_mode(*eval, "driveby", ev, eval_class, eval_target, selected);
  add_eval_mode(*eval, "crop", ev, eval_class, eval_target, selected);

  ExportOptions ex;
  CLI::App* exp = app.add_subcommand("export", "Write a printable sticker sheet");
  exp->add_option("--archive", ex.archive, "Perturbation archive");
  exp->add_option("--print-side", ex.print_side, "Printed sign width in pixels")->capture_default_str();
  exp->add_option("--out", ex.out, "Output directory");
  exp->add_option("--palette", ex.palette, "Printable palette file");
  exp->add_option("--sign-width-mm", ex.sign_width_mm, "Physical sign width")->capture_default_str();
  exp->callback([&] { selected = "export"; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (selected == "dataset") return run_dataset_gen(gen);
    if (selected == "train") return run_train(tr);
    if (selected == "attack") {
      if (attack_target >= 0) at.target = attack_target;
      if (attack_lambda >= 0.0) at.lambda = attack_lambda;
      return run_attack_command(at);
    }
    if (selected == "eval") {
      if (eval_class >= 0) ev.true_class = eval_class;
      if (eval_target >= 0) ev.target = eval_target;
      return run_eval(ev);
    }
    if (selected == "export") return run_export(ex);
    std::cerr << app.help();
    return 2;
  } catch (const PremiseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  } catch (const rp2::NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const rp2::FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 5;
  } catch (const rp2::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 5;
  } catch (const rp2::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 5;
  }
}
