#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace rp2::cli {

/// Clean canonical sign is not classified as its true class.
class PremiseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetGenOptions {
  int per_class = 100;
  std::uint64_t seed = 1;
  std::string out;
  int threads = 1;
};

struct TrainOptions {
  std::string data;
  std::string out;
  int epochs = 12;
  std::uint64_t seed = 1;
  int batch_size = 32;
  double lr = 1e-3;
  bool no_augment = false;
  int threads = 1;
};

struct DistributionOptions {
  double scale_lo = 0.3, scale_hi = 1.0;
  double yaw_max = 60.0;
  double pitch_max = 15.0;
  double brightness_max = 0.3;
  double noise_sigma = 0.01;
  double experimental_fraction = -1.0;  // negative: default for the photo count
};

struct AttackOptions {
  std::string model;
  int true_class = -1;
  std::optional<int> target;
  bool untargeted = false;
  std::string mask = "full";
  std::string out;
  int iterations = 1000;
  int batch_size = 16;
  std::optional<double> lambda;
  std::string norm = "L2";
  double eta = 1e-2;
  std::uint64_t seed = 1;
  std::string palette;
  double nps_weight = 1.0;
  int canonical_side = 64;
  std::uint64_t canonical_seed = 7;
  std::string photos;
  std::string annotations;
  double percentile = 90.0;
  double max_coverage = 0.4;
  DistributionOptions distribution;
  bool force = false;
  int threads = 1;
};

struct EvalOptions {
  std::string kind;  // stationary | driveby | crop
  std::string model;
  std::optional<int> true_class;
  std::optional<int> target;
  bool untargeted = false;
  std::string pairs;
  std::string archive;
  std::string frames;
  bool simulate = false;
  int k = 10;
  int frame_count = 150;
  int samples = 256;
  double jitter = 0.1;
  std::uint64_t seed = 1;
  std::string out;
  int threads = 1;
};

struct ExportOptions {
  std::string archive;
  int print_side = 512;
  std::string out;
  std::string palette;
  double sign_width_mm = 750.0;
};

int run_dataset_gen(const DatasetGenOptions& o);
int run_train(const TrainOptions& o);
int run_attack_command(const AttackOptions& o);
int run_eval(const EvalOptions& o);
int run_export(const ExportOptions& o);

}  // namespace rp2::cli
