#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "rp2/classifier.hpp"
#include "rp2/dataset.hpp"
#include "rp2/error.hpp"
#include "rp2/training.hpp"
#include "rp2/weights_io.hpp"
#include "suites.hpp"

using namespace rp2;
using rp2::testing::Gen;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "rp2_unit_classifier";
  fs::create_directories(dir);
  return dir / name;
}

ModelParameters random_reference(std::uint64_t seed) {
  ModelParameters p = init_parameters(kReferenceArchitecture, 8, seed);
  Gen g(seed);
  for (Tensor& t : p.tensors) {
    if (t.rank() == 1) t = g.tensor(t.shape(), -0.1, 0.1);
  }
  return p;
}

}  // namespace

TEST(Classifier, ReferenceShapes) {
  const ModelParameters p = zero_parameters(kReferenceArchitecture, 8);
  ASSERT_EQ(p.tensors.size(), 8u);
  EXPECT_EQ(p.kernels(0).shape(), (Shape{3, 3, 3, 16}));
  EXPECT_EQ(p.kernels(1).shape(), (Shape{3, 3, 16, 32}));
  EXPECT_EQ(p.kernels(2).shape(), (Shape{3, 3, 32, 64}));
  EXPECT_EQ(p.fc_weights().shape(), (Shape{4 * 4 * 64, 8}));
  EXPECT_EQ(p.layer_names().front(), "conv1.kernels");
  EXPECT_THROW(zero_parameters(kReferenceArchitecture, 8, 64), ValidationError);
}

TEST(Classifier, ZeroImageZeroWeightsGivesBias) {
  ModelParameters p = zero_parameters(kReferenceArchitecture, 8);
  for (int k = 0; k < 8; ++k) p.tensors.back()[k] = 0.25f * k;
  const Tensor logits = forward(p, Tensor({1, 32, 32, 3}));
  for (int k = 0; k < 8; ++k) EXPECT_EQ(logits[k], 0.25f * k);
}

TEST(Classifier, RejectsBadInput) {
  const ModelParameters p = zero_parameters(kReferenceArchitecture, 8);
  EXPECT_THROW(forward(p, Tensor({1, 16, 16, 3})), ShapeError);
  Tensor img({1, 32, 32, 3}, 0.5f);
  img[7] = 1.5f;
  EXPECT_THROW(forward(p, img), ValidationError);
}

TEST(Classifier, MatchesLayerwiseOracle) {
  Gen g(21);
  for (int trial = 0; trial < 5; ++trial) {
    const ModelParameters p = random_reference(100 + trial);
    const Tensor img = g.tensor({32, 32, 3}, 0.0, 1.0);
    std::vector<std::vector<double>> td;
    for (const Tensor& t : p.tensors) td.push_back(rp2::testing::to_double(t));
    const std::vector<double> want = rp2::testing::classifier_logits_ref(p, td, rp2::testing::to_double(img), 32);
    const Tensor got = forward(p, img.reshaped({1, 32, 32, 3}));
    for (int k = 0; k < 8; ++k) EXPECT_NEAR(got[k], want[k], 1e-4);
  }
}

TEST(Classifier, BatchPermutationEquivariant) {
  Gen g(22);
  const ModelParameters p = random_reference(5);
  std::vector<Tensor> imgs;
  for (int i = 0; i < 4; ++i) imgs.push_back(g.tensor({32, 32, 3}, 0.0, 1.0));
  imgs.push_back(imgs[0]);
  const Tensor logits = forward(p, stack_images(imgs));
  std::vector<Tensor> reversed(imgs.rbegin(), imgs.rend());
  const Tensor rlogits = forward(p, stack_images(reversed));
  const int n = 5;
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < 8; ++k) EXPECT_EQ(logits.at({i, k}), rlogits.at({n - 1 - i, k}));
  }
  for (int k = 0; k < 8; ++k) EXPECT_EQ(logits.at({0, k}), logits.at({4, k}));
}

TEST(Classifier, GradientsMatchFiniteDifferences) {
  const auto r = rp2::testing::classifier_gradient_suite(100, 23);
  EXPECT_LE(r.worst, 1e-2) << r.worst_case;
}

TEST(Prediction, UniformLogitsTieToClassZero) {
  const std::vector<float> logits(8, 0.3f);
  const Prediction p = prediction_from_logits(logits);
  EXPECT_EQ(p.label, 0);
  EXPECT_NEAR(p.confidence, 0.125f, 1e-6);
}

TEST(Prediction, TwoClass) {
  const std::vector<float> logits{0.0f, 10.0f};
  const Prediction p = prediction_from_logits(logits);
  EXPECT_EQ(p.label, 1);
  EXPECT_NEAR(p.confidence, 0.99995f, 1e-5);
}

TEST(Prediction, ShiftInvariant) {
  Gen g(24);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<float> logits(6);
    for (float& v : logits) v = static_cast<float>(g.uniform(-4, 4));
    std::vector<float> shifted = logits;
    const float c = static_cast<float>(g.uniform(-50, 50));
    for (float& v : shifted) v += c;
    EXPECT_EQ(prediction_from_logits(logits).label, prediction_from_logits(shifted).label);
  }
}

TEST(Weights, RoundTripIsBitExact) {
  const ModelParameters p = random_reference(31);
  const fs::path path = temp_path("roundtrip.rpw");
  save_weights(p, path);
  const ModelParameters q = load_weights(path);
  EXPECT_EQ(q.architecture_id, p.architecture_id);
  EXPECT_EQ(q.class_count, p.class_count);
  EXPECT_EQ(q.tensors, p.tensors);
  Gen g(32);
  for (int i = 0; i < 100; ++i) {
    const Tensor img = g.tensor({32, 32, 3}, 0.0, 1.0);
    const Prediction a = predict(p, img), b = predict(q, img);
    EXPECT_EQ(a.label, b.label);
    EXPECT_EQ(a.probabilities, b.probabilities);
  }
}

TEST(Weights, BadMagic) {
  const fs::path path = temp_path("badmagic.rpw");
  save_weights(zero_parameters(kToyArchitecture, 3), path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.put('X');
  }
  try {
    load_weights(path);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("bad magic"), std::string::npos);
  }
}

TEST(Weights, TruncationNamesTheLayer) {
  const ModelParameters p = random_reference(33);
  const fs::path path = temp_path("full.rpw");
  save_weights(p, path);
  const auto size = fs::file_size(path);
  std::vector<char> bytes(size);
  std::ifstream(path, std::ios::binary).read(bytes.data(), static_cast<std::streamsize>(size));
  const std::vector<std::string> names = p.layer_names();
  // Header: magic, id length, id, class count, input side.
  std::size_t offset = 4 + 4 + p.architecture_id.size() + 8;
  for (std::size_t layer = 0; layer < p.tensors.size(); ++layer) {
    const Tensor& t = p.tensors[layer];
    const std::size_t header = 4 + 4 * t.shape().size();
    const std::size_t cut = offset + header + (t.size() * 4) / 2;
    const fs::path cut_path = temp_path("cut.rpw");
    std::ofstream(cut_path, std::ios::binary | std::ios::trunc).write(bytes.data(), static_cast<std::streamsize>(cut));
    try {
      load_weights(cut_path);
      FAIL() << "no error for cut inside " << names[layer];
    } catch (const FormatError& e) {
      EXPECT_NE(std::string(e.what()).find(names[layer]), std::string::npos) << e.what();
    }
    offset += header + t.size() * 4;
  }
  EXPECT_EQ(offset, size);
}

TEST(Weights, ArchitectureMismatch) {
  const fs::path path = temp_path("toy.rpw");
  save_weights(zero_parameters(kToyArchitecture, 3), path);
  EXPECT_NO_THROW(load_weights(path));
  RpwFile f;
  f.architecture_id = "not-a-model";
  f.class_count = 3;
  f.input_side = 32;
  f.tensors = {Tensor({1}, 1.0f)};
  write_rpw(f, path);
  try {
    load_weights(path);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("architecture mismatch"), std::string::npos);
  }
}

namespace {

SignDataset tiny_dataset(int per_split) {
  SignDataset ds;
  Gen g(41);
  auto make = [&](int n) {
    DatasetSplit s;
    std::vector<Tensor> imgs;
    for (int i = 0; i < n; ++i) {
      imgs.push_back(g.tensor({32, 32, 3}, 0.0, 1.0));
      s.labels.push_back(i % 8);
      s.indices.push_back(i);
    }
    s.images = stack_images(imgs);
    return s;
  };
  ds.train = make(per_split);
  ds.val = make(per_split);
  ds.test = make(per_split);
  return ds;
}

}  // namespace

TEST(Training, FirstStepLowersLossOnTwoImages) {
  const SignDataset ds = tiny_dataset(2);
  ModelParameters p = init_parameters(kReferenceArchitecture, 8, 3);
  AdamState state(AdamConfig{}, p.tensors);
  const std::vector<int> labels = ds.train.labels;
  const double before = train_step(p, state, ds.train.images, labels);
  const double after = batch_loss(p, ds.train.images, labels);
  EXPECT_LT(after, before);
}

TEST(Training, DeterministicAndThreadInvariant) {
  const SignDataset ds = tiny_dataset(16);
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 8;
  const TrainResult a = train(ds, c);
  const TrainResult b = train(ds, c);
  c.threads = 3;
  const TrainResult t = train(ds, c);
  EXPECT_EQ(a.params.tensors, b.params.tensors);
  EXPECT_EQ(a.params.tensors, t.params.tensors);
  ASSERT_EQ(a.metrics.size(), 3u);  // epoch 0 is the initialization
}

TEST(Training, ZeroEpochsReturnsInitialization) {
  const SignDataset ds = tiny_dataset(16);
  TrainConfig c;
  c.epochs = 0;
  c.batch_size = 8;
  const TrainResult r = train(ds, c);
  EXPECT_EQ(r.best_epoch, 0);
  ASSERT_EQ(r.metrics.size(), 1u);
  EXPECT_EQ(r.params.tensors, init_parameters(kReferenceArchitecture, 8, c.seed).tensors);
}

TEST(Training, RejectsEmptySplitsAndBadBatch) {
  SignDataset ds = tiny_dataset(4);
  TrainConfig c;
  c.batch_size = 8;
  EXPECT_THROW(train(ds, c), ValidationError);
  ds.val = DatasetSplit{};
  c.batch_size = 2;
  EXPECT_THROW(train(ds, c), ValidationError);
}

TEST(Training, DivergenceReportsEpoch) {
  const SignDataset ds = tiny_dataset(16);
  TrainConfig c;
  c.epochs = 3;
  c.batch_size = 8;
  c.learning_rate = 1e30;
  try {
    train(ds, c);
    FAIL() << "expected divergence";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos) << e.what();
  }
}
