#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "rp2/attack.hpp"
#include "rp2/error.hpp"
#include "rp2/palette.hpp"
#include "rp2/signs.hpp"
#include "suites.hpp"

using namespace rp2;
using rp2::testing::Gen;

namespace {

constexpr int kSide = 32;

ModelParameters toy_model(std::uint64_t seed) {
  ModelParameters p = init_parameters(kToyArchitecture, kReferenceClassCount, seed);
  Gen g(seed);
  for (Tensor& t : p.tensors) {
    if (t.rank() == 1) t = g.tensor(t.shape(), -0.1, 0.1);
  }
  return p;
}

AttackConfig small_config() {
  AttackConfig c;
  c.iterations = 12;
  c.batch_size = 3;
  c.probe_size = 8;
  c.probe_every = 5;
  c.target_class = 3;
  c.seed = 5;
  return c;
}

Mask square_mask(int side, int x0, int y0, int w) {
  Tensor grid({side, side});
  for (int y = y0; y < y0 + w; ++y)
    for (int x = x0; x < x0 + w; ++x) grid.at({y, x}) = 1.0f;
  return Mask(grid);
}

std::vector<BatchItem> make_batch(const Tensor& canonical, const DistributionConfig& dist, int n, std::uint64_t seed) {
  Rng rng = make_rng(seed, "test.batch");
  std::vector<BatchItem> batch(static_cast<std::size_t>(n));
  for (BatchItem& item : batch) {
    item.sample = sample_transform(dist, rng, canonical.dim(0));
    item.instance = synthesize_instance(canonical, item.sample);
  }
  return batch;
}

}  // namespace

TEST(Palette, DefaultAndNearest) {
  const PrintablePalette p = default_palette();
  EXPECT_EQ(p.colors.size(), 27u);
  EXPECT_NO_THROW(p.validate());
  const Rgb n = nearest_palette_color(p, {0.3f, 0.8f, 0.1f});
  EXPECT_EQ(n, (Rgb{0.5f, 1.0f, 0.0f}));
  // Equidistant between 0 and 0.5 on one channel: the earlier entry wins.
  EXPECT_EQ(nearest_palette_color(p, {0.25f, 0.0f, 0.0f}), (Rgb{0.0f, 0.0f, 0.0f}));
  EXPECT_THROW((PrintablePalette{"dup", {{0, 0, 0}, {0, 0, 0}}}.validate()), ValidationError);
  EXPECT_THROW((PrintablePalette{"empty", {}}.validate()), ValidationError);
  EXPECT_THROW((PrintablePalette{"range", {{1.5f, 0, 0}}}.validate()), ValidationError);
}

TEST(Nps, ZeroWhenEveryPixelIsAPaletteColor) {
  const PrintablePalette p = default_palette();
  Tensor canonical({4, 4, 3});
  for (int i = 0; i < 16; ++i) {
    const Rgb& c = p.colors[static_cast<std::size_t>(i)];
    canonical[3 * i] = c.r;
    canonical[3 * i + 1] = c.g;
    canonical[3 * i + 2] = c.b;
  }
  const NpsResult r = nps(canonical, Tensor({4, 4, 3}), Mask::full(4), p);
  EXPECT_EQ(r.score, 0.0);
  for (float g : r.grad.values()) EXPECT_EQ(g, 0.0f);
}

TEST(Nps, SingleColorIsScaledL1) {
  const PrintablePalette p{"one", {{0.0f, 0.0f, 0.0f}}};
  const Tensor canonical({2, 2, 3}, 0.6f);
  const NpsResult r = nps(canonical, Tensor({2, 2, 3}), Mask::full(2), p);
  EXPECT_NEAR(r.score, 0.6, 1e-6);
  for (float g : r.grad.values()) EXPECT_NEAR(g, 1.0 / 3.0 / 4.0, 1e-6);
}

TEST(Nps, IgnoresUnmaskedPixels) {
  const PrintablePalette p{"one", {{0.0f, 0.0f, 0.0f}}};
  const Tensor canonical({4, 4, 3}, 0.6f);
  const Mask m = square_mask(4, 0, 0, 2);
  const NpsResult r = nps(canonical, Tensor({4, 4, 3}), m, p);
  EXPECT_NEAR(r.score, 0.6, 1e-6);
  EXPECT_EQ(r.grad.at({3, 3, 0}), 0.0f);
}

TEST(Nps, EnumerationSuite) {
  const auto r = rp2::testing::nps_suite(200, 3);
  EXPECT_EQ(r.trials, 200);
  EXPECT_LE(r.worst_score_error, 1e-6);
  EXPECT_LE(r.worst_gradient_error, 2e-2);
}

TEST(Objective, GradientSuite) {
  const auto r = rp2::testing::objective_gradient_suite(100, 21);
  EXPECT_EQ(r.trials, 100);
  EXPECT_LE(r.worst, 2e-2) << r.worst_case;
}

TEST(Objective, PartsSumToLossAndIsolate) {
  const Tensor canonical = render_sign(reference_sign_class(0), kSide, 1);
  const ModelParameters p = toy_model(2);
  AttackConfig c = small_config();
  c.lambda = 0.1;
  const auto batch = make_batch(canonical, c.distribution, 3, 4);
  const Mask mask = square_mask(kSide, 8, 8, 10);
  Tensor delta({kSide, kSide, 3});
  for (int y = 8; y < 18; ++y)
    for (int x = 8; x < 18; ++x) delta.at({y, x, 1}) = 0.2f;

  const ObjectiveResult r = objective(canonical, delta, mask, batch, p, c, 0);
  EXPECT_NEAR(r.loss, r.parts.norm_term + r.parts.nps_term + r.parts.expectation_term, 1e-9);
  EXPECT_NEAR(r.parts.norm_term, 0.1 * std::sqrt(100 * 0.04), 1e-6);

  const ObjectiveResult zero = objective(canonical, Tensor({kSide, kSide, 3}), mask, batch, p, c, 0);
  EXPECT_EQ(zero.parts.norm_term, 0.0);

  AttackConfig no_nps = c;
  no_nps.nps_weight = 0.0;
  no_nps.lambda = 0.0;
  const ObjectiveResult only_ce = objective(canonical, delta, mask, batch, p, no_nps, 0);
  EXPECT_EQ(only_ce.parts.nps_term, 0.0);
  EXPECT_EQ(only_ce.parts.norm_term, 0.0);
  EXPECT_NEAR(only_ce.parts.expectation_term, r.parts.expectation_term, 1e-9);

  AttackConfig l1 = c;
  l1.norm = NormKind::l1;
  EXPECT_NEAR(objective(canonical, delta, mask, batch, p, l1, 0).parts.norm_term, 0.1 * 100 * 0.2, 1e-4);

  AttackConfig untargeted = no_nps;
  untargeted.target_class.reset();
  const double ce_true = objective(canonical, delta, mask, batch, p, untargeted, 0).parts.expectation_term;
  EXPECT_LT(ce_true, 0.0);
}

TEST(Objective, GradientVanishesOffMask) {
  const Tensor canonical = render_sign(reference_sign_class(0), kSide, 1);
  const ModelParameters p = toy_model(3);
  const AttackConfig c = small_config();
  const auto batch = make_batch(canonical, c.distribution, 2, 5);
  const Mask mask = square_mask(kSide, 4, 4, 6);
  const ObjectiveResult r = objective(canonical, Tensor({kSide, kSide, 3}), mask, batch, p, c, 0);
  for (int y = 0; y < kSide; ++y)
    for (int x = 0; x < kSide; ++x)
      if (!mask.covers(y, x))
        for (int k = 0; k < 3; ++k) ASSERT_EQ(r.grad.at({y, x, k}), 0.0f);
}

TEST(Attack, ConfigValidation) {
  auto bad = [](auto mutate) {
    AttackConfig c;
    mutate(c);
    return c;
  };
  EXPECT_NO_THROW(AttackConfig{}.validate());
  EXPECT_THROW(bad([](AttackConfig& c) { c.lambda = -1; }).validate(), ValidationError);
  EXPECT_THROW(bad([](AttackConfig& c) { c.eta = 2; }).validate(), ValidationError);
  EXPECT_THROW(bad([](AttackConfig& c) { c.eta = 1e-6; }).validate(), ValidationError);
  EXPECT_THROW(bad([](AttackConfig& c) { c.iterations = -1; }).validate(), ValidationError);
  EXPECT_THROW(bad([](AttackConfig& c) { c.batch_size = 0; }).validate(), ValidationError);
  EXPECT_THROW(bad([](AttackConfig& c) { c.nps_weight = -0.5; }).validate(), ValidationError);
  EXPECT_EQ(parse_norm("L1"), NormKind::l1);
  EXPECT_EQ(parse_norm("l2"), NormKind::l2);
  EXPECT_THROW(parse_norm("linf"), ValidationError);
}

TEST(Attack, MaskValidation) {
  EXPECT_THROW(Mask(Tensor({4, 5})), ValidationError);
  Tensor half({4, 4});
  half[0] = 0.5f;
  EXPECT_THROW(Mask{half}, ValidationError);
  EXPECT_DOUBLE_EQ(square_mask(8, 0, 0, 4).coverage(), 0.25);
}

TEST(Attack, ZeroIterationsReturnsZeroDelta) {
  const Tensor canonical = render_sign(reference_sign_class(0), kSide, 1);
  AttackConfig c = small_config();
  c.iterations = 0;
  const AttackResult r = run_attack(canonical, 0, toy_model(1), Mask::full(kSide), c);
  for (float v : r.perturbation.delta.values()) EXPECT_EQ(v, 0.0f);
  EXPECT_EQ(r.best_iteration, 0);
  EXPECT_EQ(r.perturbation.target_class, 3);
}

TEST(Attack, EmptyMaskIsRejected) {
  const Tensor canonical = render_sign(reference_sign_class(0), kSide, 1);
  EXPECT_THROW(run_attack(canonical, 0, toy_model(1), Mask(Tensor({kSide, kSide})), small_config()), ValidationError);
}

TEST(Attack, DeterministicAndThreadInvariant) {
  const Tensor canonical = render_sign(reference_sign_class(0), kSide, 1);
  const ModelParameters p = toy_model(4);
  AttackConfig c = small_config();
  const AttackResult a = run_attack(canonical, 0, p, Mask::full(kSide), c);
  const AttackResult b = run_attack(canonical, 0, p, Mask::full(kSide), c);
  c.threads = 3;
  const AttackResult t = run_attack(canonical, 0, p, Mask::full(kSide), c);
  EXPECT_EQ(a.perturbation.delta, b.perturbation.delta);
  EXPECT_EQ(a.perturbation.delta, t.perturbation.delta);
  EXPECT_EQ(a.trace.size(), t.trace.size());
  c.threads = 1;
  c.seed = 6;
  EXPECT_NE(run_attack(canonical, 0, p, Mask::full(kSide), c).perturbation.delta, a.perturbation.delta);
}

TEST(Attack, IteratesStayOnMaskAndInBox) {
  const Tensor canonical = render_sign(reference_sign_class(0), kSide, 1);
  const Mask mask = square_mask(kSide, 10, 12, 7);
  AttackConfig c = small_config();
  c.eta = 0.5;
  int steps = 0;
  run_attack(canonical, 0, toy_model(5), mask, c, {}, [&](int, const Tensor& delta) {
    ++steps;
    for (int y = 0; y < kSide; ++y)
      for (int x = 0; x < kSide; ++x)
        for (int k = 0; k < 3; ++k) {
          const float v = delta.at({y, x, k});
          ASSERT_LE(std::abs(v), 1.0f);
          if (!mask.covers(y, x)) ASSERT_EQ(v, 0.0f);
        }
  });
  EXPECT_EQ(steps, c.iterations);
}

TEST(Attack, TraceHasProbeRows) {
  const Tensor canonical = render_sign(reference_sign_class(0), kSide, 1);
  const AttackResult r = run_attack(canonical, 0, toy_model(6), Mask::full(kSide), small_config());
  ASSERT_EQ(r.trace.size(), 12u);
  for (const TraceRow& row : r.trace) EXPECT_EQ(row.probe_success.has_value(), row.iteration % 5 == 0 || row.iteration == 12);
  EXPECT_GE(r.probe_success, 0.0);
  EXPECT_LE(r.probe_success, 1.0);
}

TEST(Attack, StrongRegularizationShrinksPerturbation) {
  const Tensor canonical = render_sign(reference_sign_class(0), kSide, 1);
  const ModelParameters p = toy_model(7);
  AttackConfig c = small_config();
  c.iterations = 30;
  c.nps_weight = 0.0;
  auto norm_of = [&](double lambda) {
    c.lambda = lambda;
    // Probe selection could return iteration 0; look at the final iterate instead.
    double n = 0.0;
    run_attack(canonical, 0, p, Mask::full(kSide), c, {}, [&](int it, const Tensor& d) {
      if (it != c.iterations) return;
      n = 0.0;
      for (float v : d.values()) n += static_cast<double>(v) * v;
    });
    return std::sqrt(n);
  };
  EXPECT_LT(norm_of(10.0), norm_of(0.01));
}

TEST(Attack, UntargetedResultHasNoTarget) {
  const Tensor canonical = render_sign(reference_sign_class(0), kSide, 1);
  AttackConfig c = small_config();
  c.target_class.reset();
  const AttackResult r = run_attack(canonical, 0, toy_model(8), Mask::full(kSide), c);
  EXPECT_FALSE(r.perturbation.target_class.has_value());
}

TEST(Apply, CanonicalInvariants) {
  const Tensor canonical = render_sign(reference_sign_class(0), kSide, 1);
  Gen g(9);
  Perturbation pert;
  pert.mask = square_mask(kSide, 5, 5, 8);
  pert.delta = g.tensor({kSide, kSide, 3});
  for (int y = 0; y < kSide; ++y)
    for (int x = 0; x < kSide; ++x)
      if (!pert.mask.covers(y, x))
        for (int k = 0; k < 3; ++k) pert.delta.at({y, x, k}) = 0.0f;
  const Tensor out = apply_perturbation(canonical, pert);
  for (int y = 0; y < kSide; ++y)
    for (int x = 0; x < kSide; ++x)
      for (int k = 0; k < 3; ++k) {
        const float v = out.at({y, x, k});
        ASSERT_GE(v, 0.0f);
        ASSERT_LE(v, 1.0f);
        if (!pert.mask.covers(y, x)) ASSERT_EQ(v, canonical.at({y, x, k}));
      }
  Perturbation zero = pert;
  zero.delta.fill(0.0f);
  EXPECT_EQ(apply_perturbation(canonical, zero), canonical);
}

TEST(Apply, CommutesWithSynthesis) {
  const Tensor canonical = render_sign(reference_sign_class(2), kSide, 1);
  Gen g(10);
  Perturbation pert;
  pert.mask = Mask::full(kSide);
  pert.delta = g.tensor({kSide, kSide, 3}, -0.3, 0.3);
  DistributionConfig d;
  d.noise_sigma = 0.0;
  d.brightness = {0.0, 0.0};
  Rng rng = make_rng(2, "test.commute");
  for (int i = 0; i < 20; ++i) {
    const TransformSample s = sample_transform(d, rng, kSide);
    const Tensor a = synthesize_instance(apply_perturbation(canonical, pert), s);
    const Tensor b = apply_perturbation(synthesize_instance(canonical, s), pert, s);
    double mean = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) mean += std::abs(double(a[k]) - b[k]);
    EXPECT_LE(mean / a.size(), 2e-2);
  }
}

TEST(Apply, NonCanonicalImageNeedsPose) {
  Perturbation pert;
  pert.mask = Mask::full(kSide);
  pert.delta = Tensor({kSide, kSide, 3});
  EXPECT_THROW(apply_perturbation(Tensor({40, 40, 3}), pert, nullptr), ValidationError);
  EXPECT_NO_THROW(apply_perturbation(Tensor({kSide, kSide, 3}), pert, nullptr));
}

TEST(Apply, PhotoOutsideTheSignIsUnchanged) {
  Gen g(11);
  const Tensor photo = g.tensor({50, 60, 3}, 0.0, 1.0);
  Perturbation pert;
  pert.mask = Mask::full(kSide);
  pert.delta = Tensor({kSide, kSide, 3}, 0.5f);
  const Quad corners = {{{20, 10}, {40, 12}, {39, 30}, {21, 29}}};
  const Tensor out = apply_perturbation_to_photo(photo, pert, corners);
  EXPECT_EQ(out.at({0, 0, 0}), photo.at({0, 0, 0}));
  EXPECT_EQ(out.at({49, 59, 2}), photo.at({49, 59, 2}));
  EXPECT_GE(out.at({20, 30, 0}), photo.at({20, 30, 0}));
}
