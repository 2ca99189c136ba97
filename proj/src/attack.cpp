#include "rp2/attack.hpp"

#include <algorithm>
#include <cmath>

#include "rp2/adam.hpp"
#include "rp2/error.hpp"
#include "rp2/eval.hpp"
#include "rp2/nn.hpp"
#include "rp2/parallel.hpp"

namespace rp2 {

Mask::Mask(Tensor grid) : grid_(std::move(grid)) {
  if (grid_.rank() != 2 || grid_.dim(0) != grid_.dim(1)) {
    throw ValidationError("mask must be a square [S,S] grid, got " + shape_string(grid_.shape()));
  }
  for (float v : grid_.values()) {
    if (v != 0.0f && v != 1.0f) throw ValidationError("mask entries must be 0 or 1");
  }
}

Mask Mask::full(int side) { return Mask(Tensor({side, side}, 1.0f)); }

double Mask::coverage() const {
  if (grid_.empty()) return 0.0;
  double on = 0.0;
  for (float v : grid_.values()) on += v;
  return on / static_cast<double>(grid_.size());
}

std::string to_string(NormKind norm) { return norm == NormKind::l1 ? "L1" : "L2"; }

NormKind parse_norm(const std::string& text) {
  if (text == "L1" || text == "l1") return NormKind::l1;
  if (text == "L2" || text == "l2") return NormKind::l2;
  throw ValidationError("norm must be L1 or L2, got '" + text + "'");
}

void AttackConfig::validate(std::size_t photo_count) const {
  if (!(lambda >= 0.0)) throw ValidationError("lambda must be >= 0");
  if (!(eta >= 1e-4 && eta <= 1.0)) throw ValidationError("eta must lie in [1e-4, 1]");
  if (iterations < 0) throw ValidationError("iterations must be non-negative");
  if (batch_size < 1) throw ValidationError("batch_size must be positive");
  if (!(nps_weight >= 0.0)) throw ValidationError("nps_weight must be >= 0");
  if (probe_size < 1 || probe_every < 1) throw ValidationError("probe_size and probe_every must be positive");
  if (nps_weight > 0.0) palette.validate();
  distribution.validate(photo_count);
}

namespace {

void check_delta(const Tensor& canonical, const Tensor& delta, const Mask& mask) {
  const int s = mask.side();
  if (s == 0) throw ValidationError("mask is empty");
  require_shape(canonical, {s, s, 3}, "canonical sign");
  require_shape(delta, {s, s, 3}, "delta");
}

Tensor masked(const Tensor& delta, const Mask& mask) {
  Tensor out = delta;
  const float* m = mask.grid().data();
  for (std::size_t p = 0; p < mask.grid().size(); ++p) {
    if (m[p] == 0.0f) out[3 * p] = out[3 * p + 1] = out[3 * p + 2] = 0.0f;
  }
  return out;
}

void clamp_unit(Tensor& t) {
  for (float& v : t.values()) v = std::clamp(v, 0.0f, 1.0f);
}

struct ItemResult {
  double loss = 0.0;
  Tensor grad;
};

ItemResult expectation_item(const BatchItem& item, const Tensor& masked_delta, const Mask& mask,
                            const ModelParameters& params, const AttackConfig& config, int true_class) {
  const WarpOperator op(item.sample);
  const Tensor w = op.apply(masked_delta);
  require_shape(item.instance, w.shape(), "batch instance");
  Tensor x(w.shape());
  std::vector<float> pass(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const float v = item.instance[i] + w[i];
    x[i] = std::clamp(v, 0.0f, 1.0f);
    pass[i] = (v > 0.0f && v < 1.0f) ? 1.0f : 0.0f;
  }
  const ForwardTrace trace = forward_traced(params, x.reshaped({1, kInstanceSide, kInstanceSide, 3}));
  const int target[1] = {config.untargeted() ? true_class : *config.target_class};
  nn::LossAndGrad lg = nn::softmax_cross_entropy(trace.logits, target);
  const float sign = config.untargeted() ? -1.0f : 1.0f;
  for (float& g : lg.grad.values()) g *= sign;
  Tensor g_in = backward(params, trace, lg.grad, false).input.reshaped({kInstanceSide, kInstanceSide, 3});
  for (std::size_t i = 0; i < g_in.size(); ++i) g_in[i] *= pass[i];
  ItemResult r{sign * static_cast<double>(lg.loss), masked(op.adjoint(g_in), mask)};
  return r;
}

}  // namespace

NpsResult nps(const Tensor& canonical, const Tensor& delta, const Mask& mask, const PrintablePalette& palette) {
  check_delta(canonical, delta, mask);
  palette.validate();
  const std::size_t pixels = mask.grid().size();
  const std::size_t k = palette.colors.size();
  NpsResult out{0.0, Tensor(delta.shape())};
  std::size_t count = 0;
  for (std::size_t p = 0; p < pixels; ++p) count += mask.grid()[p] != 0.0f;
  if (count == 0) throw ValidationError("nps: mask has no pixels");

  std::vector<double> dist(k), prefix(k + 1), suffix(k + 1);
  double total = 0.0;
  for (std::size_t p = 0; p < pixels; ++p) {
    if (mask.grid()[p] == 0.0f) continue;
    double px[3];
    bool pass[3];
    for (int c = 0; c < 3; ++c) {
      const double raw = static_cast<double>(canonical[3 * p + c]) + delta[3 * p + c];
      px[c] = std::clamp(raw, 0.0, 1.0);
      pass[c] = raw > 0.0 && raw < 1.0;
    }
    for (std::size_t j = 0; j < k; ++j) {
      const Rgb& q = palette.colors[j];
      dist[j] = (std::abs(px[0] - q.r) + std::abs(px[1] - q.g) + std::abs(px[2] - q.b)) / 3.0;
    }
    // Products excluding one factor, without dividing (factors may be zero).
    prefix[0] = 1.0;
    for (std::size_t j = 0; j < k; ++j) prefix[j + 1] = prefix[j] * dist[j];
    suffix[k] = 1.0;
    for (std::size_t j = k; j-- > 0;) suffix[j] = suffix[j + 1] * dist[j];
    total += prefix[k];
    for (int c = 0; c < 3; ++c) {
      if (!pass[c]) continue;
      double g = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        const Rgb& q = palette.colors[j];
        const double diff = px[c] - (c == 0 ? q.r : (c == 1 ? q.g : q.b));
        const double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
        g += sgn / 3.0 * prefix[j] * suffix[j + 1];
      }
      out.grad[3 * p + c] = static_cast<float>(g / static_cast<double>(count));
    }
  }
  out.score = total / static_cast<double>(count);
  return out;
}

ObjectiveResult objective(const Tensor& canonical, const Tensor& delta, const Mask& mask,
                          std::span<const BatchItem> batch, const ModelParameters& params,
                          const AttackConfig& config, int true_class) {
  check_delta(canonical, delta, mask);
  if (batch.empty()) throw ValidationError("objective needs a non-empty batch");
  const Tensor md = masked(delta, mask);

  ObjectiveResult r{0.0, Tensor(delta.shape()), {}};

  // Norm term.
  if (config.lambda > 0.0) {
    if (config.norm == NormKind::l1) {
      double sum = 0.0;
      for (std::size_t i = 0; i < md.size(); ++i) {
        sum += std::abs(md[i]);
        r.grad[i] += static_cast<float>(config.lambda * (md[i] > 0.0f ? 1.0 : (md[i] < 0.0f ? -1.0 : 0.0)));
      }
      r.parts.norm_term = config.lambda * sum;
    } else {
      double sq = 0.0;
      for (float v : md.values()) sq += static_cast<double>(v) * v;
      const double norm = std::sqrt(sq);
      r.parts.norm_term = config.lambda * norm;
      if (norm > 0.0) {
        for (std::size_t i = 0; i < md.size(); ++i) r.grad[i] += static_cast<float>(config.lambda * md[i] / norm);
      }
    }
  }

  // Printability term.
  if (config.nps_weight > 0.0) {
    const NpsResult n = nps(canonical, md, mask, config.palette);
    r.parts.nps_term = config.nps_weight * n.score;
    for (std::size_t i = 0; i < n.grad.size(); ++i) r.grad[i] += static_cast<float>(config.nps_weight * n.grad[i]);
  }

  // Expectation over the batch, reduced in index order.
  std::vector<ItemResult> items(batch.size());
  parallel_for(items.size(), config.threads, [&](std::size_t i) {
    items[i] = expectation_item(batch[i], md, mask, params, config, true_class);
  });
  const double inv = 1.0 / static_cast<double>(batch.size());
  double expectation = 0.0;
  for (const ItemResult& item : items) {
    expectation += item.loss;
    for (std::size_t i = 0; i < r.grad.size(); ++i) r.grad[i] += static_cast<float>(inv * item.grad[i]);
  }
  r.parts.expectation_term = expectation * inv;
  r.loss = r.parts.norm_term + r.parts.nps_term + r.parts.expectation_term;
  if (!std::isfinite(r.loss)) throw NumericError("objective produced a non-finite loss");
  return r;
}

Tensor canonical_view(const Tensor& canonical) {
  if (canonical.rank() != 3) throw ShapeError("canonical sign must be [S,S,3]");
  return synthesize_instance(canonical, identity_sample(canonical.dim(0)));
}

namespace {

struct Probe {
  std::vector<BatchItem> items;
  std::vector<WarpOperator> operators;
  std::vector<Prediction> clean;
};

Probe draw_probe(const Tensor& canonical, const ModelParameters& params, const AttackConfig& config,
                 std::span<const AnnotatedPhoto> photos) {
  Probe probe;
  Rng rng = make_rng(config.seed, "attack.probe");
  const int side = canonical.dim(0);
  for (int i = 0; i < config.probe_size; ++i) {
    probe.items.push_back({Tensor(), sample_transform(config.distribution, rng, side, photos)});
  }
  probe.clean.resize(probe.items.size());
  parallel_for(probe.items.size(), config.threads, [&](std::size_t i) {
    probe.items[i].instance = synthesize_instance(canonical, probe.items[i].sample, photos);
    probe.clean[i] = predict(params, probe.items[i].instance);
  });
  for (const BatchItem& item : probe.items) probe.operators.emplace_back(item.sample);
  return probe;
}

double probe_success(const Probe& probe, const Tensor& delta, const Mask& mask, const ModelParameters& params,
                     const AttackConfig& config, int true_class) {
  const Tensor md = masked(delta, mask);
  std::vector<ConditionOutcome> outcomes(probe.items.size());
  parallel_for(outcomes.size(), config.threads, [&](std::size_t i) {
    Tensor x = probe.items[i].instance;
    const Tensor w = probe.operators[i].apply(md);
    for (std::size_t j = 0; j < x.size(); ++j) x[j] += w[j];
    clamp_unit(x);
    const Prediction p = predict(params, x);
    outcomes[i] = make_outcome(probe.clean[i], p, config.target_class);
  });
  const SuccessCount count = count_success(outcomes, true_class, config.target_class);
  return count.denominator > 0 ? static_cast<double>(count.numerator) / count.denominator : 0.0;
}

}  // namespace

AttackResult run_attack(const Tensor& canonical, int true_class, const ModelParameters& params, const Mask& mask,
                        const AttackConfig& config, std::span<const AnnotatedPhoto> photos,
                        const StepObserver& observer) {
  config.validate(photos.size());
  if (mask.coverage() <= 0.0) throw ValidationError("empty mask: coverage must be > 0");
  check_delta(canonical, Tensor({mask.side(), mask.side(), 3}), mask);
  if (true_class < 0 || true_class >= params.class_count) throw ValidationError("true class out of range");
  if (config.target_class && (*config.target_class < 0 || *config.target_class >= params.class_count)) {
    throw ValidationError("target class out of range");
  }
  const int side = mask.side();

  AttackResult result;
  const Prediction clean = predict(params, canonical_view(canonical));
  if (clean.label != true_class) {
    result.clean_prediction_ok = false;
    result.warnings.push_back("clean canonical sign is classified as " + std::to_string(clean.label) +
                              ", not the true class " + std::to_string(true_class));
  }

  Tensor delta({side, side, 3});
  AdamConfig adam;
  adam.eta = config.eta;
  AdamState state(adam, std::span<const Tensor>(&delta, 1), {"delta"});

  const Probe probe = draw_probe(canonical, params, config, photos);
  Tensor best_delta = delta;
  result.probe_success = probe_success(probe, delta, mask, params, config, true_class);
  result.best_iteration = 0;

  Rng batch_rng = make_rng(config.seed, "attack.batch");
  std::vector<BatchItem> batch(static_cast<std::size_t>(config.batch_size));
  for (int it = 1; it <= config.iterations; ++it) {
    for (BatchItem& item : batch) item.sample = sample_transform(config.distribution, batch_rng, side, photos);
    parallel_for(batch.size(), config.threads,
                 [&](std::size_t i) { batch[i].instance = synthesize_instance(canonical, batch[i].sample, photos); });

    ObjectiveResult obj;
    try {
      obj = objective(canonical, delta, mask, batch, params, config, true_class);
    } catch (const NumericError& e) {
      throw NumericError("attack diverged at iteration " + std::to_string(it) + ": " + e.what());
    }
    adam_step(std::span<Tensor>(&delta, 1), std::span<const Tensor>(&obj.grad, 1), state);
    delta = masked(delta, mask);
    for (float& v : delta.values()) v = std::clamp(v, -1.0f, 1.0f);
    if (observer) observer(it, delta);

    TraceRow row{it, obj.loss, obj.parts, std::nullopt};
    if (it % config.probe_every == 0 || it == config.iterations) {
      const double s = probe_success(probe, delta, mask, params, config, true_class);
      row.probe_success = s;
      if (s >= result.probe_success) {
        result.probe_success = s;
        result.best_iteration = it;
        best_delta = delta;
      }
    }
    result.trace.push_back(row);
  }

  result.perturbation.delta = std::move(best_delta);
  result.perturbation.mask = mask;
  result.perturbation.target_class = config.target_class;
  result.perturbation.norm_used = config.norm;
  result.perturbation.lambda_used = config.lambda;
  result.perturbation.palette_id = config.palette.name;
  return result;
}

Tensor apply_perturbation(const Tensor& canonical, const Perturbation& pert) {
  check_delta(canonical, pert.delta, pert.mask);
  Tensor out = canonical;
  const Tensor md = masked(pert.delta, pert.mask);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += md[i];
  clamp_unit(out);
  return out;
}

Tensor apply_perturbation(const Tensor& instance, const Perturbation& pert, const TransformSample& sample) {
  require_shape(instance, {kInstanceSide, kInstanceSide, 3}, "instance");
  if (sample.canonical_side != pert.mask.side()) throw ShapeError("sample and perturbation canonical sides differ");
  Tensor out = instance;
  const Tensor w = WarpOperator(sample).apply(masked(pert.delta, pert.mask));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += w[i];
  clamp_unit(out);
  return out;
}

Tensor apply_perturbation(const Tensor& image, const Perturbation& pert, const TransformSample* sample) {
  if (sample) return apply_perturbation(image, pert, *sample);
  const int s = pert.mask.side();
  if (image.shape() != Shape{s, s, 3}) {
    throw ValidationError("missing pose: a " + shape_string(image.shape()) +
                          " image needs its TransformSample or corner annotation");
  }
  return apply_perturbation(image, pert);
}

Tensor apply_perturbation_to_photo(const Tensor& photo, const Perturbation& pert, const Quad& corners) {
  if (photo.rank() != 3 || photo.dim(2) != 3) throw ShapeError("photo must be [H,W,3]");
  const Homography h = Homography::from_correspondences(canonical_corners(pert.mask.side()), corners);
  const Tensor w = warp_to_frame(masked(pert.delta, pert.mask), h, photo.dim(1), photo.dim(0));
  Tensor out = photo;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += w[i];
  clamp_unit(out);
  return out;
}

}  // namespace rp2
