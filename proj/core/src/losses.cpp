#include "umle/losses.hpp"

#include "umle/checkpoint.hpp"
#include "umle/errors.hpp"
#include "umle/rng.hpp"

namespace umle {

namespace {

Var branch_average(const std::vector<Var>& terms) {
  Var acc = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  return mul_scalar(acc, 1.0 / static_cast<double>(terms.size()));
}

}  // namespace

Var adversarial_loss_d(const BranchScores& real, const BranchScores& fake, AdversarialForm form) {
  if (real.maps.size() != fake.maps.size() || real.maps.empty())
    throw ShapeError("adversarial_loss_d: mismatched branch sets");
  std::vector<Var> terms;
  for (std::size_t i = 0; i < real.maps.size(); ++i) {
    if (real.maps[i].first != fake.maps[i].first)
      throw ShapeError("adversarial_loss_d: branch order mismatch");
    Var r = real.maps[i].second;
    Var f = fake.maps[i].second;
    if (form == AdversarialForm::LeastSquares)
      terms.push_back(add(mean_sq_diff_scalar(r, 1.0), mean_sq_diff_scalar(f, 0.0)));
    else
      terms.push_back(add(bce_with_logits(r, 1.0), bce_with_logits(f, 0.0)));
  }
  return branch_average(terms);
}

Var adversarial_loss_g(const BranchScores& fake, AdversarialForm form) {
  if (fake.maps.empty()) throw ShapeError("adversarial_loss_g: no branches");
  std::vector<Var> terms;
  for (const auto& [id, s] : fake.maps)
    terms.push_back(form == AdversarialForm::LeastSquares ? mean_sq_diff_scalar(s, 1.0)
                                                          : bce_with_logits(s, 1.0));
  return branch_average(terms);
}

Var cycle_loss(Var x, Var x_cycled) { return mean_abs_diff(x, x_cycled); }

Var color_loss(Var color_scores_fake, AdversarialForm form) {
  return form == AdversarialForm::LeastSquares ? mean_sq_diff_scalar(color_scores_fake, 1.0)
                                               : bce_with_logits(color_scores_fake, 1.0);
}

Var identity_loss(Var x_target, Var g_of_x) { return mean_abs_diff(x_target, g_of_x); }

FeatureExtractor FeatureExtractor::make_default(int layer_index) {
  // Frozen random-weight stack; the seed is a fixed constant so the
  // perceptual distance is comparable across runs and configs.
  constexpr std::uint64_t kExtractorSeed = 1337;
  const int chans[5] = {3, 16, 32, 32, 32};
  const int strides[4] = {2, 2, 1, 1};
  FeatureExtractor fx;
  RngSequence rng(kExtractorSeed, RngStream::Extractor);
  for (int i = 0; i < 4; ++i) {
    Layer l;
    l.w = Tensor({chans[i + 1], chans[i], 3, 3});
    init_fan_in_uniform(l.w, chans[i] * 9, rng);
    l.b = Tensor::zeros({chans[i + 1]});
    l.stride = strides[i];
    l.pad = 1;
    fx.layers_.push_back(std::move(l));
  }
  if (layer_index < 1 || layer_index > 4)
    throw ConfigError("perceptual_layer must be in [1,4] for the default extractor");
  fx.layer_index_ = layer_index;
  return fx;
}

FeatureExtractor FeatureExtractor::load(const std::string& path, int layer_index) {
  const NamedArrays box = load_container(path);
  FeatureExtractor fx;
  for (std::size_t i = 0;; ++i) {
    const std::string base = "layer" + std::to_string(i);
    const Tensor* w = box.find(base + "/w");
    if (!w) break;
    const Tensor* b = box.find(base + "/b");
    if (!b) throw CheckpointCorrupt("extractor container missing " + base + "/b");
    Layer l;
    l.w = *w;
    l.b = *b;
    l.stride = static_cast<int>(box.meta_int_or(base + "/stride", 1));
    l.pad = static_cast<int>(box.meta_int_or(base + "/pad", 1));
    l.pool_before = box.meta_int_or(base + "/pool_before", 0) != 0;
    fx.layers_.push_back(std::move(l));
  }
  if (fx.layers_.empty()) throw CheckpointCorrupt("extractor container has no layers: " + path);
  if (layer_index < 1 || layer_index > static_cast<int>(fx.layers_.size()))
    throw ConfigError("perceptual_layer out of range for extractor " + path);
  fx.layer_index_ = layer_index;
  return fx;
}

Var FeatureExtractor::features(Tape& tape, Var x) const {
  Var f = x;
  for (int i = 0; i < layer_index_; ++i) {
    const Layer& l = layers_[static_cast<std::size_t>(i)];
    if (l.pool_before) f = avg_pool2(f);
    f = relu(conv2d(f, tape.leaf(l.w), tape.leaf(l.b), l.stride, l.pad));
  }
  return f;
}

Var preserving_loss(Tape& tape, Var x, Var y, const FeatureExtractor& fx) {
  return mean_sq_diff(fx.features(tape, x), fx.features(tape, y));
}

TotalLoss total_loss(Tape& tape, const LossTerms& terms, const LossWeights& w) {
  TotalLoss out;
  Var acc = nullptr;
  auto fold = [&](Var term, double weight, double& raw, double& weighted) {
    if (!term) return;
    raw = term->scalar();
    weighted = weight * raw;
    Var scaled = mul_scalar(term, weight);
    acc = acc ? add(acc, scaled) : scaled;
  };
  fold(terms.adv, w.w_adv, out.adv, out.weighted_adv);
  fold(terms.cyc, w.w_cyc, out.cyc, out.weighted_cyc);
  fold(terms.color, w.w_color, out.color, out.weighted_color);
  fold(terms.pre, w.w_pre, out.pre, out.weighted_pre);
  fold(terms.idt, w.w_idt, out.idt, out.weighted_idt);
  if (!acc) throw ShapeError("total_loss: no terms");
  out.total = acc;
  out.value = acc->scalar();
  return out;
}

}  // namespace umle
