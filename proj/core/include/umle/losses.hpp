#pragma once

#include <string>
#include <vector>

#include "umle/autograd.hpp"
#include "umle/networks.hpp"

namespace umle {

struct LossWeights {
  double w_adv = 1.0;
  double w_cyc = 100.0;
  double w_color = 0.005;
  double w_pre = 0.005;
  double w_idt = 10.0;
};

// The adversarial objective is least-squares by default (0/1 targets); the
// log form is a config switch and uses the same raw score maps as logits.
enum class AdversarialForm { LeastSquares, Log };

// Discriminator side: per branch, distance of real scores to 1 plus distance
// of fake scores to 0, averaged over branches with equal weight. `real` and
// `fake` must expose the same branch set.
Var adversarial_loss_d(const BranchScores& real, const BranchScores& fake,
                       AdversarialForm form = AdversarialForm::LeastSquares);
// Generator side: per branch, distance of fake scores to 1, branch-averaged.
Var adversarial_loss_g(const BranchScores& fake,
                       AdversarialForm form = AdversarialForm::LeastSquares);

// Mean absolute difference after the round trip through both generators.
Var cycle_loss(Var x, Var x_cycled);

// Generator-side realism restricted to the color branch (computed on the
// low-pass-filtered generated image inside the discriminator).
Var color_loss(Var color_scores_fake, AdversarialForm form = AdversarialForm::LeastSquares);

// Mean absolute difference between a target-domain image and its image under
// the target-producing generator.
Var identity_loss(Var x_target, Var g_of_x);

// Frozen feature stack for the preserving loss. The default is a fixed
// 4-layer convolution stack with seeded random weights; real VGG-16 conv
// weights can be loaded from a named-array container instead.
class FeatureExtractor {
 public:
  struct Layer {
    Tensor w, b;
    int stride = 1;
    int pad = 1;
    bool pool_before = false;  // 2x2 mean pool ahead of the convolution
  };

  static FeatureExtractor make_default(int layer_index = 4);
  static FeatureExtractor load(const std::string& path, int layer_index);

  // Activation of the layer_index-th ReLU.
  Var features(Tape& tape, Var x) const;
  int layer_index() const { return layer_index_; }
  std::size_t layer_count() const { return layers_.size(); }

 private:
  std::vector<Layer> layers_;
  int layer_index_ = 0;
};

// Feature-space mean squared distance, normalized over channels and space.
Var preserving_loss(Tape& tape, Var x, Var y, const FeatureExtractor& fx);

// Exact weighted sum in fixed order with a per-term breakdown. A null term
// contributes exactly zero (used by branch ablations).
struct LossTerms {
  Var adv = nullptr;
  Var cyc = nullptr;
  Var color = nullptr;
  Var pre = nullptr;
  Var idt = nullptr;
};

struct TotalLoss {
  Var total = nullptr;
  double adv = 0, cyc = 0, color = 0, pre = 0, idt = 0;
  double weighted_adv = 0, weighted_cyc = 0, weighted_color = 0, weighted_pre = 0, weighted_idt = 0;
  double value = 0;
};

TotalLoss total_loss(Tape& tape, const LossTerms& terms, const LossWeights& w);

}  // namespace umle
