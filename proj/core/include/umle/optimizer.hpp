#pragma once

#include <map>
#include <string>
#include <vector>

#include "umle/params.hpp"

namespace umle {

// Applies gradient centralization to a gradient buffer in place: for arrays
// of logical rank >= 2, subtract the per-output-channel mean taken over all
// remaining axes. Rank-0/1 arrays (biases, norm parameters) are untouched.
void centralize_gradient(Tensor& grad, const std::vector<int>& shape, int logical_rank);

// Global-norm gradient clip over a parameter group; returns the pre-clip norm.
double clip_global_norm(const std::vector<Param*>& group, double max_norm);

// Name of the first parameter with a non-finite gradient, or empty.
std::string first_non_finite_grad(const std::vector<Param*>& group);

struct AdamGcConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;  // decoupled
};

// Adam with gradient centralization and decoupled weight decay. Per-parameter
// moment buffers and step counts; parameters flagged clamp01 are clamped to
// [0,1] after every update.
class AdamGc {
 public:
  explicit AdamGc(AdamGcConfig cfg) : cfg_(cfg) {}

  void step(const std::vector<Param*>& group);

  struct State {
    Tensor m, v;
    long t = 0;
  };

  const AdamGcConfig& config() const { return cfg_; }
  // Ordered view for checkpointing; creates zero states lazily.
  State& state_for(const Param& p);
  const std::map<std::string, State>& states() const { return states_; }
  void restore_state(const std::string& name, Tensor m, Tensor v, long t);

 private:
  AdamGcConfig cfg_;
  std::map<std::string, State> states_;
};

}  // namespace umle
