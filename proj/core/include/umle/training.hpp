#pragma once

#include <string>
#include <vector>

#include "umle/checkpoint.hpp"
#include "umle/config.hpp"
#include "umle/data.hpp"
#include "umle/losses.hpp"
#include "umle/networks.hpp"
#include "umle/optimizer.hpp"

namespace umle {

struct LossBreakdown {
  long iteration = 0;
  double adv_d = 0;    // discriminator loss (both discriminators)
  double adv_g = 0;    // generator-side adversarial, branch-averaged, both directions
  double cyc = 0;      // cycle, both directions
  double color = 0;
  double pre = 0;
  double idt = 0;
  double total_g = 0;  // weighted sum per the loss-weight config
  double wall_ms = 0;
  // Generator-side per-branch adversarial values (sum over both directions);
  // used by ablation checks. Not part of the CSV trace.
  std::vector<std::pair<BranchId, double>> branch_adv_g;
};

std::string trace_header();
std::string trace_row(const LossBreakdown& bd);

// Dual-GAN trainer: one discriminator update (real vs. detached fakes)
// followed by one generator update per iteration. All sampling and patch
// choices are keyed on (seed, iteration), so a resumed run continues the
// exact sequence of a straight run.
class Trainer {
 public:
  explicit Trainer(const TrainConfig& cfg);

  const TrainConfig& config() const { return cfg_; }
  UmleModel& model() { return model_; }
  const FeatureExtractor& extractor() const { return extractor_; }
  AdamGc& optimizer() { return opt_; }
  long start_iteration() const { return start_iteration_; }

  LossBreakdown train_step(const Tensor& x_low, const Tensor& x_normal, long iteration);

  // Runs iterations (start, cfg.iterations]; writes trace.csv and periodic
  // checkpoints into cfg.out_dir. Returns the final checkpoint.
  Checkpoint train(const DomainDataset& low, const DomainDataset& normal);

  Checkpoint make_checkpoint(long iteration);
  void restore(const Checkpoint& ckpt);

 private:
  void set_phase(const std::vector<Param*>& group);

  TrainConfig cfg_;
  UmleModel model_;
  FeatureExtractor extractor_;
  AdamGc opt_;
  std::vector<Param*> g_group_, d_group_;
  long start_iteration_ = 0;
};

}  // namespace umle
