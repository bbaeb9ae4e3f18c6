#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>

#include "umle/losses.hpp"
#include "umle/networks.hpp"

namespace umle {

enum class Ablation { NoColorD, NoTextureD, NoMultiscaleD, NoCpam, NoSharedEncoder };

std::string ablation_name(Ablation a);
Ablation ablation_from_name(const std::string& name);  // throws ConfigError

struct TrainConfig {
  std::uint64_t seed = 0;
  long iterations = 500;  // desk-scale default
  double lr = 1e-4;
  double weight_decay = 1e-4;
  LossWeights weights;
  ArchConfig arch;
  std::set<Ablation> ablation;
  AdversarialForm adversarial_form = AdversarialForm::LeastSquares;
  PixelAttentionForm pixel_attention_form = PixelAttentionForm::Textual;
  bool share_encoder = true;
  bool d_step_updates_encoder = true;
  double clip_norm = 10.0;  // global-norm safety net; 0 disables
  int perceptual_layer = 4;
  std::string vgg_weights;  // optional extractor container
  std::string data_root;
  std::string out_dir = "runs/default";
  long checkpoint_every = 250;

  void validate() const;  // throws ConfigError
  bool effective_share_encoder() const {
    return share_encoder && !ablation.count(Ablation::NoSharedEncoder);
  }
  ModelOptions model_options() const;
  // Effective loss weights: branch ablations zero the corresponding terms.
  LossWeights effective_weights() const;

  // All keys in canonical order, one `key = value` per line.
  std::string canonical_text() const;
  // FNV-1a 64 hex over the keys that define model/training identity
  // (iterations, paths, and checkpoint cadence are operational and excluded).
  std::string digest() const;
};

TrainConfig parse_config_text(const std::string& text);
TrainConfig parse_config_file(const std::filesystem::path& path);

std::string fnv1a_hex(const std::string& bytes);

}  // namespace umle
