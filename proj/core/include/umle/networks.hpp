#pragma once

#include <optional>
#include <string>
#include <vector>

#include "umle/attention.hpp"
#include "umle/autograd.hpp"
#include "umle/filters.hpp"
#include "umle/params.hpp"

namespace umle {

struct ArchConfig {
  int base_channels = 32;
  int n_down = 2;
  int n_res = 3;
  int scales = 3;        // fixed by the multi-scale branch design
  int local_patch = 10;  // fixed local-discriminator patch size
  int resolution = 64;

  void validate() const;  // throws ConfigError on inconsistent settings
  int encoder_out_channels() const { return base_channels << n_down; }
  int encoder_out_size() const { return resolution >> n_down; }
};

enum class Domain { Low, Normal };
enum class Direction { LowToNormal, NormalToLow };

struct ModelOptions {
  bool share_encoder = true;    // one encoder per domain, used by G and D
  bool use_cpam = true;         // attention blocks in decoder and branches
  bool color_branch = true;
  bool texture_branch = true;
  bool multiscale_branch = true;  // covers the three scales and the local patch
  PixelAttentionForm pixel_form = PixelAttentionForm::Textual;
};

enum class BranchId { Color, Texture, Scale0, Scale1, Scale2, LocalPatch };
const char* branch_name(BranchId id);

struct BranchScores {
  std::vector<std::pair<BranchId, Var>> maps;  // raw patch-level score maps
  Var find(BranchId id) const;
};

namespace nn {

struct ConvLayer {
  Param* w = nullptr;
  Param* b = nullptr;
  int stride = 1;
  int pad = 1;
};

struct NormLayer {
  Param* gamma = nullptr;
  Param* beta = nullptr;
  Param* rho = nullptr;  // null -> instance norm; set -> layer/instance mix
};

struct Encoder {
  ConvLayer stem;
  NormLayer stem_norm;
  std::vector<ConvLayer> down;
  std::vector<NormLayer> down_norm;
  Var forward(Tape& tape, Var x) const;
};

struct ResBlock {
  ConvLayer c1, c2;
  NormLayer n1, n2;
};

struct Decoder {
  std::vector<ResBlock> res;
  std::optional<CpaParams> cpa;
  std::vector<ConvLayer> up;
  std::vector<NormLayer> up_norm;
  ConvLayer out_conv;
  Var forward(Tape& tape, Var f) const;  // output in (0,1)
};

// Three stacked convolutions producing a raw patch score map.
struct Head {
  ConvLayer c1, c2, c3;
  Var forward(Tape& tape, Var x) const;
};

struct DiscriminatorHeads {
  std::optional<CpaParams> color_cpa, texture_cpa;
  std::optional<Head> color, texture;
  std::vector<Head> scale;  // one per pyramid level
  std::optional<Head> local;
};

}  // namespace nn

// The full two-direction model. Encoders are registered once per domain; when
// share_encoder is on, the same parameter objects serve the generator of that
// domain's outgoing direction and the discriminator of that domain.
class UmleModel {
 public:
  UmleModel(const ArchConfig& arch, const ModelOptions& options, std::uint64_t seed);

  const ArchConfig& arch() const { return arch_; }
  const ModelOptions& options() const { return options_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const Kernel2D& frequency_kernel() const { return kernel_; }

  // encode/generate accept any spatial size divisible by 2^n_down (training
  // feeds the configured resolution; enhancement may run at native sizes).
  Var encode(Tape& tape, Var x, Domain input_domain);
  Var decode(Tape& tape, Var f, Direction dir);
  Var generate(Tape& tape, Var x, Direction dir);
  Tensor generate_eval(const Tensor& x, Direction dir);
  // Shape-preserving enhancement of an arbitrary-size image: reflect-pads to
  // the stride multiple, generates, crops back.
  Tensor enhance_full(const Tensor& x, Direction dir = Direction::LowToNormal);

  // Scores for the discriminator of `which`; `local_patch` is a 10x10 crop of
  // x chosen by the caller (see extract_local_patch).
  BranchScores discriminate(Tape& tape, Var x, Var local_patch, Domain which);
  // Convenience: derives the local patch deterministically from (seed, iteration, stream).
  BranchScores discriminate(Tape& tape, Var x, Domain which, std::uint64_t seed,
                            std::uint64_t iteration, RngStream patch_stream);

  std::vector<Param*> generator_params();
  std::vector<Param*> discriminator_params(bool d_updates_encoder);

  struct ComponentCount {
    std::string component;
    std::size_t count = 0;
    std::string shared_by;
  };
  // Per-component parameter counts; shared encoders appear once, annotated
  // with both users. Component counts sum to the flat total.
  std::vector<ComponentCount> count_params() const;
  std::size_t total_param_count() const { return store_.total_scalars(); }

 private:
  nn::Encoder build_encoder(const std::string& prefix, RngSequence& init);
  nn::Decoder build_decoder(const std::string& prefix, RngSequence& init);
  nn::DiscriminatorHeads build_heads(const std::string& prefix, RngSequence& init);
  const nn::Encoder& disc_encoder(Domain which) const;

  ArchConfig arch_;
  ModelOptions options_;
  ParamStore store_;
  Kernel2D kernel_;

  nn::Encoder enc_low_, enc_normal_;
  std::optional<nn::Encoder> d_enc_low_, d_enc_normal_;
  nn::Decoder dec_to_normal_, dec_to_low_;
  nn::DiscriminatorHeads heads_low_, heads_normal_;
};

}  // namespace umle
