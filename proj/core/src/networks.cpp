#include "umle/networks.hpp"

#include "umle/data.hpp"
#include "umle/errors.hpp"

namespace umle {

void ArchConfig::validate() const {
  if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
  if (n_down < 1) throw ConfigError("n_down must be >= 1");
  if (n_res < 1) throw ConfigError("n_res must be >= 1");
  if (scales != 3) throw ConfigError("scales is fixed at 3");
  if (local_patch != 10) throw ConfigError("local_patch is fixed at 10");
  const int div = 1 << std::max(n_down, scales - 1);
  if (resolution < 16 || resolution % div != 0)
    throw ConfigError("resolution must be >= 16 and divisible by " + std::to_string(div));
  if (resolution < local_patch) throw ConfigError("resolution smaller than the local patch");
}

const char* branch_name(BranchId id) {
  switch (id) {
    case BranchId::Color: return "color";
    case BranchId::Texture: return "texture";
    case BranchId::Scale0: return "scale0";
    case BranchId::Scale1: return "scale1";
    case BranchId::Scale2: return "scale2";
    case BranchId::LocalPatch: return "local";
  }
  return "?";
}

Var BranchScores::find(BranchId id) const {
  for (const auto& [bid, v] : maps)
    if (bid == id) return v;
  return nullptr;
}

namespace nn {
namespace {

ConvLayer make_conv(ParamStore& store, const std::string& prefix, int in_ch, int out_ch, int k,
                    int stride, int pad, RngSequence& init) {
  ConvLayer l;
  Tensor w({out_ch, in_ch, k, k});
  init_fan_in_uniform(w, in_ch * k * k, init);
  l.w = &store.add(prefix + "/w", std::move(w), 4);
  l.b = &store.add(prefix + "/b", Tensor::zeros({out_ch}), 1);
  l.stride = stride;
  l.pad = pad;
  return l;
}

NormLayer make_norm(ParamStore& store, const std::string& prefix, int ch, bool adaptive) {
  NormLayer n;
  n.gamma = &store.add(prefix + "/gamma", Tensor::full({ch}, 1.0), 1);
  n.beta = &store.add(prefix + "/beta", Tensor::zeros({ch}), 1);
  if (adaptive) n.rho = &store.add(prefix + "/rho", Tensor::full({ch}, 0.9), 1, /*clamp01=*/true);
  return n;
}

Var apply_conv(Tape& tape, const ConvLayer& l, Var x) {
  return conv2d(x, param_leaf(tape, *l.w), param_leaf(tape, *l.b), l.stride, l.pad);
}

Var apply_norm(Tape& tape, const NormLayer& n, Var x) {
  Var rho = n.rho ? param_leaf(tape, *n.rho) : nullptr;
  return lin_norm(x, param_leaf(tape, *n.gamma), param_leaf(tape, *n.beta), rho);
}

}  // namespace

Var Encoder::forward(Tape& tape, Var x) const {
  Var f = relu(apply_norm(tape, stem_norm, apply_conv(tape, stem, x)));
  for (std::size_t i = 0; i < down.size(); ++i)
    f = relu(apply_norm(tape, down_norm[i], apply_conv(tape, down[i], f)));
  return f;
}

Var Decoder::forward(Tape& tape, Var f) const {
  for (const ResBlock& rb : res) {
    Var h = relu(apply_norm(tape, rb.n1, apply_conv(tape, rb.c1, f)));
    h = apply_norm(tape, rb.n2, apply_conv(tape, rb.c2, h));
    f = add(f, h);
  }
  if (cpa) f = cpam(tape, f, *cpa);
  for (std::size_t i = 0; i < up.size(); ++i) {
    f = upsample_nearest2(f);
    f = relu(apply_norm(tape, up_norm[i], apply_conv(tape, up[i], f)));
  }
  Var y = tanh_op(apply_conv(tape, out_conv, f));
  return add_scalar(mul_scalar(y, 0.5), 0.5);  // (tanh+1)/2, strictly inside (0,1)
}

Var Head::forward(Tape& tape, Var x) const {
  Var f = relu(apply_conv(tape, c1, x));
  f = relu(apply_conv(tape, c2, f));
  return apply_conv(tape, c3, f);  // raw scores, least-squares objective
}

}  // namespace nn

UmleModel::UmleModel(const ArchConfig& arch, const ModelOptions& options, std::uint64_t seed)
    : arch_(arch), options_(options) {
  arch_.validate();
  kernel_ = build_gaussian_kernel(KernelSpec{});
  RngSequence init(seed, RngStream::Init);
  enc_low_ = build_encoder("enc_low", init);
  enc_normal_ = build_encoder("enc_normal", init);
  dec_to_normal_ = build_decoder("dec_to_normal", init);
  dec_to_low_ = build_decoder("dec_to_low", init);
  if (!options_.share_encoder) {
    d_enc_low_ = build_encoder("d_enc_low", init);
    d_enc_normal_ = build_encoder("d_enc_normal", init);
  }
  heads_low_ = build_heads("heads_low", init);
  heads_normal_ = build_heads("heads_normal", init);
}

nn::Encoder UmleModel::build_encoder(const std::string& prefix, RngSequence& init) {
  nn::Encoder e;
  e.stem = nn::make_conv(store_, prefix + "/stem", 3, arch_.base_channels, 3, 1, 1, init);
  e.stem_norm = nn::make_norm(store_, prefix + "/stem_norm", arch_.base_channels, false);
  int ch = arch_.base_channels;
  for (int i = 0; i < arch_.n_down; ++i) {
    e.down.push_back(
        nn::make_conv(store_, prefix + "/down" + std::to_string(i), ch, ch * 2, 3, 2, 1, init));
    e.down_norm.push_back(
        nn::make_norm(store_, prefix + "/down" + std::to_string(i) + "_norm", ch * 2, false));
    ch *= 2;
  }
  return e;
}

nn::Decoder UmleModel::build_decoder(const std::string& prefix, RngSequence& init) {
  nn::Decoder d;
  const int C = arch_.encoder_out_channels();
  for (int i = 0; i < arch_.n_res; ++i) {
    const std::string rp = prefix + "/res" + std::to_string(i);
    nn::ResBlock rb;
    rb.c1 = nn::make_conv(store_, rp + "/conv1", C, C, 3, 1, 1, init);
    rb.n1 = nn::make_norm(store_, rp + "/norm1", C, /*adaptive=*/true);
    rb.c2 = nn::make_conv(store_, rp + "/conv2", C, C, 3, 1, 1, init);
    rb.n2 = nn::make_norm(store_, rp + "/norm2", C, /*adaptive=*/true);
    d.res.push_back(rb);
  }
  if (options_.use_cpam)
    d.cpa = make_cpa(store_, prefix + "/cpam", C, init, options_.pixel_form);
  int ch = C;
  for (int i = 0; i < arch_.n_down; ++i) {
    d.up.push_back(
        nn::make_conv(store_, prefix + "/up" + std::to_string(i), ch, ch / 2, 3, 1, 1, init));
    d.up_norm.push_back(
        nn::make_norm(store_, prefix + "/up" + std::to_string(i) + "_norm", ch / 2, true));
    ch /= 2;
  }
  d.out_conv = nn::make_conv(store_, prefix + "/out", ch, 3, 3, 1, 1, init);
  return d;
}

nn::DiscriminatorHeads UmleModel::build_heads(const std::string& prefix, RngSequence& init) {
  nn::DiscriminatorHeads h;
  const int C = arch_.encoder_out_channels();
  const int b = arch_.base_channels;
  auto feature_head = [&](const std::string& hp) {
    nn::Head head;
    head.c1 = nn::make_conv(store_, hp + "/conv1", C, std::max(1, C / 2), 3, 1, 1, init);
    head.c2 = nn::make_conv(store_, hp + "/conv2", std::max(1, C / 2), std::max(1, C / 4), 3, 1, 1, init);
    head.c3 = nn::make_conv(store_, hp + "/conv3", std::max(1, C / 4), 1, 3, 1, 1, init);
    return head;
  };
  auto image_head = [&](const std::string& hp) {
    nn::Head head;
    head.c1 = nn::make_conv(store_, hp + "/conv1", 3, b, 3, 2, 1, init);
    head.c2 = nn::make_conv(store_, hp + "/conv2", b, 2 * b, 3, 2, 1, init);
    head.c3 = nn::make_conv(store_, hp + "/conv3", 2 * b, 1, 3, 1, 1, init);
    return head;
  };
  if (options_.color_branch) {
    if (options_.use_cpam) h.color_cpa = make_cpa(store_, prefix + "/color/cpam", C, init, options_.pixel_form);
    h.color = feature_head(prefix + "/color");
  }
  if (options_.texture_branch) {
    if (options_.use_cpam)
      h.texture_cpa = make_cpa(store_, prefix + "/texture/cpam", C, init, options_.pixel_form);
    h.texture = feature_head(prefix + "/texture");
  }
  if (options_.multiscale_branch) {
    for (int s = 0; s < arch_.scales; ++s)
      h.scale.push_back(image_head(prefix + "/scale" + std::to_string(s)));
    h.local = image_head(prefix + "/local");
  }
  return h;
}

const nn::Encoder& UmleModel::disc_encoder(Domain which) const {
  if (options_.share_encoder) return which == Domain::Low ? enc_low_ : enc_normal_;
  return which == Domain::Low ? *d_enc_low_ : *d_enc_normal_;
}

Var UmleModel::encode(Tape& tape, Var x, Domain input_domain) {
  const Tensor& v = x->value;
  const int div = 1 << arch_.n_down;
  if (v.rank() != 4 || v.dim(2) < div || v.dim(3) < div || v.dim(2) % div != 0 ||
      v.dim(3) % div != 0)
    throw ShapeError("encode: spatial dims must be multiples of " + std::to_string(div) +
                     ", got " + v.shape_str());
  return (input_domain == Domain::Low ? enc_low_ : enc_normal_).forward(tape, x);
}

Var UmleModel::decode(Tape& tape, Var f, Direction dir) {
  if (f->value.dim(1) != arch_.encoder_out_channels())
    throw ShapeError("decode: feature map has wrong channel count " + f->value.shape_str());
  return (dir == Direction::LowToNormal ? dec_to_normal_ : dec_to_low_).forward(tape, f);
}

Var UmleModel::generate(Tape& tape, Var x, Direction dir) {
  const Domain d = dir == Direction::LowToNormal ? Domain::Low : Domain::Normal;
  return decode(tape, encode(tape, x, d), dir);
}

Tensor UmleModel::generate_eval(const Tensor& x, Direction dir) {
  Tape tape;
  NoGradGuard ng(tape);
  return generate(tape, tape.leaf(x), dir)->value;
}

Tensor UmleModel::enhance_full(const Tensor& x, Direction dir) {
  if (x.rank() != 4) throw ShapeError("enhance_full expects a rank-4 image");
  const int div = 1 << arch_.n_down;
  const int H = x.dim(2), W = x.dim(3);
  const int Hp = std::max(div, (H + div - 1) / div * div);
  const int Wp = std::max(div, (W + div - 1) / div * div);
  if (Hp == H && Wp == W) return generate_eval(x, dir);

  Tensor padded({x.dim(0), x.dim(1), Hp, Wp});
  auto mirror = [](int i, int n) {
    while (i >= n) i = 2 * n - i - 1;  // pad is small; one fold suffices in practice
    return i;
  };
  for (int n = 0; n < x.dim(0); ++n)
    for (int c = 0; c < x.dim(1); ++c)
      for (int y = 0; y < Hp; ++y)
        for (int xx = 0; xx < Wp; ++xx)
          padded.at(n, c, y, xx) = x.at(n, c, mirror(y, H), mirror(xx, W));
  Tensor out = generate_eval(padded, dir);
  Tensor cropped({x.dim(0), x.dim(1), H, W});
  for (int n = 0; n < x.dim(0); ++n)
    for (int c = 0; c < x.dim(1); ++c)
      for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx) cropped.at(n, c, y, xx) = out.at(n, c, y, xx);
  return cropped;
}

BranchScores UmleModel::discriminate(Tape& tape, Var x, Var local_patch, Domain which) {
  const Tensor& v = x->value;
  if (v.rank() != 4 || v.dim(2) != arch_.resolution || v.dim(3) != arch_.resolution)
    throw ShapeError("discriminate: expected " + std::to_string(arch_.resolution) + "x" +
                     std::to_string(arch_.resolution) + " input, got " + v.shape_str());
  const nn::Encoder& enc = disc_encoder(which);
  const nn::DiscriminatorHeads& h = which == Domain::Low ? heads_low_ : heads_normal_;

  BranchScores out;
  if (h.color) {
    Var f = enc.forward(tape, lowpass(x, kernel_));
    if (h.color_cpa) f = cpam(tape, f, *h.color_cpa);
    out.maps.emplace_back(BranchId::Color, h.color->forward(tape, f));
  }
  if (h.texture) {
    Var f = enc.forward(tape, highpass(x, kernel_));
    if (h.texture_cpa) f = cpam(tape, f, *h.texture_cpa);
    out.maps.emplace_back(BranchId::Texture, h.texture->forward(tape, f));
  }
  if (!h.scale.empty()) {
    std::vector<Var> pyr = build_pyramid(x, arch_.scales);
    static constexpr BranchId kScaleIds[3] = {BranchId::Scale0, BranchId::Scale1, BranchId::Scale2};
    for (int s = 0; s < arch_.scales; ++s)
      out.maps.emplace_back(kScaleIds[s], h.scale[static_cast<std::size_t>(s)].forward(tape, pyr[static_cast<std::size_t>(s)]));
    if (local_patch->value.dim(2) != arch_.local_patch ||
        local_patch->value.dim(3) != arch_.local_patch)
      throw ShapeError("discriminate: local patch must be " + std::to_string(arch_.local_patch) +
                       "x" + std::to_string(arch_.local_patch));
    out.maps.emplace_back(BranchId::LocalPatch, h.local->forward(tape, local_patch));
  }
  return out;
}

BranchScores UmleModel::discriminate(Tape& tape, Var x, Domain which, std::uint64_t seed,
                                     std::uint64_t iteration, RngStream patch_stream) {
  Var patch = nullptr;
  if (options_.multiscale_branch) {
    const auto [oy, ox] = patch_offsets(x->value.dim(2), x->value.dim(3), arch_.local_patch, seed,
                                        patch_stream, iteration);
    patch = slice_spatial(x, oy, ox, arch_.local_patch);
  } else {
    patch = x;  // unused by any head
  }
  return discriminate(tape, x, patch, which);
}

std::vector<Param*> UmleModel::generator_params() {
  std::vector<Param*> out;
  for (const char* prefix : {"enc_low/", "enc_normal/", "dec_to_normal/", "dec_to_low/"})
    for (Param* p : store_.with_prefix(prefix)) out.push_back(p);
  return out;
}

std::vector<Param*> UmleModel::discriminator_params(bool d_updates_encoder) {
  std::vector<Param*> out;
  if (options_.share_encoder) {
    if (d_updates_encoder)
      for (const char* prefix : {"enc_low/", "enc_normal/"})
        for (Param* p : store_.with_prefix(prefix)) out.push_back(p);
  } else {
    for (const char* prefix : {"d_enc_low/", "d_enc_normal/"})
      for (Param* p : store_.with_prefix(prefix)) out.push_back(p);
  }
  for (const char* prefix : {"heads_low/", "heads_normal/"})
    for (Param* p : store_.with_prefix(prefix)) out.push_back(p);
  return out;
}

std::vector<UmleModel::ComponentCount> UmleModel::count_params() const {
  auto count_prefix = [this](const std::string& prefix) {
    std::size_t n = 0;
    for (const Param* p : store_.all())
      if (p->name.rfind(prefix, 0) == 0) n += p->value.size();
    return n;
  };
  std::vector<ComponentCount> table;
  const bool sh = options_.share_encoder;
  table.push_back({"encoder_low", count_prefix("enc_low/"),
                   sh ? "G[low->normal], D[low]" : "G[low->normal]"});
  table.push_back({"encoder_normal", count_prefix("enc_normal/"),
                   sh ? "G[normal->low], D[normal]" : "G[normal->low]"});
  if (!sh) {
    table.push_back({"d_encoder_low", count_prefix("d_enc_low/"), "D[low]"});
    table.push_back({"d_encoder_normal", count_prefix("d_enc_normal/"), "D[normal]"});
  }
  table.push_back({"decoder_to_normal", count_prefix("dec_to_normal/"), "G[low->normal]"});
  table.push_back({"decoder_to_low", count_prefix("dec_to_low/"), "G[normal->low]"});
  table.push_back({"disc_heads_low", count_prefix("heads_low/"), "D[low]"});
  table.push_back({"disc_heads_normal", count_prefix("heads_normal/"), "D[normal]"});
  return table;
}

}  // namespace umle
