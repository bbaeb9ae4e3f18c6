#include "umle/training.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "umle/errors.hpp"

namespace umle {

namespace fs = std::filesystem;

std::string trace_header() { return "iter,adv_d,adv_g,cyc,color,pre,idt,total_g,wall_ms"; }

std::string trace_row(const LossBreakdown& bd) {
  char buf[360];
  std::snprintf(buf, sizeof buf, "%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.3f",
                bd.iteration, bd.adv_d, bd.adv_g, bd.cyc, bd.color, bd.pre, bd.idt, bd.total_g,
                bd.wall_ms);
  return buf;
}

namespace {

FeatureExtractor build_extractor(const TrainConfig& cfg) {
  if (!cfg.vgg_weights.empty()) return FeatureExtractor::load(cfg.vgg_weights, cfg.perceptual_layer);
  return FeatureExtractor::make_default(cfg.perceptual_layer);
}

double mean_sq_to_one(const Tensor& t) {
  double acc = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double d = t[i] - 1.0;
    acc += d * d;
  }
  return acc / static_cast<double>(t.size());
}

std::string rng_state_hex(std::uint64_t seed, long iteration) {
  char buf[34];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(seed),
                static_cast<unsigned long long>(iteration));
  return buf;
}

}  // namespace

Trainer::Trainer(const TrainConfig& cfg)
    : cfg_(cfg),
      model_(cfg.arch, cfg.model_options(), cfg.seed),
      extractor_(build_extractor(cfg)),
      opt_(AdamGcConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay}) {
  cfg_.validate();
  g_group_ = model_.generator_params();
  d_group_ = model_.discriminator_params(cfg_.d_step_updates_encoder);
}

void Trainer::set_phase(const std::vector<Param*>& group) {
  for (Param* p : model_.params().all()) p->trainable = false;
  for (Param* p : group) {
    p->trainable = true;
    p->grad.zero();
  }
}

LossBreakdown Trainer::train_step(const Tensor& x_low, const Tensor& x_normal, long iteration) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t it = static_cast<std::uint64_t>(iteration);
  const AdversarialForm form = cfg_.adversarial_form;
  LossBreakdown bd;
  bd.iteration = iteration;

  // -- discriminator phase: real vs. detached fakes --------------------------
  const Tensor fake_n_detached = model_.generate_eval(x_low, Direction::LowToNormal);
  const Tensor fake_l_detached = model_.generate_eval(x_normal, Direction::NormalToLow);

  set_phase(d_group_);
  {
    Tape tape;
    Var xn = tape.leaf(x_normal);
    Var xl = tape.leaf(x_low);
    Var fn = tape.leaf(fake_n_detached);
    Var fl = tape.leaf(fake_l_detached);
    BranchScores real_n = model_.discriminate(tape, xn, Domain::Normal, cfg_.seed, it, RngStream::PatchRealN);
    BranchScores fake_n = model_.discriminate(tape, fn, Domain::Normal, cfg_.seed, it, RngStream::PatchFakeN);
    BranchScores real_l = model_.discriminate(tape, xl, Domain::Low, cfg_.seed, it, RngStream::PatchRealL);
    BranchScores fake_l = model_.discriminate(tape, fl, Domain::Low, cfg_.seed, it, RngStream::PatchFakeL);
    Var loss_d = add(adversarial_loss_d(real_n, fake_n, form), adversarial_loss_d(real_l, fake_l, form));
    bd.adv_d = loss_d->scalar();
    tape.backward(loss_d);
  }
  if (std::string bad = first_non_finite_grad(d_group_); !bad.empty())
    throw NonFiniteGradient(bad, iteration);
  clip_global_norm(d_group_, cfg_.clip_norm);
  opt_.step(d_group_);

  // -- generator phase --------------------------------------------------------
  set_phase(g_group_);
  {
    Tape tape;
    Var xl = tape.leaf(x_low);
    Var xn = tape.leaf(x_normal);
    Var fake_n = model_.generate(tape, xl, Direction::LowToNormal);
    Var fake_l = model_.generate(tape, xn, Direction::NormalToLow);
    Var cyc_l = model_.generate(tape, fake_n, Direction::NormalToLow);
    Var cyc_n = model_.generate(tape, fake_l, Direction::LowToNormal);
    Var idt_n = model_.generate(tape, xn, Direction::LowToNormal);

    BranchScores s_fn = model_.discriminate(tape, fake_n, Domain::Normal, cfg_.seed, it, RngStream::PatchGFakeN);
    BranchScores s_fl = model_.discriminate(tape, fake_l, Domain::Low, cfg_.seed, it, RngStream::PatchGFakeL);

    LossTerms terms;
    terms.adv = add(adversarial_loss_g(s_fn, form), adversarial_loss_g(s_fl, form));
    terms.cyc = add(cycle_loss(xl, cyc_l), cycle_loss(xn, cyc_n));
    if (Var cs = s_fn.find(BranchId::Color)) terms.color = color_loss(cs, form);
    terms.pre = preserving_loss(tape, xl, fake_n, extractor_);
    terms.idt = identity_loss(xn, idt_n);

    const TotalLoss tl = total_loss(tape, terms, cfg_.effective_weights());
    bd.adv_g = tl.adv;
    bd.cyc = tl.cyc;
    bd.color = tl.color;
    bd.pre = tl.pre;
    bd.idt = tl.idt;
    bd.total_g = tl.value;
    for (std::size_t i = 0; i < s_fn.maps.size(); ++i)
      bd.branch_adv_g.emplace_back(s_fn.maps[i].first,
                                   mean_sq_to_one(s_fn.maps[i].second->value) +
                                       mean_sq_to_one(s_fl.maps[i].second->value));
    tape.backward(tl.total);
  }
  if (std::string bad = first_non_finite_grad(g_group_); !bad.empty())
    throw NonFiniteGradient(bad, iteration);
  clip_global_norm(g_group_, cfg_.clip_norm);
  opt_.step(g_group_);

  bd.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return bd;
}

Checkpoint Trainer::make_checkpoint(long iteration) {
  Checkpoint c;
  c.iteration = iteration;
  c.config_digest = cfg_.digest();
  c.config_text = cfg_.canonical_text();
  c.rng_state_hex = rng_state_hex(cfg_.seed, iteration);
  for (Param* p : model_.params().all()) {
    c.params.emplace_back(p->name, p->value.clone());
    AdamGc::State& s = opt_.state_for(*p);
    c.adam_m.emplace_back(p->name, s.m.clone());
    c.adam_v.emplace_back(p->name, s.v.clone());
    c.adam_t[p->name] = s.t;
  }
  return c;
}

void Trainer::restore(const Checkpoint& ckpt) {
  auto copy_into = [](const Tensor& src, Tensor& dst, const std::string& name) {
    if (!src.same_shape(dst))
      throw CheckpointCorrupt("shape mismatch restoring '" + name + "'");
    std::copy_n(src.data(), src.size(), dst.data());
  };
  for (const auto& [name, t] : ckpt.params) {
    Param* p = model_.params().find(name);
    if (!p) throw CheckpointCorrupt("checkpoint has unknown parameter '" + name + "'");
    copy_into(t, p->value, name);
  }
  for (Param* p : model_.params().all())
    if (std::none_of(ckpt.params.begin(), ckpt.params.end(),
                     [&](const auto& kv) { return kv.first == p->name; }))
      throw CheckpointCorrupt("checkpoint missing parameter '" + p->name + "'");
  for (const auto& [name, t] : ckpt.adam_m) {
    auto it = ckpt.adam_t.find(name);
    const Tensor* v = nullptr;
    for (const auto& [vn, vt] : ckpt.adam_v)
      if (vn == name) v = &vt;
    if (!v || it == ckpt.adam_t.end())
      throw CheckpointCorrupt("incomplete optimizer state for '" + name + "'");
    opt_.restore_state(name, t.clone(), v->clone(), it->second);
  }
  start_iteration_ = ckpt.iteration;
}

Checkpoint Trainer::train(const DomainDataset& low, const DomainDataset& normal) {
  fs::create_directories(cfg_.out_dir);
  std::ofstream trace(fs::path(cfg_.out_dir) / "trace.csv");
  if (!trace) throw UmleError("cannot write trace in " + cfg_.out_dir);
  trace << trace_header() << "\n";

  Checkpoint last;
  for (long iter = start_iteration_ + 1; iter <= cfg_.iterations; ++iter) {
    auto [xl, xn] = sample_unpaired(low, normal, cfg_.seed, static_cast<std::uint64_t>(iter));
    LossBreakdown bd = train_step(xl.data, xn.data, iter);
    trace << trace_row(bd) << "\n";
    trace.flush();
    if (!trace)
      throw UmleError("trace write failed at iteration " + std::to_string(iter));
    if (iter % cfg_.checkpoint_every == 0 || iter == cfg_.iterations) {
      char name[48];
      std::snprintf(name, sizeof name, "checkpoint_%06ld.bin", iter);
      last = make_checkpoint(iter);
      save_checkpoint(last, fs::path(cfg_.out_dir) / name);
    }
  }
  save_checkpoint(last, fs::path(cfg_.out_dir) / "checkpoint_final.bin");
  return last;
}

}  // namespace umle
