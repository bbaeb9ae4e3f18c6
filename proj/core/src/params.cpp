#include "umle/params.hpp"

#include <cmath>

#include "umle/errors.hpp"

namespace umle {

Param& ParamStore::add(const std::string& name, Tensor value, int logical_rank, bool clamp01) {
  if (index_.count(name)) throw UmleError("duplicate parameter name: " + name);
  auto p = std::make_unique<Param>();
  p->name = name;
  p->grad = Tensor::zeros(value.shape());
  p->value = std::move(value);
  p->logical_rank = logical_rank;
  p->clamp01 = clamp01;
  index_[name] = params_.size();
  params_.push_back(std::move(p));
  return *params_.back();
}

Param* ParamStore::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : params_[it->second].get();
}

const Param* ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : params_[it->second].get();
}

Param& ParamStore::at(const std::string& name) {
  Param* p = find(name);
  if (!p) throw UmleError("unknown parameter: " + name);
  return *p;
}

std::vector<Param*> ParamStore::all() {
  std::vector<Param*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Param*> ParamStore::all() const {
  std::vector<const Param*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<Param*> ParamStore::with_prefix(const std::string& prefix) {
  std::vector<Param*> out;
  for (auto& p : params_)
    if (p->name.rfind(prefix, 0) == 0) out.push_back(p.get());
  return out;
}

std::size_t ParamStore::total_scalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void init_fan_in_uniform(Tensor& t, int fan_in, RngSequence& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.next_uniform(-bound, bound);
}

Var param_leaf(Tape& tape, Param& p) {
  if (p.trainable && tape.grad_enabled()) return tape.leaf_with_grad_sink(p.value, p.grad);
  return tape.leaf(p.value, false);
}

}  // namespace umle
