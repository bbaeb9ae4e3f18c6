#include "umle/optimizer.hpp"

#include <cmath>

#include "umle/errors.hpp"

namespace umle {

void centralize_gradient(Tensor& grad, const std::vector<int>& shape, int logical_rank) {
  if (logical_rank < 2) return;
  const int out_ch = shape[0];
  const std::size_t row = grad.size() / static_cast<std::size_t>(out_ch);
  if (row <= 1) {
    // Degenerate single-column matrix: the row mean is the element itself.
    grad.zero();
    return;
  }
  double* g = grad.data();
  for (int m = 0; m < out_ch; ++m) {
    double* p = g + static_cast<std::size_t>(m) * row;
    double mean = 0.0;
    for (std::size_t i = 0; i < row; ++i) mean += p[i];
    mean /= static_cast<double>(row);
    for (std::size_t i = 0; i < row; ++i) p[i] -= mean;
  }
}

double clip_global_norm(const std::vector<Param*>& group, double max_norm) {
  double sq = 0.0;
  for (const Param* p : group)
    for (std::size_t i = 0; i < p->grad.size(); ++i) sq += p->grad[i] * p->grad[i];
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (Param* p : group)
      for (std::size_t i = 0; i < p->grad.size(); ++i) p->grad[i] *= scale;
  }
  return norm;
}

std::string first_non_finite_grad(const std::vector<Param*>& group) {
  for (const Param* p : group)
    if (!p->grad.all_finite()) return p->name;
  return {};
}

AdamGc::State& AdamGc::state_for(const Param& p) {
  auto it = states_.find(p.name);
  if (it == states_.end()) {
    State s;
    s.m = Tensor::zeros(p.value.shape());
    s.v = Tensor::zeros(p.value.shape());
    it = states_.emplace(p.name, std::move(s)).first;
  }
  return it->second;
}

void AdamGc::restore_state(const std::string& name, Tensor m, Tensor v, long t) {
  State s;
  s.m = std::move(m);
  s.v = std::move(v);
  s.t = t;
  states_[name] = std::move(s);
}

void AdamGc::step(const std::vector<Param*>& group) {
  for (Param* p : group) {
    State& s = state_for(*p);
    ++s.t;
    centralize_gradient(p->grad, p->value.shape(), p->logical_rank);

    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(s.t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(s.t));
    double* w = p->value.data();
    const double* g = p->grad.data();
    double* m = s.m.data();
    double* v = s.v.data();
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * w[i]);
    }
    if (p->clamp01)
      for (std::size_t i = 0; i < p->value.size(); ++i)
        w[i] = w[i] < 0.0 ? 0.0 : (w[i] > 1.0 ? 1.0 : w[i]);
  }
}

}  // namespace umle
