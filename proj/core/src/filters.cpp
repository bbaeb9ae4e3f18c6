#include "umle/filters.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "umle/errors.hpp"

namespace umle {

Kernel2D build_gaussian_kernel(const KernelSpec& spec) {
  if (spec.sigma_x <= 0.0 || spec.sigma_y <= 0.0)
    throw InvalidKernelSpec("sigma must be positive");
  if (spec.lambda <= 0.0) throw InvalidKernelSpec("lambda must be positive");
  if (spec.support_radius < 1) throw InvalidKernelSpec("support radius must be >= 1");

  const int r = spec.support_radius;
  Kernel2D k;
  k.radius = r;
  k.weights = Tensor({2 * r + 1, 2 * r + 1});
  for (int y = -r; y <= r; ++y)
    for (int x = -r; x <= r; ++x) {
      const double dx = static_cast<double>(x) - spec.mu_x;
      const double dy = static_cast<double>(y) - spec.mu_y;
      k.weights[static_cast<std::size_t>(y + r) * (2 * r + 1) + (x + r)] =
          spec.lambda * std::exp(-dx * dx / (2.0 * spec.sigma_x) - dy * dy / (2.0 * spec.sigma_y));
    }
  return k;
}

Var lowpass(Var x, const Kernel2D& k) { return depthwise_fixed_conv_reflect(x, k.weights); }

namespace {

// Nudge h so that fl(l + h) == x for every element. The adjustment is at most
// a few ulps; the analytic residual x - l is preserved to rounding.
void fix_residual_exact(Tensor& h, const Tensor& x, const Tensor& l) {
  for (std::size_t i = 0; i < h.size(); ++i) {
    double hi = h[i];
    for (int iter = 0; iter < 8; ++iter) {
      const double recon = l[i] + hi;
      if (recon == x[i]) break;
      hi += x[i] - recon;
    }
    h[i] = hi;
  }
}

}  // namespace

Var highpass(Var x, const Kernel2D& k) {
  Var low = lowpass(x, k);
  Var h = sub(x, low);
  fix_residual_exact(h->value, x->value, low->value);
  return h;
}

std::vector<Var> build_pyramid(Var x, int levels) {
  if (levels < 1) throw PyramidShapeError("levels must be >= 1");
  const int H = x->value.dim(2), W = x->value.dim(3);
  const int div = 1 << (levels - 1);
  if (H % div != 0 || W % div != 0)
    throw PyramidShapeError("image dims " + std::to_string(H) + "x" + std::to_string(W) +
                            " not divisible by " + std::to_string(div));
  std::vector<Var> out;
  out.reserve(static_cast<std::size_t>(levels));
  out.push_back(x);
  for (int i = 1; i < levels; ++i) out.push_back(avg_pool2(out.back()));
  return out;
}

Tensor lowpass(const Tensor& x, const Kernel2D& k) {
  Tape t;
  NoGradGuard ng(t);
  return lowpass(t.leaf(x), k)->value;
}

Tensor highpass(const Tensor& x, const Kernel2D& k) {
  Tape t;
  NoGradGuard ng(t);
  return highpass(t.leaf(x), k)->value;
}

std::vector<Tensor> build_pyramid(const Tensor& x, int levels) {
  Tape t;
  NoGradGuard ng(t);
  std::vector<Tensor> out;
  for (Var v : build_pyramid(t.leaf(x), levels)) out.push_back(v->value);
  return out;
}

void dump_kernel_csv(const Kernel2D& k, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw UmleError("cannot write kernel CSV: " + path);
  const int s = 2 * k.radius + 1;
  char buf[32];
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      std::snprintf(buf, sizeof buf, "%.17g", k.weights[static_cast<std::size_t>(y) * s + x]);
      f << buf << (x + 1 < s ? "," : "\n");
    }
  }
}

}  // namespace umle
