#pragma once

#include <string>
#include <vector>

#include "umle/autograd.hpp"
#include "umle/tensor.hpp"

namespace umle {

// Gaussian low-pass kernel parameters. Note the denominator is 2*sigma (the
// sigma values act as variances); with lambda = 0.053 ~ 1/(6*pi) the kernel
// integrates to ~1 without renormalization.
struct KernelSpec {
  double lambda = 0.053;
  double mu_x = 0.0;
  double mu_y = 0.0;
  double sigma_x = 3.0;
  double sigma_y = 3.0;
  int support_radius = 10;
};

struct Kernel2D {
  Tensor weights;  // (2r+1, 2r+1)
  int radius = 0;
  double sum() const { return weights.sum(); }
};

// Tabulates w[r+y][r+x] = lambda * exp(-(x-mu_x)^2/(2 sigma_x) - (y-mu_y)^2/(2 sigma_y)).
// The table is used as-is (no renormalization). Throws InvalidKernelSpec.
Kernel2D build_gaussian_kernel(const KernelSpec& spec);

// Per-channel 2-D convolution with reflect padding; shape-preserving.
Var lowpass(Var x, const Kernel2D& k);
// Spatial residual x - lowpass(x). The stored residual is nudged by at most
// one ulp per pixel so that lowpass(x) + highpass(x) reconstructs x bitwise.
Var highpass(Var x, const Kernel2D& k);

// level 0 is x; level i is a 2x2 mean-pool of level i-1. H and W must be
// divisible by 2^(levels-1); throws PyramidShapeError otherwise.
std::vector<Var> build_pyramid(Var x, int levels);

// Tensor-level conveniences (forward only, no graph).
Tensor lowpass(const Tensor& x, const Kernel2D& k);
Tensor highpass(const Tensor& x, const Kernel2D& k);
std::vector<Tensor> build_pyramid(const Tensor& x, int levels);

void dump_kernel_csv(const Kernel2D& k, const std::string& path);

}  // namespace umle
