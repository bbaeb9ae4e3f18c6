#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "umle/autograd.hpp"
#include "umle/errors.hpp"

namespace umle {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using CMapM = Eigen::Map<const MatRM>;

// col is (C*kh*kw) x (Ho*Wo) for one batch sample.
void im2col(const double* x, int C, int H, int W, int kh, int kw, int stride, int pad, int Ho,
            int Wo, double* col) {
  for (int c = 0; c < C; ++c) {
    const double* xc = x + static_cast<std::size_t>(c) * H * W;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        double* row = col + ((static_cast<std::size_t>(c) * kh + ky) * kw + kx) *
                                (static_cast<std::size_t>(Ho) * Wo);
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= H) {
            std::fill_n(row + static_cast<std::size_t>(oy) * Wo, Wo, 0.0);
            continue;
          }
          const double* src = xc + static_cast<std::size_t>(iy) * W;
          double* dst = row + static_cast<std::size_t>(oy) * Wo;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride + kx - pad;
            dst[ox] = (ix >= 0 && ix < W) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, int C, int H, int W, int kh, int kw, int stride, int pad,
                int Ho, int Wo, double* x) {
  for (int c = 0; c < C; ++c) {
    double* xc = x + static_cast<std::size_t>(c) * H * W;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const double* row = col + ((static_cast<std::size_t>(c) * kh + ky) * kw + kx) *
                                      (static_cast<std::size_t>(Ho) * Wo);
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= H) continue;
          double* dst = xc + static_cast<std::size_t>(iy) * W;
          const double* src = row + static_cast<std::size_t>(oy) * Wo;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < W) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

int reflect_index(int i, int n) {
  // BORDER_REFLECT: ...[2][1][0] | [0][1][2]... ; folds until in range.
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return i;
}

}  // namespace

Var conv2d(Var x, Var w, Var b, int stride, int pad) {
  const Tensor& xv = x->value;
  const Tensor& wv = w->value;
  if (xv.rank() != 4 || wv.rank() != 4) throw ShapeError("conv2d expects rank-4 x and w");
  const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const int M = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
  if (wv.dim(1) != C)
    throw ShapeError("conv2d: weight expects " + std::to_string(wv.dim(1)) + " input channels, got " +
                     std::to_string(C));
  if (b->value.size() != static_cast<std::size_t>(M)) throw ShapeError("conv2d: bias size mismatch");
  const int Ho = (H + 2 * pad - kh) / stride + 1;
  const int Wo = (W + 2 * pad - kw) / stride + 1;
  if (Ho <= 0 || Wo <= 0) throw ShapeError("conv2d: kernel larger than padded input");

  const int K = C * kh * kw;
  const int P = Ho * Wo;
  Tensor out({N, M, Ho, Wo});
  std::vector<double> col(static_cast<std::size_t>(K) * P);
  for (int n = 0; n < N; ++n) {
    im2col(xv.data() + static_cast<std::size_t>(n) * C * H * W, C, H, W, kh, kw, stride, pad, Ho,
           Wo, col.data());
    CMapM wm(wv.data(), M, K);
    CMapM cm(col.data(), K, P);
    MapM om(out.data() + static_cast<std::size_t>(n) * M * P, M, P);
    om.noalias() = wm * cm;
    for (int m = 0; m < M; ++m) om.row(m).array() += b->value[m];
  }

  Var r = x->tape->make(std::move(out), {x, w, b}, nullptr);
  if (r->needs_grad)
    r->backward = [r, x, w, b, stride, pad, N, C, H, W, M, kh, kw, Ho, Wo, K, P] {
      const Tensor& xv = x->value;
      const Tensor& wv = w->value;
      std::vector<double> col(static_cast<std::size_t>(K) * P);
      for (int n = 0; n < N; ++n) {
        CMapM gy(r->grad.data() + static_cast<std::size_t>(n) * M * P, M, P);
        if (b->needs_grad) {
          double* gb = b->grad_acc().data();
          for (int m = 0; m < M; ++m) gb[m] += gy.row(m).sum();
        }
        if (w->needs_grad) {
          im2col(xv.data() + static_cast<std::size_t>(n) * C * H * W, C, H, W, kh, kw, stride,
                 pad, Ho, Wo, col.data());
          CMapM cm(col.data(), K, P);
          MapM gw(w->grad_acc().data(), M, K);
          gw.noalias() += gy * cm.transpose();
        }
        if (x->needs_grad) {
          CMapM wm(wv.data(), M, K);
          MapM cm(col.data(), K, P);
          cm.noalias() = wm.transpose() * gy;
          col2im_add(col.data(), C, H, W, kh, kw, stride, pad, Ho, Wo,
                     x->grad_acc().data() + static_cast<std::size_t>(n) * C * H * W);
        }
      }
    };
  return r;
}

Var conv1d_channels(Var pooled, Var w, Var b) {
  const Tensor& xv = pooled->value;
  const Tensor& wv = w->value;
  if (xv.rank() != 4 || xv.dim(2) != 1 || xv.dim(3) != 1)
    throw ShapeError("conv1d_channels expects (N,C,1,1) input");
  if (wv.rank() != 3 || wv.dim(0) != 1 || wv.dim(1) != 1 || wv.dim(2) % 2 == 0)
    throw ShapeError("conv1d_channels expects (1,1,k) weight with odd k");
  const int N = xv.dim(0), C = xv.dim(1), k = wv.dim(2), r0 = wv.dim(2) / 2;

  Tensor out({N, C, 1, 1});
  for (int n = 0; n < N; ++n) {
    const double* in = xv.data() + static_cast<std::size_t>(n) * C;
    double* o = out.data() + static_cast<std::size_t>(n) * C;
    for (int c = 0; c < C; ++c) {
      double acc = b->value[0];
      for (int j = 0; j < k; ++j) {
        const int cc = c + j - r0;
        if (cc >= 0 && cc < C) acc += wv[j] * in[cc];
      }
      o[c] = acc;
    }
  }

  Var r = pooled->tape->make(std::move(out), {pooled, w, b}, nullptr);
  if (r->needs_grad)
    r->backward = [r, pooled, w, b, N, C, k, r0] {
      const Tensor& xv = pooled->value;
      const Tensor& wv = w->value;
      for (int n = 0; n < N; ++n) {
        const double* g = r->grad.data() + static_cast<std::size_t>(n) * C;
        const double* in = xv.data() + static_cast<std::size_t>(n) * C;
        for (int c = 0; c < C; ++c) {
          if (b->needs_grad) b->grad_acc()[0] += g[c];
          for (int j = 0; j < k; ++j) {
            const int cc = c + j - r0;
            if (cc < 0 || cc >= C) continue;
            if (w->needs_grad) w->grad_acc()[j] += g[c] * in[cc];
            if (pooled->needs_grad) pooled->grad_acc()[static_cast<std::size_t>(n) * C + cc] += g[c] * wv[j];
          }
        }
      }
    };
  return r;
}

Var depthwise_fixed_conv_reflect(Var x, const Tensor& kernel) {
  const Tensor& xv = x->value;
  if (xv.rank() != 4) throw ShapeError("depthwise conv expects rank-4 input");
  if (kernel.rank() != 2 || kernel.dim(0) != kernel.dim(1) || kernel.dim(0) % 2 == 0)
    throw ShapeError("depthwise conv expects odd square kernel");
  const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const int ks = kernel.dim(0), r0 = ks / 2;

  Tensor out(xv.shape());
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const double* in = xv.data() + (static_cast<std::size_t>(n) * C + c) * H * W;
      double* o = out.data() + (static_cast<std::size_t>(n) * C + c) * H * W;
      for (int y = 0; y < H; ++y)
        for (int xpos = 0; xpos < W; ++xpos) {
          double acc = 0.0;
          for (int ky = 0; ky < ks; ++ky) {
            const int iy = reflect_index(y + ky - r0, H);
            const double* row = in + static_cast<std::size_t>(iy) * W;
            const double* krow = kernel.data() + static_cast<std::size_t>(ky) * ks;
            for (int kx = 0; kx < ks; ++kx) {
              acc += krow[kx] * row[reflect_index(xpos + kx - r0, W)];
            }
          }
          o[static_cast<std::size_t>(y) * W + xpos] = acc;
        }
    }

  Tensor ker = kernel;  // shared storage keeps the closure cheap
  Var r = x->tape->make(std::move(out), {x}, nullptr);
  if (r->needs_grad)
    r->backward = [r, x, ker, N, C, H, W, ks, r0] {
      double* gx = x->grad_acc().data();
      const double* g = r->grad.data();
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          const std::size_t off = (static_cast<std::size_t>(n) * C + c) * static_cast<std::size_t>(H) * W;
          for (int y = 0; y < H; ++y)
            for (int xpos = 0; xpos < W; ++xpos) {
              const double gv = g[off + static_cast<std::size_t>(y) * W + xpos];
              for (int ky = 0; ky < ks; ++ky) {
                const int iy = reflect_index(y + ky - r0, H);
                const double* krow = ker.data() + static_cast<std::size_t>(ky) * ks;
                for (int kx = 0; kx < ks; ++kx) {
                  const int ix = reflect_index(xpos + kx - r0, W);
                  gx[off + static_cast<std::size_t>(iy) * W + ix] += krow[kx] * gv;
                }
              }
            }
        }
    };
  return r;
}

Var avg_pool2(Var x) {
  const Tensor& xv = x->value;
  if (xv.rank() != 4) throw ShapeError("avg_pool2 expects rank-4 input");
  const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  if (H % 2 != 0 || W % 2 != 0) throw ShapeError("avg_pool2 expects even H and W");
  const int Ho = H / 2, Wo = W / 2;
  Tensor out({N, C, Ho, Wo});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const double* in = xv.data() + (static_cast<std::size_t>(n) * C + c) * H * W;
      double* o = out.data() + (static_cast<std::size_t>(n) * C + c) * Ho * Wo;
      for (int y = 0; y < Ho; ++y)
        for (int xx = 0; xx < Wo; ++xx) {
          const double* p = in + static_cast<std::size_t>(2 * y) * W + 2 * xx;
          o[static_cast<std::size_t>(y) * Wo + xx] = 0.25 * (p[0] + p[1] + p[W] + p[W + 1]);
        }
    }
  Var r = x->tape->make(std::move(out), {x}, nullptr);
  if (r->needs_grad)
    r->backward = [r, x, N, C, H, W, Ho, Wo] {
      double* gx = x->grad_acc().data();
      const double* g = r->grad.data();
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          double* gi = gx + (static_cast<std::size_t>(n) * C + c) * H * W;
          const double* go = g + (static_cast<std::size_t>(n) * C + c) * Ho * Wo;
          for (int y = 0; y < Ho; ++y)
            for (int xx = 0; xx < Wo; ++xx) {
              const double gv = 0.25 * go[static_cast<std::size_t>(y) * Wo + xx];
              double* p = gi + static_cast<std::size_t>(2 * y) * W + 2 * xx;
              p[0] += gv;
              p[1] += gv;
              p[W] += gv;
              p[W + 1] += gv;
            }
        }
    };
  return r;
}

Var upsample_nearest2(Var x) {
  const Tensor& xv = x->value;
  if (xv.rank() != 4) throw ShapeError("upsample expects rank-4 input");
  const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  Tensor out({N, C, 2 * H, 2 * W});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const double* in = xv.data() + (static_cast<std::size_t>(n) * C + c) * H * W;
      double* o = out.data() + (static_cast<std::size_t>(n) * C + c) * 4 * H * W;
      for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx) {
          const double v = in[static_cast<std::size_t>(y) * W + xx];
          double* p = o + static_cast<std::size_t>(2 * y) * 2 * W + 2 * xx;
          p[0] = v;
          p[1] = v;
          p[2 * W] = v;
          p[2 * W + 1] = v;
        }
    }
  Var r = x->tape->make(std::move(out), {x}, nullptr);
  if (r->needs_grad)
    r->backward = [r, x, N, C, H, W] {
      double* gx = x->grad_acc().data();
      const double* g = r->grad.data();
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          double* gi = gx + (static_cast<std::size_t>(n) * C + c) * H * W;
          const double* go = g + (static_cast<std::size_t>(n) * C + c) * 4 * H * W;
          for (int y = 0; y < H; ++y)
            for (int xx = 0; xx < W; ++xx) {
              const double* p = go + static_cast<std::size_t>(2 * y) * 2 * W + 2 * xx;
              gi[static_cast<std::size_t>(y) * W + xx] += p[0] + p[1] + p[2 * W] + p[2 * W + 1];
            }
        }
    };
  return r;
}

Var slice_spatial(Var x, int oy, int ox, int size) {
  const Tensor& xv = x->value;
  if (xv.rank() != 4) throw ShapeError("slice_spatial expects rank-4 input");
  const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  if (oy < 0 || ox < 0 || oy + size > H || ox + size > W)
    throw ShapeError("slice_spatial: window out of bounds");
  Tensor out({N, C, size, size});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const double* in = xv.data() + (static_cast<std::size_t>(n) * C + c) * H * W;
      double* o = out.data() + (static_cast<std::size_t>(n) * C + c) * size * size;
      for (int y = 0; y < size; ++y)
        std::copy_n(in + static_cast<std::size_t>(oy + y) * W + ox, size,
                    o + static_cast<std::size_t>(y) * size);
    }
  Var r = x->tape->make(std::move(out), {x}, nullptr);
  if (r->needs_grad)
    r->backward = [r, x, oy, ox, size, N, C, H, W] {
      double* gx = x->grad_acc().data();
      const double* g = r->grad.data();
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          double* gi = gx + (static_cast<std::size_t>(n) * C + c) * H * W;
          const double* go = g + (static_cast<std::size_t>(n) * C + c) * size * size;
          for (int y = 0; y < size; ++y) {
            double* dst = gi + static_cast<std::size_t>(oy + y) * W + ox;
            const double* src = go + static_cast<std::size_t>(y) * size;
            for (int xx = 0; xx < size; ++xx) dst[xx] += src[xx];
          }
        }
    };
  return r;
}

}  // namespace umle
