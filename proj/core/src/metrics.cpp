#include "umle/metrics.hpp"

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <ctime>
#include <iostream>

#include "umle/checkpoint.hpp"
#include "umle/errors.hpp"
#include "umle/rng.hpp"

namespace umle {

namespace {

// Rounded 8-bit luma plane scaled to [0,255].
std::vector<double> luma255(const Tensor& img, int& H, int& W) {
  if (img.rank() != 4 || img.dim(0) != 1 || img.dim(1) != 3)
    throw ShapeError("expected a (1,3,H,W) image, got " + img.shape_str());
  H = img.dim(2);
  W = img.dim(3);
  std::vector<double> g(static_cast<std::size_t>(H) * W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double v =
          0.299 * img.at(0, 0, y, x) + 0.587 * img.at(0, 1, y, x) + 0.114 * img.at(0, 2, y, x);
      g[static_cast<std::size_t>(y) * W + x] = static_cast<double>(std::lround(v * 255.0));
    }
  return g;
}

int clamp_index(int i, int n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); }

// 7x7 Gaussian window, sigma = 7/6, normalized to sum 1.
const std::array<double, 49>& mscn_window() {
  static const std::array<double, 49> w = [] {
    std::array<double, 49> k{};
    const double s2 = (7.0 / 6.0) * (7.0 / 6.0);
    double sum = 0.0;
    for (int y = -3; y <= 3; ++y)
      for (int x = -3; x <= 3; ++x) {
        const double v = std::exp(-(x * x + y * y) / (2.0 * s2));
        k[static_cast<std::size_t>((y + 3) * 7 + (x + 3))] = v;
        sum += v;
      }
    for (double& v : k) v /= sum;
    return k;
  }();
  return w;
}

std::vector<double> filter_replicate7(const std::vector<double>& im, int H, int W) {
  const auto& win = mscn_window();
  std::vector<double> out(im.size());
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double acc = 0.0;
      for (int ky = -3; ky <= 3; ++ky) {
        const int iy = clamp_index(y + ky, H);
        for (int kx = -3; kx <= 3; ++kx) {
          const int ix = clamp_index(x + kx, W);
          acc += win[static_cast<std::size_t>((ky + 3) * 7 + (kx + 3))] *
                 im[static_cast<std::size_t>(iy) * W + ix];
        }
      }
      out[static_cast<std::size_t>(y) * W + x] = acc;
    }
  return out;
}

struct MscnResult {
  std::vector<double> mscn;
  std::vector<double> sigma;
};

MscnResult compute_mscn(const std::vector<double>& im, int H, int W) {
  MscnResult r;
  std::vector<double> mu = filter_replicate7(im, H, W);
  std::vector<double> sq(im.size());
  for (std::size_t i = 0; i < im.size(); ++i) sq[i] = im[i] * im[i];
  std::vector<double> musq = filter_replicate7(sq, H, W);
  r.sigma.resize(im.size());
  r.mscn.resize(im.size());
  for (std::size_t i = 0; i < im.size(); ++i) {
    r.sigma[i] = std::sqrt(std::abs(musq[i] - mu[i] * mu[i]));
    r.mscn[i] = (im[i] - mu[i]) / (r.sigma[i] + 1.0);
  }
  return r;
}

// r(gam) lookup for the AGGD shape estimate, gam in 0.2:0.001:10.
const std::vector<double>& aggd_r_table() {
  static const std::vector<double> table = [] {
    std::vector<double> t;
    t.reserve(9801);
    for (int i = 0; i <= 9800; ++i) {
      const double gam = 0.2 + 0.001 * i;
      const double num = std::tgamma(2.0 / gam);
      t.push_back(num * num / (std::tgamma(1.0 / gam) * std::tgamma(3.0 / gam)));
    }
    return t;
  }();
  return table;
}

struct AggdFit {
  double alpha = 0.2;
  double beta_l = 0.0;
  double beta_r = 0.0;
};

AggdFit aggd_fit(const std::vector<double>& v) {
  double negsq = 0.0, possq = 0.0, abssum = 0.0, sqsum = 0.0;
  long negcount = 0, poscount = 0;
  for (double x : v) {
    if (x < 0.0) {
      negsq += x * x;
      ++negcount;
    } else if (x > 0.0) {
      possq += x * x;
      ++poscount;
    }
    abssum += std::abs(x);
    sqsum += x * x;
  }
  const double n = static_cast<double>(v.size());
  const double left_std = std::sqrt(negcount > 0 ? negsq / negcount : 0.0);
  const double right_std = std::sqrt(poscount > 0 ? possq / poscount : 0.0);
  const double ls = std::max(left_std, 1e-10);
  const double rs = std::max(right_std, 1e-10);
  const double gammahat = ls / rs;
  const double rhat = (abssum / n) * (abssum / n) / std::max(sqsum / n, 1e-20);
  const double rhatnorm = rhat * (gammahat * gammahat * gammahat + 1.0) * (gammahat + 1.0) /
                          std::pow(gammahat * gammahat + 1.0, 2.0);

  const auto& table = aggd_r_table();
  std::size_t best = 0;
  double best_diff = std::abs(table[0] - rhatnorm);
  for (std::size_t i = 1; i < table.size(); ++i) {
    const double d = std::abs(table[i] - rhatnorm);
    if (d < best_diff) {
      best_diff = d;
      best = i;
    }
  }
  AggdFit fit;
  fit.alpha = 0.2 + 0.001 * static_cast<double>(best);
  const double ratio = std::sqrt(std::tgamma(1.0 / fit.alpha) / std::tgamma(3.0 / fit.alpha));
  fit.beta_l = ls * ratio;
  fit.beta_r = rs * ratio;
  return fit;
}

// 18 features of one MSCN block: AGGD of the coefficients themselves, then
// AGGD of the four orientation products (circular shifts within the block).
void block_features(const std::vector<double>& block, int bh, int bw, double* out) {
  AggdFit f0 = aggd_fit(block);
  out[0] = f0.alpha;
  out[1] = (f0.beta_l + f0.beta_r) / 2.0;
  static constexpr int kShifts[4][2] = {{0, 1}, {1, 0}, {1, 1}, {1, -1}};
  std::vector<double> prod(block.size());
  for (int s = 0; s < 4; ++s) {
    const int dy = kShifts[s][0], dx = kShifts[s][1];
    for (int y = 0; y < bh; ++y)
      for (int x = 0; x < bw; ++x) {
        const int sy = (y + dy + bh) % bh;
        const int sx = (x + dx + bw) % bw;
        prod[static_cast<std::size_t>(y) * bw + x] =
            block[static_cast<std::size_t>(y) * bw + x] *
            block[static_cast<std::size_t>(sy) * bw + sx];
      }
    AggdFit f = aggd_fit(prod);
    const double c = std::sqrt(std::tgamma(1.0 / f.alpha) / std::tgamma(3.0 / f.alpha));
    const double eta = (f.beta_r - f.beta_l) * (std::tgamma(2.0 / f.alpha) / std::tgamma(1.0 / f.alpha)) * c;
    out[2 + 4 * s + 0] = f.alpha;
    out[2 + 4 * s + 1] = eta;
    out[2 + 4 * s + 2] = f.beta_l;
    out[2 + 4 * s + 3] = f.beta_r;
  }
}

std::vector<double> downsample2_mean(const std::vector<double>& im, int H, int W) {
  std::vector<double> out(static_cast<std::size_t>(H / 2) * (W / 2));
  for (int y = 0; y < H / 2; ++y)
    for (int x = 0; x < W / 2; ++x) {
      const double* p = im.data() + static_cast<std::size_t>(2 * y) * W + 2 * x;
      out[static_cast<std::size_t>(y) * (W / 2) + x] = 0.25 * (p[0] + p[1] + p[W] + p[W + 1]);
    }
  return out;
}

struct MvG {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

MvG fit_mvg(const std::vector<std::array<double, 36>>& feats) {
  MvG m;
  const int n = static_cast<int>(feats.size());
  m.mean = Eigen::VectorXd::Zero(36);
  for (const auto& f : feats)
    for (int i = 0; i < 36; ++i) m.mean[i] += f[static_cast<std::size_t>(i)];
  m.mean /= static_cast<double>(n);
  m.cov = Eigen::MatrixXd::Zero(36, 36);
  for (const auto& f : feats) {
    Eigen::VectorXd d(36);
    for (int i = 0; i < 36; ++i) d[i] = f[static_cast<std::size_t>(i)] - m.mean[i];
    m.cov.noalias() += d * d.transpose();
  }
  m.cov /= std::max(1.0, static_cast<double>(n - 1));
  return m;
}

Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& a) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double tol = 36.0 * svd.singularValues().maxCoeff() * 2.220446049250313e-16;
  Eigen::VectorXd inv = svd.singularValues();
  for (int i = 0; i < inv.size(); ++i) inv[i] = inv[i] > tol ? 1.0 / inv[i] : 0.0;
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

std::string today_string() {
  const std::time_t now = std::time(nullptr);
  char buf[16];
  std::tm tmv{};
  gmtime_r(&now, &tmv);
  std::strftime(buf, sizeof buf, "%Y-%m-%d", &tmv);
  return buf;
}

}  // namespace

double entropy_bits(const Tensor& img) {
  int H = 0, W = 0;
  const std::vector<double> g = luma255(img, H, W);
  std::array<long, 256> hist{};
  for (double v : g) ++hist[static_cast<std::size_t>(v)];
  const double n = static_cast<double>(g.size());
  double bits = 0.0;
  for (long c : hist) {
    if (c == 0) continue;  // 0 * log 0 := 0
    const double p = static_cast<double>(c) / n;
    bits -= p * std::log2(p);
  }
  return bits;
}

void niqe_features(const Tensor& gray_img, int patch_size,
                   std::vector<std::array<double, 36>>& features, std::vector<double>& sharpness) {
  int H = 0, W = 0;
  std::vector<double> gray = luma255(gray_img, H, W);
  const int nby = H / patch_size, nbx = W / patch_size;
  if (nby < 1 || nbx < 1)
    throw ImageTooSmall("niqe needs at least " + std::to_string(patch_size) + "x" +
                        std::to_string(patch_size) + " pixels, got " + std::to_string(H) + "x" +
                        std::to_string(W));
  const int Ht = nby * patch_size, Wt = nbx * patch_size;
  // Trim to full patches.
  std::vector<double> im(static_cast<std::size_t>(Ht) * Wt);
  for (int y = 0; y < Ht; ++y)
    std::copy_n(gray.data() + static_cast<std::size_t>(y) * W, Wt,
                im.data() + static_cast<std::size_t>(y) * Wt);

  features.assign(static_cast<std::size_t>(nby) * nbx, {});
  sharpness.assign(static_cast<std::size_t>(nby) * nbx, 0.0);

  std::vector<double> scaled = im;
  int h = Ht, w = Wt;
  for (int scale = 0; scale < 2; ++scale) {
    if (scale == 1) {
      scaled = downsample2_mean(scaled, h, w);
      h /= 2;
      w /= 2;
    }
    const MscnResult ms = compute_mscn(scaled, h, w);
    const int bs = patch_size >> scale;
    std::vector<double> block(static_cast<std::size_t>(bs) * bs);
    for (int by = 0; by < nby; ++by)
      for (int bx = 0; bx < nbx; ++bx) {
        for (int y = 0; y < bs; ++y)
          std::copy_n(ms.mscn.data() + static_cast<std::size_t>(by * bs + y) * w + bx * bs, bs,
                      block.data() + static_cast<std::size_t>(y) * bs);
        block_features(block, bs, bs, features[static_cast<std::size_t>(by) * nbx + bx].data() +
                                          18 * scale);
        if (scale == 0) {
          double acc = 0.0;
          for (int y = 0; y < bs; ++y)
            for (int x = 0; x < bs; ++x)
              acc += ms.sigma[static_cast<std::size_t>(by * bs + y) * w + bx * bs + x];
          sharpness[static_cast<std::size_t>(by) * nbx + bx] = acc / (static_cast<double>(bs) * bs);
        }
      }
  }
}

void PristineModel::validate() const {
  if (mean.size() != 36 || covariance.rank() != 2 || covariance.dim(0) != 36 ||
      covariance.dim(1) != 36)
    throw ShapeError("pristine model must be 36-dim with a 36x36 covariance");
  Eigen::MatrixXd c(36, 36);
  for (int i = 0; i < 36; ++i)
    for (int j = 0; j < 36; ++j) c(i, j) = covariance[static_cast<std::size_t>(i) * 36 + j];
  if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-9)
    throw UmleError("pristine covariance is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-10)
    throw UmleError("pristine covariance has a negative eigenvalue");
}

PristineModel fit_pristine(const std::vector<Tensor>& images) {
  if (images.size() < 10) throw UmleError("fit_pristine requires at least 10 images");
  std::vector<std::array<double, 36>> selected;
  for (const Tensor& img : images) {
    std::vector<std::array<double, 36>> feats;
    std::vector<double> sharp;
    niqe_features(img, 96, feats, sharp);
    const double cutoff = 0.75 * *std::max_element(sharp.begin(), sharp.end());
    for (std::size_t i = 0; i < feats.size(); ++i)
      if (sharp[i] > cutoff) selected.push_back(feats[i]);
  }
  MvG m = fit_mvg(selected);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.cov, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < 1e-12) {
    std::cerr << "fit_pristine: degenerate covariance (" << selected.size()
              << " patches); regularizing with +1e-6 I\n";
    m.cov += 1e-6 * Eigen::MatrixXd::Identity(36, 36);
  }

  PristineModel model;
  model.mean = Tensor({36});
  model.covariance = Tensor({36, 36});
  for (int i = 0; i < 36; ++i) {
    model.mean[static_cast<std::size_t>(i)] = m.mean[i];
    for (int j = 0; j < 36; ++j)
      model.covariance[static_cast<std::size_t>(i) * 36 + j] = m.cov(i, j);
  }
  model.corpus_size = static_cast<long>(images.size());
  model.patch_size = 96;
  model.fit_date = today_string();
  model.validate();
  return model;
}

PristineModel fit_pristine(const DomainDataset& corpus) { return fit_pristine(corpus.images); }

double niqe(const Tensor& img, const PristineModel& model) {
  model.validate();
  std::vector<std::array<double, 36>> feats;
  std::vector<double> sharp;
  niqe_features(img, model.patch_size, feats, sharp);
  const MvG test = fit_mvg(feats);

  Eigen::VectorXd mu1(36);
  Eigen::MatrixXd c1(36, 36);
  for (int i = 0; i < 36; ++i) {
    mu1[i] = model.mean[static_cast<std::size_t>(i)];
    for (int j = 0; j < 36; ++j) c1(i, j) = model.covariance[static_cast<std::size_t>(i) * 36 + j];
  }
  const Eigen::MatrixXd pooled = (c1 + test.cov) / 2.0;
  const Eigen::VectorXd d = mu1 - test.mean;
  const double q = d.dot(pseudo_inverse(pooled) * d);
  return std::sqrt(std::max(0.0, q));
}

void PristineModel::save(const std::filesystem::path& path) const {
  NamedArrays box;
  box.arrays.emplace_back("mean", mean);
  box.arrays.emplace_back("cov", covariance);
  box.meta_int["corpus_size"] = corpus_size;
  box.meta_int["patch_size"] = patch_size;
  box.meta_str["fit_date"] = fit_date;
  box.meta_str["kind"] = "niqe-pristine";
  save_container(path, box);
}

PristineModel PristineModel::load(const std::filesystem::path& path) {
  NamedArrays box = load_container(path);
  const Tensor* mean = box.find("mean");
  const Tensor* cov = box.find("cov");
  if (!mean || !cov) throw CheckpointCorrupt("pristine model missing arrays: " + path.string());
  PristineModel m;
  m.mean = *mean;
  m.covariance = *cov;
  m.corpus_size = box.meta_int_or("corpus_size", 0);
  m.patch_size = static_cast<int>(box.meta_int_or("patch_size", 96));
  auto it = box.meta_str.find("fit_date");
  if (it != box.meta_str.end()) m.fit_date = it->second;
  m.validate();
  return m;
}

FpsReport measure_fps(const std::function<Tensor(const Tensor&)>& generate, int n_images,
                      int resolution, std::uint64_t seed) {
  if (n_images < 1) throw InvalidCount("measure_fps requires n_images >= 1");
  RngSequence rng(seed, RngStream::Bench);
  std::vector<Tensor> inputs;
  inputs.reserve(static_cast<std::size_t>(n_images));
  for (int i = 0; i < n_images; ++i) {
    Tensor t({1, 3, resolution, resolution});
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = rng.next_unit();
    inputs.push_back(std::move(t));
  }
  for (int i = 0; i < 5; ++i) (void)generate(inputs[static_cast<std::size_t>(i % n_images)]);

  std::array<double, 3> fps{};
  for (int rep = 0; rep < 3; ++rep) {
    const auto t0 = std::chrono::steady_clock::now();
    for (const Tensor& t : inputs) (void)generate(t);
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    fps[static_cast<std::size_t>(rep)] = static_cast<double>(n_images) / sec;
  }
  FpsReport r;
  r.n_images = n_images;
  r.resolution = resolution;
  r.fps_mean = (fps[0] + fps[1] + fps[2]) / 3.0;
  const double var = ((fps[0] - r.fps_mean) * (fps[0] - r.fps_mean) +
                      (fps[1] - r.fps_mean) * (fps[1] - r.fps_mean) +
                      (fps[2] - r.fps_mean) * (fps[2] - r.fps_mean)) /
                     3.0;
  r.fps_std = std::sqrt(var);
  r.cv = r.fps_mean > 0 ? r.fps_std / r.fps_mean : 0.0;
  return r;
}

}  // namespace umle
