#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "umle/data.hpp"
#include "umle/tensor.hpp"

namespace umle {

// Shannon entropy in bits of the 256-bin histogram of the rounded 8-bit luma
// channel (0.299 R + 0.587 G + 0.114 B). Always in [0, 8].
double entropy_bits(const Tensor& img);

// Multivariate Gaussian fit of natural-scene-statistics features from a
// pristine corpus. 36 features per 96x96 patch (18 per scale, 2 scales).
struct PristineModel {
  Tensor mean;        // (36)
  Tensor covariance;  // (36,36), symmetric PSD up to -1e-10
  long corpus_size = 0;
  int patch_size = 96;
  std::string fit_date;

  void validate() const;
  void save(const std::filesystem::path& path) const;
  static PristineModel load(const std::filesystem::path& path);
};

// Lower is better. Throws ImageTooSmall when the luma plane is smaller than
// one 96x96 patch. Deterministic; uses a pseudo-inverse when the pooled
// covariance is singular.
double niqe(const Tensor& img, const PristineModel& model);

// Fits the pristine model on >= 10 images. Patch selection keeps patches
// whose local-contrast mean exceeds 0.75 of the sharpest patch. A degenerate
// covariance is regularized with +1e-6 I (warning on stderr).
PristineModel fit_pristine(const std::vector<Tensor>& images);
PristineModel fit_pristine(const DomainDataset& corpus);

// 36-dim feature vector per patch plus per-patch sharpness (scale 1).
void niqe_features(const Tensor& gray255, int patch_size,
                   std::vector<std::array<double, 36>>& features, std::vector<double>& sharpness);

struct FpsReport {
  double fps_mean = 0;
  double fps_std = 0;
  double cv = 0;  // coefficient of variation across repeats
  int n_images = 0;
  int resolution = 0;
};

// Wall-clock throughput of `generate` over n_images random inputs after 5
// warmup frames; mean and standard deviation over 3 repeats. Throws
// InvalidCount for n_images < 1.
FpsReport measure_fps(const std::function<Tensor(const Tensor&)>& generate, int n_images,
                      int resolution, std::uint64_t seed = 0);

}  // namespace umle
