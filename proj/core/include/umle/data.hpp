#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "umle/rng.hpp"
#include "umle/tensor.hpp"

namespace umle {

enum class DomainTag { Low, Normal };

// An unpaired image corpus: every sample is decoded to 3 channels, resized to
// target_size and held in memory (desk-scale corpora are small). Paths are
// ordered lexicographically so the sample sequence is reproducible.
struct DomainDataset {
  std::filesystem::path root;
  DomainTag tag = DomainTag::Low;
  std::vector<std::filesystem::path> image_paths;
  std::pair<int, int> target_size{64, 64};  // (H, W)
  std::vector<Tensor> images;               // (1,3,H,W) in [0,1]
  std::vector<std::string> warnings;        // undecodable files, skipped

  std::size_t size() const { return images.size(); }
};

// Throws DatasetEmpty when the directory has no decodable image. Undecodable
// files are reported in `warnings` and skipped.
DomainDataset load_dataset(const std::filesystem::path& root, DomainTag tag,
                           std::pair<int, int> target_size);

// One image from each domain, drawn independently and uniformly by the
// counter-based RNG. Pure function of (seed, iteration, dataset order).
std::pair<ImageBatch, ImageBatch> sample_unpaired(const DomainDataset& low,
                                                  const DomainDataset& normal, std::uint64_t seed,
                                                  std::uint64_t iteration);

// Deterministic top-left corner for a square patch, uniform over valid
// positions. Two counter slots per iteration (y then x).
std::pair<int, int> patch_offsets(int H, int W, int patch, std::uint64_t seed, RngStream stream,
                                  std::uint64_t iteration);

// (N,C,10,10) crop at a deterministic pseudo-random offset. Throws
// PatchTooLarge when the image is smaller than the patch.
ImageBatch extract_local_patch(const ImageBatch& x, std::uint64_t seed, std::uint64_t iteration,
                               RngStream stream = RngStream::PatchDefault);

// ---- image file IO (PNG/JPEG in, PNG out) ----------------------------------
// Returns an undefined tensor when the file cannot be decoded. Pass target
// (H,W) of {0,0} to keep the source size.
Tensor load_image_rgb01(const std::filesystem::path& file, std::pair<int, int> target_size);
void save_image_png(const Tensor& img, const std::filesystem::path& file);

}  // namespace umle
