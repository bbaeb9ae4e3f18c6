#include "umle/data.hpp"

#include <algorithm>
#include <cmath>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "umle/errors.hpp"

namespace umle {

namespace fs = std::filesystem;

namespace {

bool has_image_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

Tensor mat_to_tensor(const cv::Mat& bgr) {
  Tensor t({1, 3, bgr.rows, bgr.cols});
  constexpr double kInv = 1.0 / 255.0;
  for (int y = 0; y < bgr.rows; ++y) {
    const cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      t.at(0, 0, y, x) = row[x][2] * kInv;  // R
      t.at(0, 1, y, x) = row[x][1] * kInv;  // G
      t.at(0, 2, y, x) = row[x][0] * kInv;  // B
    }
  }
  return t;
}

}  // namespace

Tensor load_image_rgb01(const fs::path& file, std::pair<int, int> target_size) {
  cv::Mat img = cv::imread(file.string(), cv::IMREAD_COLOR);
  if (img.empty()) return Tensor();
  const auto [th, tw] = target_size;
  if (th > 0 && tw > 0 && (img.rows != th || img.cols != tw)) {
    cv::Mat resized;
    cv::resize(img, resized, cv::Size(tw, th), 0, 0, cv::INTER_LINEAR);
    img = resized;
  }
  return mat_to_tensor(img);
}

void save_image_png(const Tensor& img, const fs::path& file) {
  if (img.rank() != 4 || img.dim(0) != 1 || img.dim(1) != 3)
    throw ShapeError("save_image_png expects a (1,3,H,W) tensor");
  const int H = img.dim(2), W = img.dim(3);
  cv::Mat out(H, W, CV_8UC3);
  for (int y = 0; y < H; ++y) {
    cv::Vec3b* row = out.ptr<cv::Vec3b>(y);
    for (int x = 0; x < W; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(img.at(0, c, y, x), 0.0, 1.0);
        row[x][2 - c] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
  }
  if (!cv::imwrite(file.string(), out)) throw UmleError("failed to write " + file.string());
}

DomainDataset load_dataset(const fs::path& root, DomainTag tag, std::pair<int, int> target_size) {
  DomainDataset ds;
  ds.root = root;
  ds.tag = tag;
  ds.target_size = target_size;

  if (!fs::is_directory(root)) throw DatasetEmpty("dataset root is not a directory: " + root.string());

  std::vector<fs::path> candidates;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_regular_file() && has_image_extension(entry.path()))
      candidates.push_back(entry.path());
  std::sort(candidates.begin(), candidates.end(),
            [](const fs::path& a, const fs::path& b) { return a.generic_string() < b.generic_string(); });

  for (const fs::path& p : candidates) {
    Tensor img = load_image_rgb01(p, target_size);
    if (!img.defined()) {
      ds.warnings.push_back("undecodable image skipped: " + p.string());
      continue;
    }
    ds.image_paths.push_back(p);
    ds.images.push_back(std::move(img));
  }
  if (ds.images.empty()) throw DatasetEmpty("no decodable images in " + root.string());
  return ds;
}

std::pair<ImageBatch, ImageBatch> sample_unpaired(const DomainDataset& low,
                                                  const DomainDataset& normal, std::uint64_t seed,
                                                  std::uint64_t iteration) {
  if (low.images.empty() || normal.images.empty())
    throw DatasetEmpty("sample_unpaired requires non-empty datasets");
  const std::size_t il = rng_u64(seed, RngStream::SampleLow, iteration) % low.images.size();
  const std::size_t in = rng_u64(seed, RngStream::SampleNormal, iteration) % normal.images.size();
  return {ImageBatch{low.images[il], ValueRange::Unit},
          ImageBatch{normal.images[in], ValueRange::Unit}};
}

std::pair<int, int> patch_offsets(int H, int W, int patch, std::uint64_t seed, RngStream stream,
                                  std::uint64_t iteration) {
  if (H < patch || W < patch)
    throw PatchTooLarge("image " + std::to_string(H) + "x" + std::to_string(W) +
                        " smaller than patch " + std::to_string(patch));
  const int oy = static_cast<int>(rng_u64(seed, stream, 2 * iteration) %
                                  static_cast<std::uint64_t>(H - patch + 1));
  const int ox = static_cast<int>(rng_u64(seed, stream, 2 * iteration + 1) %
                                  static_cast<std::uint64_t>(W - patch + 1));
  return {oy, ox};
}

ImageBatch extract_local_patch(const ImageBatch& x, std::uint64_t seed, std::uint64_t iteration,
                               RngStream stream) {
  constexpr int kPatch = 10;
  const Tensor& v = x.data;
  if (v.rank() != 4) throw ShapeError("extract_local_patch expects (N,C,H,W)");
  const auto [oy, ox] = patch_offsets(v.dim(2), v.dim(3), kPatch, seed, stream, iteration);
  Tensor out({v.dim(0), v.dim(1), kPatch, kPatch});
  for (int n = 0; n < v.dim(0); ++n)
    for (int c = 0; c < v.dim(1); ++c)
      for (int y = 0; y < kPatch; ++y)
        for (int xx = 0; xx < kPatch; ++xx) out.at(n, c, y, xx) = v.at(n, c, oy + y, ox + xx);
  return ImageBatch{std::move(out), x.range};
}

}  // namespace umle
