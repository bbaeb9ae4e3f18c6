#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

namespace umle {

// Dense double tensor, rank 1..4, logical layout (N, C, H, W) for rank 4.
// Storage is shared on copy (shallow); use clone() for a deep copy. Shared
// storage is load-bearing: the encoder parameters referenced by a generator
// and by a discriminator are the same buffers.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, double fill);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor full(std::vector<int> shape, double v) { return Tensor(std::move(shape), v); }
  static Tensor scalar(double v) { return Tensor({1}, v); }

  bool defined() const { return static_cast<bool>(data_); }
  int rank() const { return static_cast<int>(shape_.size()); }
  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::size_t size() const { return size_; }

  double* data() { return data_->data(); }
  const double* data() const { return data_->data(); }

  double& operator[](std::size_t i) { return (*data_)[i]; }
  double operator[](std::size_t i) const { return (*data_)[i]; }

  // Rank-4 accessor.
  double& at(int n, int c, int h, int w) {
    return (*data_)[idx(n, c, h, w)];
  }
  double at(int n, int c, int h, int w) const {
    return (*data_)[idx(n, c, h, w)];
  }

  Tensor clone() const;
  void fill(double v);
  void zero() { fill(0.0); }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool shares_storage(const Tensor& other) const { return data_ == other.data_; }

  double min() const;
  double max() const;
  double sum() const;
  bool all_finite() const;
  bool bitwise_equal(const Tensor& other) const;

  std::string shape_str() const;

  // Convenience dims for the (N, C, H, W) convention; missing trailing dims
  // read as 1 (a (C) bias behaves as (C,1,1,1) where convenient).
  int n() const { return rank() > 0 ? shape_[0] : 1; }
  int c() const { return rank() > 1 ? shape_[1] : 1; }
  int h() const { return rank() > 2 ? shape_[2] : 1; }
  int w() const { return rank() > 3 ? shape_[3] : 1; }

 private:
  std::size_t idx(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
  }

  std::vector<int> shape_;
  std::size_t size_ = 0;
  std::shared_ptr<std::vector<double>> data_;
};

// Images moving between modules: data plus its declared value range.
enum class ValueRange { Unit, Symmetric };  // [0,1] or [-1,1]

struct ImageBatch {
  Tensor data;  // (N, C, H, W)
  ValueRange range = ValueRange::Unit;

  // Throws ShapeError if entries are non-finite, outside the declared range,
  // or (when require_rgb) C != 3.
  void validate(bool require_rgb = true) const;
};

}  // namespace umle
