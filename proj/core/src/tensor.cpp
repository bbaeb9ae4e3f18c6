#include "umle/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "umle/errors.hpp"

namespace umle {

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  if (shape_.empty() || shape_.size() > 4) throw ShapeError("tensor rank must be 1..4");
  size_ = 1;
  for (int d : shape_) {
    if (d <= 0) throw ShapeError("tensor dims must be positive, got " + shape_str());
    size_ *= static_cast<std::size_t>(d);
  }
  data_ = std::make_shared<std::vector<double>>(size_, 0.0);
}

Tensor::Tensor(std::vector<int> shape, double fill) : Tensor(std::move(shape)) {
  this->fill(fill);
}

Tensor Tensor::clone() const {
  Tensor out;
  out.shape_ = shape_;
  out.size_ = size_;
  out.data_ = data_ ? std::make_shared<std::vector<double>>(*data_) : nullptr;
  return out;
}

void Tensor::fill(double v) { std::fill(data_->begin(), data_->end(), v); }

double Tensor::min() const { return *std::min_element(data_->begin(), data_->end()); }
double Tensor::max() const { return *std::max_element(data_->begin(), data_->end()); }

double Tensor::sum() const {
  double s = 0.0;
  for (double v : *data_) s += v;
  return s;
}

bool Tensor::all_finite() const {
  for (double v : *data_)
    if (!std::isfinite(v)) return false;
  return true;
}

bool Tensor::bitwise_equal(const Tensor& other) const {
  if (shape_ != other.shape_) return false;
  return std::memcmp(data(), other.data(), size_ * sizeof(double)) == 0;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
  os << ')';
  return os.str();
}

void ImageBatch::validate(bool require_rgb) const {
  if (!data.defined() || data.rank() != 4)
    throw ShapeError("ImageBatch must hold a rank-4 tensor");
  if (require_rgb && data.dim(1) != 3)
    throw ShapeError("ImageBatch expects 3 channels, got " + data.shape_str());
  const double lo = range == ValueRange::Unit ? 0.0 : -1.0;
  const double hi = 1.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double v = data[i];
    if (!std::isfinite(v)) throw ShapeError("ImageBatch contains non-finite values");
    if (v < lo || v > hi) throw ShapeError("ImageBatch value outside declared range");
  }
}

}  // namespace umle
