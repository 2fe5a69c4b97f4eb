#ifndef RSNET_TENSOR_HPP_
#define RSNET_TENSOR_HPP_

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace rsnet {

/// Thrown when tensor shapes are inconsistent; the message names the
/// offending axis.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

/// Rank-4 array of 32-bit floats, row-major in (N, C, H, W) order.
class Tensor {
 public:
  Tensor() : shape_{0, 0, 0, 0} {}
  Tensor(int n, int c, int h, int w) : shape_{n, c, h, w} {
    if (n < 0 || c < 0 || h < 0 || w < 0)
      throw ShapeError("Tensor: negative dimension");
    data_.assign(static_cast<std::size_t>(n) * c * h * w, 0.0f);
  }

  int n() const { return shape_[0]; }
  int c() const { return shape_[1]; }
  int h() const { return shape_[2]; }
  int w() const { return shape_[3]; }
  const std::array<int, 4>& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  float& at(int n, int c, int h, int w) {
    return data_[index(n, c, h, w)];
  }
  float at(int n, int c, int h, int w) const {
    return data_[index(n, c, h, w)];
  }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::vector<float>& raw() { return data_; }
  const std::vector<float>& raw() const { return data_; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  /// True when every element is finite.
  bool all_finite() const;

  void fill(float v) { data_.assign(data_.size(), v); }

 private:
  std::size_t index(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) *
               shape_[3] +
           w;
  }

  std::array<int, 4> shape_;
  std::vector<float> data_;
};

}  // namespace rsnet

#endif  // RSNET_TENSOR_HPP_
