#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace rp2 {

using Shape = std::vector<int>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major float32 array. Images are stored HWC, batches NHWC.
class Tensor {
 public:
  Tensor() : shape_{0} {}
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> values);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const;
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  float* data() { return values_.data(); }
  const float* data() const { return values_.data(); }
  std::span<float> values() { return values_; }
  std::span<const float> values() const { return values_; }

  float& operator[](std::size_t i) { return values_[i]; }
  float operator[](std::size_t i) const { return values_[i]; }

  float& at(std::initializer_list<int> index);
  float at(std::initializer_list<int> index) const;

  /// Same data, new shape with identical element count.
  Tensor reshaped(Shape shape) const;
  bool all_finite() const;
  void fill(float value);

  bool operator==(const Tensor& other) const = default;

 private:
  std::size_t offset(std::initializer_list<int> index) const;

  Shape shape_;
  std::vector<float> values_;
};

/// Throws NumericError naming `what` if any element is NaN or infinite.
void require_finite(const Tensor& t, const std::string& what);

/// Throws ShapeError unless `t` has exactly `expected` shape.
void require_shape(const Tensor& t, const Shape& expected, const std::string& what);

}  // namespace rp2
