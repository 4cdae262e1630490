#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "bf/tensor.hpp"

namespace bf {

/// Dense row-major f64 array used by the computational graph and the
/// optimizer. Shapes are concrete here; the graph's symbolic batch axis is
/// resolved when values are bound.
class Array {
 public:
  Array() = default;  // scalar 0
  explicit Array(Shape shape, double fill = 0.0);
  Array(Shape shape, std::vector<double> values);

  static Array scalar(double v) { return Array(Shape{}, std::vector<double>{v}); }
  static Array from_tensor(const Tensor& t);
  Tensor to_tensor() const;

  const Shape& shape() const noexcept { return shape_; }
  std::size_t ndim() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double item() const;  // value of a one-element array

  // Whole-array L2 norm.
  double norm() const noexcept;

  // Value equality (NaN != NaN, -0 == 0).
  friend bool operator==(const Array&, const Array&) = default;

 private:
  Shape shape_;
  std::vector<double> data_ = std::vector<double>(1, 0.0);
};

// Bit-for-bit equality of shape and every element.
bool bitwise_equal(const Array& a, const Array& b) noexcept;

}  // namespace bf
