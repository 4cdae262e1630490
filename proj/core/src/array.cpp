#include "bf/array.hpp"

#include <cmath>
#include <cstring>

#include "bf/error.hpp"

namespace bf {

Array::Array(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_product(shape_), fill) {}

Array::Array(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != shape_product(shape_)) {
    throw ContractError("array: " + std::to_string(data_.size()) + " values for shape " +
                        shape_to_string(shape_));
  }
}

Array Array::from_tensor(const Tensor& t) {
  std::vector<double> v(t.size());
  if (t.dtype() == DType::F64) {
    auto src = t.values<double>();
    std::copy(src.begin(), src.end(), v.begin());
  } else {
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = t.get_as_double(i);
  }
  return Array(t.shape(), std::move(v));
}

Tensor Array::to_tensor() const {
  Tensor t(DType::F64, shape_);
  std::copy(data_.begin(), data_.end(), t.values<double>().begin());
  return t;
}

double Array::item() const {
  if (data_.size() != 1) throw ContractError("array: item() on " + shape_to_string(shape_));
  return data_[0];
}

double Array::norm() const noexcept {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return std::sqrt(s);
}

bool bitwise_equal(const Array& a, const Array& b) noexcept {
  return a.shape() == b.shape() &&
         (a.size() == 0 ||
          std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(double)) == 0);
}

}  // namespace bf
