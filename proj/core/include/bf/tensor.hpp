#pragma once

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace bf {

static_assert(std::endian::native == std::endian::little,
              "on-disk and wire formats are written with native little-endian stores");

// Element types. The numeric values double as wire protocol dtype codes.
enum class DType : std::uint8_t { F32 = 0x01, F64 = 0x02, I32 = 0x03, I64 = 0x04, U8 = 0x05 };

std::size_t dtype_size(DType dtype) noexcept;
std::string_view dtype_name(DType dtype) noexcept;
DType dtype_from_name(std::string_view name);
DType dtype_from_code(std::uint8_t code);
bool is_integer(DType dtype) noexcept;

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::F32; }
template <>
constexpr DType dtype_of<double>() { return DType::F64; }
template <>
constexpr DType dtype_of<std::int32_t>() { return DType::I32; }
template <>
constexpr DType dtype_of<std::int64_t>() { return DType::I64; }
template <>
constexpr DType dtype_of<std::uint8_t>() { return DType::U8; }

using Shape = std::vector<std::size_t>;

std::size_t shape_product(std::span<const std::size_t> shape) noexcept;
std::string shape_to_string(std::span<const std::size_t> shape);

/// Dense row-major tensor with a runtime element type.
///
/// This is the currency of the data pipeline: containers decode into it,
/// transformers map it, and the wire protocol ships its bytes verbatim.
/// Equality is bitwise over dtype, shape and payload.
class Tensor {
 public:
  Tensor() = default;
  Tensor(DType dtype, Shape shape);

  template <typename T>
  static Tensor from_values(Shape shape, const std::vector<T>& values);
  static Tensor from_bytes(DType dtype, Shape shape, std::span<const std::byte> bytes);

  DType dtype() const noexcept { return dtype_; }
  const Shape& shape() const noexcept { return shape_; }
  std::size_t ndim() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return shape_product(shape_); }
  std::size_t nbytes() const noexcept { return data_.size(); }
  // Bytes per index of the leading axis.
  std::size_t row_bytes() const noexcept;
  std::size_t rows() const noexcept { return shape_.empty() ? 0 : shape_[0]; }

  std::span<const std::byte> bytes() const noexcept { return data_; }
  std::span<std::byte> bytes() noexcept { return data_; }

  template <typename T>
  std::span<T> values();
  template <typename T>
  std::span<const T> values() const;

  double get_as_double(std::size_t flat_index) const;
  void set_from_double(std::size_t flat_index, double value);

  // Rows [begin, end) of the leading axis.
  Tensor slice_rows(std::size_t begin, std::size_t end) const;
  // Row `index` with the leading axis removed.
  Tensor row(std::size_t index) const;
  Tensor cast(DType dtype) const;
  Tensor reshaped(Shape shape) const;

  // Stacks equally shaped tensors along a new leading axis.
  static Tensor stack(std::span<const Tensor> parts);
  // Concatenates along the existing leading axis.
  static Tensor concat(std::span<const Tensor> parts);

  nlohmann::json to_json() const;
  static Tensor from_json(const nlohmann::json& j);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  void check_dtype_(DType requested) const;

  DType dtype_ = DType::F64;
  Shape shape_{0};
  std::vector<std::byte> data_;
};

// A batch whose rows have different shapes (e.g. variable-length sequences).
struct TensorList {
  DType dtype = DType::F64;
  std::vector<Tensor> items;

  friend bool operator==(const TensorList&, const TensorList&) = default;
};

using Field = std::variant<Tensor, TensorList>;

/// One element of a data stream: named sources in a fixed order.
class Item {
 public:
  using Entry = std::pair<std::string, Field>;

  bool contains(std::string_view name) const noexcept;
  const Field& at(std::string_view name) const;
  Field& at(std::string_view name);
  // Throws ContractError if the source holds a TensorList.
  const Tensor& tensor(std::string_view name) const;

  // Replaces an existing source in place or appends a new one.
  void set(std::string name, Field value);
  void erase(std::string_view name);

  std::vector<std::string> names() const;
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }
  auto begin() noexcept { return entries_.begin(); }
  auto end() noexcept { return entries_.end(); }

  friend bool operator==(const Item&, const Item&) = default;

 private:
  std::vector<Entry> entries_;
};

// ---- template definitions ----

namespace detail {
[[noreturn]] void throw_value_count(std::size_t expected, std::size_t got);
}  // namespace detail

template <typename T>
Tensor Tensor::from_values(Shape shape, const std::vector<T>& values) {
  Tensor t(dtype_of<T>(), std::move(shape));
  if (values.size() != t.size()) detail::throw_value_count(t.size(), values.size());
  std::copy(values.begin(), values.end(), t.values<T>().begin());
  return t;
}

template <typename T>
std::span<T> Tensor::values() {
  check_dtype_(dtype_of<T>());
  return {reinterpret_cast<T*>(data_.data()), data_.size() / sizeof(T)};
}

template <typename T>
std::span<const T> Tensor::values() const {
  check_dtype_(dtype_of<T>());
  return {reinterpret_cast<const T*>(data_.data()), data_.size() / sizeof(T)};
}

}  // namespace bf
