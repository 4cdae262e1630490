#include "bf/tensor.hpp"

#include <cstring>
#include <sstream>

#include <nlohmann/json.hpp>

#include "bf/error.hpp"

namespace bf {

namespace detail {
void throw_value_count(std::size_t expected, std::size_t got) {
  throw ContractError("tensor: expected " + std::to_string(expected) + " values, got " +
                      std::to_string(got));
}
}  // namespace detail

std::size_t dtype_size(DType dtype) noexcept {
  switch (dtype) {
    case DType::F32: return 4;
    case DType::F64: return 8;
    case DType::I32: return 4;
    case DType::I64: return 8;
    case DType::U8: return 1;
  }
  return 0;
}

std::string_view dtype_name(DType dtype) noexcept {
  switch (dtype) {
    case DType::F32: return "f32";
    case DType::F64: return "f64";
    case DType::I32: return "i32";
    case DType::I64: return "i64";
    case DType::U8: return "u8";
  }
  return "?";
}

DType dtype_from_name(std::string_view name) {
  for (DType d : {DType::F32, DType::F64, DType::I32, DType::I64, DType::U8}) {
    if (dtype_name(d) == name) return d;
  }
  throw FormatError("unknown dtype '" + std::string(name) + "'");
}

DType dtype_from_code(std::uint8_t code) {
  if (code < 0x01 || code > 0x05) throw FormatError("unknown dtype code " + std::to_string(code));
  return static_cast<DType>(code);
}

bool is_integer(DType dtype) noexcept {
  return dtype == DType::I32 || dtype == DType::I64 || dtype == DType::U8;
}

std::size_t shape_product(std::span<const std::size_t> shape) noexcept {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(std::span<const std::size_t> shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? ", " : "") << shape[i];
  out << ']';
  return out.str();
}

Tensor::Tensor(DType dtype, Shape shape)
    : dtype_(dtype), shape_(std::move(shape)), data_(shape_product(shape_) * dtype_size(dtype)) {}

Tensor Tensor::from_bytes(DType dtype, Shape shape, std::span<const std::byte> bytes) {
  Tensor t(dtype, std::move(shape));
  if (bytes.size() != t.nbytes()) {
    throw ContractError("tensor: expected " + std::to_string(t.nbytes()) + " bytes, got " +
                        std::to_string(bytes.size()));
  }
  if (!bytes.empty()) std::memcpy(t.data_.data(), bytes.data(), bytes.size());
  return t;
}

void Tensor::check_dtype_(DType requested) const {
  if (requested != dtype_) {
    throw ContractError("tensor: requested " + std::string(dtype_name(requested)) +
                        " view of a " + std::string(dtype_name(dtype_)) + " tensor");
  }
}

std::size_t Tensor::row_bytes() const noexcept {
  if (shape_.empty()) return dtype_size(dtype_);
  return shape_product(std::span(shape_).subspan(1)) * dtype_size(dtype_);
}

namespace {

template <typename Fn>
decltype(auto) visit_dtype(DType dtype, Fn&& fn) {
  switch (dtype) {
    case DType::F32: return fn(float{});
    case DType::F64: return fn(double{});
    case DType::I32: return fn(std::int32_t{});
    case DType::I64: return fn(std::int64_t{});
    case DType::U8: return fn(std::uint8_t{});
  }
  throw FormatError("invalid dtype");
}

}  // namespace

double Tensor::get_as_double(std::size_t flat_index) const {
  return visit_dtype(dtype_, [&](auto tag) -> double {
    using T = decltype(tag);
    T v;
    std::memcpy(&v, data_.data() + flat_index * sizeof(T), sizeof(T));
    return static_cast<double>(v);
  });
}

void Tensor::set_from_double(std::size_t flat_index, double value) {
  visit_dtype(dtype_, [&](auto tag) {
    using T = decltype(tag);
    const T v = static_cast<T>(value);
    std::memcpy(data_.data() + flat_index * sizeof(T), &v, sizeof(T));
  });
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const {
  if (shape_.empty()) throw ContractError("tensor: cannot slice a scalar");
  if (begin > end || end > shape_[0]) {
    throw ContractError("tensor: row range [" + std::to_string(begin) + ", " +
                        std::to_string(end) + ") outside " + shape_to_string(shape_));
  }
  Shape s = shape_;
  s[0] = end - begin;
  const std::size_t rb = row_bytes();
  return from_bytes(dtype_, std::move(s), std::span(data_).subspan(begin * rb, (end - begin) * rb));
}

Tensor Tensor::row(std::size_t index) const {
  if (shape_.empty() || index >= shape_[0]) {
    throw ContractError("tensor: row " + std::to_string(index) + " outside " +
                        shape_to_string(shape_));
  }
  Shape s(shape_.begin() + 1, shape_.end());
  const std::size_t rb = row_bytes();
  return from_bytes(dtype_, std::move(s), std::span(data_).subspan(index * rb, rb));
}

Tensor Tensor::cast(DType dtype) const {
  if (dtype == dtype_) return *this;
  Tensor out(dtype, shape_);
  const std::size_t n = size();
  for (std::size_t i = 0; i < n; ++i) out.set_from_double(i, get_as_double(i));
  return out;
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_product(shape) != size()) {
    throw ContractError("tensor: cannot reshape " + shape_to_string(shape_) + " to " +
                        shape_to_string(shape));
  }
  Tensor t = *this;
  t.shape_ = std::move(shape);
  return t;
}

Tensor Tensor::stack(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("tensor: cannot stack an empty list");
  const Tensor& first = parts.front();
  Shape s;
  s.reserve(first.ndim() + 1);
  s.push_back(parts.size());
  s.insert(s.end(), first.shape_.begin(), first.shape_.end());
  Tensor out(first.dtype_, std::move(s));
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    if (p.dtype_ != first.dtype_ || p.shape_ != first.shape_) {
      throw ContractError("tensor: cannot stack " + shape_to_string(p.shape_) + " " +
                          std::string(dtype_name(p.dtype_)) + " with " +
                          shape_to_string(first.shape_) + " " +
                          std::string(dtype_name(first.dtype_)));
    }
    if (!p.data_.empty()) std::memcpy(out.data_.data() + offset, p.data_.data(), p.data_.size());
    offset += p.data_.size();
  }
  return out;
}

Tensor Tensor::concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("tensor: cannot concatenate an empty list");
  const Tensor& first = parts.front();
  if (first.ndim() == 0) throw ContractError("tensor: cannot concatenate scalars");
  Shape s = first.shape_;
  s[0] = 0;
  for (const Tensor& p : parts) {
    if (p.dtype_ != first.dtype_ || p.ndim() != first.ndim() ||
        !std::equal(p.shape_.begin() + 1, p.shape_.end(), first.shape_.begin() + 1)) {
      throw ContractError("tensor: incompatible parts for concatenation");
    }
    s[0] += p.shape_[0];
  }
  Tensor out(first.dtype_, std::move(s));
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    if (!p.data_.empty()) std::memcpy(out.data_.data() + offset, p.data_.data(), p.data_.size());
    offset += p.data_.size();
  }
  return out;
}

nlohmann::json Tensor::to_json() const {
  nlohmann::json values = nlohmann::json::array();
  visit_dtype(dtype_, [&](auto tag) {
    using T = decltype(tag);
    for (T v : this->values<T>()) values.push_back(v);
  });
  return {{"dtype", dtype_name(dtype_)}, {"shape", shape_}, {"values", std::move(values)}};
}

Tensor Tensor::from_json(const nlohmann::json& j) {
  try {
    Tensor t(dtype_from_name(j.at("dtype").get<std::string>()), j.at("shape").get<Shape>());
    const auto& values = j.at("values");
    if (!values.is_array() || values.size() != t.size()) {
      throw FormatError("tensor json: value count does not match shape");
    }
    visit_dtype(t.dtype_, [&](auto tag) {
      using T = decltype(tag);
      auto dst = t.values<T>();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = values[i].get<T>();
    });
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("tensor json: ") + e.what());
  }
}

// ---- Item ----

bool Item::contains(std::string_view name) const noexcept {
  for (const auto& [n, _] : entries_) {
    if (n == name) return true;
  }
  return false;
}

const Field& Item::at(std::string_view name) const {
  for (const auto& [n, f] : entries_) {
    if (n == name) return f;
  }
  throw LookupError("item has no source '" + std::string(name) + "'");
}

Field& Item::at(std::string_view name) {
  for (auto& [n, f] : entries_) {
    if (n == name) return f;
  }
  throw LookupError("item has no source '" + std::string(name) + "'");
}

const Tensor& Item::tensor(std::string_view name) const {
  const Field& f = at(name);
  if (const auto* t = std::get_if<Tensor>(&f)) return *t;
  throw ContractError("source '" + std::string(name) + "' holds a ragged batch, not a tensor");
}

void Item::set(std::string name, Field value) {
  for (auto& [n, f] : entries_) {
    if (n == name) {
      f = std::move(value);
      return;
    }
  }
  entries_.emplace_back(std::move(name), std::move(value));
}

void Item::erase(std::string_view name) {
  std::erase_if(entries_, [&](const Entry& e) { return e.first == name; });
}

std::vector<std::string> Item::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [n, _] : entries_) out.push_back(n);
  return out;
}

}  // namespace bf
