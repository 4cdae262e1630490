#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "bf/error.hpp"
#include "bf/tensor.hpp"

namespace {

using bf::DType;
using bf::Tensor;

TEST(Tensor, DtypeTablesAgree) {
  for (DType d : {DType::F32, DType::F64, DType::I32, DType::I64, DType::U8}) {
    EXPECT_EQ(bf::dtype_from_name(bf::dtype_name(d)), d);
    EXPECT_EQ(bf::dtype_from_code(static_cast<std::uint8_t>(d)), d);
  }
  EXPECT_EQ(bf::dtype_size(DType::F32), 4u);
  EXPECT_EQ(bf::dtype_size(DType::U8), 1u);
  EXPECT_THROW(bf::dtype_from_name("f16"), bf::Error);
  EXPECT_THROW(bf::dtype_from_code(0x7f), bf::Error);
}

TEST(Tensor, FromValuesChecksCount) {
  EXPECT_THROW(Tensor::from_values<double>({2, 2}, {1, 2, 3}), bf::ContractError);
  const auto t = Tensor::from_values<std::int32_t>({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(t.nbytes(), 16u);
  EXPECT_EQ(t.row_bytes(), 8u);
  EXPECT_THROW(t.values<double>(), bf::ContractError);
}

TEST(Tensor, SliceRowStackConcat) {
  const auto t = Tensor::from_values<double>({3, 2}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.slice_rows(1, 3), Tensor::from_values<double>({2, 2}, {3, 4, 5, 6}));
  EXPECT_EQ(t.row(2), Tensor::from_values<double>({2}, {5, 6}));
  const std::vector<Tensor> rows{t.row(0), t.row(1), t.row(2)};
  EXPECT_EQ(Tensor::stack(rows), t);
  const std::vector<Tensor> parts{t.slice_rows(0, 1), t.slice_rows(1, 3)};
  EXPECT_EQ(Tensor::concat(parts), t);
  EXPECT_THROW(t.slice_rows(2, 4), bf::ContractError);
}

TEST(Tensor, ZeroRowTensorsAreValid) {
  Tensor t(DType::I64, {0, 3});
  EXPECT_EQ(t.nbytes(), 0u);
  EXPECT_EQ(t.rows(), 0u);
  EXPECT_EQ(t.slice_rows(0, 0).shape(), (bf::Shape{0, 3}));
}

TEST(Tensor, CastAndJsonRoundTrip) {
  const auto t = Tensor::from_values<std::uint8_t>({3}, {0, 7, 255});
  const auto f = t.cast(DType::F64);
  EXPECT_EQ(f.get_as_double(2), 255.0);
  EXPECT_EQ(Tensor::from_json(t.to_json()), t);
  EXPECT_EQ(Tensor::from_json(f.to_json()), f);
}

TEST(Item, KeepsInsertionOrderAndReplacesInPlace) {
  bf::Item item;
  item.set("b", Tensor::from_values<double>({1}, {1}));
  item.set("a", Tensor::from_values<double>({1}, {2}));
  item.set("b", Tensor::from_values<double>({1}, {3}));
  EXPECT_EQ(item.names(), (std::vector<std::string>{"b", "a"}));
  EXPECT_EQ(item.tensor("b").values<double>()[0], 3.0);
  item.erase("b");
  EXPECT_FALSE(item.contains("b"));
  EXPECT_THROW(item.at("missing"), bf::LookupError);
  item.set("list", bf::TensorList{DType::F64, {}});
  EXPECT_THROW(item.tensor("list"), bf::ContractError);
}

}  // namespace
