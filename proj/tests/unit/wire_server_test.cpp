#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "bf/error.hpp"
#include "bf/pipeline.hpp"
#include "bf/server.hpp"
#include "bf/wire.hpp"
#include "fixtures.hpp"

namespace {

namespace w = bf::wire;
using bf::Tensor;

std::vector<std::byte> bytes(std::initializer_list<int> v) {
  std::vector<std::byte> out;
  for (int b : v) out.push_back(static_cast<std::byte>(b));
  return out;
}

bf::Item one_source_item() {
  bf::Item item;
  item.set("x", Tensor::from_values<double>({1}, {1.0}));
  return item;
}

// Hand-assembled from the documented frame layout.
const std::vector<std::byte> kItemFrame = bytes({0x12, 0x00, 0x00, 0x00, 0x01,  // length 18, ITEM
                                                  0x01, 0x01, 'x', 0x02, 0x01,   // 1 source "x" f64 ndim 1
                                                  0x01, 0x00, 0x00, 0x00,        // dim 1
                                                  0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0xf0, 0x3f});

TEST(Wire, GoldenItemFrame) {
  EXPECT_EQ(w::encode_item(one_source_item()), kItemFrame);
  const auto f = w::decode_frame(kItemFrame);
  EXPECT_EQ(f.type, w::FrameType::Item);
  EXPECT_EQ(f.item, one_source_item());
}

TEST(Wire, GoldenSignalFrames) {
  EXPECT_EQ(w::encode_signal(w::FrameType::EpochEnd), bytes({0x01, 0, 0, 0, 0x02}));
  EXPECT_EQ(w::encode_signal(w::FrameType::Close), bytes({0x01, 0, 0, 0, 0x03}));
  EXPECT_EQ(w::encode_signal(w::FrameType::Next), bytes({0x01, 0, 0, 0, 0x10}));
  EXPECT_EQ(w::encode_signal(w::FrameType::Stop), bytes({0x01, 0, 0, 0, 0x11}));
  EXPECT_EQ(w::decode_frame(bytes({0x01, 0, 0, 0, 0x02})).type, w::FrameType::EpochEnd);
}

TEST(Wire, GoldenHandshake) {
  EXPECT_EQ(w::encode_handshake(), bytes({'B', 'F', 'S', 'R', 'V', '0', '0', '1', 0x01, 0x00}));
  EXPECT_NO_THROW(w::check_handshake(w::encode_handshake()));
  EXPECT_THROW(w::check_handshake(bytes({'B', 'F', 'S', 'R', 'V', '0', '0', '1', 0x02, 0x00})), bf::FormatError);
}

TEST(Wire, MalformedFramesAreRejected) {
  auto truncated = kItemFrame;
  truncated.pop_back();
  EXPECT_THROW(w::decode_frame(truncated), bf::FormatError);
  EXPECT_FALSE(w::try_decode_frame(truncated).has_value());
  auto trailing = kItemFrame;
  trailing.push_back(std::byte{0});
  EXPECT_THROW(w::decode_frame(trailing), bf::FormatError);
  EXPECT_THROW(w::decode_frame(bytes({0x01, 0, 0, 0, 0x7e})), bf::FormatError);
  auto bad_dtype = kItemFrame;
  bad_dtype[8] = std::byte{0x09};
  EXPECT_THROW(w::decode_frame(bad_dtype), bf::FormatError);
}

TEST(Wire, RoundTripsEveryDtypeAndZeroRows) {
  bf::Item item;
  item.set("a", Tensor::from_values<float>({2}, {1.5f, -2}));
  item.set("b", Tensor::from_values<std::int32_t>({1, 2}, {3, 4}));
  item.set("c", Tensor::from_values<std::int64_t>({1}, {-9}));
  item.set("d", Tensor::from_values<std::uint8_t>({3}, {1, 2, 3}));
  item.set("e", Tensor(bf::DType::F64, {0, 5}));
  const auto encoded = w::encode_item(item);
  EXPECT_EQ(w::decode_frame(encoded).item, item);
  auto buffer = encoded;
  buffer.insert(buffer.end(), kItemFrame.begin(), kItemFrame.end());
  const auto first = w::try_decode_frame(buffer);
  ASSERT_TRUE(first.has_value());
  EXPECT_EQ(first->second, encoded.size());
}

TEST(Server, ClientStreamMatchesLocalExecution) {
  bf::testing::TempDir dir;
  const auto path = bf::testing::make_builtin_container(dir.path(), "synth-blobs");
  const nlohmann::json spec = {{"container", path.string()}, {"split", "train"}, {"max_epochs", 2},
                               {"scheme", {{"kind", "shuffled"}, {"batch_size", 16}, {"seed", 5}}},
                               {"transformers", nlohmann::json::array()}};
  auto local = bf::build_pipeline(spec);
  const auto expected = bf::testing::pull_all(*local);
  auto server = bf::server::spawn(spec);
  bf::server::ClientStream client("127.0.0.1", server.port());
  EXPECT_EQ(bf::testing::pull_all(client), expected);
  client.stop();
  EXPECT_EQ(server.wait(), 0);
}

TEST(Server, StopEndsTheSessionEarly) {
  bf::testing::TempDir dir;
  const auto path = bf::testing::make_builtin_container(dir.path(), "synth-blobs");
  const nlohmann::json spec = {{"container", path.string()}, {"split", "train"}, {"max_epochs", 0},
                               {"scheme", {{"kind", "sequential"}, {"batch_size", 4}}},
                               {"transformers", nlohmann::json::array()}};
  auto server = bf::server::spawn(spec);
  {
    bf::server::ClientStream client("127.0.0.1", server.port());
    EXPECT_TRUE(client.next().is_item());
    EXPECT_THROW(client.save_state(), bf::ContractError);
    client.stop();
  }
  EXPECT_EQ(server.wait(), 0);
}

TEST(Server, BadPipelineIsReportedAsClose) {
  const nlohmann::json spec = {{"container", "/nonexistent.bfdc"}, {"split", "train"},
                               {"scheme", {{"kind", "sequential"}, {"batch_size", 4}}}};
  auto server = bf::server::spawn(spec);
  bf::server::ClientStream client("127.0.0.1", server.port());
  EXPECT_EQ(client.next().kind, bf::EventKind::Exhausted);
  server.wait();
}

TEST(Server, PortInUseSurfacesInTheCaller) {
  bf::server::Listener taken(0);
  EXPECT_THROW(bf::server::Listener(taken.port()), bf::IoError);
}

}  // namespace
