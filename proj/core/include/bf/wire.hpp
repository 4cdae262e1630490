#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "bf/tensor.hpp"

// Length-prefixed binary frames exchanged between the batch server and its
// client. Every frame is: u32 LE length (excluding itself) | u8 type | payload.
//
// ITEM payload: u8 source_count, then per source: u8 name_len, name bytes,
// u8 dtype code, u8 ndim, ndim x u32 LE dims, raw little-endian row-major data.
// EPOCH_END, CLOSE, NEXT and STOP carry no payload.
namespace bf::wire {

enum class FrameType : std::uint8_t {
  Item = 0x01,
  EpochEnd = 0x02,
  Close = 0x03,
  Next = 0x10,
  Stop = 0x11,
};

inline constexpr char kHandshakeMagic[] = "BFSRV001";
inline constexpr std::uint16_t kProtocolVersion = 1;
inline constexpr std::size_t kHandshakeSize = 10;

struct Frame {
  FrameType type = FrameType::Close;
  Item item;  // only meaningful for ITEM frames

  friend bool operator==(const Frame&, const Frame&) = default;
};

std::vector<std::byte> encode_frame(const Frame& frame);
inline std::vector<std::byte> encode_item(const Item& item) {
  return encode_frame({FrameType::Item, item});
}
inline std::vector<std::byte> encode_signal(FrameType type) { return encode_frame({type, {}}); }

// Decodes exactly one complete frame; trailing or missing bytes are errors.
Frame decode_frame(std::span<const std::byte> bytes);

// Decodes the frame at the front of `buffer` if it is complete. Returns the
// frame and the number of bytes it occupied, or nullopt when more bytes are
// needed.
std::optional<std::pair<Frame, std::size_t>> try_decode_frame(std::span<const std::byte> buffer);

// Decodes a frame body (type byte + payload) whose length prefix was
// already consumed.
Frame decode_body(std::span<const std::byte> body);

std::vector<std::byte> encode_handshake();
// Throws FormatError on a magic or version mismatch.
void check_handshake(std::span<const std::byte> bytes);

}  // namespace bf::wire
