#include "bf/wire.hpp"

#include <cstring>
#include <limits>
#include <string>

#include "bf/error.hpp"

namespace bf::wire {
namespace {

void put_u32(std::vector<std::byte>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFFU));
}

std::uint32_t get_u32(std::span<const std::byte> b) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{std::to_integer<std::uint8_t>(b[i])} << (8 * i);
  return v;
}

bool is_known_type(std::uint8_t t) {
  return t == 0x01 || t == 0x02 || t == 0x03 || t == 0x10 || t == 0x11;
}

class Reader {
 public:
  explicit Reader(std::span<const std::byte> data) : data_(data) {}

  std::span<const std::byte> take(std::size_t n) {
    if (n > data_.size() - pos_) throw FormatError("truncated ITEM frame");
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8() { return std::to_integer<std::uint8_t>(take(1)[0]); }
  std::uint32_t u32() { return get_u32(take(4)); }
  bool done() const noexcept { return pos_ == data_.size(); }

 private:
  std::span<const std::byte> data_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::byte> encode_frame(const Frame& frame) {
  if (!is_known_type(static_cast<std::uint8_t>(frame.type))) {
    throw ContractError("wire: unknown frame type");
  }
  std::vector<std::byte> out(4);
  out.push_back(static_cast<std::byte>(frame.type));
  if (frame.type == FrameType::Item) {
    if (frame.item.size() > 255) throw ContractError("wire: more than 255 sources in one item");
    out.push_back(static_cast<std::byte>(frame.item.size()));
    for (const auto& [name, field] : frame.item) {
      const auto* t = std::get_if<Tensor>(&field);
      if (t == nullptr) {
        throw ContractError("wire: source '" + name + "' is a ragged batch; pad it before serving");
      }
      if (name.size() > 255) throw ContractError("wire: source name longer than 255 bytes");
      if (t->ndim() > 255) throw ContractError("wire: more than 255 dimensions");
      out.push_back(static_cast<std::byte>(name.size()));
      for (char c : name) out.push_back(static_cast<std::byte>(c));
      out.push_back(static_cast<std::byte>(t->dtype()));
      out.push_back(static_cast<std::byte>(t->ndim()));
      for (std::size_t d : t->shape()) {
        if (d > std::numeric_limits<std::uint32_t>::max()) {
          throw ContractError("wire: dimension " + std::to_string(d) + " does not fit in u32");
        }
        put_u32(out, static_cast<std::uint32_t>(d));
      }
      const auto bytes = t->bytes();
      out.insert(out.end(), bytes.begin(), bytes.end());
    }
  } else if (!frame.item.empty()) {
    throw ContractError("wire: only ITEM frames carry a payload");
  }
  const std::size_t length = out.size() - 4;
  if (length > std::numeric_limits<std::uint32_t>::max()) throw ContractError("wire: frame exceeds 4 GiB");
  for (int i = 0; i < 4; ++i) out[i] = static_cast<std::byte>((length >> (8 * i)) & 0xFFU);
  return out;
}

Frame decode_body(std::span<const std::byte> body) {
  if (body.empty()) throw FormatError("wire: empty frame");
  const auto type = std::to_integer<std::uint8_t>(body[0]);
  if (!is_known_type(type)) throw FormatError("wire: unknown frame type " + std::to_string(type));
  Frame frame{static_cast<FrameType>(type), {}};
  if (frame.type != FrameType::Item) {
    if (body.size() != 1) throw FormatError("wire: signal frame with a payload");
    return frame;
  }
  Reader r(body.subspan(1));
  const std::uint8_t count = r.u8();
  for (std::uint8_t s = 0; s < count; ++s) {
    const std::uint8_t name_len = r.u8();
    const auto name_bytes = r.take(name_len);
    std::string name(reinterpret_cast<const char*>(name_bytes.data()), name_len);
    const DType dtype = dtype_from_code(r.u8());
    const std::uint8_t ndim = r.u8();
    Shape shape(ndim);
    for (auto& d : shape) d = r.u32();
    const std::size_t nbytes = shape_product(shape) * dtype_size(dtype);
    frame.item.set(std::move(name), Tensor::from_bytes(dtype, std::move(shape), r.take(nbytes)));
  }
  if (!r.done()) throw FormatError("wire: trailing bytes in ITEM frame");
  return frame;
}

std::optional<std::pair<Frame, std::size_t>> try_decode_frame(std::span<const std::byte> buffer) {
  if (buffer.size() < 4) return std::nullopt;
  const std::uint32_t length = get_u32(buffer);
  if (buffer.size() - 4 < length) return std::nullopt;
  return std::make_pair(decode_body(buffer.subspan(4, length)), std::size_t{4} + length);
}

Frame decode_frame(std::span<const std::byte> bytes) {
  if (bytes.size() < 4) throw FormatError("wire: truncated length prefix");
  const std::uint32_t length = get_u32(bytes);
  if (bytes.size() - 4 < length) throw FormatError("wire: truncated frame");
  if (bytes.size() - 4 > length) throw FormatError("wire: trailing bytes after frame");
  return decode_body(bytes.subspan(4));
}

std::vector<std::byte> encode_handshake() {
  std::vector<std::byte> out;
  for (std::size_t i = 0; i < 8; ++i) out.push_back(static_cast<std::byte>(kHandshakeMagic[i]));
  out.push_back(static_cast<std::byte>(kProtocolVersion & 0xFFU));
  out.push_back(static_cast<std::byte>(kProtocolVersion >> 8));
  return out;
}

void check_handshake(std::span<const std::byte> bytes) {
  if (bytes.size() != kHandshakeSize || std::memcmp(bytes.data(), kHandshakeMagic, 8) != 0) {
    throw FormatError("handshake: server magic mismatch");
  }
  const auto version = static_cast<std::uint16_t>(std::to_integer<std::uint8_t>(bytes[8]) |
                                                  (std::to_integer<std::uint8_t>(bytes[9]) << 8));
  if (version != kProtocolVersion) {
    throw FormatError("handshake: unsupported protocol version " + std::to_string(version));
  }
}

}  // namespace bf::wire
