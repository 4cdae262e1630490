#include "bf/sha256.hpp"

#include <array>
#include <fstream>
#include <memory>

#include <openssl/evp.h>

#include "bf/error.hpp"

namespace bf {
namespace {

struct MdCtxDeleter {
  void operator()(EVP_MD_CTX* ctx) const noexcept { EVP_MD_CTX_free(ctx); }
};
using MdCtx = std::unique_ptr<EVP_MD_CTX, MdCtxDeleter>;

class Hasher {
 public:
  Hasher() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
      throw Error("sha256: failed to initialise digest context");
    }
  }
  void update(const void* data, std::size_t n) {
    if (n != 0 && EVP_DigestUpdate(ctx_.get(), data, n) != 1) throw Error("sha256: update failed");
  }
  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_.get(), md.data(), &len) != 1) throw Error("sha256: final failed");
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
      out.push_back(kDigits[md[i] >> 4]);
      out.push_back(kDigits[md[i] & 0xF]);
    }
    return out;
  }

 private:
  MdCtx ctx_;
};

}  // namespace

std::string sha256_hex(std::span<const std::byte> data) {
  Hasher h;
  h.update(data.data(), data.size());
  return h.hex();
}

std::string sha256_hex(std::string_view data) {
  Hasher h;
  h.update(data.data(), data.size());
  return h.hex();
}

std::string sha256_file_range(const std::filesystem::path& path, std::uint64_t offset,
                              std::uint64_t length) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  in.seekg(static_cast<std::streamoff>(offset));
  Hasher h;
  std::array<char, 1 << 16> buf{};
  std::uint64_t remaining = length;
  while (remaining > 0) {
    const auto chunk = static_cast<std::streamsize>(std::min<std::uint64_t>(remaining, buf.size()));
    in.read(buf.data(), chunk);
    if (in.gcount() != chunk) throw IoError("unexpected end of file in " + path.string());
    h.update(buf.data(), static_cast<std::size_t>(chunk));
    remaining -= static_cast<std::uint64_t>(chunk);
  }
  return h.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec) throw IoError("cannot stat " + path.string() + ": " + ec.message());
  return sha256_file_range(path, 0, size);
}

}  // namespace bf
