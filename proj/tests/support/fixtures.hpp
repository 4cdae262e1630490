#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "bf/registry.hpp"
#include "bf/stream.hpp"

namespace bf::testing {

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "bf-test-XXXXXX").string();
    if (!::mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Generates a built-in synthetic dataset and converts it into `dir/<name>.bfdc`.
inline std::filesystem::path make_builtin_container(const std::filesystem::path& dir,
                                                    const std::string& name) {
  const auto registry = datasets::Registry::builtin();
  const auto raw = dir / (name + "-raw");
  datasets::download(registry, name, raw);
  const auto out = dir / (name + ".bfdc");
  datasets::convert(registry, name, raw, out, "bf convert " + name);
  return out;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& p, const std::string& data) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f.write(data.data(), static_cast<std::streamsize>(data.size()));
}

// Every event up to exhaustion, capped at `limit` pulls.
inline std::vector<StreamEvent> pull_all(Stream& s, std::size_t limit = 100000) {
  std::vector<StreamEvent> out;
  for (std::size_t i = 0; i < limit; ++i) {
    out.push_back(s.next());
    if (out.back().kind == EventKind::Exhausted) break;
  }
  return out;
}

inline std::vector<StreamEvent> pull_n(Stream& s, std::size_t n) {
  std::vector<StreamEvent> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(s.next());
  return out;
}

}  // namespace bf::testing
