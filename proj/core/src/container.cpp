#include "bf/container.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "bf/error.hpp"
#include "bf/sha256.hpp"

namespace bf::container {

using nlohmann::json;
using nlohmann::ordered_json;

std::uint64_t SourceDescriptor::expected_nbytes() const noexcept {
  return shape_product(shape) * dtype_size(dtype);
}

std::uint64_t SourceDescriptor::row_bytes() const noexcept {
  if (shape.empty()) return 0;
  return shape_product(std::span(shape).subspan(1)) * dtype_size(dtype);
}

const SourceDescriptor& ContainerHeader::source(std::string_view name) const {
  for (const auto& s : sources) {
    if (s.name == name) return s;
  }
  throw LookupError("container has no source '" + std::string(name) + "'");
}

const SplitDescriptor& ContainerHeader::split(std::string_view name) const {
  for (const auto& s : splits) {
    if (s.name == name) return s;
  }
  throw LookupError("container has no split '" + std::string(name) + "'");
}

std::optional<Interval> ContainerHeader::interval(const SplitDescriptor& split,
                                                  std::string_view source) const {
  auto it = split.per_source.find(std::string(source));
  if (it == split.per_source.end()) return std::nullopt;
  return it->second;
}

ordered_json ContainerHeader::to_json() const {
  ordered_json j;
  j["format_version"] = format_version;
  j["created_by"] = created_by;
  j["command_line"] = command_line;
  j["sources"] = ordered_json::array();
  for (const auto& s : sources) {
    ordered_json sj;
    sj["name"] = s.name;
    sj["dtype"] = dtype_name(s.dtype);
    sj["shape"] = s.shape;
    sj["axis_labels"] = s.axis_labels;
    sj["offset"] = s.offset;
    sj["nbytes"] = s.nbytes;
    sj["sha256"] = s.sha256;
    j["sources"].push_back(std::move(sj));
  }
  j["splits"] = ordered_json::array();
  for (const auto& sp : splits) {
    ordered_json per = ordered_json::object();
    for (const auto& [name, iv] : sp.per_source) {
      if (iv) {
        per[name] = {{"start", iv->start}, {"stop", iv->stop}};
      } else {
        per[name] = nullptr;
      }
    }
    ordered_json spj;
    spj["name"] = sp.name;
    spj["sources"] = std::move(per);
    j["splits"].push_back(std::move(spj));
  }
  return j;
}

ContainerHeader ContainerHeader::from_json(const json& j) {
  try {
    ContainerHeader h;
    h.format_version = j.at("format_version").get<int>();
    h.created_by = j.at("created_by").get<std::string>();
    h.command_line = j.at("command_line").get<std::string>();
    for (const auto& sj : j.at("sources")) {
      SourceDescriptor s;
      s.name = sj.at("name").get<std::string>();
      s.dtype = dtype_from_name(sj.at("dtype").get<std::string>());
      s.shape = sj.at("shape").get<Shape>();
      s.axis_labels = sj.at("axis_labels").get<std::vector<std::string>>();
      s.offset = sj.at("offset").get<std::uint64_t>();
      s.nbytes = sj.at("nbytes").get<std::uint64_t>();
      s.sha256 = sj.at("sha256").get<std::string>();
      h.sources.push_back(std::move(s));
    }
    for (const auto& spj : j.at("splits")) {
      SplitDescriptor sp;
      sp.name = spj.at("name").get<std::string>();
      for (const auto& [name, v] : spj.at("sources").items()) {
        if (v.is_null()) {
          sp.per_source[name] = std::nullopt;
        } else {
          sp.per_source[name] =
              Interval{v.at("start").get<std::uint64_t>(), v.at("stop").get<std::uint64_t>()};
        }
      }
      h.splits.push_back(std::move(sp));
    }
    return h;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed container header: ") + e.what());
  }
}

std::vector<std::string> check_header(const ContainerHeader& header, std::uint64_t blobs_start) {
  std::vector<std::string> problems;
  if (header.format_version != kFormatVersion) {
    problems.push_back("unsupported format_version " + std::to_string(header.format_version));
  }
  std::set<std::string> names;
  for (const auto& s : header.sources) {
    const std::string prefix = "source '" + s.name + "': ";
    if (s.name.empty()) problems.push_back("source with empty name");
    if (!names.insert(s.name).second) problems.push_back(prefix + "duplicate name");
    if (s.shape.empty()) problems.push_back(prefix + "shape must have a leading batch axis");
    if (s.axis_labels.size() != s.shape.size()) {
      problems.push_back(prefix + "has " + std::to_string(s.axis_labels.size()) +
                         " axis labels for " + std::to_string(s.shape.size()) + " dimensions");
    } else if (!s.axis_labels.empty() && s.axis_labels[0] != "batch") {
      problems.push_back(prefix + "first axis label must be 'batch', got '" + s.axis_labels[0] +
                         "'");
    }
    if (s.nbytes != s.expected_nbytes()) {
      problems.push_back(prefix + "nbytes " + std::to_string(s.nbytes) + " does not match shape " +
                         shape_to_string(s.shape) + " of " + std::string(dtype_name(s.dtype)) +
                         " (" + std::to_string(s.expected_nbytes()) + ")");
    }
    if (s.offset % kBlobAlignment != 0) {
      problems.push_back(prefix + "offset " + std::to_string(s.offset) + " is not 64-byte aligned");
    }
    if (s.offset < blobs_start) {
      problems.push_back(prefix + "offset " + std::to_string(s.offset) + " overlaps the header");
    }
    const bool hex = s.sha256.size() == 64 &&
                     std::all_of(s.sha256.begin(), s.sha256.end(), [](char c) {
                       return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
                     });
    if (!hex) problems.push_back(prefix + "sha256 is not a 64-digit lowercase hex string");
  }
  std::set<std::string> split_names;
  for (const auto& sp : header.splits) {
    if (!split_names.insert(sp.name).second) {
      problems.push_back("split '" + sp.name + "': duplicate name");
    }
    for (const auto& [name, iv] : sp.per_source) {
      const SourceDescriptor* src = nullptr;
      for (const auto& s : header.sources) {
        if (s.name == name) src = &s;
      }
      if (src == nullptr) {
        problems.push_back("split '" + sp.name + "': unknown source '" + name + "'");
        continue;
      }
      if (iv && (iv->start > iv->stop || iv->stop > src->num_examples())) {
        problems.push_back("split '" + sp.name + "': interval [" + std::to_string(iv->start) +
                           ", " + std::to_string(iv->stop) + ") of '" + name +
                           "' is outside [0, " + std::to_string(src->num_examples()) + "]");
      }
    }
  }
  return problems;
}

namespace {

std::uint64_t align_up(std::uint64_t v) {
  return (v + kBlobAlignment - 1) / kBlobAlignment * kBlobAlignment;
}

void put_u32_le(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b.data(), 4);
}

struct RawHeader {
  ContainerHeader header;
  std::uint64_t blobs_start = 0;
};

RawHeader parse_raw_header(std::istream& in, std::uint64_t file_size) {
  std::array<char, kMagicSize + 4> prefix{};
  in.read(prefix.data(), prefix.size());
  if (in.gcount() < static_cast<std::streamsize>(kMagicSize)) {
    throw FormatError("bad magic: file too short");
  }
  if (std::memcmp(prefix.data(), kMagic, 4) != 0) {
    throw FormatError("bad magic: not a BFDC container");
  }
  if (std::memcmp(prefix.data(), kMagic, kMagicSize) != 0) {
    throw FormatError("unsupported container version '" + std::string(prefix.data() + 4, 4) + "'");
  }
  if (in.gcount() != static_cast<std::streamsize>(prefix.size())) {
    throw FormatError("malformed container: truncated header length");
  }
  std::uint32_t length = 0;
  for (int i = 0; i < 4; ++i) {
    length |= std::uint32_t{static_cast<unsigned char>(prefix[kMagicSize + i])} << (8 * i);
  }
  if (kMagicSize + 4 + std::uint64_t{length} > file_size) {
    throw FormatError("malformed container: header length exceeds file size");
  }
  std::string text(length, '\0');
  in.read(text.data(), length);
  if (in.gcount() != static_cast<std::streamsize>(length)) {
    throw FormatError("malformed container: truncated header");
  }
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw FormatError("malformed container: header is not valid JSON");
  RawHeader raw{ContainerHeader::from_json(j), kMagicSize + 4 + std::uint64_t{length}};
  if (raw.header.format_version != kFormatVersion) {
    throw FormatError("unsupported container format_version " +
                      std::to_string(raw.header.format_version));
  }
  return raw;
}

std::uint64_t file_size_of(const std::filesystem::path& path) {
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec) throw IoError("cannot stat " + path.string() + ": " + ec.message());
  return size;
}

std::ifstream open_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

}  // namespace

ContainerHeader write_container(const std::filesystem::path& path,
                                std::span<const SourceData> sources,
                                std::span<const SplitDescriptor> splits,
                                const Provenance& provenance) {
  ContainerHeader h;
  h.created_by = provenance.created_by;
  h.command_line = provenance.command_line;
  for (const auto& sd : sources) {
    SourceDescriptor d = sd.descriptor;
    if (sd.payload.dtype() != d.dtype || sd.payload.shape() != d.shape) {
      throw ContractError("source '" + d.name + "': payload is " +
                          std::string(dtype_name(sd.payload.dtype())) + " " +
                          shape_to_string(sd.payload.shape()) + ", descriptor says " +
                          std::string(dtype_name(d.dtype)) + " " + shape_to_string(d.shape));
    }
    d.nbytes = sd.payload.nbytes();
    d.sha256 = sha256_hex(sd.payload.bytes());
    h.sources.push_back(std::move(d));
  }
  h.splits.assign(splits.begin(), splits.end());

  // Offsets depend on the header length, which depends on the offsets'
  // decimal widths; iterate to the fixed point.
  std::string text;
  for (int round = 0; round < 16; ++round) {
    text = h.to_json().dump();
    std::uint64_t cursor = kMagicSize + 4 + text.size();
    bool changed = false;
    for (auto& s : h.sources) {
      const std::uint64_t off = align_up(cursor);
      if (s.offset != off) changed = true;
      s.offset = off;
      cursor = off + s.nbytes;
    }
    if (!changed) break;
  }
  text = h.to_json().dump();

  auto problems = check_header(h, kMagicSize + 4 + text.size());
  if (!problems.empty()) throw ContractError("invalid container: " + problems.front());
  if (text.size() > UINT32_MAX) throw ContractError("container header exceeds 4 GiB");

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create " + tmp.string());
    out.write(kMagic, kMagicSize);
    put_u32_le(out, static_cast<std::uint32_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    std::uint64_t pos = kMagicSize + 4 + text.size();
    static const std::array<char, kBlobAlignment> zeros{};
    for (std::size_t i = 0; i < sources.size(); ++i) {
      const auto& d = h.sources[i];
      out.write(zeros.data(), static_cast<std::streamsize>(d.offset - pos));
      const auto bytes = sources[i].payload.bytes();
      out.write(reinterpret_cast<const char*>(bytes.data()),
                static_cast<std::streamsize>(bytes.size()));
      pos = d.offset + bytes.size();
    }
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string());
  return h;
}

ContainerHeader read_header(const std::filesystem::path& path) {
  const auto size = file_size_of(path);
  auto in = open_binary(path);
  RawHeader raw = parse_raw_header(in, size);
  auto problems = check_header(raw.header, raw.blobs_start);
  if (!problems.empty()) throw FormatError("container header invariant violated: " + problems[0]);
  return std::move(raw.header);
}

ContainerReader::ContainerReader(const std::filesystem::path& path)
    : path_(path), header_(read_header(path)), file_(open_binary(path)) {}

Tensor ContainerReader::read_rows(std::string_view source, std::uint64_t start,
                                  std::uint64_t stop) {
  const SourceDescriptor& d = header_.source(source);
  if (start > stop || stop > d.num_examples()) {
    throw ContractError("row range [" + std::to_string(start) + ", " + std::to_string(stop) +
                        ") outside source '" + d.name + "' with " +
                        std::to_string(d.num_examples()) + " examples");
  }
  Shape shape = d.shape;
  shape[0] = stop - start;
  Tensor t(d.dtype, std::move(shape));
  if (t.nbytes() == 0) return t;
  file_.clear();
  file_.seekg(static_cast<std::streamoff>(d.offset + start * d.row_bytes()));
  auto bytes = t.bytes();
  file_.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (file_.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw IoError("short read from " + path_.string());
  }
  ++read_calls_;
  bytes_read_ += bytes.size();
  return t;
}

Tensor read_slice(const std::filesystem::path& path, std::string_view source,
                  std::uint64_t start, std::uint64_t stop) {
  ContainerReader reader(path);
  return reader.read_rows(source, start, stop);
}

bool ValidationReport::passed() const noexcept {
  return header_ok && std::all_of(sources.begin(), sources.end(),
                                  [](const SourceCheck& s) { return s.passed(); });
}

std::string ValidationReport::to_text() const {
  std::ostringstream out;
  out << "header: " << (header_ok ? "ok" : "FAILED") << '\n';
  for (const auto& p : header_problems) out << "  " << p << '\n';
  for (const auto& s : sources) {
    out << "source " << s.name << ": " << (s.passed() ? "ok" : "FAILED") << '\n';
    for (const auto& p : s.problems) out << "  " << p << '\n';
  }
  out << (passed() ? "PASS" : "FAIL") << '\n';
  return out.str();
}

ValidationReport validate(const std::filesystem::path& path) {
  const auto size = file_size_of(path);
  auto in = open_binary(path);
  ValidationReport report;
  RawHeader raw;
  try {
    raw = parse_raw_header(in, size);
  } catch (const FormatError& e) {
    report.header_ok = false;
    report.header_problems.emplace_back(e.what());
    return report;
  }
  for (const auto& s : raw.header.sources) report.sources.push_back(SourceCheck{s.name});
  for (const auto& p : check_header(raw.header, raw.blobs_start)) {
    bool attached = false;
    for (auto& sc : report.sources) {
      const std::string prefix = "source '" + sc.name + "': ";
      if (p.rfind(prefix, 0) == 0) {
        sc.invariants_ok = false;
        sc.problems.push_back(p.substr(prefix.size()));
        attached = true;
        break;
      }
    }
    if (!attached) {
      report.header_ok = false;
      report.header_problems.push_back(p);
    }
  }
  for (std::size_t i = 0; i < raw.header.sources.size(); ++i) {
    const auto& d = raw.header.sources[i];
    auto& sc = report.sources[i];
    if (d.offset + d.nbytes > size) {
      sc.digest_ok = false;
      sc.problems.push_back("blob extends past end of file");
      continue;
    }
    if (sha256_file_range(path, d.offset, d.nbytes) != d.sha256) {
      sc.digest_ok = false;
      sc.problems.push_back("sha256 mismatch");
    }
  }
  return report;
}

std::string format_info(const ContainerHeader& header) {
  std::ostringstream out;
  out << "format_version: " << header.format_version << '\n';
  out << "created_by: " << (header.created_by.empty() ? "(unknown)" : header.created_by) << '\n';
  out << "command_line: " << (header.command_line.empty() ? "(unknown)" : header.command_line)
      << '\n';
  out << "sources:\n";
  if (header.sources.empty()) out << "  no sources\n";
  for (const auto& s : header.sources) {
    out << "  " << s.name << ": " << dtype_name(s.dtype) << ' ' << shape_to_string(s.shape)
        << " axes=(";
    for (std::size_t i = 0; i < s.axis_labels.size(); ++i) {
      out << (i ? ", " : "") << s.axis_labels[i];
    }
    out << ")\n";
  }
  out << "splits:\n";
  if (header.splits.empty()) out << "  no splits\n";
  for (const auto& sp : header.splits) {
    out << "  " << sp.name << ':';
    for (const auto& s : header.sources) {
      out << ' ' << s.name << '=';
      if (auto iv = header.interval(sp, s.name)) {
        out << '[' << iv->start << ", " << iv->stop << ')';
      } else {
        out << "UNAVAILABLE";
      }
    }
    out << '\n';
  }
  return out.str();
}

std::string info(const std::filesystem::path& path) { return format_info(read_header(path)); }

}  // namespace bf::container
