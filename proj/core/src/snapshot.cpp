#include "bf/snapshot.hpp"

#include <cstring>
#include <fstream>

#include "bf/error.hpp"
#include "bf/sha256.hpp"

namespace bf::mainloop {

namespace {

constexpr std::size_t kAlign = 64;
constexpr std::size_t kPreamble = 12;

std::size_t align_up(std::size_t n) { return (n + kAlign - 1) / kAlign * kAlign; }

class BlobWriter {
 public:
  nlohmann::json add(const Array& a) {
    nlohmann::json entry = {{"blob_index", blobs_.size()}, {"dtype", "f64"}, {"shape", a.shape()}};
    blobs_.push_back(&a);
    return entry;
  }
  std::string payload() const {
    std::string out;
    for (const Array* a : blobs_) {
      const std::size_t n = a->size() * sizeof(double);
      out.append(reinterpret_cast<const char*>(a->values().data()), n);
      out.append(align_up(n) - n, '\0');
    }
    return out;
  }

 private:
  std::vector<const Array*> blobs_;
};

class BlobReader {
 public:
  explicit BlobReader(std::string_view payload) : payload_(payload) {}

  void index(const nlohmann::json& header_blobs) {
    std::size_t offset = 0;
    for (const auto& n : header_blobs) {
      const auto bytes = n.get<std::size_t>();
      offsets_.push_back({offset, bytes});
      offset += align_up(bytes);
    }
    if (offset != payload_.size()) {
      throw FormatError("snapshot: blob area is " + std::to_string(payload_.size()) +
                        " bytes, expected " + std::to_string(offset));
    }
  }

  Array get(const nlohmann::json& entry) const {
    if (entry.at("dtype").get<std::string>() != "f64") throw FormatError("snapshot: tensors must be f64");
    const auto idx = entry.at("blob_index").get<std::size_t>();
    const auto shape = entry.at("shape").get<Shape>();
    if (idx >= offsets_.size()) throw FormatError("snapshot: blob index out of range");
    const auto [off, bytes] = offsets_[idx];
    if (bytes != shape_product(shape) * sizeof(double)) {
      throw FormatError("snapshot: blob " + std::to_string(idx) + " does not match its shape");
    }
    std::vector<double> values(shape_product(shape));
    if (bytes) std::memcpy(values.data(), payload_.data() + off, bytes);
    return Array(shape, std::move(values));
  }

 private:
  std::string_view payload_;
  std::vector<std::pair<std::size_t, std::size_t>> offsets_;
};

}  // namespace

bool operator==(const Snapshot& a, const Snapshot& b) {
  if (a.parameters.size() != b.parameters.size()) return false;
  for (auto ia = a.parameters.begin(), ib = b.parameters.begin(); ia != a.parameters.end(); ++ia, ++ib) {
    if (ia->first != ib->first || !bitwise_equal(ia->second, ib->second)) return false;
  }
  return a.format_version == b.format_version && a.status == b.status && a.log == b.log &&
         a.rule_state == b.rule_state && a.stream_state == b.stream_state &&
         a.extensions == b.extensions && a.rule_chain == b.rule_chain &&
         a.initial_rule_chain == b.initial_rule_chain && a.pipeline_spec == b.pipeline_spec;
}

void write_snapshot(const std::filesystem::path& path, const Snapshot& s) {
  BlobWriter blobs;
  nlohmann::json h;
  h["format_version"] = s.format_version;
  h["status"] = s.status.to_json();
  h["log"] = s.log.to_json();

  nlohmann::json params = nlohmann::json::object();
  for (const auto& [path_key, a] : s.parameters) params[path_key] = blobs.add(a);
  h["parameters"] = std::move(params);

  nlohmann::json rules;
  rules["t"] = s.rule_state.t;
  nlohmann::json shapes = nlohmann::json::object();
  for (const auto& [p, shape] : s.rule_state.shapes) shapes[p] = shape;
  rules["shapes"] = std::move(shapes);
  nlohmann::json buffers = nlohmann::json::array();
  for (const auto& per_rule : s.rule_state.buffers) {
    nlohmann::json r = nlohmann::json::object();
    for (const auto& [p, named] : per_rule) {
      for (const auto& [name, a] : named) r[p][name] = blobs.add(a);
    }
    buffers.push_back(std::move(r));
  }
  rules["buffers"] = std::move(buffers);
  h["step_rule_state"] = std::move(rules);

  h["stream_state"] = s.stream_state;
  nlohmann::json exts = nlohmann::json::array();
  for (const auto& [kind, state] : s.extensions) exts.push_back({{"kind", kind}, {"state", state}});
  h["extensions"] = std::move(exts);
  h["rule_chain"] = s.rule_chain;
  h["initial_rule_chain"] = s.initial_rule_chain;
  h["pipeline_spec"] = s.pipeline_spec;

  const std::string payload = blobs.payload();
  // Sizes let the reader locate blobs; the digest detects corruption.
  nlohmann::json sizes = nlohmann::json::array();
  {
    auto add_sizes = [&](const Array& a) { sizes.push_back(a.size() * sizeof(double)); };
    for (const auto& [k, a] : s.parameters) add_sizes(a);
    for (const auto& per_rule : s.rule_state.buffers) {
      for (const auto& [p, named] : per_rule) {
        for (const auto& [name, a] : named) add_sizes(a);
      }
    }
  }
  h["blob_sizes"] = std::move(sizes);
  h["blobs_sha256"] = sha256_hex(std::string_view(payload));

  const std::string header = h.dump();
  std::string out(kSnapshotMagic, sizeof(kSnapshotMagic));
  const auto len = static_cast<std::uint32_t>(header.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((len >> (8 * i)) & 0xff));
  out += header;
  out.append(align_up(out.size()) - out.size(), '\0');
  out += payload;

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + tmp.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    f.flush();
    if (!f) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

Snapshot read_snapshot(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (data.size() < kPreamble || std::memcmp(data.data(), kSnapshotMagic, 4) != 0) {
    throw FormatError(path.string() + ": not a snapshot file");
  }
  if (std::memcmp(data.data(), kSnapshotMagic, sizeof(kSnapshotMagic)) != 0) {
    throw FormatError(path.string() + ": unsupported snapshot version '" + data.substr(4, 4) + "'");
  }
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[8 + i])) << (8 * i);
  if (kPreamble + len > data.size()) throw FormatError(path.string() + ": truncated header");
  const std::size_t blobs_start = align_up(kPreamble + len);
  if (blobs_start > data.size()) throw FormatError(path.string() + ": truncated");

  Snapshot s;
  try {
    const auto h = nlohmann::json::parse(data.substr(kPreamble, len));
    const std::string_view payload(data.data() + blobs_start, data.size() - blobs_start);
    if (h.at("blobs_sha256").get<std::string>() != sha256_hex(payload)) {
      throw FormatError(path.string() + ": blob checksum mismatch");
    }
    BlobReader blobs(payload);
    blobs.index(h.at("blob_sizes"));

    s.format_version = h.at("format_version").get<int>();
    if (s.format_version != kSnapshotVersion) {
      throw FormatError(path.string() + ": snapshot version " + std::to_string(s.format_version) +
                        " is not supported");
    }
    s.status = TrainingStatus::from_json(h.at("status"));
    s.log = TrainingLog::from_json(h.at("log"));
    for (const auto& [k, e] : h.at("parameters").items()) s.parameters.emplace(k, blobs.get(e));
    const auto& rules = h.at("step_rule_state");
    s.rule_state.t = rules.at("t").get<std::int64_t>();
    for (const auto& [k, shape] : rules.at("shapes").items()) s.rule_state.shapes[k] = shape.get<Shape>();
    for (const auto& per_rule : rules.at("buffers")) {
      auto& slot = s.rule_state.buffers.emplace_back();
      for (const auto& [p, named] : per_rule.items()) {
        for (const auto& [name, e] : named.items()) slot[p].emplace(name, blobs.get(e));
      }
    }
    s.stream_state = h.at("stream_state");
    for (const auto& e : h.at("extensions")) {
      s.extensions.emplace_back(e.at("kind").get<std::string>(), e.at("state"));
    }
    s.rule_chain = h.at("rule_chain");
    s.initial_rule_chain = h.at("initial_rule_chain");
    s.pipeline_spec = h.at("pipeline_spec");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": malformed snapshot header: " + e.what());
  }
  return s;
}

}  // namespace bf::mainloop
