#include "bf/registry.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <curl/curl.h>

#include "bf/error.hpp"
#include "bf/rng.hpp"
#include "bf/sha256.hpp"
#include "bf/version.hpp"

namespace bf::datasets {
namespace {

namespace fs = std::filesystem;
using container::Interval;
using container::SourceData;
using container::SourceDescriptor;
using container::SplitDescriptor;

constexpr char kBlobsFile[] = "synth_blobs.csv";
constexpr char kSequencesFile[] = "synth_seq.txt";

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

std::size_t curl_sink(char* data, std::size_t size, std::size_t count, void* user) {
  static_cast<std::ofstream*>(user)->write(data, static_cast<std::streamsize>(size * count));
  return size * count;
}

void fetch_url(const std::string& url, const fs::path& dest) {
  std::ofstream out(dest, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + dest.string());
  CURL* curl = curl_easy_init();
  if (curl == nullptr) throw IoError("curl initialisation failed");
  curl_easy_setopt(curl, CURLOPT_URL, url.c_str());
  curl_easy_setopt(curl, CURLOPT_FOLLOWLOCATION, 1L);
  curl_easy_setopt(curl, CURLOPT_FAILONERROR, 1L);
  curl_easy_setopt(curl, CURLOPT_WRITEFUNCTION, curl_sink);
  curl_easy_setopt(curl, CURLOPT_WRITEDATA, &out);
  const CURLcode rc = curl_easy_perform(curl);
  curl_easy_cleanup(curl);
  out.close();
  if (rc != CURLE_OK) {
    throw IoError("download of " + url + " failed: " + curl_easy_strerror(rc));
  }
}

std::vector<std::string> split_fields(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, sep)) {
    if (!field.empty()) out.push_back(field);
  }
  return out;
}

double parse_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw FormatError("bad number '" + s + "' in raw file");
  return v;
}

long parse_int(const std::string& s) {
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0') throw FormatError("bad integer '" + s + "' in raw file");
  return v;
}

std::vector<SplitDescriptor> train_test_splits(std::size_t n, const std::vector<std::string>& srcs) {
  const std::size_t cut = n * 4 / 5;
  SplitDescriptor train{"train", {}};
  SplitDescriptor test{"test", {}};
  for (const auto& s : srcs) {
    train.per_source[s] = Interval{0, cut};
    test.per_source[s] = Interval{cut, n};
  }
  return {train, test};
}

auto convert_blobs(const fs::path& raw_dir) {
  std::istringstream in(read_text(raw_dir / kBlobsFile));
  std::string line;
  if (!std::getline(in, line) || line != "x0,x1,label") {
    throw FormatError("synth-blobs: missing CSV header");
  }
  std::vector<double> features;
  std::vector<std::uint8_t> targets;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_fields(line, ',');
    if (f.size() != 3) throw FormatError("synth-blobs: expected 3 fields, got '" + line + "'");
    features.push_back(parse_double(f[0]));
    features.push_back(parse_double(f[1]));
    targets.push_back(static_cast<std::uint8_t>(parse_int(f[2])));
  }
  const std::size_t n = targets.size();
  std::vector<SourceData> sources;
  sources.push_back({SourceDescriptor{"features", DType::F64, {n, 2}, {"batch", "feature"}},
                     Tensor::from_values<double>({n, 2}, features)});
  sources.push_back({SourceDescriptor{"targets", DType::U8, {n, 1}, {"batch", "class"}},
                     Tensor::from_values<std::uint8_t>({n, 1}, targets)});
  return std::make_pair(std::move(sources), train_test_splits(n, {"features", "targets"}));
}

auto convert_sequences(const fs::path& raw_dir) {
  std::istringstream in(read_text(raw_dir / kSequencesFile));
  std::string line;
  std::vector<std::vector<std::int32_t>> seqs;
  std::size_t max_len = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::int32_t> seq;
    for (const auto& tok : split_fields(line, ' ')) {
      seq.push_back(static_cast<std::int32_t>(parse_int(tok)));
    }
    max_len = std::max(max_len, seq.size());
    seqs.push_back(std::move(seq));
  }
  const std::size_t n = seqs.size();
  Tensor tokens(DType::I32, {n, max_len});
  Tensor lengths(DType::I32, {n});
  auto tv = tokens.values<std::int32_t>();
  auto lv = lengths.values<std::int32_t>();
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(seqs[i].begin(), seqs[i].end(), tv.begin() + static_cast<std::ptrdiff_t>(i * max_len));
    lv[i] = static_cast<std::int32_t>(seqs[i].size());
  }
  std::vector<SourceData> sources;
  sources.push_back({SourceDescriptor{"tokens", DType::I32, {n, max_len}, {"batch", "time"}},
                     std::move(tokens)});
  sources.push_back({SourceDescriptor{"lengths", DType::I32, {n}, {"batch"}}, std::move(lengths)});
  return std::make_pair(std::move(sources), train_test_splits(n, {"tokens", "lengths"}));
}

}  // namespace

std::string generate_blobs_csv(const BlobsConfig& config) {
  Rng rng(config.seed);
  std::string out = "x0,x1,label\n";
  char buf[96];
  for (std::size_t i = 0; i < config.num_examples; ++i) {
    const std::uint32_t label = rng.bounded(2);
    const double c = label == 0 ? -config.center : config.center;
    const double x0 = c + config.stddev * rng.normal();
    const double x1 = c + config.stddev * rng.normal();
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%u\n", x0, x1, label);
    out += buf;
  }
  return out;
}

std::string generate_sequences_text(const SequencesConfig& config) {
  Rng rng(config.seed);
  std::string out;
  const auto span = static_cast<std::uint32_t>(config.max_length - config.min_length + 1);
  const auto vocab = static_cast<std::uint32_t>(config.vocabulary);
  for (std::size_t i = 0; i < config.num_sequences; ++i) {
    const std::size_t len = config.min_length + rng.bounded(span);
    std::uint32_t tok = rng.bounded(vocab);
    for (std::size_t t = 0; t < len; ++t) {
      if (t) out += ' ';
      out += std::to_string(tok);
      // Mostly +1 steps, occasionally +2, so the next token is predictable
      // from the context.
      tok = (tok + 1 + (rng.bounded(4) == 0 ? 1 : 0)) % vocab;
    }
    out += '\n';
  }
  return out;
}

Registry Registry::builtin() {
  Registry r;
  r.add({"synth-blobs",
         {{kBlobsFile, "", ""}},
         [] { return std::map<std::string, std::string>{{kBlobsFile, generate_blobs_csv({})}}; },
         convert_blobs});
  r.add({"synth-seq",
         {{kSequencesFile, "", ""}},
         [] {
           return std::map<std::string, std::string>{
               {kSequencesFile, generate_sequences_text({})}};
         },
         convert_sequences});
  return r;
}

void Registry::add(DatasetEntry entry) {
  std::erase_if(entries_, [&](const DatasetEntry& e) { return e.name == entry.name; });
  entries_.push_back(std::move(entry));
}

const DatasetEntry& Registry::find(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e;
  }
  throw LookupError("unknown dataset '" + std::string(name) + "'");
}

std::vector<std::string> Registry::names() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) out.push_back(e.name);
  std::sort(out.begin(), out.end());
  return out;
}

std::map<std::string, std::string> Registry::expected_digests(std::string_view name) const {
  const DatasetEntry& e = find(name);
  std::map<std::string, std::string> out;
  std::map<std::string, std::string> generated;
  if (e.generator) generated = e.generator();
  for (const auto& f : e.files) {
    if (!f.sha256.empty()) {
      out[f.filename] = f.sha256;
    } else if (auto it = generated.find(f.filename); it != generated.end()) {
      out[f.filename] = sha256_hex(it->second);
    } else {
      throw Error("dataset '" + e.name + "': no digest for " + f.filename);
    }
  }
  return out;
}

DownloadResult download(const Registry& registry, std::string_view name,
                        const fs::path& dest_dir) {
  const DatasetEntry& e = registry.find(name);
  std::error_code ec;
  fs::create_directories(dest_dir, ec);
  if (ec) throw IoError("cannot create " + dest_dir.string() + ": " + ec.message());

  std::map<std::string, std::string> generated;
  DownloadResult result;
  for (const auto& f : e.files) {
    const fs::path target = dest_dir / f.filename;
    std::string expected = f.sha256;
    if (expected.empty()) {
      if (!e.generator) throw Error("dataset '" + e.name + "': " + f.filename + " has no source");
      if (generated.empty()) generated = e.generator();
      expected = sha256_hex(generated.at(f.filename));
    }
    result.files.push_back(target);
    if (fs::exists(target) && sha256_file(target) == expected) {
      result.skipped.push_back(f.filename);
      continue;
    }
    const fs::path part = target.string() + ".part";
    if (!f.url.empty()) {
      fetch_url(f.url, part);
    } else {
      write_text(part, generated.at(f.filename));
    }
    const std::string got = sha256_file(part);
    if (got != expected) {
      fs::remove(part, ec);
      throw FormatError("digest mismatch for " + f.filename + ": expected " + expected + ", got " +
                        got);
    }
    fs::rename(part, target, ec);
    if (ec) throw IoError("cannot move " + part.string() + " into place: " + ec.message());
    result.fetched.push_back(f.filename);
  }
  return result;
}

container::ContainerHeader convert(const Registry& registry, std::string_view name,
                                   const fs::path& raw_dir, const fs::path& out_path,
                                   const std::string& command_line) {
  const DatasetEntry& e = registry.find(name);
  const auto digests = registry.expected_digests(name);
  for (const auto& [file, digest] : digests) {
    const fs::path p = raw_dir / file;
    if (!fs::exists(p)) throw IoError("missing raw file " + p.string());
    if (sha256_file(p) != digest) throw FormatError("digest mismatch for raw file " + p.string());
  }
  auto [sources, splits] = e.converter(raw_dir);
  container::Provenance prov{std::string(kToolName) + "-convert " + kVersion, command_line};
  return container::write_container(out_path, sources, splits, prov);
}

}  // namespace bf::datasets
