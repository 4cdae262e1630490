#include "bf/dataset.hpp"

#include <mutex>

#include "bf/container.hpp"
#include "bf/error.hpp"

namespace bf {

std::string_view backend_name(Backend backend) noexcept {
  return backend == Backend::InMemory ? "in_memory" : "out_of_core";
}

Backend backend_from_name(std::string_view name) {
  if (name == "in_memory") return Backend::InMemory;
  if (name == "out_of_core") return Backend::OutOfCore;
  throw ContractError("unknown backend '" + std::string(name) + "'");
}

struct Dataset::Impl {
  std::filesystem::path path;
  std::string split;
  Backend backend = Backend::InMemory;
  std::vector<std::string> sources;
  std::vector<std::uint64_t> starts;  // split interval start per source
  std::size_t num_examples = 0;
  std::vector<Tensor> preloaded;      // in-memory backend

  mutable std::mutex mutex;           // guards reader
  mutable std::unique_ptr<container::ContainerReader> reader;
};

Dataset::Dataset(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}

Dataset Dataset::open(const std::filesystem::path& container_path, const std::string& split,
                      Backend backend) {
  auto impl = std::make_shared<Impl>();
  impl->path = container_path;
  impl->split = split;
  impl->backend = backend;
  impl->reader = std::make_unique<container::ContainerReader>(container_path);
  const auto& header = impl->reader->header();
  const auto& sp = header.split(split);
  bool first = true;
  for (const auto& src : header.sources) {
    auto iv = header.interval(sp, src.name);
    if (!iv) continue;
    if (first) {
      impl->num_examples = iv->length();
      first = false;
    } else if (iv->length() != impl->num_examples) {
      throw ContractError("split '" + split + "': source '" + src.name + "' has " +
                          std::to_string(iv->length()) + " examples, expected " +
                          std::to_string(impl->num_examples));
    }
    impl->sources.push_back(src.name);
    impl->starts.push_back(iv->start);
  }
  if (backend == Backend::InMemory) {
    for (std::size_t i = 0; i < impl->sources.size(); ++i) {
      impl->preloaded.push_back(impl->reader->read_rows(
          impl->sources[i], impl->starts[i], impl->starts[i] + impl->num_examples));
    }
    impl->reader.reset();
  }
  return Dataset(std::move(impl));
}

const std::filesystem::path& Dataset::path() const noexcept { return impl_->path; }
const std::string& Dataset::split() const noexcept { return impl_->split; }
Backend Dataset::backend() const noexcept { return impl_->backend; }
const std::vector<std::string>& Dataset::sources() const noexcept { return impl_->sources; }
std::size_t Dataset::num_examples() const noexcept { return impl_->num_examples; }

std::uint64_t Dataset::read_calls() const noexcept {
  std::lock_guard lock(impl_->mutex);
  return impl_->reader ? impl_->reader->read_calls() : 0;
}

std::uint64_t Dataset::bytes_read() const noexcept {
  std::lock_guard lock(impl_->mutex);
  return impl_->reader ? impl_->reader->bytes_read() : 0;
}

Item Dataset::get_examples(std::span<const std::size_t> indices) const {
  for (std::size_t idx : indices) {
    if (idx >= impl_->num_examples) {
      throw ContractError("example index " + std::to_string(idx) + " out of range for split '" +
                          impl_->split + "' with " + std::to_string(impl_->num_examples) +
                          " examples");
    }
  }
  // Maximal runs of consecutive increasing indices.
  std::vector<std::pair<std::size_t, std::size_t>> runs;
  for (std::size_t idx : indices) {
    if (!runs.empty() && runs.back().second == idx) {
      ++runs.back().second;
    } else {
      runs.emplace_back(idx, idx + 1);
    }
  }

  Item item;
  for (std::size_t s = 0; s < impl_->sources.size(); ++s) {
    std::vector<Tensor> parts;
    parts.reserve(runs.size());
    if (impl_->backend == Backend::InMemory) {
      for (auto [b, e] : runs) parts.push_back(impl_->preloaded[s].slice_rows(b, e));
      if (runs.empty()) parts.push_back(impl_->preloaded[s].slice_rows(0, 0));
    } else {
      std::lock_guard lock(impl_->mutex);
      const std::uint64_t base = impl_->starts[s];
      for (auto [b, e] : runs) {
        parts.push_back(impl_->reader->read_rows(impl_->sources[s], base + b, base + e));
      }
      if (runs.empty()) parts.push_back(impl_->reader->read_rows(impl_->sources[s], base, base));
    }
    if (parts.size() == 1) {
      item.set(impl_->sources[s], std::move(parts.front()));
    } else {
      item.set(impl_->sources[s], Tensor::concat(parts));
    }
  }
  return item;
}

}  // namespace bf
