#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "bf/dataset.hpp"
#include "bf/iteration.hpp"
#include "bf/tensor.hpp"

namespace bf {

enum class EventKind { Item, EpochEnd, Exhausted };

// What a stream produced on one pull. Epoch ends are in-band and distinct
// from exhaustion.
struct StreamEvent {
  EventKind kind = EventKind::Exhausted;
  Item item;

  static StreamEvent of(Item item) { return {EventKind::Item, std::move(item)}; }
  static StreamEvent epoch_end() { return {EventKind::EpochEnd, {}}; }
  static StreamEvent exhausted() { return {EventKind::Exhausted, {}}; }

  bool is_item() const noexcept { return kind == EventKind::Item; }
  friend bool operator==(const StreamEvent&, const StreamEvent&) = default;
};

/// A pull-based source of items. Transformers wrap another stream.
///
/// save_state()/restore_state() operate on the whole chain: the state tree
/// has one node per layer, {"kind", "state", "upstream"}, and restoring checks
/// that every layer kind matches. Both must be called between pulls.
class Stream {
 public:
  virtual ~Stream() = default;

  virtual StreamEvent next() = 0;
  virtual std::string_view kind() const noexcept = 0;

  nlohmann::json save_state() const;
  void restore_state(const nlohmann::json& tree);

  // Wrapped stream, or nullptr for the base stream.
  virtual Stream* upstream() noexcept { return nullptr; }
  const Stream* upstream() const noexcept { return const_cast<Stream*>(this)->upstream(); }

 protected:
  virtual nlohmann::json own_state() const = 0;
  virtual void restore_own_state(const nlohmann::json& state) = 0;
};

/// Pulls requests from a scheme and fetches them from a dataset.
class DataStream final : public Stream {
 public:
  // max_epochs == 0 means unbounded; otherwise the stream is exhausted after
  // that many epoch-end signals.
  DataStream(Dataset dataset, IterationScheme scheme, std::size_t max_epochs = 0);

  StreamEvent next() override;
  std::string_view kind() const noexcept override { return "data_stream"; }

  const Dataset& dataset() const noexcept { return dataset_; }
  const std::vector<std::string>& sources() const noexcept { return dataset_.sources(); }
  std::size_t epochs_done() const noexcept { return epochs_done_; }

 protected:
  nlohmann::json own_state() const override;
  void restore_own_state(const nlohmann::json& state) override;

 private:
  Dataset dataset_;
  IterationScheme scheme_;
  std::size_t max_epochs_;
  std::size_t epochs_done_ = 0;
};

class Transformer : public Stream {
 public:
  explicit Transformer(std::unique_ptr<Stream> upstream);
  Stream* upstream() noexcept override { return upstream_.get(); }

 protected:
  StreamEvent pull() { return upstream_->next(); }

 private:
  std::unique_ptr<Stream> upstream_;
};

// ---- mapping registry ----

// A named pure function over items. Closures are not accepted anywhere in the
// pipeline: every stage must be reconstructible from its description.
struct MappingFunction {
  std::string name;
  // Throws ContractError when params are unusable.
  void (*validate)(const nlohmann::json& params);
  Item (*apply)(const Item& item, const nlohmann::json& params);
};

// Registered names: scale_by, cast_to, select_sources, rename, one_hot,
// flatten, trim_to_length.
const MappingFunction& find_mapping(std::string_view name);
std::vector<std::string> mapping_names();

class Mapping final : public Transformer {
 public:
  Mapping(std::unique_ptr<Stream> upstream, std::string function_id, nlohmann::json params);

  StreamEvent next() override;
  std::string_view kind() const noexcept override { return "mapping"; }

 protected:
  nlohmann::json own_state() const override;
  void restore_own_state(const nlohmann::json& state) override;

 private:
  const MappingFunction* fn_;
  nlohmann::json params_;
};

/// Stacks consecutive single examples into minibatches without crossing
/// epoch boundaries. Sources listed in `ragged_sources` become TensorLists
/// (rows may differ in shape); all others must stack exactly.
class Batch final : public Transformer {
 public:
  Batch(std::unique_ptr<Stream> upstream, std::size_t size, LastBatch policy,
        std::vector<std::string> ragged_sources = {});

  StreamEvent next() override;
  std::string_view kind() const noexcept override { return "batch"; }

 protected:
  nlohmann::json own_state() const override;
  void restore_own_state(const nlohmann::json& state) override;

 private:
  Item assemble(std::vector<Item>& rows) const;

  std::size_t size_;
  LastBatch policy_;
  std::vector<std::string> ragged_;
  std::optional<EventKind> pending_;  // signal owed after a short final batch
};

/// Pads every non-exempt source of a batch of sequences to the longest one
/// and adds "<name>_mask" (f64, [batch, time]) with 1 over real steps.
class Padding final : public Transformer {
 public:
  Padding(std::unique_ptr<Stream> upstream, double pad_value,
          std::vector<std::string> exempt_sources = {});

  StreamEvent next() override;
  std::string_view kind() const noexcept override { return "padding"; }

 protected:
  nlohmann::json own_state() const override;
  void restore_own_state(const nlohmann::json& state) override;

 private:
  double pad_value_;
  std::vector<std::string> exempt_;
};

/// Turns 1-D token sequences into (context of n tokens, next token) pairs.
class NGrams final : public Transformer {
 public:
  NGrams(std::unique_ptr<Stream> upstream, std::size_t n, std::string source = "tokens",
         std::string context_name = "features", std::string target_name = "targets");

  StreamEvent next() override;
  std::string_view kind() const noexcept override { return "ngrams"; }

 protected:
  nlohmann::json own_state() const override;
  void restore_own_state(const nlohmann::json& state) override;

 private:
  std::size_t n_;
  std::string source_;
  std::string context_name_;
  std::string target_name_;
  std::optional<Tensor> sequence_;
  std::size_t position_ = 0;
};

/// Crops a random (height, width) window from each image. For every example
/// the top offset is drawn before the left offset.
class RandomCrop final : public Transformer {
 public:
  // image_ndim is 2 for (height, width) or 3 for (height, width, channel);
  // a tensor with one extra leading axis is treated as a batch.
  RandomCrop(std::unique_ptr<Stream> upstream, std::string source, std::size_t crop_height,
             std::size_t crop_width, std::uint64_t seed, std::size_t image_ndim = 2);

  StreamEvent next() override;
  std::string_view kind() const noexcept override { return "random_crop"; }

  const Rng& rng() const noexcept { return rng_; }

 protected:
  nlohmann::json own_state() const override;
  void restore_own_state(const nlohmann::json& state) override;

 private:
  Tensor crop_one(const Tensor& image);

  std::string source_;
  std::size_t crop_h_;
  std::size_t crop_w_;
  std::size_t image_ndim_;
  Rng rng_;
};

// Pulls until the first epoch end (or exhaustion), returning the items.
std::vector<Item> drain_epoch(Stream& stream);

}  // namespace bf
