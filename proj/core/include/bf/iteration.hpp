#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "bf/rng.hpp"

namespace bf {

enum class LastBatch { Keep, Drop };
enum class SchemeKind { Sequential, Shuffled, Bootstrap };

std::string_view last_batch_name(LastBatch policy) noexcept;
LastBatch last_batch_from_name(std::string_view name);
std::string_view scheme_kind_name(SchemeKind kind) noexcept;
SchemeKind scheme_kind_from_name(std::string_view name);

// One index request. `single` requests ask for one example without a batch
// axis; otherwise the indices form a minibatch.
struct Request {
  std::vector<std::size_t> indices;
  bool single = false;

  friend bool operator==(const Request&, const Request&) = default;
};

// Complete, serializable state of an iteration scheme.
struct SchemeState {
  SchemeKind kind = SchemeKind::Sequential;
  std::size_t num_examples = 0;  // size of the index domain
  std::size_t batch_size = 1;
  bool examplewise = false;
  LastBatch policy = LastBatch::Keep;
  // Sequential schemes may walk an explicit list instead of [0, n).
  std::optional<std::vector<std::size_t>> index_list;
  bool epoch_active = false;
  std::size_t cursor = 0;
  std::vector<std::size_t> epoch_order;  // materialised for shuffled/bootstrap epochs
  Rng rng;

  nlohmann::json to_json() const;
  static SchemeState from_json(const nlohmann::json& j);

  friend bool operator==(const SchemeState&, const SchemeState&) = default;
};

/// Deterministic generator of index requests, one epoch at a time.
///
/// next() returns requests until the epoch is exhausted, then std::nullopt
/// exactly once; the call after that starts the next epoch. Shuffled and
/// bootstrap schemes draw each epoch's order from their own Rng when the
/// epoch starts, and keep the Rng running across epochs.
class IterationScheme {
 public:
  explicit IterationScheme(SchemeState state);

  std::optional<Request> next();

  const SchemeState& state() const noexcept { return state_; }
  SchemeState save_state() const { return state_; }
  static IterationScheme restore_state(SchemeState state) { return IterationScheme(std::move(state)); }

  std::size_t num_examples() const noexcept { return state_.num_examples; }
  // Number of positions in one epoch's order (before the last-batch policy).
  std::size_t epoch_length() const noexcept;

 private:
  void begin_epoch();
  std::size_t index_at(std::size_t position) const;

  SchemeState state_;
};

IterationScheme sequential_batches(std::size_t n, std::size_t batch_size,
                                   LastBatch policy = LastBatch::Keep);
IterationScheme shuffled_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                 LastBatch policy = LastBatch::Keep);
IterationScheme bootstrap(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                          LastBatch policy = LastBatch::Keep);
IterationScheme sequential_examples(std::size_t n);
IterationScheme shuffled_examples(std::size_t n, std::uint64_t seed);
// Sequential batches over an explicit list of indices into [0, n).
IterationScheme index_list_batches(std::size_t n, std::vector<std::size_t> indices,
                                   std::size_t batch_size, LastBatch policy = LastBatch::Keep);

struct Fold {
  IterationScheme train;
  IterationScheme valid;
};

// k contiguous validation blocks; the first n % k folds are one larger.
// Training indices are the ascending complement.
std::vector<Fold> cross_validation(std::size_t n, std::size_t k, std::size_t batch_size = 1,
                                   LastBatch policy = LastBatch::Keep);

}  // namespace bf
