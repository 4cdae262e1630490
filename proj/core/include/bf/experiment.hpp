#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "bf/bricks.hpp"
#include "bf/graph.hpp"
#include "bf/mainloop.hpp"

namespace bf::experiment {

/// Demo training setups driven by a JSON spec. Schema:
///
///   {
///     "task": "blobs" | "ngram",
///     "container": "blobs.bfdc",          (relative to the spec's directory)
///     "train_split": "train",
///     "valid_split": "test",              (optional)
///     "backend": "in_memory",
///     "ngram_order": 2, "vocabulary": 8,  (ngram task only)
///     "model": {"dims": [2, 8, 2], "activations": ["tanh", "softmax"],
///               "weights_init": {"scheme": "gaussian", "std": 0.1},
///               "biases_init": {"scheme": "constant", "value": 0},
///               "init_seed": 1},
///     "scheme": {"kind": "shuffled", "batch_size": 10, "seed": 7},
///     "rules": [{"rule": "adam"}],
///     "weight_norm": {"limit": 5, "roles": ["WEIGHT"]},          (optional)
///     "extensions": [
///       {"kind": "finish_after", "iterations": 50, "epochs": 3},
///       {"kind": "monitoring", "split": "test", "batch_size": 20},
///       {"kind": "log_to_file", "path": "log.jsonl"},
///       {"kind": "checkpoint", "path": "run.bfck", "every_n": 10, "only_at": [25]},
///       {"kind": "printing", "every_n": 10},
///       {"kind": "learning_rate_schedule", "rule_index": 0, "decay": 0.5}
///     ]
///   }
///
/// The model's last activation must be softmax; the cost is the cross
/// entropy against one-hot targets. Blobs use sources (features, targets);
/// the n-gram task turns token sequences into one-hot contexts of
/// `ngram_order` tokens and predicts the next token.
class Experiment {
 public:
  static std::unique_ptr<Experiment> build(const nlohmann::json& spec,
                                           const std::filesystem::path& base_dir);

  mainloop::MainLoop& loop() noexcept { return *loop_; }
  bricks::Mlp& model() noexcept { return *model_; }
  const graph::Variable& prediction() const noexcept { return prediction_; }
  const graph::Variable& cost() const noexcept { return cost_; }
  const nlohmann::json& spec() const noexcept { return spec_; }

  // Pipeline description for one split (sequential, unbounded epochs when
  // `for_training` is false).
  nlohmann::json pipeline_spec(const std::string& split, bool for_training,
                               std::size_t batch_size) const;
  // Fraction of examples in `split` whose argmax prediction matches the target.
  double accuracy(const std::string& split) const;

 private:
  Experiment() = default;

  nlohmann::json spec_;
  std::filesystem::path base_dir_;
  std::shared_ptr<bricks::Mlp> model_;
  graph::Variable features_;
  graph::Variable targets_;
  graph::Variable prediction_;
  graph::Variable cost_;
  std::unique_ptr<mainloop::MainLoop> loop_;
};

}  // namespace bf::experiment
