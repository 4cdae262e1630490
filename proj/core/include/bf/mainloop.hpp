#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bf/bricks.hpp"
#include "bf/graph.hpp"
#include "bf/steprules.hpp"
#include "bf/stream.hpp"

namespace bf::mainloop {

enum class Trigger {
  BeforeTraining,
  BeforeEpoch,
  BeforeBatch,
  AfterBatch,
  AfterEpoch,
  AfterTraining,
  OnInterrupt,
};

std::string_view trigger_name(Trigger t) noexcept;
Trigger trigger_from_name(std::string_view name);

struct TrainingStatus {
  std::int64_t iterations_done = 0;
  std::int64_t epochs_done = 0;
  bool training_finished = false;
  bool stop_requested = false;
  // Loop bookkeeping needed to resume at the exact batch boundary.
  bool started = false;         // BEFORE_TRAINING has fired
  bool epoch_open = false;      // BEFORE_EPOCH fired, AFTER_EPOCH not yet
  std::int64_t epoch_iterations = 0;
  bool interrupted = false;

  nlohmann::json to_json() const;
  static TrainingStatus from_json(const nlohmann::json& j);
  friend bool operator==(const TrainingStatus&, const TrainingStatus&) = default;
};

using Channels = std::map<std::string, double>;

/// Append-only record of scalar channels per iteration. NaN values are
/// written to JSON as null and read back as NaN.
class TrainingLog {
 public:
  void record(std::int64_t iteration, const std::string& channel, double value);
  void warn(std::int64_t iteration, std::string message);

  const std::map<std::int64_t, Channels>& rows() const noexcept { return rows_; }
  const std::map<std::int64_t, std::vector<std::string>>& warnings() const noexcept {
    return warnings_;
  }
  std::optional<double> find(std::int64_t iteration, const std::string& channel) const;
  // Every channel name seen, sorted.
  std::vector<std::string> channel_names() const;
  std::size_t size() const noexcept { return rows_.size(); }

  // {"iteration": k, "channels": {...}} plus "warnings" when present.
  std::string line(std::int64_t iteration) const;
  nlohmann::json to_json() const;
  static TrainingLog from_json(const nlohmann::json& j);
  // Parses JSON-lines produced by line().
  static TrainingLog from_jsonl(std::istream& in);

  // Bitwise comparison of values (so NaN rows compare equal).
  friend bool operator==(const TrainingLog& a, const TrainingLog& b);

 private:
  std::map<std::int64_t, Channels> rows_;
  std::map<std::int64_t, std::vector<std::string>> warnings_;
};

class MainLoop;

class Extension {
 public:
  explicit Extension(std::vector<Trigger> triggers) : triggers_(std::move(triggers)) {}
  virtual ~Extension() = default;

  virtual std::string_view kind() const noexcept = 0;
  bool fires_on(Trigger t) const noexcept;
  const std::vector<Trigger>& triggers() const noexcept { return triggers_; }

  virtual void on(Trigger t, MainLoop& loop) = 0;

  virtual nlohmann::json state() const { return nlohmann::json::object(); }
  virtual void restore(const nlohmann::json& state, MainLoop& loop);

 private:
  std::vector<Trigger> triggers_;
};

struct Snapshot;

/// Single-threaded training driver. Pulls items, computes gradients with the
/// rule chain, updates parameters, fires extensions at batch boundaries and
/// can be checkpointed and resumed bit-exactly.
class MainLoop {
 public:
  // `parameters` are owned by bricks and must outlive the loop. The
  // pipeline spec (may be null) is recorded for snapshot integrity checks.
  MainLoop(graph::Variable cost, std::vector<bricks::Parameter*> parameters,
           steprules::RuleChain chain, std::unique_ptr<Stream> stream,
           nlohmann::json pipeline_spec = nullptr);

  void add_extension(std::unique_ptr<Extension> ext);
  void add_constraint(const steprules::WeightNormConstraint& c) { constraints_.push_back(c); }

  // Runs until an extension requests a stop, the stream is exhausted, or an
  // interrupt is consumed. Returns the log.
  const TrainingLog& run();

  // Async-signal-safe; consumed at the next batch boundary.
  void request_interrupt() noexcept { interrupt_.store(true); }
  // Ask for a snapshot once the current trigger has finished dispatching.
  void request_checkpoint(std::filesystem::path path, bool abort_on_error = false);

  TrainingStatus& status() noexcept { return status_; }
  const TrainingStatus& status() const noexcept { return status_; }
  TrainingLog& log() noexcept { return log_; }
  const TrainingLog& log() const noexcept { return log_; }
  steprules::RuleChain& rule_chain() noexcept { return chain_; }
  const steprules::RuleChain& initial_rule_chain() const noexcept { return initial_chain_; }
  const steprules::StepRuleState& rule_state() const noexcept { return rule_state_; }
  Stream& stream() noexcept { return *stream_; }
  const Stream& stream() const noexcept { return *stream_; }
  const nlohmann::json& pipeline_spec() const noexcept { return pipeline_spec_; }
  const std::vector<bricks::Parameter*>& parameters() const noexcept { return parameters_; }
  const std::vector<std::unique_ptr<Extension>>& extensions() const noexcept { return extensions_; }
  const graph::Variable& cost() const noexcept { return cost_; }

  // Binds every parameter's current value.
  void bind_parameters(graph::Bindings& b) const;
  // Binds the graph inputs of `cg` from an item's sources by name.
  static void bind_item(const graph::ComputationGraph& cg, const Item& item, graph::Bindings& b);

  Snapshot snapshot() const;
  // Integrity-checks then restores everything the snapshot holds.
  void restore(const Snapshot& s);
  void resume_from(const std::filesystem::path& path);

 private:
  void fire(Trigger t);
  void train_on(const Item& item);
  void handle_checkpoint();

  graph::Variable cost_;
  std::vector<bricks::Parameter*> parameters_;
  steprules::RuleChain chain_;
  steprules::RuleChain initial_chain_;
  steprules::StepRuleState rule_state_;
  std::unique_ptr<Stream> stream_;
  nlohmann::json pipeline_spec_;
  std::vector<std::unique_ptr<Extension>> extensions_;
  std::vector<steprules::WeightNormConstraint> constraints_;
  graph::ComputationGraph graph_;
  TrainingStatus status_;
  TrainingLog log_;
  std::atomic<bool> interrupt_{false};
  std::optional<std::pair<std::filesystem::path, bool>> pending_checkpoint_;
};

}  // namespace bf::mainloop
