#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "bf/graph.hpp"
#include "bf/mainloop.hpp"

namespace bf::mainloop {

// Requests a stop once `iterations` batches or `epochs` passes are done.
class FinishAfter final : public Extension {
 public:
  FinishAfter(std::optional<std::int64_t> iterations, std::optional<std::int64_t> epochs);
  std::string_view kind() const noexcept override { return "finish_after"; }
  void on(Trigger t, MainLoop& loop) override;

 private:
  std::optional<std::int64_t> iterations_;
  std::optional<std::int64_t> epochs_;
};

// One line per trigger: every n-th batch and every epoch end.
class Printing final : public Extension {
 public:
  explicit Printing(std::int64_t every_n = 1, std::ostream* out = nullptr);
  std::string_view kind() const noexcept override { return "printing"; }
  void on(Trigger t, MainLoop& loop) override;

 private:
  std::int64_t every_n_;
  std::ostream* out_;
};

/// Writes one JSON line per logged iteration. Iteration k is written once
/// it is complete, i.e. before batch k+1 or at the end of training. On
/// restore the file is rewritten from the snapshot's log.
class LogToFile final : public Extension {
 public:
  explicit LogToFile(std::filesystem::path path);
  std::string_view kind() const noexcept override { return "log_to_file"; }
  void on(Trigger t, MainLoop& loop) override;
  nlohmann::json state() const override;
  void restore(const nlohmann::json& state, MainLoop& loop) override;
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  void flush_through(MainLoop& loop, std::int64_t last);

  std::filesystem::path path_;
  std::optional<std::int64_t> written_through_;
};

/// Evaluates scalar channels over a full pass of a validation stream and
/// logs "<prefix>_<name>" as the example-weighted mean.
class Monitoring final : public Extension {
 public:
  Monitoring(std::unique_ptr<Stream> stream, std::vector<graph::Variable> channels,
             std::string prefix = "valid",
             std::vector<Trigger> triggers = {Trigger::AfterEpoch});
  std::string_view kind() const noexcept override { return "monitoring"; }
  void on(Trigger t, MainLoop& loop) override;
  nlohmann::json state() const override;
  void restore(const nlohmann::json& state, MainLoop& loop) override;

  // Weighted means per channel over one pass; NaN for an empty stream.
  std::vector<double> evaluate(const MainLoop& loop);

 private:
  std::unique_ptr<Stream> stream_;
  std::vector<graph::Variable> channels_;
  graph::ComputationGraph graph_;
  std::string prefix_;
};

/// Requests a snapshot every n iterations (or at the listed iterations only)
/// and on interrupt.
class Checkpoint final : public Extension {
 public:
  Checkpoint(std::filesystem::path path, std::int64_t every_n, std::set<std::int64_t> only_at = {},
             bool abort_on_error = false);
  std::string_view kind() const noexcept override { return "checkpoint"; }
  void on(Trigger t, MainLoop& loop) override;
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  std::int64_t every_n_;
  std::set<std::int64_t> only_at_;
  bool abort_on_error_;
};

/// Multiplies the learning rate of one rule in the chain by `decay` after
/// every epoch and logs the new value as "learning_rate".
class LearningRateSchedule final : public Extension {
 public:
  LearningRateSchedule(std::size_t rule_index, double decay);
  std::string_view kind() const noexcept override { return "learning_rate_schedule"; }
  void on(Trigger t, MainLoop& loop) override;

 private:
  std::size_t rule_index_;
  double decay_;
};

}  // namespace bf::mainloop
