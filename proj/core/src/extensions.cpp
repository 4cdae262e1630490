#include "bf/extensions.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>

#include "bf/error.hpp"

namespace bf::mainloop {

// --- FinishAfter -------------------------------------------------------------

FinishAfter::FinishAfter(std::optional<std::int64_t> iterations, std::optional<std::int64_t> epochs)
    : Extension({Trigger::BeforeTraining, Trigger::AfterBatch, Trigger::AfterEpoch}),
      iterations_(iterations),
      epochs_(epochs) {
  if (!iterations_ && !epochs_) throw ContractError("finish_after needs iterations or epochs");
}

void FinishAfter::on(Trigger, MainLoop& loop) {
  auto& s = loop.status();
  if ((iterations_ && s.iterations_done >= *iterations_) || (epochs_ && s.epochs_done >= *epochs_)) {
    s.stop_requested = true;
  }
}

// --- Printing ----------------------------------------------------------------

Printing::Printing(std::int64_t every_n, std::ostream* out)
    : Extension({Trigger::AfterBatch, Trigger::AfterEpoch, Trigger::AfterTraining}),
      every_n_(every_n),
      out_(out) {
  if (every_n_ <= 0) throw ContractError("printing interval must be positive");
}

void Printing::on(Trigger t, MainLoop& loop) {
  const auto& s = loop.status();
  if (t == Trigger::AfterBatch && s.iterations_done % every_n_ != 0) return;
  std::ostream& out = out_ ? *out_ : std::cout;
  out << trigger_name(t) << ": iteration " << s.iterations_done << ", epoch " << s.epochs_done;
  if (auto row = loop.log().rows().find(s.iterations_done); row != loop.log().rows().end()) {
    for (const auto& [name, v] : row->second) out << ", " << name << "=" << v;
  }
  out << "\n";
}

// --- LogToFile ---------------------------------------------------------------

LogToFile::LogToFile(std::filesystem::path path)
    : Extension({Trigger::BeforeTraining, Trigger::BeforeBatch, Trigger::AfterTraining}),
      path_(std::move(path)) {}

void LogToFile::flush_through(MainLoop& loop, std::int64_t last) {
  std::ofstream f(path_, std::ios::app | std::ios::binary);
  std::int64_t written = written_through_.value_or(std::numeric_limits<std::int64_t>::min());
  for (const auto& [k, row] : loop.log().rows()) {
    if (k <= written || k > last) continue;
    f << loop.log().line(k) << "\n";
    written_through_ = k;
  }
  f.flush();
  if (!f) {
    std::cerr << "log_to_file: cannot write " << path_ << "\n";
    loop.log().warn(loop.status().iterations_done, "log_to_file: cannot write " + path_.string());
  }
}

void LogToFile::on(Trigger t, MainLoop& loop) {
  switch (t) {
    case Trigger::BeforeTraining: {
      std::ofstream f(path_, std::ios::trunc | std::ios::binary);
      if (!f) {
        std::cerr << "log_to_file: cannot create " << path_ << "\n";
        loop.log().warn(0, "log_to_file: cannot create " + path_.string());
      }
      written_through_.reset();
      break;
    }
    case Trigger::BeforeBatch:
      // Rows up to the current iteration are final once a new batch starts.
      flush_through(loop, loop.status().iterations_done);
      break;
    case Trigger::AfterTraining:
      flush_through(loop, std::numeric_limits<std::int64_t>::max());
      break;
    default:
      break;
  }
}

nlohmann::json LogToFile::state() const {
  return {{"written_through", written_through_ ? nlohmann::json(*written_through_) : nlohmann::json()}};
}

void LogToFile::restore(const nlohmann::json& state, MainLoop& loop) {
  const auto& w = state.at("written_through");
  written_through_ = w.is_null() ? std::nullopt : std::optional<std::int64_t>(w.get<std::int64_t>());
  std::ofstream f(path_, std::ios::trunc | std::ios::binary);
  if (!f) throw IoError("log_to_file: cannot rewrite " + path_.string());
  if (!written_through_) return;
  for (const auto& [k, row] : loop.log().rows()) {
    if (k > *written_through_) break;
    f << loop.log().line(k) << "\n";
  }
}

// --- Monitoring --------------------------------------------------------------

Monitoring::Monitoring(std::unique_ptr<Stream> stream, std::vector<graph::Variable> channels,
                       std::string prefix, std::vector<Trigger> triggers)
    : Extension(std::move(triggers)),
      stream_(std::move(stream)),
      channels_(std::move(channels)),
      graph_(channels_),
      prefix_(std::move(prefix)) {
  if (!stream_) throw ContractError("monitoring: null stream");
  for (const auto& c : channels_) {
    if (c.ndim() != 0) throw ContractError("monitoring channel '" + c.name() + "' is not a scalar");
    if (c.name().empty()) throw ContractError("monitoring channels must be named");
  }
}

std::vector<double> Monitoring::evaluate(const MainLoop& loop) {
  std::vector<double> weighted(channels_.size(), 0.0);
  double total = 0.0;
  for (const Item& item : drain_epoch(*stream_)) {
    graph::Bindings b;
    loop.bind_parameters(b);
    MainLoop::bind_item(graph_, item, b);
    double size = 1.0;
    if (!graph_.inputs().empty()) {
      const Array* first = b.find(graph_.inputs().front());
      size = first->ndim() ? static_cast<double>(first->shape()[0]) : 1.0;
    }
    auto out = graph::forward(graph_, b);
    for (std::size_t i = 0; i < channels_.size(); ++i) weighted[i] += out[i].item() * size;
    total += size;
  }
  for (auto& w : weighted) {
    w = total > 0.0 ? w / total : std::numeric_limits<double>::quiet_NaN();
  }
  return weighted;
}

void Monitoring::on(Trigger, MainLoop& loop) {
  auto values = evaluate(loop);
  const auto k = loop.status().iterations_done;
  for (std::size_t i = 0; i < channels_.size(); ++i) {
    loop.log().record(k, prefix_ + "_" + channels_[i].name(), values[i]);
  }
  if (!values.empty() && std::isnan(values[0])) {
    bool empty = true;
    for (double v : values) empty = empty && std::isnan(v);
    if (empty) loop.log().warn(k, "monitoring: validation stream produced no batches");
  }
}

nlohmann::json Monitoring::state() const { return {{"stream", stream_->save_state()}}; }

void Monitoring::restore(const nlohmann::json& state, MainLoop&) {
  stream_->restore_state(state.at("stream"));
}

// --- Checkpoint --------------------------------------------------------------

Checkpoint::Checkpoint(std::filesystem::path path, std::int64_t every_n, std::set<std::int64_t> only_at,
                       bool abort_on_error)
    : Extension({Trigger::AfterBatch, Trigger::OnInterrupt}),
      path_(std::move(path)),
      every_n_(every_n),
      only_at_(std::move(only_at)),
      abort_on_error_(abort_on_error) {
  if (every_n_ <= 0 && only_at_.empty()) {
    throw ContractError("checkpoint needs a positive interval or explicit iterations");
  }
}

void Checkpoint::on(Trigger t, MainLoop& loop) {
  const auto k = loop.status().iterations_done;
  bool due = t == Trigger::OnInterrupt;
  if (t == Trigger::AfterBatch) {
    due = only_at_.empty() ? (every_n_ > 0 && k % every_n_ == 0) : only_at_.count(k) > 0;
  }
  if (due) loop.request_checkpoint(path_, abort_on_error_);
}

// --- LearningRateSchedule ------------------------------------------------------

LearningRateSchedule::LearningRateSchedule(std::size_t rule_index, double decay)
    : Extension({Trigger::AfterEpoch}), rule_index_(rule_index), decay_(decay) {}

void LearningRateSchedule::on(Trigger, MainLoop& loop) {
  auto& chain = loop.rule_chain();
  if (rule_index_ >= chain.size()) throw ContractError("learning_rate_schedule: no rule at that index");
  auto& rule = chain[rule_index_];
  if (rule.kind == steprules::RuleKind::Momentum || rule.kind == steprules::RuleKind::GradientClipping ||
      rule.kind == steprules::RuleKind::AdaDelta) {
    throw ContractError("learning_rate_schedule: rule '" + std::string(steprules::rule_name(rule.kind)) +
                        "' has no learning rate");
  }
  rule.learning_rate = rule.learning_rate * decay_;
  loop.log().record(loop.status().iterations_done, "learning_rate", rule.learning_rate);
}

}  // namespace bf::mainloop
