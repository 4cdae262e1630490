#include "bf/mainloop.hpp"

#include <cmath>
#include <cstring>
#include <iostream>
#include <istream>
#include <set>

#include "bf/error.hpp"
#include "bf/snapshot.hpp"

namespace bf::mainloop {

namespace {

constexpr std::string_view kTriggerNames[] = {"before_training", "before_epoch", "before_batch",
                                              "after_batch",     "after_epoch",  "after_training",
                                              "on_interrupt"};

nlohmann::json value_json(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

double json_value(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

graph::ComputationGraph training_graph(const graph::Variable& cost,
                                       const std::vector<bricks::Parameter*>& params) {
  if (!cost.valid() || cost.ndim() != 0) throw ContractError("main loop: cost must be a scalar");
  std::vector<graph::Variable> wrt;
  for (const auto* p : params) wrt.push_back(p->variable);
  std::vector<graph::Variable> outputs{cost};
  for (auto& g : graph::grad(cost, wrt)) outputs.push_back(g);
  return graph::ComputationGraph(std::move(outputs));
}

}  // namespace

std::string_view trigger_name(Trigger t) noexcept { return kTriggerNames[static_cast<int>(t)]; }

Trigger trigger_from_name(std::string_view name) {
  for (int i = 0; i < static_cast<int>(std::size(kTriggerNames)); ++i) {
    if (kTriggerNames[i] == name) return static_cast<Trigger>(i);
  }
  throw LookupError("unknown trigger '" + std::string(name) + "'");
}

// --- status ----------------------------------------------------------------

nlohmann::json TrainingStatus::to_json() const {
  return {{"iterations_done", iterations_done},
          {"epochs_done", epochs_done},
          {"training_finished", training_finished},
          {"stop_requested", stop_requested},
          {"started", started},
          {"epoch_open", epoch_open},
          {"epoch_iterations", epoch_iterations},
          {"interrupted", interrupted}};
}

TrainingStatus TrainingStatus::from_json(const nlohmann::json& j) {
  TrainingStatus s;
  s.iterations_done = j.at("iterations_done").get<std::int64_t>();
  s.epochs_done = j.at("epochs_done").get<std::int64_t>();
  s.training_finished = j.at("training_finished").get<bool>();
  s.stop_requested = j.at("stop_requested").get<bool>();
  s.started = j.at("started").get<bool>();
  s.epoch_open = j.at("epoch_open").get<bool>();
  s.epoch_iterations = j.at("epoch_iterations").get<std::int64_t>();
  s.interrupted = j.at("interrupted").get<bool>();
  return s;
}

// --- log -------------------------------------------------------------------

void TrainingLog::record(std::int64_t iteration, const std::string& channel, double value) {
  if (!rows_.empty() && iteration < rows_.rbegin()->first) {
    throw ContractError("log: iteration " + std::to_string(iteration) + " precedes " +
                        std::to_string(rows_.rbegin()->first));
  }
  rows_[iteration][channel] = value;
}

void TrainingLog::warn(std::int64_t iteration, std::string message) {
  rows_.try_emplace(iteration);
  warnings_[iteration].push_back(std::move(message));
}

std::optional<double> TrainingLog::find(std::int64_t iteration, const std::string& channel) const {
  auto row = rows_.find(iteration);
  if (row == rows_.end()) return std::nullopt;
  auto it = row->second.find(channel);
  if (it == row->second.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> TrainingLog::channel_names() const {
  std::set<std::string> names;
  for (const auto& [k, row] : rows_) {
    for (const auto& [name, v] : row) names.insert(name);
  }
  return {names.begin(), names.end()};
}

std::string TrainingLog::line(std::int64_t iteration) const {
  nlohmann::ordered_json j;
  j["iteration"] = iteration;
  nlohmann::ordered_json channels = nlohmann::ordered_json::object();
  if (auto row = rows_.find(iteration); row != rows_.end()) {
    for (const auto& [name, v] : row->second) {
      channels[name] = std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
    }
  }
  j["channels"] = std::move(channels);
  if (auto w = warnings_.find(iteration); w != warnings_.end()) j["warnings"] = w->second;
  return j.dump();
}

nlohmann::json TrainingLog::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& [k, row] : rows_) {
    nlohmann::json channels = nlohmann::json::object();
    for (const auto& [name, v] : row) channels[name] = value_json(v);
    nlohmann::json r = {{"iteration", k}, {"channels", channels}};
    if (auto w = warnings_.find(k); w != warnings_.end()) r["warnings"] = w->second;
    rows.push_back(std::move(r));
  }
  return rows;
}

TrainingLog TrainingLog::from_json(const nlohmann::json& j) {
  TrainingLog log;
  for (const auto& r : j) {
    const auto k = r.at("iteration").get<std::int64_t>();
    log.rows_.try_emplace(k);
    for (const auto& [name, v] : r.at("channels").items()) log.rows_[k][name] = json_value(v);
    if (r.contains("warnings")) {
      log.warnings_[k] = r.at("warnings").get<std::vector<std::string>>();
    }
  }
  return log;
}

TrainingLog TrainingLog::from_jsonl(std::istream& in) {
  nlohmann::json rows = nlohmann::json::array();
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      rows.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("log line: ") + e.what());
    }
  }
  return from_json(rows);
}

bool operator==(const TrainingLog& a, const TrainingLog& b) {
  if (a.warnings_ != b.warnings_ || a.rows_.size() != b.rows_.size()) return false;
  for (auto ia = a.rows_.begin(), ib = b.rows_.begin(); ia != a.rows_.end(); ++ia, ++ib) {
    if (ia->first != ib->first || ia->second.size() != ib->second.size()) return false;
    for (auto ca = ia->second.begin(), cb = ib->second.begin(); ca != ia->second.end(); ++ca, ++cb) {
      if (ca->first != cb->first || std::memcmp(&ca->second, &cb->second, sizeof(double)) != 0) {
        return false;
      }
    }
  }
  return true;
}

// --- extension base --------------------------------------------------------

bool Extension::fires_on(Trigger t) const noexcept {
  for (auto x : triggers_) {
    if (x == t) return true;
  }
  return false;
}

void Extension::restore(const nlohmann::json&, MainLoop&) {}

// --- main loop ---------------------------------------------------------------

MainLoop::MainLoop(graph::Variable cost, std::vector<bricks::Parameter*> parameters,
                   steprules::RuleChain chain, std::unique_ptr<Stream> stream,
                   nlohmann::json pipeline_spec)
    : cost_(std::move(cost)),
      parameters_(std::move(parameters)),
      chain_(std::move(chain)),
      initial_chain_(chain_),
      stream_(std::move(stream)),
      pipeline_spec_(std::move(pipeline_spec)),
      graph_(training_graph(cost_, parameters_)) {
  if (!stream_) throw ContractError("main loop: null stream");
  std::map<std::string, Shape> shapes;
  for (const auto* p : parameters_) {
    if (!shapes.emplace(p->path(), p->value.shape()).second) {
      throw ContractError("main loop: duplicate parameter path '" + p->path() + "'");
    }
  }
  rule_state_ = steprules::init_state(chain_, shapes);
}

void MainLoop::add_extension(std::unique_ptr<Extension> ext) { extensions_.push_back(std::move(ext)); }

void MainLoop::request_checkpoint(std::filesystem::path path, bool abort_on_error) {
  pending_checkpoint_ = std::make_pair(std::move(path), abort_on_error);
}

void MainLoop::bind_parameters(graph::Bindings& b) const {
  for (const auto* p : parameters_) b.bind(p->variable, p->value);
}

void MainLoop::bind_item(const graph::ComputationGraph& cg, const Item& item, graph::Bindings& b) {
  for (const auto& in : cg.inputs()) {
    if (!item.contains(in.name())) {
      throw ContractError("stream provides no source '" + in.name() + "' (sources: " +
                          [&] {
                            std::string s;
                            for (const auto& n : item.names()) s += (s.empty() ? "" : ", ") + n;
                            return s;
                          }() +
                          ")");
    }
    b.bind(in, Array::from_tensor(item.tensor(in.name())));
  }
}

void MainLoop::handle_checkpoint() {
  if (!pending_checkpoint_) return;
  auto [path, abort] = std::move(*pending_checkpoint_);
  pending_checkpoint_.reset();
  try {
    write_snapshot(path, snapshot());
  } catch (const std::exception& e) {
    if (abort) throw;
    std::cerr << "checkpoint failed: " << e.what() << "\n";
    log_.warn(status_.iterations_done, std::string("checkpoint failed: ") + e.what());
  }
}

void MainLoop::fire(Trigger t) {
  for (auto& ext : extensions_) {
    if (ext->fires_on(t)) ext->on(t, *this);
  }
  handle_checkpoint();
}

void MainLoop::train_on(const Item& item) {
  graph::Bindings b;
  bind_parameters(b);
  bind_item(graph_, item, b);
  b.salt = static_cast<std::uint64_t>(status_.iterations_done) + 1;
  std::vector<Array> out = graph::forward(graph_, b);

  steprules::TensorMap grads;
  for (std::size_t i = 0; i < parameters_.size(); ++i) {
    grads.emplace(parameters_[i]->path(), std::move(out[i + 1]));
  }
  auto [steps, next_state] = steprules::compute_steps(chain_, rule_state_, grads);
  for (auto* p : parameters_) {
    const Array& s = steps.at(p->path());
    auto v = p->value.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = v[i] - s[i];
    for (const auto& c : constraints_) {
      if (c.selects(p->variable.roles())) c.apply(p->value);
    }
  }
  rule_state_ = std::move(next_state);
  status_.iterations_done += 1;
  status_.epoch_iterations += 1;
  log_.record(status_.iterations_done, "train_cost", out[0].item());
}

const TrainingLog& MainLoop::run() {
  if (status_.training_finished) return log_;
  try {
    if (!status_.started) {
      status_.started = true;
      fire(Trigger::BeforeTraining);
    }
    while (!status_.stop_requested) {
      if (interrupt_.exchange(false)) {
        status_.interrupted = true;
        fire(Trigger::OnInterrupt);
        return log_;
      }
      if (!status_.epoch_open) {
        status_.epoch_open = true;
        status_.epoch_iterations = 0;
        fire(Trigger::BeforeEpoch);
        if (status_.stop_requested) break;
      }
      StreamEvent ev = stream_->next();
      if (ev.kind == EventKind::Exhausted) break;
      if (ev.kind == EventKind::EpochEnd) {
        const bool empty_epoch = status_.epoch_iterations == 0;
        status_.epochs_done += 1;
        status_.epoch_open = false;
        fire(Trigger::AfterEpoch);
        if (empty_epoch) {
          log_.warn(status_.iterations_done, "epoch produced no batches; stopping");
          break;
        }
        continue;
      }
      fire(Trigger::BeforeBatch);
      train_on(ev.item);
      fire(Trigger::AfterBatch);
    }
    status_.training_finished = true;
    fire(Trigger::AfterTraining);
  } catch (...) {
    if (!status_.interrupted) {
      status_.interrupted = true;
      try {
        pending_checkpoint_.reset();
        fire(Trigger::OnInterrupt);
      } catch (const std::exception& e) {
        std::cerr << "interrupt handling failed: " << e.what() << "\n";
      }
    }
    throw;
  }
  return log_;
}

Snapshot MainLoop::snapshot() const {
  Snapshot s;
  s.status = status_;
  s.log = log_;
  for (const auto* p : parameters_) s.parameters.emplace(p->path(), p->value);
  s.rule_state = rule_state_;
  s.stream_state = stream_->save_state();
  for (const auto& e : extensions_) s.extensions.emplace_back(std::string(e->kind()), e->state());
  s.rule_chain = steprules::chain_to_json(chain_);
  s.initial_rule_chain = steprules::chain_to_json(initial_chain_);
  s.pipeline_spec = pipeline_spec_;
  return s;
}

void MainLoop::restore(const Snapshot& s) {
  if (s.format_version != kSnapshotVersion) {
    throw FormatError("snapshot version " + std::to_string(s.format_version) + " is not supported");
  }
  std::vector<std::string> problems;
  if (s.initial_rule_chain != steprules::chain_to_json(initial_chain_)) {
    problems.push_back("rule chain differs: snapshot " + s.initial_rule_chain.dump() + ", loop " +
                       steprules::chain_to_json(initial_chain_).dump());
  }
  if (s.pipeline_spec != pipeline_spec_) problems.push_back("pipeline spec differs");
  if (s.parameters.size() != parameters_.size()) problems.push_back("parameter count differs");
  for (const auto* p : parameters_) {
    auto it = s.parameters.find(p->path());
    if (it == s.parameters.end()) {
      problems.push_back("snapshot lacks parameter " + p->path());
    } else if (it->second.shape() != p->value.shape()) {
      problems.push_back("parameter " + p->path() + " has shape " + shape_to_string(it->second.shape()));
    }
  }
  if (s.extensions.size() != extensions_.size()) {
    problems.push_back("extension count differs");
  } else {
    for (std::size_t i = 0; i < extensions_.size(); ++i) {
      if (s.extensions[i].first != extensions_[i]->kind()) {
        problems.push_back("extension " + std::to_string(i) + " is '" + s.extensions[i].first +
                           "', expected '" + std::string(extensions_[i]->kind()) + "'");
      }
    }
  }
  if (s.rule_state.shapes != rule_state_.shapes || s.rule_state.buffers.size() != chain_.size()) {
    problems.push_back("step rule state does not match the parameters");
  }
  if (!problems.empty()) {
    std::string msg = "snapshot does not match this run:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ContractError(msg);
  }

  stream_->restore_state(s.stream_state);
  chain_ = steprules::chain_from_json(s.rule_chain);
  rule_state_ = s.rule_state;
  for (auto* p : parameters_) p->value = s.parameters.at(p->path());
  status_ = s.status;
  status_.stop_requested = false;
  status_.interrupted = false;
  log_ = s.log;
  for (std::size_t i = 0; i < extensions_.size(); ++i) {
    extensions_[i]->restore(s.extensions[i].second, *this);
  }
}

void MainLoop::resume_from(const std::filesystem::path& path) { restore(read_snapshot(path)); }

}  // namespace bf::mainloop
