#include "bf/stream.hpp"

#include "bf/error.hpp"

namespace bf {

nlohmann::json Stream::save_state() const {
  nlohmann::json node;
  node["kind"] = kind();
  node["state"] = own_state();
  const Stream* up = upstream();
  node["upstream"] = up ? up->save_state() : nlohmann::json(nullptr);
  return node;
}

void Stream::restore_state(const nlohmann::json& tree) {
  if (!tree.is_object() || !tree.contains("kind") || !tree.contains("state")) {
    throw FormatError("stream state: malformed layer node");
  }
  const auto saved_kind = tree.at("kind").get<std::string>();
  if (saved_kind != kind()) {
    throw FormatError("stream state: layer kind mismatch, pipeline has '" + std::string(kind()) +
                      "', state has '" + saved_kind + "'");
  }
  Stream* up = upstream();
  const auto& saved_up = tree.contains("upstream") ? tree.at("upstream") : nlohmann::json();
  if ((up == nullptr) != saved_up.is_null()) {
    throw FormatError("stream state: pipeline depth differs from the saved state");
  }
  // Restore inner layers first so a failure leaves no half-restored outer layer.
  if (up != nullptr) up->restore_state(saved_up);
  try {
    restore_own_state(tree.at("state"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("stream state: malformed '" + saved_kind + "' layer: " + e.what());
  }
}

DataStream::DataStream(Dataset dataset, IterationScheme scheme, std::size_t max_epochs)
    : dataset_(std::move(dataset)), scheme_(std::move(scheme)), max_epochs_(max_epochs) {
  if (scheme_.num_examples() != dataset_.num_examples()) {
    throw ContractError("data stream: scheme covers " + std::to_string(scheme_.num_examples()) +
                        " examples but split '" + dataset_.split() + "' has " +
                        std::to_string(dataset_.num_examples()));
  }
}

StreamEvent DataStream::next() {
  if (max_epochs_ != 0 && epochs_done_ >= max_epochs_) return StreamEvent::exhausted();
  auto request = scheme_.next();
  if (!request) {
    ++epochs_done_;
    return StreamEvent::epoch_end();
  }
  Item item = dataset_.get_examples(request->indices);
  if (request->single) {
    for (auto& [name, field] : item) field = std::get<Tensor>(field).row(0);
  }
  return StreamEvent::of(std::move(item));
}

nlohmann::json DataStream::own_state() const {
  return {{"scheme", scheme_.save_state().to_json()},
          {"epochs_done", epochs_done_},
          {"max_epochs", max_epochs_}};
}

void DataStream::restore_own_state(const nlohmann::json& state) {
  auto scheme = IterationScheme::restore_state(SchemeState::from_json(state.at("scheme")));
  if (scheme.num_examples() != dataset_.num_examples()) {
    throw FormatError("data stream state: scheme size does not match the dataset");
  }
  if (state.at("max_epochs").get<std::size_t>() != max_epochs_) {
    throw FormatError("data stream state: max_epochs differs from the pipeline");
  }
  scheme_ = std::move(scheme);
  epochs_done_ = state.at("epochs_done").get<std::size_t>();
}

Transformer::Transformer(std::unique_ptr<Stream> upstream) : upstream_(std::move(upstream)) {
  if (!upstream_) throw ContractError("transformer: upstream stream is null");
}

std::vector<Item> drain_epoch(Stream& stream) {
  std::vector<Item> items;
  for (;;) {
    StreamEvent ev = stream.next();
    if (!ev.is_item()) break;
    items.push_back(std::move(ev.item));
  }
  return items;
}

}  // namespace bf
