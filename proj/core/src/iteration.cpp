#include "bf/iteration.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>

#include <nlohmann/json.hpp>

#include "bf/error.hpp"

namespace bf {

std::string_view last_batch_name(LastBatch policy) noexcept {
  return policy == LastBatch::Keep ? "keep" : "drop";
}

LastBatch last_batch_from_name(std::string_view name) {
  if (name == "keep") return LastBatch::Keep;
  if (name == "drop") return LastBatch::Drop;
  throw ContractError("unknown last-batch policy '" + std::string(name) + "'");
}

std::string_view scheme_kind_name(SchemeKind kind) noexcept {
  switch (kind) {
    case SchemeKind::Sequential: return "sequential";
    case SchemeKind::Shuffled: return "shuffled";
    case SchemeKind::Bootstrap: return "bootstrap";
  }
  return "?";
}

SchemeKind scheme_kind_from_name(std::string_view name) {
  if (name == "sequential") return SchemeKind::Sequential;
  if (name == "shuffled") return SchemeKind::Shuffled;
  if (name == "bootstrap") return SchemeKind::Bootstrap;
  throw ContractError("unknown scheme kind '" + std::string(name) + "'");
}

nlohmann::json SchemeState::to_json() const {
  nlohmann::json j;
  j["kind"] = scheme_kind_name(kind);
  j["num_examples"] = num_examples;
  j["batch_size"] = batch_size;
  j["examplewise"] = examplewise;
  j["policy"] = last_batch_name(policy);
  j["index_list"] = index_list ? nlohmann::json(*index_list) : nlohmann::json(nullptr);
  j["epoch_active"] = epoch_active;
  j["cursor"] = cursor;
  j["epoch_order"] = epoch_order;
  j["rng"] = rng.to_json();
  return j;
}

SchemeState SchemeState::from_json(const nlohmann::json& j) {
  try {
    SchemeState s;
    s.kind = scheme_kind_from_name(j.at("kind").get<std::string>());
    s.num_examples = j.at("num_examples").get<std::size_t>();
    s.batch_size = j.at("batch_size").get<std::size_t>();
    s.examplewise = j.at("examplewise").get<bool>();
    s.policy = last_batch_from_name(j.at("policy").get<std::string>());
    if (!j.at("index_list").is_null()) {
      s.index_list = j.at("index_list").get<std::vector<std::size_t>>();
    }
    s.epoch_active = j.at("epoch_active").get<bool>();
    s.cursor = j.at("cursor").get<std::size_t>();
    s.epoch_order = j.at("epoch_order").get<std::vector<std::size_t>>();
    s.rng = Rng::from_json(j.at("rng"));
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed scheme state: ") + e.what());
  } catch (const ContractError& e) {
    throw FormatError(std::string("malformed scheme state: ") + e.what());
  }
}

IterationScheme::IterationScheme(SchemeState state) : state_(std::move(state)) {
  const auto& s = state_;
  if (s.batch_size == 0) throw ContractError("iteration scheme: batch_size must be positive");
  if (s.examplewise && s.batch_size != 1) {
    throw ContractError("iteration scheme: example-wise schemes use batch_size 1");
  }
  if (s.num_examples > UINT32_MAX) {
    throw ContractError("iteration scheme: more than 2^32 examples is not supported");
  }
  if (s.kind == SchemeKind::Bootstrap && s.num_examples == 0) {
    throw ContractError("bootstrap: n must be at least 1");
  }
  if (s.index_list) {
    if (s.kind != SchemeKind::Sequential) {
      throw ContractError("iteration scheme: explicit index lists are sequential only");
    }
    for (auto i : *s.index_list) {
      if (i >= s.num_examples) {
        throw ContractError("iteration scheme: index " + std::to_string(i) + " outside [0, " +
                            std::to_string(s.num_examples) + ")");
      }
    }
  }
  if (s.cursor > epoch_length()) {
    throw FormatError("iteration scheme: cursor beyond end of epoch");
  }
  if (s.kind != SchemeKind::Sequential && s.epoch_active) {
    if (s.epoch_order.size() != s.num_examples) {
      throw FormatError("iteration scheme: epoch order has wrong length");
    }
    for (auto i : s.epoch_order) {
      if (i >= s.num_examples) throw FormatError("iteration scheme: epoch order out of range");
    }
  }
}

std::size_t IterationScheme::epoch_length() const noexcept {
  return state_.index_list ? state_.index_list->size() : state_.num_examples;
}

std::size_t IterationScheme::index_at(std::size_t position) const {
  switch (state_.kind) {
    case SchemeKind::Sequential:
      return state_.index_list ? (*state_.index_list)[position] : position;
    case SchemeKind::Shuffled:
    case SchemeKind::Bootstrap:
      return state_.epoch_order[position];
  }
  return position;
}

void IterationScheme::begin_epoch() {
  auto& s = state_;
  s.cursor = 0;
  const std::size_t n = s.num_examples;
  if (s.kind == SchemeKind::Shuffled) {
    s.epoch_order.resize(n);
    std::iota(s.epoch_order.begin(), s.epoch_order.end(), std::size_t{0});
    for (std::size_t i = n; i-- > 1;) {
      const std::size_t j = s.rng.bounded(static_cast<std::uint32_t>(i + 1));
      std::swap(s.epoch_order[i], s.epoch_order[j]);
    }
  } else if (s.kind == SchemeKind::Bootstrap) {
    s.epoch_order.resize(n);
    for (auto& v : s.epoch_order) v = s.rng.bounded(static_cast<std::uint32_t>(n));
  }
  s.epoch_active = true;
}

std::optional<Request> IterationScheme::next() {
  auto& s = state_;
  if (!s.epoch_active) begin_epoch();
  const std::size_t len = epoch_length();
  const std::size_t remaining = len - s.cursor;
  if (remaining == 0 || (s.policy == LastBatch::Drop && remaining < s.batch_size)) {
    s.epoch_active = false;
    s.cursor = 0;
    s.epoch_order.clear();
    return std::nullopt;
  }
  const std::size_t take = std::min(s.batch_size, remaining);
  Request r;
  r.single = s.examplewise;
  r.indices.reserve(take);
  for (std::size_t p = s.cursor; p < s.cursor + take; ++p) r.indices.push_back(index_at(p));
  s.cursor += take;
  return r;
}

namespace {

SchemeState base_state(SchemeKind kind, std::size_t n, std::size_t batch_size, LastBatch policy,
                       std::uint64_t seed) {
  SchemeState s;
  s.kind = kind;
  s.num_examples = n;
  s.batch_size = batch_size;
  s.policy = policy;
  s.rng = Rng(seed);
  return s;
}

}  // namespace

IterationScheme sequential_batches(std::size_t n, std::size_t batch_size, LastBatch policy) {
  return IterationScheme(base_state(SchemeKind::Sequential, n, batch_size, policy, 0));
}

IterationScheme shuffled_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                 LastBatch policy) {
  return IterationScheme(base_state(SchemeKind::Shuffled, n, batch_size, policy, seed));
}

IterationScheme bootstrap(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                          LastBatch policy) {
  return IterationScheme(base_state(SchemeKind::Bootstrap, n, batch_size, policy, seed));
}

IterationScheme sequential_examples(std::size_t n) {
  auto s = base_state(SchemeKind::Sequential, n, 1, LastBatch::Keep, 0);
  s.examplewise = true;
  return IterationScheme(std::move(s));
}

IterationScheme shuffled_examples(std::size_t n, std::uint64_t seed) {
  auto s = base_state(SchemeKind::Shuffled, n, 1, LastBatch::Keep, seed);
  s.examplewise = true;
  return IterationScheme(std::move(s));
}

IterationScheme index_list_batches(std::size_t n, std::vector<std::size_t> indices,
                                   std::size_t batch_size, LastBatch policy) {
  auto s = base_state(SchemeKind::Sequential, n, batch_size, policy, 0);
  s.index_list = std::move(indices);
  return IterationScheme(std::move(s));
}

std::vector<Fold> cross_validation(std::size_t n, std::size_t k, std::size_t batch_size,
                                   LastBatch policy) {
  if (k == 0 || k > n) {
    throw ContractError("cross_validation: need 1 <= k <= n, got k=" + std::to_string(k) +
                        ", n=" + std::to_string(n));
  }
  const std::size_t base = n / k;
  const std::size_t extra = n % k;
  std::vector<Fold> folds;
  folds.reserve(k);
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t begin = f * base + std::min(f, extra);
    const std::size_t end = begin + base + (f < extra ? 1 : 0);
    std::vector<std::size_t> valid;
    std::vector<std::size_t> train;
    for (std::size_t i = 0; i < n; ++i) (i >= begin && i < end ? valid : train).push_back(i);
    folds.push_back(Fold{index_list_batches(n, std::move(train), batch_size, policy),
                         index_list_batches(n, std::move(valid), batch_size, policy)});
  }
  return folds;
}

}  // namespace bf
