#include "bf/pipeline.hpp"

#include "bf/error.hpp"

namespace bf {

using nlohmann::json;

IterationScheme build_scheme(const json& s, std::size_t n) {
  try {
    const auto kind = scheme_kind_from_name(s.at("kind").get<std::string>());
    const auto batch_size = s.value("batch_size", std::size_t{1});
    const auto policy = last_batch_from_name(s.value("policy", std::string("keep")));
    const auto seed = s.value("seed", std::uint64_t{0});
    const bool examplewise = s.value("examplewise", false);
    if (examplewise) {
      if (kind == SchemeKind::Sequential) return sequential_examples(n);
      if (kind == SchemeKind::Shuffled) return shuffled_examples(n, seed);
      SchemeState st;
      st.kind = kind;
      st.num_examples = n;
      st.examplewise = true;
      st.rng = Rng(seed);
      return IterationScheme(std::move(st));
    }
    switch (kind) {
      case SchemeKind::Sequential:
        if (s.contains("indices")) {
          return index_list_batches(n, s.at("indices").get<std::vector<std::size_t>>(), batch_size,
                                    policy);
        }
        return sequential_batches(n, batch_size, policy);
      case SchemeKind::Shuffled: return shuffled_batches(n, batch_size, seed, policy);
      case SchemeKind::Bootstrap: return bootstrap(n, batch_size, seed, policy);
    }
  } catch (const json::exception& e) {
    throw ContractError(std::string("scheme spec: ") + e.what());
  }
  throw ContractError("scheme spec: unknown kind");
}

std::unique_ptr<Stream> build_transformer(std::unique_ptr<Stream> up, const json& t) {
  try {
    const auto kind = t.at("kind").get<std::string>();
    if (kind == "mapping") {
      return std::make_unique<Mapping>(std::move(up), t.at("function").get<std::string>(),
                                       t.value("params", json::object()));
    }
    if (kind == "batch") {
      return std::make_unique<Batch>(
          std::move(up), t.at("size").get<std::size_t>(),
          last_batch_from_name(t.value("policy", std::string("keep"))),
          t.value("ragged_sources", std::vector<std::string>{}));
    }
    if (kind == "padding") {
      return std::make_unique<Padding>(std::move(up), t.value("pad_value", 0.0),
                                       t.value("exempt", std::vector<std::string>{}));
    }
    if (kind == "ngrams") {
      return std::make_unique<NGrams>(std::move(up), t.at("n").get<std::size_t>(),
                                      t.value("source", std::string("tokens")),
                                      t.value("context", std::string("features")),
                                      t.value("target", std::string("targets")));
    }
    if (kind == "random_crop") {
      return std::make_unique<RandomCrop>(
          std::move(up), t.at("source").get<std::string>(), t.at("height").get<std::size_t>(),
          t.at("width").get<std::size_t>(), t.value("seed", std::uint64_t{0}),
          t.value("image_ndim", std::size_t{2}));
    }
    throw ContractError("pipeline spec: unknown transformer kind '" + kind + "'");
  } catch (const json::exception& e) {
    throw ContractError(std::string("transformer spec: ") + e.what());
  }
}

std::unique_ptr<Stream> build_pipeline(const json& spec) {
  if (!spec.is_object()) throw ContractError("pipeline spec must be a JSON object");
  try {
    Dataset ds = Dataset::open(spec.at("container").get<std::string>(),
                               spec.at("split").get<std::string>(),
                               backend_from_name(spec.value("backend", std::string("in_memory"))));
    IterationScheme scheme = build_scheme(spec.at("scheme"), ds.num_examples());
    std::unique_ptr<Stream> stream = std::make_unique<DataStream>(
        std::move(ds), std::move(scheme), spec.value("max_epochs", std::size_t{0}));
    for (const auto& t : spec.value("transformers", json::array())) {
      stream = build_transformer(std::move(stream), t);
    }
    return stream;
  } catch (const json::exception& e) {
    throw ContractError(std::string("pipeline spec: ") + e.what());
  }
}

}  // namespace bf
