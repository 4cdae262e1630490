#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

namespace bf::testing {

// Demo MLP on synth-blobs (2 -> 8 -> 2) with shuffled batches.
inline nlohmann::json blobs_training_spec(const std::filesystem::path& container,
                                          nlohmann::json extensions,
                                          nlohmann::json rules = nlohmann::json::array({{{"rule", "adam"}}}),
                                          std::size_t batch_size = 10) {
  return {{"task", "blobs"},
          {"container", container.string()},
          {"train_split", "train"},
          {"valid_split", "test"},
          {"backend", "in_memory"},
          {"model",
           {{"dims", {2, 8, 2}},
            {"activations", {"tanh", "softmax"}},
            {"weights_init", {{"scheme", "gaussian"}, {"std", 0.5}}},
            {"biases_init", {{"scheme", "constant"}, {"value", 0}}},
            {"init_seed", 1}}},
          {"scheme", {{"kind", "shuffled"}, {"batch_size", batch_size}, {"seed", 7}}},
          {"rules", std::move(rules)},
          {"extensions", std::move(extensions)}};
}

}  // namespace bf::testing
