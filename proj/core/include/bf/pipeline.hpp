#pragma once

#include <memory>

#include <nlohmann/json.hpp>

#include "bf/iteration.hpp"
#include "bf/stream.hpp"

namespace bf {

// Pipelines cross process boundaries as JSON descriptions, never as live
// objects. Schema:
//
//   {
//     "container": "data/blobs.bfdc",
//     "split": "train",
//     "backend": "in_memory" | "out_of_core",          (default in_memory)
//     "max_epochs": 0,                                  (0 = unbounded)
//     "scheme": {"kind": "sequential" | "shuffled" | "bootstrap",
//                "batch_size": 10, "seed": 7, "policy": "keep" | "drop",
//                "examplewise": false, "indices": [...]  (sequential only)},
//     "transformers": [
//       {"kind": "mapping", "function": "scale_by", "params": {...}},
//       {"kind": "batch", "size": 4, "policy": "keep", "ragged_sources": [...]},
//       {"kind": "padding", "pad_value": 0, "exempt": [...]},
//       {"kind": "ngrams", "n": 2, "source": "tokens",
//        "context": "features", "target": "targets"},
//       {"kind": "random_crop", "source": "images", "height": 2, "width": 2,
//        "seed": 7, "image_ndim": 2}
//     ]
//   }
IterationScheme build_scheme(const nlohmann::json& scheme, std::size_t num_examples);
std::unique_ptr<Stream> build_transformer(std::unique_ptr<Stream> upstream,
                                          const nlohmann::json& spec);
std::unique_ptr<Stream> build_pipeline(const nlohmann::json& spec);

}  // namespace bf
