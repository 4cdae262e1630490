#include "bf/experiment.hpp"

#include "bf/error.hpp"
#include "bf/extensions.hpp"
#include "bf/pipeline.hpp"
#include "bf/rng.hpp"

namespace bf::experiment {

using nlohmann::json;

namespace {

std::size_t argmax_row(const Array& a, std::size_t row, std::size_t width) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < width; ++j) {
    if (a[row * width + j] > a[row * width + best]) best = j;
  }
  return best;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::unique_ptr<mainloop::Extension> build_extension(const json& e, const Experiment& ex,
                                                     const std::filesystem::path& base) {
  const std::string kind = e.at("kind").get<std::string>();
  if (kind == "finish_after") {
    std::optional<std::int64_t> it, ep;
    if (e.contains("iterations")) it = e.at("iterations").get<std::int64_t>();
    if (e.contains("epochs")) ep = e.at("epochs").get<std::int64_t>();
    return std::make_unique<mainloop::FinishAfter>(it, ep);
  }
  if (kind == "printing") return std::make_unique<mainloop::Printing>(e.value("every_n", std::int64_t{1}));
  if (kind == "log_to_file") {
    return std::make_unique<mainloop::LogToFile>(resolve(base, e.at("path").get<std::string>()));
  }
  if (kind == "checkpoint") {
    std::set<std::int64_t> only;
    if (e.contains("only_at")) only = e.at("only_at").get<std::set<std::int64_t>>();
    return std::make_unique<mainloop::Checkpoint>(resolve(base, e.at("path").get<std::string>()),
                                                  e.value("every_n", std::int64_t{0}), only,
                                                  e.value("abort_on_error", false));
  }
  if (kind == "monitoring") {
    const std::string split = e.contains("split") ? e.at("split").get<std::string>()
                                                  : ex.spec().at("valid_split").get<std::string>();
    const auto batch = e.value("batch_size", ex.spec().at("scheme").value("batch_size", std::size_t{10}));
    std::vector<mainloop::Trigger> triggers;
    for (const auto& t : e.value("triggers", std::vector<std::string>{"after_epoch"})) {
      triggers.push_back(mainloop::trigger_from_name(t));
    }
    return std::make_unique<mainloop::Monitoring>(build_pipeline(ex.pipeline_spec(split, false, batch)),
                                                  std::vector<graph::Variable>{ex.cost()}, "valid",
                                                  triggers);
  }
  if (kind == "learning_rate_schedule") {
    return std::make_unique<mainloop::LearningRateSchedule>(e.at("rule_index").get<std::size_t>(),
                                                            e.at("decay").get<double>());
  }
  throw LookupError("unknown extension kind '" + kind + "'");
}

}  // namespace

json Experiment::pipeline_spec(const std::string& split, bool for_training, std::size_t batch_size) const {
  const std::string task = spec_.at("task").get<std::string>();
  json scheme = for_training ? spec_.at("scheme") : json{{"kind", "sequential"}, {"batch_size", batch_size}};
  json p = {{"container", resolve(base_dir_, spec_.at("container").get<std::string>()).string()},
            {"split", split},
            {"backend", spec_.value("backend", std::string("in_memory"))},
            {"max_epochs", 0}};
  json transformers = json::array();
  if (task == "blobs") {
    transformers.push_back({{"kind", "mapping"},
                            {"function", "one_hot"},
                            {"params", {{"source", "targets"}, {"classes", 2}, {"flatten", true}}}});
  } else if (task == "ngram") {
    const auto n = spec_.at("ngram_order").get<std::size_t>();
    const auto v = spec_.at("vocabulary").get<std::size_t>();
    const auto size = scheme.value("batch_size", std::size_t{10});
    const auto policy = scheme.value("policy", std::string("keep"));
    scheme["examplewise"] = true;
    scheme.erase("batch_size");
    transformers.push_back({{"kind", "mapping"},
                            {"function", "trim_to_length"},
                            {"params", {{"source", "tokens"}, {"lengths", "lengths"}}}});
    transformers.push_back({{"kind", "ngrams"}, {"n", n}});
    transformers.push_back({{"kind", "batch"}, {"size", size}, {"policy", policy}});
    transformers.push_back({{"kind", "mapping"},
                            {"function", "one_hot"},
                            {"params", {{"source", "features"}, {"classes", v}, {"flatten", true}}}});
    transformers.push_back({{"kind", "mapping"},
                            {"function", "one_hot"},
                            {"params", {{"source", "targets"}, {"classes", v}}}});
  } else {
    throw ContractError("unknown task '" + task + "'");
  }
  p["scheme"] = scheme;
  p["transformers"] = transformers;
  return p;
}

std::unique_ptr<Experiment> Experiment::build(const json& spec, const std::filesystem::path& base_dir) {
  std::unique_ptr<Experiment> ex(new Experiment());
  ex->spec_ = spec;
  ex->base_dir_ = base_dir;
  try {
    const std::string task = spec.at("task").get<std::string>();
    const auto& m = spec.at("model");
    const auto dims = m.at("dims").get<std::vector<std::size_t>>();
    std::vector<bricks::ActivationKind> acts;
    for (const auto& a : m.at("activations")) acts.push_back(bricks::activation_from_name(a.get<std::string>()));
    if (acts.empty() || acts.back() != bricks::ActivationKind::Softmax) {
      throw ContractError("the last activation must be softmax");
    }
    std::size_t in_dim = 2, classes = 2;
    if (task == "ngram") {
      classes = spec.at("vocabulary").get<std::size_t>();
      in_dim = spec.at("ngram_order").get<std::size_t>() * classes;
    }
    if (dims.size() < 2 || dims.front() != in_dim || dims.back() != classes) {
      throw ContractError("model dims must start at " + std::to_string(in_dim) + " and end at " +
                          std::to_string(classes));
    }

    ex->model_ = std::make_shared<bricks::Mlp>(m.value("name", std::string("mlp")), dims, acts);
    ex->model_->allocate();
    if (m.contains("weights_init")) ex->model_->set_weights_init(bricks::Initializer::from_json(m.at("weights_init")));
    if (m.contains("biases_init")) ex->model_->set_biases_init(bricks::Initializer::from_json(m.at("biases_init")));
    Rng rng(m.value("init_seed", std::uint64_t{0}));
    bricks::initialize(*ex->model_, rng);

    ex->features_ = graph::input("features", {graph::kBatch, static_cast<std::int64_t>(in_dim)});
    ex->targets_ = graph::input("targets", {graph::kBatch, static_cast<std::int64_t>(classes)});
    ex->prediction_ = ex->model_->apply(ex->features_);
    ex->cost_ = graph::annotate(graph::cross_entropy(ex->prediction_, ex->targets_),
                                graph::RoleSet{graph::Role::Cost}, "", "cost");

    const json pipeline = ex->pipeline_spec(spec.at("train_split").get<std::string>(), true, 0);
    ex->loop_ = std::make_unique<mainloop::MainLoop>(
        ex->cost_, ex->model_->all_parameters(), steprules::chain_from_json(spec.at("rules")),
        build_pipeline(pipeline), pipeline);
    if (spec.contains("weight_norm")) {
      ex->loop_->add_constraint(steprules::WeightNormConstraint::from_json(spec.at("weight_norm")));
    }
    for (const auto& e : spec.value("extensions", json::array())) {
      ex->loop_->add_extension(build_extension(e, *ex, base_dir));
    }
  } catch (const json::exception& e) {
    throw ContractError(std::string("training spec: ") + e.what());
  }
  return ex;
}

double Experiment::accuracy(const std::string& split) const {
  auto stream = build_pipeline(pipeline_spec(split, false, 64));
  graph::ComputationGraph cg({prediction_});
  std::size_t correct = 0, total = 0;
  for (const Item& item : drain_epoch(*stream)) {
    graph::Bindings b;
    loop_->bind_parameters(b);
    mainloop::MainLoop::bind_item(cg, item, b);
    const Array pred = graph::forward(cg, b)[0];
    const Array target = Array::from_tensor(item.tensor("targets"));
    const std::size_t rows = pred.shape()[0], width = pred.shape()[1];
    for (std::size_t r = 0; r < rows; ++r) {
      correct += argmax_row(pred, r, width) == argmax_row(target, r, width);
    }
    total += rows;
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

}  // namespace bf::experiment
