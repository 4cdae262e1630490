#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "bf/array.hpp"
#include "bf/graph.hpp"

namespace bf::steprules {

enum class RuleKind { Scale, Momentum, GradientClipping, AdaGrad, RMSProp, AdaDelta, Adam };

std::string_view rule_name(RuleKind k) noexcept;
RuleKind rule_from_name(std::string_view name);

// One link of a chain. Positive steps are subtracted from parameters.
struct StepRule {
  RuleKind kind = RuleKind::Scale;
  double learning_rate = 0.0;  // Scale, AdaGrad, RMSProp; alpha for Adam
  double momentum = 0.0;       // Momentum
  double threshold = 0.0;      // GradientClipping
  double decay = 0.0;          // rho for RMSProp and AdaDelta
  double beta1 = 0.0;          // Adam
  double beta2 = 0.0;          // Adam
  double epsilon = 0.0;

  static StepRule scale(double lr);
  static StepRule momentum_rule(double m = 0.9);
  static StepRule gradient_clipping(double threshold);
  static StepRule adagrad(double lr = 0.01, double eps = 1e-6);
  static StepRule rmsprop(double lr = 1e-3, double rho = 0.9, double eps = 1e-8);
  static StepRule adadelta(double rho = 0.95, double eps = 1e-6);
  static StepRule adam(double alpha = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                       double eps = 1e-8);

  // Names of the per-parameter buffers this rule keeps.
  std::vector<std::string> buffer_names() const;

  // {"rule": "adam", "alpha": ..., ...}; every hyperparameter is written out.
  nlohmann::json to_json() const;
  // Missing hyperparameters take the defaults above.
  static StepRule from_json(const nlohmann::json& j);
  friend bool operator==(const StepRule&, const StepRule&) = default;
};

using RuleChain = std::vector<StepRule>;
nlohmann::json chain_to_json(const RuleChain& chain);
RuleChain chain_from_json(const nlohmann::json& j);

// Keyed by parameter path; std::map keeps iteration order deterministic.
using TensorMap = std::map<std::string, Array>;

struct StepRuleState {
  // rule index -> parameter path -> buffer name -> tensor
  std::vector<std::map<std::string, std::map<std::string, Array>>> buffers;
  std::int64_t t = 0;
  // Registered parameter shapes.
  std::map<std::string, Shape> shapes;

  friend bool operator==(const StepRuleState&, const StepRuleState&) = default;
};

// Zero buffers for every rule and parameter.
StepRuleState init_state(const RuleChain& chain, const std::map<std::string, Shape>& shapes);

// Applies the chain left to right. The state is not modified.
std::pair<TensorMap, StepRuleState> compute_steps(const RuleChain& chain, const StepRuleState& state,
                                                  const TensorMap& grads);

// Post-update constraint: selected tensors whose L2 norm exceeds `limit`
// are rescaled to that norm.
struct WeightNormConstraint {
  double limit = 1.0;
  graph::RoleSet roles{graph::Role::Weight};

  bool selects(graph::RoleSet r) const noexcept { return roles.empty() || r.intersects(roles); }
  void apply(Array& param) const;

  nlohmann::json to_json() const;
  static WeightNormConstraint from_json(const nlohmann::json& j);
};

}  // namespace bf::steprules
