#include "bf/steprules.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "bf/error.hpp"

namespace bf::steprules {

namespace {

using Buffers = std::map<std::string, Array>;

const RuleKind kAllKinds[] = {RuleKind::Scale,    RuleKind::Momentum, RuleKind::GradientClipping,
                              RuleKind::AdaGrad,  RuleKind::RMSProp,  RuleKind::AdaDelta,
                              RuleKind::Adam};

void check_params(const StepRuleState& state, const TensorMap& grads) {
  for (const auto& [path, g] : grads) {
    auto it = state.shapes.find(path);
    if (it == state.shapes.end()) throw ContractError("gradient for unknown parameter '" + path + "'");
    if (it->second != g.shape()) {
      throw ContractError("gradient for '" + path + "' has shape " + shape_to_string(g.shape()) +
                          ", expected " + shape_to_string(it->second));
    }
  }
  for (const auto& [path, shape] : state.shapes) {
    if (!grads.count(path)) throw ContractError("missing gradient for parameter '" + path + "'");
  }
}

double get_or(const nlohmann::json& j, const char* key, double fallback) {
  return j.contains(key) ? j.at(key).get<double>() : fallback;
}

}  // namespace

std::string_view rule_name(RuleKind k) noexcept {
  switch (k) {
    case RuleKind::Scale: return "scale";
    case RuleKind::Momentum: return "momentum";
    case RuleKind::GradientClipping: return "gradient_clipping";
    case RuleKind::AdaGrad: return "adagrad";
    case RuleKind::RMSProp: return "rmsprop";
    case RuleKind::AdaDelta: return "adadelta";
    case RuleKind::Adam: return "adam";
  }
  return "?";
}

RuleKind rule_from_name(std::string_view name) {
  for (auto k : kAllKinds) {
    if (rule_name(k) == name) return k;
  }
  throw LookupError("unknown step rule '" + std::string(name) + "'");
}

StepRule StepRule::scale(double lr) {
  StepRule r;
  r.kind = RuleKind::Scale;
  r.learning_rate = lr;
  return r;
}

StepRule StepRule::momentum_rule(double m) {
  StepRule r;
  r.kind = RuleKind::Momentum;
  r.momentum = m;
  return r;
}

StepRule StepRule::gradient_clipping(double threshold) {
  if (!(threshold > 0.0)) throw ContractError("clipping threshold must be positive");
  StepRule r;
  r.kind = RuleKind::GradientClipping;
  r.threshold = threshold;
  return r;
}

StepRule StepRule::adagrad(double lr, double eps) {
  StepRule r;
  r.kind = RuleKind::AdaGrad;
  r.learning_rate = lr;
  r.epsilon = eps;
  return r;
}

StepRule StepRule::rmsprop(double lr, double rho, double eps) {
  StepRule r;
  r.kind = RuleKind::RMSProp;
  r.learning_rate = lr;
  r.decay = rho;
  r.epsilon = eps;
  return r;
}

StepRule StepRule::adadelta(double rho, double eps) {
  StepRule r;
  r.kind = RuleKind::AdaDelta;
  r.decay = rho;
  r.epsilon = eps;
  return r;
}

StepRule StepRule::adam(double alpha, double beta1, double beta2, double eps) {
  StepRule r;
  r.kind = RuleKind::Adam;
  r.learning_rate = alpha;
  r.beta1 = beta1;
  r.beta2 = beta2;
  r.epsilon = eps;
  return r;
}

std::vector<std::string> StepRule::buffer_names() const {
  switch (kind) {
    case RuleKind::Momentum: return {"velocity"};
    case RuleKind::AdaGrad: return {"sum_sq"};
    case RuleKind::RMSProp: return {"mean_sq"};
    case RuleKind::AdaDelta: return {"mean_sq_grad", "mean_sq_delta"};
    case RuleKind::Adam: return {"m", "v"};
    default: return {};
  }
}

nlohmann::json StepRule::to_json() const {
  nlohmann::ordered_json j;
  j["rule"] = rule_name(kind);
  switch (kind) {
    case RuleKind::Scale: j["learning_rate"] = learning_rate; break;
    case RuleKind::Momentum: j["momentum"] = momentum; break;
    case RuleKind::GradientClipping: j["threshold"] = threshold; break;
    case RuleKind::AdaGrad:
      j["learning_rate"] = learning_rate;
      j["epsilon"] = epsilon;
      break;
    case RuleKind::RMSProp:
      j["learning_rate"] = learning_rate;
      j["decay"] = decay;
      j["epsilon"] = epsilon;
      break;
    case RuleKind::AdaDelta:
      j["decay"] = decay;
      j["epsilon"] = epsilon;
      break;
    case RuleKind::Adam:
      j["alpha"] = learning_rate;
      j["beta1"] = beta1;
      j["beta2"] = beta2;
      j["epsilon"] = epsilon;
      break;
  }
  return nlohmann::json::parse(j.dump());
}

StepRule StepRule::from_json(const nlohmann::json& j) {
  try {
    switch (rule_from_name(j.at("rule").get<std::string>())) {
      case RuleKind::Scale: return scale(j.at("learning_rate").get<double>());
      case RuleKind::Momentum: return momentum_rule(get_or(j, "momentum", 0.9));
      case RuleKind::GradientClipping: return gradient_clipping(j.at("threshold").get<double>());
      case RuleKind::AdaGrad: return adagrad(get_or(j, "learning_rate", 0.01), get_or(j, "epsilon", 1e-6));
      case RuleKind::RMSProp:
        return rmsprop(get_or(j, "learning_rate", 1e-3), get_or(j, "decay", 0.9),
                       get_or(j, "epsilon", 1e-8));
      case RuleKind::AdaDelta: return adadelta(get_or(j, "decay", 0.95), get_or(j, "epsilon", 1e-6));
      case RuleKind::Adam:
        return adam(get_or(j, "alpha", 1e-3), get_or(j, "beta1", 0.9), get_or(j, "beta2", 0.999),
                    get_or(j, "epsilon", 1e-8));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("step rule: ") + e.what());
  }
  throw ContractError("step rule: unreachable");
}

nlohmann::json chain_to_json(const RuleChain& chain) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : chain) arr.push_back(r.to_json());
  return arr;
}

RuleChain chain_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ContractError("rule chain must be a JSON array");
  RuleChain out;
  for (const auto& r : j) out.push_back(StepRule::from_json(r));
  return out;
}

StepRuleState init_state(const RuleChain& chain, const std::map<std::string, Shape>& shapes) {
  StepRuleState s;
  s.shapes = shapes;
  s.buffers.resize(chain.size());
  for (std::size_t i = 0; i < chain.size(); ++i) {
    for (const auto& name : chain[i].buffer_names()) {
      for (const auto& [path, shape] : shapes) s.buffers[i][path][name] = Array(shape);
    }
  }
  return s;
}

std::pair<TensorMap, StepRuleState> compute_steps(const RuleChain& chain, const StepRuleState& state,
                                                  const TensorMap& grads) {
  check_params(state, grads);
  if (state.buffers.size() != chain.size()) {
    throw ContractError("step rule state has " + std::to_string(state.buffers.size()) +
                        " rule slots for a chain of " + std::to_string(chain.size()));
  }
  StepRuleState next = state;
  TensorMap steps = grads;
  for (const auto& r : chain) {
    if (r.kind == RuleKind::Adam) {
      next.t += 1;
      break;
    }
  }
  const double t = static_cast<double>(next.t);

  for (std::size_t ri = 0; ri < chain.size(); ++ri) {
    const StepRule& r = chain[ri];
    if (r.kind == RuleKind::GradientClipping) {
      double sq = 0.0;
      for (const auto& [path, s] : steps) {
        for (double v : s.values()) sq += v * v;
      }
      const double norm = std::sqrt(sq);
      if (norm > r.threshold) {
        for (auto& [path, s] : steps) {
          for (double& v : s.values()) v = v * r.threshold / norm;
        }
      }
      continue;
    }
    for (auto& [path, s] : steps) {
      Buffers& buf = next.buffers[ri][path];
      auto sv = s.values();
      switch (r.kind) {
        case RuleKind::Scale:
          for (double& v : sv) v = r.learning_rate * v;
          break;
        case RuleKind::Momentum: {
          auto vel = buf.at("velocity").values();
          for (std::size_t i = 0; i < sv.size(); ++i) {
            vel[i] = r.momentum * vel[i] + sv[i];
            sv[i] = vel[i];
          }
          break;
        }
        case RuleKind::AdaGrad: {
          auto a = buf.at("sum_sq").values();
          for (std::size_t i = 0; i < sv.size(); ++i) {
            a[i] = a[i] + sv[i] * sv[i];
            sv[i] = r.learning_rate * sv[i] / (std::sqrt(a[i]) + r.epsilon);
          }
          break;
        }
        case RuleKind::RMSProp: {
          auto a = buf.at("mean_sq").values();
          for (std::size_t i = 0; i < sv.size(); ++i) {
            a[i] = r.decay * a[i] + (1.0 - r.decay) * (sv[i] * sv[i]);
            sv[i] = r.learning_rate * sv[i] / (std::sqrt(a[i]) + r.epsilon);
          }
          break;
        }
        case RuleKind::AdaDelta: {
          auto ag = buf.at("mean_sq_grad").values();
          auto ad = buf.at("mean_sq_delta").values();
          for (std::size_t i = 0; i < sv.size(); ++i) {
            ag[i] = r.decay * ag[i] + (1.0 - r.decay) * (sv[i] * sv[i]);
            const double d = sv[i] * std::sqrt(ad[i] + r.epsilon) / std::sqrt(ag[i] + r.epsilon);
            ad[i] = r.decay * ad[i] + (1.0 - r.decay) * (d * d);
            sv[i] = d;
          }
          break;
        }
        case RuleKind::Adam: {
          auto m = buf.at("m").values();
          auto v = buf.at("v").values();
          const double c1 = 1.0 - std::pow(r.beta1, t);
          const double c2 = 1.0 - std::pow(r.beta2, t);
          for (std::size_t i = 0; i < sv.size(); ++i) {
            m[i] = r.beta1 * m[i] + (1.0 - r.beta1) * sv[i];
            v[i] = r.beta2 * v[i] + (1.0 - r.beta2) * (sv[i] * sv[i]);
            sv[i] = r.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + r.epsilon);
          }
          break;
        }
        case RuleKind::GradientClipping:
          break;
      }
    }
  }
  return {std::move(steps), std::move(next)};
}

void WeightNormConstraint::apply(Array& param) const {
  const double norm = param.norm();
  if (norm > limit && norm > 0.0) {
    const double f = limit / norm;
    for (double& v : param.values()) v *= f;
  }
}

nlohmann::json WeightNormConstraint::to_json() const {
  nlohmann::json roles_json = nlohmann::json::array();
  for (auto r : roles.roles()) roles_json.push_back(graph::role_name(r));
  return {{"limit", limit}, {"roles", roles_json}};
}

WeightNormConstraint WeightNormConstraint::from_json(const nlohmann::json& j) {
  WeightNormConstraint c;
  c.limit = j.at("limit").get<double>();
  if (!(c.limit > 0.0)) throw ContractError("weight norm limit must be positive");
  if (j.contains("roles")) {
    c.roles = {};
    for (const auto& r : j.at("roles")) c.roles.add(graph::role_from_name(r.get<std::string>()));
  }
  return c;
}

}  // namespace bf::steprules
