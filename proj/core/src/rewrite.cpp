#include <cmath>

#include "bf/error.hpp"
#include "bf/graph.hpp"

namespace bf::graph {

namespace {

std::string_view last_segment(std::string_view path) {
  auto pos = path.rfind('/');
  return pos == std::string_view::npos ? path : path.substr(pos + 1);
}

bool under(std::string_view path, std::string_view prefix) {
  if (prefix.empty() || prefix == "/") return true;
  if (path.substr(0, prefix.size()) != prefix) return false;
  return path.size() == prefix.size() || path[prefix.size()] == '/';
}

ComputationGraph wrap_each(const ComputationGraph& cg, const std::vector<Variable>& variables,
                           Op op, double scalar, std::uint64_t seed) {
  std::unordered_map<std::uint64_t, Variable> repl;
  for (const auto& v : variables) {
    OpAttrs attrs;
    attrs.scalar = scalar;
    attrs.seed = seed;
    attrs.key = static_cast<std::uint64_t>(cg.id_of(v));
    repl.emplace(v.uid(), apply_op(op, {v}, attrs));
  }
  return replace(cg, repl);
}

}  // namespace

std::vector<Variable> variable_filter(const ComputationGraph& cg, const VariableFilter& filter) {
  std::vector<Variable> out;
  for (const auto& v : cg.variables()) {
    if (!filter.roles.empty() && !v.roles().intersects(filter.roles)) continue;
    if (filter.brick_name && last_segment(v.brick_path()) != *filter.brick_name) continue;
    if (filter.ancestor && !under(v.brick_path(), *filter.ancestor)) continue;
    out.push_back(v);
  }
  return out;
}

ComputationGraph replace(const ComputationGraph& cg,
                         const std::unordered_map<std::uint64_t, Variable>& replacements) {
  std::unordered_map<std::uint64_t, Variable> mapped;
  auto lookup = [&](const Variable& v) {
    auto it = mapped.find(v.uid());
    return it == mapped.end() ? v : it->second;
  };
  for (const auto& v : cg.variables()) {
    if (auto r = replacements.find(v.uid()); r != replacements.end()) {
      mapped.emplace(v.uid(), r->second);
      continue;
    }
    bool changed = false;
    std::vector<Variable> inputs;
    inputs.reserve(v.inputs().size());
    for (const auto& u : v.inputs()) {
      inputs.push_back(lookup(u));
      changed = changed || !(inputs.back() == u);
    }
    if (changed) mapped.emplace(v.uid(), rebuild(v, std::move(inputs)));
  }
  std::vector<Variable> outputs;
  outputs.reserve(cg.outputs().size());
  for (const auto& o : cg.outputs()) outputs.push_back(lookup(o));
  return ComputationGraph(std::move(outputs));
}

ComputationGraph apply_dropout(const ComputationGraph& cg, const std::vector<Variable>& variables,
                               double p, std::uint64_t seed) {
  if (!(p >= 0.0 && p < 1.0)) throw ContractError("dropout rate must be in [0, 1)");
  return wrap_each(cg, variables, Op::Dropout, p, seed);
}

ComputationGraph apply_weight_noise(const ComputationGraph& cg,
                                    const std::vector<Variable>& variables, double sigma,
                                    std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw ContractError("noise std must be non-negative");
  return wrap_each(cg, variables, Op::Noise, sigma, seed);
}

Variable l2_penalty(const std::vector<Variable>& variables, double coefficient) {
  if (!(coefficient >= 0.0)) throw ContractError("l2 coefficient must be non-negative");
  Variable total;
  for (const auto& v : variables) {
    Variable s = sum(square(v));
    total = total.valid() ? add(total, s) : s;
  }
  Variable penalty = total.valid() ? scale(total, coefficient) : constant(Array::scalar(0.0));
  return annotate(penalty, RoleSet{Role::Cost}, "", "l2_penalty");
}

}  // namespace bf::graph
