#include "bf/bricks.hpp"

#include "bf/error.hpp"

namespace bf::bricks {

using graph::Dims;
using graph::Role;
using graph::RoleSet;
using graph::Variable;

Brick::Brick(std::string name) : name_(std::move(name)) {
  if (name_.empty() || name_.find('/') != std::string::npos || name_.find('.') != std::string::npos) {
    throw ContractError("invalid brick name '" + name_ + "'");
  }
}

std::string Brick::path() const { return (parent_ ? parent_->path() : std::string()) + "/" + name_; }

void Brick::add_child(std::shared_ptr<Brick> child) {
  if (allocated_) throw ContractError("cannot attach '" + child->name_ + "' to allocated brick " + path());
  if (child->parent_) throw ContractError("brick '" + child->name_ + "' already has a parent");
  if (child->allocated_) throw ContractError("brick '" + child->name_ + "' is already allocated");
  for (const auto& c : children_) {
    if (c->name_ == child->name_) {
      throw ContractError("duplicate child '" + child->name_ + "' under " + path());
    }
  }
  child->parent_ = this;
  children_.push_back(std::move(child));
}

void Brick::declare(const std::string& name, Dims dims, RoleSet roles) {
  for (const auto& d : declarations_) {
    if (d.name == name) throw ContractError("duplicate parameter '" + name + "'");
  }
  declarations_.push_back({name, std::move(dims), roles, std::nullopt});
}

Initializer Brick::resolve_init(const Declaration& d) const {
  if (d.init) return *d.init;
  if (d.roles.contains(Role::Bias)) return biases_init_;
  return weights_init_;
}

void Brick::allocate() {
  if (!allocated_) {
    const std::string p = path();
    for (const auto& d : declarations_) {
      Parameter param;
      param.variable = graph::parameter(d.name, d.dims, d.roles, p);
      param.value = Array(Shape(d.dims.begin(), d.dims.end()));
      param.init = resolve_init(d);
      params_.push_back(std::move(param));
    }
    allocated_ = true;
  }
  for (auto& c : children_) c->allocate();
}

void Brick::set_weights_init(const Initializer& init) {
  weights_init_ = init;
  for (std::size_t i = 0; i < params_.size(); ++i) params_[i].init = resolve_init(declarations_[i]);
  for (auto& c : children_) c->set_weights_init(init);
}

void Brick::set_biases_init(const Initializer& init) {
  biases_init_ = init;
  for (std::size_t i = 0; i < params_.size(); ++i) params_[i].init = resolve_init(declarations_[i]);
  for (auto& c : children_) c->set_biases_init(init);
}

void Brick::set_init(const std::string& param_name, const Initializer& init) {
  for (std::size_t i = 0; i < declarations_.size(); ++i) {
    if (declarations_[i].name == param_name) {
      declarations_[i].init = init;
      if (allocated_) params_[i].init = init;
      return;
    }
  }
  throw LookupError("brick " + path() + " has no parameter '" + param_name + "'");
}

std::vector<Parameter*> Brick::own_parameters() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<Parameter*> Brick::all_parameters() {
  std::vector<Parameter*> out = own_parameters();
  for (auto& c : children_) {
    auto sub = c->all_parameters();
    out.insert(out.end(), sub.begin(), sub.end());
  }
  return out;
}

Parameter& Brick::parameter(const std::string& name) {
  require_allocated();
  for (auto& p : params_) {
    if (p.variable.name() == name) return p;
  }
  throw LookupError("brick " + path() + " has no parameter '" + name + "'");
}

const Variable& Brick::param(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.variable.name() == name) return p.variable;
  }
  throw LookupError("brick " + path() + " has no parameter '" + name + "'");
}

void Brick::require_allocated() const {
  if (!allocated_) throw ContractError("brick " + path() + " used before allocation");
}

Variable Brick::tag_input(const Variable& x, const std::string& name) const {
  return graph::annotate(x, RoleSet{Role::Input}, path(), name);
}

Variable Brick::tag_output(const Variable& y, const std::string& name) const {
  return graph::annotate(y, RoleSet{Role::Output}, path(), name);
}

// --- Linear --------------------------------------------------------------

Linear::Linear(std::string name, std::size_t in_dim, std::size_t out_dim)
    : Brick(std::move(name)), in_(in_dim), out_(out_dim) {
  const auto in = static_cast<std::int64_t>(in_dim);
  const auto out = static_cast<std::int64_t>(out_dim);
  declare("W", {in, out}, RoleSet{Role::Weight});
  declare("b", {out}, RoleSet{Role::Bias});
}

Variable Linear::apply(const Variable& x) const {
  require_allocated();
  if (x.ndim() != 2 || x.dims()[1] != static_cast<std::int64_t>(in_)) {
    throw ContractError("linear " + path() + ": expected [batch, " + std::to_string(in_) + "], got " +
                        graph::dims_to_string(x.dims()));
  }
  Variable in = tag_input(x);
  return tag_output(graph::add(graph::matmul(in, param("W")), param("b")));
}

// --- activations -----------------------------------------------------------

std::string_view activation_name(ActivationKind a) noexcept {
  switch (a) {
    case ActivationKind::Identity: return "identity";
    case ActivationKind::Tanh: return "tanh";
    case ActivationKind::Sigmoid: return "sigmoid";
    case ActivationKind::Relu: return "relu";
    case ActivationKind::Softmax: return "softmax";
  }
  return "?";
}

ActivationKind activation_from_name(std::string_view name) {
  for (auto a : {ActivationKind::Identity, ActivationKind::Tanh, ActivationKind::Sigmoid,
                 ActivationKind::Relu, ActivationKind::Softmax}) {
    if (activation_name(a) == name) return a;
  }
  throw LookupError("unknown activation '" + std::string(name) + "'");
}

Activation::Activation(std::string name, ActivationKind kind) : Brick(std::move(name)), kind_(kind) {}

Variable Activation::apply(const Variable& x) const {
  require_allocated();
  Variable in = tag_input(x);
  Variable y;
  switch (kind_) {
    case ActivationKind::Identity: y = in; break;
    case ActivationKind::Tanh: y = graph::tanh(in); break;
    case ActivationKind::Sigmoid: y = graph::sigmoid(in); break;
    case ActivationKind::Relu: y = graph::relu(in); break;
    case ActivationKind::Softmax: y = graph::softmax(in); break;
  }
  return tag_output(y);
}

// --- Mlp -------------------------------------------------------------------

Mlp::Mlp(std::string name, std::vector<std::size_t> dims, std::vector<ActivationKind> activations)
    : Brick(std::move(name)), dims_(std::move(dims)) {
  if (dims_.size() < 2) throw ContractError("mlp needs at least two dimensions");
  if (activations.size() + 1 != dims_.size()) {
    throw ContractError("mlp: " + std::to_string(dims_.size() - 1) + " layers but " +
                        std::to_string(activations.size()) + " activations");
  }
  for (std::size_t i = 0; i + 1 < dims_.size(); ++i) {
    auto lin = std::make_shared<Linear>("linear_" + std::to_string(i), dims_[i], dims_[i + 1]);
    auto act = std::make_shared<Activation>(
        std::string(activation_name(activations[i])) + "_" + std::to_string(i), activations[i]);
    add_child(lin);
    add_child(act);
    linears_.push_back(std::move(lin));
    activations_.push_back(std::move(act));
  }
}

Variable Mlp::apply(const Variable& x) const {
  require_allocated();
  Variable h = tag_input(x);
  for (std::size_t i = 0; i < linears_.size(); ++i) h = activations_[i]->apply(linears_[i]->apply(h));
  return tag_output(h);
}

std::size_t Mlp::parameter_count() const noexcept {
  std::size_t n = 0;
  for (std::size_t i = 0; i + 1 < dims_.size(); ++i) n += dims_[i] * dims_[i + 1] + dims_[i + 1];
  return n;
}

// --- SimpleRecurrent -------------------------------------------------------

SimpleRecurrent::SimpleRecurrent(std::string name, std::size_t dim) : Brick(std::move(name)), dim_(dim) {
  const auto d = static_cast<std::int64_t>(dim);
  declare("W_in", {d, d}, RoleSet{Role::Weight});
  declare("W_rec", {d, d}, RoleSet{Role::Weight});
  declare("b", {d}, RoleSet{Role::Bias});
}

Variable SimpleRecurrent::apply(const Variable& x, const Variable& mask) const {
  require_allocated();
  const auto d = static_cast<std::int64_t>(dim_);
  if (x.ndim() != 3 || x.dims()[2] != d || x.dims()[1] == graph::kBatch) {
    throw ContractError("simple_recurrent " + path() + ": expected [batch, time, " +
                        std::to_string(dim_) + "], got " + graph::dims_to_string(x.dims()));
  }
  if (mask.dims() != Dims{x.dims()[0], x.dims()[1]}) {
    throw ContractError("simple_recurrent " + path() + ": mask " + graph::dims_to_string(mask.dims()) +
                        " does not match " + graph::dims_to_string(x.dims()));
  }
  Variable in = tag_input(x);
  Variable m = tag_input(mask, "mask");
  const std::int64_t steps = x.dims()[1];
  std::vector<Variable> states;
  Variable h;
  for (std::int64_t t = 0; t < steps; ++t) {
    Variable pre = graph::add(graph::matmul(graph::select_step(in, t), param("W_in")), param("b"));
    if (h.valid()) {
      pre = graph::add(pre, graph::matmul(h, param("W_rec")));
    } else {
      h = graph::scale(pre, 0.0);
    }
    h = graph::mask_blend(graph::select_step(m, t), graph::tanh(pre), h);
    states.push_back(h);
  }
  return tag_output(graph::stack_steps(states));
}

}  // namespace bf::bricks
