#include "bf/graph.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "bf/error.hpp"
#include "bf/rng.hpp"

namespace bf::graph {

namespace {

std::atomic<std::uint64_t> g_next_uid{1};
thread_local std::size_t t_evaluations = 0;

constexpr std::string_view kRoleNames[] = {"INPUT", "OUTPUT",    "PARAMETER", "WEIGHT",
                                           "BIAS",  "AUXILIARY", "COST"};

[[noreturn]] void shape_error(Op op, const std::string& detail) {
  throw ContractError(std::string(op_name(op)) + ": " + detail);
}

Dims tail(const Dims& d) { return Dims(d.begin() + 1, d.end()); }

Dims infer(Op op, const std::vector<Variable>& in, const OpAttrs& attrs) {
  auto need = [&](std::size_t n) {
    if (in.size() != n) {
      shape_error(op, "expected " + std::to_string(n) + " inputs, got " + std::to_string(in.size()));
    }
  };
  auto same = [&](const Variable& a, const Variable& b) {
    if (a.dims() != b.dims()) {
      shape_error(op, "shape mismatch " + dims_to_string(a.dims()) + " vs " + dims_to_string(b.dims()));
    }
  };
  switch (op) {
    case Op::Input:
    case Op::Parameter:
    case Op::Constant:
      shape_error(op, "leaf shapes are not inferred");
    case Op::Alias:
    case Op::Tanh:
    case Op::Sigmoid:
    case Op::Relu:
    case Op::Log:
    case Op::Square:
    case Op::Scale:
    case Op::Dropout:
    case Op::Noise:
    case Op::DropoutGrad:
      need(1);
      return in[0].dims();
    case Op::Softmax:
      need(1);
      if (in[0].ndim() == 0) shape_error(op, "needs at least one axis");
      return in[0].dims();
    case Op::Add:
    case Op::Sub:
    case Op::Mul: {
      need(2);
      const Dims& a = in[0].dims();
      const Dims& b = in[1].dims();
      if (a == b) return a;
      if (!a.empty() && b == tail(a)) return a;
      shape_error(op, "unsupported broadcast " + dims_to_string(a) + " with " + dims_to_string(b));
    }
    case Op::MatMul: {
      need(2);
      const Dims& a = in[0].dims();
      const Dims& b = in[1].dims();
      if (a.size() != 2 || b.size() != 2) shape_error(op, "operands must be 2-D");
      if (a[1] != b[0]) {
        shape_error(op, "inner dimensions differ: " + dims_to_string(a) + " x " + dims_to_string(b));
      }
      return {a[0], b[1]};
    }
    case Op::Sum:
    case Op::Mean:
      need(1);
      return {};
    case Op::CrossEntropy:
      need(2);
      same(in[0], in[1]);
      if (in[0].ndim() != 2) shape_error(op, "expects [batch, classes]");
      return {};
    case Op::Mse:
      need(2);
      same(in[0], in[1]);
      return {};
    case Op::Transpose:
      need(1);
      if (in[0].ndim() != 2) shape_error(op, "operand must be 2-D");
      return {in[0].dims()[1], in[0].dims()[0]};
    case Op::SumLeading:
      need(1);
      if (in[0].ndim() == 0) shape_error(op, "needs a leading axis");
      return tail(in[0].dims());
    case Op::SelectStep: {
      need(1);
      const Dims& d = in[0].dims();
      if (d.size() < 2) shape_error(op, "expects [batch, time, ...]");
      if (attrs.index < 0 || (d[1] != kBatch && attrs.index >= d[1])) {
        shape_error(op, "step " + std::to_string(attrs.index) + " out of range");
      }
      Dims out{d[0]};
      out.insert(out.end(), d.begin() + 2, d.end());
      return out;
    }
    case Op::StackSteps: {
      if (in.empty()) shape_error(op, "needs at least one step");
      for (const auto& v : in) same(in[0], v);
      const Dims& d = in[0].dims();
      if (d.empty()) shape_error(op, "steps need a batch axis");
      Dims out{d[0], static_cast<std::int64_t>(in.size())};
      out.insert(out.end(), d.begin() + 1, d.end());
      return out;
    }
    case Op::MaskBlend:
      need(3);
      same(in[1], in[2]);
      if (in[0].ndim() != 1 || in[1].ndim() < 1 || in[0].dims()[0] != in[1].dims()[0]) {
        shape_error(op, "mask " + dims_to_string(in[0].dims()) + " does not match " +
                            dims_to_string(in[1].dims()));
      }
      return in[1].dims();
    case Op::FillLike:
    case Op::MeanFillLike:
      need(2);
      if (in[0].ndim() != 0) shape_error(op, "fill value must be scalar");
      return in[1].dims();
    case Op::BroadcastLeading:
      need(2);
      if (in[1].ndim() == 0 || in[0].dims() != tail(in[1].dims())) {
        shape_error(op, "cannot broadcast " + dims_to_string(in[0].dims()) + " to " +
                            dims_to_string(in[1].dims()));
      }
      return in[1].dims();
    case Op::TanhGrad:
    case Op::SigmoidGrad:
    case Op::ReluGrad:
    case Op::SoftmaxGrad:
    case Op::LogGrad:
    case Op::SquareGrad:
      need(2);
      same(in[0], in[1]);
      return in[0].dims();
    case Op::XentGradPred:
    case Op::MseGrad:
      need(3);
      same(in[0], in[1]);
      return in[0].dims();
    case Op::XentGradTarget:
      need(2);
      return in[0].dims();
    case Op::EmbedStep:
      need(2);
      return in[1].dims();
    case Op::RowScale:
    case Op::RowScaleComplement:
      need(2);
      if (in[0].ndim() != 1 || in[1].ndim() < 1 || in[0].dims()[0] != in[1].dims()[0]) {
        shape_error(op, "row scale mismatch");
      }
      return in[1].dims();
    case Op::BlendMaskGrad:
      need(3);
      same(in[0], in[1]);
      same(in[0], in[2]);
      return {in[0].dims()[0]};
  }
  shape_error(op, "unknown op");
}

Variable make(Op op, std::vector<Variable> inputs, OpAttrs attrs = {}) {
  for (const auto& v : inputs) {
    if (!v.valid()) throw ContractError(std::string(op_name(op)) + ": null input");
  }
  auto node = std::make_shared<VariableNode>();
  node->dims = infer(op, inputs, attrs);
  node->uid = g_next_uid++;
  node->op = op;
  node->inputs = std::move(inputs);
  node->attrs = attrs;
  return Variable(std::move(node));
}

Variable make_leaf(Op op, std::string name, Dims dims, RoleSet roles, std::string path) {
  for (auto d : dims) {
    if (d < 0 && d != kBatch) throw ContractError("invalid dimension " + std::to_string(d));
  }
  auto node = std::make_shared<VariableNode>();
  node->uid = g_next_uid++;
  node->op = op;
  node->dims = std::move(dims);
  node->roles = roles;
  node->name = std::move(name);
  node->brick_path = std::move(path);
  return Variable(std::move(node));
}

}  // namespace

// --- roles ---------------------------------------------------------------

std::string_view role_name(Role r) noexcept { return kRoleNames[static_cast<unsigned>(r)]; }

Role role_from_name(std::string_view name) {
  for (unsigned i = 0; i < std::size(kRoleNames); ++i) {
    if (kRoleNames[i] == name) return static_cast<Role>(i);
  }
  throw LookupError("unknown role '" + std::string(name) + "'");
}

RoleSet::RoleSet(std::initializer_list<Role> roles) {
  for (Role r : roles) add(r);
}

RoleSet& RoleSet::add(Role r) noexcept {
  bits_ |= 1u << static_cast<unsigned>(r);
  return *this;
}

RoleSet& RoleSet::merge(RoleSet other) noexcept {
  bits_ |= other.bits_;
  return *this;
}

std::vector<Role> RoleSet::roles() const {
  std::vector<Role> out;
  for (unsigned i = 0; i < std::size(kRoleNames); ++i) {
    if (contains(static_cast<Role>(i))) out.push_back(static_cast<Role>(i));
  }
  return out;
}

std::string dims_to_string(const Dims& d) {
  std::string s = "[";
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (i) s += ", ";
    s += d[i] == kBatch ? std::string("batch") : std::to_string(d[i]);
  }
  return s + "]";
}

std::string_view op_name(Op op) noexcept {
  switch (op) {
    case Op::Input: return "input";
    case Op::Parameter: return "parameter";
    case Op::Constant: return "constant";
    case Op::Alias: return "alias";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::MatMul: return "matmul";
    case Op::Tanh: return "tanh";
    case Op::Sigmoid: return "sigmoid";
    case Op::Relu: return "relu";
    case Op::Softmax: return "softmax";
    case Op::Log: return "log";
    case Op::Square: return "square";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::CrossEntropy: return "cross_entropy";
    case Op::Mse: return "mse";
    case Op::Scale: return "scale";
    case Op::Transpose: return "transpose";
    case Op::SumLeading: return "sum_leading";
    case Op::SelectStep: return "select_step";
    case Op::StackSteps: return "stack_steps";
    case Op::MaskBlend: return "mask_blend";
    case Op::Dropout: return "dropout";
    case Op::Noise: return "noise";
    case Op::FillLike: return "fill_like";
    case Op::MeanFillLike: return "mean_fill_like";
    case Op::BroadcastLeading: return "broadcast_leading";
    case Op::TanhGrad: return "tanh_grad";
    case Op::SigmoidGrad: return "sigmoid_grad";
    case Op::ReluGrad: return "relu_grad";
    case Op::SoftmaxGrad: return "softmax_grad";
    case Op::LogGrad: return "log_grad";
    case Op::SquareGrad: return "square_grad";
    case Op::XentGradPred: return "xent_grad_pred";
    case Op::XentGradTarget: return "xent_grad_target";
    case Op::MseGrad: return "mse_grad";
    case Op::EmbedStep: return "embed_step";
    case Op::RowScale: return "row_scale";
    case Op::RowScaleComplement: return "row_scale_complement";
    case Op::BlendMaskGrad: return "blend_mask_grad";
    case Op::DropoutGrad: return "dropout_grad";
  }
  return "?";
}

std::string Variable::path() const {
  if (node_->brick_path.empty()) return node_->name;
  return node_->brick_path + "." + node_->name;
}

// --- builders --------------------------------------------------------------

Variable input(std::string name, Dims dims) {
  return make_leaf(Op::Input, std::move(name), std::move(dims), RoleSet{Role::Input}, "");
}

Variable parameter(std::string name, Dims dims, RoleSet roles, std::string brick_path) {
  for (auto d : dims) {
    if (d == kBatch) throw ContractError("parameter '" + name + "' cannot have a batch axis");
  }
  roles.add(Role::Parameter);
  return make_leaf(Op::Parameter, std::move(name), std::move(dims), roles, std::move(brick_path));
}

Variable constant(Array value) {
  Dims dims(value.shape().begin(), value.shape().end());
  auto node = std::make_shared<VariableNode>();
  node->uid = g_next_uid++;
  node->op = Op::Constant;
  node->dims = std::move(dims);
  node->value = std::make_shared<const Array>(std::move(value));
  return Variable(std::move(node));
}

Variable apply_op(Op op, std::vector<Variable> inputs, OpAttrs attrs) {
  if (op == Op::Input || op == Op::Parameter || op == Op::Constant) {
    throw ContractError("apply_op: leaves have dedicated builders");
  }
  return make(op, std::move(inputs), attrs);
}

Variable add(const Variable& a, const Variable& b) { return make(Op::Add, {a, b}); }
Variable sub(const Variable& a, const Variable& b) { return make(Op::Sub, {a, b}); }
Variable mul(const Variable& a, const Variable& b) { return make(Op::Mul, {a, b}); }
Variable matmul(const Variable& a, const Variable& b) { return make(Op::MatMul, {a, b}); }
Variable tanh(const Variable& x) { return make(Op::Tanh, {x}); }
Variable sigmoid(const Variable& x) { return make(Op::Sigmoid, {x}); }
Variable relu(const Variable& x) { return make(Op::Relu, {x}); }
Variable softmax(const Variable& x) { return make(Op::Softmax, {x}); }
Variable log(const Variable& x) { return make(Op::Log, {x}); }
Variable square(const Variable& x) { return make(Op::Square, {x}); }
Variable sum(const Variable& x) { return make(Op::Sum, {x}); }
Variable mean(const Variable& x) { return make(Op::Mean, {x}); }
Variable cross_entropy(const Variable& pred, const Variable& target) {
  return make(Op::CrossEntropy, {pred, target});
}
Variable mse(const Variable& pred, const Variable& target) { return make(Op::Mse, {pred, target}); }

Variable scale(const Variable& x, double factor) {
  OpAttrs a;
  a.scalar = factor;
  return make(Op::Scale, {x}, a);
}
Variable transpose(const Variable& x) { return make(Op::Transpose, {x}); }
Variable sum_leading(const Variable& x) { return make(Op::SumLeading, {x}); }
Variable select_step(const Variable& seq, std::int64_t t) {
  OpAttrs a;
  a.index = t;
  return make(Op::SelectStep, {seq}, a);
}
Variable stack_steps(const std::vector<Variable>& steps) { return make(Op::StackSteps, steps); }
Variable mask_blend(const Variable& mask, const Variable& updated, const Variable& previous) {
  return make(Op::MaskBlend, {mask, updated, previous});
}

Variable annotate(const Variable& x, RoleSet roles, std::string brick_path, std::string name) {
  Variable v = make(Op::Alias, {x});
  auto& node = const_cast<VariableNode&>(v.node());
  if (roles.contains(Role::Weight) || roles.contains(Role::Bias)) roles.add(Role::Parameter);
  node.roles = roles;
  node.brick_path = std::move(brick_path);
  node.name = name.empty() ? x.name() : std::move(name);
  return v;
}

Variable rebuild(const Variable& v, std::vector<Variable> inputs) {
  if (v.is_leaf()) return v;
  Variable out = make(v.op(), std::move(inputs), v.attrs());
  auto& node = const_cast<VariableNode&>(out.node());
  node.roles = v.roles();
  node.brick_path = v.brick_path();
  node.name = v.name();
  node.primal = v.primal();
  return out;
}

// --- graph -------------------------------------------------------------

ComputationGraph::ComputationGraph(std::vector<Variable> outputs) : outputs_(std::move(outputs)) {
  std::unordered_set<std::uint64_t> done;
  std::unordered_set<std::uint64_t> on_stack;
  struct Frame {
    Variable v;
    std::size_t next = 0;
  };
  for (const auto& out : outputs_) {
    if (!out.valid()) throw ContractError("graph: null output");
    if (done.count(out.uid())) continue;
    std::vector<Frame> stack{{out}};
    on_stack.insert(out.uid());
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next < f.v.inputs().size()) {
        const Variable& child = f.v.inputs()[f.next++];
        if (done.count(child.uid())) continue;
        if (!on_stack.insert(child.uid()).second) throw ContractError("graph: cycle detected");
        stack.push_back({child});
        continue;
      }
      done.insert(f.v.uid());
      on_stack.erase(f.v.uid());
      ids_.emplace(f.v.uid(), static_cast<std::int64_t>(order_.size()));
      order_.push_back(f.v);
      if (f.v.op() == Op::Input) inputs_.push_back(f.v);
      if (f.v.op() == Op::Parameter) parameters_.push_back(f.v);
      stack.pop_back();
    }
  }
}

bool ComputationGraph::contains(const Variable& v) const noexcept {
  return v.valid() && ids_.count(v.uid()) != 0;
}

std::int64_t ComputationGraph::id_of(const Variable& v) const {
  auto it = v.valid() ? ids_.find(v.uid()) : ids_.end();
  if (it == ids_.end()) throw LookupError("variable '" + (v.valid() ? v.name() : "") + "' is not in the graph");
  return it->second;
}

std::optional<Variable> ComputationGraph::find_input(std::string_view name) const {
  for (const auto& v : inputs_) {
    if (v.name() == name) return v;
  }
  return std::nullopt;
}

void Bindings::bind(const Variable& v, Array value) { values_[v.uid()] = std::move(value); }

const Array* Bindings::find(const Variable& v) const {
  auto it = values_.find(v.uid());
  return it == values_.end() ? nullptr : &it->second;
}

std::uint64_t rewrite_seed(std::uint64_t seed, std::uint64_t key, std::uint64_t salt) noexcept {
  std::uint64_t s = derive_seed(seed, key);
  return salt == 0 ? s : derive_seed(s, salt);
}

// --- evaluation ----------------------------------------------------------

namespace {

[[noreturn]] void runtime_error(Op op, const std::string& detail) {
  throw ContractError(std::string(op_name(op)) + ": " + detail);
}

void require_same(Op op, const Array& a, const Array& b) {
  if (a.shape() != b.shape()) {
    runtime_error(op, "shape mismatch " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  }
}

Shape tail_shape(const Shape& s) { return Shape(s.begin() + 1, s.end()); }

template <class F>
Array map1(const Array& x, F f) {
  Array out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

template <class F>
Array map2(Op op, const Array& a, const Array& b, F f) {
  require_same(op, a, b);
  Array out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

template <class F>
Array broadcast2(Op op, const Array& a, const Array& b, F f) {
  if (a.shape() == b.shape()) return map2(op, a, b, f);
  if (a.ndim() == 0 || b.shape() != tail_shape(a.shape())) {
    runtime_error(op, "unsupported broadcast " + shape_to_string(a.shape()) + " with " +
                          shape_to_string(b.shape()));
  }
  Array out(a.shape());
  const std::size_t inner = b.size();
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[inner ? i % inner : 0]);
  return out;
}

// Splits a shape into (rows over leading axis, row width).
std::pair<std::size_t, std::size_t> rows_of(const Array& a) {
  const std::size_t rows = a.ndim() == 0 ? 1 : a.shape()[0];
  return {rows, rows ? a.size() / rows : 0};
}

std::size_t last_axis(const Array& a) { return a.ndim() == 0 ? 1 : a.shape().back(); }

Array dropout_mask_apply(const Array& x, const OpAttrs& attrs, std::uint64_t salt) {
  Rng rng(rewrite_seed(attrs.seed, attrs.key, salt));
  const double keep = 1.0 - attrs.scalar;
  const double factor = 1.0 / keep;
  Array out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = rng.uniform() < keep ? x[i] * factor : 0.0;
  return out;
}

Array evaluate(const Variable& v, const std::vector<const Array*>& in, std::uint64_t salt) {
  const Op op = v.op();
  const OpAttrs& at = v.attrs();
  switch (op) {
    case Op::Input:
    case Op::Parameter:
    case Op::Constant:
      break;
    case Op::Alias:
      return *in[0];
    case Op::Add:
      return broadcast2(op, *in[0], *in[1], [](double a, double b) { return a + b; });
    case Op::Sub:
      return broadcast2(op, *in[0], *in[1], [](double a, double b) { return a - b; });
    case Op::Mul:
      return broadcast2(op, *in[0], *in[1], [](double a, double b) { return a * b; });
    case Op::MatMul: {
      const Array& a = *in[0];
      const Array& b = *in[1];
      if (a.ndim() != 2 || b.ndim() != 2 || a.shape()[1] != b.shape()[0]) {
        runtime_error(op, "cannot multiply " + shape_to_string(a.shape()) + " by " +
                              shape_to_string(b.shape()));
      }
      const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
      Array out(Shape{m, n});
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          double s = 0.0;
          for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
          out[i * n + j] = s;
        }
      }
      return out;
    }
    case Op::Tanh:
      return map1(*in[0], [](double x) { return std::tanh(x); });
    case Op::Sigmoid:
      return map1(*in[0], [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    case Op::Relu:
      return map1(*in[0], [](double x) { return x > 0.0 ? x : 0.0; });
    case Op::Softmax: {
      const Array& x = *in[0];
      Array out(x.shape());
      const std::size_t w = last_axis(x);
      for (std::size_t r = 0; w && r < x.size() / w; ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < w; ++j) mx = std::max(mx, x[r * w + j]);
        double s = 0.0;
        for (std::size_t j = 0; j < w; ++j) {
          out[r * w + j] = std::exp(x[r * w + j] - mx);
          s += out[r * w + j];
        }
        for (std::size_t j = 0; j < w; ++j) out[r * w + j] /= s;
      }
      return out;
    }
    case Op::Log:
      return map1(*in[0], [](double x) { return std::log(x); });
    case Op::Square:
      return map1(*in[0], [](double x) { return x * x; });
    case Op::Sum: {
      double s = 0.0;
      for (double x : in[0]->values()) s += x;
      return Array::scalar(s);
    }
    case Op::Mean: {
      double s = 0.0;
      for (double x : in[0]->values()) s += x;
      return Array::scalar(s / static_cast<double>(in[0]->size()));
    }
    case Op::CrossEntropy: {
      require_same(op, *in[0], *in[1]);
      const Array& p = *in[0];
      const Array& t = *in[1];
      double s = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) s += t[i] * std::log(p[i]);
      return Array::scalar(-s / static_cast<double>(p.shape()[0]));
    }
    case Op::Mse: {
      require_same(op, *in[0], *in[1]);
      double s = 0.0;
      for (std::size_t i = 0; i < in[0]->size(); ++i) {
        const double d = (*in[0])[i] - (*in[1])[i];
        s += d * d;
      }
      return Array::scalar(s / static_cast<double>(in[0]->size()));
    }
    case Op::Scale:
      return map1(*in[0], [c = at.scalar](double x) { return c * x; });
    case Op::Transpose: {
      const Array& x = *in[0];
      const std::size_t r = x.shape()[0], c = x.shape()[1];
      Array out(Shape{c, r});
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
      }
      return out;
    }
    case Op::SumLeading: {
      const Array& x = *in[0];
      auto [rows, w] = rows_of(x);
      Array out(tail_shape(x.shape()));
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < w; ++j) out[j] += x[r * w + j];
      }
      return out;
    }
    case Op::SelectStep: {
      const Array& x = *in[0];
      const std::size_t b = x.shape()[0], steps = x.shape()[1];
      const auto t = static_cast<std::size_t>(at.index);
      if (t >= steps) runtime_error(op, "step out of range");
      Shape s{b};
      s.insert(s.end(), x.shape().begin() + 2, x.shape().end());
      Array out(s);
      const std::size_t w = b ? out.size() / b : 0;
      for (std::size_t i = 0; i < b; ++i) {
        std::copy_n(x.values().begin() + static_cast<std::ptrdiff_t>((i * steps + t) * w), w,
                    out.values().begin() + static_cast<std::ptrdiff_t>(i * w));
      }
      return out;
    }
    case Op::StackSteps: {
      const Array& first = *in[0];
      for (const Array* a : in) require_same(op, first, *a);
      const std::size_t b = first.shape()[0], steps = in.size();
      const std::size_t w = b ? first.size() / b : 0;
      Shape s{b, steps};
      s.insert(s.end(), first.shape().begin() + 1, first.shape().end());
      Array out(s);
      for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t i = 0; i < b; ++i) {
          std::copy_n(in[t]->values().begin() + static_cast<std::ptrdiff_t>(i * w), w,
                      out.values().begin() + static_cast<std::ptrdiff_t>((i * steps + t) * w));
        }
      }
      return out;
    }
    case Op::MaskBlend: {
      const Array& m = *in[0];
      const Array& u = *in[1];
      const Array& p = *in[2];
      require_same(op, u, p);
      auto [rows, w] = rows_of(u);
      if (m.ndim() != 1 || m.size() != rows) runtime_error(op, "mask does not match batch");
      Array out(u.shape());
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < w; ++j) {
          out[r * w + j] = m[r] * u[r * w + j] + (1.0 - m[r]) * p[r * w + j];
        }
      }
      return out;
    }
    case Op::Dropout:
    case Op::DropoutGrad:
      return dropout_mask_apply(*in[0], at, salt);
    case Op::Noise: {
      Rng rng(rewrite_seed(at.seed, at.key, salt));
      return map1(*in[0], [&](double x) { return x + at.scalar * rng.normal(); });
    }
    case Op::FillLike:
      return Array(in[1]->shape(), in[0]->item());
    case Op::MeanFillLike:
      return Array(in[1]->shape(), in[0]->item() / static_cast<double>(in[1]->size()));
    case Op::BroadcastLeading: {
      const Array& g = *in[0];
      const Array& ref = *in[1];
      if (g.shape() != tail_shape(ref.shape())) runtime_error(op, "shape mismatch");
      Array out(ref.shape());
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = g[g.size() ? i % g.size() : 0];
      return out;
    }
    case Op::TanhGrad:
      return map2(op, *in[0], *in[1], [](double y, double g) { return g * (1.0 - y * y); });
    case Op::SigmoidGrad:
      return map2(op, *in[0], *in[1], [](double y, double g) { return g * y * (1.0 - y); });
    case Op::ReluGrad:
      return map2(op, *in[0], *in[1], [](double x, double g) { return x > 0.0 ? g : 0.0; });
    case Op::SoftmaxGrad: {
      const Array& y = *in[0];
      const Array& g = *in[1];
      require_same(op, y, g);
      Array out(y.shape());
      const std::size_t w = last_axis(y);
      for (std::size_t r = 0; w && r < y.size() / w; ++r) {
        double dot = 0.0;
        for (std::size_t j = 0; j < w; ++j) dot += g[r * w + j] * y[r * w + j];
        for (std::size_t j = 0; j < w; ++j) out[r * w + j] = y[r * w + j] * (g[r * w + j] - dot);
      }
      return out;
    }
    case Op::LogGrad:
      return map2(op, *in[0], *in[1], [](double x, double g) { return g / x; });
    case Op::SquareGrad:
      return map2(op, *in[0], *in[1], [](double x, double g) { return 2.0 * x * g; });
    case Op::XentGradPred: {
      const double b = static_cast<double>(in[0]->shape()[0]);
      const double g = in[2]->item();
      return map2(op, *in[0], *in[1], [&](double p, double t) { return -g * t / p / b; });
    }
    case Op::XentGradTarget: {
      const double b = static_cast<double>(in[0]->shape()[0]);
      const double g = in[1]->item();
      return map1(*in[0], [&](double p) { return -g * std::log(p) / b; });
    }
    case Op::MseGrad: {
      const double n = static_cast<double>(in[0]->size());
      const double g = in[2]->item();
      return map2(op, *in[0], *in[1], [&](double p, double t) { return g * 2.0 * (p - t) / n; });
    }
    case Op::EmbedStep: {
      const Array& g = *in[0];
      const Array& ref = *in[1];
      const std::size_t b = ref.shape()[0], steps = ref.shape()[1];
      const auto t = static_cast<std::size_t>(at.index);
      Array out(ref.shape());
      const std::size_t w = b ? g.size() / b : 0;
      for (std::size_t i = 0; i < b; ++i) {
        std::copy_n(g.values().begin() + static_cast<std::ptrdiff_t>(i * w), w,
                    out.values().begin() + static_cast<std::ptrdiff_t>((i * steps + t) * w));
      }
      return out;
    }
    case Op::RowScale:
    case Op::RowScaleComplement: {
      const Array& m = *in[0];
      const Array& g = *in[1];
      auto [rows, w] = rows_of(g);
      if (m.size() != rows) runtime_error(op, "mask does not match batch");
      Array out(g.shape());
      for (std::size_t r = 0; r < rows; ++r) {
        const double f = op == Op::RowScale ? m[r] : 1.0 - m[r];
        for (std::size_t j = 0; j < w; ++j) out[r * w + j] = f * g[r * w + j];
      }
      return out;
    }
    case Op::BlendMaskGrad: {
      const Array& u = *in[0];
      const Array& p = *in[1];
      const Array& g = *in[2];
      auto [rows, w] = rows_of(u);
      Array out(Shape{rows});
      for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < w; ++j) s += g[r * w + j] * (u[r * w + j] - p[r * w + j]);
        out[r] = s;
      }
      return out;
    }
  }
  runtime_error(op, "cannot evaluate");
}

void check_bound(const Variable& v, const Array& a, std::optional<std::size_t>& batch) {
  const Dims& d = v.dims();
  bool ok = d.size() == a.ndim();
  for (std::size_t i = 0; ok && i < d.size(); ++i) {
    if (d[i] == kBatch) {
      if (batch && *batch != a.shape()[i]) ok = false;
      batch = a.shape()[i];
    } else if (static_cast<std::size_t>(d[i]) != a.shape()[i]) {
      ok = false;
    }
  }
  if (!ok) {
    throw ContractError("binding for '" + v.name() + "' has shape " + shape_to_string(a.shape()) +
                        ", expected " + dims_to_string(d));
  }
}

}  // namespace

std::vector<Array> forward(const ComputationGraph& cg, const Bindings& bindings) {
  const auto& order = cg.variables();
  std::vector<Array> values(order.size());
  std::vector<const Array*> refs(order.size(), nullptr);
  std::optional<std::size_t> batch;
  t_evaluations = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const Variable& v = order[i];
    if (v.op() == Op::Input || v.op() == Op::Parameter) {
      const Array* bound = bindings.find(v);
      if (!bound) {
        throw ContractError(std::string(v.op() == Op::Input ? "input" : "parameter") + " '" +
                            v.path() + "' is not bound");
      }
      check_bound(v, *bound, batch);
      refs[i] = bound;
      continue;
    }
    if (v.op() == Op::Constant) {
      refs[i] = v.node().value.get();
      continue;
    }
    std::vector<const Array*> in;
    in.reserve(v.inputs().size());
    for (const auto& u : v.inputs()) in.push_back(refs[static_cast<std::size_t>(cg.id_of(u))]);
    values[i] = evaluate(v, in, bindings.salt);
    refs[i] = &values[i];
    ++t_evaluations;
  }
  std::vector<Array> out;
  out.reserve(cg.outputs().size());
  for (const auto& o : cg.outputs()) out.push_back(*refs[static_cast<std::size_t>(cg.id_of(o))]);
  return out;
}

std::size_t last_forward_evaluations() noexcept { return t_evaluations; }

}  // namespace bf::graph
