#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "bf/array.hpp"

namespace bf::graph {

enum class Role : std::uint8_t { Input, Output, Parameter, Weight, Bias, Auxiliary, Cost };

std::string_view role_name(Role r) noexcept;
Role role_from_name(std::string_view name);

// Plain bit set. The WEIGHT/BIAS => PARAMETER implication is applied when a
// variable is annotated, not here, so {WEIGHT} used as a filter stays narrow.
class RoleSet {
 public:
  RoleSet() = default;
  RoleSet(std::initializer_list<Role> roles);

  RoleSet& add(Role r) noexcept;
  RoleSet& merge(RoleSet other) noexcept;
  bool contains(Role r) const noexcept { return (bits_ >> static_cast<unsigned>(r)) & 1u; }
  bool intersects(RoleSet other) const noexcept { return (bits_ & other.bits_) != 0; }
  bool empty() const noexcept { return bits_ == 0; }
  std::vector<Role> roles() const;
  friend bool operator==(RoleSet, RoleSet) = default;

 private:
  std::uint32_t bits_ = 0;
};

// Symbolic batch axis. Any dimension equal to kBatch matches any runtime
// extent, but two kBatch dimensions must agree at evaluation time.
inline constexpr std::int64_t kBatch = -1;
using Dims = std::vector<std::int64_t>;
std::string dims_to_string(const Dims& d);

enum class Op : std::uint8_t {
  Input,
  Parameter,
  Constant,
  Alias,
  Add,
  Sub,
  Mul,
  MatMul,
  Tanh,
  Sigmoid,
  Relu,
  Softmax,
  Log,
  Square,
  Sum,
  Mean,
  CrossEntropy,
  Mse,
  Scale,
  Transpose,
  SumLeading,
  SelectStep,
  StackSteps,
  MaskBlend,
  Dropout,
  Noise,
  // Gradient helpers. They are not differentiable themselves.
  FillLike,
  MeanFillLike,
  BroadcastLeading,
  TanhGrad,
  SigmoidGrad,
  ReluGrad,
  SoftmaxGrad,
  LogGrad,
  SquareGrad,
  XentGradPred,
  XentGradTarget,
  MseGrad,
  EmbedStep,
  RowScale,
  RowScaleComplement,
  BlendMaskGrad,
  DropoutGrad,
};

std::string_view op_name(Op op) noexcept;

struct OpAttrs {
  double scalar = 0.0;    // Scale factor, dropout rate, noise std
  std::uint64_t seed = 0; // Dropout and Noise
  std::uint64_t key = 0;  // graph-local id of the rewritten variable
  std::int64_t index = 0; // SelectStep / EmbedStep
};

class Variable;

struct VariableNode {
  std::uint64_t uid = 0;
  Dims dims;
  RoleSet roles;
  std::string brick_path;
  std::string name;
  Op op = Op::Input;
  std::vector<Variable> inputs;
  OpAttrs attrs;
  std::shared_ptr<const Array> value;  // Constant only
  std::optional<std::uint64_t> primal; // uid of the variable this is a gradient of
};

class Variable {
 public:
  Variable() = default;
  explicit Variable(std::shared_ptr<const VariableNode> node) : node_(std::move(node)) {}

  bool valid() const noexcept { return node_ != nullptr; }
  std::uint64_t uid() const noexcept { return node_->uid; }
  const Dims& dims() const noexcept { return node_->dims; }
  std::size_t ndim() const noexcept { return node_->dims.size(); }
  RoleSet roles() const noexcept { return node_->roles; }
  bool has_role(Role r) const noexcept { return node_->roles.contains(r); }
  const std::string& brick_path() const noexcept { return node_->brick_path; }
  const std::string& name() const noexcept { return node_->name; }
  Op op() const noexcept { return node_->op; }
  const std::vector<Variable>& inputs() const noexcept { return node_->inputs; }
  const OpAttrs& attrs() const noexcept { return node_->attrs; }
  const VariableNode& node() const noexcept { return *node_; }
  std::optional<std::uint64_t> primal() const noexcept { return node_->primal; }
  bool is_leaf() const noexcept { return node_->inputs.empty(); }

  // "<brick_path>.<name>" for parameters, the plain name otherwise.
  std::string path() const;

  friend bool operator==(const Variable& a, const Variable& b) noexcept {
    return a.node_ == b.node_;
  }

 private:
  std::shared_ptr<const VariableNode> node_;
};

// --- build ops ---------------------------------------------------------

Variable input(std::string name, Dims dims);
Variable parameter(std::string name, Dims dims, RoleSet roles, std::string brick_path);
Variable constant(Array value);

Variable add(const Variable& a, const Variable& b);
Variable sub(const Variable& a, const Variable& b);
Variable mul(const Variable& a, const Variable& b);
Variable matmul(const Variable& a, const Variable& b);
Variable tanh(const Variable& x);
Variable sigmoid(const Variable& x);
Variable relu(const Variable& x);
Variable softmax(const Variable& x);
Variable log(const Variable& x);
Variable square(const Variable& x);
Variable sum(const Variable& x);
Variable mean(const Variable& x);
Variable cross_entropy(const Variable& pred, const Variable& target);
Variable mse(const Variable& pred, const Variable& target);

Variable scale(const Variable& x, double factor);
Variable transpose(const Variable& x);
Variable sum_leading(const Variable& x);
Variable select_step(const Variable& seq, std::int64_t t);
Variable stack_steps(const std::vector<Variable>& steps);
// mask[b] ? updated[b] : previous[b], blended as m*u + (1-m)*p.
Variable mask_blend(const Variable& mask, const Variable& updated, const Variable& previous);

// Same value, new annotations. Used by bricks to tag inputs and outputs.
Variable annotate(const Variable& x, RoleSet roles, std::string brick_path, std::string name = {});

// Generic op constructor with shape inference; the named builders above
// are thin wrappers around it.
Variable apply_op(Op op, std::vector<Variable> inputs, OpAttrs attrs = {});

// Rebuild a variable with different inputs, keeping op, attrs and
// annotations. Shapes are re-inferred.
Variable rebuild(const Variable& v, std::vector<Variable> inputs);

// --- graph -------------------------------------------------------------

class ComputationGraph {
 public:
  explicit ComputationGraph(std::vector<Variable> outputs);

  const std::vector<Variable>& outputs() const noexcept { return outputs_; }
  // All reachable variables, topologically ordered. The position of a
  // variable in this list is its graph-local id.
  const std::vector<Variable>& variables() const noexcept { return order_; }
  const std::vector<Variable>& inputs() const noexcept { return inputs_; }
  const std::vector<Variable>& parameters() const noexcept { return parameters_; }

  bool contains(const Variable& v) const noexcept;
  std::int64_t id_of(const Variable& v) const;
  std::optional<Variable> find_input(std::string_view name) const;

 private:
  std::vector<Variable> outputs_;
  std::vector<Variable> order_;
  std::vector<Variable> inputs_;
  std::vector<Variable> parameters_;
  std::unordered_map<std::uint64_t, std::int64_t> ids_;
};

class Bindings {
 public:
  void bind(const Variable& v, Array value);
  const Array* find(const Variable& v) const;

  // Mixed into dropout/noise seeds so masks can change per iteration.
  std::uint64_t salt = 0;

 private:
  std::unordered_map<std::uint64_t, Array> values_;
};

// Evaluates every output. Inputs and parameters must be bound.
std::vector<Array> forward(const ComputationGraph& cg, const Bindings& bindings);

// Number of node evaluations performed by the most recent forward() on this
// thread.
std::size_t last_forward_evaluations() noexcept;

// Reverse-mode gradients of a scalar cost. The returned variables are
// AUXILIARY and record their primal.
std::vector<Variable> grad(const Variable& cost, const std::vector<Variable>& wrt);

// --- queries and rewrites ---------------------------------------------

struct VariableFilter {
  RoleSet roles;                         // empty: any role
  std::optional<std::string> brick_name; // last path segment
  std::optional<std::string> ancestor;   // path prefix on segment boundary
};

std::vector<Variable> variable_filter(const ComputationGraph& cg, const VariableFilter& filter);

// Replace variables (keyed by uid) and rebuild everything downstream.
ComputationGraph replace(const ComputationGraph& cg,
                         const std::unordered_map<std::uint64_t, Variable>& replacements);

ComputationGraph apply_dropout(const ComputationGraph& cg, const std::vector<Variable>& variables,
                               double p, std::uint64_t seed);
ComputationGraph apply_weight_noise(const ComputationGraph& cg,
                                    const std::vector<Variable>& variables, double sigma,
                                    std::uint64_t seed);
Variable l2_penalty(const std::vector<Variable>& variables, double coefficient);

// Seed of the mask Rng for a rewritten variable.
std::uint64_t rewrite_seed(std::uint64_t seed, std::uint64_t key, std::uint64_t salt) noexcept;

}  // namespace bf::graph
