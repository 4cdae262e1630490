#pragma once

#include <map>
#include <optional>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "bf/array.hpp"
#include "bf/graph.hpp"
#include "bf/rng.hpp"

namespace bf::bricks {

enum class InitKind { Constant, Uniform, Gaussian, Sparse, Orthogonal };

struct Initializer {
  InitKind kind = InitKind::Constant;
  double value = 0.0;   // constant, uniform half-width, or std
  std::size_t count = 0; // nonzeros per column (sparse)

  static Initializer constant(double c) { return {InitKind::Constant, c, 0}; }
  static Initializer uniform(double width) { return {InitKind::Uniform, width, 0}; }
  static Initializer gaussian(double std) { return {InitKind::Gaussian, std, 0}; }
  static Initializer sparse(std::size_t k, double std) { return {InitKind::Sparse, std, k}; }
  static Initializer orthogonal() { return {InitKind::Orthogonal, 1.0, 0}; }

  // {"scheme": "gaussian", "std": 0.1}, {"scheme": "sparse", "k": 3, "std": 1} ...
  nlohmann::json to_json() const;
  static Initializer from_json(const nlohmann::json& j);
  friend bool operator==(const Initializer&, const Initializer&) = default;
};

// Fills `a` in place. Draw order is row-major except for sparse, which
// proceeds column by column.
void initialize_array(Array& a, const Initializer& init, Rng& rng);

struct Parameter {
  graph::Variable variable;
  Array value;
  Initializer init;
  std::string path() const { return variable.path(); }
};

class Brick {
 public:
  explicit Brick(std::string name);
  virtual ~Brick() = default;
  Brick(const Brick&) = delete;
  Brick& operator=(const Brick&) = delete;

  const std::string& name() const noexcept { return name_; }
  std::string path() const;
  const Brick* parent() const noexcept { return parent_; }
  const std::vector<std::shared_ptr<Brick>>& children() const noexcept { return children_; }

  // Creates storage for this brick and every descendant. Idempotent.
  void allocate();
  bool allocated() const noexcept { return allocated_; }

  // Initializer used for WEIGHT / BIAS parameters of this subtree.
  void set_weights_init(const Initializer& init);
  void set_biases_init(const Initializer& init);
  // Override for one parameter of this brick, e.g. "W_rec".
  void set_init(const std::string& param_name, const Initializer& init);

  std::vector<Parameter*> own_parameters();
  // Pre-order: own parameters, then children in order.
  std::vector<Parameter*> all_parameters();
  Parameter& parameter(const std::string& name);

 protected:
  // Children must be attached before allocation so parameter paths are final.
  void add_child(std::shared_ptr<Brick> child);
  void declare(const std::string& name, graph::Dims dims, graph::RoleSet roles);
  const graph::Variable& param(const std::string& name) const;
  void require_allocated() const;
  graph::Variable tag_input(const graph::Variable& x, const std::string& name = "input_") const;
  graph::Variable tag_output(const graph::Variable& y, const std::string& name = "output") const;

 private:
  struct Declaration {
    std::string name;
    graph::Dims dims;
    graph::RoleSet roles;
    std::optional<Initializer> init;
  };
  Initializer resolve_init(const Declaration& d) const;

  std::string name_;
  Brick* parent_ = nullptr;
  std::vector<std::shared_ptr<Brick>> children_;
  std::vector<Declaration> declarations_;
  std::vector<Parameter> params_;
  // Weights default to CONSTANT(0) until configured; biases to CONSTANT(0).
  Initializer weights_init_ = Initializer::constant(0.0);
  Initializer biases_init_ = Initializer::constant(0.0);
  bool allocated_ = false;
};

// Recursively fills every parameter from its configured initializer. Order:
// pre-order over the tree, parameters in declaration order.
void initialize(Brick& brick, Rng& rng);
// Sets `weights` as the weight scheme of the whole tree, then initializes.
void initialize(Brick& brick, const Initializer& weights, Rng& rng);

class Linear : public Brick {
 public:
  Linear(std::string name, std::size_t in_dim, std::size_t out_dim);
  graph::Variable apply(const graph::Variable& x) const;
  std::size_t in_dim() const noexcept { return in_; }
  std::size_t out_dim() const noexcept { return out_; }

 private:
  std::size_t in_, out_;
};

enum class ActivationKind { Identity, Tanh, Sigmoid, Relu, Softmax };
std::string_view activation_name(ActivationKind a) noexcept;
ActivationKind activation_from_name(std::string_view name);

class Activation : public Brick {
 public:
  Activation(std::string name, ActivationKind kind);
  graph::Variable apply(const graph::Variable& x) const;
  ActivationKind kind() const noexcept { return kind_; }

 private:
  ActivationKind kind_;
};

class Mlp : public Brick {
 public:
  Mlp(std::string name, std::vector<std::size_t> dims, std::vector<ActivationKind> activations);
  graph::Variable apply(const graph::Variable& x) const;
  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  std::size_t parameter_count() const noexcept;

 private:
  std::vector<std::size_t> dims_;
  std::vector<std::shared_ptr<Linear>> linears_;
  std::vector<std::shared_ptr<Activation>> activations_;
};

// h_t = m_t * tanh(x_t W_in + h_{t-1} W_rec + b) + (1 - m_t) * h_{t-1}, h_0 = 0.
class SimpleRecurrent : public Brick {
 public:
  SimpleRecurrent(std::string name, std::size_t dim);
  // x: [batch, time, dim], mask: [batch, time]. Returns [batch, time, dim].
  graph::Variable apply(const graph::Variable& x, const graph::Variable& mask) const;
  std::size_t dim() const noexcept { return dim_; }

 private:
  std::size_t dim_;
};

}  // namespace bf::bricks
