#include <unordered_map>

#include "bf/error.hpp"
#include "bf/graph.hpp"

namespace bf::graph {

namespace {

// Reduce an adjoint of a broadcast operand back to the operand's shape.
Variable unbroadcast(const Variable& g, const Variable& operand) {
  return g.dims() == operand.dims() ? g : sum_leading(g);
}

}  // namespace

std::vector<Variable> grad(const Variable& cost, const std::vector<Variable>& wrt) {
  if (!cost.valid() || cost.ndim() != 0) {
    throw ContractError("grad: cost must be a scalar, got " +
                        (cost.valid() ? dims_to_string(cost.dims()) : std::string("null")));
  }
  ComputationGraph cg({cost});
  for (const auto& w : wrt) {
    if (!cg.contains(w)) {
      throw ContractError("grad: '" + (w.valid() ? w.path() : std::string()) +
                          "' is not reachable from the cost");
    }
  }

  std::unordered_map<std::uint64_t, Variable> adjoint;
  auto accumulate = [&](const Variable& v, const Variable& g) {
    auto [it, fresh] = adjoint.try_emplace(v.uid(), g);
    if (!fresh) it->second = add(it->second, g);
  };
  adjoint.emplace(cost.uid(), constant(Array::scalar(1.0)));

  const auto& order = cg.variables();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Variable& v = *it;
    auto found = adjoint.find(v.uid());
    if (found == adjoint.end() || v.is_leaf()) continue;
    const Variable g = found->second;
    const auto& in = v.inputs();
    switch (v.op()) {
      case Op::Alias:
      case Op::Noise:
        accumulate(in[0], g);
        break;
      case Op::Add:
        accumulate(in[0], g);
        accumulate(in[1], unbroadcast(g, in[1]));
        break;
      case Op::Sub:
        accumulate(in[0], g);
        accumulate(in[1], unbroadcast(scale(g, -1.0), in[1]));
        break;
      case Op::Mul:
        accumulate(in[0], mul(g, in[1]));
        accumulate(in[1], unbroadcast(mul(g, in[0]), in[1]));
        break;
      case Op::MatMul:
        accumulate(in[0], matmul(g, transpose(in[1])));
        accumulate(in[1], matmul(transpose(in[0]), g));
        break;
      case Op::Tanh:
        accumulate(in[0], apply_op(Op::TanhGrad, {v, g}));
        break;
      case Op::Sigmoid:
        accumulate(in[0], apply_op(Op::SigmoidGrad, {v, g}));
        break;
      case Op::Relu:
        accumulate(in[0], apply_op(Op::ReluGrad, {in[0], g}));
        break;
      case Op::Softmax:
        accumulate(in[0], apply_op(Op::SoftmaxGrad, {v, g}));
        break;
      case Op::Log:
        accumulate(in[0], apply_op(Op::LogGrad, {in[0], g}));
        break;
      case Op::Square:
        accumulate(in[0], apply_op(Op::SquareGrad, {in[0], g}));
        break;
      case Op::Sum:
        accumulate(in[0], apply_op(Op::FillLike, {g, in[0]}));
        break;
      case Op::Mean:
        accumulate(in[0], apply_op(Op::MeanFillLike, {g, in[0]}));
        break;
      case Op::CrossEntropy:
        accumulate(in[0], apply_op(Op::XentGradPred, {in[0], in[1], g}));
        accumulate(in[1], apply_op(Op::XentGradTarget, {in[0], g}));
        break;
      case Op::Mse: {
        Variable gp = apply_op(Op::MseGrad, {in[0], in[1], g});
        accumulate(in[0], gp);
        accumulate(in[1], scale(gp, -1.0));
        break;
      }
      case Op::Scale:
        accumulate(in[0], scale(g, v.attrs().scalar));
        break;
      case Op::Transpose:
        accumulate(in[0], transpose(g));
        break;
      case Op::SumLeading:
        accumulate(in[0], apply_op(Op::BroadcastLeading, {g, in[0]}));
        break;
      case Op::SelectStep:
        accumulate(in[0], apply_op(Op::EmbedStep, {g, in[0]}, v.attrs()));
        break;
      case Op::StackSteps:
        for (std::size_t t = 0; t < in.size(); ++t) {
          accumulate(in[t], select_step(g, static_cast<std::int64_t>(t)));
        }
        break;
      case Op::MaskBlend:
        accumulate(in[0], apply_op(Op::BlendMaskGrad, {in[1], in[2], g}));
        accumulate(in[1], apply_op(Op::RowScale, {in[0], g}));
        accumulate(in[2], apply_op(Op::RowScaleComplement, {in[0], g}));
        break;
      case Op::Dropout:
        accumulate(in[0], apply_op(Op::DropoutGrad, {g}, v.attrs()));
        break;
      default:
        throw ContractError("grad: op '" + std::string(op_name(v.op())) + "' is not differentiable");
    }
  }

  std::vector<Variable> out;
  out.reserve(wrt.size());
  for (const auto& w : wrt) {
    auto found = adjoint.find(w.uid());
    Variable g = found != adjoint.end() ? found->second : scale(w, 0.0);
    Variable a = annotate(g, RoleSet{Role::Auxiliary}, "", "grad_" + w.name());
    const_cast<VariableNode&>(a.node()).primal = w.uid();
    out.push_back(a);
  }
  return out;
}

}  // namespace bf::graph
