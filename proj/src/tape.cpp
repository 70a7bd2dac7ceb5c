#include "dbp/tape.hpp"

#include "dbp/errors.hpp"

namespace dbp {

Var Tape::leaf(Tensor value) {
  if (!recording_) return Var(std::move(value));
  nodes_.push_back(Node{"leaf", {}, {}, {}});
  return Var(std::move(value), this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(std::string op, Tensor value, std::initializer_list<const Var*> inputs, VjpFn vjp) {
  return record(std::move(op), std::move(value), std::vector<const Var*>(inputs), std::move(vjp));
}

Var Tape::record(std::string op, Tensor value, const std::vector<const Var*>& inputs, VjpFn vjp) {
  if (!recording_) return Var(std::move(value));
  bool any_tracked = false;
  Node node{std::move(op), {}, {}, std::move(vjp)};
  node.inputs.reserve(inputs.size());
  node.input_shapes.reserve(inputs.size());
  for (const Var* in : inputs) {
    if (in->tracked()) {
      if (in->tape() != this) {
        throw StructuralError("op '" + node.op + "' mixes vars from different tapes");
      }
      if (in->node() >= static_cast<int>(nodes_.size())) {
        throw StructuralError("op '" + node.op + "' references a future node");
      }
      any_tracked = true;
    }
    node.inputs.push_back(in->node());
    node.input_shapes.push_back(in->shape());
  }
  if (!any_tracked) return Var(std::move(value));
  nodes_.push_back(std::move(node));
  return Var(std::move(value), this, static_cast<int>(nodes_.size()) - 1);
}

const std::string& Tape::op_name(int node) const {
  if (node < 0 || node >= static_cast<int>(nodes_.size())) {
    throw StructuralError("dangling node reference " + std::to_string(node));
  }
  return nodes_[static_cast<std::size_t>(node)].op;
}

Gradients Tape::backward(const Var& output) const {
  if (output.size() != 1) {
    throw ShapeError("backward() without a seed needs a scalar output, got " +
                     shape_string(output.shape()));
  }
  return backward(output, Tensor::ones(output.shape()));
}

Gradients Tape::backward(const Var& output, const Tensor& seed) const {
  if (!output.tracked() || output.tape() != this ||
      output.node() >= static_cast<int>(nodes_.size())) {
    throw StructuralError("backward() from a node that is not on this tape");
  }
  require_same_shape(output.value(), seed, "backward seed");

  Gradients g;
  g.tape_ = this;
  const auto out = static_cast<std::size_t>(output.node());
  g.cotangents_.assign(out + 1, std::nullopt);
  g.cotangents_[out] = seed;

  for (std::size_t k = out + 1; k-- > 0;) {
    if (!g.cotangents_[k]) continue;
    const Node& node = nodes_[k];
    if (!node.vjp) continue;
    std::vector<Tensor> in_cots = node.vjp(*g.cotangents_[k]);
    if (in_cots.size() != node.inputs.size()) {
      throw StructuralError("op '" + node.op + "' returned the wrong number of cotangents");
    }
    for (std::size_t j = 0; j < node.inputs.size(); ++j) {
      const int in = node.inputs[j];
      if (in < 0) continue;
      if (in_cots[j].shape() != node.input_shapes[j]) {
        throw StructuralError("op '" + node.op + "' produced a cotangent of shape " +
                              shape_string(in_cots[j].shape()) + " for input of shape " +
                              shape_string(node.input_shapes[j]));
      }
      auto& slot = g.cotangents_[static_cast<std::size_t>(in)];
      if (slot) {
        slot = *slot + in_cots[j];
      } else {
        slot = std::move(in_cots[j]);
      }
    }
  }
  return g;
}

Tensor Gradients::wrt(const Var& v) const {
  if (!v.tracked()) return Tensor::zeros(v.shape());
  if (v.tape() != tape_) throw StructuralError("gradient requested for a var from another tape");
  const auto n = static_cast<std::size_t>(v.node());
  if (n >= cotangents_.size() || !cotangents_[n]) return Tensor::zeros(v.shape());
  return *cotangents_[n];
}

}  // namespace dbp
