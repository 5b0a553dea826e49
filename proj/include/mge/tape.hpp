#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mge/tensor.hpp"

namespace mge {

// Reverse-mode automatic differentiation on an explicit tape.
//
// Nodes are appended in evaluation order; backward() walks them in reverse,
// so gradient accumulation order is fixed and results are bitwise
// deterministic for identical inputs. Several independent tapes may coexist.
class Tape {
 public:
  struct NodeId {
    int v = -1;
  };

  // Leaves.
  NodeId leaf(Tensor value);
  NodeId param(const std::string& name, const Tensor& value);

  // Registers every entry of `params` as a named leaf.
  std::unordered_map<std::string, NodeId> add_params(const Params& params);

  // Operations. conv2d is cross-correlation with stride 1 and zero padding
  // (k-1)/2; conv1d is its one-dimensional counterpart.
  NodeId conv2d(NodeId input, NodeId kernel, NodeId bias, int padding);
  NodeId conv1d(NodeId input, NodeId kernel);
  NodeId avgpool2(NodeId input);
  NodeId upsample_nearest2(NodeId input);
  NodeId relu(NodeId input);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double factor);
  NodeId sum(NodeId a);
  NodeId concat_channels(NodeId a, NodeId b);
  NodeId mse_loss(NodeId pred, NodeId target);

  const Tensor& value(NodeId id) const { return node(id).value; }
  double scalar_value(NodeId id) const;
  // Gradient buffer of a node after backward(); empty if unreachable.
  const std::vector<double>& grad(NodeId id) const { return node(id).grad; }

  // Accumulates d(loss)/d(param) for every named parameter leaf and returns
  // them shaped like `params`. Parameters never touched by the loss keep a
  // zero gradient. `loss` must be scalar.
  Params backward(NodeId loss, const Params& params);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    std::vector<int> inputs;
    std::function<void(Tape&, int)> backprop;
    std::string param_name;
  };

  Node& node(NodeId id);
  const Node& node(NodeId id) const;
  NodeId push(Node n);
  void ensure_grad(int i);
  double* grad_ptr(int i) { return nodes_[static_cast<std::size_t>(i)].grad.data(); }

  std::vector<Node> nodes_;
};

// Central finite differences of a scalar loss with respect to every
// parameter coordinate.
Params finite_diff_grad(const std::function<double(const Params&)>& loss_fn,
                        const Params& params, double step);

}  // namespace mge
