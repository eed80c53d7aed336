#pragma once

#include <functional>
#include <limits>
#include <vector>

#include "dfnsm/tensor.hpp"

namespace dfnsm::numcore {

// Reverse-mode tape. Nodes are appended in construction order, which is a
// topological order, so the backward pass is one reverse sweep that visits
// each recorded operation exactly once. A tape is confined to one execution
// context; independent tapes may run in parallel.
class Tape {
 public:
  using NodeId = std::size_t;

  // Leaf bound to an external parameter; backward accumulates into t.grad.
  NodeId param(Tensor& t);
  // Leaf with fixed values; gradients stop here.
  NodeId constant(Tensor t);
  NodeId constant_vector(std::vector<double> values);

  // out[e] = sum over ids of table[id, e]; repeated ids sum repeatedly.
  NodeId embedding_lookup_sum(NodeId table, const std::vector<int>& ids);
  // out[t, e] = table[ids[t], e]
  NodeId embedding_lookup_seq(NodeId table, const std::vector<int>& ids);
  // input [L, e], kernels [f, w, e], bias [f] -> out [(L-w+1), f]; no
  // padding, stride 1.
  NodeId conv1d(NodeId input, NodeId kernels, NodeId bias);
  NodeId relu(NodeId x);
  // input [P, f] -> out [f], per-column max; gradient goes to the lowest
  // argmax position on ties.
  NodeId max_pool_over_time(NodeId x);
  // 1-D inputs concatenated in argument order.
  NodeId concat(const std::vector<NodeId>& xs);
  // weights [b, a], input [a], bias [b] -> weights*input + bias
  NodeId affine(NodeId input, NodeId weights, NodeId bias);
  NodeId dot(NodeId u, NodeId v);
  // (1/n) * sum (target_i - pred_i)^2 over scalar prediction nodes.
  NodeId mse_loss(const std::vector<NodeId>& predictions, const std::vector<double>& targets);

  // Seeds d(loss)/d(loss) = 1 and sweeps the record in reverse, accumulating
  // into every bound parameter's grad. `loss` must be scalar.
  void backward(NodeId loss);

  const Tensor& value(NodeId id) const { return nodes_[id].val(); }
  double scalar(NodeId id) const;
  std::size_t size() const { return nodes_.size(); }

  // Smallest |pre-activation| seen by relu and smallest top1-top2 column gap
  // seen by max_pool_over_time, over all forwards on this tape. Gradient
  // checking uses these to stay away from kink points.
  double min_relu_margin() const { return min_relu_margin_; }
  double min_pool_margin() const { return min_pool_margin_; }

 private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;  // set for param leaves
    Tensor* bound = nullptr;           // grad sink for param leaves
    std::vector<double> grad;
    std::function<void(Tape&)> backprop;

    const Tensor& val() const { return external ? *external : owned; }
  };

  NodeId push(Node n) {
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }
  std::vector<double>& grad_of(NodeId id) { return nodes_[id].grad; }

  std::vector<Node> nodes_;
  double min_relu_margin_ = std::numeric_limits<double>::infinity();
  double min_pool_margin_ = std::numeric_limits<double>::infinity();
};

// Numerically checks d(loss)/d(param) for every entry of every parameter
// against central finite differences. `build` must construct the scalar loss
// on the given tape from the current parameter values and nothing else.
struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t entries_checked = 0;
};

GradCheckReport grad_check(const std::vector<Tensor*>& params,
                           const std::function<Tape::NodeId(Tape&)>& build,
                           double epsilon = 1e-4);

}  // namespace dfnsm::numcore
