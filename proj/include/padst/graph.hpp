#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "padst/tensor.hpp"

namespace padst {

/// Handle to a node of a Graph.
struct Var {
  std::size_t id = 0;
};

struct AttentionSpec {
  std::size_t batch = 0;
  std::size_t query_len = 0;
  std::size_t key_len = 0;
  std::size_t heads = 0;
  bool causal = false;
  std::vector<int> key_lengths;  // valid keys per batch row, each in [1, key_len]
};

// Tape of one forward pass. Nodes are appended in evaluation order, which is
// a topological order, and backward() walks them in exact reverse.
//
// Parameters enter the tape through parameter(); backward() adds the
// gradient reaching each such node into Parameter::grad, so callers zero the
// parameter gradients between steps. A graph supports one backward pass.
template <class Real>
class Graph {
 public:
  /// With record == false no backward closures are stored (inference).
  explicit Graph(bool record = true) : record_(record) {}

  Var constant(Tensor<Real> value);
  Var parameter(Parameter<Real>& p);

  const Tensor<Real>& value(Var v) const { return nodes_[v.id].value; }
  const Tensor<Real>& grad(Var v) const { return nodes_[v.id].grad; }
  std::size_t size() const { return nodes_.size(); }

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var add_bias(Var x, Var bias);
  Var mul(Var a, Var b);
  Var scale(Var x, Real factor);
  Var gelu(Var x);
  Var softmax_rows(Var x);
  Var layer_norm(Var x, Var gain, Var bias, Real eps = Real(1e-5));
  Var embedding(Var table, std::span<const int> ids);
  Var attention(Var q, Var k, Var v, const AttentionSpec& spec);
  /// Mean negative log-likelihood over positions whose target != pad_id.
  Var cross_entropy(Var logits, std::span<const int> targets, int pad_id);
  Var sum(Var x);
  Var dropout(Var x, Real rate, std::mt19937_64& rng);

  /// Populates gradients of every node reachable from the scalar `loss`.
  void backward(Var loss);

  /// Node ids in the order backward() processed them.
  const std::vector<std::size_t>& backward_trace() const { return trace_; }

 private:
  struct Node {
    Tensor<Real> value;
    Tensor<Real> grad;
    std::function<void()> back;
    Parameter<Real>* param = nullptr;
    bool needs_grad = false;
  };

  Var push(Tensor<Real> value, bool needs_grad);
  bool needs(Var v) const { return nodes_[v.id].needs_grad; }
  Tensor<Real>& grad_of(std::size_t id) { return nodes_[id].grad; }

  bool record_;
  bool backward_done_ = false;
  std::vector<Node> nodes_;
  std::vector<std::size_t> trace_;
};

}  // namespace padst
