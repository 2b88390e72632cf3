#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "smaui/matrix.hpp"

namespace smaui {

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; only valid while the
// owning tape is alive.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
};

class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(std::vector<Matrix> grads) : grads_(std::move(grads)) {}

  // Gradient of the loss with respect to a leaf created by Tape::leaf.
  const Matrix& wrt(Var leaf) const;

 private:
  std::vector<Matrix> grads_;
};

// Linear record of primitive operations for reverse-mode differentiation.
// Nodes are appended in evaluation order, so every node's inputs precede it
// and a single reverse sweep visits them in a valid topological order.
class Tape {
 public:
  // Receives the upstream gradient of a node and adds the contribution for
  // each of its inputs through Tape::accumulate.
  using BackwardFn = std::function<void(Tape&, const Matrix& upstream)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Differentiable input; backward() reports its gradient.
  Var leaf(Matrix value);
  // Input that is never differentiated.
  Var constant(Matrix value);

  Var record(Matrix value, std::vector<std::size_t> inputs, BackwardFn backward);

  const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Adds `contribution` to the running gradient of node `id`. No-op for
  // nodes that do not require a gradient.
  void accumulate(std::size_t id, const Matrix& contribution);
  Matrix* grad_slot(std::size_t id);

  // Reverse sweep from a 1x1 loss node.
  Gradients backward(Var loss);

 private:
  struct Node {
    Matrix value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    bool is_leaf = false;
  };

  std::vector<Node> nodes_;
  std::vector<Matrix> grads_;
};

// Differentiable counterparts of the Matrix primitives.
namespace ad {

Var matmul(Var a, Var b);
Var add_row_bias(Var z, Var bias);
Var tanh(Var z);
Var softmax_rows(Var z);
// Mean over rows of -log(max(p[label], 1e-12)).
Var cross_entropy(Var probs, std::span<const int> labels);
Var sum(Var z);
Var square_norm(Var z);
Var add(Var a, Var b);
Var scale(Var a, double s);

}  // namespace ad

}  // namespace smaui
