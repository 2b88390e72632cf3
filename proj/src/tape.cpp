#include "smaui/tape.hpp"

#include <algorithm>
#include <cmath>

#include "smaui/errors.hpp"

namespace smaui {

namespace {

constexpr double kProbFloor = 1e-12;

Tape& tape_of(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) throw ContractError("vars belong to different tapes");
  return *a.tape;
}

Tape& tape_of(Var a) {
  if (a.tape == nullptr) throw ContractError("var is not attached to a tape");
  return *a.tape;
}

}  // namespace

const Matrix& Var::value() const { return tape->value(*this); }

const Matrix& Gradients::wrt(Var leaf) const {
  if (leaf.id >= grads_.size() || (grads_[leaf.id].empty() && leaf.value().size() != 0)) {
    throw ContractError("no gradient recorded for node " + std::to_string(leaf.id));
  }
  return grads_[leaf.id];
}

Var Tape::leaf(Matrix value) {
  nodes_.push_back({std::move(value), {}, nullptr, true, true});
  return {this, nodes_.size() - 1};
}

Var Tape::constant(Matrix value) {
  nodes_.push_back({std::move(value), {}, nullptr, false, false});
  return {this, nodes_.size() - 1};
}

Var Tape::record(Matrix value, std::vector<std::size_t> inputs, BackwardFn backward) {
  bool needs = false;
  for (std::size_t in : inputs) {
    if (in >= nodes_.size()) throw ContractError("tape input recorded out of order");
    needs = needs || nodes_[in].requires_grad;
  }
  nodes_.push_back({std::move(value), std::move(inputs), std::move(backward), needs, false});
  return {this, nodes_.size() - 1};
}

Matrix* Tape::grad_slot(std::size_t id) {
  if (!nodes_[id].requires_grad) return nullptr;
  Matrix& g = grads_[id];
  if (g.empty() && nodes_[id].value.size() != 0) {
    g = Matrix(nodes_[id].value.rows(), nodes_[id].value.cols());
  }
  return &g;
}

void Tape::accumulate(std::size_t id, const Matrix& contribution) {
  if (Matrix* g = grad_slot(id)) *g += contribution;
}

Gradients Tape::backward(Var loss) {
  if (loss.tape != this) throw ContractError("loss node belongs to another tape");
  const Matrix& lv = value(loss);
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ContractError("backward requires a scalar loss, got " + lv.shape_string());
  }
  grads_.assign(nodes_.size(), Matrix());
  grads_[loss.id] = Matrix(1, 1, 1.0);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.requires_grad || node.is_leaf || !node.backward || grads_[i].empty()) continue;
    const Matrix upstream = grads_[i];
    node.backward(*this, upstream);
  }
  // Only leaf gradients are exposed.
  std::vector<Matrix> out(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].is_leaf) {
      out[i] = grads_[i].empty() ? Matrix(nodes_[i].value.rows(), nodes_[i].value.cols())
                                 : std::move(grads_[i]);
    }
  }
  grads_.clear();
  return Gradients(std::move(out));
}

namespace ad {

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  Matrix out = smaui::matmul(a.value(), b.value());
  return t.record(std::move(out), {a.id, b.id}, [a, b](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a.id)) tp.accumulate(a.id, smaui::matmul(g, b.value().transpose()));
    if (tp.requires_grad(b.id)) tp.accumulate(b.id, smaui::matmul(a.value().transpose(), g));
  });
}

Var add_row_bias(Var z, Var bias) {
  Tape& t = tape_of(z, bias);
  Matrix out = smaui::add_row_bias(z.value(), bias.value());
  return t.record(std::move(out), {z.id, bias.id}, [z, bias](Tape& tp, const Matrix& g) {
    tp.accumulate(z.id, g);
    if (Matrix* gb = tp.grad_slot(bias.id)) {
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) (*gb)(0, c) += g(r, c);
    }
  });
}

Var tanh(Var z) {
  Tape& t = tape_of(z);
  Matrix out = smaui::tanh(z.value());
  const std::size_t self = t.size();
  return t.record(std::move(out), {z.id}, [z, self](Tape& tp, const Matrix& g) {
    const Matrix& y = tp.value({&tp, self});
    Matrix dz = g;
    for (std::size_t i = 0; i < dz.size(); ++i) {
      const double yi = y.data()[i];
      dz.data()[i] *= 1.0 - yi * yi;
    }
    tp.accumulate(z.id, dz);
  });
}

Var softmax_rows(Var z) {
  Tape& t = tape_of(z);
  Matrix out = smaui::softmax_rows(z.value());
  const std::size_t self = t.size();
  return t.record(std::move(out), {z.id}, [z, self](Tape& tp, const Matrix& g) {
    const Matrix& y = tp.value({&tp, self});
    Matrix dz(g.rows(), g.cols());
    for (std::size_t r = 0; r < g.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < g.cols(); ++c) dot += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < g.cols(); ++c) dz(r, c) = y(r, c) * (g(r, c) - dot);
    }
    tp.accumulate(z.id, dz);
  });
}

Var cross_entropy(Var probs, std::span<const int> labels) {
  Tape& t = tape_of(probs);
  const Matrix& p = probs.value();
  if (labels.size() != p.rows()) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     p.shape_string() + " probabilities");
  }
  if (p.rows() == 0) throw ContractError("cross_entropy: empty batch");
  const double n = static_cast<double>(p.rows());
  double loss = 0.0;
  for (std::size_t r = 0; r < p.rows(); ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= p.cols()) {
      throw ContractError("cross_entropy: label " + std::to_string(labels[r]) + " out of range [0," +
                          std::to_string(p.cols()) + ")");
    }
    loss -= std::log(std::max(p(r, labels[r]), kProbFloor));
  }
  std::vector<int> lab(labels.begin(), labels.end());
  return t.record(Matrix(1, 1, loss / n), {probs.id},
                  [probs, lab = std::move(lab), n](Tape& tp, const Matrix& g) {
                    const Matrix& pv = probs.value();
                    Matrix dp(pv.rows(), pv.cols());
                    for (std::size_t r = 0; r < pv.rows(); ++r) {
                      const double pr = pv(r, lab[r]);
                      if (pr > kProbFloor) dp(r, lab[r]) = -g(0, 0) / (n * pr);
                    }
                    tp.accumulate(probs.id, dp);
                  });
}

Var sum(Var z) {
  Tape& t = tape_of(z);
  return t.record(Matrix(1, 1, smaui::sum(z.value())), {z.id}, [z](Tape& tp, const Matrix& g) {
    tp.accumulate(z.id, Matrix(z.value().rows(), z.value().cols(), g(0, 0)));
  });
}

Var square_norm(Var z) {
  Tape& t = tape_of(z);
  double s = 0.0;
  for (double v : z.value().data()) s += v * v;
  return t.record(Matrix(1, 1, s), {z.id}, [z](Tape& tp, const Matrix& g) {
    tp.accumulate(z.id, z.value() * (2.0 * g(0, 0)));
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  return t.record(a.value() + b.value(), {a.id, b.id}, [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a.id, g);
    tp.accumulate(b.id, g);
  });
}

Var scale(Var a, double s) {
  Tape& t = tape_of(a);
  return t.record(a.value() * s, {a.id},
                  [a, s](Tape& tp, const Matrix& g) { tp.accumulate(a.id, g * s); });
}

}  // namespace ad

}  // namespace smaui
