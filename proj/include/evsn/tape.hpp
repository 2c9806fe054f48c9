#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "evsn/matrix.hpp"

namespace evsn {

/// Handle to a node recorded on a Tape.
struct Var {
  std::size_t index = 0;
};

/// Weights of one GRU layer. Input maps are in x k, hidden maps k x k, biases 1 x k.
struct GruWeights {
  const Matrix* wz;
  const Matrix* wr;
  const Matrix* wn;
  const Matrix* uz;
  const Matrix* ur;
  const Matrix* un;
  const Matrix* bz;
  const Matrix* br;
  const Matrix* bn;
};

/// Intermediates of one GRU step over a batch (rows = batch entries).
struct GruStep {
  Matrix z;       // update gate
  Matrix r;       // reset gate
  Matrix n;       // candidate
  Matrix rh;      // r * h_prev, the reset-gated hidden path
  Matrix h_next;  // z * h_prev + (1 - z) * n
};

/// One GRU step: z = s(xWz + hUz + bz), r = s(xWr + hUr + br),
/// n = tanh(xWn + (r*h)Un + bn), h' = z*h + (1-z)*n.
GruStep gru_step(const Matrix& x, const Matrix& h, const GruWeights& w);

/// Reverse-mode record of matrix operations. Nodes are appended in evaluation
/// order, so a reverse sweep over the node list is a reverse topological order.
class Tape {
 public:
  using CustomBackward =
      std::function<void(const Matrix& out_grad, std::span<Matrix* const> input_grads)>;

  Var constant(Matrix value);
  /// Trainable leaf; its gradient is available after backward().
  Var parameter(Matrix value);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  /// a + bias with bias (1 x cols) broadcast over the rows of a.
  Var add_row(Var a, Var bias);
  Var scale(Var a, double factor);
  Var add_scalar(Var a, double offset);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var softplus(Var a);
  /// 1 x 1 sum of all entries.
  Var sum(Var a);
  Var gru_cell(Var x, Var h, std::span<const Var, 9> weights);
  /// Operation whose forward value is precomputed by the caller; backward must
  /// accumulate into each non-null input gradient.
  Var custom(std::vector<Var> inputs, Matrix value, CustomBackward backward);

  const Matrix& value(Var v) const { return nodes_.at(v.index).value; }
  /// Gradient of the last backward() output with respect to leaf v (zeros if
  /// unused). Intermediate gradients are released during the sweep.
  Matrix grad(Var v) const;

  /// Reverse sweep from a 1 x 1 output. Resets gradients from any previous sweep.
  void backward(Var output);

  std::size_t size() const noexcept { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  enum class Op {
    leaf,
    matmul,
    add,
    sub,
    mul,
    add_row,
    scale,
    add_scalar,
    sigmoid,
    tanh,
    softplus,
    sum,
    gru_cell,
    custom,
  };

  struct Node {
    Op op = Op::leaf;
    std::vector<std::size_t> inputs;
    Matrix value;
    Matrix grad;
    std::vector<Matrix> saved;
    double scalar = 0.0;
    bool requires_grad = false;
    CustomBackward custom_backward;
  };

  Var push(Node node);
  bool any_requires_grad(std::initializer_list<Var> inputs) const;
  Matrix& grad_buffer(std::size_t index);
  void backward_node(std::size_t index);

  std::vector<Node> nodes_;
};

}  // namespace evsn
