#include "evsn/tape.hpp"

#include <cmath>

#include "evsn/activations.hpp"
#include "evsn/error.hpp"

namespace evsn {

namespace {

void add_row_inplace(Matrix& m, const Matrix& bias) {
  if (bias.rows() != 1 || bias.cols() != m.cols()) {
    fail(ErrorKind::shape, "row broadcast of " + bias.shape_string() + " onto " + m.shape_string());
  }
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias(0, c);
  }
}

void accumulate(Matrix& into, const Matrix& from) {
  double* a = into.data();
  const double* b = from.data();
  for (std::size_t i = 0; i < into.size(); ++i) a[i] += b[i];
}

void accumulate_column_sums(Matrix& into, const Matrix& from) {
  for (std::size_t r = 0; r < from.rows(); ++r) {
    auto row = from.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) into(0, c) += row[c];
  }
}

template <typename F>
Matrix map(const Matrix& a, F f) {
  Matrix out(a.rows(), a.cols());
  const double* pa = a.data();
  double* po = out.data();
  for (std::size_t i = 0; i < a.size(); ++i) po[i] = f(pa[i]);
  return out;
}

}  // namespace

GruStep gru_step(const Matrix& x, const Matrix& h, const GruWeights& w) {
  GruStep s;
  Matrix az = matmul(x, *w.wz);
  matmul_add(h, *w.uz, az);
  add_row_inplace(az, *w.bz);
  Matrix ar = matmul(x, *w.wr);
  matmul_add(h, *w.ur, ar);
  add_row_inplace(ar, *w.br);
  s.z = map(az, sigmoid);
  s.r = map(ar, sigmoid);
  s.rh = Matrix(h.rows(), h.cols());
  for (std::size_t i = 0; i < h.size(); ++i) s.rh.data()[i] = s.r.data()[i] * h.data()[i];
  Matrix an = matmul(x, *w.wn);
  matmul_add(s.rh, *w.un, an);
  add_row_inplace(an, *w.bn);
  s.n = map(an, [](double v) { return std::tanh(v); });
  s.h_next = Matrix(h.rows(), h.cols());
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double z = s.z.data()[i];
    s.h_next.data()[i] = z * h.data()[i] + (1.0 - z) * s.n.data()[i];
  }
  return s;
}

Var Tape::push(Node node) {
  if (!node.value.all_finite()) {
    fail(ErrorKind::numeric, "non-finite value produced at tape node " + std::to_string(nodes_.size()));
  }
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

bool Tape::any_requires_grad(std::initializer_list<Var> inputs) const {
  for (Var v : inputs) {
    if (nodes_.at(v.index).requires_grad) return true;
  }
  return false;
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::parameter(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  Node n;
  n.op = Op::matmul;
  n.inputs = {a.index, b.index};
  n.value = evsn::matmul(value(a), value(b));
  n.requires_grad = any_requires_grad({a, b});
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  require_same_shape(value(a), value(b), "add");
  Node n;
  n.op = Op::add;
  n.inputs = {a.index, b.index};
  n.value = value(a);
  accumulate(n.value, value(b));
  n.requires_grad = any_requires_grad({a, b});
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  require_same_shape(value(a), value(b), "sub");
  Node n;
  n.op = Op::sub;
  n.inputs = {a.index, b.index};
  n.value = value(a);
  const Matrix& vb = value(b);
  for (std::size_t i = 0; i < n.value.size(); ++i) n.value.data()[i] -= vb.data()[i];
  n.requires_grad = any_requires_grad({a, b});
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  require_same_shape(value(a), value(b), "mul");
  Node n;
  n.op = Op::mul;
  n.inputs = {a.index, b.index};
  n.value = value(a);
  const Matrix& vb = value(b);
  for (std::size_t i = 0; i < n.value.size(); ++i) n.value.data()[i] *= vb.data()[i];
  n.requires_grad = any_requires_grad({a, b});
  return push(std::move(n));
}

Var Tape::add_row(Var a, Var bias) {
  Node n;
  n.op = Op::add_row;
  n.inputs = {a.index, bias.index};
  n.value = value(a);
  add_row_inplace(n.value, value(bias));
  n.requires_grad = any_requires_grad({a, bias});
  return push(std::move(n));
}

Var Tape::scale(Var a, double factor) {
  Node n;
  n.op = Op::scale;
  n.inputs = {a.index};
  n.scalar = factor;
  n.value = map(value(a), [factor](double v) { return v * factor; });
  n.requires_grad = any_requires_grad({a});
  return push(std::move(n));
}

Var Tape::add_scalar(Var a, double offset) {
  Node n;
  n.op = Op::add_scalar;
  n.inputs = {a.index};
  n.value = map(value(a), [offset](double v) { return v + offset; });
  n.requires_grad = any_requires_grad({a});
  return push(std::move(n));
}

Var Tape::sigmoid(Var a) {
  Node n;
  n.op = Op::sigmoid;
  n.inputs = {a.index};
  n.value = map(value(a), evsn::sigmoid);
  n.requires_grad = any_requires_grad({a});
  return push(std::move(n));
}

Var Tape::tanh(Var a) {
  Node n;
  n.op = Op::tanh;
  n.inputs = {a.index};
  n.value = map(value(a), [](double v) { return std::tanh(v); });
  n.requires_grad = any_requires_grad({a});
  return push(std::move(n));
}

Var Tape::softplus(Var a) {
  Node n;
  n.op = Op::softplus;
  n.inputs = {a.index};
  n.value = map(value(a), evsn::softplus);
  n.requires_grad = any_requires_grad({a});
  return push(std::move(n));
}

Var Tape::sum(Var a) {
  Node n;
  n.op = Op::sum;
  n.inputs = {a.index};
  double acc = 0.0;
  for (double v : value(a).values()) acc += v;
  n.value = Matrix(1, 1, acc);
  n.requires_grad = any_requires_grad({a});
  return push(std::move(n));
}

Var Tape::gru_cell(Var x, Var h, std::span<const Var, 9> weights) {
  const GruWeights w{&value(weights[0]), &value(weights[1]), &value(weights[2]),
                     &value(weights[3]), &value(weights[4]), &value(weights[5]),
                     &value(weights[6]), &value(weights[7]), &value(weights[8])};
  GruStep step = gru_step(value(x), value(h), w);
  Node n;
  n.op = Op::gru_cell;
  n.inputs = {x.index, h.index};
  bool needs_grad = any_requires_grad({x, h});
  for (Var v : weights) {
    n.inputs.push_back(v.index);
    needs_grad = needs_grad || nodes_.at(v.index).requires_grad;
  }
  n.value = std::move(step.h_next);
  n.saved.reserve(4);
  n.saved.push_back(std::move(step.z));
  n.saved.push_back(std::move(step.r));
  n.saved.push_back(std::move(step.n));
  n.saved.push_back(std::move(step.rh));
  n.requires_grad = needs_grad;
  return push(std::move(n));
}

Var Tape::custom(std::vector<Var> inputs, Matrix value, CustomBackward backward) {
  Node n;
  n.op = Op::custom;
  for (Var v : inputs) {
    n.inputs.push_back(v.index);
    n.requires_grad = n.requires_grad || nodes_.at(v.index).requires_grad;
  }
  n.value = std::move(value);
  n.custom_backward = std::move(backward);
  return push(std::move(n));
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.index);
  if (n.grad.empty()) return Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

Matrix& Tape::grad_buffer(std::size_t index) {
  Node& n = nodes_[index];
  if (n.grad.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var output) {
  const Node& out = nodes_.at(output.index);
  if (out.value.rows() != 1 || out.value.cols() != 1) {
    fail(ErrorKind::contract, "backward() needs a scalar output, got " + out.value.shape_string());
  }
  for (Node& n : nodes_) n.grad = Matrix();
  grad_buffer(output.index)(0, 0) = 1.0;
  for (std::size_t i = output.index + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.op == Op::leaf || !n.requires_grad || n.grad.empty()) continue;
    backward_node(i);
    n.grad = Matrix();  // only leaf gradients are kept
  }
}

void Tape::backward_node(std::size_t index) {
  Node& node = nodes_[index];
  const Matrix& g = node.grad;
  auto wants = [this](std::size_t input) { return nodes_[input].requires_grad; };

  switch (node.op) {
    case Op::leaf:
      break;
    case Op::matmul: {
      const std::size_t a = node.inputs[0], b = node.inputs[1];
      if (wants(a)) matmul_a_bt_add(g, nodes_[b].value, grad_buffer(a));
      if (wants(b)) matmul_at_b_add(nodes_[a].value, g, grad_buffer(b));
      break;
    }
    case Op::add:
      for (std::size_t in : node.inputs)
        if (wants(in)) accumulate(grad_buffer(in), g);
      break;
    case Op::sub: {
      if (wants(node.inputs[0])) accumulate(grad_buffer(node.inputs[0]), g);
      if (wants(node.inputs[1])) {
        Matrix& gb = grad_buffer(node.inputs[1]);
        for (std::size_t i = 0; i < g.size(); ++i) gb.data()[i] -= g.data()[i];
      }
      break;
    }
    case Op::mul: {
      const std::size_t a = node.inputs[0], b = node.inputs[1];
      if (wants(a)) {
        Matrix& ga = grad_buffer(a);
        const Matrix& vb = nodes_[b].value;
        for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += g.data()[i] * vb.data()[i];
      }
      if (wants(b)) {
        Matrix& gb = grad_buffer(b);
        const Matrix& va = nodes_[a].value;
        for (std::size_t i = 0; i < g.size(); ++i) gb.data()[i] += g.data()[i] * va.data()[i];
      }
      break;
    }
    case Op::add_row:
      if (wants(node.inputs[0])) accumulate(grad_buffer(node.inputs[0]), g);
      if (wants(node.inputs[1])) accumulate_column_sums(grad_buffer(node.inputs[1]), g);
      break;
    case Op::scale: {
      Matrix& ga = grad_buffer(node.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += g.data()[i] * node.scalar;
      break;
    }
    case Op::add_scalar:
      accumulate(grad_buffer(node.inputs[0]), g);
      break;
    case Op::sigmoid: {
      Matrix& ga = grad_buffer(node.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double s = node.value.data()[i];
        ga.data()[i] += g.data()[i] * s * (1.0 - s);
      }
      break;
    }
    case Op::tanh: {
      Matrix& ga = grad_buffer(node.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double t = node.value.data()[i];
        ga.data()[i] += g.data()[i] * (1.0 - t * t);
      }
      break;
    }
    case Op::softplus: {
      const std::size_t a = node.inputs[0];
      Matrix& ga = grad_buffer(a);
      const Matrix& x = nodes_[a].value;
      for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += g.data()[i] * evsn::sigmoid(x.data()[i]);
      break;
    }
    case Op::sum: {
      Matrix& ga = grad_buffer(node.inputs[0]);
      const double s = g(0, 0);
      for (double& v : ga.values()) v += s;
      break;
    }
    case Op::gru_cell: {
      const Matrix& z = node.saved[0];
      const Matrix& r = node.saved[1];
      const Matrix& n = node.saved[2];
      const Matrix& rh = node.saved[3];
      const std::size_t ix = node.inputs[0], ih = node.inputs[1];
      const Matrix& x = nodes_[ix].value;
      const Matrix& h = nodes_[ih].value;
      const std::size_t count = g.size();
      Matrix daz(g.rows(), g.cols()), dan(g.rows(), g.cols()), dar(g.rows(), g.cols());
      for (std::size_t i = 0; i < count; ++i) {
        const double gz = z.data()[i];
        const double gn = n.data()[i];
        const double dh = g.data()[i];
        daz.data()[i] = dh * (h.data()[i] - gn) * gz * (1.0 - gz);
        dan.data()[i] = dh * (1.0 - gz) * (1.0 - gn * gn);
      }
      auto w = [&](std::size_t k) -> const Matrix& { return nodes_[node.inputs[2 + k]].value; };
      // k: 0 wz, 1 wr, 2 wn, 3 uz, 4 ur, 5 un, 6 bz, 7 br, 8 bn
      Matrix drh = matmul_a_bt(dan, w(5));
      for (std::size_t i = 0; i < count; ++i) {
        const double gr = r.data()[i];
        dar.data()[i] = drh.data()[i] * h.data()[i] * gr * (1.0 - gr);
      }
      if (wants(ih)) {
        Matrix& gh = grad_buffer(ih);
        for (std::size_t i = 0; i < count; ++i)
          gh.data()[i] += g.data()[i] * z.data()[i] + drh.data()[i] * r.data()[i];
        matmul_a_bt_add(daz, w(3), gh);
        matmul_a_bt_add(dar, w(4), gh);
      }
      if (wants(ix)) {
        Matrix& gx = grad_buffer(ix);
        matmul_a_bt_add(daz, w(0), gx);
        matmul_a_bt_add(dar, w(1), gx);
        matmul_a_bt_add(dan, w(2), gx);
      }
      auto in = [&](std::size_t k) { return node.inputs[2 + k]; };
      if (wants(in(0))) matmul_at_b_add(x, daz, grad_buffer(in(0)));
      if (wants(in(1))) matmul_at_b_add(x, dar, grad_buffer(in(1)));
      if (wants(in(2))) matmul_at_b_add(x, dan, grad_buffer(in(2)));
      if (wants(in(3))) matmul_at_b_add(h, daz, grad_buffer(in(3)));
      if (wants(in(4))) matmul_at_b_add(h, dar, grad_buffer(in(4)));
      if (wants(in(5))) matmul_at_b_add(rh, dan, grad_buffer(in(5)));
      if (wants(in(6))) accumulate_column_sums(grad_buffer(in(6)), daz);
      if (wants(in(7))) accumulate_column_sums(grad_buffer(in(7)), dar);
      if (wants(in(8))) accumulate_column_sums(grad_buffer(in(8)), dan);
      break;
    }
    case Op::custom: {
      std::vector<Matrix*> input_grads;
      input_grads.reserve(node.inputs.size());
      for (std::size_t in : node.inputs) input_grads.push_back(wants(in) ? &grad_buffer(in) : nullptr);
      node.custom_backward(g, input_grads);
      break;
    }
  }
}

}  // namespace evsn
