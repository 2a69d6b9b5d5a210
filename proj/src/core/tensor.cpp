#include "core/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gpf {

namespace {

double stable_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

// max(z,0) - z*y + log(1 + exp(-|z|)), the overflow-safe logistic loss.
double stable_bce(double z, double y) {
  return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

}  // namespace

Tensor Tape::push(Node node) {
  int id = static_cast<int>(nodes_.size());
  Tensor t{id, node.value.rows(), node.value.cols()};
  if (node.needs_grad) node.grad = Matrix(t.rows, t.cols);
  nodes_.push_back(std::move(node));
  return t;
}

void Tape::check_owned(Tensor t) const {
  if (t.id < 0 || t.id >= static_cast<int>(nodes_.size()))
    throw ValidationError("tensor handle does not belong to this tape");
}

Tape::Node& Tape::at(Tensor t) {
  check_owned(t);
  return nodes_[t.id];
}

Tensor Tape::leaf(Matrix value, bool requires_grad) {
  if (!value.all_finite()) throw NumericError("leaf tensor has non-finite entries");
  Node n;
  n.op = Op::leaf;
  n.value = std::move(value);
  n.needs_grad = requires_grad;
  return push(std::move(n));
}

Tensor Tape::scalar_constant(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return leaf(std::move(m), false);
}

Tensor Tape::matmul(Tensor a, Tensor b) {
  Node n;
  n.op = Op::matmul;
  n.a = a.id;
  n.b = b.id;
  n.value = gpf::matmul(at(a).value, at(b).value);
  n.needs_grad = at(a).needs_grad || at(b).needs_grad;
  return push(std::move(n));
}

Tensor Tape::add(Tensor a, Tensor b) {
  Node n;
  n.op = Op::add;
  n.a = a.id;
  n.b = b.id;
  n.value = gpf::add(at(a).value, at(b).value);
  n.needs_grad = at(a).needs_grad || at(b).needs_grad;
  return push(std::move(n));
}

Tensor Tape::scale(Tensor a, double c) {
  Node n;
  n.op = Op::scale;
  n.a = a.id;
  n.c = c;
  n.value = gpf::scale(at(a).value, c);
  n.needs_grad = at(a).needs_grad;
  return push(std::move(n));
}

Tensor Tape::scale_by(Tensor a, Tensor scalar) {
  if (!scalar.is_scalar()) throw ValidationError("scale_by expects a 1x1 scalar tensor");
  Node n;
  n.op = Op::scale_by;
  n.a = a.id;
  n.b = scalar.id;
  n.value = gpf::scale(at(a).value, at(scalar).value(0, 0));
  n.needs_grad = at(a).needs_grad || at(scalar).needs_grad;
  return push(std::move(n));
}

Tensor Tape::broadcast_add_row(Tensor m, Tensor row) {
  if (row.rows != 1 || row.cols != m.cols)
    throw ValidationError("broadcast_add_row expects a 1x" + std::to_string(m.cols) +
                          " row vector");
  Node n;
  n.op = Op::broadcast_add_row;
  n.a = m.id;
  n.b = row.id;
  n.value = at(m).value;
  const Matrix& r = at(row).value;
  for (int i = 0; i < n.value.rows(); ++i)
    for (int j = 0; j < n.value.cols(); ++j) n.value(i, j) += r(0, j);
  n.needs_grad = at(m).needs_grad || at(row).needs_grad;
  return push(std::move(n));
}

Tensor Tape::relu(Tensor a) {
  Node n;
  n.op = Op::relu;
  n.a = a.id;
  n.value = at(a).value;
  for (double& v : n.value.data()) v = std::max(v, 0.0);
  n.needs_grad = at(a).needs_grad;
  return push(std::move(n));
}

Tensor Tape::sigmoid(Tensor a) {
  Node n;
  n.op = Op::sigmoid;
  n.a = a.id;
  n.value = at(a).value;
  for (double& v : n.value.data()) v = stable_sigmoid(v);
  n.needs_grad = at(a).needs_grad;
  return push(std::move(n));
}

Tensor Tape::row_sum(Tensor m) {
  Node n;
  n.op = Op::row_sum;
  n.a = m.id;
  n.value = row_vector_sum(at(m).value);
  n.needs_grad = at(m).needs_grad;
  return push(std::move(n));
}

Tensor Tape::row_mean(Tensor m) {
  Node n;
  n.op = Op::row_mean;
  n.a = m.id;
  n.value = gpf::scale(row_vector_sum(at(m).value), 1.0 / m.rows);
  n.needs_grad = at(m).needs_grad;
  return push(std::move(n));
}

Tensor Tape::pair_dot(Tensor m, std::vector<std::pair<int, int>> pairs) {
  for (auto [u, v] : pairs)
    if (u < 0 || v < 0 || u >= m.rows || v >= m.rows)
      throw ValidationError("pair_dot row index out of range");
  Node n;
  n.op = Op::pair_dot;
  n.a = m.id;
  const Matrix& h = at(m).value;
  n.value = Matrix(static_cast<int>(pairs.size()), 1);
  for (size_t k = 0; k < pairs.size(); ++k) {
    double acc = 0.0;
    for (int j = 0; j < m.cols; ++j) acc += h(pairs[k].first, j) * h(pairs[k].second, j);
    n.value(static_cast<int>(k), 0) = acc;
  }
  n.pairs = std::move(pairs);
  n.needs_grad = at(m).needs_grad;
  return push(std::move(n));
}

Tensor Tape::bce_loss(Tensor logits, Tensor labels) {
  const Matrix& z = at(logits).value;
  const Matrix& y = at(labels).value;
  if (!z.same_shape(y)) throw ValidationError("bce_loss shape mismatch");
  for (double v : y.data())
    if (v != 0.0 && v != 1.0) throw ValidationError("bce_loss labels must be 0 or 1");
  Node n;
  n.op = Op::bce_loss;
  n.a = logits.id;
  n.b = labels.id;
  double acc = 0.0;
  for (size_t i = 0; i < z.size(); ++i) acc += stable_bce(z.data()[i], y.data()[i]);
  n.value = Matrix(1, 1);
  n.value(0, 0) = acc / static_cast<double>(z.size());
  n.needs_grad = at(logits).needs_grad;
  return push(std::move(n));
}

Tensor Tape::mse_loss(Tensor a, Tensor b) {
  const Matrix& x = at(a).value;
  const Matrix& y = at(b).value;
  if (!x.same_shape(y)) throw ValidationError("mse_loss shape mismatch");
  Node n;
  n.op = Op::mse_loss;
  n.a = a.id;
  n.b = b.id;
  double acc = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    double d = x.data()[i] - y.data()[i];
    acc += d * d;
  }
  n.value = Matrix(1, 1);
  n.value(0, 0) = acc / static_cast<double>(x.size());
  n.needs_grad = at(a).needs_grad || at(b).needs_grad;
  return push(std::move(n));
}

const Matrix& Tape::grad(Tensor t) const {
  check_owned(t);
  const Node& n = nodes_[t.id];
  if (!n.needs_grad) throw ValidationError("gradient of a non-requires_grad tensor is never read");
  return n.grad;
}

double Tape::scalar_value(Tensor t) const {
  check_owned(t);
  if (!t.is_scalar()) throw ValidationError("tensor is not a scalar");
  return nodes_[t.id].value(0, 0);
}

void Tape::zero_grads() {
  for (Node& n : nodes_)
    if (n.needs_grad) n.grad.fill(0.0);
}

void Tape::backward(Tensor output) {
  check_owned(output);
  if (!output.is_scalar()) throw ValidationError("backward requires a scalar output");
  Node& out = nodes_[output.id];
  if (!out.needs_grad) return;  // constant function of the leaves
  out.grad(0, 0) += 1.0;

  auto grad_of = [&](int id) -> Matrix& { return nodes_[id].grad; };
  auto wants = [&](int id) { return id >= 0 && nodes_[id].needs_grad; };

  for (int id = output.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.op == Op::leaf) continue;
    const Matrix& g = n.grad;
    switch (n.op) {
      case Op::matmul: {
        const Matrix& av = nodes_[n.a].value;
        const Matrix& bv = nodes_[n.b].value;
        if (wants(n.a)) {
          Matrix& ga = grad_of(n.a);
          for (int i = 0; i < av.rows(); ++i)
            for (int k = 0; k < av.cols(); ++k) {
              double acc = 0.0;
              for (int j = 0; j < bv.cols(); ++j) acc += g(i, j) * bv(k, j);
              ga(i, k) += acc;
            }
        }
        if (wants(n.b)) {
          Matrix& gb = grad_of(n.b);
          for (int k = 0; k < bv.rows(); ++k)
            for (int j = 0; j < bv.cols(); ++j) {
              double acc = 0.0;
              for (int i = 0; i < av.rows(); ++i) acc += av(i, k) * g(i, j);
              gb(k, j) += acc;
            }
        }
        break;
      }
      case Op::add: {
        for (int in : {n.a, n.b})
          if (wants(in)) {
            Matrix& gi = grad_of(in);
            for (size_t i = 0; i < g.size(); ++i) gi.data()[i] += g.data()[i];
          }
        break;
      }
      case Op::scale: {
        if (wants(n.a)) {
          Matrix& ga = grad_of(n.a);
          for (size_t i = 0; i < g.size(); ++i) ga.data()[i] += n.c * g.data()[i];
        }
        break;
      }
      case Op::scale_by: {
        double s = nodes_[n.b].value(0, 0);
        const Matrix& av = nodes_[n.a].value;
        if (wants(n.a)) {
          Matrix& ga = grad_of(n.a);
          for (size_t i = 0; i < g.size(); ++i) ga.data()[i] += s * g.data()[i];
        }
        if (wants(n.b)) {
          double acc = 0.0;
          for (size_t i = 0; i < g.size(); ++i) acc += g.data()[i] * av.data()[i];
          grad_of(n.b)(0, 0) += acc;
        }
        break;
      }
      case Op::broadcast_add_row: {
        if (wants(n.a)) {
          Matrix& ga = grad_of(n.a);
          for (size_t i = 0; i < g.size(); ++i) ga.data()[i] += g.data()[i];
        }
        if (wants(n.b)) {
          Matrix& gr = grad_of(n.b);
          for (int i = 0; i < g.rows(); ++i)
            for (int j = 0; j < g.cols(); ++j) gr(0, j) += g(i, j);
        }
        break;
      }
      case Op::relu: {
        if (wants(n.a)) {
          Matrix& ga = grad_of(n.a);
          const Matrix& av = nodes_[n.a].value;
          for (size_t i = 0; i < g.size(); ++i)
            if (av.data()[i] > 0.0) ga.data()[i] += g.data()[i];
        }
        break;
      }
      case Op::sigmoid: {
        if (wants(n.a)) {
          Matrix& ga = grad_of(n.a);
          for (size_t i = 0; i < g.size(); ++i) {
            double v = n.value.data()[i];
            ga.data()[i] += g.data()[i] * v * (1.0 - v);
          }
        }
        break;
      }
      case Op::row_sum: {
        if (wants(n.a)) {
          Matrix& ga = grad_of(n.a);
          for (int i = 0; i < ga.rows(); ++i)
            for (int j = 0; j < ga.cols(); ++j) ga(i, j) += g(0, j);
        }
        break;
      }
      case Op::row_mean: {
        if (wants(n.a)) {
          Matrix& ga = grad_of(n.a);
          double inv = 1.0 / ga.rows();
          for (int i = 0; i < ga.rows(); ++i)
            for (int j = 0; j < ga.cols(); ++j) ga(i, j) += inv * g(0, j);
        }
        break;
      }
      case Op::pair_dot: {
        if (wants(n.a)) {
          Matrix& ga = grad_of(n.a);
          const Matrix& h = nodes_[n.a].value;
          for (size_t k = 0; k < n.pairs.size(); ++k) {
            double gk = g(static_cast<int>(k), 0);
            auto [u, v] = n.pairs[k];
            for (int j = 0; j < h.cols(); ++j) {
              ga(u, j) += gk * h(v, j);
              ga(v, j) += gk * h(u, j);
            }
          }
        }
        break;
      }
      case Op::bce_loss: {
        if (wants(n.a)) {
          Matrix& gz = grad_of(n.a);
          const Matrix& z = nodes_[n.a].value;
          const Matrix& y = nodes_[n.b].value;
          double inv = g(0, 0) / static_cast<double>(z.size());
          for (size_t i = 0; i < z.size(); ++i)
            gz.data()[i] += inv * (stable_sigmoid(z.data()[i]) - y.data()[i]);
        }
        break;
      }
      case Op::mse_loss: {
        const Matrix& x = nodes_[n.a].value;
        const Matrix& y = nodes_[n.b].value;
        double inv = 2.0 * g(0, 0) / static_cast<double>(x.size());
        if (wants(n.a)) {
          Matrix& gx = grad_of(n.a);
          for (size_t i = 0; i < x.size(); ++i)
            gx.data()[i] += inv * (x.data()[i] - y.data()[i]);
        }
        if (wants(n.b)) {
          Matrix& gy = grad_of(n.b);
          for (size_t i = 0; i < x.size(); ++i)
            gy.data()[i] -= inv * (x.data()[i] - y.data()[i]);
        }
        break;
      }
      case Op::leaf:
        break;
    }
  }
}

GradCheckReport grad_check(
    const std::function<Tensor(Tape&, const std::vector<Tensor>&)>& f,
    const std::vector<Matrix>& inputs, double eps, double tol) {
  if (eps <= 0.0) throw ValidationError("grad_check eps must be positive");

  auto eval = [&](const std::vector<Matrix>& points) {
    Tape tape;
    std::vector<Tensor> leaves;
    leaves.reserve(points.size());
    for (const Matrix& m : points) leaves.push_back(tape.leaf(m, true));
    Tensor out = f(tape, leaves);
    if (!out.is_scalar()) throw ValidationError("grad_check requires a scalar-valued function");
    return tape.scalar_value(out);
  };

  Tape tape;
  std::vector<Tensor> leaves;
  {
    std::vector<Tensor> tmp;
    for (const Matrix& m : inputs) tmp.push_back(tape.leaf(m, true));
    Tensor out = f(tape, tmp);
    if (!out.is_scalar()) throw ValidationError("grad_check requires a scalar-valued function");
    tape.backward(out);
    leaves = tmp;
  }

  GradCheckReport report;
  for (size_t i = 0; i < inputs.size(); ++i) {
    const Matrix& analytic = tape.grad(leaves[i]);
    for (size_t c = 0; c < inputs[i].size(); ++c) {
      std::vector<Matrix> plus = inputs, minus = inputs;
      plus[i].data()[c] += eps;
      minus[i].data()[c] -= eps;
      double numeric = (eval(plus) - eval(minus)) / (2.0 * eps);
      double a = analytic.data()[c];
      double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-4});
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_input = static_cast<int>(i);
        report.worst_coordinate = static_cast<int>(c);
      }
    }
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

}  // namespace gpf
