#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "core/matrix.hpp"

namespace gpf {

/// Lightweight handle into a Tape. Cheap to copy; valid only for the tape
/// that created it.
struct Tensor {
  int id = -1;
  int rows = 0;
  int cols = 0;
  bool is_scalar() const { return rows == 1 && cols == 1; }
};

/// Dynamic reverse-mode tape. Each primitive records exactly what it needs to
/// replay the chain rule; backward() walks the records once, in reverse
/// creation order, so gradient accumulation order is fixed and replays are
/// bitwise deterministic. A tape is confined to one worker.
class Tape {
 public:
  Tensor leaf(Matrix value, bool requires_grad = false);
  Tensor constant(Matrix value) { return leaf(std::move(value), false); }
  Tensor scalar_constant(double v);

  Tensor matmul(Tensor a, Tensor b);
  Tensor add(Tensor a, Tensor b);
  Tensor scale(Tensor a, double c);
  /// Elementwise multiply by a 1x1 tensor (used for trainable GIN epsilon).
  Tensor scale_by(Tensor a, Tensor scalar);
  /// Adds a 1xC row vector to every row of an NxC matrix. The gradient of the
  /// row argument is the column-sum of the upstream gradient.
  Tensor broadcast_add_row(Tensor m, Tensor row);
  Tensor relu(Tensor a);
  Tensor sigmoid(Tensor a);
  /// Sum of the row vectors: NxC -> 1xC.
  Tensor row_sum(Tensor m);
  /// row_sum / N.
  Tensor row_mean(Tensor m);
  /// Dot products of row pairs: out(k,0) = <m[pairs[k].first,:], m[pairs[k].second,:]>.
  Tensor pair_dot(Tensor m, std::vector<std::pair<int, int>> pairs);
  /// Mean over entries of the logistic loss with logits; labels must be 0/1.
  Tensor bce_loss(Tensor logits, Tensor labels);
  /// Mean over entries of (a-b)^2.
  Tensor mse_loss(Tensor a, Tensor b);

  const Matrix& value(Tensor t) const { return nodes_[t.id].value; }
  const Matrix& grad(Tensor t) const;
  double scalar_value(Tensor t) const;

  void zero_grads();
  /// Reverse pass from a scalar output; visits each record exactly once.
  void backward(Tensor output);

  size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op {
    leaf,
    matmul,
    add,
    scale,
    scale_by,
    broadcast_add_row,
    relu,
    sigmoid,
    row_sum,
    row_mean,
    pair_dot,
    bce_loss,
    mse_loss,
  };

  struct Node {
    Op op = Op::leaf;
    int a = -1;
    int b = -1;
    double c = 0.0;
    std::vector<std::pair<int, int>> pairs;
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
  };

  Tensor push(Node node);
  Node& at(Tensor t);
  void check_owned(Tensor t) const;

  std::vector<Node> nodes_;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  bool passed = false;
  int worst_input = -1;
  int worst_coordinate = -1;
};

/// Central-difference check of reverse-mode gradients. `f` must build a
/// scalar output from the leaves it is handed (one per entry of `inputs`,
/// all requires_grad). Relative error uses max(|analytic|,|numeric|,1e-4)
/// as denominator so near-zero gradients are judged on absolute terms.
GradCheckReport grad_check(
    const std::function<Tensor(Tape&, const std::vector<Tensor>&)>& f,
    const std::vector<Matrix>& inputs, double eps, double tol);

}  // namespace gpf
