#include <cmath>
#include <random>

#include "core/tensor.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace gpf;

namespace {

// Random values kept away from relu's kink so central differences stay clean.
Matrix random_away_from_zero(std::mt19937_64& rng, int rows, int cols) {
  Matrix m = test::random_matrix(rng, rows, cols, 0.05, 1.0);
  std::uniform_int_distribution<int> sign(0, 1);
  for (double& v : m.data())
    if (sign(rng)) v = -v;
  return m;
}

}  // namespace

TEST_CASE("forward values of the primitives") {
  Tape tape;
  Tensor x = tape.constant(Matrix::from_rows({{1, 2}, {3, 4}}));

  SUBCASE("broadcast_add_row with a zero row is the identity") {
    Tensor z = tape.constant(Matrix(1, 2));
    Tensor out = tape.broadcast_add_row(x, z);
    CHECK(exactly_equal(tape.value(out), tape.value(x)));
  }
  SUBCASE("row_mean equals row_sum scaled by 1/N") {
    Tensor mean = tape.row_mean(x);
    Tensor scaled = tape.scale(tape.row_sum(x), 0.5);
    CHECK(tape.value(mean)(0, 0) == doctest::Approx(tape.value(scaled)(0, 0)).epsilon(1e-15));
    CHECK(tape.value(mean)(0, 1) == doctest::Approx(tape.value(scaled)(0, 1)).epsilon(1e-15));
  }
  SUBCASE("bce at logit 0 and label 1 is ln 2") {
    Tensor z = tape.constant(Matrix(1, 1));
    Matrix one(1, 1);
    one(0, 0) = 1.0;
    Tensor y = tape.constant(std::move(one));
    CHECK(tape.scalar_value(tape.bce_loss(z, y)) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("bce rejects labels outside {0,1}") {
    Tensor z = tape.constant(Matrix(1, 1));
    Matrix half(1, 1);
    half(0, 0) = 0.5;
    Tensor y = tape.constant(std::move(half));
    CHECK_THROWS_AS(tape.bce_loss(z, y), ValidationError);
  }
  SUBCASE("shape mismatches are rejected") {
    Tensor bad = tape.constant(Matrix(3, 3));
    CHECK_THROWS_AS(tape.add(x, bad), ValidationError);
    CHECK_THROWS_AS(tape.matmul(x, tape.constant(Matrix(3, 1))), ValidationError);
    CHECK_THROWS_AS(tape.broadcast_add_row(x, tape.constant(Matrix(1, 3))), ValidationError);
  }
}

TEST_CASE("grad of broadcast_add_row's row equals the column sums of upstream") {
  Tape tape;
  Tensor m = tape.constant(Matrix::from_rows({{1, 2}, {3, 4}, {5, 6}}));
  Tensor row = tape.leaf(Matrix(1, 2), true);
  Tensor out = tape.row_sum(tape.broadcast_add_row(m, row));
  // collapse to scalar: weights 1 and 2 on the two columns
  Tensor w = tape.constant(Matrix::from_rows({{1}, {2}}));
  Tensor s = tape.matmul(out, w);
  tape.backward(s);
  // upstream gradient at the broadcast output is [[1,2]] per row; column sums
  // over 3 rows give [3, 6].
  CHECK(tape.grad(row)(0, 0) == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(tape.grad(row)(0, 1) == doctest::Approx(6.0).epsilon(1e-14));
}

TEST_CASE("constant functions grad-check trivially") {
  auto f = [](Tape& t, const std::vector<Tensor>&) { return t.scalar_constant(5.0); };
  GradCheckReport report = grad_check(f, {Matrix(2, 2)}, 1e-5, 1e-4);
  CHECK(report.passed);
  CHECK(report.max_rel_error == 0.0);
}

TEST_CASE("quadratic gradient matches its analytic derivative") {
  // f(x) = x^2 via mse against 0 at x = 3: grad = 2x = 6
  auto f = [](Tape& t, const std::vector<Tensor>& in) {
    return t.mse_loss(in[0], t.constant(Matrix(1, 1)));
  };
  Matrix x(1, 1);
  x(0, 0) = 3.0;
  Tape tape;
  Tensor leaf = tape.leaf(x, true);
  tape.backward(tape.mse_loss(leaf, tape.constant(Matrix(1, 1))));
  CHECK(tape.grad(leaf)(0, 0) == doctest::Approx(6.0).epsilon(1e-12));

  GradCheckReport report = grad_check(f, {x}, 1e-5, 1e-8);
  CHECK(report.passed);
}

TEST_CASE("every primitive passes grad_check at 5 random points") {
  std::mt19937_64 rng(101);
  for (int point = 0; point < 5; ++point) {
    Matrix a = random_away_from_zero(rng, 3, 4);
    Matrix b = random_away_from_zero(rng, 4, 2);
    Matrix row = random_away_from_zero(rng, 1, 4);
    Matrix labels(3, 2);
    for (double& v : labels.data()) v = static_cast<double>(rng() % 2);

    auto scalarize = [](Tape& t, Tensor m) {
      // weight the entries so the pass is not fooled by symmetric cancellation
      Matrix w(m.cols, 1);
      for (int i = 0; i < m.cols; ++i) w(i, 0) = 0.3 * (i + 1);
      return t.matmul(t.row_sum(m), t.constant(std::move(w)));
    };

    auto check = [&](const char* name, auto&& fn, std::vector<Matrix> inputs) {
      GradCheckReport r = grad_check(fn, inputs, 1e-5, 1e-4);
      INFO(name << " max rel error " << r.max_rel_error);
      CHECK(r.passed);
    };

    check("matmul", [&](Tape& t, const std::vector<Tensor>& in) {
      return scalarize(t, t.matmul(in[0], in[1]));
    }, {a, b});
    check("add", [&](Tape& t, const std::vector<Tensor>& in) {
      return scalarize(t, t.add(in[0], in[1]));
    }, {a, a});
    check("scale", [&](Tape& t, const std::vector<Tensor>& in) {
      return scalarize(t, t.scale(in[0], -1.7));
    }, {a});
    check("scale_by", [&](Tape& t, const std::vector<Tensor>& in) {
      return scalarize(t, t.scale_by(in[0], in[1]));
    }, {a, random_away_from_zero(rng, 1, 1)});
    check("broadcast_add_row", [&](Tape& t, const std::vector<Tensor>& in) {
      return scalarize(t, t.broadcast_add_row(in[0], in[1]));
    }, {a, row});
    check("relu", [&](Tape& t, const std::vector<Tensor>& in) {
      return scalarize(t, t.relu(in[0]));
    }, {a});
    check("sigmoid", [&](Tape& t, const std::vector<Tensor>& in) {
      return scalarize(t, t.sigmoid(in[0]));
    }, {a});
    check("row_sum", [&](Tape& t, const std::vector<Tensor>& in) {
      return scalarize(t, t.row_sum(in[0]));
    }, {a});
    check("row_mean", [&](Tape& t, const std::vector<Tensor>& in) {
      return scalarize(t, t.row_mean(in[0]));
    }, {a});
    check("pair_dot", [&](Tape& t, const std::vector<Tensor>& in) {
      return scalarize(t, t.pair_dot(in[0], {{0, 1}, {1, 2}, {0, 0}}));
    }, {a});
    check("bce_loss", [&](Tape& t, const std::vector<Tensor>& in) {
      return t.bce_loss(in[0], t.constant(labels));
    }, {random_away_from_zero(rng, 3, 2)});
    check("mse_loss", [&](Tape& t, const std::vector<Tensor>& in) {
      return t.mse_loss(in[0], in[1]);
    }, {a, random_away_from_zero(rng, 3, 4)});
  }
}

TEST_CASE("backward replays are bitwise deterministic") {
  std::mt19937_64 rng(55);
  Matrix a = test::random_matrix(rng, 4, 3);
  Matrix b = test::random_matrix(rng, 3, 2);

  auto run = [&]() {
    Tape tape;
    Tensor ta = tape.leaf(a, true);
    Tensor tb = tape.leaf(b, true);
    Tensor out = tape.mse_loss(tape.relu(tape.matmul(ta, tb)),
                               tape.constant(Matrix(4, 2)));
    tape.backward(out);
    return std::pair<Matrix, Matrix>(tape.grad(ta), tape.grad(tb));
  };
  auto [ga1, gb1] = run();
  auto [ga2, gb2] = run();
  CHECK(exactly_equal(ga1, ga2));
  CHECK(exactly_equal(gb1, gb2));
}

TEST_CASE("grads of non-requires_grad tensors are never readable") {
  Tape tape;
  Tensor c = tape.constant(Matrix(2, 2));
  CHECK_THROWS_AS(tape.grad(c), ValidationError);
}

TEST_CASE("backward requires a scalar and zero_grads resets") {
  Tape tape;
  Tensor leaf = tape.leaf(Matrix::from_rows({{1.0, 2.0}}), true);
  CHECK_THROWS_AS(tape.backward(leaf), ValidationError);
  Tensor s = tape.matmul(leaf, tape.constant(Matrix::from_rows({{1.0}, {1.0}})));
  tape.backward(s);
  CHECK(tape.grad(leaf)(0, 0) == 1.0);
  tape.zero_grads();
  CHECK(tape.grad(leaf)(0, 0) == 0.0);
}
