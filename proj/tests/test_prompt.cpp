#include <cmath>
#include <filesystem>
#include <random>

#include "core/prompt.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace gpf;

namespace {

Graph k2() {
  return make_graph(Matrix::from_rows({{0, 1}, {1, 0}}), Matrix::from_rows({{1.0}, {2.0}}));
}

Graph k2_plus_isolated() {
  Matrix a(3, 3);
  a(0, 1) = a(1, 0) = 1.0;
  return make_graph(std::move(a), Matrix::from_rows({{1.0}, {2.0}, {4.0}}));
}

GnnModel unit_solver_model() { return test::solver_grade_model(Matrix::from_rows({{1.0}}), 0.0); }

double sum_embedding_1d(const Graph& g, const GnnModel& m) {
  return test::naive_solver_embedding(g, m).at(0);
}

}  // namespace

TEST_CASE("apply_prompt basics") {
  Graph g = k2();
  CHECK(graphs_equal(apply_prompt(g, PromptVector::zeros(1)), g));

  Graph shifted = apply_prompt(g, PromptVector{{0.5}, true});
  CHECK(exactly_equal(shifted.features, Matrix::from_rows({{1.5}, {2.5}})));

  // additivity
  Graph twice = apply_prompt(apply_prompt(g, PromptVector{{0.25}, true}), PromptVector{{0.25}, true});
  CHECK(exactly_equal(twice.features, shifted.features));

  CHECK_THROWS_AS(apply_prompt(g, PromptVector::zeros(3)), ValidationError);
}

TEST_CASE("hand-derived K2 fixtures solve exactly") {
  GnnModel m = unit_solver_model();

  SUBCASE("feature transform: p* = [0.5], both embeddings 8") {
    Graph g = k2();
    TransformSpec spec{FeatureTransform{Matrix::from_rows({{1.0}, {0.0}})}};
    PromptVector p = solve_prompt(g, spec, m);
    REQUIRE(p.dim() == 1);
    CHECK(p.values[0] == 0.5);
    CHECK(sum_embedding_1d(apply_prompt(g, p), m) == doctest::Approx(8.0).epsilon(1e-14));
    CHECK(sum_embedding_1d(apply_transform(g, spec), m) == doctest::Approx(8.0).epsilon(1e-14));
  }
  SUBCASE("edge removal: p* = [-0.75], both embeddings 3") {
    Graph g = k2();
    TransformSpec spec{LinkTransform{Matrix::from_rows({{0, -1}, {-1, 0}})}};
    PromptVector p = solve_prompt(g, spec, m);
    CHECK(p.values[0] == -0.75);
    CHECK(sum_embedding_1d(apply_prompt(g, p), m) == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(sum_embedding_1d(apply_transform(g, spec), m) == doctest::Approx(3.0).epsilon(1e-14));
  }
  SUBCASE("isolated-node removal: p* = [-0.8], both embeddings 6") {
    Graph g = k2_plus_isolated();
    TransformSpec spec{IsolatedComponentTransform{{RemoveComponent{{2}}}}};
    PromptVector p = solve_prompt(g, spec, m);
    CHECK(p.values[0] == -0.8);
    CHECK(sum_embedding_1d(apply_prompt(g, p), m) == doctest::Approx(6.0).epsilon(1e-14));
    CHECK(sum_embedding_1d(apply_transform(g, spec), m) == doctest::Approx(6.0).epsilon(1e-14));
  }
  SUBCASE("isolated-node addition: p* = [1.0], both embeddings 10") {
    Graph g = k2();
    Graph extra = make_graph(Matrix(1, 1), Matrix::from_rows({{4.0}}));
    TransformSpec spec{IsolatedComponentTransform{{AddComponent{extra}}}};
    PromptVector p = solve_prompt(g, spec, m);
    CHECK(p.values[0] == 1.0);
    CHECK(sum_embedding_1d(apply_prompt(g, p), m) == doctest::Approx(10.0).epsilon(1e-14));
    CHECK(sum_embedding_1d(apply_transform(g, spec), m) == doctest::Approx(10.0).epsilon(1e-14));
  }
}

TEST_CASE("zero feature delta solves to the zero prompt") {
  std::mt19937_64 rng(2);
  Graph g = test::random_graph(rng, 9, 4, 0.3);
  GnnModel m = test::solver_grade_model(test::random_matrix(rng, 4, 3), 0.25);
  PromptVector p = solve_prompt(g, TransformSpec{FeatureTransform{Matrix(g.node_count(), 4)}}, m);
  for (double v : p.values) CHECK(v == 0.0);
}

TEST_CASE("solver-grade preconditions are named in errors") {
  std::mt19937_64 rng(4);
  Graph g = test::random_graph(rng, 6, 3, 0.4);
  TransformSpec spec = test::random_feature_spec(rng, g);

  auto expect_violation = [&](GnnModel m, const std::string& needle) {
    auto why = solver_grade_violation(m, g, spec);
    REQUIRE(why.has_value());
    INFO(*why);
    CHECK(why->find(needle) != std::string::npos);
    CHECK_THROWS_AS(solve_prompt(g, spec, m), ValidationError);
  };

  // two layers
  {
    ModelConfig cfg;
    cfg.layers.push_back({LayerKind::gin, 3, 3, 0.0, false, false});
    cfg.layers.push_back({LayerKind::gin, 3, 3, 0.0, false, false});
    cfg.activation = Activation::none;
    expect_violation(build_model(cfg, 1), "one layer");
  }
  // GCN
  {
    ModelConfig cfg;
    cfg.layers.push_back({LayerKind::gcn, 3, 3, 0.0, false, false});
    cfg.activation = Activation::none;
    expect_violation(build_model(cfg, 1), "GIN");
  }
  // MLP update
  {
    ModelConfig cfg;
    cfg.layers.push_back({LayerKind::gin, 3, 3, 0.0, true, false});
    cfg.activation = Activation::none;
    expect_violation(build_model(cfg, 1), "MLP");
  }
  // bias
  {
    ModelConfig cfg;
    cfg.layers.push_back({LayerKind::gin, 3, 3, 0.0, false, true});
    cfg.activation = Activation::none;
    expect_violation(build_model(cfg, 1), "bias");
  }
  // relu activation setting
  {
    ModelConfig cfg;
    cfg.layers.push_back({LayerKind::gin, 3, 3, 0.0, false, false});
    cfg.activation = Activation::relu;
    expect_violation(build_model(cfg, 1), "activation");
  }
}

TEST_CASE("mean readout: allowed while N is fixed, rejected when N changes") {
  std::mt19937_64 rng(6);
  Graph g = test::random_graph(rng, 8, 3, 0.4);
  GnnModel m = test::solver_grade_model(test::random_matrix(rng, 3, 3), 0.4, Readout::mean);

  TransformSpec feature = test::random_feature_spec(rng, g);
  CHECK_FALSE(solver_grade_violation(m, g, feature).has_value());
  PromptVector p = solve_prompt(g, feature, m);
  CHECK(verify_equivalence(m, g, feature, p, 1e-9).passed);

  Graph extra = make_graph(Matrix(1, 1), Matrix(1, 3));
  TransformSpec ict{IsolatedComponentTransform{{AddComponent{extra}}}};
  auto why = solver_grade_violation(m, g, ict);
  REQUIRE(why.has_value());
  CHECK(why->find("fit_prompt") != std::string::npos);
  CHECK_THROWS_AS(solve_prompt(g, ict, m), ValidationError);
}

TEST_CASE("exactness on random instances (Props 3-5, small property run)") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    int f = 1 + static_cast<int>(rng() % 8);
    int fp = 1 + static_cast<int>(rng() % 8);
    Graph g = test::random_graph(rng, 30, f, 0.25);
    double eps = static_cast<double>(rng() % 1000) / 999.0;
    GnnModel m = test::solver_grade_model(test::random_matrix(rng, f, fp), eps);

    TransformSpec spec = trial % 3 == 0   ? test::random_feature_spec(rng, g)
                         : trial % 3 == 1 ? test::random_link_spec(rng, g)
                                          : test::random_ict_spec(rng, g);
    PromptVector p = solve_prompt(g, spec, m);
    EquivalenceReport report = verify_equivalence(m, g, spec, p, 1e-9);
    INFO("trial " << trial << " rel error " << report.rel_error);
    CHECK(report.passed);

    // the appendix alpha formulas, reimplemented independently
    std::vector<double> oracle = test::oracle_solve(g, spec, eps);
    for (int j = 0; j < f; ++j) CHECK(std::abs(p.values[j] - oracle[j]) <= 1e-12);
  }
}

TEST_CASE("composite prompts are the sum of per-step prompts (Prop 6)") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    int f = 1 + static_cast<int>(rng() % 5);
    Graph g = test::random_graph(rng, 16, f, 0.3);
    double eps = static_cast<double>(rng() % 500) / 499.0;
    GnnModel m = test::solver_grade_model(test::random_matrix(rng, f, 4), eps);

    CompositeTransform comp;
    int n_steps = 2 + static_cast<int>(rng() % 2);
    {
      Graph cur = g;
      for (int s = 0; s < n_steps; ++s) {
        TransformSpec step = s % 3 == 0   ? test::random_feature_spec(rng, cur)
                             : s % 3 == 1 ? test::random_link_spec(rng, cur)
                                          : test::random_ict_spec(rng, cur);
        cur = apply_transform(cur, step);
        comp.steps.push_back(std::move(step));
      }
    }
    TransformSpec spec{std::move(comp)};

    PromptVector total = solve_prompt(g, spec, m);
    std::vector<PromptVector> steps = solve_prompt_steps(g, spec, m);
    CHECK(steps.size() == static_cast<size_t>(n_steps));
    for (int j = 0; j < f; ++j) {
      double acc = 0.0;
      for (const PromptVector& p : steps) acc += p.values[j];
      CHECK(std::abs(acc - total.values[j]) <= 1e-12);
    }
    CHECK(verify_equivalence(m, g, spec, total, 1e-9).passed);
  }
}

TEST_CASE("verify_equivalence reports and discriminates") {
  std::mt19937_64 rng(12);
  Graph g = test::random_graph(rng, 10, 3, 0.4);
  GnnModel m = test::solver_grade_model(test::random_matrix(rng, 3, 3), 0.1);

  SUBCASE("identity spec with zero prompt has zero error") {
    TransformSpec identity{FeatureTransform{Matrix(g.node_count(), 3)}};
    EquivalenceReport r = verify_equivalence(m, g, identity, PromptVector::zeros(3), 1e-9);
    CHECK(r.rel_error == 0.0);
    CHECK(r.passed);
  }
  SUBCASE("perturbing one coordinate of the exact prompt fails the check") {
    TransformSpec spec = test::random_feature_spec(rng, g);
    PromptVector p = solve_prompt(g, spec, m);
    p.values[0] += 1.0;
    CHECK_FALSE(verify_equivalence(m, g, spec, p, 1e-9).passed);
  }
}

TEST_CASE("fit_prompt recovers the closed form on solver-grade instances") {
  std::mt19937_64 rng(14);
  int f = 3;
  Graph g = test::random_graph(rng, 10, f, 0.4);
  // full-rank, well-conditioned theta so descent identifies p uniquely
  Matrix theta = Matrix::identity(f);
  theta(0, 1) = 0.3;
  theta(2, 0) = -0.2;
  GnnModel m = test::solver_grade_model(theta, 0.2);
  TransformSpec spec = test::random_link_spec(rng, g, 0.4);

  PromptVector exact = solve_prompt(g, spec, m);
  FitOptions opt;
  opt.max_steps = 10000;  // the convex quadratic must converge within this budget
  opt.target_residual = 1e-12;
  FitResult fit = fit_prompt(m, g, spec, opt);
  CHECK(fit.residual <= 1e-8);
  for (int j = 0; j < f; ++j) CHECK(std::abs(fit.prompt.values[j] - exact.values[j]) <= 1e-5);
}

TEST_CASE("a degenerate denominator is a numeric failure") {
  Graph g = k2();  // D = 2, N = 2, so eps = -2 zeroes D + N + N*eps
  GnnModel m = test::solver_grade_model(Matrix::from_rows({{1.0}}), -2.0);
  TransformSpec spec{FeatureTransform{Matrix::from_rows({{1.0}, {0.0}})}};
  CHECK_FALSE(solver_grade_violation(m, g, spec).has_value());
  CHECK_THROWS_AS(solve_prompt(g, spec, m), NumericError);
}

TEST_CASE("fit_prompt on the identity spec stays at zero") {
  std::mt19937_64 rng(16);
  Graph g = test::random_graph(rng, 8, 3, 0.4);
  ModelConfig cfg;
  cfg.layers.push_back({LayerKind::gin, 3, 4, 0.1, true, false});
  cfg.layers.push_back({LayerKind::gin, 4, 4, 0.0, false, false});
  GnnModel m = build_model(cfg, 9);
  TransformSpec identity{FeatureTransform{Matrix(g.node_count(), 3)}};
  FitResult fit = fit_prompt(m, g, identity, FitOptions{100, 0.1, 1e-12, true});
  CHECK(fit.residual == 0.0);
  CHECK(fit.residual <= fit.initial_residual);
}

TEST_CASE("fit_prompt keeps the best residual non-increasing") {
  std::mt19937_64 rng(18);
  Graph g = test::random_graph(rng, 9, 3, 0.4);
  ModelConfig cfg;
  cfg.layers.push_back({LayerKind::gin, 3, 5, 0.2, true, false});
  cfg.layers.push_back({LayerKind::gin, 5, 4, 0.1, true, false});
  GnnModel m = build_model(cfg, 21);
  TransformSpec spec = test::random_feature_spec(rng, g);

  double last = std::numeric_limits<double>::infinity();
  for (int steps : {1, 5, 25, 125, 625}) {
    FitResult fit = fit_prompt(m, g, spec, FitOptions{steps, 0.05, 1e-14, true});
    CHECK(fit.residual <= fit.initial_residual);
    CHECK(fit.residual <= last + 1e-15);
    last = fit.residual;
  }
}

TEST_CASE("prompt gradient equals the column sums of the feature gradient") {
  std::mt19937_64 rng(20);
  Graph g = test::random_graph(rng, 8, 4, 0.4);
  ModelConfig cfg;
  cfg.layers.push_back({LayerKind::gin, 4, 5, 0.3, true, false});
  cfg.layers.push_back({LayerKind::gcn, 5, 3, 0.0, false, false});
  GnnModel m = build_model(cfg, 33);
  Matrix label(1, 1);
  label(0, 0) = 1.0;

  // route 1: loss as a function of the prompt row
  Tape t1;
  Tensor p1 = t1.leaf(test::random_matrix(rng, 1, 4), true);
  BoundModel bm1 = bind_model_const(t1, m);
  Tensor x1 = t1.broadcast_add_row(t1.constant(g.features), p1);
  Tensor loss1 = t1.bce_loss(logit_on_tape(t1, bm1, embedding_on_tape(t1, bm1, g, x1)),
                             t1.constant(label));
  t1.backward(loss1);

  // route 2: loss as a function of the prompted features; column-sum the grad
  Tape t2;
  Tensor x2 = t2.leaf(t1.value(x1), true);
  BoundModel bm2 = bind_model_const(t2, m);
  Tensor loss2 = t2.bce_loss(logit_on_tape(t2, bm2, embedding_on_tape(t2, bm2, g, x2)),
                             t2.constant(label));
  t2.backward(loss2);

  const Matrix& gp = t1.grad(p1);
  const Matrix& gx = t2.grad(x2);
  for (int j = 0; j < 4; ++j) {
    double col = 0.0;
    for (int i = 0; i < gx.rows(); ++i) col += gx(i, j);
    CHECK(gp(0, j) == doctest::Approx(col).epsilon(1e-12));
  }

  // and against finite differences
  auto f = [&](Tape& t, const std::vector<Tensor>& in) {
    BoundModel bm = bind_model_const(t, m);
    Tensor x = t.broadcast_add_row(t.constant(g.features), in[0]);
    return t.bce_loss(logit_on_tape(t, bm, embedding_on_tape(t, bm, g, x)), t.constant(label));
  };
  GradCheckReport r = grad_check(f, {t1.value(p1)}, 1e-5, 1e-4);
  CHECK(r.passed);
}

TEST_CASE("prompt files round trip") {
  auto path = std::filesystem::temp_directory_path() / "gpf_prompt_test.json";
  PromptVector p{{0.5, -0.25, 1.75}, true};
  save_prompt(p, path.string());
  PromptVector back = load_prompt(path.string());
  CHECK(back.values == p.values);
  CHECK_THROWS_AS(load_prompt("/nonexistent/nowhere.json"), IoError);
  std::filesystem::remove(path);
}
