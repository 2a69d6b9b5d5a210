#include "core/prompt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace gpf {

Graph apply_prompt(const Graph& g, const PromptVector& p) {
  if (p.dim() != g.feature_dim())
    throw ValidationError("prompt dimension " + std::to_string(p.dim()) +
                          " does not match feature dimension " + std::to_string(g.feature_dim()));
  Graph out = g;
  for (int i = 0; i < out.node_count(); ++i)
    for (int j = 0; j < out.feature_dim(); ++j) out.features(i, j) += p.values[j];
  if (!out.features.all_finite()) throw NumericError("prompt produced non-finite features");
  return out;
}

namespace {

bool spec_changes_node_count(const TransformSpec& spec) {
  return std::visit(
      [](const auto& t) -> bool {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, IsolatedComponentTransform>) {
          return !t.edits.empty();
        } else if constexpr (std::is_same_v<T, CompositeTransform>) {
          for (const TransformSpec& s : t.steps)
            if (spec_changes_node_count(s)) return true;
          return false;
        } else {
          return false;
        }
      },
      spec.op);
}

// Column sums of (A + (1+eps) I) * M, i.e. the appendix Sum(.) of the mixed
// matrix, without forming the product.
std::vector<double> mixed_column_sums(const Matrix& adjacency, double eps, const Matrix& m) {
  int n = m.rows(), f = m.cols();
  std::vector<double> out(f, 0.0);
  for (int i = 0; i < n; ++i) {
    double row_weight = 1.0 + eps;  // self-loop coefficient
    for (int j = 0; j < f; ++j) out[j] += row_weight * m(i, j);
    for (int k = 0; k < n; ++k) {
      if (adjacency(i, k) == 0.0) continue;
      for (int j = 0; j < f; ++j) out[j] += m(k, j);
    }
  }
  return out;
}

struct SolveContext {
  double denominator = 0.0;
  double epsilon = 0.0;
  int feature_dim = 0;
};

// Numerator of the closed form for one primitive step, evaluated against the
// graph the step applies to.
std::vector<double> step_numerator(const Graph& host, const TransformSpec& step,
                                   const SolveContext& ctx, Graph* next_out);

std::vector<double> feature_numerator(const Graph& host, const FeatureTransform& t,
                                      const SolveContext& ctx) {
  if (!t.delta_features.same_shape(host.features))
    throw ValidationError("feature transform delta has wrong shape");
  // alpha_j numerator: column sums of B = (A + (1+eps) I) * DeltaX.
  return mixed_column_sums(host.adjacency, ctx.epsilon, t.delta_features);
}

std::vector<double> link_numerator(const Graph& host, const LinkTransform& t,
                                   const SolveContext& ctx) {
  // alpha_j numerator: sum over ordered pairs (k,l) of delta_a(k,l) * x(l,j),
  // i.e. column sums of DeltaA * X.
  const Matrix& d = t.delta_adjacency;
  int n = host.node_count();
  if (d.rows() != n || d.cols() != n) throw ValidationError("link transform delta has wrong shape");
  std::vector<double> out(ctx.feature_dim, 0.0);
  for (int k = 0; k < n; ++k)
    for (int l = 0; l < n; ++l) {
      double dv = d(k, l);
      if (dv == 0.0) continue;
      for (int j = 0; j < ctx.feature_dim; ++j) out[j] += dv * host.features(l, j);
    }
  return out;
}

std::vector<double> ict_numerator(const Graph& host, const IsolatedComponentTransform& t,
                                  const SolveContext& ctx, Graph* next_out) {
  std::vector<double> out(ctx.feature_dim, 0.0);
  Graph cur = host;
  for (const ComponentEdit& edit : t.edits) {
    if (const auto* a = std::get_if<AddComponent>(&edit)) {
      std::vector<double> s =
          mixed_column_sums(a->component.adjacency, ctx.epsilon, a->component.features);
      for (int j = 0; j < ctx.feature_dim; ++j) out[j] += s[j];
      cur = apply_transform(cur, TransformSpec{IsolatedComponentTransform{{edit}}});
    } else {
      const auto& removal = std::get<RemoveComponent>(edit);
      // Extract the removed block; apply_transform validates closure below.
      std::vector<int> nodes = removal.nodes;
      std::sort(nodes.begin(), nodes.end());
      int m = static_cast<int>(nodes.size());
      Matrix sub_adj(m, m);
      Matrix sub_feat(m, ctx.feature_dim);
      for (int i = 0; i < m; ++i) {
        if (nodes[i] < 0 || nodes[i] >= cur.node_count())
          throw ValidationError("removal node index out of range");
        for (int k = 0; k < m; ++k) sub_adj(i, k) = cur.adjacency(nodes[i], nodes[k]);
        for (int j = 0; j < ctx.feature_dim; ++j) sub_feat(i, j) = cur.features(nodes[i], j);
      }
      cur = apply_transform(cur, TransformSpec{IsolatedComponentTransform{{edit}}});
      std::vector<double> s = mixed_column_sums(sub_adj, ctx.epsilon, sub_feat);
      for (int j = 0; j < ctx.feature_dim; ++j) out[j] -= s[j];
    }
  }
  if (next_out) *next_out = std::move(cur);
  return out;
}

std::vector<double> step_numerator(const Graph& host, const TransformSpec& step,
                                   const SolveContext& ctx, Graph* next_out) {
  return std::visit(
      [&](const auto& t) -> std::vector<double> {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, FeatureTransform>) {
          std::vector<double> num = feature_numerator(host, t, ctx);
          if (next_out) *next_out = apply_transform(host, step);
          return num;
        } else if constexpr (std::is_same_v<T, LinkTransform>) {
          std::vector<double> num = link_numerator(host, t, ctx);
          if (next_out) *next_out = apply_transform(host, step);
          return num;
        } else if constexpr (std::is_same_v<T, IsolatedComponentTransform>) {
          return ict_numerator(host, t, ctx, next_out);
        } else {
          throw ValidationError("composite steps must be flattened before numerator evaluation");
        }
      },
      step.op);
}

void collect_steps(const TransformSpec& spec, std::vector<const TransformSpec*>& out) {
  if (const auto* comp = std::get_if<CompositeTransform>(&spec.op)) {
    for (const TransformSpec& s : comp->steps) collect_steps(s, out);
  } else {
    out.push_back(&spec);
  }
}

}  // namespace

std::optional<std::string> solver_grade_violation(const GnnModel& m, const Graph& g,
                                                  const TransformSpec& spec) {
  if (m.layers.size() != 1)
    return "model must have exactly one layer (has " + std::to_string(m.layers.size()) + ")";
  const LayerSpec& layer = m.layers[0];
  if (layer.kind != LayerKind::gin) return "layer must be GIN (GCN has no closed form)";
  if (std::holds_alternative<MlpUpdate>(layer.update))
    return "GIN update must be a single linear transform, not an MLP";
  if (std::get<LinearUpdate>(layer.update).bias.has_value())
    return "GIN linear update must not carry a bias";
  if (m.activation != Activation::none) return "activation must be none";
  if (m.readout == Readout::mean && spec_changes_node_count(spec))
    return "mean readout with a node-count-changing transformation has no closed form; "
           "use fit_prompt";
  (void)g;
  return std::nullopt;
}

std::vector<PromptVector> solve_prompt_steps(const Graph& g, const TransformSpec& spec,
                                             const GnnModel& m) {
  validate_graph(g);
  validate_model(m);
  if (g.feature_dim() != m.input_dim())
    throw ValidationError("graph feature dimension does not match model input dimension");
  if (auto why = solver_grade_violation(m, g, spec))
    throw ValidationError("model is not solver-grade: " + *why);

  SolveContext ctx;
  ctx.epsilon = m.layers[0].epsilon;
  ctx.feature_dim = g.feature_dim();
  // D, N of the ORIGINAL graph: the prompt perturbs that graph, so every
  // per-step compensation is scaled by its degree mass.
  ctx.denominator = g.total_degree() + g.node_count() * (1.0 + ctx.epsilon);
  if (std::abs(ctx.denominator) < 1e-12)
    throw NumericError("degenerate denominator D + N + N*eps = 0");

  std::vector<const TransformSpec*> steps;
  collect_steps(spec, steps);

  std::vector<PromptVector> out;
  Graph cur = g;
  for (const TransformSpec* step : steps) {
    Graph next = cur;
    std::vector<double> num = step_numerator(cur, *step, ctx, &next);
    PromptVector p = PromptVector::zeros(ctx.feature_dim);
    for (int j = 0; j < ctx.feature_dim; ++j) p.values[j] = num[j] / ctx.denominator;
    out.push_back(std::move(p));
    cur = std::move(next);
  }
  if (out.empty()) out.push_back(PromptVector::zeros(ctx.feature_dim));  // empty composite
  return out;
}

PromptVector solve_prompt(const Graph& g, const TransformSpec& spec, const GnnModel& m) {
  std::vector<PromptVector> steps = solve_prompt_steps(g, spec, m);
  PromptVector total = PromptVector::zeros(g.feature_dim());
  for (const PromptVector& p : steps)
    for (int j = 0; j < total.dim(); ++j) total.values[j] += p.values[j];
  return total;
}

EquivalenceReport verify_equivalence(const GnnModel& m, const Graph& g, const TransformSpec& spec,
                                     const PromptVector& p, double tolerance) {
  validate_model(m);
  EquivalenceReport report;
  report.tolerance = tolerance;
  report.prompt_embedding = embed_graph(m, apply_prompt(g, p));
  report.target_embedding = embed_graph(m, apply_transform(g, spec));
  double max_target = 0.0;
  for (size_t i = 0; i < report.target_embedding.size(); ++i) {
    report.abs_error = std::max(
        report.abs_error, std::abs(report.prompt_embedding[i] - report.target_embedding[i]));
    max_target = std::max(max_target, std::abs(report.target_embedding[i]));
  }
  report.rel_error = report.abs_error / (max_target + 1e-30);
  report.passed = report.rel_error <= tolerance;
  return report;
}

namespace {

double prompt_residual(const GnnModel& m, const Graph& g, const std::vector<double>& target,
                       const PromptVector& p) {
  std::vector<double> e = embed_graph(m, apply_prompt(g, p));
  double acc = 0.0;
  for (size_t i = 0; i < e.size(); ++i) {
    double d = e[i] - target[i];
    acc += d * d;
  }
  return acc;
}

}  // namespace

FitResult fit_prompt(const GnnModel& m, const Graph& g, const TransformSpec& spec,
                     const FitOptions& opt) {
  validate_graph(g);
  validate_model(m);
  if (g.feature_dim() != m.input_dim())
    throw ValidationError("graph feature dimension does not match model input dimension");
  if (opt.learning_rate <= 0.0) throw ValidationError("learning rate must be positive");

  const std::vector<double> target = embed_graph(m, apply_transform(g, spec));
  const int f = g.feature_dim();
  const int fp = static_cast<int>(target.size());

  Matrix target_row(1, fp);
  target_row.data() = target;

  PromptVector p = PromptVector::zeros(f);
  FitResult result;
  result.prompt = p;
  result.residual = prompt_residual(m, g, target, p);
  result.initial_residual = result.residual;

  double lr = opt.learning_rate;
  double current = result.residual;

  for (int step = 0; step < opt.max_steps && result.residual > opt.target_residual; ++step) {
    result.steps_taken = step + 1;

    Tape tape;
    Matrix p_row(1, f);
    p_row.data() = p.values;
    Tensor p_leaf = tape.leaf(std::move(p_row), true);
    Tensor x = tape.broadcast_add_row(tape.constant(g.features), p_leaf);
    BoundModel bm = bind_model_const(tape, m);
    Tensor emb = embedding_on_tape(tape, bm, g, x);
    // Squared distance = mse * embedding width.
    Tensor residual_t = tape.scale(tape.mse_loss(emb, tape.constant(target_row)), fp);
    double loss = tape.scalar_value(residual_t);
    if (!std::isfinite(loss))
      throw NumericError("fit_prompt: non-finite residual (learning rate too large?)");
    tape.backward(residual_t);
    const Matrix& grad = tape.grad(p_leaf);

    double grad_norm2 = 0.0;
    for (double v : grad.data()) grad_norm2 += v * v;
    if (grad_norm2 == 0.0) break;

    if (opt.backtracking) {
      bool accepted = false;
      for (int tries = 0; tries < 60; ++tries) {
        PromptVector cand = p;
        for (int j = 0; j < f; ++j) cand.values[j] -= lr * grad(0, j);
        double cand_loss = prompt_residual(m, g, target, cand);
        if (std::isfinite(cand_loss) && cand_loss <= loss - 1e-4 * lr * grad_norm2) {
          p = std::move(cand);
          current = cand_loss;
          accepted = true;
          lr = std::min(lr * 2.0, opt.learning_rate * 1024.0);
          break;
        }
        lr *= 0.5;
        if (lr < 1e-18) break;
      }
      if (!accepted) break;  // stalled: step size collapsed
    } else {
      for (int j = 0; j < f; ++j) p.values[j] -= lr * grad(0, j);
      current = prompt_residual(m, g, target, p);
      if (!std::isfinite(current))
        throw NumericError("fit_prompt: non-finite residual (learning rate too large?)");
    }

    if (current < result.residual) {
      result.residual = current;
      result.prompt = p;
    }
  }
  return result;
}

void save_prompt(const PromptVector& p, const std::string& path) {
  nlohmann::json doc;
  doc["version"] = 1;
  doc["dim"] = p.dim();
  doc["p"] = p.values;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write prompt file: " + path);
  out << doc.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

PromptVector load_prompt(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open prompt file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  nlohmann::json doc = nlohmann::json::parse(buf.str(), nullptr, false);
  if (doc.is_discarded()) throw ValidationError("malformed prompt file: " + path);
  try {
    if (doc.at("version").get<int>() != 1)
      throw ValidationError("incompatible prompt file version");
    PromptVector p;
    p.values = doc.at("p").get<std::vector<double>>();
    if (static_cast<int>(p.values.size()) != doc.at("dim").get<int>())
      throw ValidationError("prompt file dim disagrees with vector length");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed prompt file " + path + ": " + e.what());
  }
}

}  // namespace gpf
