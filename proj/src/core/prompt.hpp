#pragma once

#include <optional>
#include <string>
#include <vector>

#include "core/gnn.hpp"
#include "core/graph.hpp"

namespace gpf {

/// The GPF prompt: one learnable F-dimensional vector added to every node's
/// features before the frozen model runs.
struct PromptVector {
  std::vector<double> values;
  bool trainable = true;

  int dim() const { return static_cast<int>(values.size()); }
  static PromptVector zeros(int dim) { return PromptVector{std::vector<double>(dim, 0.0), true}; }
};

/// X* rows are x_i + p; adjacency unchanged. Pure.
Graph apply_prompt(const Graph& g, const PromptVector& p);

/// Null when the model satisfies the closed-form solver's preconditions for
/// this spec; otherwise a message naming the violated precondition.
/// Solver-grade means: single layer, GIN, linear update without bias, no
/// activation, sum readout. Mean readout is additionally accepted when the
/// spec preserves the node count (mean and sum equivalence coincide there);
/// node-count-changing specs under mean readout have no proven closed form
/// and must go through fit_prompt.
std::optional<std::string> solver_grade_violation(const GnnModel& m, const Graph& g,
                                                  const TransformSpec& spec);

/// Closed-form prompt making f(A, X+p) equal f(spec(A,X)) exactly for
/// solver-grade models. Composites are solved step by step against the
/// running intermediate graph and the per-step prompts are summed; every
/// per-step denominator is D + N + N*eps of the ORIGINAL graph, since the
/// summed prompt acts on the original graph.
PromptVector solve_prompt(const Graph& g, const TransformSpec& spec, const GnnModel& m);

/// Per-step prompts whose coordinate-wise sum is solve_prompt(...). A
/// non-composite spec yields a single entry.
std::vector<PromptVector> solve_prompt_steps(const Graph& g, const TransformSpec& spec,
                                             const GnnModel& m);

struct EquivalenceReport {
  std::vector<double> prompt_embedding;
  std::vector<double> target_embedding;
  double abs_error = 0.0;
  double rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

/// Compares f(A, X+p) against f(spec(A,X)) at the embedding level. Works for
/// any model; pure.
EquivalenceReport verify_equivalence(const GnnModel& m, const Graph& g, const TransformSpec& spec,
                                     const PromptVector& p, double tolerance);

struct FitOptions {
  int max_steps = 10000;
  double learning_rate = 0.05;
  double target_residual = 1e-10;
  bool backtracking = true;
};

struct FitResult {
  PromptVector prompt;
  double residual = 0.0;      // squared embedding distance at the returned prompt
  double initial_residual = 0.0;
  int steps_taken = 0;
};

/// Gradient descent on p alone (backbone frozen), minimizing
/// ||f(A,X+p) - f(spec(A,X))||^2 from p = 0. Returns the best prompt seen,
/// so the residual never exceeds the starting one.
FitResult fit_prompt(const GnnModel& m, const Graph& g, const TransformSpec& spec,
                     const FitOptions& opt);

/// Prompt file: {"version":1,"dim":F,"p":[floats]}.
void save_prompt(const PromptVector& p, const std::string& path);
PromptVector load_prompt(const std::string& path);

}  // namespace gpf
