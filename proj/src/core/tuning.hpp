#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "core/gnn.hpp"
#include "core/graph.hpp"
#include "core/prompt.hpp"

namespace gpf {

enum class StrategyKind { full_fine_tune, gpf, partial_k, mlp_head_k, linear_probe };

struct Strategy {
  StrategyKind kind = StrategyKind::full_fine_tune;
  int k = 0;  // partial_k / mlp_head_k

  std::string name() const;
  /// "ft", "gpf", "partial-2", "mlp-3", "linear-probe".
  static Strategy parse(const std::string& text);
};

enum class LossKind { bce, mse };
enum class MetricKind { auc, accuracy };

struct TrainConfig {
  double learning_rate = 0.05;
  int epochs = 20;
  int batch_size = 16;
  std::uint64_t seed = 1;
  LossKind loss = LossKind::bce;
  int eval_every = 1;
  MetricKind metric = MetricKind::auc;
  bool backtracking = false;
};

void validate_train_config(const TrainConfig& cfg);

struct CurvePoint {
  int epoch = 0;
  double train_loss = 0.0;
  double train_metric = 0.0;
  double test_metric = 0.0;
};

struct MetricCurve {
  std::vector<CurvePoint> points;
  std::string to_csv() const;  // epoch,train_loss,train_metric,test_metric
};

struct TrainOutcome {
  GnnModel model;
  std::optional<PromptVector> prompt;  // GPF only
  MetricCurve curve;
  double final_train_loss = 0.0;
  double final_test_metric = 0.0;
};

/// Trainable parameter groups for a strategy on this model ("head" is always
/// included; GPF additionally trains the prompt, which is not a model group).
std::vector<std::string> strategy_trainable_groups(const GnnModel& m, const Strategy& s);

struct StrategyParamCounts {
  long long trainable = 0;
  long long total = 0;
};

/// Table-4-style accounting: prompt parameters count under GPF.
StrategyParamCounts strategy_param_counts(const GnnModel& m, const Strategy& s, int feature_dim);

/// Edge-prediction pre-training: scores existing edges above sampled
/// non-edges via dot products of node states, logistic loss, 1:1 negative
/// sampling. Trains every backbone group; the head is untouched.
GnnModel pretrain_edge_prediction(GnnModel model, const Dataset& ds, const TrainConfig& cfg);

/// Mini-batch gradient descent on exactly the strategy's trainable set. Under
/// GPF every graph is routed through the prompt before the forward pass, at
/// evaluation time too.
TrainOutcome train(const GnnModel& model, const Strategy& strategy, const Dataset& ds,
                   const TrainConfig& cfg);

/// Rank-based ROC-AUC with ties counted 0.5. Both classes must be present.
double evaluate_auc(const std::vector<double>& scores, const std::vector<int>& labels);

double evaluate_accuracy(const std::vector<double>& scores, const std::vector<int>& labels);

/// Full-split loss at the current parameters (prompt applied when given).
double dataset_loss(const GnnModel& m, const Dataset& ds, Split split, LossKind loss,
                    const PromptVector* prompt);

/// Edge-vs-nonedge ranking AUC of the (frozen) backbone on a split.
double edge_prediction_auc(const GnnModel& m, const Dataset& ds, Split split, std::uint64_t seed);

struct ComparisonRow {
  std::string strategy;
  double mean = 0.0;
  double stddev = 0.0;
  long long trainable_params = 0;
  long long total_params = 0;
};

struct ComparisonResult {
  std::vector<ComparisonRow> rows;
  struct CurveEntry {
    std::string strategy;
    std::uint64_t seed = 0;
    MetricCurve curve;
  };
  std::vector<CurveEntry> curves;

  std::string table_csv() const;   // strategy,mean,std,trainable_params,total_params
  std::string curves_csv() const;  // strategy,seed,epoch,train_loss,train_metric,test_metric
};

/// Runs every strategy for n_seeds seeds (cfg.seed, cfg.seed+1, ...) and
/// aggregates the final test metric.
ComparisonResult compare_strategies(const GnnModel& checkpoint, const Dataset& ds,
                                    const std::vector<Strategy>& strategies,
                                    const TrainConfig& cfg, int n_seeds);

}  // namespace gpf
