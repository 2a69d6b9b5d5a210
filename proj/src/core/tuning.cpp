#include "core/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace gpf {

std::string Strategy::name() const {
  switch (kind) {
    case StrategyKind::full_fine_tune: return "ft";
    case StrategyKind::gpf: return "gpf";
    case StrategyKind::partial_k: return "partial-" + std::to_string(k);
    case StrategyKind::mlp_head_k: return "mlp-" + std::to_string(k);
    case StrategyKind::linear_probe: return "linear-probe";
  }
  return "?";
}

Strategy Strategy::parse(const std::string& text) {
  if (text == "ft") return {StrategyKind::full_fine_tune, 0};
  if (text == "gpf") return {StrategyKind::gpf, 0};
  if (text == "linear-probe") return {StrategyKind::linear_probe, 0};
  auto parse_k = [&](const std::string& prefix) -> std::optional<int> {
    if (text.rfind(prefix, 0) != 0) return std::nullopt;
    try {
      size_t used = 0;
      int k = std::stoi(text.substr(prefix.size()), &used);
      if (used != text.size() - prefix.size() || k < 1) return std::nullopt;
      return k;
    } catch (...) {
      return std::nullopt;
    }
  };
  if (auto k = parse_k("partial-")) return {StrategyKind::partial_k, *k};
  if (auto k = parse_k("mlp-")) return {StrategyKind::mlp_head_k, *k};
  throw ValidationError("unknown strategy \"" + text +
                        "\" (ft|gpf|partial-<k>|mlp-<k>|linear-probe)");
}

void validate_train_config(const TrainConfig& cfg) {
  if (cfg.learning_rate <= 0.0) throw ValidationError("learning_rate must be positive");
  if (cfg.epochs < 0) throw ValidationError("epochs must be non-negative");
  if (cfg.batch_size < 1) throw ValidationError("batch_size must be positive");
  if (cfg.eval_every < 1) throw ValidationError("eval_every must be positive");
}

std::vector<std::string> strategy_trainable_groups(const GnnModel& m, const Strategy& s) {
  int n_layers = static_cast<int>(m.layers.size());
  std::vector<std::string> groups;
  switch (s.kind) {
    case StrategyKind::full_fine_tune:
      for (int i = 0; i < n_layers; ++i) groups.push_back("layer" + std::to_string(i));
      break;
    case StrategyKind::partial_k: {
      if (s.k < 1 || s.k > n_layers)
        throw ValidationError("partial-k requires 1 <= k <= number of layers (" +
                              std::to_string(n_layers) + ")");
      for (int i = n_layers - s.k; i < n_layers; ++i)
        groups.push_back("layer" + std::to_string(i));
      break;
    }
    case StrategyKind::gpf:
    case StrategyKind::mlp_head_k:
    case StrategyKind::linear_probe:
      break;  // backbone fully frozen
  }
  groups.push_back("head");
  return groups;
}

namespace {

HeadConfig head_config_for(const Strategy& s) {
  HeadConfig hc;
  hc.layers = s.kind == StrategyKind::mlp_head_k ? std::max(1, s.k) : 1;
  return hc;
}

GnnModel prepare_work_model(const GnnModel& model, const Strategy& strategy,
                            const TrainConfig& cfg) {
  if (strategy.kind == StrategyKind::mlp_head_k && strategy.k < 1)
    throw ValidationError("mlp-k requires k >= 1");
  GnnModel work = model;
  // Every strategy adapts with a fresh task head; the strategy decides its shape.
  work.head = build_head(work.embedding_dim(), head_config_for(strategy), cfg.seed);
  std::vector<std::string> trainable = strategy_trainable_groups(work, strategy);
  work.frozen.clear();
  for (const std::string& g : work.param_groups())
    work.frozen[g] =
        std::find(trainable.begin(), trainable.end(), g) == trainable.end();
  return work;
}

double point_loss(double logit, double label, LossKind kind) {
  if (kind == LossKind::mse) {
    double d = logit - label;
    return d * d;
  }
  return std::max(logit, 0.0) - logit * label + std::log1p(std::exp(-std::abs(logit)));
}

int require_label(const Graph& g) {
  if (!g.label) throw ValidationError("graph \"" + g.id + "\" has no label");
  return *g.label;
}

// One gradient step over the given tape loss, with optional Armijo
// backtracking against `eval_loss` (value-only loss at the live parameters).
// The step size only shrinks below the configured rate and recovers back up
// to it; growing past it destabilizes mini-batch training.
struct SgdStepper {
  double lr = 0.0;
  double lr_cap = 0.0;

  void step(Tape& tape, const std::vector<ParamSlot>& slots, double loss,
            bool backtracking, const std::function<double()>& eval_loss) {
    double grad_norm2 = 0.0;
    std::vector<Matrix> grads;
    grads.reserve(slots.size());
    for (const ParamSlot& s : slots) {
      grads.push_back(tape.grad(s.tensor));
      for (double v : grads.back().data()) grad_norm2 += v * v;
    }
    if (grad_norm2 == 0.0) return;

    auto apply = [&](double rate) {
      for (size_t i = 0; i < slots.size(); ++i) {
        const Matrix& g = grads[i];
        if (slots[i].matrix) {
          for (size_t c = 0; c < g.size(); ++c) slots[i].matrix->data()[c] -= rate * g.data()[c];
        } else {
          *slots[i].scalar -= rate * g(0, 0);
        }
      }
    };
    auto revert = [&](double rate) { apply(-rate); };

    if (!backtracking) {
      apply(lr);
      return;
    }
    for (int tries = 0; tries < 60; ++tries) {
      apply(lr);
      double cand = eval_loss();
      if (std::isfinite(cand) && cand <= loss - 1e-4 * lr * grad_norm2) {
        lr = std::min(lr * 2.0, lr_cap);
        return;
      }
      revert(lr);
      lr *= 0.5;
      if (lr < 1e-18) return;  // stalled
    }
  }
};

std::vector<double> split_logits(const GnnModel& m, const std::vector<const Graph*>& graphs,
                                 const PromptVector* prompt) {
  std::vector<double> out;
  out.reserve(graphs.size());
  for (const Graph* g : graphs)
    out.push_back(prompt ? model_forward(m, apply_prompt(*g, *prompt)).logit
                         : model_forward(m, *g).logit);
  return out;
}

double mean_loss(const GnnModel& m, const std::vector<const Graph*>& graphs, LossKind loss,
                 const PromptVector* prompt) {
  if (graphs.empty()) throw ValidationError("loss over an empty graph set");
  double acc = 0.0;
  for (const Graph* g : graphs) {
    double logit = prompt ? model_forward(m, apply_prompt(*g, *prompt)).logit
                          : model_forward(m, *g).logit;
    acc += point_loss(logit, require_label(*g), loss);
  }
  return acc / static_cast<double>(graphs.size());
}

double metric_of(MetricKind metric, const std::vector<double>& scores,
                 const std::vector<int>& labels) {
  return metric == MetricKind::auc ? evaluate_auc(scores, labels)
                                   : evaluate_accuracy(scores, labels);
}

}  // namespace

double dataset_loss(const GnnModel& m, const Dataset& ds, Split split, LossKind loss,
                    const PromptVector* prompt) {
  return mean_loss(m, ds.graphs_in(split), loss, prompt);
}

TrainOutcome train(const GnnModel& model, const Strategy& strategy, const Dataset& ds,
                   const TrainConfig& cfg) {
  validate_model(model);
  validate_train_config(cfg);
  std::vector<const Graph*> train_graphs = ds.graphs_in(Split::train);
  std::vector<const Graph*> test_graphs = ds.graphs_in(Split::test);
  if (train_graphs.empty()) throw ValidationError("train split is empty");
  if (test_graphs.empty()) throw ValidationError("test split is empty");
  for (const Graph* g : train_graphs) require_label(*g);
  for (const Graph* g : test_graphs) require_label(*g);
  if (ds.feature_dim != model.input_dim())
    throw ValidationError("dataset feature dimension does not match model input dimension");

  GnnModel work = prepare_work_model(model, strategy, cfg);
  std::set<std::string> trainable;
  for (const std::string& g : strategy_trainable_groups(work, strategy)) trainable.insert(g);
  bool use_prompt = strategy.kind == StrategyKind::gpf;
  PromptVector prompt = PromptVector::zeros(model.input_dim());
  Matrix prompt_row(1, model.input_dim());  // live storage the optimizer writes to
  auto sync_prompt = [&]() { prompt.values = prompt_row.data(); };

  std::mt19937_64 rng(cfg.seed);
  std::vector<size_t> order(train_graphs.size());
  std::iota(order.begin(), order.end(), 0);

  SgdStepper stepper{cfg.learning_rate, cfg.learning_rate};
  TrainOutcome out;

  auto record_point = [&](int epoch) {
    const PromptVector* p = use_prompt ? &prompt : nullptr;
    CurvePoint pt;
    pt.epoch = epoch;
    pt.train_loss = mean_loss(work, train_graphs, cfg.loss, p);
    std::vector<int> train_labels, test_labels;
    for (const Graph* g : train_graphs) train_labels.push_back(require_label(*g));
    for (const Graph* g : test_graphs) test_labels.push_back(require_label(*g));
    pt.train_metric = metric_of(cfg.metric, split_logits(work, train_graphs, p), train_labels);
    pt.test_metric = metric_of(cfg.metric, split_logits(work, test_graphs, p), test_labels);
    out.curve.points.push_back(pt);
  };

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<const Graph*> batch;
      for (size_t i = start; i < stop; ++i) batch.push_back(train_graphs[order[i]]);

      Tape tape;
      BoundModel bm = bind_model(tape, work, trainable);
      std::vector<ParamSlot> slots = bm.trainable;
      std::optional<Tensor> p_leaf;
      if (use_prompt) {
        p_leaf = tape.leaf(prompt_row, true);
        slots.push_back(ParamSlot{"prompt", *p_leaf, &prompt_row, nullptr});
      }
      if (slots.empty()) throw ValidationError("strategy trains no parameters");

      Tensor total = tape.scalar_constant(0.0);
      for (const Graph* g : batch) {
        Tensor x = tape.constant(g->features);
        if (p_leaf) x = tape.broadcast_add_row(x, *p_leaf);
        Tensor logit = logit_on_tape(tape, bm, embedding_on_tape(tape, bm, *g, x));
        Matrix label(1, 1);
        label(0, 0) = require_label(*g);
        Tensor y = tape.constant(std::move(label));
        Tensor l = cfg.loss == LossKind::bce ? tape.bce_loss(logit, y) : tape.mse_loss(logit, y);
        total = tape.add(total, l);
      }
      Tensor loss_t = tape.scale(total, 1.0 / static_cast<double>(batch.size()));
      double loss = tape.scalar_value(loss_t);
      if (!std::isfinite(loss))
        throw NumericError("training loss is not finite at epoch " + std::to_string(epoch) +
                           " (diverged; lower the learning rate)");
      tape.backward(loss_t);

      stepper.step(tape, slots, loss, cfg.backtracking, [&]() {
        sync_prompt();
        return mean_loss(work, batch, cfg.loss, use_prompt ? &prompt : nullptr);
      });
      sync_prompt();
    }
    if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) record_point(epoch);
  }
  if (cfg.epochs == 0) record_point(0);

  out.model = std::move(work);
  if (use_prompt) out.prompt = prompt;
  out.final_train_loss = out.curve.points.back().train_loss;
  out.final_test_metric = out.curve.points.back().test_metric;
  return out;
}

GnnModel pretrain_edge_prediction(GnnModel model, const Dataset& ds, const TrainConfig& cfg) {
  validate_model(model);
  validate_train_config(cfg);
  // Pre-train on the train split when one exists, otherwise the whole corpus.
  std::vector<const Graph*> graphs = ds.graphs_in(Split::train);
  if (graphs.empty())
    for (const Graph& g : ds.graphs) graphs.push_back(&g);
  if (ds.feature_dim != model.input_dim())
    throw ValidationError("dataset feature dimension does not match model input dimension");
  size_t edge_total = 0;
  for (const Graph* g : graphs) edge_total += g->edges().size();
  if (edge_total == 0) throw ValidationError("edge-prediction pre-training needs a dataset with edges");

  std::set<std::string> trainable;
  for (size_t i = 0; i < model.layers.size(); ++i) trainable.insert("layer" + std::to_string(i));

  std::mt19937_64 rng(cfg.seed);
  std::vector<size_t> order(graphs.size());
  std::iota(order.begin(), order.end(), 0);
  SgdStepper stepper{cfg.learning_rate, cfg.learning_rate};

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      size_t stop = std::min(order.size(), start + cfg.batch_size);

      // Negative samples are drawn before the tape is built so a
      // backtracking re-evaluation sees the same pairs.
      struct Item {
        const Graph* g;
        std::vector<std::pair<int, int>> pairs;
        Matrix labels;
      };
      std::vector<Item> items;
      for (size_t i = start; i < stop; ++i) {
        const Graph* g = graphs[order[i]];
        Item item{g, {}, Matrix()};
        int n = g->node_count();
        for (auto [u, v] : g->edges()) {
          item.pairs.emplace_back(u, v);
          for (int attempt = 0; attempt < 32; ++attempt) {
            int w = static_cast<int>(rng() % static_cast<unsigned>(n));
            if (w != u && g->adjacency(u, w) == 0.0) {
              item.pairs.emplace_back(u, w);
              break;
            }
          }
        }
        if (item.pairs.empty()) continue;
        item.labels = Matrix(static_cast<int>(item.pairs.size()), 1);
        for (size_t k = 0; k < item.pairs.size(); ++k)
          item.labels(static_cast<int>(k), 0) =
              g->adjacency(item.pairs[k].first, item.pairs[k].second) == 1.0 ? 1.0 : 0.0;
        items.push_back(std::move(item));
      }
      if (items.empty()) continue;

      auto batch_loss_at = [&](const GnnModel& m) {
        double acc = 0.0;
        for (const Item& item : items) {
          Matrix h = node_states(m, *item.g);
          double graph_acc = 0.0;
          for (size_t k = 0; k < item.pairs.size(); ++k) {
            double score = 0.0;
            for (int j = 0; j < h.cols(); ++j)
              score += h(item.pairs[k].first, j) * h(item.pairs[k].second, j);
            graph_acc += point_loss(score, item.labels(static_cast<int>(k), 0), LossKind::bce);
          }
          acc += graph_acc / static_cast<double>(item.pairs.size());
        }
        return acc / static_cast<double>(items.size());
      };

      Tape tape;
      BoundModel bm = bind_model(tape, model, trainable);
      Tensor total = tape.scalar_constant(0.0);
      for (const Item& item : items) {
        Tensor h = node_states_on_tape(tape, bm, *item.g, tape.constant(item.g->features));
        Tensor scores = tape.pair_dot(h, item.pairs);
        total = tape.add(total, tape.bce_loss(scores, tape.constant(item.labels)));
      }
      Tensor loss_t = tape.scale(total, 1.0 / static_cast<double>(items.size()));
      double loss = tape.scalar_value(loss_t);
      if (!std::isfinite(loss))
        throw NumericError("pre-training loss is not finite at epoch " + std::to_string(epoch));
      tape.backward(loss_t);
      stepper.step(tape, bm.trainable, loss, cfg.backtracking,
                   [&]() { return batch_loss_at(model); });
    }
  }
  return model;
}

double evaluate_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw ValidationError("scores/labels size mismatch");
  size_t n_pos = 0, n_neg = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw ValidationError("labels must be 0 or 1");
    (y == 1 ? n_pos : n_neg) += 1;
  }
  if (n_pos == 0 || n_neg == 0)
    throw ValidationError("ROC-AUC needs both classes present");
  std::vector<size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  // Average ranks over ties, sum ranks of positives (Mann-Whitney).
  double pos_rank_sum = 0.0;
  size_t i = 0;
  while (i < idx.size()) {
    size_t j = i;
    while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (size_t k = i; k <= j; ++k)
      if (labels[idx[k]] == 1) pos_rank_sum += avg_rank;
    i = j + 1;
  }
  double u = pos_rank_sum - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double evaluate_accuracy(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw ValidationError("scores/labels size mismatch");
  if (scores.empty()) throw ValidationError("accuracy of an empty set");
  size_t hit = 0;
  for (size_t i = 0; i < scores.size(); ++i)
    if ((scores[i] > 0.0 ? 1 : 0) == labels[i]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(scores.size());
}

double edge_prediction_auc(const GnnModel& m, const Dataset& ds, Split split, std::uint64_t seed) {
  std::vector<const Graph*> graphs = ds.graphs_in(split);
  if (graphs.empty()) throw ValidationError("edge AUC: split is empty");
  std::mt19937_64 rng(seed);
  std::vector<double> scores;
  std::vector<int> labels;
  for (const Graph* g : graphs) {
    Matrix h = node_states(m, *g);
    int n = g->node_count();
    auto score_pair = [&](int u, int v) {
      double s = 0.0;
      for (int j = 0; j < h.cols(); ++j) s += h(u, j) * h(v, j);
      return s;
    };
    for (auto [u, v] : g->edges()) {
      scores.push_back(score_pair(u, v));
      labels.push_back(1);
      for (int attempt = 0; attempt < 32; ++attempt) {
        int w = static_cast<int>(rng() % static_cast<unsigned>(n));
        if (w != u && g->adjacency(u, w) == 0.0) {
          scores.push_back(score_pair(u, w));
          labels.push_back(0);
          break;
        }
      }
    }
  }
  return evaluate_auc(scores, labels);
}

StrategyParamCounts strategy_param_counts(const GnnModel& m, const Strategy& s, int feature_dim) {
  TrainConfig dummy;
  GnnModel shaped = prepare_work_model(m, s, dummy);
  StrategyParamCounts out;
  out.trainable = count_params(shaped, true);
  out.total = count_params(shaped, false);
  if (s.kind == StrategyKind::gpf) {
    out.trainable += feature_dim;
    out.total += feature_dim;
  }
  return out;
}

std::string MetricCurve::to_csv() const {
  std::ostringstream os;
  os << "epoch,train_loss,train_metric,test_metric\n";
  os << std::setprecision(10);
  for (const CurvePoint& p : points)
    os << p.epoch << "," << p.train_loss << "," << p.train_metric << "," << p.test_metric << "\n";
  return os.str();
}

std::string ComparisonResult::table_csv() const {
  std::ostringstream os;
  os << "strategy,mean,std,trainable_params,total_params\n";
  os << std::setprecision(10);
  for (const ComparisonRow& r : rows)
    os << r.strategy << "," << r.mean << "," << r.stddev << "," << r.trainable_params << ","
       << r.total_params << "\n";
  return os.str();
}

std::string ComparisonResult::curves_csv() const {
  std::ostringstream os;
  os << "strategy,seed,epoch,train_loss,train_metric,test_metric\n";
  os << std::setprecision(10);
  for (const CurveEntry& e : curves)
    for (const CurvePoint& p : e.curve.points)
      os << e.strategy << "," << e.seed << "," << p.epoch << "," << p.train_loss << ","
         << p.train_metric << "," << p.test_metric << "\n";
  return os.str();
}

ComparisonResult compare_strategies(const GnnModel& checkpoint, const Dataset& ds,
                                    const std::vector<Strategy>& strategies,
                                    const TrainConfig& cfg, int n_seeds) {
  if (n_seeds < 1) throw ValidationError("need at least one seed");
  if (strategies.empty()) throw ValidationError("need at least one strategy");
  ComparisonResult result;
  for (const Strategy& s : strategies) {
    std::vector<double> finals;
    for (int i = 0; i < n_seeds; ++i) {
      TrainConfig run_cfg = cfg;
      run_cfg.seed = cfg.seed + static_cast<std::uint64_t>(i);
      TrainOutcome outcome = train(checkpoint, s, ds, run_cfg);
      finals.push_back(outcome.final_test_metric);
      result.curves.push_back({s.name(), run_cfg.seed, std::move(outcome.curve)});
    }
    double mean = std::accumulate(finals.begin(), finals.end(), 0.0) / finals.size();
    double var = 0.0;
    for (double v : finals) var += (v - mean) * (v - mean);
    var /= finals.size();  // population variance: one seed -> std 0
    StrategyParamCounts counts = strategy_param_counts(checkpoint, s, ds.feature_dim);
    result.rows.push_back({s.name(), mean, std::sqrt(var), counts.trainable, counts.total});
  }
  return result;
}

}  // namespace gpf
