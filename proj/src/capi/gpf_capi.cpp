#include "gpf/gpf.h"

#include <cstring>
#include <sstream>
#include <string>

#include "core/config.hpp"
#include "core/gnn.hpp"
#include "core/graph.hpp"
#include "core/prompt.hpp"
#include "core/tuning.hpp"
#include "json.hpp"

struct gpf_dataset {
  gpf::Dataset rep;
};
struct gpf_graph {
  gpf::Graph rep;
};
struct gpf_model {
  gpf::GnnModel rep;
};
struct gpf_prompt {
  gpf::PromptVector rep;
};
struct gpf_spec {
  gpf::TransformSpec rep;
};

namespace {

thread_local std::string g_last_error;

template <typename Fn>
gpf_status wrap(Fn&& fn) noexcept {
  try {
    fn();
    return GPF_OK;
  } catch (const gpf::NumericError& e) {
    g_last_error = e.what();
    return GPF_ERROR_NUMERIC;
  } catch (const gpf::IoError& e) {
    g_last_error = e.what();
    return GPF_ERROR_IO;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return GPF_ERROR_VALIDATION;
  } catch (...) {
    g_last_error = "unknown error";
    return GPF_ERROR_VALIDATION;
  }
}

char* copy_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void require(bool cond, const char* what) {
  if (!cond) throw gpf::ValidationError(std::string("null argument: ") + what);
}

gpf::TrainConfig train_config_from(const char* config_json) {
  require(config_json != nullptr, "config");
  gpf::RunConfig cfg = gpf::parse_run_config(config_json);
  if (!cfg.train) throw gpf::ValidationError("config: a \"train\" section is required");
  return *cfg.train;
}

std::vector<gpf::Strategy> parse_strategy_list(const char* text) {
  require(text != nullptr, "strategies");
  std::vector<gpf::Strategy> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(gpf::Strategy::parse(item));
  }
  if (out.empty()) throw gpf::ValidationError("empty strategy list");
  return out;
}

}  // namespace

extern "C" {

const char* gpf_last_error(void) { return g_last_error.c_str(); }

void gpf_string_free(char* s) { delete[] s; }

void gpf_dataset_free(gpf_dataset* ds) { delete ds; }
void gpf_graph_free(gpf_graph* g) { delete g; }
void gpf_model_free(gpf_model* m) { delete m; }
void gpf_prompt_free(gpf_prompt* p) { delete p; }
void gpf_spec_free(gpf_spec* s) { delete s; }

gpf_status gpf_dataset_generate(uint64_t seed, int n_graphs, const char* rule, int feature_dim,
                                gpf_dataset** out) {
  return wrap([&] {
    require(rule && out, "rule/out");
    gpf::Dataset ds =
        gpf::generate_synthetic_dataset(seed, n_graphs, gpf::parse_class_rule(rule), feature_dim);
    *out = new gpf_dataset{std::move(ds)};
  });
}

gpf_status gpf_dataset_load(const char* path, gpf_dataset** out) {
  return wrap([&] {
    require(path && out, "path/out");
    *out = new gpf_dataset{gpf::load_dataset(path)};
  });
}

gpf_status gpf_dataset_save(const gpf_dataset* ds, const char* path) {
  return wrap([&] {
    require(ds && path, "dataset/path");
    gpf::save_dataset(ds->rep, path);
  });
}

gpf_status gpf_dataset_size(const gpf_dataset* ds, int* out) {
  return wrap([&] {
    require(ds && out, "dataset/out");
    *out = static_cast<int>(ds->rep.graphs.size());
  });
}

gpf_status gpf_dataset_feature_dim(const gpf_dataset* ds, int* out) {
  return wrap([&] {
    require(ds && out, "dataset/out");
    *out = ds->rep.feature_dim;
  });
}

gpf_status gpf_graph_load(const char* path, gpf_graph** out) {
  return wrap([&] {
    require(path && out, "path/out");
    *out = new gpf_graph{gpf::load_graph(path)};
  });
}

gpf_status gpf_spec_load(const char* path, gpf_spec** out) {
  return wrap([&] {
    require(path && out, "path/out");
    *out = new gpf_spec{gpf::load_transform_spec(path)};
  });
}

gpf_status gpf_spec_parse(const char* json_text, gpf_spec** out) {
  return wrap([&] {
    require(json_text && out, "json/out");
    *out = new gpf_spec{gpf::parse_transform_spec_json(json_text)};
  });
}

gpf_status gpf_config_validate(const char* config_json) {
  return wrap([&] {
    require(config_json != nullptr, "config");
    gpf::parse_run_config(config_json);
  });
}

gpf_status gpf_config_path(const char* config_json, const char* key, char** out) {
  return wrap([&] {
    require(config_json && key && out, "config/key/out");
    gpf::RunConfig cfg = gpf::parse_run_config(config_json);
    auto it = cfg.paths.find(key);
    *out = it == cfg.paths.end() ? nullptr : copy_string(it->second);
  });
}

gpf_status gpf_model_from_config(const char* config_json, gpf_model** out) {
  return wrap([&] {
    require(config_json && out, "config/out");
    gpf::RunConfig cfg = gpf::parse_run_config(config_json);
    if (!cfg.model) throw gpf::ValidationError("config: a \"model\" section is required");
    uint64_t seed = cfg.train ? cfg.train->seed : 1;
    *out = new gpf_model{gpf::build_model(*cfg.model, seed)};
  });
}

gpf_status gpf_model_load(const char* path, gpf_model** out) {
  return wrap([&] {
    require(path && out, "path/out");
    *out = new gpf_model{gpf::load_checkpoint(path)};
  });
}

gpf_status gpf_model_save(const gpf_model* m, const char* path) {
  return wrap([&] {
    require(m && path, "model/path");
    gpf::save_checkpoint(m->rep, path);
  });
}

gpf_status gpf_model_input_dim(const gpf_model* m, int* out) {
  return wrap([&] {
    require(m && out, "model/out");
    *out = m->rep.input_dim();
  });
}

gpf_status gpf_model_param_count(const gpf_model* m, int trainable_only, int64_t* out) {
  return wrap([&] {
    require(m && out, "model/out");
    *out = gpf::count_params(m->rep, trainable_only != 0);
  });
}

gpf_status gpf_model_strategy_params(const gpf_model* m, const char* strategy, int feature_dim,
                                     int64_t* trainable_out, int64_t* total_out) {
  return wrap([&] {
    require(m && strategy && trainable_out && total_out, "model/strategy/out");
    gpf::StrategyParamCounts counts =
        gpf::strategy_param_counts(m->rep, gpf::Strategy::parse(strategy), feature_dim);
    *trainable_out = counts.trainable;
    *total_out = counts.total;
  });
}

gpf_status gpf_prompt_load(const char* path, gpf_prompt** out) {
  return wrap([&] {
    require(path && out, "path/out");
    *out = new gpf_prompt{gpf::load_prompt(path)};
  });
}

gpf_status gpf_prompt_save(const gpf_prompt* p, const char* path) {
  return wrap([&] {
    require(p && path, "prompt/path");
    gpf::save_prompt(p->rep, path);
  });
}

gpf_status gpf_prompt_dim(const gpf_prompt* p, int* out) {
  return wrap([&] {
    require(p && out, "prompt/out");
    *out = p->rep.dim();
  });
}

gpf_status gpf_prompt_values(const gpf_prompt* p, double* buf, size_t capacity) {
  return wrap([&] {
    require(p && buf, "prompt/buf");
    if (capacity < p->rep.values.size())
      throw gpf::ValidationError("prompt buffer too small");
    std::memcpy(buf, p->rep.values.data(), p->rep.values.size() * sizeof(double));
  });
}

gpf_status gpf_solve_prompt(const gpf_model* m, const gpf_graph* g, const gpf_spec* spec,
                            gpf_prompt** out) {
  return wrap([&] {
    require(m && g && spec && out, "model/graph/spec/out");
    *out = new gpf_prompt{gpf::solve_prompt(g->rep, spec->rep, m->rep)};
  });
}

gpf_status gpf_verify_equivalence(const gpf_model* m, const gpf_graph* g, const gpf_spec* spec,
                                  const gpf_prompt* p, double tolerance, double* abs_error_out,
                                  double* rel_error_out, int* passed_out, char** report_json_out) {
  return wrap([&] {
    require(m && g && spec && p, "model/graph/spec/prompt");
    gpf::EquivalenceReport report =
        gpf::verify_equivalence(m->rep, g->rep, spec->rep, p->rep, tolerance);
    if (abs_error_out) *abs_error_out = report.abs_error;
    if (rel_error_out) *rel_error_out = report.rel_error;
    if (passed_out) *passed_out = report.passed ? 1 : 0;
    if (report_json_out) {
      nlohmann::json doc;
      doc["prompt_embedding"] = report.prompt_embedding;
      doc["target_embedding"] = report.target_embedding;
      doc["abs_error"] = report.abs_error;
      doc["rel_error"] = report.rel_error;
      doc["tolerance"] = report.tolerance;
      doc["passed"] = report.passed;
      *report_json_out = copy_string(doc.dump(2));
    }
  });
}

gpf_status gpf_fit_prompt(const gpf_model* m, const gpf_graph* g, const gpf_spec* spec,
                          int max_steps, double learning_rate, double target_residual,
                          gpf_prompt** prompt_out, double* residual_out) {
  return wrap([&] {
    require(m && g && spec && prompt_out, "model/graph/spec/out");
    gpf::FitOptions opt;
    opt.max_steps = max_steps;
    opt.learning_rate = learning_rate;
    opt.target_residual = target_residual;
    gpf::FitResult result = gpf::fit_prompt(m->rep, g->rep, spec->rep, opt);
    *prompt_out = new gpf_prompt{std::move(result.prompt)};
    if (residual_out) *residual_out = result.residual;
  });
}

gpf_status gpf_pretrain_edge_prediction(gpf_model* m, const gpf_dataset* ds,
                                        const char* config_json) {
  return wrap([&] {
    require(m && ds, "model/dataset");
    m->rep = gpf::pretrain_edge_prediction(std::move(m->rep), ds->rep,
                                           train_config_from(config_json));
  });
}

gpf_status gpf_train(const gpf_model* m, const gpf_dataset* ds, const char* strategy,
                     const char* config_json, char** curve_csv_out, gpf_prompt** prompt_out) {
  return wrap([&] {
    require(m && ds && config_json, "model/dataset/config");
    gpf::RunConfig cfg = gpf::parse_run_config(config_json);
    if (!cfg.train) throw gpf::ValidationError("config: a \"train\" section is required");
    gpf::Strategy strat;
    if (strategy)
      strat = gpf::Strategy::parse(strategy);
    else if (cfg.strategy)
      strat = *cfg.strategy;
    else
      throw gpf::ValidationError("no strategy given (flag or config \"strategy\")");
    gpf::TrainOutcome outcome = gpf::train(m->rep, strat, ds->rep, *cfg.train);
    if (curve_csv_out) *curve_csv_out = copy_string(outcome.curve.to_csv());
    if (prompt_out)
      *prompt_out = outcome.prompt ? new gpf_prompt{std::move(*outcome.prompt)} : nullptr;
  });
}

gpf_status gpf_compare_strategies(const gpf_model* m, const gpf_dataset* ds,
                                  const char* strategies, const char* config_json, int n_seeds,
                                  char** table_csv_out, char** curves_csv_out) {
  return wrap([&] {
    require(m && ds && table_csv_out, "model/dataset/out");
    gpf::ComparisonResult result = gpf::compare_strategies(
        m->rep, ds->rep, parse_strategy_list(strategies), train_config_from(config_json), n_seeds);
    *table_csv_out = copy_string(result.table_csv());
    if (curves_csv_out) *curves_csv_out = copy_string(result.curves_csv());
  });
}

}  // extern "C"
