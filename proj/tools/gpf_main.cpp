// gpf: command-line surface over the libgpf C API.
//
// Exit codes: 0 success, 2 validation error, 3 numeric failure, 4 I/O error.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gpf/gpf.h"

namespace {

struct CliError {
  int code;
  std::string message;
};

[[noreturn]] void fail(int code, const std::string& message) { throw CliError{code, message}; }

void check(gpf_status status) {
  if (status != GPF_OK) fail(static_cast<int>(status), gpf_last_error());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(4, "cannot open file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) fail(4, "cannot write file: " + path);
  out << text;
  if (!out) fail(4, "write failed: " + path);
}

// RAII wrappers over the C handles.
template <typename T, void (*Free)(T*)>
struct Handle {
  T* ptr = nullptr;
  ~Handle() { Free(ptr); }
  T** slot() { return &ptr; }
  T* get() const { return ptr; }
};
using DatasetHandle = Handle<gpf_dataset, gpf_dataset_free>;
using GraphHandle = Handle<gpf_graph, gpf_graph_free>;
using ModelHandle = Handle<gpf_model, gpf_model_free>;
using PromptHandle = Handle<gpf_prompt, gpf_prompt_free>;
using SpecHandle = Handle<gpf_spec, gpf_spec_free>;

struct CStr {
  char* ptr = nullptr;
  ~CStr() { gpf_string_free(ptr); }
  std::string str() const { return ptr ? ptr : ""; }
};

// Flag wins; otherwise the config's "paths" section; otherwise error.
std::string resolve_path(const std::string& flag, const std::string& config_json,
                         const char* key) {
  if (!flag.empty()) return flag;
  if (!config_json.empty()) {
    CStr out;
    check(gpf_config_path(config_json.c_str(), key, &out.ptr));
    if (out.ptr) return out.str();
  }
  fail(2, std::string("missing required path: --") + key + " (flag or config paths." + key + ")");
}

int run(int argc, char** argv) {
  CLI::App app{"Graph prompt tuning toolkit"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic graph-classification dataset");
  std::uint64_t gen_seed = 7;
  int gen_n = 100, gen_dim = 8;
  std::string gen_rule = "triangle-motif", gen_out;
  gen->add_option("--seed", gen_seed, "RNG seed");
  gen->add_option("--n", gen_n, "Number of graphs")->required();
  gen->add_option("--rule", gen_rule, "triangle-motif|community-pair");
  gen->add_option("--dim", gen_dim, "Feature dimension");
  gen->add_option("--out", gen_out, "Output dataset (JSONL)")->required();

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "Edge-prediction pre-training of a fresh backbone");
  std::string pre_config, pre_data, pre_out;
  pre->add_option("--config", pre_config, "Run config JSON")->required();
  pre->add_option("--data", pre_data, "Dataset JSONL");
  pre->add_option("--out-checkpoint", pre_out, "Output checkpoint path");

  // tune
  auto* tune = app.add_subcommand("tune", "Train one strategy on a frozen checkpoint");
  std::string tune_config, tune_ckpt, tune_data, tune_strategy, tune_curve, tune_prompt;
  tune->add_option("--config", tune_config, "Run config JSON")->required();
  tune->add_option("--checkpoint", tune_ckpt, "Model checkpoint");
  tune->add_option("--data", tune_data, "Dataset JSONL");
  tune->add_option("--strategy", tune_strategy, "ft|gpf|partial-k|mlp-k|linear-probe");
  tune->add_option("--out-curve", tune_curve, "Per-epoch metric curve CSV");
  tune->add_option("--out-prompt", tune_prompt, "Tuned prompt JSON (gpf only)");

  // solve
  auto* solve = app.add_subcommand("solve", "Closed-form prompt for a transformation");
  std::string solve_graph, solve_spec, solve_ckpt, solve_out;
  solve->add_option("--graph", solve_graph, "Graph JSON")->required();
  solve->add_option("--spec", solve_spec, "Transform spec JSON")->required();
  solve->add_option("--checkpoint", solve_ckpt, "Solver-grade model checkpoint")->required();
  solve->add_option("--out-prompt", solve_out, "Output prompt JSON")->required();

  // verify
  auto* verify = app.add_subcommand("verify", "Check prompt/transformation equivalence");
  std::string ver_graph, ver_spec, ver_ckpt, ver_prompt;
  double ver_tol = 1e-9;
  verify->add_option("--graph", ver_graph, "Graph JSON")->required();
  verify->add_option("--spec", ver_spec, "Transform spec JSON")->required();
  verify->add_option("--checkpoint", ver_ckpt, "Model checkpoint")->required();
  verify->add_option("--prompt", ver_prompt, "Prompt JSON")->required();
  verify->add_option("--tol", ver_tol, "Relative tolerance");

  // fit
  auto* fit = app.add_subcommand("fit", "Gradient-descent prompt fit (approximate route)");
  std::string fit_graph, fit_spec, fit_ckpt, fit_out;
  int fit_steps = 10000;
  double fit_lr = 0.05, fit_target = 1e-10;
  fit->add_option("--graph", fit_graph, "Graph JSON")->required();
  fit->add_option("--spec", fit_spec, "Transform spec JSON")->required();
  fit->add_option("--checkpoint", fit_ckpt, "Model checkpoint")->required();
  fit->add_option("--steps", fit_steps, "Maximum descent steps");
  fit->add_option("--lr", fit_lr, "Learning rate");
  fit->add_option("--target-residual", fit_target, "Early-stop residual");
  fit->add_option("--out-prompt", fit_out, "Output prompt JSON")->required();

  // params
  auto* params = app.add_subcommand("params", "Tunable-parameter accounting for a strategy");
  std::string par_ckpt, par_strategy;
  params->add_option("--checkpoint", par_ckpt, "Model checkpoint")->required();
  params->add_option("--strategy", par_strategy, "Strategy")->required();

  // compare
  auto* cmp = app.add_subcommand("compare", "Compare tuning strategies over several seeds");
  std::string cmp_config, cmp_ckpt, cmp_data, cmp_strategies = "ft,gpf", cmp_out;
  int cmp_seeds = 5;
  cmp->add_option("--config", cmp_config, "Run config JSON")->required();
  cmp->add_option("--checkpoint", cmp_ckpt, "Model checkpoint");
  cmp->add_option("--data", cmp_data, "Dataset JSONL");
  cmp->add_option("--strategies", cmp_strategies, "Comma-separated strategy list");
  cmp->add_option("--seeds", cmp_seeds, "Seeds per strategy");
  cmp->add_option("--out-csv", cmp_out, "Comparison table CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  if (gen->parsed()) {
    DatasetHandle ds;
    check(gpf_dataset_generate(gen_seed, gen_n, gen_rule.c_str(), gen_dim, ds.slot()));
    check(gpf_dataset_save(ds.get(), gen_out.c_str()));
    int size = 0;
    check(gpf_dataset_size(ds.get(), &size));
    std::cout << "wrote " << size << " graphs to " << gen_out << "\n";
    return 0;
  }

  if (pre->parsed()) {
    std::string config = read_file(pre_config);
    check(gpf_config_validate(config.c_str()));
    std::string data = resolve_path(pre_data, config, "data");
    std::string out_ckpt = resolve_path(pre_out, config, "out_checkpoint");
    DatasetHandle ds;
    check(gpf_dataset_load(data.c_str(), ds.slot()));
    ModelHandle model;
    check(gpf_model_from_config(config.c_str(), model.slot()));
    check(gpf_pretrain_edge_prediction(model.get(), ds.get(), config.c_str()));
    check(gpf_model_save(model.get(), out_ckpt.c_str()));
    std::cout << "wrote checkpoint " << out_ckpt << "\n";
    return 0;
  }

  if (tune->parsed()) {
    std::string config = read_file(tune_config);
    check(gpf_config_validate(config.c_str()));
    std::string data = resolve_path(tune_data, config, "data");
    std::string ckpt = resolve_path(tune_ckpt, config, "checkpoint");
    std::string out_curve = resolve_path(tune_curve, config, "out_curve");
    DatasetHandle ds;
    check(gpf_dataset_load(data.c_str(), ds.slot()));
    ModelHandle model;
    check(gpf_model_load(ckpt.c_str(), model.slot()));
    CStr curve;
    PromptHandle prompt;
    check(gpf_train(model.get(), ds.get(), tune_strategy.empty() ? nullptr : tune_strategy.c_str(),
                    config.c_str(), &curve.ptr, prompt.slot()));
    write_file(out_curve, curve.str());
    std::cout << "wrote curve " << out_curve << "\n";
    if (!tune_prompt.empty()) {
      if (!prompt.get()) fail(2, "--out-prompt given but the strategy trains no prompt");
      check(gpf_prompt_save(prompt.get(), tune_prompt.c_str()));
      std::cout << "wrote prompt " << tune_prompt << "\n";
    }
    return 0;
  }

  if (solve->parsed()) {
    GraphHandle g;
    SpecHandle spec;
    ModelHandle model;
    check(gpf_graph_load(solve_graph.c_str(), g.slot()));
    check(gpf_spec_load(solve_spec.c_str(), spec.slot()));
    check(gpf_model_load(solve_ckpt.c_str(), model.slot()));
    PromptHandle prompt;
    check(gpf_solve_prompt(model.get(), g.get(), spec.get(), prompt.slot()));
    check(gpf_prompt_save(prompt.get(), solve_out.c_str()));
    std::cout << "wrote prompt " << solve_out << "\n";
    return 0;
  }

  if (verify->parsed()) {
    GraphHandle g;
    SpecHandle spec;
    ModelHandle model;
    PromptHandle prompt;
    check(gpf_graph_load(ver_graph.c_str(), g.slot()));
    check(gpf_spec_load(ver_spec.c_str(), spec.slot()));
    check(gpf_model_load(ver_ckpt.c_str(), model.slot()));
    check(gpf_prompt_load(ver_prompt.c_str(), prompt.slot()));
    double abs_err = 0.0, rel_err = 0.0;
    int passed = 0;
    CStr report;
    check(gpf_verify_equivalence(model.get(), g.get(), spec.get(), prompt.get(), ver_tol, &abs_err,
                                 &rel_err, &passed, &report.ptr));
    std::cout << report.str() << "\n";
    // A computed-but-failed equivalence is a numeric failure for scripts.
    return passed ? 0 : 3;
  }

  if (fit->parsed()) {
    GraphHandle g;
    SpecHandle spec;
    ModelHandle model;
    check(gpf_graph_load(fit_graph.c_str(), g.slot()));
    check(gpf_spec_load(fit_spec.c_str(), spec.slot()));
    check(gpf_model_load(fit_ckpt.c_str(), model.slot()));
    PromptHandle prompt;
    double residual = 0.0;
    check(gpf_fit_prompt(model.get(), g.get(), spec.get(), fit_steps, fit_lr, fit_target,
                         prompt.slot(), &residual));
    check(gpf_prompt_save(prompt.get(), fit_out.c_str()));
    std::cout << "wrote prompt " << fit_out << " (residual " << residual << ")\n";
    return 0;
  }

  if (params->parsed()) {
    ModelHandle model;
    check(gpf_model_load(par_ckpt.c_str(), model.slot()));
    int feature_dim = 0;
    check(gpf_model_input_dim(model.get(), &feature_dim));
    std::int64_t trainable = 0, total = 0, ft_trainable = 0, ft_total = 0;
    check(gpf_model_strategy_params(model.get(), par_strategy.c_str(), feature_dim, &trainable,
                                    &total));
    check(gpf_model_strategy_params(model.get(), "ft", feature_dim, &ft_trainable, &ft_total));
    std::cout << "strategy: " << par_strategy << "\n"
              << "trainable_params: " << trainable << "\n"
              << "total_params: " << total << "\n"
              << "full_fine_tune_trainable: " << ft_trainable << "\n"
              << "ratio_vs_full_fine_tune: "
              << static_cast<double>(trainable) / static_cast<double>(ft_trainable) << "\n";
    return 0;
  }

  if (cmp->parsed()) {
    std::string config = read_file(cmp_config);
    check(gpf_config_validate(config.c_str()));
    std::string data = resolve_path(cmp_data, config, "data");
    std::string ckpt = resolve_path(cmp_ckpt, config, "checkpoint");
    std::string out_csv = resolve_path(cmp_out, config, "out_csv");
    DatasetHandle ds;
    check(gpf_dataset_load(data.c_str(), ds.slot()));
    ModelHandle model;
    check(gpf_model_load(ckpt.c_str(), model.slot()));
    CStr table, curves;
    check(gpf_compare_strategies(model.get(), ds.get(), cmp_strategies.c_str(), config.c_str(),
                                 cmp_seeds, &table.ptr, &curves.ptr));
    write_file(out_csv, table.str());
    std::string curves_path = out_csv;
    size_t dot = curves_path.rfind(".csv");
    curves_path = (dot != std::string::npos ? curves_path.substr(0, dot) : curves_path) +
                  "_curves.csv";
    write_file(curves_path, curves.str());
    std::cout << table.str();
    std::cout << "wrote " << out_csv << " and " << curves_path << "\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const CliError& e) {
    std::cerr << "gpf: " << e.message << "\n";
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "gpf: " << e.what() << "\n";
    return 2;
  }
}
