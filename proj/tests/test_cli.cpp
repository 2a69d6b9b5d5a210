// Drives the installed `gpf` binary end to end: exit codes, determinism and
// diagnostics. The binary path arrives via the GPF_CLI environment variable.
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "core/gnn.hpp"
#include "core/graph.hpp"
#include "doctest.h"
#include "test_support.hpp"

namespace {

namespace fs = std::filesystem;

std::string cli_path() {
  const char* env = std::getenv("GPF_CLI");
  REQUIRE_MESSAGE(env != nullptr, "GPF_CLI must point at the gpf binary");
  return env;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("gpf_cli_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

struct RunResult {
  int exit_code;
  std::string output;  // stdout + stderr
};

RunResult run_cli(const TempDir& tmp, const std::string& args) {
  std::string log = tmp.file("last_run.log");
  std::string cmd = cli_path() + " " + args + " > " + log + " 2>&1";
  int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream buf;
  buf << in.rdbuf();
  r.output = buf.str();
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

const char* kConfig = R"({
  "model": {"layers": [{"kind": "gin", "in": 4, "out": 6},
                        {"kind": "gin", "in": 6, "out": 6}],
            "readout": "sum", "activation": "relu", "head": {"layers": 1}},
  "train": {"learning_rate": 0.01, "epochs": 2, "batch_size": 8, "seed": 3,
            "loss": "bce", "eval_every": 1}
})";

}  // namespace

TEST_CASE("gen-data is a pure function of its flags") {
  TempDir tmp;
  RunResult r1 = run_cli(tmp, "gen-data --seed 7 --n 20 --rule triangle-motif --dim 4 --out " +
                                  tmp.file("a.jsonl"));
  CHECK(r1.exit_code == 0);
  RunResult r2 = run_cli(tmp, "gen-data --seed 7 --n 20 --rule triangle-motif --dim 4 --out " +
                                  tmp.file("b.jsonl"));
  CHECK(r2.exit_code == 0);
  CHECK(slurp(tmp.file("a.jsonl")) == slurp(tmp.file("b.jsonl")));
  CHECK(!slurp(tmp.file("a.jsonl")).empty());

  RunResult bad = run_cli(tmp, "gen-data --n 20 --rule what --out " + tmp.file("c.jsonl"));
  CHECK(bad.exit_code == 2);
}

TEST_CASE("pretrain, tune and compare run end to end") {
  TempDir tmp;
  write_text(tmp.file("cfg.json"), kConfig);
  REQUIRE(run_cli(tmp, "gen-data --seed 5 --n 40 --rule triangle-motif --dim 4 --out " +
                           tmp.file("ds.jsonl"))
              .exit_code == 0);
  RunResult pre = run_cli(tmp, "pretrain --config " + tmp.file("cfg.json") + " --data " +
                                   tmp.file("ds.jsonl") + " --out-checkpoint " +
                                   tmp.file("m.ckpt"));
  CHECK(pre.exit_code == 0);
  CHECK(fs::exists(tmp.file("m.ckpt")));

  RunResult tune = run_cli(tmp, "tune --config " + tmp.file("cfg.json") + " --checkpoint " +
                                    tmp.file("m.ckpt") + " --data " + tmp.file("ds.jsonl") +
                                    " --strategy gpf --out-curve " + tmp.file("curve.csv") +
                                    " --out-prompt " + tmp.file("tuned.json"));
  CHECK(tune.exit_code == 0);
  CHECK(slurp(tmp.file("curve.csv")).rfind("epoch,train_loss,train_metric,test_metric\n", 0) == 0);
  CHECK(fs::exists(tmp.file("tuned.json")));

  // tune must not modify its inputs
  std::string ckpt_before = slurp(tmp.file("m.ckpt"));
  RunResult tune2 = run_cli(tmp, "tune --config " + tmp.file("cfg.json") + " --checkpoint " +
                                     tmp.file("m.ckpt") + " --data " + tmp.file("ds.jsonl") +
                                     " --strategy ft --out-curve " + tmp.file("curve2.csv"));
  CHECK(tune2.exit_code == 0);
  CHECK(slurp(tmp.file("m.ckpt")) == ckpt_before);

  RunResult cmp = run_cli(tmp, "compare --config " + tmp.file("cfg.json") + " --checkpoint " +
                                   tmp.file("m.ckpt") + " --data " + tmp.file("ds.jsonl") +
                                   " --strategies gpf,linear-probe --seeds 2 --out-csv " +
                                   tmp.file("cmp.csv"));
  CHECK(cmp.exit_code == 0);
  CHECK(slurp(tmp.file("cmp.csv")).rfind("strategy,mean,std,trainable_params,total_params\n", 0) ==
        0);
  CHECK(fs::exists(tmp.file("cmp_curves.csv")));

  RunResult params = run_cli(tmp, "params --checkpoint " + tmp.file("m.ckpt") + " --strategy gpf");
  CHECK(params.exit_code == 0);
  CHECK(params.output.find("trainable_params:") != std::string::npos);
  CHECK(params.output.find("ratio_vs_full_fine_tune:") != std::string::npos);
}

TEST_CASE("solve, verify and fit with typed failures") {
  TempDir tmp;
  // solver-grade checkpoint built directly, plus a 2-layer one for the error path
  gpf::GnnModel solver = gpf::test::solver_grade_model(gpf::Matrix::from_rows({{1.0}}), 0.0);
  gpf::save_checkpoint(solver, tmp.file("solver.ckpt"));
  {
    gpf::ModelConfig cfg;
    cfg.layers.push_back({gpf::LayerKind::gin, 1, 4, 0.0, false, false});
    cfg.layers.push_back({gpf::LayerKind::gin, 4, 4, 0.0, false, false});
    gpf::save_checkpoint(gpf::build_model(cfg, 1), tmp.file("deep.ckpt"));
  }
  write_text(tmp.file("k2.json"), R"({"id":"k2","n":2,"edges":[[0,1]],"x":[[1.0],[2.0]]})");
  write_text(tmp.file("spec.json"), R"({"kind":"feature","delta":[[1.0],[0.0]]})");

  RunResult solve = run_cli(tmp, "solve --graph " + tmp.file("k2.json") + " --spec " +
                                     tmp.file("spec.json") + " --checkpoint " +
                                     tmp.file("solver.ckpt") + " --out-prompt " +
                                     tmp.file("p.json"));
  CHECK(solve.exit_code == 0);
  CHECK(slurp(tmp.file("p.json")).find("0.5") != std::string::npos);

  // rerunning with the same flags and inputs reproduces the file exactly
  RunResult solve_again = run_cli(tmp, "solve --graph " + tmp.file("k2.json") + " --spec " +
                                           tmp.file("spec.json") + " --checkpoint " +
                                           tmp.file("solver.ckpt") + " --out-prompt " +
                                           tmp.file("p2.json"));
  CHECK(solve_again.exit_code == 0);
  CHECK(slurp(tmp.file("p.json")) == slurp(tmp.file("p2.json")));

  RunResult verify = run_cli(tmp, "verify --graph " + tmp.file("k2.json") + " --spec " +
                                      tmp.file("spec.json") + " --checkpoint " +
                                      tmp.file("solver.ckpt") + " --prompt " + tmp.file("p.json") +
                                      " --tol 1e-9");
  CHECK(verify.exit_code == 0);
  CHECK(verify.output.find("\"passed\": true") != std::string::npos);

  // sabotage the prompt: the verification now fails numerically (exit 3)
  write_text(tmp.file("p.json"), R"({"version":1,"dim":1,"p":[1.5]})");
  RunResult bad_verify = run_cli(tmp, "verify --graph " + tmp.file("k2.json") + " --spec " +
                                          tmp.file("spec.json") + " --checkpoint " +
                                          tmp.file("solver.ckpt") + " --prompt " +
                                          tmp.file("p.json") + " --tol 1e-9");
  CHECK(bad_verify.exit_code == 3);
  CHECK(bad_verify.output.find("\"passed\": false") != std::string::npos);

  // solving on a non-solver-grade checkpoint names the violated precondition
  RunResult deep = run_cli(tmp, "solve --graph " + tmp.file("k2.json") + " --spec " +
                                    tmp.file("spec.json") + " --checkpoint " +
                                    tmp.file("deep.ckpt") + " --out-prompt " + tmp.file("q.json"));
  CHECK(deep.exit_code == 2);
  CHECK(deep.output.find("solver-grade") != std::string::npos);
  CHECK(deep.output.find("one layer") != std::string::npos);

  RunResult fit = run_cli(tmp, "fit --graph " + tmp.file("k2.json") + " --spec " +
                                   tmp.file("spec.json") + " --checkpoint " +
                                   tmp.file("deep.ckpt") + " --steps 2000 --lr 0.05" +
                                   " --out-prompt " + tmp.file("fitp.json"));
  CHECK(fit.exit_code == 0);
  CHECK(fs::exists(tmp.file("fitp.json")));

  RunResult missing = run_cli(tmp, "solve --graph /nonexistent.json --spec " +
                                       tmp.file("spec.json") + " --checkpoint " +
                                       tmp.file("solver.ckpt") + " --out-prompt " +
                                       tmp.file("r.json"));
  CHECK(missing.exit_code == 4);
}

TEST_CASE("configs with unknown keys are rejected before any work") {
  TempDir tmp;
  write_text(tmp.file("bad.json"), R"({"model": {"layers": []}, "wat": 1})");
  RunResult r = run_cli(tmp, "pretrain --config " + tmp.file("bad.json") + " --data x --out-checkpoint y");
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("unknown key") != std::string::npos);
}
