#include "core/config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace gpf {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed,
                    const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) known = true;
    if (!known) throw ValidationError("config: unknown key \"" + it.key() + "\" in " + where);
  }
}

ModelConfig parse_model(const json& obj) {
  reject_unknown(obj, {"layers", "readout", "activation", "head"}, "model");
  ModelConfig cfg;
  if (!obj.contains("layers")) throw ValidationError("config: model.layers is required");
  for (const json& l : obj.at("layers")) {
    reject_unknown(l, {"kind", "in", "out", "epsilon", "update", "bias"}, "model.layers[]");
    LayerSpecConfig lc;
    std::string kind = l.value("kind", "gin");
    if (kind == "gin")
      lc.kind = LayerKind::gin;
    else if (kind == "gcn")
      lc.kind = LayerKind::gcn;
    else
      throw ValidationError("config: layer kind must be gin|gcn");
    lc.in = l.at("in").get<int>();
    lc.out = l.at("out").get<int>();
    lc.epsilon = l.value("epsilon", 0.0);
    std::string update = l.value("update", "linear");
    if (update == "mlp")
      lc.mlp = true;
    else if (update != "linear")
      throw ValidationError("config: layer update must be linear|mlp");
    lc.bias = l.value("bias", false);
    cfg.layers.push_back(lc);
  }
  std::string readout = obj.value("readout", "sum");
  if (readout == "sum")
    cfg.readout = Readout::sum;
  else if (readout == "mean")
    cfg.readout = Readout::mean;
  else
    throw ValidationError("config: readout must be sum|mean");
  std::string act = obj.value("activation", "relu");
  if (act == "relu")
    cfg.activation = Activation::relu;
  else if (act == "none")
    cfg.activation = Activation::none;
  else
    throw ValidationError("config: activation must be relu|none");
  if (obj.contains("head")) {
    const json& h = obj.at("head");
    reject_unknown(h, {"layers", "hidden"}, "model.head");
    cfg.head.layers = h.value("layers", 1);
    cfg.head.hidden = h.value("hidden", 0);
  }
  return cfg;
}

TrainConfig parse_train(const json& obj) {
  reject_unknown(obj,
                 {"learning_rate", "epochs", "batch_size", "seed", "loss", "eval_every", "metric",
                  "backtracking"},
                 "train");
  TrainConfig cfg;
  cfg.learning_rate = obj.value("learning_rate", cfg.learning_rate);
  cfg.epochs = obj.value("epochs", cfg.epochs);
  cfg.batch_size = obj.value("batch_size", cfg.batch_size);
  cfg.seed = obj.value("seed", cfg.seed);
  std::string loss = obj.value("loss", "bce");
  if (loss == "bce")
    cfg.loss = LossKind::bce;
  else if (loss == "mse")
    cfg.loss = LossKind::mse;
  else
    throw ValidationError("config: loss must be bce|mse");
  cfg.eval_every = obj.value("eval_every", cfg.eval_every);
  std::string metric = obj.value("metric", "auc");
  if (metric == "auc")
    cfg.metric = MetricKind::auc;
  else if (metric == "accuracy")
    cfg.metric = MetricKind::accuracy;
  else
    throw ValidationError("config: metric must be auc|accuracy");
  cfg.backtracking = obj.value("backtracking", false);
  validate_train_config(cfg);
  return cfg;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json doc = json::parse(json_text, nullptr, false);
  if (doc.is_discarded()) throw ValidationError("config: malformed JSON");
  if (!doc.is_object()) throw ValidationError("config: top level must be a JSON object");
  reject_unknown(doc, {"model", "train", "strategy", "paths"}, "config");
  RunConfig cfg;
  try {
    if (doc.contains("model")) cfg.model = parse_model(doc.at("model"));
    if (doc.contains("train")) cfg.train = parse_train(doc.at("train"));
    if (doc.contains("strategy")) cfg.strategy = Strategy::parse(doc.at("strategy").get<std::string>());
    if (doc.contains("paths")) {
      const json& p = doc.at("paths");
      reject_unknown(p, {"data", "checkpoint", "out_curve", "out_prompt", "out_csv", "out_checkpoint"},
                     "paths");
      for (auto it = p.begin(); it != p.end(); ++it)
        cfg.paths[it.key()] = it.value().get<std::string>();
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

}  // namespace gpf
