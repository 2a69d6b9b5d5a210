#pragma once

#include <map>
#include <optional>
#include <string>

#include "core/gnn.hpp"
#include "core/tuning.hpp"

namespace gpf {

/// Parsed run configuration file. Schema (unknown keys rejected everywhere):
/// {
///   "model":    {"layers":[{"kind":"gin"|"gcn","in":I,"out":O,
///                           "epsilon":E?,"update":"linear"|"mlp"?,"bias":B?}...],
///                "readout":"sum"|"mean", "activation":"relu"|"none",
///                "head":{"layers":K,"hidden":H?}},
///   "train":    {"learning_rate":..,"epochs":..,"batch_size":..,"seed":..,
///                "loss":"bce"|"mse","eval_every":..,"metric":"auc"|"accuracy"?,
///                "backtracking":bool?},
///   "strategy": "ft"|"gpf"|"partial-k"|"mlp-k"|"linear-probe",
///   "paths":    {"data":..,"checkpoint":..,"out_curve":..,"out_prompt":..,
///                "out_csv":..,"out_checkpoint":..}
/// }
/// Every section is optional; commands validate that the sections they need
/// are present.
struct RunConfig {
  std::optional<ModelConfig> model;
  std::optional<TrainConfig> train;
  std::optional<Strategy> strategy;
  std::map<std::string, std::string> paths;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

}  // namespace gpf
