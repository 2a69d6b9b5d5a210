#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "core/graph.hpp"
#include "core/tensor.hpp"

namespace gpf {

enum class LayerKind { gin, gcn };
enum class Readout { sum, mean };
enum class Activation { relu, none };

struct LinearUpdate {
  Matrix weight;                // in x out
  std::optional<Matrix> bias;   // 1 x out
};

/// Two stacked linears with a relu in between (the usual GIN update MLP).
struct MlpUpdate {
  LinearUpdate first;
  LinearUpdate second;
};

struct LayerSpec {
  LayerKind kind = LayerKind::gin;
  double epsilon = 0.0;  // GIN only; frozen together with the layer weights
  std::variant<LinearUpdate, MlpUpdate> update;

  int in_dim() const;
  int out_dim() const;
  /// No bias, no MLP: the form the closed-form prompt solver requires.
  bool is_linear_gin() const;
};

/// Classification head: linear layers with relu between, last one ending in a
/// single logit.
struct Head {
  std::vector<LinearUpdate> layers;
};

/// Ordered layers + readout + head. Parameter groups are "layer0".."layerN-1"
/// and "head"; "backbone" is accepted as an alias for all layer groups.
struct GnnModel {
  std::vector<LayerSpec> layers;
  Readout readout = Readout::sum;
  Activation activation = Activation::relu;
  Head head;
  std::map<std::string, bool> frozen;

  int input_dim() const;
  int embedding_dim() const;
  std::vector<std::string> param_groups() const;
  bool is_frozen(const std::string& group) const;
};

void validate_model(const GnnModel& m);

/// D^{-1/2} (A+I) D^{-1/2} with D the self-looped degree matrix.
Matrix normalized_adjacency(const Matrix& adjacency);

/// Value-level single-layer application (no gradients).
Matrix layer_forward(const LayerSpec& layer, const Matrix& adjacency, const Matrix& h_in);

std::vector<double> readout(const Matrix& h, Readout kind);

struct ForwardResult {
  std::vector<double> embedding;
  double logit = 0.0;
};

ForwardResult model_forward(const GnnModel& m, const Graph& g);
std::vector<double> embed_graph(const GnnModel& m, const Graph& g);
/// Backbone output before readout (value-level).
Matrix node_states(const GnnModel& m, const Graph& g);

long long count_params(const GnnModel& m, bool trainable_only);

void freeze(GnnModel& m, const std::vector<std::string>& groups);
void unfreeze(GnnModel& m, const std::vector<std::string>& groups);

void save_checkpoint(const GnnModel& m, const std::string& path);
GnnModel load_checkpoint(const std::string& path);

bool models_bitwise_equal(const GnnModel& a, const GnnModel& b);
bool layer_params_bitwise_equal(const GnnModel& a, const GnnModel& b, int layer);

// ---------------------------------------------------------------------------
// Tape-bound forward passes (training / prompt fitting)
// ---------------------------------------------------------------------------

struct BoundLinear {
  Tensor weight;
  std::optional<Tensor> bias;
};

struct BoundLayer {
  LayerKind kind = LayerKind::gin;
  Tensor epsilon;  // 1x1, GIN only
  std::vector<BoundLinear> linears;
};

/// One model parameter surfaced for an optimizer step: the leaf tensor on the
/// tape plus where the updated value is written back.
struct ParamSlot {
  std::string group;
  Tensor tensor;
  Matrix* matrix = nullptr;   // null for the epsilon scalar
  double* scalar = nullptr;
};

struct BoundModel {
  const GnnModel* spec = nullptr;
  std::vector<BoundLayer> layers;
  std::vector<BoundLinear> head;
  std::vector<ParamSlot> trainable;
};

/// Inserts every parameter as a tape leaf; groups listed in
/// `trainable_groups` get requires_grad and a ParamSlot. The model must
/// outlive the binding.
BoundModel bind_model(Tape& tape, GnnModel& m, const std::set<std::string>& trainable_groups);
BoundModel bind_model_const(Tape& tape, const GnnModel& m);

/// Backbone node states; `x` is the (possibly prompted) input feature tensor.
Tensor node_states_on_tape(Tape& tape, const BoundModel& bm, const Graph& g, Tensor x);
Tensor embedding_on_tape(Tape& tape, const BoundModel& bm, const Graph& g, Tensor x);
Tensor logit_on_tape(Tape& tape, const BoundModel& bm, Tensor embedding);

// ---------------------------------------------------------------------------
// Model construction
// ---------------------------------------------------------------------------

struct LayerSpecConfig {
  LayerKind kind = LayerKind::gin;
  int in = 0;
  int out = 0;
  double epsilon = 0.0;
  bool mlp = false;   // GIN update: linear vs 2-layer MLP
  bool bias = false;  // bias on linear GIN updates (MLP updates always carry biases)
};

struct HeadConfig {
  int layers = 1;   // k = 1 is a plain linear head
  int hidden = 0;   // 0: use the embedding width
};

struct ModelConfig {
  std::vector<LayerSpecConfig> layers;
  Readout readout = Readout::sum;
  Activation activation = Activation::relu;
  HeadConfig head;
};

GnnModel build_model(const ModelConfig& cfg, std::uint64_t init_seed);
/// Fresh head of the given shape for an existing model (task adaptation).
Head build_head(int embedding_dim, const HeadConfig& cfg, std::uint64_t init_seed);

}  // namespace gpf
