#include "core/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace gpf {

int LayerSpec::in_dim() const {
  if (const auto* lin = std::get_if<LinearUpdate>(&update)) return lin->weight.rows();
  return std::get<MlpUpdate>(update).first.weight.rows();
}

int LayerSpec::out_dim() const {
  if (const auto* lin = std::get_if<LinearUpdate>(&update)) return lin->weight.cols();
  return std::get<MlpUpdate>(update).second.weight.cols();
}

bool LayerSpec::is_linear_gin() const {
  const auto* lin = std::get_if<LinearUpdate>(&update);
  return kind == LayerKind::gin && lin != nullptr && !lin->bias.has_value();
}

int GnnModel::input_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
int GnnModel::embedding_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

std::vector<std::string> GnnModel::param_groups() const {
  std::vector<std::string> out;
  for (size_t i = 0; i < layers.size(); ++i) out.push_back("layer" + std::to_string(i));
  out.push_back("head");
  return out;
}

bool GnnModel::is_frozen(const std::string& group) const {
  auto it = frozen.find(group);
  return it != frozen.end() && it->second;
}

void validate_model(const GnnModel& m) {
  if (m.layers.empty()) throw ValidationError("model needs at least one layer");
  for (size_t i = 0; i + 1 < m.layers.size(); ++i)
    if (m.layers[i].out_dim() != m.layers[i + 1].in_dim())
      throw ValidationError("layer dimensions do not chain at layer " + std::to_string(i + 1));
  if (m.head.layers.empty()) throw ValidationError("model needs a classification head");
  if (m.head.layers.front().weight.rows() != m.embedding_dim())
    throw ValidationError("head input dimension must equal the embedding dimension");
  for (size_t i = 0; i + 1 < m.head.layers.size(); ++i)
    if (m.head.layers[i].weight.cols() != m.head.layers[i + 1].weight.rows())
      throw ValidationError("head dimensions do not chain");
  if (m.head.layers.back().weight.cols() != 1)
    throw ValidationError("head must end in a single logit");
  for (const LayerSpec& l : m.layers)
    if (const auto* mlp = std::get_if<MlpUpdate>(&l.update))
      if (mlp->first.weight.cols() != mlp->second.weight.rows())
        throw ValidationError("GIN update MLP dimensions do not chain");
}

Matrix normalized_adjacency(const Matrix& adjacency) {
  int n = adjacency.rows();
  Matrix a_tilde = adjacency;
  for (int i = 0; i < n; ++i) a_tilde(i, i) += 1.0;
  std::vector<double> inv_sqrt(n);
  for (int i = 0; i < n; ++i) {
    double d = 0.0;
    for (int j = 0; j < n; ++j) d += a_tilde(i, j);
    inv_sqrt[i] = 1.0 / std::sqrt(d);  // d >= 1 thanks to the self-loop
  }
  Matrix out(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out(i, j) = inv_sqrt[i] * a_tilde(i, j) * inv_sqrt[j];
  return out;
}

namespace {

Matrix self_looped(const Matrix& adjacency, double one_plus_eps) {
  Matrix out = adjacency;
  for (int i = 0; i < out.rows(); ++i) out(i, i) += one_plus_eps;
  return out;
}

Matrix apply_linear(const LinearUpdate& lin, const Matrix& h) {
  Matrix out = matmul(h, lin.weight);
  if (lin.bias)
    for (int i = 0; i < out.rows(); ++i)
      for (int j = 0; j < out.cols(); ++j) out(i, j) += (*lin.bias)(0, j);
  return out;
}

Matrix relu_values(Matrix m) {
  for (double& v : m.data()) v = std::max(v, 0.0);
  return m;
}

}  // namespace

Matrix layer_forward(const LayerSpec& layer, const Matrix& adjacency, const Matrix& h_in) {
  if (h_in.cols() != layer.in_dim())
    throw ValidationError("layer_forward: input width " + std::to_string(h_in.cols()) +
                          " does not match layer in_dim " + std::to_string(layer.in_dim()));
  if (adjacency.rows() != h_in.rows()) throw ValidationError("layer_forward: node count mismatch");
  if (layer.kind == LayerKind::gcn) {
    Matrix mixed = matmul(normalized_adjacency(adjacency), h_in);
    return apply_linear(std::get<LinearUpdate>(layer.update), mixed);
  }
  Matrix mixed = matmul(self_looped(adjacency, 1.0 + layer.epsilon), h_in);
  if (const auto* lin = std::get_if<LinearUpdate>(&layer.update)) return apply_linear(*lin, mixed);
  const auto& mlp = std::get<MlpUpdate>(layer.update);
  return apply_linear(mlp.second, relu_values(apply_linear(mlp.first, mixed)));
}

std::vector<double> readout(const Matrix& h, Readout kind) {
  Matrix s = row_vector_sum(h);
  if (kind == Readout::mean)
    for (double& v : s.data()) v /= h.rows();
  return s.data();
}

Matrix node_states(const GnnModel& m, const Graph& g) {
  Matrix h = g.features;
  for (size_t i = 0; i < m.layers.size(); ++i) {
    h = layer_forward(m.layers[i], g.adjacency, h);
    if (m.activation == Activation::relu && i + 1 < m.layers.size()) h = relu_values(std::move(h));
  }
  return h;
}

std::vector<double> embed_graph(const GnnModel& m, const Graph& g) {
  return readout(node_states(m, g), m.readout);
}

ForwardResult model_forward(const GnnModel& m, const Graph& g) {
  validate_model(m);
  if (g.feature_dim() != m.input_dim())
    throw ValidationError("graph feature dimension does not match model input dimension");
  ForwardResult out;
  out.embedding = embed_graph(m, g);
  Matrix h(1, static_cast<int>(out.embedding.size()));
  h.data() = out.embedding;
  for (size_t i = 0; i < m.head.layers.size(); ++i) {
    h = apply_linear(m.head.layers[i], h);
    if (i + 1 < m.head.layers.size()) h = relu_values(std::move(h));
  }
  out.logit = h(0, 0);
  return out;
}

// ---------------------------------------------------------------------------
// Parameter enumeration: the single canonical order used by counting,
// binding, freezing checks and checkpoints.
// ---------------------------------------------------------------------------

namespace {

template <typename Model, typename MatrixFn, typename ScalarFn>
void for_each_param(Model& m, MatrixFn&& on_matrix, ScalarFn&& on_scalar) {
  for (size_t i = 0; i < m.layers.size(); ++i) {
    std::string group = "layer" + std::to_string(i);
    auto& layer = m.layers[i];
    std::visit(
        [&](auto& upd) {
          using T = std::decay_t<decltype(upd)>;
          if constexpr (std::is_same_v<T, LinearUpdate>) {
            on_matrix(group, upd.weight, group + ".weight");
            if (upd.bias) on_matrix(group, *upd.bias, group + ".bias");
          } else {
            on_matrix(group, upd.first.weight, group + ".w0");
            if (upd.first.bias) on_matrix(group, *upd.first.bias, group + ".b0");
            on_matrix(group, upd.second.weight, group + ".w1");
            if (upd.second.bias) on_matrix(group, *upd.second.bias, group + ".b1");
          }
        },
        layer.update);
    if (layer.kind == LayerKind::gin) on_scalar(group, layer.epsilon, group + ".epsilon");
  }
  for (size_t i = 0; i < m.head.layers.size(); ++i) {
    auto& lin = m.head.layers[i];
    on_matrix("head", lin.weight, "head." + std::to_string(i) + ".weight");
    if (lin.bias) on_matrix("head", *lin.bias, "head." + std::to_string(i) + ".bias");
  }
}

}  // namespace

long long count_params(const GnnModel& m, bool trainable_only) {
  long long total = 0;
  auto want = [&](const std::string& group) { return !trainable_only || !m.is_frozen(group); };
  for_each_param(
      m,
      [&](const std::string& group, const Matrix& mat, const std::string&) {
        if (want(group)) total += static_cast<long long>(mat.size());
      },
      [&](const std::string& group, const double&, const std::string&) {
        if (want(group)) total += 1;
      });
  return total;
}

namespace {

std::vector<std::string> expand_groups(const GnnModel& m, const std::vector<std::string>& groups) {
  std::vector<std::string> known = m.param_groups();
  std::vector<std::string> out;
  for (const std::string& g : groups) {
    if (g == "backbone") {
      for (const std::string& k : known)
        if (k != "head") out.push_back(k);
      continue;
    }
    if (std::find(known.begin(), known.end(), g) == known.end())
      throw ValidationError("unknown parameter group \"" + g + "\"");
    out.push_back(g);
  }
  return out;
}

}  // namespace

void freeze(GnnModel& m, const std::vector<std::string>& groups) {
  for (const std::string& g : expand_groups(m, groups)) m.frozen[g] = true;
}

void unfreeze(GnnModel& m, const std::vector<std::string>& groups) {
  for (const std::string& g : expand_groups(m, groups)) m.frozen[g] = false;
}

bool layer_params_bitwise_equal(const GnnModel& a, const GnnModel& b, int layer) {
  std::string group = "layer" + std::to_string(layer);
  std::vector<const Matrix*> ma, mb;
  std::vector<double> sa, sb;
  auto collect = [&](const GnnModel& m, std::vector<const Matrix*>& mats, std::vector<double>& scalars) {
    for_each_param(
        m,
        [&](const std::string& g, const Matrix& mat, const std::string&) {
          if (g == group) mats.push_back(&mat);
        },
        [&](const std::string& g, const double& s, const std::string&) {
          if (g == group) scalars.push_back(s);
        });
  };
  collect(a, ma, sa);
  collect(b, mb, sb);
  if (ma.size() != mb.size()) return false;
  for (size_t i = 0; i < ma.size(); ++i)
    if (!exactly_equal(*ma[i], *mb[i])) return false;
  return sa == sb;
}

bool models_bitwise_equal(const GnnModel& a, const GnnModel& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (size_t i = 0; i < a.layers.size(); ++i)
    if (!layer_params_bitwise_equal(a, b, static_cast<int>(i))) return false;
  if (a.head.layers.size() != b.head.layers.size()) return false;
  for (size_t i = 0; i < a.head.layers.size(); ++i) {
    if (!exactly_equal(a.head.layers[i].weight, b.head.layers[i].weight)) return false;
    if (a.head.layers[i].bias.has_value() != b.head.layers[i].bias.has_value()) return false;
    if (a.head.layers[i].bias && !exactly_equal(*a.head.layers[i].bias, *b.head.layers[i].bias))
      return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Tape binding
// ---------------------------------------------------------------------------

namespace {

BoundModel bind_impl(Tape& tape, GnnModel* mut, const GnnModel& m,
                     const std::set<std::string>& trainable_groups) {
  for (const std::string& g : trainable_groups) {
    auto known = m.param_groups();
    if (std::find(known.begin(), known.end(), g) == known.end())
      throw ValidationError("unknown parameter group \"" + g + "\"");
  }
  BoundModel bm;
  bm.spec = &m;

  // Flat queues filled in canonical order, then distributed structurally.
  std::vector<Tensor> mats;
  std::vector<Tensor> scalars;
  auto bind_matrix = [&](const std::string& group, const Matrix& mat, Matrix* target) {
    bool train = trainable_groups.count(group) > 0;
    Tensor t = tape.leaf(mat, train);
    if (train) bm.trainable.push_back(ParamSlot{group, t, target, nullptr});
    mats.push_back(t);
  };
  auto bind_scalar = [&](const std::string& group, const double& s, double* target) {
    bool train = trainable_groups.count(group) > 0;
    Matrix v(1, 1);
    v(0, 0) = s;
    Tensor t = tape.leaf(std::move(v), train);
    if (train) bm.trainable.push_back(ParamSlot{group, t, nullptr, target});
    scalars.push_back(t);
  };

  if (mut) {
    for_each_param(
        *mut,
        [&](const std::string& g, Matrix& mat, const std::string&) { bind_matrix(g, mat, &mat); },
        [&](const std::string& g, double& s, const std::string&) { bind_scalar(g, s, &s); });
  } else {
    for_each_param(
        m,
        [&](const std::string& g, const Matrix& mat, const std::string&) {
          bind_matrix(g, mat, nullptr);
        },
        [&](const std::string& g, const double& s, const std::string&) {
          bind_scalar(g, s, nullptr);
        });
  }

  size_t mi = 0, si = 0;
  for (const LayerSpec& layer : m.layers) {
    BoundLayer bl;
    bl.kind = layer.kind;
    std::visit(
        [&](const auto& upd) {
          using T = std::decay_t<decltype(upd)>;
          if constexpr (std::is_same_v<T, LinearUpdate>) {
            BoundLinear l{mats[mi++], std::nullopt};
            if (upd.bias) l.bias = mats[mi++];
            bl.linears.push_back(l);
          } else {
            BoundLinear l0{mats[mi++], std::nullopt};
            if (upd.first.bias) l0.bias = mats[mi++];
            BoundLinear l1{mats[mi++], std::nullopt};
            if (upd.second.bias) l1.bias = mats[mi++];
            bl.linears.push_back(l0);
            bl.linears.push_back(l1);
          }
        },
        layer.update);
    if (layer.kind == LayerKind::gin) bl.epsilon = scalars[si++];
    bm.layers.push_back(std::move(bl));
  }
  for (const LinearUpdate& lin : m.head.layers) {
    BoundLinear l{mats[mi++], std::nullopt};
    if (lin.bias) l.bias = mats[mi++];
    bm.head.push_back(l);
  }
  return bm;
}

Tensor bound_linear_apply(Tape& tape, const BoundLinear& lin, Tensor h) {
  Tensor out = tape.matmul(h, lin.weight);
  if (lin.bias) out = tape.broadcast_add_row(out, *lin.bias);
  return out;
}

}  // namespace

BoundModel bind_model(Tape& tape, GnnModel& m, const std::set<std::string>& trainable_groups) {
  validate_model(m);
  return bind_impl(tape, &m, m, trainable_groups);
}

BoundModel bind_model_const(Tape& tape, const GnnModel& m) {
  validate_model(m);
  return bind_impl(tape, nullptr, m, {});
}

Tensor node_states_on_tape(Tape& tape, const BoundModel& bm, const Graph& g, Tensor x) {
  const GnnModel& m = *bm.spec;
  if (x.cols != m.input_dim())
    throw ValidationError("graph feature dimension does not match model input dimension");
  Tensor h = x;
  for (size_t i = 0; i < bm.layers.size(); ++i) {
    const BoundLayer& bl = bm.layers[i];
    if (bl.kind == LayerKind::gcn) {
      Tensor mixed = tape.matmul(tape.constant(normalized_adjacency(g.adjacency)), h);
      h = bound_linear_apply(tape, bl.linears[0], mixed);
    } else {
      // (A + (1+eps) I) H = (A + I) H + eps * H, with eps a tape scalar.
      Tensor base = tape.matmul(tape.constant(self_looped(g.adjacency, 1.0)), h);
      Tensor mixed = tape.add(base, tape.scale_by(h, bl.epsilon));
      h = bound_linear_apply(tape, bl.linears[0], mixed);
      if (bl.linears.size() == 2) h = bound_linear_apply(tape, bl.linears[1], tape.relu(h));
    }
    if (m.activation == Activation::relu && i + 1 < bm.layers.size()) h = tape.relu(h);
  }
  return h;
}

Tensor embedding_on_tape(Tape& tape, const BoundModel& bm, const Graph& g, Tensor x) {
  Tensor h = node_states_on_tape(tape, bm, g, x);
  return bm.spec->readout == Readout::sum ? tape.row_sum(h) : tape.row_mean(h);
}

Tensor logit_on_tape(Tape& tape, const BoundModel& bm, Tensor embedding) {
  Tensor h = embedding;
  for (size_t i = 0; i < bm.head.size(); ++i) {
    h = bound_linear_apply(tape, bm.head[i], h);
    if (i + 1 < bm.head.size()) h = tape.relu(h);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

namespace {

Matrix glorot(int rows, int cols, std::mt19937_64& rng) {
  double s = std::sqrt(6.0 / (rows + cols));
  std::uniform_real_distribution<double> u(-s, s);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = u(rng);
  return m;
}

}  // namespace

Head build_head(int embedding_dim, const HeadConfig& cfg, std::uint64_t init_seed) {
  if (cfg.layers < 1) throw ValidationError("head needs at least one layer");
  std::mt19937_64 rng(init_seed ^ 0x9e3779b97f4a7c15ULL);
  int hidden = cfg.hidden > 0 ? cfg.hidden : embedding_dim;
  Head head;
  int in = embedding_dim;
  for (int i = 0; i < cfg.layers; ++i) {
    int out = (i == cfg.layers - 1) ? 1 : hidden;
    LinearUpdate lin;
    lin.weight = glorot(in, out, rng);
    lin.bias = Matrix(1, out);
    head.layers.push_back(std::move(lin));
    in = out;
  }
  return head;
}

GnnModel build_model(const ModelConfig& cfg, std::uint64_t init_seed) {
  if (cfg.layers.empty()) throw ValidationError("model config needs at least one layer");
  std::mt19937_64 rng(init_seed);
  GnnModel m;
  m.readout = cfg.readout;
  m.activation = cfg.activation;
  for (const LayerSpecConfig& lc : cfg.layers) {
    if (lc.in < 1 || lc.out < 1) throw ValidationError("layer dimensions must be positive");
    LayerSpec layer;
    layer.kind = lc.kind;
    layer.epsilon = lc.epsilon;
    if (lc.kind == LayerKind::gcn) {
      if (lc.mlp || lc.bias) throw ValidationError("GCN layers take a plain linear transform");
      layer.update = LinearUpdate{glorot(lc.in, lc.out, rng), std::nullopt};
    } else if (lc.mlp) {
      MlpUpdate mlp;
      mlp.first = LinearUpdate{glorot(lc.in, lc.out, rng), Matrix(1, lc.out)};
      mlp.second = LinearUpdate{glorot(lc.out, lc.out, rng), Matrix(1, lc.out)};
      layer.update = std::move(mlp);
    } else {
      layer.update = LinearUpdate{glorot(lc.in, lc.out, rng),
                                  lc.bias ? std::optional<Matrix>(Matrix(1, lc.out)) : std::nullopt};
    }
    m.layers.push_back(std::move(layer));
  }
  m.head = build_head(m.embedding_dim(), cfg.head, init_seed);
  validate_model(m);
  return m;
}

}  // namespace gpf
