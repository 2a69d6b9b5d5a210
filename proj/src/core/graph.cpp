#include "core/graph.hpp"

#include <algorithm>
#include <numeric>
#include <set>

namespace gpf {

int Graph::degree(int node) const {
  double d = 0.0;
  for (int j = 0; j < node_count(); ++j) d += adjacency(node, j);
  return static_cast<int>(d);
}

double Graph::total_degree() const {
  double d = 0.0;
  for (double v : adjacency.data()) d += v;
  return d;
}

std::vector<std::pair<int, int>> Graph::edges() const {
  std::vector<std::pair<int, int>> out;
  for (int u = 0; u < node_count(); ++u)
    for (int v = u + 1; v < node_count(); ++v)
      if (adjacency(u, v) == 1.0) out.emplace_back(u, v);
  return out;
}

void validate_graph(const Graph& g) {
  const Matrix& a = g.adjacency;
  if (a.rows() != a.cols()) throw ValidationError("adjacency must be square");
  int n = a.rows();
  if (n < 1) throw ValidationError("graph must have at least one node");
  for (int i = 0; i < n; ++i) {
    if (a(i, i) != 0.0) throw ValidationError("adjacency diagonal must be zero (no stored self-loops)");
    for (int j = 0; j < n; ++j) {
      double v = a(i, j);
      if (v != 0.0 && v != 1.0) throw ValidationError("adjacency entries must be 0 or 1");
      if (v != a(j, i)) throw ValidationError("adjacency must be symmetric");
    }
  }
  if (g.features.rows() != n) throw ValidationError("feature matrix must have one row per node");
  if (g.features.cols() < 1) throw ValidationError("feature dimension must be at least 1");
  if (!g.features.all_finite()) throw ValidationError("features must be finite");
  if (g.label && *g.label != 0 && *g.label != 1) throw ValidationError("label must be 0 or 1");
}

Graph make_graph(Matrix adjacency, Matrix features, std::optional<int> label, std::string id) {
  Graph g{std::move(adjacency), std::move(features), label, std::move(id)};
  validate_graph(g);
  return g;
}

namespace {

Graph apply_feature(const Graph& g, const FeatureTransform& t) {
  if (!t.delta_features.same_shape(g.features))
    throw ValidationError("feature transform delta has wrong shape");
  Graph out = g;
  out.features = add(g.features, t.delta_features);
  if (!out.features.all_finite()) throw ValidationError("feature transform produced non-finite features");
  return out;
}

Graph apply_link(const Graph& g, const LinkTransform& t) {
  const Matrix& d = t.delta_adjacency;
  if (d.rows() != g.node_count() || d.cols() != g.node_count())
    throw ValidationError("link transform delta has wrong shape");
  for (double v : d.data())
    if (v != -1.0 && v != 0.0 && v != 1.0)
      throw ValidationError("link transform delta entries must be in {-1,0,1}");
  Graph out = g;
  out.adjacency = add(g.adjacency, d);
  for (int i = 0; i < out.node_count(); ++i)
    for (int j = 0; j < out.node_count(); ++j) {
      double v = out.adjacency(i, j);
      if (v != 0.0 && v != 1.0)
        throw ValidationError("link transform produced adjacency entry outside {0,1}");
    }
  validate_graph(out);
  return out;
}

Graph add_component(const Graph& g, const Graph& comp) {
  validate_graph(comp);
  if (comp.feature_dim() != g.feature_dim())
    throw ValidationError("added component feature dimension mismatch");
  int n = g.node_count(), m = comp.node_count();
  Matrix adj(n + m, n + m);
  Matrix feat(n + m, g.feature_dim());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) adj(i, j) = g.adjacency(i, j);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) adj(n + i, n + j) = comp.adjacency(i, j);
  for (int i = 0; i < n; ++i)
    for (int f = 0; f < g.feature_dim(); ++f) feat(i, f) = g.features(i, f);
  for (int i = 0; i < m; ++i)
    for (int f = 0; f < g.feature_dim(); ++f) feat(n + i, f) = comp.features(i, f);
  Graph out = g;
  out.adjacency = std::move(adj);
  out.features = std::move(feat);
  return out;
}

Graph remove_nodes(const Graph& g, const std::vector<int>& nodes) {
  int n = g.node_count();
  std::set<int> removed(nodes.begin(), nodes.end());
  if (removed.size() != nodes.size()) throw ValidationError("removal node set has duplicates");
  for (int v : nodes)
    if (v < 0 || v >= n) throw ValidationError("removal node index out of range");
  // The removed set must be component-closed: no edge may cross it.
  for (int u : removed)
    for (int v = 0; v < n; ++v)
      if (g.adjacency(u, v) == 1.0 && !removed.count(v))
        throw ValidationError("removal set is not a union of whole connected components");
  int kept = n - static_cast<int>(removed.size());
  if (kept < 1) throw ValidationError("removal would leave an empty graph");
  std::vector<int> keep;
  for (int v = 0; v < n; ++v)
    if (!removed.count(v)) keep.push_back(v);
  Matrix adj(kept, kept);
  Matrix feat(kept, g.feature_dim());
  for (int i = 0; i < kept; ++i) {
    for (int j = 0; j < kept; ++j) adj(i, j) = g.adjacency(keep[i], keep[j]);
    for (int f = 0; f < g.feature_dim(); ++f) feat(i, f) = g.features(keep[i], f);
  }
  Graph out = g;
  out.adjacency = std::move(adj);
  out.features = std::move(feat);
  return out;
}

Graph apply_ict(const Graph& g, const IsolatedComponentTransform& t) {
  Graph cur = g;
  for (const auto& edit : t.edits) {
    if (const auto* a = std::get_if<AddComponent>(&edit))
      cur = add_component(cur, a->component);
    else
      cur = remove_nodes(cur, std::get<RemoveComponent>(edit).nodes);
  }
  return cur;
}

}  // namespace

Graph apply_transform(const Graph& g, const TransformSpec& spec) {
  validate_graph(g);
  return std::visit(
      [&](const auto& t) -> Graph {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, FeatureTransform>) {
          return apply_feature(g, t);
        } else if constexpr (std::is_same_v<T, LinkTransform>) {
          return apply_link(g, t);
        } else if constexpr (std::is_same_v<T, IsolatedComponentTransform>) {
          return apply_ict(g, t);
        } else {
          Graph cur = g;
          for (const TransformSpec& step : t.steps) cur = apply_transform(cur, step);
          return cur;
        }
      },
      spec.op);
}

std::vector<std::vector<int>> connected_components(const Graph& g) {
  int n = g.node_count();
  std::vector<int> comp(n, -1);
  std::vector<std::vector<int>> out;
  for (int start = 0; start < n; ++start) {
    if (comp[start] != -1) continue;
    int c = static_cast<int>(out.size());
    std::vector<int> members, stack{start};
    comp[start] = c;
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      members.push_back(u);
      for (int v = 0; v < n; ++v)
        if (g.adjacency(u, v) == 1.0 && comp[v] == -1) {
          comp[v] = c;
          stack.push_back(v);
        }
    }
    std::sort(members.begin(), members.end());
    out.push_back(std::move(members));
  }
  return out;
}

Graph permute(const Graph& g, const std::vector<int>& perm) {
  int n = g.node_count();
  if (static_cast<int>(perm.size()) != n) throw ValidationError("permutation size mismatch");
  std::vector<bool> seen(n, false);
  for (int p : perm) {
    if (p < 0 || p >= n || seen[p]) throw ValidationError("permutation is not a bijection");
    seen[p] = true;
  }
  Matrix adj(n, n);
  Matrix feat(n, g.feature_dim());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) adj(perm[i], perm[j]) = g.adjacency(i, j);
    for (int f = 0; f < g.feature_dim(); ++f) feat(perm[i], f) = g.features(i, f);
  }
  Graph out = g;
  out.adjacency = std::move(adj);
  out.features = std::move(feat);
  return out;
}

std::vector<const Graph*> Dataset::graphs_in(Split s) const {
  std::vector<const Graph*> out;
  for (const Graph& g : graphs) {
    auto it = split.find(g.id);
    if (it != split.end() && it->second == s) out.push_back(&g);
  }
  return out;
}

bool graphs_equal(const Graph& a, const Graph& b) {
  return exactly_equal(a.adjacency, b.adjacency) && exactly_equal(a.features, b.features) &&
         a.label == b.label && a.id == b.id;
}

bool datasets_equal(const Dataset& a, const Dataset& b) {
  if (a.feature_dim != b.feature_dim || a.split != b.split ||
      a.graphs.size() != b.graphs.size())
    return false;
  for (size_t i = 0; i < a.graphs.size(); ++i)
    if (!graphs_equal(a.graphs[i], b.graphs[i])) return false;
  return true;
}

}  // namespace gpf
