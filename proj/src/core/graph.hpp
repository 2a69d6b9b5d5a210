#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "core/matrix.hpp"

namespace gpf {

/// Undirected graph with dense adjacency and per-node features.
/// Invariants (enforced by make_graph / validate_graph):
///   - adjacency is N x N, symmetric, entries in {0,1}, zero diagonal
///   - features is N x F with F >= 1, all entries finite
///   - N >= 1
/// Self-loops are never stored; layers insert them as needed.
struct Graph {
  Matrix adjacency;
  Matrix features;
  std::optional<int> label;  // 0 or 1
  std::string id;

  int node_count() const { return adjacency.rows(); }
  int feature_dim() const { return features.cols(); }

  int degree(int node) const;
  /// Sum of all node degrees (twice the edge count).
  double total_degree() const;
  /// Edge list with u < v.
  std::vector<std::pair<int, int>> edges() const;
};

Graph make_graph(Matrix adjacency, Matrix features, std::optional<int> label = std::nullopt,
                 std::string id = "");
void validate_graph(const Graph& g);

// ---------------------------------------------------------------------------
// Graph-level transformations
// ---------------------------------------------------------------------------

struct TransformSpec;

/// X' = X + delta_features, adjacency unchanged.
struct FeatureTransform {
  Matrix delta_features;
};

/// A' = A + delta_adjacency; entries of delta in {-1,0,1}, result must be a
/// valid adjacency.
struct LinkTransform {
  Matrix delta_adjacency;
};

/// Append a component with no links to the host graph.
struct AddComponent {
  Graph component;
};

/// Remove a node set that is a union of whole connected components.
struct RemoveComponent {
  std::vector<int> nodes;
};

using ComponentEdit = std::variant<AddComponent, RemoveComponent>;

/// Edits are applied left-to-right; removal indices refer to the graph as it
/// stands when the edit is reached.
struct IsolatedComponentTransform {
  std::vector<ComponentEdit> edits;
};

struct CompositeTransform {
  std::vector<TransformSpec> steps;
};

struct TransformSpec {
  std::variant<FeatureTransform, LinkTransform, IsolatedComponentTransform, CompositeTransform> op;
};

/// Pure: returns the transformed graph, input untouched.
Graph apply_transform(const Graph& g, const TransformSpec& spec);

/// Partition of node indices into connected components (each sorted,
/// components ordered by smallest member).
std::vector<std::vector<int>> connected_components(const Graph& g);

/// perm[i] is the new index of old node i. A' = P A P^T, X' = P X.
Graph permute(const Graph& g, const std::vector<int>& perm);

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

enum class Split { train, valid, test };

struct Dataset {
  std::vector<Graph> graphs;
  int feature_dim = 0;
  std::map<std::string, Split> split;

  std::vector<const Graph*> graphs_in(Split s) const;
};

enum class ClassRule { triangle_motif, community_pair };

ClassRule parse_class_rule(const std::string& name);

/// Deterministic synthetic binary graph-classification dataset. Labels follow
/// the structural rule exactly and are balanced by construction.
Dataset generate_synthetic_dataset(std::uint64_t seed, int n_graphs, ClassRule rule,
                                   int feature_dim);

/// JSONL dataset I/O. One graph object per line:
///   {"id": str, "n": int, "edges": [[u,v],...] (u<v), "x": [[...]xn],
///    "y": 0|1 (optional), "split": "train"|"valid"|"test" (optional)}
Dataset load_dataset(const std::string& path);
void save_dataset(const Dataset& ds, const std::string& path);

/// Single-graph JSON file (same object schema as a dataset line).
Graph load_graph(const std::string& path);
void save_graph(const Graph& g, const std::string& path);

/// TransformSpec JSON files are kind-tagged:
///   {"kind":"feature","delta":[[..]xN]}
///   {"kind":"link","add_edges":[[u,v],..],"remove_edges":[[u,v],..]}
///   {"kind":"isolated_component","edits":[{"op":"add","component":{...graph...}},
///                                         {"op":"remove","nodes":[..]}]}
///   {"kind":"composite","steps":[...]}
TransformSpec load_transform_spec(const std::string& path);
TransformSpec parse_transform_spec_json(const std::string& json_text);
std::string transform_spec_to_json(const TransformSpec& spec);

bool graphs_equal(const Graph& a, const Graph& b);
bool datasets_equal(const Dataset& a, const Dataset& b);

}  // namespace gpf
