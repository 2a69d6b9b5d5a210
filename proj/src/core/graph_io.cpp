#include <fstream>
#include <sstream>

#include "core/graph.hpp"
#include "json.hpp"

namespace gpf {

using nlohmann::json;

namespace {

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed,
                         const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) known = true;
    if (!known) throw ValidationError("unknown key \"" + it.key() + "\" in " + where);
  }
}

json graph_to_json(const Graph& g, const Dataset* ds) {
  json obj;
  obj["id"] = g.id;
  obj["n"] = g.node_count();
  json edges = json::array();
  for (auto [u, v] : g.edges()) edges.push_back(json::array({u, v}));
  obj["edges"] = std::move(edges);
  json x = json::array();
  for (int i = 0; i < g.node_count(); ++i) {
    json row = json::array();
    for (int f = 0; f < g.feature_dim(); ++f) row.push_back(g.features(i, f));
    x.push_back(std::move(row));
  }
  obj["x"] = std::move(x);
  if (g.label) obj["y"] = *g.label;
  if (ds) {
    auto it = ds->split.find(g.id);
    if (it != ds->split.end())
      obj["split"] = it->second == Split::train ? "train" : it->second == Split::valid ? "valid" : "test";
  }
  return obj;
}

Graph graph_from_json(const json& obj, const std::string& where, std::optional<Split>* split_out) {
  if (!obj.is_object()) throw ValidationError(where + ": graph entry must be a JSON object");
  reject_unknown_keys(obj, {"id", "n", "edges", "x", "y", "split"}, where);
  if (!obj.contains("n") || !obj.contains("x") || !obj.contains("edges"))
    throw ValidationError(where + ": graph entry requires \"n\", \"edges\" and \"x\"");
  int n = obj.at("n").get<int>();
  if (n < 1) throw ValidationError(where + ": n must be >= 1");
  const json& x = obj.at("x");
  if (!x.is_array() || static_cast<int>(x.size()) != n)
    throw ValidationError(where + ": \"x\" must list one feature row per node");
  int f = x.empty() ? 0 : static_cast<int>(x.at(0).size());
  Matrix feat(n, f);
  for (int i = 0; i < n; ++i) {
    const json& row = x.at(i);
    if (!row.is_array() || static_cast<int>(row.size()) != f)
      throw ValidationError(where + ": ragged feature rows");
    for (int j = 0; j < f; ++j) feat(i, j) = row.at(j).get<double>();
  }
  Matrix adj(n, n);
  for (const json& e : obj.at("edges")) {
    if (!e.is_array() || e.size() != 2) throw ValidationError(where + ": edge must be a pair");
    int u = e.at(0).get<int>(), v = e.at(1).get<int>();
    if (u < 0 || v < 0 || u >= n || v >= n)
      throw ValidationError(where + ": edge endpoint out of range");
    if (u >= v)
      throw ValidationError(where + ": edges must satisfy u < v (symmetric adjacency is implied)");
    if (adj(u, v) == 1.0) throw ValidationError(where + ": duplicate edge");
    adj(u, v) = adj(v, u) = 1.0;
  }
  std::optional<int> label;
  if (obj.contains("y")) label = obj.at("y").get<int>();
  if (split_out) {
    *split_out = std::nullopt;
    if (obj.contains("split")) {
      std::string s = obj.at("split").get<std::string>();
      if (s == "train")
        *split_out = Split::train;
      else if (s == "valid")
        *split_out = Split::valid;
      else if (s == "test")
        *split_out = Split::test;
      else
        throw ValidationError(where + ": split must be train|valid|test");
    }
  }
  std::string id = obj.contains("id") ? obj.at("id").get<std::string>() : "";
  return make_graph(std::move(adj), std::move(feat), label, std::move(id));
}

json parse_json_text(const std::string& text, const std::string& where) {
  json obj = json::parse(text, nullptr, false);
  if (obj.is_discarded()) throw ValidationError(where + ": malformed JSON");
  return obj;
}

}  // namespace

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset file: " + path);
  Dataset ds;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::string where = path + ":" + std::to_string(lineno);
    json obj = parse_json_text(line, where);
    std::optional<Split> split;
    Graph g = graph_from_json(obj, where, &split);
    if (g.id.empty()) throw ValidationError(where + ": dataset graphs need an id");
    if (ds.split.count(g.id) || std::any_of(ds.graphs.begin(), ds.graphs.end(),
                                            [&](const Graph& h) { return h.id == g.id; }))
      throw ValidationError(where + ": duplicate graph id \"" + g.id + "\"");
    if (ds.graphs.empty())
      ds.feature_dim = g.feature_dim();
    else if (g.feature_dim() != ds.feature_dim)
      throw ValidationError(where + ": feature dimension mismatch (expected " +
                            std::to_string(ds.feature_dim) + ", got " +
                            std::to_string(g.feature_dim()) + ")");
    if (split) ds.split[g.id] = *split;
    ds.graphs.push_back(std::move(g));
  }
  if (ds.graphs.empty()) throw ValidationError(path + ": dataset is empty");
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset file: " + path);
  for (const Graph& g : ds.graphs) out << graph_to_json(g, &ds).dump() << "\n";
  if (!out) throw IoError("write failed: " + path);
}

Graph load_graph(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open graph file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  json obj = parse_json_text(buf.str(), path);
  return graph_from_json(obj, path, nullptr);
}

void save_graph(const Graph& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write graph file: " + path);
  out << graph_to_json(g, nullptr).dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// TransformSpec JSON
// ---------------------------------------------------------------------------

namespace {

Matrix matrix_from_json(const json& rows, const std::string& where) {
  if (!rows.is_array() || rows.empty()) throw ValidationError(where + ": expected a matrix");
  int r = static_cast<int>(rows.size());
  int c = static_cast<int>(rows.at(0).size());
  Matrix m(r, c);
  for (int i = 0; i < r; ++i) {
    const json& row = rows.at(i);
    if (!row.is_array() || static_cast<int>(row.size()) != c)
      throw ValidationError(where + ": ragged matrix");
    for (int j = 0; j < c; ++j) m(i, j) = row.at(j).get<double>();
  }
  return m;
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

TransformSpec spec_from_json(const json& obj, const std::string& where);

json spec_to_json(const TransformSpec& spec) {
  json obj;
  std::visit(
      [&](const auto& t) {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, FeatureTransform>) {
          obj["kind"] = "feature";
          obj["delta"] = matrix_to_json(t.delta_features);
        } else if constexpr (std::is_same_v<T, LinkTransform>) {
          obj["kind"] = "link";
          json adds = json::array(), removes = json::array();
          const Matrix& d = t.delta_adjacency;
          for (int u = 0; u < d.rows(); ++u)
            for (int v = u + 1; v < d.cols(); ++v) {
              if (d(u, v) == 1.0) adds.push_back(json::array({u, v}));
              if (d(u, v) == -1.0) removes.push_back(json::array({u, v}));
            }
          obj["n"] = d.rows();
          obj["add_edges"] = std::move(adds);
          obj["remove_edges"] = std::move(removes);
        } else if constexpr (std::is_same_v<T, IsolatedComponentTransform>) {
          obj["kind"] = "isolated_component";
          json edits = json::array();
          for (const auto& edit : t.edits) {
            json e;
            if (const auto* a = std::get_if<AddComponent>(&edit)) {
              e["op"] = "add";
              e["component"] = graph_to_json(a->component, nullptr);
            } else {
              e["op"] = "remove";
              e["nodes"] = std::get<RemoveComponent>(edit).nodes;
            }
            edits.push_back(std::move(e));
          }
          obj["edits"] = std::move(edits);
        } else {
          obj["kind"] = "composite";
          json steps = json::array();
          for (const TransformSpec& s : t.steps) steps.push_back(spec_to_json(s));
          obj["steps"] = std::move(steps);
        }
      },
      spec.op);
  return obj;
}

TransformSpec spec_from_json(const json& obj, const std::string& where) {
  if (!obj.is_object() || !obj.contains("kind"))
    throw ValidationError(where + ": transform spec needs a \"kind\" tag");
  std::string kind = obj.at("kind").get<std::string>();
  if (kind == "feature") {
    reject_unknown_keys(obj, {"kind", "delta"}, where);
    return TransformSpec{FeatureTransform{matrix_from_json(obj.at("delta"), where)}};
  }
  if (kind == "link") {
    reject_unknown_keys(obj, {"kind", "n", "add_edges", "remove_edges"}, where);
    int n = obj.at("n").get<int>();
    if (n < 1) throw ValidationError(where + ": link transform needs n >= 1");
    Matrix d(n, n);
    auto apply_edges = [&](const char* key, double val) {
      if (!obj.contains(key)) return;
      for (const json& e : obj.at(key)) {
        int u = e.at(0).get<int>(), v = e.at(1).get<int>();
        if (u < 0 || v < 0 || u >= n || v >= n || u == v)
          throw ValidationError(where + ": bad edge in link transform");
        d(u, v) = d(v, u) = val;
      }
    };
    apply_edges("add_edges", 1.0);
    apply_edges("remove_edges", -1.0);
    return TransformSpec{LinkTransform{std::move(d)}};
  }
  if (kind == "isolated_component") {
    reject_unknown_keys(obj, {"kind", "edits"}, where);
    IsolatedComponentTransform t;
    for (const json& e : obj.at("edits")) {
      std::string op = e.at("op").get<std::string>();
      if (op == "add")
        t.edits.push_back(AddComponent{graph_from_json(e.at("component"), where, nullptr)});
      else if (op == "remove")
        t.edits.push_back(RemoveComponent{e.at("nodes").get<std::vector<int>>()});
      else
        throw ValidationError(where + ": edit op must be add|remove");
    }
    return TransformSpec{std::move(t)};
  }
  if (kind == "composite") {
    reject_unknown_keys(obj, {"kind", "steps"}, where);
    CompositeTransform t;
    for (const json& s : obj.at("steps")) t.steps.push_back(spec_from_json(s, where));
    return TransformSpec{std::move(t)};
  }
  throw ValidationError(where + ": unknown transform kind \"" + kind + "\"");
}

}  // namespace

TransformSpec parse_transform_spec_json(const std::string& json_text) {
  return spec_from_json(parse_json_text(json_text, "transform spec"), "transform spec");
}

TransformSpec load_transform_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open transform spec file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return spec_from_json(parse_json_text(buf.str(), path), path);
}

std::string transform_spec_to_json(const TransformSpec& spec) { return spec_to_json(spec).dump(2); }

}  // namespace gpf
