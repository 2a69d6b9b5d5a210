#include <algorithm>
#include <array>
#include <numeric>
#include <random>

#include "core/graph.hpp"

namespace gpf {

namespace {

bool has_triangle(const Matrix& a) {
  int n = a.rows();
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      if (a(i, j) != 1.0) continue;
      for (int k = j + 1; k < n; ++k)
        if (a(i, k) == 1.0 && a(j, k) == 1.0) return true;
    }
  return false;
}

// Removes one edge of some triangle. Returns false when triangle-free.
bool break_one_triangle(Matrix& a, std::mt19937_64& rng) {
  int n = a.rows();
  std::vector<std::array<int, 3>> tris;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      if (a(i, j) != 1.0) continue;
      for (int k = j + 1; k < n; ++k)
        if (a(i, k) == 1.0 && a(j, k) == 1.0) tris.push_back({i, j, k});
    }
  if (tris.empty()) return false;
  auto t = tris[rng() % tris.size()];
  int pick = static_cast<int>(rng() % 3);
  int u = t[pick], v = t[(pick + 1) % 3];
  a(u, v) = a(v, u) = 0.0;
  return true;
}

// Node features: degree signal in column 0, noise elsewhere, then one
// smoothing pass so that adjacent nodes end up with correlated features
// (gives the edge-prediction pretext task something to learn).
Matrix make_features(const Matrix& adj, int feature_dim, std::mt19937_64& rng) {
  int n = adj.rows();
  std::normal_distribution<double> noise(0.0, 0.5);
  Matrix x(n, feature_dim);
  for (int i = 0; i < n; ++i) {
    double deg = 0.0;
    for (int j = 0; j < n; ++j) deg += adj(i, j);
    x(i, 0) = deg / std::max(1, n - 1);
    for (int f = 1; f < feature_dim; ++f) x(i, f) = noise(rng);
  }
  Matrix smoothed = x;
  for (int i = 0; i < n; ++i) {
    double deg = 0.0;
    for (int j = 0; j < n; ++j) deg += adj(i, j);
    if (deg == 0.0) continue;
    for (int f = 0; f < feature_dim; ++f) {
      double acc = 0.0;
      for (int j = 0; j < n; ++j)
        if (adj(i, j) == 1.0) acc += x(j, f);
      smoothed(i, f) += 0.5 * acc / deg;
    }
  }
  return smoothed;
}

Matrix random_adjacency(int n, double p, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (u(rng) < p) a(i, j) = a(j, i) = 1.0;
  return a;
}

Graph triangle_motif_graph(int target_label, int feature_dim, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> size_dist(8, 16);
  std::uniform_real_distribution<double> dens(0.12, 0.30);
  int n = size_dist(rng);
  Matrix a = random_adjacency(n, dens(rng), rng);
  if (target_label == 1) {
    if (!has_triangle(a)) {
      std::vector<int> idx(n);
      std::iota(idx.begin(), idx.end(), 0);
      std::shuffle(idx.begin(), idx.end(), rng);
      a(idx[0], idx[1]) = a(idx[1], idx[0]) = 1.0;
      a(idx[0], idx[2]) = a(idx[2], idx[0]) = 1.0;
      a(idx[1], idx[2]) = a(idx[2], idx[1]) = 1.0;
    }
  } else {
    while (break_one_triangle(a, rng)) {
    }
  }
  int label = has_triangle(a) ? 1 : 0;
  Matrix x = make_features(a, feature_dim, rng);
  return make_graph(std::move(a), std::move(x), label);
}

Graph community_pair_graph(int target_label, int feature_dim, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> half_dist(5, 8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int n1 = half_dist(rng), n2 = half_dist(rng);
  int n = n1 + n2;
  int threshold = std::max(1, n / 4);
  Matrix a(n, n);
  auto connect_within = [&](int lo, int hi) {
    for (int i = lo; i < hi; ++i)
      for (int j = i + 1; j < hi; ++j)
        if (u(rng) < 0.5) a(i, j) = a(j, i) = 1.0;
  };
  connect_within(0, n1);
  connect_within(n1, n);
  // Label 1 iff the two communities share more than `threshold` inter-edges.
  int inter = target_label == 1
                  ? threshold + 1 + static_cast<int>(rng() % static_cast<unsigned>(threshold))
                  : static_cast<int>(rng() % static_cast<unsigned>(threshold));
  std::vector<std::pair<int, int>> cross;
  for (int i = 0; i < n1; ++i)
    for (int j = n1; j < n; ++j) cross.emplace_back(i, j);
  std::shuffle(cross.begin(), cross.end(), rng);
  inter = std::min<int>(inter, static_cast<int>(cross.size()));
  for (int k = 0; k < inter; ++k) {
    auto [i, j] = cross[k];
    a(i, j) = a(j, i) = 1.0;
  }
  int count = 0;
  for (int i = 0; i < n1; ++i)
    for (int j = n1; j < n; ++j)
      if (a(i, j) == 1.0) ++count;
  int label = count > threshold ? 1 : 0;
  Matrix x = make_features(a, feature_dim, rng);
  return make_graph(std::move(a), std::move(x), label);
}

}  // namespace

ClassRule parse_class_rule(const std::string& name) {
  if (name == "triangle-motif") return ClassRule::triangle_motif;
  if (name == "community-pair") return ClassRule::community_pair;
  throw ValidationError("unknown class rule \"" + name + "\" (triangle-motif|community-pair)");
}

Dataset generate_synthetic_dataset(std::uint64_t seed, int n_graphs, ClassRule rule,
                                   int feature_dim) {
  if (n_graphs < 4) throw ValidationError("need at least 4 graphs");
  if (feature_dim < 1) throw ValidationError("feature dimension must be >= 1");
  std::mt19937_64 rng(seed);
  Dataset ds;
  ds.feature_dim = feature_dim;
  for (int i = 0; i < n_graphs; ++i) {
    int target = i % 2;
    Graph g = rule == ClassRule::triangle_motif ? triangle_motif_graph(target, feature_dim, rng)
                                                : community_pair_graph(target, feature_dim, rng);
    g.id = "g" + std::to_string(i);
    // 70/15/15 split, interleaved so both labels land in every split.
    Split s = (i % 20 < 14) ? Split::train : (i % 20 < 17) ? Split::valid : Split::test;
    ds.split[g.id] = s;
    ds.graphs.push_back(std::move(g));
  }
  return ds;
}

}  // namespace gpf
