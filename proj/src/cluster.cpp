#include "stance/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>

#include "stance/error.hpp"
#include "stance/log.hpp"
#include "stance/parallel.hpp"
#include "stance/util.hpp"

namespace stance {

ScoreMatrix percentile_filter(const ScoreMatrix& scores, double percentile) {
  if (percentile < 0.0 || percentile >= 100.0) throw ConfigError("percentile must be in [0, 100)");
  const auto n = scores.scores.rows();
  if (n == 0) throw DataError("percentile filter on an empty score matrix");

  Eigen::VectorXd norms = scores.scores.rowwise().norm();
  double threshold = -std::numeric_limits<double>::infinity();
  // nearest-rank: the ceil(p/100 * n)-th smallest norm; rank 0 keeps all
  const auto rank = static_cast<Eigen::Index>(std::ceil(percentile / 100.0 * static_cast<double>(n) - 1e-9));
  if (rank > 0) {
    std::vector<double> sorted(norms.data(), norms.data() + n);
    std::nth_element(sorted.begin(), sorted.begin() + (rank - 1), sorted.end());
    threshold = sorted[static_cast<std::size_t>(rank - 1)];
  }

  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < n; ++i)
    if (norms[i] >= threshold) keep.push_back(i);

  ScoreMatrix out;
  out.provenance = scores.provenance;
  out.pc_labels = scores.pc_labels;
  out.user_ids.reserve(keep.size());
  out.scores.resize(static_cast<Eigen::Index>(keep.size()), scores.scores.cols());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    out.user_ids.push_back(scores.user_ids[static_cast<std::size_t>(keep[i])]);
    out.scores.row(static_cast<Eigen::Index>(i)) = scores.scores.row(keep[i]);
  }
  return out;
}

DistanceMatrix cosine_distances(const ScoreMatrix& scores, bool float32, int threads) {
  const int n = static_cast<int>(scores.scores.rows());
  DistanceMatrix d;
  d.ids = scores.user_ids;
  d.n = n;
  d.float32 = float32;
  if (float32)
    d.d32.assign(static_cast<std::size_t>(n) * n, 0.0f);
  else
    d.d64.assign(static_cast<std::size_t>(n) * n, 0.0);

  Eigen::VectorXd norms = scores.scores.rowwise().norm();
  for (int i = 0; i < n; ++i) {
    if (norms[i] <= 0.0)
      throw NumericError("cosine distance undefined for zero-norm user '" + scores.user_ids[i] + "'");
  }

  const Eigen::MatrixXd& x = scores.scores;
  parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      for (std::size_t j = 0; j < static_cast<std::size_t>(n); ++j) {
        double v = 0.0;
        if (i != j) {
          const double c = x.row(static_cast<Eigen::Index>(i)).dot(x.row(static_cast<Eigen::Index>(j))) /
                           (norms[static_cast<Eigen::Index>(i)] * norms[static_cast<Eigen::Index>(j)]);
          v = 1.0 - c;
          if (v < 0.0) v = 0.0;
          if (v > 2.0) v = 2.0;
        }
        if (float32)
          d.d32[i * n + j] = static_cast<float>(v);
        else
          d.d64[i * n + j] = v;
      }
    }
  });
  return d;
}

namespace {

struct MstEdge {
  int a;
  int b;
  double w;
};

// Exact Prim on the dense mutual-reachability matrix. Equal-weight candidates
// are ordered by (min endpoint, max endpoint).
std::vector<MstEdge> mutual_reachability_mst(const DistanceMatrix& d, const std::vector<double>& core) {
  const int n = d.n;
  auto mr = [&](int i, int j) { return std::max({core[i], core[j], d.at(i, j)}); };
  auto edge_key = [](int u, int v) { return std::pair<int, int>(std::min(u, v), std::max(u, v)); };

  std::vector<bool> in_tree(n, false);
  std::vector<double> best_w(n, std::numeric_limits<double>::infinity());
  std::vector<int> best_from(n, 0);
  std::vector<MstEdge> mst;
  mst.reserve(n - 1);

  in_tree[0] = true;
  for (int v = 1; v < n; ++v) best_w[v] = mr(0, v);

  for (int added = 1; added < n; ++added) {
    int pick = -1;
    for (int v = 0; v < n; ++v) {
      if (in_tree[v]) continue;
      if (pick < 0 || best_w[v] < best_w[pick] ||
          (best_w[v] == best_w[pick] && edge_key(best_from[v], v) < edge_key(best_from[pick], pick)))
        pick = v;
    }
    in_tree[pick] = true;
    mst.push_back(MstEdge{std::min(best_from[pick], pick), std::max(best_from[pick], pick), best_w[pick]});
    for (int v = 0; v < n; ++v) {
      if (in_tree[v]) continue;
      const double w = mr(pick, v);
      if (w < best_w[v] || (w == best_w[v] && edge_key(pick, v) < edge_key(best_from[v], v))) {
        best_w[v] = w;
        best_from[v] = pick;
      }
    }
  }
  std::sort(mst.begin(), mst.end(), [](const MstEdge& x, const MstEdge& y) {
    if (x.w != y.w) return x.w < y.w;
    if (x.a != y.a) return x.a < y.a;
    return x.b < y.b;
  });
  return mst;
}

struct DendroNode {
  int left;
  int right;
  double dist;
  int size;
};

// single-linkage hierarchy from sorted MST edges; node ids n..2n-2
std::vector<DendroNode> single_linkage(const std::vector<MstEdge>& mst, int n) {
  std::vector<int> parent(static_cast<std::size_t>(2 * n - 1));
  std::iota(parent.begin(), parent.end(), 0);
  std::vector<int> node_of(parent.size());
  std::iota(node_of.begin(), node_of.end(), 0);
  std::vector<int> size(parent.size(), 1);

  std::function<int(int)> find = [&](int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };

  std::vector<DendroNode> dendro;
  dendro.reserve(static_cast<std::size_t>(n - 1));
  int next = n;
  for (const auto& e : mst) {
    const int ra = find(e.a), rb = find(e.b);
    const int na = node_of[ra], nb = node_of[rb];
    dendro.push_back(DendroNode{na, nb, e.w, size[ra] + size[rb]});
    parent[ra] = rb;
    node_of[rb] = next;
    size[rb] = size[ra] + size[rb];
    ++next;
  }
  return dendro;
}

double lambda_of(double dist) {
  return dist > 0.0 ? 1.0 / dist : std::numeric_limits<double>::max();
}

// Condensed tree: clusters get ids n, n+1, ...; points keep their index.
std::vector<CondensedNode> condense(const std::vector<DendroNode>& dendro, int n, int min_cluster_size) {
  std::vector<CondensedNode> rows;
  if (dendro.empty()) return rows;
  const int root = n + static_cast<int>(dendro.size()) - 1;

  auto node_size = [&](int node) { return node < n ? 1 : dendro[static_cast<std::size_t>(node - n)].size; };

  // leaves of a dendrogram subtree, in deterministic DFS order
  auto collect_points = [&](int node, std::vector<int>& out) {
    std::vector<int> stack{node};
    while (!stack.empty()) {
      int cur = stack.back();
      stack.pop_back();
      if (cur < n) {
        out.push_back(cur);
        continue;
      }
      const auto& dn = dendro[static_cast<std::size_t>(cur - n)];
      stack.push_back(dn.right);
      stack.push_back(dn.left);
    }
  };

  int next_cluster = n;
  struct Item {
    int node;          // dendrogram node to process
    int cluster;       // condensed cluster it belongs to
  };
  std::vector<Item> stack;
  const int root_cluster = next_cluster++;
  stack.push_back(Item{root, root_cluster});

  while (!stack.empty()) {
    const auto [node, cluster] = stack.back();
    stack.pop_back();
    if (node < n) continue;  // singleton clusters cannot split further
    const auto& dn = dendro[static_cast<std::size_t>(node - n)];
    const double lam = lambda_of(dn.dist);
    const int ls = node_size(dn.left), rs = node_size(dn.right);

    if (ls >= min_cluster_size && rs >= min_cluster_size) {
      const int lc = next_cluster++;
      rows.push_back(CondensedNode{cluster, lc, lam, ls});
      const int rc = next_cluster++;
      rows.push_back(CondensedNode{cluster, rc, lam, rs});
      // process left before right for deterministic cluster numbering
      stack.push_back(Item{dn.right, rc});
      stack.push_back(Item{dn.left, lc});
    } else if (ls < min_cluster_size && rs < min_cluster_size) {
      std::vector<int> pts;
      collect_points(dn.left, pts);
      collect_points(dn.right, pts);
      for (int p : pts) rows.push_back(CondensedNode{cluster, p, lam, 1});
    } else if (ls < min_cluster_size) {
      std::vector<int> pts;
      collect_points(dn.left, pts);
      for (int p : pts) rows.push_back(CondensedNode{cluster, p, lam, 1});
      stack.push_back(Item{dn.right, cluster});
    } else {
      std::vector<int> pts;
      collect_points(dn.right, pts);
      for (int p : pts) rows.push_back(CondensedNode{cluster, p, lam, 1});
      stack.push_back(Item{dn.left, cluster});
    }
  }
  return rows;
}

}  // namespace

namespace {

std::vector<double> core_distances(const DistanceMatrix& d, int ms) {
  const int n = d.n;
  std::vector<double> core(static_cast<std::size_t>(n));
  std::vector<double> row;
  for (int i = 0; i < n; ++i) {
    row.clear();
    for (int j = 0; j < n; ++j)
      if (j != i) row.push_back(d.at(i, j));
    std::nth_element(row.begin(), row.begin() + (ms - 1), row.end());
    core[static_cast<std::size_t>(i)] = row[static_cast<std::size_t>(ms - 1)];
  }
  return core;
}

}  // namespace

std::vector<ReachabilityEdge> reachability_mst(const DistanceMatrix& d, int min_samples) {
  int ms = min_samples > 0 ? min_samples : 1;
  if (ms > d.n - 1) ms = d.n - 1;
  const auto mst = mutual_reachability_mst(d, core_distances(d, ms));
  std::vector<ReachabilityEdge> out;
  out.reserve(mst.size());
  for (const auto& e : mst) out.push_back(ReachabilityEdge{e.a, e.b, e.w});
  return out;
}

ClusterAssignment hdbscan(const DistanceMatrix& d, int min_cluster_size, int min_samples,
                          ClusterSelection selection) {
  if (min_cluster_size < 2) throw ConfigError("min_cluster_size must be at least 2");
  const int n = d.n;

  ClusterAssignment out;
  out.user_ids = d.ids;
  out.labels.assign(static_cast<std::size_t>(n), kNoise);
  if (n < min_cluster_size) {
    log_event("cluster", "all_noise", {{"reason", "fewer points than min_cluster_size"}, {"n", n}});
    return out;
  }

  int ms = min_samples > 0 ? min_samples : min_cluster_size;
  if (ms > n - 1) ms = n - 1;

  // core distance: distance to the ms-th nearest other point
  const auto core = core_distances(d, ms);
  const auto mst = mutual_reachability_mst(d, core);
  const auto dendro = single_linkage(mst, n);
  out.condensed = condense(dendro, n, min_cluster_size);

  // stabilities: birth lambda per cluster, then sum (lambda - birth) * size
  const int root_cluster = n;
  int max_cluster = root_cluster;
  for (const auto& r : out.condensed) max_cluster = std::max(max_cluster, std::max(r.parent, r.child));

  std::vector<double> birth(static_cast<std::size_t>(max_cluster + 1), 0.0);
  std::vector<double> stability(static_cast<std::size_t>(max_cluster + 1), 0.0);
  std::vector<std::vector<int>> cluster_children(static_cast<std::size_t>(max_cluster + 1));
  for (const auto& r : out.condensed)
    if (r.child > root_cluster) birth[static_cast<std::size_t>(r.child)] = r.lambda;
  {
    // canonical term order (lambda, size) keeps stabilities reproducible no
    // matter how the tree walk emitted the rows
    std::vector<std::vector<std::pair<double, int>>> terms(static_cast<std::size_t>(max_cluster + 1));
    for (const auto& r : out.condensed)
      terms[static_cast<std::size_t>(r.parent)].emplace_back(r.lambda, r.size);
    for (int c = root_cluster; c <= max_cluster; ++c) {
      auto& t = terms[static_cast<std::size_t>(c)];
      std::sort(t.begin(), t.end());
      double s = 0.0;
      for (const auto& [lam, size] : t)
        s += (lam - birth[static_cast<std::size_t>(c)]) * static_cast<double>(size);
      stability[static_cast<std::size_t>(c)] = s;
    }
  }
  for (const auto& r : out.condensed)
    if (r.child > root_cluster) cluster_children[static_cast<std::size_t>(r.parent)].push_back(r.child);

  // excess-of-mass: reverse topological sweep. The root competes like any
  // other cluster, so homogeneous data can resolve to a single cluster
  // instead of inventing splits.
  std::vector<bool> selected(static_cast<std::size_t>(max_cluster + 1), false);
  for (int c = root_cluster; c <= max_cluster; ++c) selected[static_cast<std::size_t>(c)] = true;

  if (selection == ClusterSelection::ExcessOfMass) {
    for (int c = max_cluster; c >= root_cluster; --c) {
      double subtree = 0.0;
      for (int ch : cluster_children[static_cast<std::size_t>(c)]) subtree += stability[static_cast<std::size_t>(ch)];
      if (!cluster_children[static_cast<std::size_t>(c)].empty() && subtree > stability[static_cast<std::size_t>(c)]) {
        selected[static_cast<std::size_t>(c)] = false;
        stability[static_cast<std::size_t>(c)] = subtree;
      } else if (selected[static_cast<std::size_t>(c)]) {
        // deselect the whole subtree below a winning cluster
        std::vector<int> stack(cluster_children[static_cast<std::size_t>(c)]);
        while (!stack.empty()) {
          int x = stack.back();
          stack.pop_back();
          selected[static_cast<std::size_t>(x)] = false;
          for (int ch : cluster_children[static_cast<std::size_t>(x)]) stack.push_back(ch);
        }
      }
    }
  } else {
    // leaf extraction: keep only childless non-root clusters
    selected[static_cast<std::size_t>(root_cluster)] = false;
    for (int c = root_cluster + 1; c <= max_cluster; ++c)
      selected[static_cast<std::size_t>(c)] = cluster_children[static_cast<std::size_t>(c)].empty();
  }

  // label points by the nearest selected ancestor-or-self of the cluster they
  // fell out of; none → noise
  std::vector<int> parent_cluster(static_cast<std::size_t>(max_cluster + 1), -1);
  for (const auto& r : out.condensed)
    if (r.child > root_cluster) parent_cluster[static_cast<std::size_t>(r.child)] = r.parent;

  std::vector<int> cluster_label(static_cast<std::size_t>(max_cluster + 1), kNoise);
  {
    int next = 0;
    for (int c = root_cluster; c <= max_cluster; ++c)
      if (selected[static_cast<std::size_t>(c)]) cluster_label[static_cast<std::size_t>(c)] = next++;
    out.stabilities.assign(static_cast<std::size_t>(next), 0.0);
    out.sizes.assign(static_cast<std::size_t>(next), 0);
    for (int c = root_cluster; c <= max_cluster; ++c)
      if (selected[static_cast<std::size_t>(c)])
        out.stabilities[static_cast<std::size_t>(cluster_label[static_cast<std::size_t>(c)])] =
            stability[static_cast<std::size_t>(c)];
  }

  for (const auto& r : out.condensed) {
    if (r.child >= n) continue;  // cluster rows
    int c = r.parent;
    int label = kNoise;
    while (c >= root_cluster) {
      if (selected[static_cast<std::size_t>(c)]) {
        label = cluster_label[static_cast<std::size_t>(c)];
        break;
      }
      c = parent_cluster[static_cast<std::size_t>(c)];
    }
    out.labels[static_cast<std::size_t>(r.child)] = label;
    if (label >= 0) ++out.sizes[static_cast<std::size_t>(label)];
  }

  return out;
}

void save_assignments_csv(const ClusterAssignment& a, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write assignments file: " + path);
  out << "user_id,cluster,probability_placeholder\n";
  for (std::size_t i = 0; i < a.user_ids.size(); ++i) {
    out << a.user_ids[i] << ',';
    if (a.labels[i] == kNoise)
      out << "noise,0";
    else
      out << a.labels[i] << ",1";
    out << '\n';
  }
  if (!out) throw DataError("write failed: " + path);
}

ClusterAssignment load_assignments_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open assignments file: " + path);
  std::string line;
  if (!std::getline(in, line) || split(line, ',').size() != 3)
    throw DataError("bad assignments header: " + path);
  ClusterAssignment a;
  int max_label = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto parts = split(line, ',');
    if (parts.size() != 3) throw DataError("bad assignments row: " + path);
    a.user_ids.push_back(parts[0]);
    if (parts[1] == "noise") {
      a.labels.push_back(kNoise);
    } else {
      std::int64_t v = 0;
      if (!parse_i64(parts[1], v)) throw DataError("bad cluster id: " + path);
      a.labels.push_back(static_cast<int>(v));
      max_label = std::max(max_label, static_cast<int>(v));
    }
  }
  a.sizes.assign(static_cast<std::size_t>(max_label + 1), 0);
  a.stabilities.assign(static_cast<std::size_t>(max_label + 1), 0.0);
  for (int l : a.labels)
    if (l >= 0) ++a.sizes[static_cast<std::size_t>(l)];
  return a;
}

void save_condensed_tree_csv(const ClusterAssignment& a, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write condensed tree file: " + path);
  out << "parent,child,lambda,size\n";
  for (const auto& r : a.condensed)
    out << r.parent << ',' << r.child << ',' << format_double(r.lambda) << ',' << r.size << '\n';
  if (!out) throw DataError("write failed: " + path);
}

}  // namespace stance
