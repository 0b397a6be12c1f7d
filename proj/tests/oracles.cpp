#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <set>

namespace oracle {

namespace {

void sign_convention(Eigen::MatrixXd& v) {
  for (int c = 0; c < v.cols(); ++c) {
    int arg = 0;
    double best = -1.0;
    for (int r = 0; r < v.rows(); ++r) {
      if (std::abs(v(r, c)) > best) {
        best = std::abs(v(r, c));
        arg = r;
      }
    }
    if (v(arg, c) < 0.0) v.col(c) = -v.col(c);
  }
}

}  // namespace

DensePca dense_pca(const Eigen::MatrixXd& x) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  DensePca out;
  out.variances = es.eigenvalues().reverse();
  out.loadings = es.eigenvectors().rowwise().reverse();
  out.total_variance = cov.trace();
  sign_convention(out.loadings);
  return out;
}

double max_principal_angle(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a.transpose() * b);
  const auto& sv = svd.singularValues();
  double min_sigma = 1.0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) min_sigma = std::min(min_sigma, sv[i]);
  min_sigma = std::clamp(min_sigma, -1.0, 1.0);
  return std::acos(min_sigma);
}

namespace {

// mutual reachability matrix with the same core-distance definition as the
// library (distance to the min_samples-th nearest other point), but computed
// with a full sort
std::vector<std::vector<double>> mutual_reachability(const stance::DistanceMatrix& d, int min_samples) {
  const int n = d.n;
  int ms = min_samples > 0 ? min_samples : 1;
  if (ms > n - 1) ms = n - 1;
  std::vector<double> core(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::vector<double> row;
    for (int j = 0; j < n; ++j)
      if (j != i) row.push_back(d.at(i, j));
    std::sort(row.begin(), row.end());
    core[static_cast<std::size_t>(i)] = row[static_cast<std::size_t>(ms - 1)];
  }
  std::vector<std::vector<double>> mr(static_cast<std::size_t>(n), std::vector<double>(n, 0.0));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j)
        mr[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
            std::max({core[static_cast<std::size_t>(i)], core[static_cast<std::size_t>(j)], d.at(i, j)});
  return mr;
}

struct Dendro {
  struct Node {
    int left;
    int right;
    double dist;
    int size;
  };
  std::vector<Node> nodes;  // ids n .. 2n-2
};

// scan-based single linkage: repeatedly merge the two components joined by
// the globally smallest (w, a, b) cross pair — no MST involved
Dendro naive_single_linkage(const std::vector<std::vector<double>>& mr) {
  const int n = static_cast<int>(mr.size());
  std::vector<std::vector<int>> comps(static_cast<std::size_t>(n));
  std::vector<int> comp_node(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    comps[static_cast<std::size_t>(i)] = {i};
    comp_node[static_cast<std::size_t>(i)] = i;
  }
  Dendro out;
  int next = n;
  while (comps.size() > 1) {
    double best_w = std::numeric_limits<double>::infinity();
    int best_a = -1, best_b = -1;
    for (std::size_t ci = 0; ci < comps.size(); ++ci) {
      for (std::size_t cj = ci + 1; cj < comps.size(); ++cj) {
        for (int a : comps[ci]) {
          for (int b : comps[cj]) {
            const int lo = std::min(a, b), hi = std::max(a, b);
            const double w = mr[static_cast<std::size_t>(lo)][static_cast<std::size_t>(hi)];
            if (w < best_w || (w == best_w && (lo < best_a || (lo == best_a && hi < best_b)))) {
              best_w = w;
              best_a = lo;
              best_b = hi;
            }
          }
        }
      }
    }
    // left child is the component holding the smaller endpoint
    std::size_t li = 0, ri = 0;
    for (std::size_t ci = 0; ci < comps.size(); ++ci) {
      if (std::find(comps[ci].begin(), comps[ci].end(), best_a) != comps[ci].end()) li = ci;
      if (std::find(comps[ci].begin(), comps[ci].end(), best_b) != comps[ci].end()) ri = ci;
    }
    out.nodes.push_back(Dendro::Node{comp_node[li], comp_node[ri], best_w,
                                     static_cast<int>(comps[li].size() + comps[ri].size())});
    comps[li].insert(comps[li].end(), comps[ri].begin(), comps[ri].end());
    comp_node[li] = next++;
    comps.erase(comps.begin() + static_cast<std::ptrdiff_t>(ri));
    comp_node.erase(comp_node.begin() + static_cast<std::ptrdiff_t>(ri));
  }
  return out;
}

}  // namespace

HdbscanOracle hdbscan_reference(const stance::DistanceMatrix& d, int min_cluster_size, int min_samples) {
  const int n = d.n;
  HdbscanOracle out;
  out.labels.assign(static_cast<std::size_t>(n), -1);
  if (n < min_cluster_size) return out;

  const auto mr = mutual_reachability(d, min_samples > 0 ? min_samples : min_cluster_size);
  const auto dendro = naive_single_linkage(mr);

  auto leaves_of = [&](int node) {
    std::vector<int> pts;
    std::function<void(int)> rec = [&](int cur) {
      if (cur < n) {
        pts.push_back(cur);
        return;
      }
      rec(dendro.nodes[static_cast<std::size_t>(cur - n)].left);
      rec(dendro.nodes[static_cast<std::size_t>(cur - n)].right);
    };
    rec(node);
    return pts;
  };
  auto size_of = [&](int node) {
    return node < n ? 1 : dendro.nodes[static_cast<std::size_t>(node - n)].size;
  };

  int next_cluster = n;
  std::map<int, std::vector<int>> children_of;  // condensed cluster tree
  std::map<int, double> birth;
  const int root_cluster = next_cluster++;
  birth[root_cluster] = 0.0;

  std::function<void(int, int)> condense = [&](int node, int cluster) {
    if (node < n) return;
    const auto& dn = dendro.nodes[static_cast<std::size_t>(node - n)];
    const double lam = dn.dist > 0.0 ? 1.0 / dn.dist : std::numeric_limits<double>::max();
    const int ls = size_of(dn.left), rs = size_of(dn.right);
    if (ls >= min_cluster_size && rs >= min_cluster_size) {
      const int lc = next_cluster++;
      out.condensed.push_back(stance::CondensedNode{cluster, lc, lam, ls});
      birth[lc] = lam;
      children_of[cluster].push_back(lc);
      const int rc = next_cluster++;
      out.condensed.push_back(stance::CondensedNode{cluster, rc, lam, rs});
      birth[rc] = lam;
      children_of[cluster].push_back(rc);
      condense(dn.left, lc);
      condense(dn.right, rc);
    } else if (ls < min_cluster_size && rs < min_cluster_size) {
      for (int p : leaves_of(dn.left)) out.condensed.push_back(stance::CondensedNode{cluster, p, lam, 1});
      for (int p : leaves_of(dn.right)) out.condensed.push_back(stance::CondensedNode{cluster, p, lam, 1});
    } else if (ls < min_cluster_size) {
      for (int p : leaves_of(dn.left)) out.condensed.push_back(stance::CondensedNode{cluster, p, lam, 1});
      condense(dn.right, cluster);
    } else {
      for (int p : leaves_of(dn.right)) out.condensed.push_back(stance::CondensedNode{cluster, p, lam, 1});
      condense(dn.left, cluster);
    }
  };
  condense(n + static_cast<int>(dendro.nodes.size()) - 1, root_cluster);

  // canonical stability: per parent, terms sorted by (lambda, size)
  std::map<int, std::vector<std::pair<double, int>>> terms;
  for (const auto& r : out.condensed) terms[r.parent].emplace_back(r.lambda, r.size);
  std::map<int, double> stability;
  for (auto& [cluster, t] : terms) {
    std::sort(t.begin(), t.end());
    double s = 0.0;
    for (const auto& [lam, size] : t) s += (lam - birth[cluster]) * static_cast<double>(size);
    stability[cluster] = s;
  }
  for (int c = root_cluster; c < next_cluster; ++c)
    if (!stability.count(c)) stability[c] = 0.0;

  // exact excess-of-mass optimum by tree DP; ties prefer the parent cluster,
  // and the root competes like any other cluster
  std::map<int, double> best;
  std::function<double(int)> best_of = [&](int c) -> double {
    double sum = 0.0;
    for (int ch : children_of[c]) sum += best_of(ch);
    best[c] = children_of[c].empty() ? stability[c] : std::max(stability[c], sum);
    return best[c];
  };
  best_of(root_cluster);

  std::set<int> selected;
  std::function<void(int)> pick = [&](int c) {
    double sum = 0.0;
    for (int ch : children_of[c]) sum += best[ch];
    if (children_of[c].empty() || stability[c] >= sum) {
      selected.insert(c);
      return;
    }
    for (int ch : children_of[c]) pick(ch);
  };
  pick(root_cluster);

  for (int c : selected) out.selected_stabilities.push_back(stability[c]);
  std::sort(out.selected_stabilities.begin(), out.selected_stabilities.end());

  // labels: point belongs to the selected ancestor-or-self of the cluster it
  // fell out of
  std::map<int, int> parent_of;
  for (const auto& r : out.condensed)
    if (r.child >= n) parent_of[r.child] = r.parent;
  std::map<int, int> label_of;
  int next_label = 0;
  for (int c : selected) label_of[c] = next_label++;
  for (const auto& r : out.condensed) {
    if (r.child >= n) continue;
    int c = r.parent;
    int label = -1;
    while (true) {
      if (selected.count(c)) {
        label = label_of[c];
        break;
      }
      auto it = parent_of.find(c);
      if (it == parent_of.end()) break;
      c = it->second;
    }
    out.labels[static_cast<std::size_t>(r.child)] = label;
  }
  return out;
}

double mst_total_weight_reference(const stance::DistanceMatrix& d, int min_samples) {
  const int n = d.n;
  const auto mr = mutual_reachability(d, min_samples);
  struct E {
    int a, b;
    double w;
  };
  std::vector<E> edges;
  edges.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b)
      edges.push_back(E{a, b, mr[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)]});
  std::sort(edges.begin(), edges.end(), [](const E& x, const E& y) {
    if (x.w != y.w) return x.w < y.w;
    if (x.a != y.a) return x.a < y.a;
    return x.b < y.b;
  });
  std::vector<int> parent(static_cast<std::size_t>(n));
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  };
  double total = 0.0;
  int used = 0;
  for (const auto& e : edges) {
    const int ra = find(e.a), rb = find(e.b);
    if (ra == rb) continue;
    parent[static_cast<std::size_t>(ra)] = rb;
    total += e.w;
    if (++used == n - 1) break;
  }
  return total;
}

double modularity_reference(const stance::WeightedGraph& g, const std::vector<int>& community,
                            double resolution) {
  const int n = g.n();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (const auto& e : g.edges) {
    a(e.a, e.b) += e.w;
    a(e.b, e.a) += e.w;
  }
  for (int v = 0; v < n; ++v)
    if (!g.self_mass.empty()) a(v, v) = 2.0 * g.self_mass[static_cast<std::size_t>(v)];
  const double two_m = a.sum();
  if (two_m <= 0.0) return 0.0;
  Eigen::VectorXd k = a.rowwise().sum();
  double q = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (community[static_cast<std::size_t>(i)] == community[static_cast<std::size_t>(j)])
        q += a(i, j) - resolution * k[i] * k[j] / two_m;
  return q / two_m;
}

double best_modularity_exhaustive(const stance::WeightedGraph& g, double resolution) {
  const int n = g.n();
  std::vector<int> rgs(static_cast<std::size_t>(n), 0);
  double best = -std::numeric_limits<double>::infinity();
  while (true) {
    best = std::max(best, modularity_reference(g, rgs, resolution));
    // next restricted growth string
    int i = n - 1;
    for (; i > 0; --i) {
      int max_prefix = 0;
      for (int j = 0; j < i; ++j) max_prefix = std::max(max_prefix, rgs[static_cast<std::size_t>(j)]);
      if (rgs[static_cast<std::size_t>(i)] <= max_prefix) {
        ++rgs[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < n; ++j) rgs[static_cast<std::size_t>(j)] = 0;
        break;
      }
    }
    if (i == 0) break;
  }
  return best;
}

bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) return false;
  std::map<int, int> ab, ba;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool na = a[i] < 0, nb = b[i] < 0;
    if (na != nb) return false;
    if (na) continue;
    auto [ita, fresh_a] = ab.emplace(a[i], b[i]);
    if (!fresh_a && ita->second != b[i]) return false;
    auto [itb, fresh_b] = ba.emplace(b[i], a[i]);
    if (!fresh_b && itb->second != a[i]) return false;
  }
  return true;
}

}  // namespace oracle
