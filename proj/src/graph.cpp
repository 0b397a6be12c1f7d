#include "stance/graph.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <unordered_map>

#include "stance/error.hpp"
#include "stance/log.hpp"
#include "stance/parallel.hpp"
#include "stance/rng.hpp"
#include "stance/util.hpp"

namespace stance {

namespace {

// per-member sparse rows (col -> count) for the requested subset
struct MemberRows {
  std::vector<std::int32_t> member_row;                 // matrix row index per member
  std::vector<std::vector<std::pair<std::int32_t, std::int64_t>>> rows;
};

MemberRows collect_rows(const IncidenceMatrix& m, const std::vector<std::string>& members) {
  MemberRows out;
  out.member_row.reserve(members.size());
  for (const auto& id : members) {
    auto r = m.row_index(id);
    if (!r) throw DataError("co-retweet member '" + id + "' is not a matrix row");
    out.member_row.push_back(*r);
  }
  out.rows.resize(members.size());
  std::unordered_map<std::int32_t, std::size_t> member_of;
  member_of.reserve(members.size());
  for (std::size_t i = 0; i < members.size(); ++i) member_of[out.member_row[i]] = i;
  for (const auto& cell : m.cells()) {
    auto it = member_of.find(cell.row);
    if (it != member_of.end()) out.rows[it->second].emplace_back(cell.col, cell.count);
  }
  return out;
}

double pair_weight(const std::vector<std::pair<std::int32_t, std::int64_t>>& a,
                   const std::vector<std::pair<std::int32_t, std::int64_t>>& b, bool weighted) {
  double w = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i].first < b[j].first) {
      ++i;
    } else if (a[i].first > b[j].first) {
      ++j;
    } else {
      w += weighted ? static_cast<double>(std::min(a[i].second, b[j].second)) : 1.0;
      ++i;
      ++j;
    }
  }
  return w;
}

}  // namespace

WeightedGraph co_retweet_graph(const IncidenceMatrix& m, const std::vector<std::string>& members,
                               GraphLevel level, const ClusterAssignment* assignment, bool weighted,
                               int threads) {
  if (members.empty()) throw DataError("co-retweet graph needs a non-empty member set");
  if (level == GraphLevel::Cluster && assignment == nullptr)
    throw ConfigError("cluster-level co-retweet graph needs cluster assignments");

  const auto mr = collect_rows(m, members);
  const std::size_t nm = members.size();

  if (level == GraphLevel::User) {
    WeightedGraph g;
    g.nodes = members;
    g.self_mass.assign(nm, 0.0);
    g.node_cluster.assign(nm, -1);
    if (assignment) {
      std::unordered_map<std::string, int> label_of;
      for (std::size_t i = 0; i < assignment->user_ids.size(); ++i)
        label_of[assignment->user_ids[i]] = assignment->labels[i];
      for (std::size_t i = 0; i < nm; ++i) {
        auto it = label_of.find(members[i]);
        if (it != label_of.end()) g.node_cluster[i] = it->second;
      }
    }
    std::vector<std::vector<WeightedGraph::Edge>> partial(nm);
    parallel_for(nm, threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        for (std::size_t j = i + 1; j < nm; ++j) {
          const double w = pair_weight(mr.rows[i], mr.rows[j], weighted);
          if (w > 0.0)
            partial[i].push_back(WeightedGraph::Edge{static_cast<int>(i), static_cast<int>(j), w});
        }
      }
    });
    for (auto& p : partial) g.edges.insert(g.edges.end(), p.begin(), p.end());
    return g;
  }

  // cluster level
  std::unordered_map<std::string, int> label_of;
  for (std::size_t i = 0; i < assignment->user_ids.size(); ++i)
    label_of[assignment->user_ids[i]] = assignment->labels[i];

  int n_clusters = 0;
  std::vector<int> member_cluster(nm, kNoise);
  for (std::size_t i = 0; i < nm; ++i) {
    auto it = label_of.find(members[i]);
    if (it != label_of.end()) member_cluster[i] = it->second;
    n_clusters = std::max(n_clusters, member_cluster[i] + 1);
  }
  if (n_clusters == 0) throw DataError("no clustered members for the cluster-level graph");

  WeightedGraph g;
  g.nodes.reserve(static_cast<std::size_t>(n_clusters));
  for (int c = 0; c < n_clusters; ++c) g.nodes.push_back(std::to_string(c));
  g.self_mass.assign(static_cast<std::size_t>(n_clusters), 0.0);
  g.node_cluster.resize(static_cast<std::size_t>(n_clusters));
  std::iota(g.node_cluster.begin(), g.node_cluster.end(), 0);

  std::vector<double> between(static_cast<std::size_t>(n_clusters) * n_clusters, 0.0);
  if (!weighted) {
    // binary: per column, count members per cluster; between(A,B) += n_A * n_B
    std::vector<std::int64_t> col_counts(static_cast<std::size_t>(m.cols()) * n_clusters, 0);
    for (std::size_t i = 0; i < nm; ++i) {
      if (member_cluster[i] < 0) continue;
      for (const auto& [col, cnt] : mr.rows[i])
        ++col_counts[static_cast<std::size_t>(col) * n_clusters + member_cluster[i]];
    }
    for (std::int64_t col = 0; col < m.cols(); ++col) {
      const std::int64_t* cc = col_counts.data() + col * n_clusters;
      for (int a = 0; a < n_clusters; ++a) {
        if (cc[a] == 0) continue;
        g.self_mass[static_cast<std::size_t>(a)] += static_cast<double>(cc[a] * (cc[a] - 1) / 2);
        for (int b = a + 1; b < n_clusters; ++b)
          between[static_cast<std::size_t>(a) * n_clusters + b] += static_cast<double>(cc[a] * cc[b]);
      }
    }
  } else {
    for (std::size_t i = 0; i < nm; ++i) {
      if (member_cluster[i] < 0) continue;
      for (std::size_t j = i + 1; j < nm; ++j) {
        if (member_cluster[j] < 0) continue;
        const double w = pair_weight(mr.rows[i], mr.rows[j], true);
        if (w <= 0.0) continue;
        const int a = std::min(member_cluster[i], member_cluster[j]);
        const int b = std::max(member_cluster[i], member_cluster[j]);
        if (a == b)
          g.self_mass[static_cast<std::size_t>(a)] += w;
        else
          between[static_cast<std::size_t>(a) * n_clusters + b] += w;
      }
    }
  }
  for (int a = 0; a < n_clusters; ++a)
    for (int b = a + 1; b < n_clusters; ++b) {
      const double w = between[static_cast<std::size_t>(a) * n_clusters + b];
      if (w > 0.0) g.edges.push_back(WeightedGraph::Edge{a, b, w});
    }
  return g;
}

double modularity(const WeightedGraph& g, const std::vector<int>& community, double resolution) {
  const int n = g.n();
  if (static_cast<int>(community.size()) != n) throw DataError("partition does not cover all nodes");
  int n_comm = 0;
  for (int c : community) {
    if (c < 0) throw DataError("partition leaves a node unassigned");
    n_comm = std::max(n_comm, c + 1);
  }

  std::vector<double> degree(static_cast<std::size_t>(n), 0.0);
  double two_m = 0.0;
  for (const auto& e : g.edges) {
    degree[static_cast<std::size_t>(e.a)] += e.w;
    degree[static_cast<std::size_t>(e.b)] += e.w;
  }
  for (int v = 0; v < n; ++v) {
    const double s = g.self_mass.empty() ? 0.0 : g.self_mass[static_cast<std::size_t>(v)];
    degree[static_cast<std::size_t>(v)] += 2.0 * s;
  }
  for (double d : degree) two_m += d;
  if (two_m <= 0.0) return 0.0;

  // in_c = deg_c - (weight of edges leaving c); keeps the one-community
  // partition at exactly zero
  std::vector<double> cut(static_cast<std::size_t>(n_comm), 0.0);
  std::vector<double> deg(static_cast<std::size_t>(n_comm), 0.0);
  for (const auto& e : g.edges) {
    const int ca = community[static_cast<std::size_t>(e.a)];
    const int cb = community[static_cast<std::size_t>(e.b)];
    if (ca != cb) {
      cut[static_cast<std::size_t>(ca)] += e.w;
      cut[static_cast<std::size_t>(cb)] += e.w;
    }
  }
  for (int v = 0; v < n; ++v)
    deg[static_cast<std::size_t>(community[static_cast<std::size_t>(v)])] += degree[static_cast<std::size_t>(v)];
  double q = 0.0;
  for (int c = 0; c < n_comm; ++c) {
    const double in = deg[static_cast<std::size_t>(c)] - cut[static_cast<std::size_t>(c)];
    q += in / two_m -
         resolution * (deg[static_cast<std::size_t>(c)] / two_m) * (deg[static_cast<std::size_t>(c)] / two_m);
  }
  return q;
}

namespace {

// aggregated graph view used between Louvain levels
struct LouvainGraph {
  int n = 0;
  std::vector<std::vector<std::pair<int, double>>> adj;  // neighbor, weight
  std::vector<double> self;                              // self mass (counted twice in degree)
  std::vector<double> degree;
  double two_m = 0.0;

  static LouvainGraph from(const WeightedGraph& g) {
    LouvainGraph lg;
    lg.n = g.n();
    lg.adj.resize(static_cast<std::size_t>(lg.n));
    lg.self.assign(static_cast<std::size_t>(lg.n), 0.0);
    for (const auto& e : g.edges) {
      lg.adj[static_cast<std::size_t>(e.a)].emplace_back(e.b, e.w);
      lg.adj[static_cast<std::size_t>(e.b)].emplace_back(e.a, e.w);
    }
    if (!g.self_mass.empty())
      for (int v = 0; v < lg.n; ++v) lg.self[static_cast<std::size_t>(v)] = g.self_mass[static_cast<std::size_t>(v)];
    lg.finish();
    return lg;
  }

  void finish() {
    degree.assign(static_cast<std::size_t>(n), 0.0);
    for (int v = 0; v < n; ++v) {
      for (const auto& [u, w] : adj[static_cast<std::size_t>(v)]) {
        (void)u;
        degree[static_cast<std::size_t>(v)] += w;
      }
      degree[static_cast<std::size_t>(v)] += 2.0 * self[static_cast<std::size_t>(v)];
    }
    two_m = 0.0;
    for (double d : degree) two_m += d;
  }
};

// one pass of local moves; returns true if anything moved. comm_size tracks
// membership so an unhappy node can still escape to its own empty community.
bool local_moves(const LouvainGraph& lg, std::vector<int>& comm, std::vector<double>& comm_deg,
                 std::vector<int>& comm_size, double resolution, Rng& rng) {
  std::vector<int> order(static_cast<std::size_t>(lg.n));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);

  bool moved_any = false;
  bool improved = true;
  std::vector<double> link(static_cast<std::size_t>(lg.n), 0.0);
  while (improved) {
    improved = false;
    for (int v : order) {
      const int old_c = comm[static_cast<std::size_t>(v)];
      std::vector<int> touched;
      for (const auto& [u, w] : lg.adj[static_cast<std::size_t>(v)]) {
        const int c = comm[static_cast<std::size_t>(u)];
        if (link[static_cast<std::size_t>(c)] == 0.0) touched.push_back(c);
        link[static_cast<std::size_t>(c)] += w;
      }
      std::sort(touched.begin(), touched.end());

      comm_deg[static_cast<std::size_t>(old_c)] -= lg.degree[static_cast<std::size_t>(v)];
      double best_gain = link[static_cast<std::size_t>(old_c)] -
                         resolution * comm_deg[static_cast<std::size_t>(old_c)] *
                             lg.degree[static_cast<std::size_t>(v)] / lg.two_m;
      int best_c = old_c;
      for (int c : touched) {
        if (c == old_c) continue;
        const double gain = link[static_cast<std::size_t>(c)] -
                            resolution * comm_deg[static_cast<std::size_t>(c)] *
                                lg.degree[static_cast<std::size_t>(v)] / lg.two_m;
        if (gain > best_gain + 1e-12) {
          best_gain = gain;
          best_c = c;
        }
      }
      // isolation move: community id v is free once v has left it, and
      // leaving a community with negative attachment always helps
      if (comm_size[static_cast<std::size_t>(v)] == 0 && 0.0 > best_gain + 1e-12) {
        best_c = v;
        best_gain = 0.0;
      }
      comm_deg[static_cast<std::size_t>(best_c)] += lg.degree[static_cast<std::size_t>(v)];
      if (best_c != old_c) {
        --comm_size[static_cast<std::size_t>(old_c)];
        ++comm_size[static_cast<std::size_t>(best_c)];
        comm[static_cast<std::size_t>(v)] = best_c;
        improved = true;
        moved_any = true;
      }
      for (int c : touched) link[static_cast<std::size_t>(c)] = 0.0;
    }
  }
  return moved_any;
}

LouvainGraph aggregate(const LouvainGraph& lg, const std::vector<int>& comm, int n_comm) {
  LouvainGraph out;
  out.n = n_comm;
  out.adj.resize(static_cast<std::size_t>(n_comm));
  out.self.assign(static_cast<std::size_t>(n_comm), 0.0);
  std::map<std::pair<int, int>, double> agg;
  for (int v = 0; v < lg.n; ++v) {
    const int cv = comm[static_cast<std::size_t>(v)];
    out.self[static_cast<std::size_t>(cv)] += lg.self[static_cast<std::size_t>(v)];
    for (const auto& [u, w] : lg.adj[static_cast<std::size_t>(v)]) {
      if (u < v) continue;  // visit each undirected edge once
      const int cu = comm[static_cast<std::size_t>(u)];
      if (cu == cv)
        out.self[static_cast<std::size_t>(cv)] += w;
      else
        agg[{std::min(cu, cv), std::max(cu, cv)}] += w;
    }
  }
  for (const auto& [key, w] : agg) {
    out.adj[static_cast<std::size_t>(key.first)].emplace_back(key.second, w);
    out.adj[static_cast<std::size_t>(key.second)].emplace_back(key.first, w);
  }
  out.finish();
  return out;
}

std::vector<int> compact_labels(std::vector<int> labels) {
  std::unordered_map<int, int> remap;
  int next = 0;
  for (int& l : labels) {
    auto [it, inserted] = remap.emplace(l, next);
    if (inserted) ++next;
    l = it->second;
  }
  return labels;
}

}  // namespace

namespace {

// full two-phase descent (finest-level sweeps alternating with coarsening
// levels) from an arbitrary starting partition, to a fixed point of both
std::vector<int> louvain_descend(const LouvainGraph& lg0, std::vector<int> final_comm, double resolution,
                                 Rng& rng) {
  const int n = lg0.n;
  while (true) {
    bool refined = false;
    {
      std::vector<double> comm_deg(static_cast<std::size_t>(n), 0.0);
      std::vector<int> comm_size(static_cast<std::size_t>(n), 0);
      for (int v = 0; v < n; ++v) {
        comm_deg[static_cast<std::size_t>(final_comm[static_cast<std::size_t>(v)])] +=
            lg0.degree[static_cast<std::size_t>(v)];
        ++comm_size[static_cast<std::size_t>(final_comm[static_cast<std::size_t>(v)])];
      }
      refined = local_moves(lg0, final_comm, comm_deg, comm_size, resolution, rng);
    }

    std::vector<int> comm = compact_labels(final_comm);
    int n_comm = 0;
    for (int c : comm) n_comm = std::max(n_comm, c + 1);

    bool coarse_moved = false;
    LouvainGraph lg = aggregate(lg0, comm, n_comm);
    while (true) {
      std::vector<int> level(static_cast<std::size_t>(lg.n));
      std::iota(level.begin(), level.end(), 0);
      std::vector<double> comm_deg(lg.degree);
      std::vector<int> comm_size(static_cast<std::size_t>(lg.n), 1);
      if (!local_moves(lg, level, comm_deg, comm_size, resolution, rng)) break;
      coarse_moved = true;
      level = compact_labels(std::move(level));
      int m = 0;
      for (int c : level) m = std::max(m, c + 1);
      for (int v = 0; v < n; ++v)
        comm[static_cast<std::size_t>(v)] = level[static_cast<std::size_t>(comm[static_cast<std::size_t>(v)])];
      if (m == lg.n) break;
      lg = aggregate(lg, level, m);
    }
    final_comm = comm;
    if (!refined && !coarse_moved) break;
  }
  return final_comm;
}

}  // namespace

GraphPartition louvain(const WeightedGraph& g, std::uint64_t seed, double resolution, int restarts) {
  if (restarts < 1) restarts = 1;
  GraphPartition best;
  const int n = g.n();
  best.community.resize(static_cast<std::size_t>(n));
  std::iota(best.community.begin(), best.community.end(), 0);

  const LouvainGraph lg0 = LouvainGraph::from(g);
  if (lg0.two_m <= 0.0) {
    best.modularity = 0.0;
    return best;  // no edge weight anywhere: singletons
  }

  Rng rng(seed);
  std::vector<int> identity(best.community);

  // seeded restarts from singletons, then perturb-and-descend rounds from the
  // incumbent; single-node moves alone cannot fix coordinated misplacements,
  // the kicks can
  for (int r = 0; r < restarts; ++r) {
    auto comm = louvain_descend(lg0, identity, resolution, rng);
    const double q = modularity(g, compact_labels(comm), resolution);
    if (r == 0 || q > best.modularity) {
      best.community = compact_labels(comm);
      best.modularity = q;
    }
  }
  for (int kick = 0; kick < 3 * restarts; ++kick) {
    std::vector<int> comm = best.community;
    for (int v = 0; v < n; ++v) {
      if (lg0.adj[static_cast<std::size_t>(v)].empty() || !(rng.uniform() < 0.25)) continue;
      const auto& nb = lg0.adj[static_cast<std::size_t>(v)];
      const auto pick = nb[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(nb.size())))];
      comm[static_cast<std::size_t>(v)] = comm[static_cast<std::size_t>(pick.first)];
    }
    comm = louvain_descend(lg0, compact_labels(comm), resolution, rng);
    const double q = modularity(g, compact_labels(comm), resolution);
    if (q > best.modularity) {
      best.community = compact_labels(comm);
      best.modularity = q;
    }
  }
  return best;
}

void write_graphml(const WeightedGraph& g, const std::string& path, const GraphPartition* p) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write graphml file: " + path);
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n";
  out << "  <key id=\"cluster\" for=\"node\" attr.name=\"cluster\" attr.type=\"string\"/>\n";
  out << "  <key id=\"self_mass\" for=\"node\" attr.name=\"self_mass\" attr.type=\"double\"/>\n";
  out << "  <key id=\"community\" for=\"node\" attr.name=\"community\" attr.type=\"int\"/>\n";
  out << "  <key id=\"weight\" for=\"edge\" attr.name=\"weight\" attr.type=\"double\"/>\n";
  out << "  <graph id=\"G\" edgedefault=\"undirected\">\n";
  for (int v = 0; v < g.n(); ++v) {
    out << "    <node id=\"" << g.nodes[static_cast<std::size_t>(v)] << "\">\n";
    if (!g.node_cluster.empty()) {
      out << "      <data key=\"cluster\">";
      if (g.node_cluster[static_cast<std::size_t>(v)] == kNoise)
        out << "noise";
      else
        out << g.node_cluster[static_cast<std::size_t>(v)];
      out << "</data>\n";
    }
    if (!g.self_mass.empty())
      out << "      <data key=\"self_mass\">" << format_double(g.self_mass[static_cast<std::size_t>(v)])
          << "</data>\n";
    if (p) out << "      <data key=\"community\">" << p->community[static_cast<std::size_t>(v)] << "</data>\n";
    out << "    </node>\n";
  }
  std::size_t eid = 0;
  for (const auto& e : g.edges) {
    out << "    <edge id=\"e" << eid++ << "\" source=\"" << g.nodes[static_cast<std::size_t>(e.a)]
        << "\" target=\"" << g.nodes[static_cast<std::size_t>(e.b)] << "\">\n";
    out << "      <data key=\"weight\">" << format_double(e.w) << "</data>\n";
    out << "    </edge>\n";
  }
  out << "  </graph>\n</graphml>\n";
  if (!out) throw DataError("write failed: " + path);
}

void write_edge_csv(const WeightedGraph& g, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write edge file: " + path);
  out << "source,target,weight\n";
  for (const auto& e : g.edges)
    out << g.nodes[static_cast<std::size_t>(e.a)] << ',' << g.nodes[static_cast<std::size_t>(e.b)] << ','
        << format_double(e.w) << '\n';
  if (!out) throw DataError("write failed: " + path);
}

}  // namespace stance
