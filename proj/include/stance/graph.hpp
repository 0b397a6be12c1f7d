#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stance/cluster.hpp"
#include "stance/incidence.hpp"

namespace stance {

// Undirected weighted graph. Within-node mass (e.g. shared retweets inside a
// cluster) is kept as a node attribute rather than a self-loop; it still
// counts toward node degree in modularity.
struct WeightedGraph {
  struct Edge {
    int a;  // a < b
    int b;
    double w;  // > 0
  };

  std::vector<std::string> nodes;
  std::vector<Edge> edges;
  std::vector<double> self_mass;   // per node, 0 when absent
  std::vector<int> node_cluster;   // optional attribute, -1 when absent

  int n() const { return static_cast<int>(nodes.size()); }
};

enum class GraphLevel { User, Cluster };

// Co-retweet network: user-level edge weight = number of influencers both
// users retweeted (binary Gram off-diagonals); cluster-level weights sum the
// user-level weights across cluster pairs. With `weighted`, shared retweets
// are counted via min(multiplicity) instead of 0/1.
WeightedGraph co_retweet_graph(const IncidenceMatrix& m, const std::vector<std::string>& members,
                               GraphLevel level, const ClusterAssignment* assignment = nullptr,
                               bool weighted = false, int threads = 1);

struct GraphPartition {
  std::vector<int> community;  // dense ids from 0
  double modularity = 0.0;
};

// Q = (1/2m) Σ_ij (A_ij − γ k_i k_j / 2m) δ(c_i, c_j); self mass enters both
// the internal weight and the degrees.
double modularity(const WeightedGraph& g, const std::vector<int>& community, double resolution = 1.0);

// Two-phase Louvain with seed-shuffled node visit order. Runs `restarts`
// seeded orders and keeps the highest-modularity partition; every restart
// order derives from the one seed, so the result stays deterministic.
GraphPartition louvain(const WeightedGraph& g, std::uint64_t seed, double resolution = 1.0,
                       int restarts = 10);

void write_graphml(const WeightedGraph& g, const std::string& path, const GraphPartition* p = nullptr);
void write_edge_csv(const WeightedGraph& g, const std::string& path);

}  // namespace stance
