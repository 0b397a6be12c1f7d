#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stance/pca.hpp"

namespace stance {

// Symmetric cosine-distance matrix in [0,2]. Optionally stored as float32 to
// halve memory at paper scale; all computation stays in double.
struct DistanceMatrix {
  std::vector<std::string> ids;
  int n = 0;
  bool float32 = false;
  std::vector<double> d64;  // n*n row-major when !float32
  std::vector<float> d32;

  double at(int i, int j) const {
    return float32 ? static_cast<double>(d32[static_cast<std::size_t>(i) * n + j])
                   : d64[static_cast<std::size_t>(i) * n + j];
  }
};

// Keeps users whose Euclidean norm over all score columns is at or above the
// percentile-th percentile (nearest-rank). percentile 0 keeps everyone.
ScoreMatrix percentile_filter(const ScoreMatrix& scores, double percentile);

// d(i,j) = 1 - cos(x_i, x_j). Rows must have positive norm.
DistanceMatrix cosine_distances(const ScoreMatrix& scores, bool float32 = false, int threads = 1);

enum class ClusterSelection { ExcessOfMass, Leaf };

// One row of the condensed hierarchy: child < n is a point leaving `parent`
// at density lambda; child >= n is a cluster born from `parent`.
struct CondensedNode {
  int parent;
  int child;
  double lambda;
  int size;
};

constexpr int kNoise = -1;

struct ClusterAssignment {
  std::vector<std::string> user_ids;
  std::vector<int> labels;            // dense cluster ids from 0, or kNoise
  std::vector<double> stabilities;    // per cluster id
  std::vector<int> sizes;             // per cluster id
  std::vector<CondensedNode> condensed;

  int n_clusters() const { return static_cast<int>(sizes.size()); }
};

// Density-based clustering on a precomputed distance matrix: core distances
// at min_samples (default = min_cluster_size), mutual reachability, exact
// MST, single-linkage hierarchy, condensed tree, then stability-based
// extraction. Fewer than min_cluster_size points → everything noise. The
// hierarchy root competes in excess-of-mass selection, so structureless data
// resolves to a single cluster rather than fabricated splits.
ClusterAssignment hdbscan(const DistanceMatrix& d, int min_cluster_size = 20, int min_samples = 0,
                          ClusterSelection selection = ClusterSelection::ExcessOfMass);

struct ReachabilityEdge {
  int a;
  int b;
  double w;
};

// Exact MST of the mutual reachability graph (the hdbscan backbone).
std::vector<ReachabilityEdge> reachability_mst(const DistanceMatrix& d, int min_samples);

void save_assignments_csv(const ClusterAssignment& a, const std::string& path);
ClusterAssignment load_assignments_csv(const std::string& path);
void save_condensed_tree_csv(const ClusterAssignment& a, const std::string& path);

}  // namespace stance
