#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cstdint>
#include <string>
#include <vector>

namespace stance {

// Tags a model or score matrix with the pipeline stage that produced it.
struct Provenance {
  enum class Kind { Window, Sample, Common };
  Kind kind = Kind::Common;
  std::string sample_id;
  int window_index = -1;

  static Provenance window(std::string sample, int index) {
    return Provenance{Kind::Window, std::move(sample), index};
  }
  static Provenance sample(std::string sample) { return Provenance{Kind::Sample, std::move(sample), -1}; }
  static Provenance common() { return Provenance{}; }

  // "window:<sample>:<index>" | "sample:<sample>" | "common"
  std::string str() const;
  static Provenance parse(const std::string& s);
  bool operator==(const Provenance&) const = default;
};

// Centered principal components: orthonormal loadings over the input columns,
// per-component variances (covariance eigenvalues, non-increasing) and the
// total variance of the input for coverage accounting.
struct PcaModel {
  Eigen::VectorXd means;
  Eigen::MatrixXd loadings;   // cols × components, orthonormal columns
  Eigen::VectorXd variances;  // non-increasing, >= 0
  double total_variance = 0.0;
  Provenance provenance;
  std::vector<std::string> col_labels;
  std::uint64_t seed = 0;
  int n_rows_fit = 0;

  int components() const { return static_cast<int>(variances.size()); }
  int input_cols() const { return static_cast<int>(means.size()); }

  // Drops all but the first k components. Means/total variance are unchanged.
  PcaModel truncated(int k) const;
};

// Dense user×component score table keyed by user id.
struct ScoreMatrix {
  std::vector<std::string> user_ids;
  Eigen::MatrixXd scores;  // |user_ids| × components
  Provenance provenance;
  std::vector<std::string> pc_labels;

  int components() const { return static_cast<int>(scores.cols()); }
};

struct FitOptions {
  int oversample = 10;
  int min_iterations = 2;
  int max_iterations = 400;
  // Ritz residual target, relative to the largest eigenvalue. The iteration
  // keeps polishing well below the documented 1e-9 guarantee when it can.
  double rel_tolerance = 1e-12;
  // eigenvalues below rank_cutoff × λ_max are treated as numerically zero
  double rank_cutoff = 1e-12;
};

// Truncated PCA of the column-centered matrix. Centering is implicit (rank-1
// correction inside the covariance products); sparse inputs are never
// densified. Deterministic for a fixed seed. Loadings follow the
// max-|entry|-positive sign convention.
PcaModel fit_pca(const Eigen::SparseMatrix<double>& m, int max_components, std::uint64_t seed,
                 const FitOptions& opts = {});
PcaModel fit_pca(const Eigen::MatrixXd& m, int max_components, std::uint64_t seed,
                 const FitOptions& opts = {});

ScoreMatrix transform(const PcaModel& model, const Eigen::SparseMatrix<double>& m,
                      std::vector<std::string> user_ids);
ScoreMatrix transform(const PcaModel& model, const Eigen::MatrixXd& m,
                      std::vector<std::string> user_ids);

// Minimal k with cumulative variance fraction >= target. When even all the
// computed components fall short (truncated fit), returns them all and sets
// *shortfall instead of failing.
int select_by_variance(const Eigen::VectorXd& variances, double total_variance, double target,
                       bool* shortfall = nullptr);

struct ScreeResult {
  int k = 0;
  bool weak_elbow = false;
};

// Automated elbow: the component count preceding the point of maximum
// curvature (largest second difference) of the spectrum, ties toward
// smaller k. Flags spectra without a pronounced elbow.
ScreeResult scree_select(const Eigen::VectorXd& variances);

// Model file: text header + little-endian float64 sections. Exact round-trip.
void save_pca_model(const PcaModel& model, const std::string& path);
PcaModel load_pca_model(const std::string& path);

void save_scores_csv(const ScoreMatrix& scores, const std::string& path);
ScoreMatrix load_scores_csv(const std::string& path);

}  // namespace stance
