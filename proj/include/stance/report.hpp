#pragma once

#include <map>
#include <string>
#include <vector>

#include "stance/cluster.hpp"
#include "stance/compose.hpp"

namespace stance {

// Net linear weight of every original influencer on the common PCs for one
// sample: window loadings × sample loadings × common loadings.
// Rows follow sample.matrix.col_ids(), columns the common PCs.
Eigen::MatrixXd composed_influencer_weights(const SamplePipelineResult& sample, const CommonSpace& common);

struct InfluencerWeight {
  std::string sample;
  std::string influencer;
  double weight;  // signed
};

// Top-k influencers per sample by |weight| on one common component (0-based).
std::vector<InfluencerWeight> top_influencers_per_component(
    const std::vector<SamplePipelineResult>& samples, const CommonSpace& common, int component, int k);

void write_top_influencers_csv(const std::vector<InfluencerWeight>& rows, int component,
                               const std::string& path);

struct ClusterSampleStats {
  std::vector<std::pair<std::string, std::int64_t>> top_influencers;  // by retweet count
  std::vector<std::int64_t> distinct_retweeters;                      // parallel to top_influencers
  double activity_share = 0.0;  // cluster retweets / sample retweets
};

struct ClusterSummary {
  int cluster = 0;
  int size = 0;
  std::map<std::string, ClusterSampleStats> per_sample;
};

std::vector<ClusterSummary> cluster_summary(const ClusterAssignment& assignment,
                                            const std::map<std::string, const IncidenceMatrix*>& matrices,
                                            int top_k);

void write_cluster_summary_json(const std::vector<ClusterSummary>& summaries, const std::string& path);

// "user_id,cluster,PC1..PCk"; unclustered users carry the label "noise".
void export_pairplot(const ScoreMatrix& scores, const ClusterAssignment& assignment, bool drop_noise,
                     const std::string& path);

struct BiplotArrow {
  std::string sample;
  std::string sample_pc;
  double x;
  double y;
};

// One arrow per sample PC: its loadings on the two chosen common PCs (0-based).
std::vector<BiplotArrow> export_biplot(const CommonSpace& common, int pc_x, int pc_y);
void write_biplot_csv(const std::vector<BiplotArrow>& arrows, const std::string& path);

// rotations of every sample PC across all common PCs: sample_pc,common_pc,loading
void write_rotations_csv(const CommonSpace& common, const std::string& path);

}  // namespace stance
