#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stance/ingest.hpp"

namespace stance {

struct PlantedSampleSpec {
  std::string id;
  std::int64_t start = 0;
  std::int64_t end = 0;
  // k_stances × k_stances retweet propensity: row = user stance, col =
  // influencer block. Filled from in/out shorthand when absent in config.
  std::vector<std::vector<double>> affinity;
};

// Generative model for multi-sample corpora with planted stances: users carry
// a latent stance, influencers sit in per-sample blocks, and retweet events
// follow block affinities with log-normal per-user activity.
struct PlantedConfig {
  std::uint64_t seed = 1;
  int n_users = 0;
  int n_influencers_per_sample = 0;
  std::vector<PlantedSampleSpec> samples;
  int k_stances = 2;
  std::vector<double> stance_mixture;  // length k, sums to 1
  double cross_sample_participation = 1.0;
  double events_per_active_user = 10.0;  // mean of the log-normal
  double activity_sigma = 0.75;          // log-space sd
  double stance_consistency = 1.0;       // P(keep global stance in a sample)

  void validate() const;
  static PlantedConfig from_json_file(const std::string& path);
};

struct SampleTruth {
  std::vector<std::uint8_t> active;      // per user
  std::vector<std::int64_t> event_count; // per user
  std::vector<int> influencer_block;     // per influencer index
  std::vector<int> effective_stance;     // per user (may differ when inconsistent)
};

struct GroundTruth {
  std::vector<std::string> user_ids;
  std::vector<std::string> influencer_ids;  // "<id>@<sample>" shared prefix scheme
  std::vector<int> stance;                  // global stance per user
  std::map<std::string, SampleTruth> samples;

  void save(const std::string& path) const;
  static GroundTruth load(const std::string& path);
};

// Writes one "<sample>.jsonl" per sample (normalized ingest schema) plus
// "ground_truth.json" into out_dir. Byte-identical for identical config+seed.
GroundTruth generate(const PlantedConfig& cfg, const std::string& out_dir);

// Standard pair-counting ARI. With exclude_noise, points labeled `noise` in
// either labeling are dropped first. Degenerate tables (denominator zero)
// yield 1 when the partitions coincide and 0 otherwise.
double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b,
                           bool exclude_noise = false, int noise = -1);

}  // namespace stance
