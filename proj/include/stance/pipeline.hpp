#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stance/cluster.hpp"
#include "stance/compose.hpp"
#include "stance/graph.hpp"
#include "stance/ingest.hpp"

namespace stance {

struct SampleConfig {
  std::string id;
  std::int64_t start = 0;
  std::int64_t end = 0;
  std::vector<std::string> files;
  EventFormat format = EventFormat::Jsonl;
};

struct ClusterConfig {
  double percentile = 90.0;
  int min_cluster_size = 20;
  int min_samples = 0;  // 0 → min_cluster_size
  ClusterSelection selection = ClusterSelection::ExcessOfMass;
  bool float32 = false;
};

struct GraphConfig {
  GraphLevel level = GraphLevel::Cluster;
  bool weighted = false;
  double resolution = 1.0;
};

struct ReportConfig {
  int top_k = 20;
};

// One JSON document drives the whole run; defaults follow the reference
// analysis (threshold 0.001, 10 window PCs, 95% sample variance, 90th
// percentile, min cluster size 20, scree-selected common components).
struct RunConfig {
  std::uint64_t seed = 0;
  std::vector<SampleConfig> samples;
  std::string active_users_path;
  std::uint64_t min_events = 0;  // fallback active-set rule, 0 = off
  double max_error_fraction = 0.01;
  double window_days = 7.0;
  double window_step_days = 7.0;
  double threshold_fraction = 0.001;
  int max_window_pcs = 10;
  double sample_variance_target = 0.95;
  int sample_max_pcs = 0;  // 0 = up to full rank
  ComponentSelection common_components;  // scree by default
  bool standardize = false;
  ClusterConfig cluster;
  GraphConfig graph;
  ReportConfig report;

  std::int64_t window_len_seconds() const;
  std::int64_t window_step_seconds() const;

  void validate() const;
  nlohmann::json effective_config() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig from_json_file(const std::string& path);
};

enum class Stage { Ingest = 0, Compose = 1, Cluster = 2, Graph = 3, Report = 4 };

Stage stage_from_name(const std::string& name);

struct RunResult {
  std::string out_dir;
  nlohmann::json manifest;
};

// Executes stages [from, to], loading earlier-stage artifacts from out_dir
// when resuming. Refuses to overwrite existing outputs unless force is set.
RunResult run_pipeline(const RunConfig& cfg, const std::string& out_dir, int threads = 1,
                       bool force = false, Stage from = Stage::Ingest, Stage to = Stage::Report);

}  // namespace stance
