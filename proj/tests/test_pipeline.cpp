#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "stance/error.hpp"
#include "stance/pipeline.hpp"
#include "stance/synth.hpp"
#include "stance/util.hpp"

using namespace stance;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  fs::path dir;
  RunConfig config;
};

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// small planted corpus + matching run config
Fixture make_fixture(const std::string& name, std::uint64_t seed, double percentile = 50.0,
                     int min_cluster_size = 10) {
  Fixture fx;
  fx.dir = fresh_dir(name);

  PlantedConfig pc;
  pc.seed = seed;
  pc.n_users = 160;
  pc.n_influencers_per_sample = 20;
  pc.k_stances = 2;
  pc.stance_mixture = {0.5, 0.5};
  pc.cross_sample_participation = 0.9;
  pc.events_per_active_user = 12.0;
  pc.activity_sigma = 0.5;
  for (int s = 0; s < 2; ++s) {
    PlantedSampleSpec ps;
    ps.id = "s" + std::to_string(s);
    ps.start = 1'600'000'000;
    ps.end = ps.start + 21 * 86400;
    ps.affinity = {{0.35, 0.01}, {0.01, 0.35}};
    pc.samples.push_back(ps);
  }
  generate(pc, (fx.dir / "corpus").string());

  RunConfig cfg;
  cfg.seed = seed;
  for (int s = 0; s < 2; ++s) {
    SampleConfig sc;
    sc.id = "s" + std::to_string(s);
    sc.start = 1'600'000'000;
    sc.end = sc.start + 21 * 86400;
    sc.files = {(fx.dir / "corpus" / (sc.id + ".jsonl")).string()};
    cfg.samples.push_back(sc);
  }
  cfg.threshold_fraction = 0.001;
  cfg.cluster.percentile = percentile;
  cfg.cluster.min_cluster_size = min_cluster_size;
  cfg.common_components.use_scree = false;
  cfg.common_components.fixed_k = 4;
  fx.config = cfg;
  return fx;
}

}  // namespace

TEST_CASE("full run writes every stage artifact and a coherent manifest") {
  auto fx = make_fixture("stance_pipe_full", 7);
  const auto out = (fx.dir / "run").string();
  const auto res = run_pipeline(fx.config, out, 2);

  for (const auto& rel :
       {"manifest.json", "events/s0.jsonl", "matrix/s0.incidence", "models/s0/sample.pcm",
        "models/common.pcm", "scores/s0_stacked.csv", "scores/s0_sample.csv", "scores/common.csv",
        "scores/filtered.csv", "rotations.csv", "cluster/assignments.csv", "cluster/condensed_tree.csv",
        "cluster/clusters.json", "graph/graph.graphml", "graph/edges.csv", "report/top_influencers.csv",
        "report/cluster_summary.json", "report/pairplot.csv", "report/biplot.csv"})
    CHECK_MESSAGE(fs::exists(fs::path(out) / rel), rel);

  const auto& m = res.manifest;
  CHECK(m.at("effective_config").at("threshold_fraction").get<double>() == 0.001);
  CHECK(m.at("effective_config").at("max_window_pcs").get<int>() == 10);
  CHECK(m.at("effective_config").at("sample_variance_target").get<double>() == 0.95);
  CHECK(m.at("effective_config").at("cluster").at("min_cluster_size").get<int>() == 10);
  CHECK(m.at("stages").at("compose").at("samples").at("s0").at("windows").get<int>() == 3);
  CHECK(m.at("stages").at("compose").at("common").at("matched_users").get<int>() > 50);
  CHECK(m.contains("artifacts"));
  CHECK(m.at("config_hash").get<std::string>().size() == 16);

  // manifest on disk equals the returned one
  const auto disk = nlohmann::json::parse(read_text_file(out + "/manifest.json"));
  CHECK(disk.at("config_hash") == m.at("config_hash"));
  fs::remove_all(fx.dir);
}

TEST_CASE("rerunning with the same config and seed is byte-identical for numerical artifacts") {
  auto fx = make_fixture("stance_pipe_det", 21);
  const auto out1 = (fx.dir / "run1").string();
  const auto out2 = (fx.dir / "run2").string();
  const auto r1 = run_pipeline(fx.config, out1, 1);
  const auto r2 = run_pipeline(fx.config, out2, 4);  // different thread count

  for (const auto& rel : {"scores/common.csv", "scores/filtered.csv", "cluster/assignments.csv",
                          "graph/graph.graphml", "graph/edges.csv", "scores/s0_sample.csv"})
    CHECK(read_text_file(out1 + "/" + rel) == read_text_file(out2 + "/" + rel));

  CHECK(r1.manifest.at("artifacts") == r2.manifest.at("artifacts"));
  fs::remove_all(fx.dir);
}

TEST_CASE("existing artifacts are refused without force") {
  auto fx = make_fixture("stance_pipe_force", 31);
  const auto out = (fx.dir / "run").string();
  run_pipeline(fx.config, out, 1);
  CHECK_THROWS_AS(run_pipeline(fx.config, out, 1), ConfigError);
  CHECK_NOTHROW(run_pipeline(fx.config, out, 1, true));
  fs::remove_all(fx.dir);
}

TEST_CASE("a finished run resumes from the cluster stage") {
  auto fx = make_fixture("stance_pipe_resume", 41);
  const auto out = (fx.dir / "run").string();
  const auto first = run_pipeline(fx.config, out, 1);

  auto resumed_cfg = fx.config;
  resumed_cfg.cluster.percentile = 0.0;  // keep everyone this time
  const auto resumed = run_pipeline(resumed_cfg, out, 1, true, Stage::Cluster);
  const auto filtered = load_scores_csv(out + "/scores/filtered.csv");
  const auto common = load_scores_csv(out + "/scores/common.csv");
  CHECK(filtered.user_ids.size() == common.user_ids.size());
  CHECK(resumed.manifest.at("stages").contains("cluster"));
  fs::remove_all(fx.dir);
}

TEST_CASE("config validation rejects an over-long step before any work") {
  auto fx = make_fixture("stance_pipe_validate", 51);
  auto bad = fx.config;
  bad.window_step_days = bad.window_days * 2;
  const auto out = (fx.dir / "run").string();
  CHECK_THROWS_AS(run_pipeline(bad, out, 1), ConfigError);
  CHECK_FALSE(fs::exists(fs::path(out) / "manifest.json"));
  fs::remove_all(fx.dir);
}

TEST_CASE("config json parsing applies the reference defaults") {
  const auto dir = fresh_dir("stance_pipe_json");
  const auto cfg_path = (dir / "cfg.json").string();
  write_text_file(cfg_path, R"({
    "seed": 3,
    "samples": [
      {"id": "a", "start": "2022-01-01", "end": "2022-01-29", "files": ["a.jsonl"]},
      {"id": "b", "start": 1640995200, "end": 1643414400, "files": ["b.jsonl"]}
    ]
  })");
  const auto cfg = RunConfig::from_json_file(cfg_path);
  CHECK(cfg.threshold_fraction == 0.001);
  CHECK(cfg.max_window_pcs == 10);
  CHECK(cfg.sample_variance_target == 0.95);
  CHECK(cfg.cluster.percentile == 90.0);
  CHECK(cfg.cluster.min_cluster_size == 20);
  CHECK(cfg.common_components.use_scree);
  CHECK(cfg.window_days == 7.0);
  CHECK(cfg.samples[0].start == 1640995200);  // 2022-01-01 UTC
  CHECK(cfg.samples[0].end == cfg.samples[1].end);

  const auto echoed = cfg.effective_config();
  CHECK(echoed.at("threshold_fraction").get<double>() == 0.001);
  CHECK(echoed.at("max_window_pcs").get<int>() == 10);
  CHECK(echoed.at("sample_variance_target").get<double>() == 0.95);
  CHECK(echoed.at("cluster").at("percentile").get<double>() == 90.0);
  CHECK(echoed.at("cluster").at("min_cluster_size").get<int>() == 20);
  CHECK(echoed.at("common_components").get<std::string>() == "scree");
  fs::remove_all(dir);
}

TEST_CASE("unknown stage names are config errors") {
  CHECK_THROWS_AS(stage_from_name("nonsense"), ConfigError);
  CHECK(stage_from_name("cluster") == Stage::Cluster);
}
