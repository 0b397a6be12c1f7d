#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "stance/cluster.hpp"
#include "stance/error.hpp"
#include "stance/graph.hpp"
#include "stance/ingest.hpp"
#include "stance/log.hpp"
#include "stance/pipeline.hpp"
#include "stance/report.hpp"
#include "stance/synth.hpp"
#include "stance/util.hpp"

namespace fs = std::filesystem;
using namespace stance;

namespace {

struct GlobalOpts {
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 1;
  std::string out;
};

int cmd_ingest(const std::string& sample, const std::string& start, const std::string& end,
               const std::string& format, const std::string& active_path, std::uint64_t min_events,
               double max_error_fraction, const std::vector<std::string>& files, const std::string& out) {
  SampleSpec spec{sample, parse_time_utc(start), parse_time_utc(end), files};
  spec.validate();
  EventFormat fmt;
  if (format == "jsonl") {
    fmt = EventFormat::Jsonl;
  } else if (format == "csv") {
    fmt = EventFormat::Csv;
  } else {
    throw ConfigError("unknown format '" + format + "'");
  }

  std::vector<std::string> sorted_files = files;
  std::sort(sorted_files.begin(), sorted_files.end());
  std::vector<RetweetEvent> events;
  ParseStats stats;
  for (const auto& f : sorted_files) {
    std::ifstream in(f, std::ios::binary);
    if (!in) throw DataError("cannot open event file: " + f);
    auto part = parse_events(in, fmt, spec, stats, max_error_fraction);
    events.insert(events.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  if (!active_path.empty()) {
    events = filter_persistent(events, load_active_users(active_path));
  } else if (min_events > 0) {
    events = filter_persistent(events, derive_active_users(events, min_events));
  }

  std::ofstream os(out, std::ios::binary);
  if (!os) throw DataError("cannot write " + out);
  write_events_jsonl(os, events);
  log_event("ingest", "done",
            {{"sample", sample},
             {"events", events.size()},
             {"malformed", stats.malformed},
             {"self_retweets", stats.self_retweets},
             {"out_of_range", stats.out_of_range},
             {"out", out}});
  return 0;
}

int cmd_cluster(const std::string& scores_path, double percentile, int min_cluster_size, int min_samples,
                bool float32, const std::string& selection, int threads, const std::string& out_dir) {
  const auto scores = load_scores_csv(scores_path);
  const auto filtered = percentile_filter(scores, percentile);
  const auto distances = cosine_distances(filtered, float32, threads);
  const auto sel = selection == "leaf" ? ClusterSelection::Leaf : ClusterSelection::ExcessOfMass;
  const auto assignment = hdbscan(distances, min_cluster_size, min_samples, sel);

  fs::create_directories(out_dir);
  save_assignments_csv(assignment, (fs::path(out_dir) / "assignments.csv").string());
  save_condensed_tree_csv(assignment, (fs::path(out_dir) / "condensed_tree.csv").string());
  int noise = 0;
  for (int l : assignment.labels)
    if (l == kNoise) ++noise;
  nlohmann::json j{{"input_users", scores.user_ids.size()},
                   {"retained_users", filtered.user_ids.size()},
                   {"clusters", assignment.n_clusters()},
                   {"noise", noise},
                   {"sizes", assignment.sizes},
                   {"stabilities", assignment.stabilities}};
  write_text_file((fs::path(out_dir) / "clusters.json").string(), j.dump(2) + "\n");
  log_event("cluster", "done", {{"clusters", assignment.n_clusters()}, {"noise", noise}, {"out", out_dir}});
  return 0;
}

int cmd_graph(const std::string& matrix_path, const std::string& assignments_path, const std::string& level,
              bool weighted, std::uint64_t seed, double resolution, int threads, const std::string& out) {
  const auto matrix = IncidenceMatrix::load(matrix_path);
  const auto assignment = load_assignments_csv(assignments_path);
  std::vector<std::string> members;
  for (std::size_t i = 0; i < assignment.user_ids.size(); ++i)
    if (assignment.labels[i] != kNoise && matrix.row_index(assignment.user_ids[i]))
      members.push_back(assignment.user_ids[i]);
  const auto lvl = level == "user" ? GraphLevel::User : GraphLevel::Cluster;
  const auto graph = co_retweet_graph(matrix, members, lvl, &assignment, weighted, threads);
  const auto partition = louvain(graph, seed, resolution);

  write_graphml(graph, out, &partition);
  fs::path edges = fs::path(out);
  edges.replace_extension(".edges.csv");
  write_edge_csv(graph, edges.string());
  log_event("graph", "done",
            {{"nodes", graph.n()},
             {"edges", graph.edges.size()},
             {"modularity", partition.modularity},
             {"out", out}});
  return 0;
}

// reload composition artifacts from a finished run directory
struct RunArtifacts {
  std::vector<SamplePipelineResult> samples;
  CommonSpace common;
  ScoreMatrix filtered;
  ClusterAssignment assignment;
};

RunArtifacts load_run_dir(const std::string& run_dir) {
  RunArtifacts art;
  const fs::path root(run_dir);
  if (!fs::exists(root / "models" / "common.pcm"))
    throw DataError("'" + run_dir + "' does not look like a finished run directory");

  for (const auto& entry : fs::directory_iterator(root / "models")) {
    if (!entry.is_directory()) continue;
    const std::string sid = entry.path().filename().string();
    SamplePipelineResult res;
    res.sample_id = sid;
    res.matrix = IncidenceMatrix::load((root / "matrix" / (sid + ".incidence")).string());
    std::vector<fs::path> model_files;
    for (const auto& f : fs::directory_iterator(entry.path()))
      if (f.path().filename().string().rfind("window_", 0) == 0) model_files.push_back(f.path());
    std::sort(model_files.begin(), model_files.end());
    for (const auto& p : model_files) {
      WindowFit fit;
      fit.model = load_pca_model(p.string());
      fit.window = TimeWindow{sid, fit.model.provenance.window_index, 0, 0};
      res.window_fits.push_back(std::move(fit));
    }
    res.sample_model = load_pca_model((entry.path() / "sample.pcm").string());
    res.sample_scores = load_scores_csv((root / "scores" / (sid + "_sample.csv")).string());
    art.samples.push_back(std::move(res));
  }
  std::sort(art.samples.begin(), art.samples.end(),
            [](const auto& a, const auto& b) { return a.sample_id < b.sample_id; });

  art.common.model = load_pca_model((root / "models" / "common.pcm").string());
  art.common.scores = load_scores_csv((root / "scores" / "common.csv").string());
  art.common.user_ids = art.common.scores.user_ids;
  for (const auto& label : art.common.model.col_labels) {
    const auto prov = Provenance::parse(label.substr(0, label.rfind('/')));
    art.common.column_sample.push_back(prov.sample_id);
  }
  if (fs::exists(root / "scores" / "filtered.csv"))
    art.filtered = load_scores_csv((root / "scores" / "filtered.csv").string());
  if (fs::exists(root / "cluster" / "assignments.csv"))
    art.assignment = load_assignments_csv((root / "cluster" / "assignments.csv").string());
  return art;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stance: cross-sample latent stance analysis of retweet event logs"};
  app.require_subcommand(1);

  GlobalOpts global;
  app.add_option("--seed", global.seed, "override the run seed")->each([&](const std::string&) {
    global.seed_set = true;
  });
  app.add_option("--threads", global.threads, "worker threads for parallel stages")
      ->check(CLI::PositiveNumber);
  app.add_option("--out", global.out, "output file or directory");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "parse raw event logs into a normalized event file");
  std::string in_sample, in_start, in_end, in_format = "jsonl", in_active;
  std::uint64_t in_min_events = 0;
  double in_max_err = 0.01;
  std::vector<std::string> in_files;
  ingest->add_option("--sample", in_sample, "sample id")->required();
  ingest->add_option("--start", in_start, "range start (ISO date or epoch)")->required();
  ingest->add_option("--end", in_end, "range end, exclusive")->required();
  ingest->add_option("--format", in_format, "jsonl or csv");
  ingest->add_option("--active-users", in_active, "persistent-user list (one id per line)");
  ingest->add_option("--min-events", in_min_events, "derive the active set from the corpus");
  ingest->add_option("--max-error-fraction", in_max_err, "abort above this rejected-record fraction");
  ingest->add_option("files", in_files, "input event files")->required();

  // synth
  auto* synth = app.add_subcommand("synth", "generate a planted-stance corpus with ground truth");
  std::string synth_config;
  synth->add_option("--config", synth_config, "planted config JSON")->required();

  // compose / run
  auto* compose = app.add_subcommand("compose", "hierarchical PCA over normalized event files");
  std::string compose_config;
  bool compose_force = false;
  compose->add_option("--config", compose_config, "run config JSON")->required();
  compose->add_flag("--force", compose_force, "overwrite existing artifacts");

  auto* run = app.add_subcommand("run", "full pipeline: ingest, compose, cluster, graph, report");
  std::string run_config, from_stage;
  bool run_force = false;
  run->add_option("--config", run_config, "run config JSON")->required();
  run->add_flag("--force", run_force, "overwrite existing artifacts");
  run->add_option("--from-stage", from_stage, "resume from this stage (ingest|compose|cluster|graph|report)");

  // cluster
  auto* cluster = app.add_subcommand("cluster", "distance-percentile filter + HDBSCAN on a scores CSV");
  std::string cl_scores, cl_selection = "eom";
  double cl_percentile = 90.0;
  int cl_mcs = 20, cl_ms = 0;
  bool cl_f32 = false;
  cluster->add_option("--scores", cl_scores, "score matrix CSV")->required();
  cluster->add_option("--percentile", cl_percentile, "distance percentile cut");
  cluster->add_option("--min-cluster-size", cl_mcs, "HDBSCAN minimum cluster size");
  cluster->add_option("--min-samples", cl_ms, "HDBSCAN min_samples (default: min cluster size)");
  cluster->add_option("--selection", cl_selection, "eom or leaf");
  cluster->add_flag("--float32", cl_f32, "store the distance matrix in float32");

  // graph
  auto* graph = app.add_subcommand("graph", "co-retweet network + Louvain communities");
  std::string g_matrix, g_assign, g_level = "cluster";
  bool g_weighted = false;
  double g_resolution = 1.0;
  graph->add_option("--matrix", g_matrix, "incidence matrix path")->required();
  graph->add_option("--assignments", g_assign, "assignments CSV")->required();
  graph->add_option("--level", g_level, "user or cluster");
  graph->add_flag("--weighted", g_weighted, "weight shared retweets by multiplicity");
  graph->add_option("--resolution", g_resolution, "modularity resolution");

  // report
  auto* report = app.add_subcommand("report", "interpretive tables from a finished run directory");
  report->require_subcommand(1);
  std::string rp_run;
  report->add_option("--run", rp_run, "run directory")->required();
  auto* rp_top = report->add_subcommand("top-influencers", "per-sample influencer weights on a common PC");
  int rp_component = 1, rp_k = 20;
  rp_top->add_option("--component", rp_component, "common PC (1-based)");
  rp_top->add_option("--top", rp_k, "list length");
  auto* rp_summary = report->add_subcommand("cluster-summary", "per-cluster sizes and top accounts");
  int rp_sum_k = 20;
  rp_summary->add_option("--top", rp_sum_k, "influencers per cluster per sample");
  auto* rp_pair = report->add_subcommand("pairplot", "clustered users along the common PCs");
  bool rp_drop_noise = false;
  rp_pair->add_flag("--drop-noise", rp_drop_noise, "omit noise users");
  auto* rp_biplot = report->add_subcommand("biplot", "sample-PC rotations into the common space");
  int rp_pc_x = 1, rp_pc_y = 2;
  rp_biplot->add_option("--pc-x", rp_pc_x, "x axis common PC (1-based)");
  rp_biplot->add_option("--pc-y", rp_pc_y, "y axis common PC (1-based)");

  // global flags (--seed/--threads/--out) may follow the subcommand name
  for (auto* sub : app.get_subcommands({})) {
    sub->fallthrough();
    for (auto* nested : sub->get_subcommands({})) nested->fallthrough();
  }

  try {
    app.parse(argc, argv);

    if (ingest->parsed()) {
      if (global.out.empty()) throw ConfigError("ingest needs --out <file>");
      return cmd_ingest(in_sample, in_start, in_end, in_format, in_active, in_min_events, in_max_err,
                        in_files, global.out);
    }
    if (synth->parsed()) {
      if (global.out.empty()) throw ConfigError("synth needs --out <dir>");
      auto cfg = PlantedConfig::from_json_file(synth_config);
      if (global.seed_set) cfg.seed = global.seed;
      generate(cfg, global.out);
      log_event("synth", "done", {{"out", global.out}});
      return 0;
    }
    if (compose->parsed()) {
      if (global.out.empty()) throw ConfigError("compose needs --out <dir>");
      auto cfg = RunConfig::from_json_file(compose_config);
      if (global.seed_set) cfg.seed = global.seed;
      run_pipeline(cfg, global.out, global.threads, compose_force, Stage::Ingest, Stage::Compose);
      return 0;
    }
    if (run->parsed()) {
      if (global.out.empty()) throw ConfigError("run needs --out <dir>");
      auto cfg = RunConfig::from_json_file(run_config);
      if (global.seed_set) cfg.seed = global.seed;
      const Stage from = from_stage.empty() ? Stage::Ingest : stage_from_name(from_stage);
      run_pipeline(cfg, global.out, global.threads, run_force, from, Stage::Report);
      return 0;
    }
    if (cluster->parsed()) {
      if (global.out.empty()) throw ConfigError("cluster needs --out <dir>");
      return cmd_cluster(cl_scores, cl_percentile, cl_mcs, cl_ms, cl_f32, cl_selection, global.threads,
                         global.out);
    }
    if (graph->parsed()) {
      if (global.out.empty()) throw ConfigError("graph needs --out <file.graphml>");
      return cmd_graph(g_matrix, g_assign, g_level, g_weighted, global.seed, g_resolution, global.threads,
                       global.out);
    }
    if (report->parsed()) {
      if (global.out.empty()) throw ConfigError("report needs --out <file>");
      const auto art = load_run_dir(rp_run);
      if (rp_top->parsed()) {
        const auto rows = top_influencers_per_component(art.samples, art.common, rp_component - 1, rp_k);
        write_top_influencers_csv(rows, rp_component - 1, global.out);
      } else if (rp_summary->parsed()) {
        std::map<std::string, const IncidenceMatrix*> matrices;
        for (const auto& s : art.samples) matrices[s.sample_id] = &s.matrix;
        write_cluster_summary_json(cluster_summary(art.assignment, matrices, rp_sum_k), global.out);
      } else if (rp_pair->parsed()) {
        export_pairplot(art.filtered, art.assignment, rp_drop_noise, global.out);
      } else if (rp_biplot->parsed()) {
        write_biplot_csv(export_biplot(art.common, rp_pc_x - 1, rp_pc_y - 1), global.out);
      }
      log_event("report", "done", {{"out", global.out}});
      return 0;
    }
    return 0;
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
