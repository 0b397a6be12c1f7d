#include "stance/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <unordered_set>

#include "stance/error.hpp"
#include "stance/log.hpp"
#include "stance/report.hpp"
#include "stance/rng.hpp"
#include "stance/util.hpp"

namespace fs = std::filesystem;

namespace stance {

std::int64_t RunConfig::window_len_seconds() const {
  return static_cast<std::int64_t>(std::llround(window_days * 86400.0));
}

std::int64_t RunConfig::window_step_seconds() const {
  return static_cast<std::int64_t>(std::llround(window_step_days * 86400.0));
}

void RunConfig::validate() const {
  if (samples.empty()) throw ConfigError("config needs at least one sample");
  std::set<std::string> ids;
  for (const auto& s : samples) {
    if (s.id.empty()) throw ConfigError("sample id must not be empty");
    if (!ids.insert(s.id).second) throw ConfigError("duplicate sample id '" + s.id + "'");
    if (s.start >= s.end) throw ConfigError("sample '" + s.id + "': start must precede end");
    if (s.files.empty()) throw ConfigError("sample '" + s.id + "' lists no event files");
  }
  if (window_len_seconds() <= 0) throw ConfigError("window length must be positive");
  if (window_step_seconds() <= 0) throw ConfigError("window step must be positive");
  if (window_step_seconds() > window_len_seconds())
    throw ConfigError("window step larger than window length would drop events");
  if (threshold_fraction <= 0.0 || threshold_fraction >= 1.0)
    throw ConfigError("threshold_fraction must be in (0,1)");
  if (max_window_pcs < 1) throw ConfigError("max_window_pcs must be positive");
  if (sample_variance_target <= 0.0 || sample_variance_target > 1.0)
    throw ConfigError("sample_variance_target must be in (0,1]");
  if (!common_components.use_scree && common_components.fixed_k < 1)
    throw ConfigError("common component count must be positive");
  if (cluster.percentile < 0.0 || cluster.percentile >= 100.0)
    throw ConfigError("percentile must be in [0,100)");
  if (cluster.min_cluster_size < 2) throw ConfigError("min_cluster_size must be at least 2");
  if (max_error_fraction < 0.0 || max_error_fraction > 1.0)
    throw ConfigError("max_error_fraction must be in [0,1]");
  if (graph.resolution <= 0.0) throw ConfigError("louvain resolution must be positive");
  if (report.top_k < 1) throw ConfigError("report top_k must be positive");
}

nlohmann::json RunConfig::effective_config() const {
  nlohmann::json j;
  j["seed"] = seed;
  j["samples"] = nlohmann::json::array();
  for (const auto& s : samples) {
    j["samples"].push_back({{"id", s.id},
                            {"start", s.start},
                            {"end", s.end},
                            {"files", s.files},
                            {"format", s.format == EventFormat::Jsonl ? "jsonl" : "csv"}});
  }
  j["active_users"] = active_users_path.empty() ? nlohmann::json(nullptr) : nlohmann::json(active_users_path);
  j["min_events"] = min_events;
  j["max_error_fraction"] = max_error_fraction;
  j["window_days"] = window_days;
  j["window_step_days"] = window_step_days;
  j["window_seconds"] = window_len_seconds();
  j["window_step_seconds"] = window_step_seconds();
  j["threshold_fraction"] = threshold_fraction;
  j["max_window_pcs"] = max_window_pcs;
  j["sample_variance_target"] = sample_variance_target;
  j["sample_max_pcs"] = sample_max_pcs;
  j["common_components"] =
      common_components.use_scree ? nlohmann::json("scree") : nlohmann::json(common_components.fixed_k);
  j["standardize"] = standardize;
  j["cluster"] = {{"percentile", cluster.percentile},
                  {"min_cluster_size", cluster.min_cluster_size},
                  {"min_samples", cluster.min_samples > 0 ? cluster.min_samples : cluster.min_cluster_size},
                  {"selection", cluster.selection == ClusterSelection::ExcessOfMass ? "eom" : "leaf"},
                  {"float32", cluster.float32}};
  j["graph"] = {{"level", graph.level == GraphLevel::Cluster ? "cluster" : "user"},
                {"weighted", graph.weighted},
                {"resolution", graph.resolution}};
  j["report"] = {{"top_k", report.top_k}};
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig cfg;
  cfg.seed = j.value("seed", std::uint64_t{0});
  if (!j.contains("samples") || !j["samples"].is_array())
    throw ConfigError("config needs a samples array");
  for (const auto& js : j["samples"]) {
    SampleConfig s;
    s.id = js.at("id").get<std::string>();
    s.start = js.at("start").is_string() ? parse_time_utc(js["start"].get<std::string>())
                                         : js["start"].get<std::int64_t>();
    s.end = js.at("end").is_string() ? parse_time_utc(js["end"].get<std::string>())
                                     : js["end"].get<std::int64_t>();
    if (js.contains("files")) s.files = js["files"].get<std::vector<std::string>>();
    const std::string fmt = js.value("format", "jsonl");
    if (fmt == "jsonl") {
      s.format = EventFormat::Jsonl;
    } else if (fmt == "csv") {
      s.format = EventFormat::Csv;
    } else {
      throw ConfigError("unknown event format '" + fmt + "'");
    }
    cfg.samples.push_back(std::move(s));
  }
  cfg.active_users_path = j.value("active_users", std::string{});
  cfg.min_events = j.value("min_events", std::uint64_t{0});
  cfg.max_error_fraction = j.value("max_error_fraction", 0.01);
  cfg.window_days = j.value("window_days", 7.0);
  cfg.window_step_days = j.value("window_step_days", cfg.window_days);
  cfg.threshold_fraction = j.value("threshold_fraction", 0.001);
  cfg.max_window_pcs = j.value("max_window_pcs", 10);
  cfg.sample_variance_target = j.value("sample_variance_target", 0.95);
  cfg.sample_max_pcs = j.value("sample_max_pcs", 0);
  if (j.contains("common_components") && !j["common_components"].is_string()) {
    cfg.common_components.use_scree = false;
    cfg.common_components.fixed_k = j["common_components"].get<int>();
  }
  cfg.standardize = j.value("standardize", false);
  if (j.contains("cluster")) {
    const auto& jc = j["cluster"];
    cfg.cluster.percentile = jc.value("percentile", 90.0);
    cfg.cluster.min_cluster_size = jc.value("min_cluster_size", 20);
    cfg.cluster.min_samples = jc.value("min_samples", 0);
    cfg.cluster.float32 = jc.value("float32", false);
    const std::string sel = jc.value("selection", "eom");
    if (sel == "eom") {
      cfg.cluster.selection = ClusterSelection::ExcessOfMass;
    } else if (sel == "leaf") {
      cfg.cluster.selection = ClusterSelection::Leaf;
    } else {
      throw ConfigError("unknown cluster selection '" + sel + "'");
    }
  }
  if (j.contains("graph")) {
    const auto& jg = j["graph"];
    const std::string level = jg.value("level", "cluster");
    if (level == "cluster") {
      cfg.graph.level = GraphLevel::Cluster;
    } else if (level == "user") {
      cfg.graph.level = GraphLevel::User;
    } else {
      throw ConfigError("unknown graph level '" + level + "'");
    }
    cfg.graph.weighted = jg.value("weighted", false);
    cfg.graph.resolution = jg.value("resolution", 1.0);
  }
  if (j.contains("report")) cfg.report.top_k = j["report"].value("top_k", 20);
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::from_json_file(const std::string& path) {
  nlohmann::json j = nlohmann::json::parse(read_text_file(path), nullptr, false);
  if (j.is_discarded()) throw ConfigError("config is not valid JSON: " + path);
  return from_json(j);
}

Stage stage_from_name(const std::string& name) {
  if (name == "ingest") return Stage::Ingest;
  if (name == "compose") return Stage::Compose;
  if (name == "cluster") return Stage::Cluster;
  if (name == "graph") return Stage::Graph;
  if (name == "report") return Stage::Report;
  throw ConfigError("unknown stage '" + name + "' (ingest|compose|cluster|graph|report)");
}

namespace {

struct Paths {
  fs::path root;

  fs::path manifest() const { return root / "manifest.json"; }
  fs::path events(const std::string& sid) const { return root / "events" / (sid + ".jsonl"); }
  fs::path matrix(const std::string& sid) const { return root / "matrix" / (sid + ".incidence"); }
  fs::path models_dir(const std::string& sid) const { return root / "models" / sid; }
  fs::path window_model(const std::string& sid, int idx) const {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "window_%05d.pcm", idx);
    return models_dir(sid) / buf;
  }
  fs::path sample_model(const std::string& sid) const { return models_dir(sid) / "sample.pcm"; }
  fs::path common_model() const { return root / "models" / "common.pcm"; }
  fs::path common_scales() const { return root / "models" / "common.scales.csv"; }
  fs::path stacked_scores(const std::string& sid) const { return root / "scores" / (sid + "_stacked.csv"); }
  fs::path sample_scores(const std::string& sid) const { return root / "scores" / (sid + "_sample.csv"); }
  fs::path common_scores() const { return root / "scores" / "common.csv"; }
  fs::path filtered_scores() const { return root / "scores" / "filtered.csv"; }
  fs::path rotations() const { return root / "rotations.csv"; }
  fs::path assignments() const { return root / "cluster" / "assignments.csv"; }
  fs::path condensed_tree() const { return root / "cluster" / "condensed_tree.csv"; }
  fs::path clusters_json() const { return root / "cluster" / "clusters.json"; }
  fs::path graphml() const { return root / "graph" / "graph.graphml"; }
  fs::path edges_csv() const { return root / "graph" / "edges.csv"; }
  fs::path communities_csv() const { return root / "graph" / "communities.csv"; }
  fs::path top_influencers() const { return root / "report" / "top_influencers.csv"; }
  fs::path cluster_summary() const { return root / "report" / "cluster_summary.json"; }
  fs::path pairplot() const { return root / "report" / "pairplot.csv"; }
  fs::path biplot() const { return root / "report" / "biplot.csv"; }
};

struct RunState {
  std::vector<std::vector<RetweetEvent>> events;  // per sample
  std::vector<SamplePipelineResult> samples;
  CommonSpace common;
  ScoreMatrix filtered;
  ClusterAssignment assignment;
  WeightedGraph graph;
  GraphPartition partition;
  bool graph_built = false;
};

class ArtifactSink {
 public:
  ArtifactSink(fs::path root, bool force) : root_(std::move(root)), force_(force) {}

  // every output goes through here so the overwrite guard and the manifest
  // hash list stay complete
  std::string claim(const fs::path& p) {
    if (!force_ && fs::exists(p))
      throw ConfigError("refusing to overwrite existing artifact " + p.string() + " (use --force)");
    fs::create_directories(p.parent_path());
    written_.push_back(p);
    return p.string();
  }

  nlohmann::json hashes() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& p : written_) {
      if (fs::is_regular_file(p))
        j[fs::relative(p, root_).generic_string()] = to_hex(fnv1a64_file(p.string()));
    }
    return j;
  }

 private:
  fs::path root_;
  bool force_;
  std::vector<fs::path> written_;
};

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

SampleSpec spec_of(const SampleConfig& s) {
  return SampleSpec{s.id, s.start, s.end, s.files};
}

void save_scales_csv(const Eigen::VectorXd& scales, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  out << "column,scale\n";
  for (Eigen::Index i = 0; i < scales.size(); ++i) out << i << ',' << format_double(scales[i]) << '\n';
}

Eigen::VectorXd load_scales_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open scales file: " + path);
  std::string line;
  std::getline(in, line);
  std::vector<double> vals;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto parts = split(line, ',');
    double v = 0.0;
    if (parts.size() != 2 || !parse_double(parts[1], v)) throw DataError("bad scales row: " + path);
    vals.push_back(v);
  }
  return Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

// ---- stage: ingest -------------------------------------------------------

void stage_ingest(const RunConfig& cfg, const Paths& paths, ArtifactSink& sink, RunState& state,
                  nlohmann::json& manifest) {
  std::unordered_set<std::string> active;
  if (!cfg.active_users_path.empty()) active = load_active_users(cfg.active_users_path);

  state.events.resize(cfg.samples.size());
  nlohmann::json jstage = nlohmann::json::object();
  for (std::size_t i = 0; i < cfg.samples.size(); ++i) {
    const auto& sc = cfg.samples[i];
    SampleSpec spec = spec_of(sc);
    std::vector<std::string> files = sc.files;
    std::sort(files.begin(), files.end());  // deterministic concatenation order

    std::vector<RetweetEvent> events;
    ParseStats stats;
    for (const auto& f : files) {
      std::ifstream in(f, std::ios::binary);
      if (!in) throw DataError("cannot open event file: " + f);
      auto part = parse_events(in, sc.format, spec, stats, cfg.max_error_fraction);
      events.insert(events.end(), std::make_move_iterator(part.begin()),
                    std::make_move_iterator(part.end()));
    }
    if (!active.empty()) {
      events = filter_persistent(events, active);
    } else if (cfg.min_events > 0) {
      events = filter_persistent(events, derive_active_users(events, cfg.min_events));
    }

    const auto out_path = sink.claim(paths.events(sc.id));
    std::ofstream out(out_path, std::ios::binary);
    write_events_jsonl(out, events);
    if (!out) throw DataError("write failed: " + out_path);

    log_event("ingest", "sample_done",
              {{"sample", sc.id},
               {"records", stats.records},
               {"events", events.size()},
               {"malformed", stats.malformed},
               {"self_retweets", stats.self_retweets},
               {"out_of_range", stats.out_of_range}});
    jstage[sc.id] = {{"records", stats.records},      {"parsed", stats.parsed},
                     {"malformed", stats.malformed},  {"self_retweets", stats.self_retweets},
                     {"out_of_range", stats.out_of_range}, {"events_after_filter", events.size()}};
    state.events[i] = std::move(events);
  }
  manifest["stages"]["ingest"] = std::move(jstage);
}

void load_ingest_outputs(const RunConfig& cfg, const Paths& paths, RunState& state) {
  state.events.resize(cfg.samples.size());
  for (std::size_t i = 0; i < cfg.samples.size(); ++i) {
    const auto& sc = cfg.samples[i];
    ParseStats stats;
    state.events[i] = read_events_jsonl(paths.events(sc.id).string(), spec_of(sc), stats, 1.0);
  }
}

// ---- stage: compose ------------------------------------------------------

void stage_compose(const RunConfig& cfg, const Paths& paths, ArtifactSink& sink, RunState& state,
                   int threads, nlohmann::json& manifest) {
  ComposeOptions opts;
  opts.max_window_pcs = cfg.max_window_pcs;
  opts.sample_variance_target = cfg.sample_variance_target;
  opts.sample_max_pcs = cfg.sample_max_pcs;
  opts.standardize = cfg.standardize;
  opts.threads = threads;

  nlohmann::json jstage = nlohmann::json::object();
  state.samples.clear();
  for (std::size_t i = 0; i < cfg.samples.size(); ++i) {
    const auto& sc = cfg.samples[i];
    auto res = run_sample_pipeline(state.events[i], spec_of(sc), cfg.window_len_seconds(),
                                   cfg.window_step_seconds(), cfg.threshold_fraction, opts, cfg.seed);

    const auto mpath = sink.claim(paths.matrix(sc.id));
    sink.claim(paths.matrix(sc.id).string() + ".rows");
    sink.claim(paths.matrix(sc.id).string() + ".cols");
    res.matrix.save(mpath);
    for (const auto& f : res.window_fits)
      save_pca_model(f.model, sink.claim(paths.window_model(sc.id, f.window.index)));
    save_pca_model(res.sample_model, sink.claim(paths.sample_model(sc.id)));
    save_scores_csv(res.stacked, sink.claim(paths.stacked_scores(sc.id)));
    save_scores_csv(res.sample_scores, sink.claim(paths.sample_scores(sc.id)));

    int window_pcs = 0;
    for (const auto& f : res.window_fits) window_pcs += f.model.components();
    const double covered = res.sample_model.variances.sum() / res.sample_model.total_variance;
    log_event("compose", "sample_done",
              {{"sample", sc.id},
               {"windows", res.windows.size()},
               {"fitted_windows", res.window_fits.size()},
               {"window_pcs", window_pcs},
               {"sample_pcs", res.sample_model.components()},
               {"variance_fraction", covered}});
    jstage["samples"][sc.id] = {{"rows", res.matrix.rows()},
                                {"cols", res.matrix.cols()},
                                {"nnz", res.matrix.nnz()},
                                {"windows", res.windows.size()},
                                {"fitted_windows", res.window_fits.size()},
                                {"window_pcs", window_pcs},
                                {"stacked_cols", res.stacked.components()},
                                {"sample_pcs", res.sample_model.components()},
                                {"variance_fraction", covered},
                                {"variance_shortfall", res.variance_shortfall}};
    state.samples.push_back(std::move(res));
  }

  const auto matched = match_users(state.samples);
  state.common = common_stage(state.samples, matched, cfg.common_components,
                              derive_seed(cfg.seed, "common"), cfg.standardize);
  save_pca_model(state.common.model, sink.claim(paths.common_model()));
  save_scores_csv(state.common.scores, sink.claim(paths.common_scores()));
  write_rotations_csv(state.common, sink.claim(paths.rotations()));
  if (state.common.col_scales.size() > 0)
    save_scales_csv(state.common.col_scales, sink.claim(paths.common_scales()));

  const double covered = state.common.model.variances.sum() / state.common.model.total_variance;
  log_event("compose", "common_done",
            {{"matched_users", matched.size()},
             {"common_pcs", state.common.model.components()},
             {"variance_fraction", covered}});
  jstage["common"] = {{"matched_users", matched.size()},
                      {"input_cols", state.common.model.input_cols()},
                      {"components", state.common.model.components()},
                      {"variance_fraction", covered}};
  manifest["stages"]["compose"] = std::move(jstage);
}

void load_compose_outputs(const RunConfig& cfg, const Paths& paths, RunState& state) {
  state.samples.clear();
  for (const auto& sc : cfg.samples) {
    SamplePipelineResult res;
    res.sample_id = sc.id;
    res.matrix = IncidenceMatrix::load(paths.matrix(sc.id).string());
    std::vector<fs::path> model_files;
    for (const auto& entry : fs::directory_iterator(paths.models_dir(sc.id))) {
      const auto name = entry.path().filename().string();
      if (name.rfind("window_", 0) == 0) model_files.push_back(entry.path());
    }
    std::sort(model_files.begin(), model_files.end());
    for (const auto& p : model_files) {
      WindowFit fit;
      fit.model = load_pca_model(p.string());
      fit.window = TimeWindow{sc.id, fit.model.provenance.window_index, 0, 0};
      res.window_fits.push_back(std::move(fit));
    }
    res.sample_model = load_pca_model(paths.sample_model(sc.id).string());
    res.sample_scores = load_scores_csv(paths.sample_scores(sc.id).string());
    state.samples.push_back(std::move(res));
  }
  state.common.model = load_pca_model(paths.common_model().string());
  state.common.scores = load_scores_csv(paths.common_scores().string());
  state.common.user_ids = state.common.scores.user_ids;
  for (const auto& label : state.common.model.col_labels) {
    auto slash = label.rfind('/');
    const auto prov = Provenance::parse(label.substr(0, slash));
    state.common.column_sample.push_back(prov.sample_id);
  }
  if (fs::exists(paths.common_scales()))
    state.common.col_scales = load_scales_csv(paths.common_scales().string());
}

// ---- stage: cluster ------------------------------------------------------

void stage_cluster(const RunConfig& cfg, const Paths& paths, ArtifactSink& sink, RunState& state,
                   int threads, nlohmann::json& manifest) {
  state.filtered = percentile_filter(state.common.scores, cfg.cluster.percentile);
  save_scores_csv(state.filtered, sink.claim(paths.filtered_scores()));

  const auto distances = cosine_distances(state.filtered, cfg.cluster.float32, threads);
  state.assignment =
      hdbscan(distances, cfg.cluster.min_cluster_size, cfg.cluster.min_samples, cfg.cluster.selection);

  save_assignments_csv(state.assignment, sink.claim(paths.assignments()));
  save_condensed_tree_csv(state.assignment, sink.claim(paths.condensed_tree()));

  int noise = 0;
  for (int l : state.assignment.labels)
    if (l == kNoise) ++noise;

  nlohmann::json jc;
  jc["input_users"] = state.common.scores.user_ids.size();
  jc["retained_users"] = state.filtered.user_ids.size();
  jc["clusters"] = state.assignment.n_clusters();
  jc["noise"] = noise;
  jc["sizes"] = state.assignment.sizes;
  jc["stabilities"] = state.assignment.stabilities;
  write_text_file(sink.claim(paths.clusters_json()), jc.dump(2) + "\n");

  log_event("cluster", "done",
            {{"retained", state.filtered.user_ids.size()},
             {"clusters", state.assignment.n_clusters()},
             {"noise", noise}});
  manifest["stages"]["cluster"] = jc;
}

void load_cluster_outputs(const RunConfig&, const Paths& paths, RunState& state) {
  state.filtered = load_scores_csv(paths.filtered_scores().string());
  state.assignment = load_assignments_csv(paths.assignments().string());
}

// ---- stage: graph --------------------------------------------------------

void stage_graph(const RunConfig& cfg, const Paths& paths, ArtifactSink& sink, RunState& state,
                 int threads, nlohmann::json& manifest) {
  std::vector<std::string> members;
  for (std::size_t i = 0; i < state.assignment.user_ids.size(); ++i)
    if (state.assignment.labels[i] != kNoise) members.push_back(state.assignment.user_ids[i]);

  nlohmann::json jg;
  if (members.empty()) {
    log_event("graph", "skipped", {{"reason", "no clustered users"}});
    state.graph = WeightedGraph{};
    state.partition = GraphPartition{};
    jg["skipped"] = "no clustered users";
  } else {
    std::vector<std::pair<std::string, const IncidenceMatrix*>> parts;
    for (const auto& s : state.samples) parts.emplace_back(s.sample_id, &s.matrix);
    const auto combined = IncidenceMatrix::union_columns(parts);
    state.graph = co_retweet_graph(combined, members, cfg.graph.level, &state.assignment,
                                   cfg.graph.weighted, threads);
    state.partition = louvain(state.graph, derive_seed(cfg.seed, "louvain"), cfg.graph.resolution);
    jg["nodes"] = state.graph.n();
    jg["edges"] = state.graph.edges.size();
    int n_comm = 0;
    for (int c : state.partition.community) n_comm = std::max(n_comm, c + 1);
    jg["communities"] = n_comm;
    jg["modularity"] = state.partition.modularity;
    log_event("graph", "done",
              {{"nodes", state.graph.n()},
               {"edges", state.graph.edges.size()},
               {"communities", n_comm},
               {"modularity", state.partition.modularity}});
  }
  state.graph_built = true;

  write_graphml(state.graph, sink.claim(paths.graphml()), &state.partition);
  write_edge_csv(state.graph, sink.claim(paths.edges_csv()));
  {
    std::ofstream out(sink.claim(paths.communities_csv()), std::ios::binary);
    out << "node,community\n";
    for (int v = 0; v < state.graph.n(); ++v)
      out << state.graph.nodes[static_cast<std::size_t>(v)] << ','
          << (v < static_cast<int>(state.partition.community.size())
                  ? state.partition.community[static_cast<std::size_t>(v)]
                  : 0)
          << '\n';
  }
  manifest["stages"]["graph"] = jg;
}

// ---- stage: report -------------------------------------------------------

void stage_report(const RunConfig& cfg, const Paths& paths, ArtifactSink& sink, RunState& state,
                  nlohmann::json& manifest) {
  {
    std::ofstream out(sink.claim(paths.top_influencers()), std::ios::binary);
    out << "component,sample,rank,influencer,weight\n";
    for (int c = 0; c < state.common.model.components(); ++c) {
      const auto top = top_influencers_per_component(state.samples, state.common, c, cfg.report.top_k);
      std::string last_sample;
      int rank = 0;
      for (const auto& r : top) {
        if (r.sample != last_sample) {
          last_sample = r.sample;
          rank = 0;
        }
        out << "PC" << c + 1 << ',' << r.sample << ',' << ++rank << ',' << r.influencer << ','
            << format_double(r.weight) << '\n';
      }
    }
  }

  std::map<std::string, const IncidenceMatrix*> matrices;
  for (const auto& s : state.samples) matrices[s.sample_id] = &s.matrix;
  const auto summaries = cluster_summary(state.assignment, matrices, cfg.report.top_k);
  write_cluster_summary_json(summaries, sink.claim(paths.cluster_summary()));

  export_pairplot(state.filtered, state.assignment, false, sink.claim(paths.pairplot()));

  if (state.common.model.components() >= 2) {
    write_biplot_csv(export_biplot(state.common, 0, 1), sink.claim(paths.biplot()));
  } else {
    log_event("report", "biplot_skipped", {{"reason", "fewer than 2 common components"}});
  }

  manifest["stages"]["report"] = {{"clusters_summarized", summaries.size()},
                                  {"components", state.common.model.components()}};
  log_event("report", "done", {{"clusters", summaries.size()}});
}

}  // namespace

RunResult run_pipeline(const RunConfig& cfg, const std::string& out_dir, int threads, bool force,
                       Stage from, Stage to) {
  cfg.validate();
  if (static_cast<int>(from) > static_cast<int>(to))
    throw ConfigError("from-stage comes after the final stage");

  Paths paths{fs::path(out_dir)};
  fs::create_directories(paths.root);
  if (!force && static_cast<int>(from) == 0 && fs::exists(paths.manifest()))
    throw ConfigError("run directory already holds a manifest (use --force to overwrite)");

  ArtifactSink sink(paths.root, force);
  RunState state;

  nlohmann::json manifest;
  manifest["tool"] = "stance";
  manifest["version"] = "0.1.0";
  manifest["seed"] = cfg.seed;
  manifest["threads"] = threads;
  manifest["effective_config"] = cfg.effective_config();
  manifest["config_hash"] = to_hex(fnv1a64(manifest["effective_config"].dump()));
  manifest["stages"] = nlohmann::json::object();
  nlohmann::json timings = nlohmann::json::object();

  // resume: pull exactly what the requested stages still need from disk
  if (from == Stage::Compose) {
    load_ingest_outputs(cfg, paths, state);
    log_event("ingest", "resumed_from_disk");
  }
  if (static_cast<int>(from) >= static_cast<int>(Stage::Cluster)) {
    load_compose_outputs(cfg, paths, state);
    log_event("compose", "resumed_from_disk");
  }
  if (static_cast<int>(from) >= static_cast<int>(Stage::Graph)) {
    load_cluster_outputs(cfg, paths, state);
    log_event("cluster", "resumed_from_disk");
  }

  const auto run_stage = [&](Stage stage, const std::string& name, auto&& fn) {
    if (static_cast<int>(stage) < static_cast<int>(from) || static_cast<int>(stage) > static_cast<int>(to))
      return;
    log_event(name, "start");
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    timings[name] = ms_since(t0);
  };

  run_stage(Stage::Ingest, "ingest", [&] { stage_ingest(cfg, paths, sink, state, manifest); });
  run_stage(Stage::Compose, "compose", [&] { stage_compose(cfg, paths, sink, state, threads, manifest); });
  run_stage(Stage::Cluster, "cluster", [&] { stage_cluster(cfg, paths, sink, state, threads, manifest); });
  run_stage(Stage::Graph, "graph", [&] { stage_graph(cfg, paths, sink, state, threads, manifest); });
  run_stage(Stage::Report, "report", [&] { stage_report(cfg, paths, sink, state, manifest); });

  manifest["timings_ms"] = std::move(timings);
  manifest["artifacts"] = sink.hashes();
  write_text_file(paths.manifest().string(), manifest.dump(2) + "\n");
  log_event("run", "done", {{"out", out_dir}});
  return RunResult{out_dir, std::move(manifest)};
}

}  // namespace stance
