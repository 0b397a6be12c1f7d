#include "stance/report.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

#include "stance/error.hpp"
#include "stance/util.hpp"

namespace stance {

Eigen::MatrixXd composed_influencer_weights(const SamplePipelineResult& sample, const CommonSpace& common) {
  // B: influencers × (Σ window PCs), block per window
  const Eigen::Index m = sample.matrix.cols();
  const Eigen::Index stacked_cols = sample.sample_model.input_cols();
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(m, stacked_cols);
  Eigen::Index at = 0;
  for (const auto& f : sample.window_fits) {
    b.block(0, at, m, f.model.components()) = f.model.loadings;
    at += f.model.components();
  }
  // rows of the common loadings belonging to this sample
  Eigen::Index row0 = 0;
  for (std::size_t i = 0; i < common.column_sample.size(); ++i) {
    if (common.column_sample[i] == sample.sample_id) {
      row0 = static_cast<Eigen::Index>(i);
      break;
    }
  }
  const Eigen::Index ks = sample.sample_model.components();
  Eigen::MatrixXd common_rows = common.model.loadings.middleRows(row0, ks);
  if (common.col_scales.size() > 0)
    common_rows.array().colwise() /= common.col_scales.segment(row0, ks).array();
  return b * (sample.sample_model.loadings * common_rows);
}

std::vector<InfluencerWeight> top_influencers_per_component(
    const std::vector<SamplePipelineResult>& samples, const CommonSpace& common, int component, int k) {
  if (component < 0 || component >= common.model.components())
    throw ConfigError("unknown common component index " + std::to_string(component));
  std::vector<InfluencerWeight> out;
  for (const auto& s : samples) {
    const Eigen::MatrixXd w = composed_influencer_weights(s, common);
    std::vector<std::size_t> order(static_cast<std::size_t>(w.rows()));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double wa = std::abs(w(static_cast<Eigen::Index>(a), component));
      const double wb = std::abs(w(static_cast<Eigen::Index>(b), component));
      if (wa != wb) return wa > wb;
      return s.matrix.col_ids()[a] < s.matrix.col_ids()[b];
    });
    const std::size_t top = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());
    for (std::size_t i = 0; i < top; ++i)
      out.push_back(InfluencerWeight{s.sample_id, s.matrix.col_ids()[order[i]],
                                     w(static_cast<Eigen::Index>(order[i]), component)});
  }
  return out;
}

void write_top_influencers_csv(const std::vector<InfluencerWeight>& rows, int component,
                               const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write report file: " + path);
  out << "component,sample,rank,influencer,weight\n";
  std::string last_sample;
  int rank = 0;
  for (const auto& r : rows) {
    if (r.sample != last_sample) {
      last_sample = r.sample;
      rank = 0;
    }
    out << "PC" << component + 1 << ',' << r.sample << ',' << ++rank << ',' << r.influencer << ','
        << format_double(r.weight) << '\n';
  }
  if (!out) throw DataError("write failed: " + path);
}

std::vector<ClusterSummary> cluster_summary(const ClusterAssignment& assignment,
                                            const std::map<std::string, const IncidenceMatrix*>& matrices,
                                            int top_k) {
  const int n_clusters = assignment.n_clusters();
  std::vector<ClusterSummary> out(static_cast<std::size_t>(n_clusters));
  for (int c = 0; c < n_clusters; ++c) {
    out[static_cast<std::size_t>(c)].cluster = c;
    out[static_cast<std::size_t>(c)].size = assignment.sizes[static_cast<std::size_t>(c)];
  }

  for (const auto& [sid, matrix] : matrices) {
    // per-cluster per-influencer retweet counts and distinct retweeters
    std::vector<int> cluster_of_row(static_cast<std::size_t>(matrix->rows()), kNoise);
    for (std::size_t i = 0; i < assignment.user_ids.size(); ++i) {
      if (assignment.labels[i] == kNoise) continue;
      if (auto r = matrix->row_index(assignment.user_ids[i]))
        cluster_of_row[static_cast<std::size_t>(*r)] = assignment.labels[i];
    }
    std::vector<std::unordered_map<std::int32_t, std::pair<std::int64_t, std::int64_t>>> stats(
        static_cast<std::size_t>(n_clusters));  // col -> (retweets, retweeters)
    std::vector<std::int64_t> cluster_events(static_cast<std::size_t>(n_clusters), 0);
    std::int64_t sample_events = 0;
    for (const auto& cell : matrix->cells()) {
      sample_events += cell.count;
      const int c = cluster_of_row[static_cast<std::size_t>(cell.row)];
      if (c == kNoise) continue;
      auto& entry = stats[static_cast<std::size_t>(c)][cell.col];
      entry.first += cell.count;
      entry.second += 1;
      cluster_events[static_cast<std::size_t>(c)] += cell.count;
    }
    for (int c = 0; c < n_clusters; ++c) {
      ClusterSampleStats s;
      std::vector<std::pair<std::int32_t, std::pair<std::int64_t, std::int64_t>>> items(
          stats[static_cast<std::size_t>(c)].begin(), stats[static_cast<std::size_t>(c)].end());
      std::sort(items.begin(), items.end(), [&](const auto& a, const auto& b) {
        if (a.second.first != b.second.first) return a.second.first > b.second.first;
        return matrix->col_ids()[static_cast<std::size_t>(a.first)] <
               matrix->col_ids()[static_cast<std::size_t>(b.first)];
      });
      const std::size_t top = std::min<std::size_t>(static_cast<std::size_t>(top_k), items.size());
      for (std::size_t i = 0; i < top; ++i) {
        s.top_influencers.emplace_back(matrix->col_ids()[static_cast<std::size_t>(items[i].first)],
                                       items[i].second.first);
        s.distinct_retweeters.push_back(items[i].second.second);
      }
      s.activity_share = sample_events > 0 ? static_cast<double>(cluster_events[static_cast<std::size_t>(c)]) /
                                                 static_cast<double>(sample_events)
                                           : 0.0;
      out[static_cast<std::size_t>(c)].per_sample[sid] = std::move(s);
    }
  }
  return out;
}

void write_cluster_summary_json(const std::vector<ClusterSummary>& summaries, const std::string& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& c : summaries) {
    nlohmann::json jc;
    jc["cluster"] = c.cluster;
    jc["size"] = c.size;
    for (const auto& [sid, s] : c.per_sample) {
      nlohmann::json js;
      js["activity_share"] = s.activity_share;
      js["top_influencers"] = nlohmann::json::array();
      for (std::size_t i = 0; i < s.top_influencers.size(); ++i) {
        js["top_influencers"].push_back({{"influencer", s.top_influencers[i].first},
                                         {"retweets", s.top_influencers[i].second},
                                         {"retweeters", s.distinct_retweeters[i]}});
      }
      jc["samples"][sid] = std::move(js);
    }
    j.push_back(std::move(jc));
  }
  write_text_file(path, j.dump(2) + "\n");
}

void export_pairplot(const ScoreMatrix& scores, const ClusterAssignment& assignment, bool drop_noise,
                     const std::string& path) {
  std::unordered_map<std::string, int> label_of;
  for (std::size_t i = 0; i < assignment.user_ids.size(); ++i)
    label_of[assignment.user_ids[i]] = assignment.labels[i];

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write pairplot file: " + path);
  out << "user_id,cluster";
  for (int c = 0; c < scores.components(); ++c) out << ",PC" << c + 1;
  out << '\n';
  for (Eigen::Index i = 0; i < scores.scores.rows(); ++i) {
    const auto& uid = scores.user_ids[static_cast<std::size_t>(i)];
    auto it = label_of.find(uid);
    const int label = it == label_of.end() ? kNoise : it->second;
    if (drop_noise && label == kNoise) continue;
    out << uid << ',';
    if (label == kNoise)
      out << "noise";
    else
      out << label;
    for (Eigen::Index j = 0; j < scores.scores.cols(); ++j) out << ',' << format_double(scores.scores(i, j));
    out << '\n';
  }
  if (!out) throw DataError("write failed: " + path);
}

std::vector<BiplotArrow> export_biplot(const CommonSpace& common, int pc_x, int pc_y) {
  if (pc_x < 0 || pc_x >= common.model.components() || pc_y < 0 || pc_y >= common.model.components())
    throw ConfigError("biplot axes out of range");
  std::vector<BiplotArrow> arrows;
  arrows.reserve(common.model.col_labels.size());
  for (std::size_t i = 0; i < common.model.col_labels.size(); ++i) {
    arrows.push_back(BiplotArrow{common.column_sample[i], common.model.col_labels[i],
                                 common.model.loadings(static_cast<Eigen::Index>(i), pc_x),
                                 common.model.loadings(static_cast<Eigen::Index>(i), pc_y)});
  }
  return arrows;
}

void write_biplot_csv(const std::vector<BiplotArrow>& arrows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write biplot file: " + path);
  out << "sample,sample_pc,x_loading,y_loading\n";
  for (const auto& a : arrows)
    out << a.sample << ',' << a.sample_pc << ',' << format_double(a.x) << ',' << format_double(a.y) << '\n';
  if (!out) throw DataError("write failed: " + path);
}

void write_rotations_csv(const CommonSpace& common, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write rotations file: " + path);
  out << "sample,sample_pc,common_pc,loading\n";
  for (std::size_t i = 0; i < common.model.col_labels.size(); ++i)
    for (int c = 0; c < common.model.components(); ++c)
      out << common.column_sample[i] << ',' << common.model.col_labels[i] << ",PC" << c + 1 << ','
          << format_double(common.model.loadings(static_cast<Eigen::Index>(i), c)) << '\n';
  if (!out) throw DataError("write failed: " + path);
}

}  // namespace stance
