#include "stance/compose.hpp"

#include <algorithm>
#include <memory>
#include <unordered_map>
#include <unordered_set>

#include "stance/error.hpp"
#include "stance/log.hpp"
#include "stance/parallel.hpp"
#include "stance/rng.hpp"

namespace stance {

std::vector<WindowFit> window_stage(const std::vector<WindowSlice>& windows,
                                    const std::vector<std::string>& col_ids, int max_pcs,
                                    std::uint64_t seed, int threads) {
  std::vector<std::unique_ptr<WindowFit>> fits(windows.size());
  parallel_for(windows.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& slice = windows[i];
      if (slice.empty()) continue;
      IncidenceMatrix wm = IncidenceMatrix::build_with_columns(slice.events, col_ids);
      if (wm.rows() < 2) {
        log_event("compose", "window_skipped",
                  {{"sample", slice.window.sample_id},
                   {"window", slice.window.index},
                   {"reason", "fewer than 2 active retweeters"}});
        continue;
      }
      const auto wseed = derive_seed(seed, slice.window.sample_id,
                                     static_cast<std::uint64_t>(slice.window.index));
      const int k = std::min<std::int64_t>({max_pcs, wm.rows() - 1, wm.cols()});
      PcaModel model;
      try {
        model = fit_pca(wm.binary(), k, wseed);
      } catch (const NumericError&) {
        log_event("compose", "window_skipped",
                  {{"sample", slice.window.sample_id},
                   {"window", slice.window.index},
                   {"reason", "degenerate (no centered variance)"}});
        continue;
      }
      model.provenance = Provenance::window(slice.window.sample_id, slice.window.index);
      model.col_labels = col_ids;
      auto fit = std::make_unique<WindowFit>();
      fit->window = slice.window;
      fit->model = std::move(model);
      fit->scores = transform(fit->model, wm.binary(), wm.row_ids());
      fits[i] = std::move(fit);
    }
  });

  std::vector<WindowFit> out;
  for (auto& f : fits)
    if (f) out.push_back(std::move(*f));
  return out;
}

ScoreMatrix stack_scores(const std::vector<ScoreMatrix>& per_window,
                         const std::vector<std::string>& user_universe, const Provenance& provenance) {
  std::unordered_map<std::string, Eigen::Index> row_of;
  row_of.reserve(user_universe.size());
  for (std::size_t i = 0; i < user_universe.size(); ++i)
    row_of[user_universe[i]] = static_cast<Eigen::Index>(i);

  Eigen::Index total_cols = 0;
  for (const auto& w : per_window) total_cols += w.scores.cols();

  ScoreMatrix out;
  out.user_ids = user_universe;
  out.provenance = provenance;
  out.scores = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(user_universe.size()), total_cols);
  out.pc_labels.reserve(static_cast<std::size_t>(total_cols));

  Eigen::Index col = 0;
  for (const auto& w : per_window) {
    std::unordered_set<std::string> seen;
    seen.reserve(w.user_ids.size());
    for (Eigen::Index r = 0; r < w.scores.rows(); ++r) {
      const auto& uid = w.user_ids[static_cast<std::size_t>(r)];
      if (!seen.insert(uid).second)
        throw DataError("duplicate user '" + uid + "' in window score matrix " + w.provenance.str());
      auto it = row_of.find(uid);
      if (it == row_of.end())
        throw DataError("window user '" + uid + "' missing from the stacking universe");
      out.scores.block(it->second, col, 1, w.scores.cols()) = w.scores.row(r);
    }
    for (const auto& l : w.pc_labels) out.pc_labels.push_back(l);
    col += w.scores.cols();
  }
  return out;
}

std::pair<PcaModel, ScoreMatrix> sample_stage(const ScoreMatrix& stacked, double variance_target,
                                              std::uint64_t seed, int max_pcs, bool* shortfall) {
  if (stacked.scores.rows() < 2) throw NumericError("sample stage needs at least 2 users");
  const int full = static_cast<int>(
      std::min<Eigen::Index>(stacked.scores.rows() - 1, stacked.scores.cols()));
  const int cap = max_pcs > 0 ? std::min(max_pcs, full) : full;

  PcaModel model = fit_pca(stacked.scores, cap, seed);
  model.provenance = stacked.provenance;
  model.col_labels = stacked.pc_labels;

  bool short_local = false;
  const int k = select_by_variance(model.variances, model.total_variance, variance_target, &short_local);
  if (shortfall) *shortfall = short_local;
  if (short_local)
    log_event("compose", "variance_shortfall",
              {{"provenance", model.provenance.str()},
               {"target", variance_target},
               {"covered", model.variances.sum() / model.total_variance}});

  model = model.truncated(k);
  ScoreMatrix scores = transform(model, stacked.scores, stacked.user_ids);
  return {std::move(model), std::move(scores)};
}

SamplePipelineResult run_sample_pipeline(const std::vector<RetweetEvent>& events, const SampleSpec& spec,
                                         std::int64_t window_len, std::int64_t step,
                                         double threshold_fraction, const ComposeOptions& opts,
                                         std::uint64_t seed) {
  SamplePipelineResult res;
  res.sample_id = spec.sample_id;
  res.matrix = IncidenceMatrix::build(events).threshold_influencers(threshold_fraction);
  res.windows = partition_windows(events, spec, window_len, step);
  res.window_fits = window_stage(res.windows, res.matrix.col_ids(), opts.max_window_pcs,
                                 derive_seed(seed, spec.sample_id), opts.threads);
  if (res.window_fits.empty())
    throw NumericError("sample '" + spec.sample_id + "': every window is degenerate");

  // stacking universe: users active in at least one fitted window
  std::vector<std::string> universe;
  {
    std::unordered_set<std::string> seen;
    for (const auto& f : res.window_fits)
      for (const auto& uid : f.scores.user_ids) seen.insert(uid);
    universe.assign(seen.begin(), seen.end());
    std::sort(universe.begin(), universe.end());
  }
  std::vector<ScoreMatrix> per_window;
  per_window.reserve(res.window_fits.size());
  for (const auto& f : res.window_fits) per_window.push_back(f.scores);
  res.stacked = stack_scores(per_window, universe, Provenance::sample(spec.sample_id));

  auto [model, scores] = sample_stage(res.stacked, opts.sample_variance_target,
                                      derive_seed(seed, spec.sample_id + "/sample"), opts.sample_max_pcs,
                                      &res.variance_shortfall);
  res.sample_model = std::move(model);
  res.sample_scores = std::move(scores);
  return res;
}

std::vector<std::string> match_users(const std::vector<SamplePipelineResult>& samples) {
  if (samples.size() < 2) throw ConfigError("matching users needs at least 2 samples");
  std::unordered_map<std::string, std::size_t> hits;
  for (const auto& s : samples)
    for (const auto& uid : s.sample_scores.user_ids) ++hits[uid];
  std::vector<std::string> matched;
  for (const auto& [uid, n] : hits)
    if (n == samples.size()) matched.push_back(uid);
  if (matched.empty()) throw DataError("no user appears in every sample; common space is empty");
  std::sort(matched.begin(), matched.end());
  return matched;
}

CommonSpace common_stage(const std::vector<SamplePipelineResult>& samples,
                         const std::vector<std::string>& matched_users, ComponentSelection selection,
                         std::uint64_t seed, bool standardize) {
  if (matched_users.empty()) throw DataError("common stage needs a non-empty matched user set");

  Eigen::Index total_cols = 0;
  for (const auto& s : samples) total_cols += s.sample_scores.scores.cols();

  CommonSpace cs;
  cs.user_ids = matched_users;
  Eigen::MatrixXd x(static_cast<Eigen::Index>(matched_users.size()), total_cols);
  std::vector<std::string> labels;
  labels.reserve(static_cast<std::size_t>(total_cols));

  Eigen::Index col = 0;
  for (const auto& s : samples) {
    std::unordered_map<std::string, Eigen::Index> row_of;
    row_of.reserve(s.sample_scores.user_ids.size());
    for (std::size_t i = 0; i < s.sample_scores.user_ids.size(); ++i)
      row_of[s.sample_scores.user_ids[i]] = static_cast<Eigen::Index>(i);
    for (std::size_t i = 0; i < matched_users.size(); ++i) {
      auto it = row_of.find(matched_users[i]);
      if (it == row_of.end()) throw DataError("matched user missing from sample " + s.sample_id);
      x.block(static_cast<Eigen::Index>(i), col, 1, s.sample_scores.scores.cols()) =
          s.sample_scores.scores.row(it->second);
    }
    for (const auto& l : s.sample_scores.pc_labels) {
      labels.push_back(l);
      cs.column_sample.push_back(s.sample_id);
    }
    col += s.sample_scores.scores.cols();
  }

  if (standardize) {
    cs.col_scales.resize(total_cols);
    const double n = static_cast<double>(x.rows());
    for (Eigen::Index j = 0; j < total_cols; ++j) {
      const double mean = x.col(j).mean();
      double sd = std::sqrt((x.col(j).array() - mean).square().sum() / std::max(n - 1.0, 1.0));
      if (sd <= 0.0) sd = 1.0;
      cs.col_scales[j] = sd;
      x.col(j) /= sd;
    }
  }

  const int full = static_cast<int>(std::min<Eigen::Index>(x.rows() - 1, x.cols()));
  PcaModel model = fit_pca(x, full, derive_seed(seed, "common"));
  model.provenance = Provenance::common();
  model.col_labels = labels;

  int k = model.components();
  if (selection.use_scree) {
    const auto scree = scree_select(model.variances);
    k = scree.k;
    if (scree.weak_elbow)
      log_event("compose", "weak_elbow", {{"k", k}, {"components_computed", model.components()}});
  } else {
    if (selection.fixed_k < 1) throw ConfigError("fixed component count must be positive");
    k = std::min(selection.fixed_k, model.components());
  }
  cs.model = model.truncated(k);
  cs.scores = transform(cs.model, x, matched_users);
  return cs;
}

Eigen::VectorXd compose_user_score(const std::vector<SamplePipelineResult>& samples,
                                   const CommonSpace& common, const std::string& user) {
  Eigen::VectorXd concat(common.model.input_cols());
  Eigen::Index at = 0;
  for (const auto& s : samples) {
    // raw binary row per window, restricted to the sample's surviving columns
    Eigen::VectorXd stacked_row(s.sample_model.input_cols());
    Eigen::Index wat = 0;
    for (const auto& f : s.window_fits) {
      const auto& slice = s.windows[static_cast<std::size_t>(f.window.index)];
      const int k = f.model.components();
      bool active = false;
      Eigen::VectorXd raw = Eigen::VectorXd::Zero(s.matrix.cols());
      for (const auto& ev : slice.events) {
        if (ev.retweeter != user) continue;
        active = true;  // active even if every target influencer was pruned
        if (auto c = s.matrix.col_index(ev.influencer)) raw[*c] = 1.0;
      }
      if (active) {
        stacked_row.segment(wat, k) = f.model.loadings.transpose() * (raw - f.model.means);
      } else {
        stacked_row.segment(wat, k).setZero();
      }
      wat += k;
    }
    const int ks = s.sample_model.components();
    concat.segment(at, ks) =
        s.sample_model.loadings.transpose() * (stacked_row - s.sample_model.means);
    at += ks;
  }
  if (common.col_scales.size() > 0) concat = concat.cwiseQuotient(common.col_scales);
  return common.model.loadings.transpose() * (concat - common.model.means);
}

}  // namespace stance
