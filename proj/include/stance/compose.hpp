#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stance/incidence.hpp"
#include "stance/ingest.hpp"
#include "stance/pca.hpp"

namespace stance {

struct WindowFit {
  TimeWindow window;
  PcaModel model;
  ScoreMatrix scores;  // rows = retweeters active in this window only
};

// One topical sample through the window → stacked → sample-PCA stages.
struct SamplePipelineResult {
  std::string sample_id;
  IncidenceMatrix matrix;            // thresholded sample incidence
  std::vector<WindowSlice> windows;  // all windows, empty ones included
  std::vector<WindowFit> window_fits;  // non-degenerate windows, in window order
  ScoreMatrix stacked;               // users × Σ window PCs, zero-filled
  PcaModel sample_model;
  ScoreMatrix sample_scores;
  bool variance_shortfall = false;
};

// The final cross-sample space plus the sample-PC rotations used for biplots.
struct CommonSpace {
  std::vector<std::string> user_ids;  // intersection across samples
  PcaModel model;                     // columns = concatenated sample PCs
  ScoreMatrix scores;
  // source sample of each model input column (parallel to model.col_labels)
  std::vector<std::string> column_sample;
  // per-column std deviations when the common fit was standardized; empty otherwise
  Eigen::VectorXd col_scales;
};

struct ComposeOptions {
  int max_window_pcs = 10;
  double sample_variance_target = 0.95;
  int sample_max_pcs = 0;  // 0 = up to full rank
  bool standardize = false;
  int threads = 1;
};

// Window PCAs over a shared sample column set. Windows with fewer than two
// active retweeters (or no centered variance) are skipped with a warning.
std::vector<WindowFit> window_stage(const std::vector<WindowSlice>& windows,
                                    const std::vector<std::string>& col_ids, int max_pcs,
                                    std::uint64_t seed, int threads = 1);

// Horizontal concatenation of window scores over a fixed user universe; a
// user absent from a window gets 0.0 in that window's columns.
ScoreMatrix stack_scores(const std::vector<ScoreMatrix>& per_window,
                         const std::vector<std::string>& user_universe, const Provenance& provenance);

std::pair<PcaModel, ScoreMatrix> sample_stage(const ScoreMatrix& stacked, double variance_target,
                                              std::uint64_t seed, int max_pcs = 0,
                                              bool* shortfall = nullptr);

// Full per-sample pipeline: windows → fits → stack → sample PCA.
SamplePipelineResult run_sample_pipeline(const std::vector<RetweetEvent>& events, const SampleSpec& spec,
                                         std::int64_t window_len, std::int64_t step,
                                         double threshold_fraction, const ComposeOptions& opts,
                                         std::uint64_t seed);

// Exact intersection of the samples' score-row user sets, ordered.
std::vector<std::string> match_users(const std::vector<SamplePipelineResult>& samples);

struct ComponentSelection {
  bool use_scree = true;
  int fixed_k = 0;
};

CommonSpace common_stage(const std::vector<SamplePipelineResult>& samples,
                         const std::vector<std::string>& matched_users, ComponentSelection selection,
                         std::uint64_t seed, bool standardize = false);

// Recomputes a matched user's common-space score straight from their raw
// binary incidence rows by composing the stored affine maps; the pipeline's
// stored score must agree within tight tolerance.
Eigen::VectorXd compose_user_score(const std::vector<SamplePipelineResult>& samples,
                                   const CommonSpace& common, const std::string& user);

}  // namespace stance
