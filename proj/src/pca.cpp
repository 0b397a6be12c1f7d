#include "stance/pca.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>

#include "stance/error.hpp"
#include "stance/log.hpp"
#include "stance/rng.hpp"
#include "stance/util.hpp"

static_assert(std::endian::native == std::endian::little, "model files are little-endian");

namespace stance {

std::string Provenance::str() const {
  switch (kind) {
    case Kind::Window:
      return "window:" + sample_id + ":" + std::to_string(window_index);
    case Kind::Sample:
      return "sample:" + sample_id;
    case Kind::Common:
      return "common";
  }
  return "common";
}

Provenance Provenance::parse(const std::string& s) {
  if (s == "common") return common();
  if (s.rfind("sample:", 0) == 0) return sample(s.substr(7));
  if (s.rfind("window:", 0) == 0) {
    auto pos = s.rfind(':');
    std::int64_t idx = 0;
    if (pos > 7 && parse_i64(std::string_view(s).substr(pos + 1), idx))
      return window(s.substr(7, pos - 7), static_cast<int>(idx));
  }
  throw DataError("bad provenance tag: '" + s + "'");
}

PcaModel PcaModel::truncated(int k) const {
  if (k < 0 || k > components()) throw NumericError("truncation beyond computed components");
  PcaModel out = *this;
  out.loadings = loadings.leftCols(k);
  out.variances = variances.head(k);
  return out;
}

namespace {

// Implicit column-centered covariance C = (A - 1 μᵀ)ᵀ (A - 1 μᵀ) / (n-1).
// Only matrix-block products against A and Aᵀ are ever formed.
class CovarianceOp {
 public:
  explicit CovarianceOp(const Eigen::SparseMatrix<double>& a) : sparse_(&a), dense_(nullptr) {
    init(static_cast<int>(a.rows()), static_cast<int>(a.cols()));
  }
  explicit CovarianceOp(const Eigen::MatrixXd& a) : sparse_(nullptr), dense_(&a) {
    init(static_cast<int>(a.rows()), static_cast<int>(a.cols()));
  }

  int rows() const { return n_; }
  int cols() const { return m_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  double total_variance() const { return total_variance_; }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
    // T = (A - 1 μᵀ) X
    Eigen::MatrixXd t;
    if (sparse_) {
      t = (*sparse_) * x;
    } else {
      t.noalias() = (*dense_) * x;
    }
    t.rowwise() -= (mean_.transpose() * x).eval();
    // S = (A - 1 μᵀ)ᵀ T = Aᵀ T - μ (1ᵀ T)
    Eigen::MatrixXd s;
    if (sparse_) {
      s = sparse_->transpose() * t;
    } else {
      s.noalias() = dense_->transpose() * t;
    }
    s.noalias() -= mean_ * t.colwise().sum();
    return s / static_cast<double>(n_ - 1);
  }

 private:
  void init(int n, int m) {
    n_ = n;
    m_ = m;
    Eigen::VectorXd colsum = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd colsumsq = Eigen::VectorXd::Zero(m);
    if (sparse_) {
      for (int j = 0; j < sparse_->outerSize(); ++j) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(*sparse_, j); it; ++it) {
          colsum[it.col()] += it.value();
          colsumsq[it.col()] += it.value() * it.value();
        }
      }
    } else {
      colsum = dense_->colwise().sum();
      colsumsq = dense_->array().square().colwise().sum();
    }
    mean_ = colsum / static_cast<double>(n);
    total_variance_ = 0.0;
    for (int j = 0; j < m; ++j) {
      double v = (colsumsq[j] - static_cast<double>(n) * mean_[j] * mean_[j]) / static_cast<double>(n - 1);
      total_variance_ += std::max(v, 0.0);
    }
  }

  const Eigen::SparseMatrix<double>* sparse_;
  const Eigen::MatrixXd* dense_;
  Eigen::VectorXd mean_;
  double total_variance_ = 0.0;
  int n_ = 0;
  int m_ = 0;
};

Eigen::MatrixXd thin_q(const Eigen::MatrixXd& z) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(z);
  return qr.householderQ() * Eigen::MatrixXd::Identity(z.rows(), z.cols());
}

void apply_sign_convention(Eigen::MatrixXd& loadings) {
  for (int c = 0; c < loadings.cols(); ++c) {
    int arg = 0;
    double best = -1.0;
    for (int r = 0; r < loadings.rows(); ++r) {
      double a = std::abs(loadings(r, c));
      if (a > best) {
        best = a;
        arg = r;
      }
    }
    if (loadings(arg, c) < 0.0) loadings.col(c) = -loadings.col(c);
  }
}

// Randomized subspace iteration with Rayleigh-Ritz extraction on the implicit
// covariance. Exact in one pass when the working block spans all columns.
PcaModel fit_impl(const CovarianceOp& op, int max_components, std::uint64_t seed, const FitOptions& opts) {
  const int n = op.rows();
  const int m = op.cols();
  if (n < 2 || m < 1) throw NumericError("pca needs >= 2 rows and >= 1 column");
  int k = std::min(max_components, std::min(n - 1, m));
  if (max_components < 1) throw NumericError("max_components must be positive");
  if (op.total_variance() <= 0.0) throw NumericError("degenerate input: all columns constant");

  const int block = std::min(m, k + opts.oversample);
  Rng rng(seed);
  Eigen::MatrixXd q(m, block);
  for (int j = 0; j < block; ++j)
    for (int i = 0; i < m; ++i) q(i, j) = rng.normal();
  q = thin_q(q);

  Eigen::MatrixXd ritz_vectors;
  Eigen::VectorXd ritz_values;
  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    Eigen::MatrixXd z = op.apply(q);
    Eigen::MatrixXd b = q.transpose() * z;
    b = 0.5 * (b + b.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b);
    if (es.info() != Eigen::Success) throw NumericError("small eigensolve failed");
    // ascending → descending
    Eigen::VectorXd theta = es.eigenvalues().reverse();
    Eigen::MatrixXd w = es.eigenvectors().rowwise().reverse();

    const double lambda_max = std::max(theta[0], 0.0);
    int k_eff = 0;
    while (k_eff < std::min(k, block) && theta[k_eff] > lambda_max * opts.rank_cutoff) ++k_eff;

    ritz_vectors.noalias() = q * w.leftCols(std::max(k_eff, 1));
    ritz_values = theta.head(std::max(k_eff, 1));

    if (k_eff == 0) throw NumericError("degenerate input: covariance has rank 0");

    double worst = 0.0;
    {
      Eigen::MatrixXd zw = z * w.leftCols(k_eff);
      for (int i = 0; i < k_eff; ++i) {
        double r = (zw.col(i) - theta[i] * ritz_vectors.col(i)).norm();
        worst = std::max(worst, r);
      }
    }
    const bool exact_block = block >= m;  // Rayleigh-Ritz over the full space
    if ((iter + 1 >= opts.min_iterations && worst <= opts.rel_tolerance * lambda_max) ||
        (exact_block && iter + 1 >= opts.min_iterations) || iter + 1 == opts.max_iterations) {
      if (iter + 1 == opts.max_iterations && worst > opts.rel_tolerance * lambda_max && !exact_block)
        log_event("pca", "iteration_cap",
                  {{"residual", worst / std::max(lambda_max, 1e-300)}, {"iterations", iter + 1}});
      ritz_vectors = ritz_vectors.leftCols(k_eff).eval();
      ritz_values = ritz_values.head(k_eff).eval();
      break;
    }
    q = thin_q(z);
  }

  apply_sign_convention(ritz_vectors);

  PcaModel model;
  model.means = op.mean();
  model.loadings = std::move(ritz_vectors);
  model.variances = ritz_values.cwiseMax(0.0);
  model.total_variance = op.total_variance();
  model.seed = seed;
  model.n_rows_fit = n;
  return model;
}

ScoreMatrix transform_impl(const PcaModel& model, Eigen::MatrixXd raw_scores,
                           std::vector<std::string> user_ids) {
  if (static_cast<int>(user_ids.size()) != raw_scores.rows())
    throw DataError("transform: user id count does not match row count");
  ScoreMatrix out;
  out.user_ids = std::move(user_ids);
  out.scores = std::move(raw_scores);
  out.scores.rowwise() -= (model.means.transpose() * model.loadings).eval();
  out.provenance = model.provenance;
  out.pc_labels.reserve(model.components());
  for (int c = 0; c < model.components(); ++c)
    out.pc_labels.push_back(model.provenance.str() + "/PC" + std::to_string(c + 1));
  return out;
}

}  // namespace

PcaModel fit_pca(const Eigen::SparseMatrix<double>& m, int max_components, std::uint64_t seed,
                 const FitOptions& opts) {
  return fit_impl(CovarianceOp(m), max_components, seed, opts);
}

PcaModel fit_pca(const Eigen::MatrixXd& m, int max_components, std::uint64_t seed, const FitOptions& opts) {
  return fit_impl(CovarianceOp(m), max_components, seed, opts);
}

ScoreMatrix transform(const PcaModel& model, const Eigen::SparseMatrix<double>& m,
                      std::vector<std::string> user_ids) {
  if (m.cols() != model.means.size()) throw DataError("transform: column count mismatch");
  return transform_impl(model, m * model.loadings, std::move(user_ids));
}

ScoreMatrix transform(const PcaModel& model, const Eigen::MatrixXd& m, std::vector<std::string> user_ids) {
  if (m.cols() != model.means.size()) throw DataError("transform: column count mismatch");
  return transform_impl(model, m * model.loadings, std::move(user_ids));
}

int select_by_variance(const Eigen::VectorXd& variances, double total_variance, double target,
                       bool* shortfall) {
  if (shortfall) *shortfall = false;
  if (variances.size() == 0) return 0;
  if (total_variance <= 0.0) return static_cast<int>(variances.size());
  double cum = 0.0;
  for (int i = 0; i < variances.size(); ++i) {
    cum += variances[i];
    if (cum / total_variance >= target) return i + 1;
  }
  if (shortfall) *shortfall = true;
  return static_cast<int>(variances.size());
}

ScreeResult scree_select(const Eigen::VectorXd& v) {
  ScreeResult res;
  const int n = static_cast<int>(v.size());
  if (n < 3) {
    res.k = n;
    res.weak_elbow = true;
    return res;
  }
  // second differences at interior points; k = number of components before
  // the max-curvature point
  int arg = 1;
  double best = -std::numeric_limits<double>::infinity();
  double sum_rel = 0.0;
  double best_rel = 0.0;
  for (int i = 1; i + 1 < n; ++i) {
    const double d = v[i - 1] - 2.0 * v[i] + v[i + 1];
    const double rel = v[i] > 0.0 ? d / v[i] : 0.0;
    sum_rel += std::abs(rel);
    if (d > best) {
      best = d;
      best_rel = std::abs(rel);
      arg = i;
    }
  }
  res.k = arg;
  const double mean_rel = sum_rel / static_cast<double>(n - 2);
  // a real elbow sticks out against the typical curvature of the spectrum;
  // geometric-decay spectra have constant relative curvature and get flagged
  res.weak_elbow = best <= 0.0 || best_rel < 2.0 * mean_rel;
  return res;
}

namespace {

void write_doubles(std::ofstream& out, const double* p, std::size_t count) {
  out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(count * sizeof(double)));
}

void read_doubles(std::ifstream& in, double* p, std::size_t count) {
  in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw DataError("model file truncated");
}

}  // namespace

void save_pca_model(const PcaModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write model file: " + path);
  out << "stance-pca-model v1\n";
  out << "provenance " << model.provenance.str() << "\n";
  out << "rows " << model.n_rows_fit << " cols " << model.input_cols() << " components "
      << model.components() << "\n";
  out << "seed " << model.seed << "\n";
  out << "collabels " << model.col_labels.size() << "\n";
  for (const auto& l : model.col_labels) out << l << "\n";
  out << "binary\n";
  write_doubles(out, model.means.data(), static_cast<std::size_t>(model.means.size()));
  write_doubles(out, model.loadings.data(), static_cast<std::size_t>(model.loadings.size()));
  write_doubles(out, model.variances.data(), static_cast<std::size_t>(model.variances.size()));
  write_doubles(out, &model.total_variance, 1);
  if (!out) throw DataError("write failed: " + path);
}

PcaModel load_pca_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file: " + path);
  std::string line;
  auto next_line = [&]() -> std::string& {
    if (!std::getline(in, line)) throw DataError("model file truncated: " + path);
    return line;
  };
  if (next_line() != "stance-pca-model v1") throw DataError("bad model header: " + path);

  PcaModel model;
  {
    auto& l = next_line();
    if (l.rfind("provenance ", 0) != 0) throw DataError("bad model header: " + path);
    model.provenance = Provenance::parse(l.substr(11));
  }
  std::int64_t rows = 0, cols = 0, comps = 0, nlabels = 0;
  {
    auto parts = split(next_line(), ' ');
    if (parts.size() != 6 || parts[0] != "rows" || parts[2] != "cols" || parts[4] != "components" ||
        !parse_i64(parts[1], rows) || !parse_i64(parts[3], cols) || !parse_i64(parts[5], comps))
      throw DataError("bad model dims: " + path);
  }
  {
    auto parts = split(next_line(), ' ');
    std::uint64_t seed = 0;
    if (parts.size() != 2 || parts[0] != "seed" || !parse_u64(parts[1], seed))
      throw DataError("bad model seed: " + path);
    model.seed = seed;
  }
  {
    auto parts = split(next_line(), ' ');
    if (parts.size() != 2 || parts[0] != "collabels" || !parse_i64(parts[1], nlabels))
      throw DataError("bad model labels: " + path);
  }
  model.col_labels.reserve(static_cast<std::size_t>(nlabels));
  for (std::int64_t i = 0; i < nlabels; ++i) model.col_labels.push_back(next_line());
  if (next_line() != "binary") throw DataError("bad model binary marker: " + path);

  model.n_rows_fit = static_cast<int>(rows);
  model.means.resize(cols);
  model.loadings.resize(cols, comps);
  model.variances.resize(comps);
  read_doubles(in, model.means.data(), static_cast<std::size_t>(cols));
  read_doubles(in, model.loadings.data(), static_cast<std::size_t>(cols * comps));
  read_doubles(in, model.variances.data(), static_cast<std::size_t>(comps));
  read_doubles(in, &model.total_variance, 1);
  return model;
}

void save_scores_csv(const ScoreMatrix& scores, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write scores file: " + path);
  out << "user_id";
  for (const auto& l : scores.pc_labels) out << ',' << l;
  out << '\n';
  for (Eigen::Index i = 0; i < scores.scores.rows(); ++i) {
    out << scores.user_ids[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < scores.scores.cols(); ++j) out << ',' << format_double(scores.scores(i, j));
    out << '\n';
  }
  if (!out) throw DataError("write failed: " + path);
}

ScoreMatrix load_scores_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open scores file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty scores file: " + path);
  auto header = split(line, ',');
  if (header.empty() || header[0] != "user_id") throw DataError("bad scores header: " + path);

  ScoreMatrix out;
  out.pc_labels.assign(header.begin() + 1, header.end());
  const std::size_t k = out.pc_labels.size();
  if (k > 0) {
    // provenance is recoverable from the first pc label ("<prov>/PC1")
    auto slash = out.pc_labels[0].rfind('/');
    if (slash != std::string::npos) out.provenance = Provenance::parse(out.pc_labels[0].substr(0, slash));
  }
  std::vector<double> values;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto parts = split(line, ',');
    if (parts.size() != k + 1) throw DataError("bad scores row in " + path);
    out.user_ids.push_back(parts[0]);
    for (std::size_t j = 0; j < k; ++j) {
      double v = 0.0;
      if (!parse_double(parts[j + 1], v)) throw DataError("bad score value in " + path);
      values.push_back(v);
    }
  }
  out.scores.resize(static_cast<Eigen::Index>(out.user_ids.size()), static_cast<Eigen::Index>(k));
  for (Eigen::Index i = 0; i < out.scores.rows(); ++i)
    for (Eigen::Index j = 0; j < out.scores.cols(); ++j)
      out.scores(i, j) = values[static_cast<std::size_t>(i) * k + static_cast<std::size_t>(j)];
  return out;
}

}  // namespace stance
