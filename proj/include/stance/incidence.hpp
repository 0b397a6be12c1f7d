#pragma once

#include <Eigen/Sparse>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "stance/ingest.hpp"

namespace stance {

// Sparse binary retweeter×influencer matrix. Cells are deduplicated
// (retweeter, influencer) pairs scored 1; integer multiplicities ride along
// for reporting and co-retweet edge weights. Immutable after construction.
class IncidenceMatrix {
 public:
  struct Cell {
    std::int32_t row;
    std::int32_t col;
    std::int64_t count;
  };

  // rows/cols = distinct retweeters/influencers, sorted lexicographically
  static IncidenceMatrix build(const std::vector<RetweetEvent>& events);

  // Same, but against a fixed influencer (column) universe: events whose
  // influencer is not in `col_ids` contribute a row but no cell.
  static IncidenceMatrix build_with_columns(const std::vector<RetweetEvent>& events,
                                            std::vector<std::string> col_ids);

  // Keeps columns retweeted by at least ceil(fraction·|rows|) distinct
  // retweeters. Rows are never re-compacted.
  IncidenceMatrix threshold_influencers(double fraction = 0.001) const;

  // Column-wise union with namespaced column ids ("<tag>:<col>"); rows are
  // the sorted union of all row ids. Used for cross-sample co-retweet counts.
  static IncidenceMatrix union_columns(
      const std::vector<std::pair<std::string, const IncidenceMatrix*>>& parts);

  const std::vector<std::string>& row_ids() const { return row_ids_; }
  const std::vector<std::string>& col_ids() const { return col_ids_; }
  const std::vector<Cell>& cells() const { return cells_; }  // sorted by (row, col)
  std::size_t nnz() const { return cells_.size(); }
  std::int64_t rows() const { return static_cast<std::int64_t>(row_ids_.size()); }
  std::int64_t cols() const { return static_cast<std::int64_t>(col_ids_.size()); }

  std::optional<std::int32_t> row_index(const std::string& id) const;
  std::optional<std::int32_t> col_index(const std::string& id) const;

  // distinct-retweeter count per column
  std::vector<std::int64_t> column_degrees() const;

  Eigen::SparseMatrix<double> binary() const;

  // binary row as a dense 0/1 vector (for linear checks / reporting)
  Eigen::VectorXd dense_row(std::int32_t row) const;

  // Text format: "rows=<n> cols=<m> nnz=<k>" header + "rowid colid count"
  // triples; row/col id lists in sidecars <path>.rows / <path>.cols.
  // Round-trips bit-exactly.
  void save(const std::string& path) const;
  static IncidenceMatrix load(const std::string& path);

 private:
  void rebuild_index();

  std::vector<std::string> row_ids_;
  std::vector<std::string> col_ids_;
  std::vector<Cell> cells_;
  std::unordered_map<std::string, std::int32_t> row_index_;
  std::unordered_map<std::string, std::int32_t> col_index_;
};

}  // namespace stance
