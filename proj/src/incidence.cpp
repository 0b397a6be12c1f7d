#include "stance/incidence.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "stance/error.hpp"
#include "stance/util.hpp"

namespace stance {

namespace {

std::vector<std::string> sorted_unique(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace

void IncidenceMatrix::rebuild_index() {
  row_index_.clear();
  col_index_.clear();
  row_index_.reserve(row_ids_.size());
  col_index_.reserve(col_ids_.size());
  for (std::size_t i = 0; i < row_ids_.size(); ++i) row_index_[row_ids_[i]] = static_cast<std::int32_t>(i);
  for (std::size_t i = 0; i < col_ids_.size(); ++i) col_index_[col_ids_[i]] = static_cast<std::int32_t>(i);
}

IncidenceMatrix IncidenceMatrix::build(const std::vector<RetweetEvent>& events) {
  if (events.empty()) throw DataError("cannot build an incidence matrix from zero events");
  std::vector<std::string> rows;
  std::vector<std::string> cols;
  rows.reserve(events.size());
  cols.reserve(events.size());
  for (const auto& ev : events) {
    rows.push_back(ev.retweeter);
    cols.push_back(ev.influencer);
  }
  IncidenceMatrix m;
  m.row_ids_ = sorted_unique(std::move(rows));
  m.col_ids_ = sorted_unique(std::move(cols));
  m.rebuild_index();

  std::map<std::pair<std::int32_t, std::int32_t>, std::int64_t> counts;
  for (const auto& ev : events) {
    auto r = m.row_index_.at(ev.retweeter);
    auto c = m.col_index_.at(ev.influencer);
    ++counts[{r, c}];
  }
  m.cells_.reserve(counts.size());
  for (const auto& [rc, n] : counts) m.cells_.push_back(Cell{rc.first, rc.second, n});
  return m;
}

IncidenceMatrix IncidenceMatrix::build_with_columns(const std::vector<RetweetEvent>& events,
                                                    std::vector<std::string> col_ids) {
  if (events.empty()) throw DataError("cannot build an incidence matrix from zero events");
  std::vector<std::string> rows;
  rows.reserve(events.size());
  for (const auto& ev : events) rows.push_back(ev.retweeter);

  IncidenceMatrix m;
  m.row_ids_ = sorted_unique(std::move(rows));
  m.col_ids_ = std::move(col_ids);
  m.rebuild_index();

  std::map<std::pair<std::int32_t, std::int32_t>, std::int64_t> counts;
  for (const auto& ev : events) {
    auto c = m.col_index_.find(ev.influencer);
    if (c == m.col_index_.end()) continue;  // influencer pruned at the sample level
    ++counts[{m.row_index_.at(ev.retweeter), c->second}];
  }
  m.cells_.reserve(counts.size());
  for (const auto& [rc, n] : counts) m.cells_.push_back(Cell{rc.first, rc.second, n});
  return m;
}

IncidenceMatrix IncidenceMatrix::union_columns(
    const std::vector<std::pair<std::string, const IncidenceMatrix*>>& parts) {
  if (parts.empty()) throw DataError("cannot union zero matrices");
  IncidenceMatrix out;
  {
    std::vector<std::string> rows;
    for (const auto& [tag, m] : parts) {
      (void)tag;
      rows.insert(rows.end(), m->row_ids_.begin(), m->row_ids_.end());
    }
    out.row_ids_ = sorted_unique(std::move(rows));
  }
  for (const auto& [tag, m] : parts)
    for (const auto& id : m->col_ids_) out.col_ids_.push_back(tag + ":" + id);
  out.rebuild_index();

  std::int32_t col_offset = 0;
  for (const auto& [tag, m] : parts) {
    (void)tag;
    for (const auto& cell : m->cells_) {
      const auto row = out.row_index_.at(m->row_ids_[static_cast<std::size_t>(cell.row)]);
      out.cells_.push_back(Cell{row, static_cast<std::int32_t>(cell.col + col_offset), cell.count});
    }
    col_offset += static_cast<std::int32_t>(m->cols());
  }
  std::sort(out.cells_.begin(), out.cells_.end(), [](const Cell& a, const Cell& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  return out;
}

IncidenceMatrix IncidenceMatrix::threshold_influencers(double fraction) const {
  if (fraction <= 0.0 || fraction >= 1.0) throw ConfigError("influencer threshold fraction must be in (0,1)");
  // "at least fraction of the user set": >= with a ceiling on the fractional
  // count; the epsilon guards against 0.001*1000 style rounding.
  const auto required = static_cast<std::int64_t>(
      std::ceil(fraction * static_cast<double>(row_ids_.size()) - 1e-9));
  const auto degrees = column_degrees();

  std::vector<std::int32_t> remap(col_ids_.size(), -1);
  std::vector<std::string> kept_cols;
  for (std::size_t c = 0; c < col_ids_.size(); ++c) {
    if (degrees[c] >= required) {
      remap[c] = static_cast<std::int32_t>(kept_cols.size());
      kept_cols.push_back(col_ids_[c]);
    }
  }
  if (kept_cols.empty())
    throw NumericError("influencer threshold removed every column (fraction=" + format_double(fraction) + ")");

  IncidenceMatrix out;
  out.row_ids_ = row_ids_;
  out.col_ids_ = std::move(kept_cols);
  out.rebuild_index();
  out.cells_.reserve(cells_.size());
  for (const auto& cell : cells_) {
    if (remap[static_cast<std::size_t>(cell.col)] >= 0)
      out.cells_.push_back(Cell{cell.row, remap[static_cast<std::size_t>(cell.col)], cell.count});
  }
  return out;
}

std::optional<std::int32_t> IncidenceMatrix::row_index(const std::string& id) const {
  auto it = row_index_.find(id);
  if (it == row_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::int32_t> IncidenceMatrix::col_index(const std::string& id) const {
  auto it = col_index_.find(id);
  if (it == col_index_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::int64_t> IncidenceMatrix::column_degrees() const {
  std::vector<std::int64_t> deg(col_ids_.size(), 0);
  for (const auto& cell : cells_) ++deg[static_cast<std::size_t>(cell.col)];
  return deg;
}

Eigen::SparseMatrix<double> IncidenceMatrix::binary() const {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(cells_.size());
  for (const auto& cell : cells_) trips.emplace_back(cell.row, cell.col, 1.0);
  Eigen::SparseMatrix<double> m(rows(), cols());
  m.setFromTriplets(trips.begin(), trips.end());
  m.makeCompressed();
  return m;
}

Eigen::VectorXd IncidenceMatrix::dense_row(std::int32_t row) const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(cols());
  auto lo = std::lower_bound(cells_.begin(), cells_.end(), row,
                             [](const Cell& c, std::int32_t r) { return c.row < r; });
  for (auto it = lo; it != cells_.end() && it->row == row; ++it) v[it->col] = 1.0;
  return v;
}

void IncidenceMatrix::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write matrix file: " + path);
  out << "rows=" << row_ids_.size() << " cols=" << col_ids_.size() << " nnz=" << cells_.size() << "\n";
  for (const auto& cell : cells_)
    out << row_ids_[static_cast<std::size_t>(cell.row)] << ' ' << col_ids_[static_cast<std::size_t>(cell.col)]
        << ' ' << cell.count << "\n";
  if (!out) throw DataError("write failed: " + path);

  std::ofstream rows_out(path + ".rows", std::ios::binary);
  for (const auto& id : row_ids_) rows_out << id << "\n";
  std::ofstream cols_out(path + ".cols", std::ios::binary);
  for (const auto& id : col_ids_) cols_out << id << "\n";
  if (!rows_out || !cols_out) throw DataError("write failed: " + path + " sidecars");
}

IncidenceMatrix IncidenceMatrix::load(const std::string& path) {
  auto read_ids = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot open matrix sidecar: " + p);
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line)) ids.push_back(line);
    return ids;
  };

  IncidenceMatrix m;
  m.row_ids_ = read_ids(path + ".rows");
  m.col_ids_ = read_ids(path + ".cols");
  m.rebuild_index();

  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open matrix file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty matrix file: " + path);
  std::int64_t rows = 0, cols = 0, nnz = 0;
  {
    auto parts = split(line, ' ');
    if (parts.size() != 3 || parts[0].rfind("rows=", 0) != 0 || parts[1].rfind("cols=", 0) != 0 ||
        parts[2].rfind("nnz=", 0) != 0 || !parse_i64(std::string_view(parts[0]).substr(5), rows) ||
        !parse_i64(std::string_view(parts[1]).substr(5), cols) ||
        !parse_i64(std::string_view(parts[2]).substr(4), nnz))
      throw DataError("bad matrix header: " + path);
  }
  if (rows != m.rows() || cols != m.cols())
    throw DataError("matrix header does not match sidecar id lists: " + path);

  m.cells_.reserve(static_cast<std::size_t>(nnz));
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    // ids may not contain spaces; the trailing field is the count
    auto last = line.rfind(' ');
    auto mid = line.rfind(' ', last - 1);
    if (last == std::string::npos || mid == std::string::npos) throw DataError("bad matrix cell: " + path);
    std::int64_t count = 0;
    if (!parse_i64(std::string_view(line).substr(last + 1), count))
      throw DataError("bad matrix cell count: " + path);
    auto r = m.row_index_.find(line.substr(0, mid));
    auto c = m.col_index_.find(line.substr(mid + 1, last - mid - 1));
    if (r == m.row_index_.end() || c == m.col_index_.end())
      throw DataError("matrix cell references unknown id: " + path);
    m.cells_.push_back(Cell{r->second, c->second, count});
  }
  if (static_cast<std::int64_t>(m.cells_.size()) != nnz)
    throw DataError("matrix nnz mismatch: " + path);
  return m;
}

}  // namespace stance
