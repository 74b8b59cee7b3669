#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "shallowtree/error.hpp"

namespace shallowtree {

enum class Task { kClassification, kRegression };

inline const char* to_string(Task task) {
  return task == Task::kClassification ? "classification" : "regression";
}

/// Sorted list of sample ids (0-based).
using IndexSet = std::vector<std::uint32_t>;

inline IndexSet all_samples(std::size_t n) {
  IndexSet out(n);
  std::iota(out.begin(), out.end(), 0u);
  return out;
}

/// Immutable table of finite feature values plus targets.
///
/// Features are stored column-major so per-feature scans are contiguous.
/// Classification labels are dense class ids 0..C-1 in first-appearance order
/// of the raw labels; `label_table()[c]` recovers the raw text.
class Dataset {
 public:
  static Dataset classification(const std::vector<std::vector<double>>& rows,
                                const std::vector<std::string>& raw_labels,
                                std::vector<std::string> feature_names = {}) {
    Dataset ds = from_rows(rows, std::move(feature_names));
    ds.task_ = Task::kClassification;
    require_rows(ds, raw_labels.size());
    std::unordered_map<std::string, int> seen;
    ds.labels_.reserve(raw_labels.size());
    for (const auto& raw : raw_labels) {
      auto [it, inserted] = seen.emplace(raw, static_cast<int>(ds.label_table_.size()));
      if (inserted) ds.label_table_.push_back(raw);
      ds.labels_.push_back(it->second);
    }
    ds.target_names_ = {"label"};
    return ds;
  }

  static Dataset classification(const std::vector<std::vector<double>>& rows,
                                const std::vector<int>& raw_labels) {
    std::vector<std::string> text;
    text.reserve(raw_labels.size());
    for (int v : raw_labels) text.push_back(std::to_string(v));
    return classification(rows, text);
  }

  /// `targets` is n rows of m values each.
  static Dataset regression(const std::vector<std::vector<double>>& rows,
                            const std::vector<std::vector<double>>& targets,
                            std::vector<std::string> feature_names = {}) {
    Dataset ds = from_rows(rows, std::move(feature_names));
    ds.task_ = Task::kRegression;
    require_rows(ds, targets.size());
    ds.m_ = targets.empty() ? 0 : targets.front().size();
    if (ds.m_ == 0) throw DataError("regression targets need at least one column");
    ds.targets_.reserve(ds.n_ * ds.m_);
    for (const auto& row : targets) {
      if (row.size() != ds.m_) throw DataError("ragged regression target rows");
      for (double v : row) {
        if (!std::isfinite(v)) throw DataError("non-finite regression target");
        ds.targets_.push_back(v);
      }
    }
    for (std::size_t k = 0; k < ds.m_; ++k) ds.target_names_.push_back("y" + std::to_string(k));
    return ds;
  }

  Task task() const { return task_; }
  bool is_classification() const { return task_ == Task::kClassification; }
  std::size_t n() const { return n_; }
  std::size_t p() const { return p_; }
  /// Target dimension (regression only).
  std::size_t m() const { return m_; }
  /// Class count (classification only).
  std::size_t num_classes() const { return label_table_.size(); }

  double x(std::size_t i, std::size_t f) const { return features_[f * n_ + i]; }
  std::span<const double> column(std::size_t f) const {
    return {features_.data() + f * n_, n_};
  }
  std::vector<double> row(std::size_t i) const {
    std::vector<double> out(p_);
    for (std::size_t f = 0; f < p_; ++f) out[f] = x(i, f);
    return out;
  }
  int label(std::size_t i) const { return labels_[i]; }
  std::span<const double> target(std::size_t i) const { return {targets_.data() + i * m_, m_}; }

  const std::vector<int>& labels() const { return labels_; }
  const std::vector<std::string>& label_table() const { return label_table_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  const std::vector<std::string>& target_names() const { return target_names_; }

  void set_target_names(std::vector<std::string> names) { target_names_ = std::move(names); }

  /// Same targets, new feature matrix (n rows of any width).
  Dataset with_features(const std::vector<std::vector<double>>& rows,
                        std::vector<std::string> names) const {
    Dataset out = from_rows(rows, std::move(names));
    require_rows(out, n_);
    out.task_ = task_;
    out.m_ = m_;
    out.labels_ = labels_;
    out.label_table_ = label_table_;
    out.targets_ = targets_;
    out.target_names_ = target_names_;
    return out;
  }

  /// Rows selected by `ids`, in the given order.
  Dataset subset(std::span<const std::uint32_t> ids) const {
    std::vector<std::vector<double>> rows;
    rows.reserve(ids.size());
    for (auto i : ids) rows.push_back(row(i));
    Dataset out = from_rows(rows, feature_names_);
    out.task_ = task_;
    out.m_ = m_;
    out.label_table_ = label_table_;
    out.target_names_ = target_names_;
    for (auto i : ids) {
      if (is_classification()) {
        out.labels_.push_back(labels_[i]);
      } else {
        auto t = target(i);
        out.targets_.insert(out.targets_.end(), t.begin(), t.end());
      }
    }
    return out;
  }

 private:
  static Dataset from_rows(const std::vector<std::vector<double>>& rows,
                           std::vector<std::string> names) {
    Dataset ds;
    ds.n_ = rows.size();
    if (ds.n_ == 0) throw DataError("empty dataset");
    ds.p_ = rows.front().size();
    if (ds.p_ == 0) throw DataError("dataset has no feature columns");
    ds.features_.assign(ds.n_ * ds.p_, 0.0);
    for (std::size_t i = 0; i < ds.n_; ++i) {
      if (rows[i].size() != ds.p_) throw DataError("ragged feature rows at row " + std::to_string(i));
      for (std::size_t f = 0; f < ds.p_; ++f) {
        double v = rows[i][f];
        if (!std::isfinite(v)) {
          throw DataError("non-finite feature value at row " + std::to_string(i) + ", column " +
                          std::to_string(f));
        }
        ds.features_[f * ds.n_ + i] = v;
      }
    }
    if (names.empty()) {
      for (std::size_t f = 0; f < ds.p_; ++f) names.push_back("x" + std::to_string(f));
    }
    if (names.size() != ds.p_) throw DataError("feature name count does not match columns");
    ds.feature_names_ = std::move(names);
    return ds;
  }

  static void require_rows(const Dataset& ds, std::size_t count) {
    if (count != ds.n_) throw DataError("target count does not match row count");
  }

  Task task_ = Task::kClassification;
  std::size_t n_ = 0;
  std::size_t p_ = 0;
  std::size_t m_ = 0;
  std::vector<double> features_;
  std::vector<double> targets_;
  std::vector<int> labels_;
  std::vector<std::string> label_table_;
  std::vector<std::string> feature_names_;
  std::vector<std::string> target_names_;
};

/// Per-feature sort order, distinct values and candidate thresholds.
///
/// Threshold index t (0 <= t <= u) denotes the midpoint between the t-th and
/// (t+1)-th distinct values; t = 0 and t = u are the -inf / +inf sentinels.
/// A sample with (1-based) rank r goes left of threshold t iff r <= t.
struct FeatureColumn {
  std::vector<std::uint32_t> sorted;   // samples by ascending value, ties by id
  std::vector<double> unique;          // strictly increasing distinct values
  std::vector<std::uint32_t> rank;     // rank[i] in 1..u
  std::vector<std::uint32_t> count_le; // count_le[t] = #samples with rank <= t
  std::vector<double> midpoints;       // size u+1, sentinels at both ends

  std::uint32_t u() const { return static_cast<std::uint32_t>(unique.size()); }

  /// Samples of the full dataset with rank in (a, b], in ascending order of this feature.
  std::span<const std::uint32_t> slice(std::uint32_t a, std::uint32_t b) const {
    return {sorted.data() + count_le[a], sorted.data() + count_le[b]};
  }
};

class FeatureIndex {
 public:
  FeatureIndex() = default;
  explicit FeatureIndex(const Dataset& ds) : n_(ds.n()) {
    columns_.reserve(ds.p());
    for (std::size_t f = 0; f < ds.p(); ++f) columns_.push_back(build(ds.column(f)));
  }

  std::size_t n() const { return n_; }
  std::size_t p() const { return columns_.size(); }
  const FeatureColumn& operator[](std::size_t f) const { return columns_[f]; }
  std::uint32_t u(std::size_t f) const { return columns_[f].u(); }
  std::uint32_t max_u() const {
    std::uint32_t best = 0;
    for (const auto& c : columns_) best = std::max(best, c.u());
    return best;
  }

 private:
  static FeatureColumn build(std::span<const double> values) {
    FeatureColumn col;
    const auto n = values.size();
    col.sorted.resize(n);
    std::iota(col.sorted.begin(), col.sorted.end(), 0u);
    std::stable_sort(col.sorted.begin(), col.sorted.end(),
                     [&](std::uint32_t l, std::uint32_t r) { return values[l] < values[r]; });
    col.rank.assign(n, 0);
    for (std::size_t k = 0; k < n; ++k) {
      double v = values[col.sorted[k]];
      if (col.unique.empty() || col.unique.back() != v) col.unique.push_back(v);
      col.rank[col.sorted[k]] = static_cast<std::uint32_t>(col.unique.size());
    }
    const auto u = col.unique.size();
    col.count_le.assign(u + 1, 0);
    for (auto r : col.rank) ++col.count_le[r];
    for (std::size_t t = 1; t <= u; ++t) col.count_le[t] += col.count_le[t - 1];
    col.midpoints.resize(u + 1);
    col.midpoints[0] = -std::numeric_limits<double>::infinity();
    col.midpoints[u] = std::numeric_limits<double>::infinity();
    for (std::size_t t = 1; t < u; ++t) col.midpoints[t] = (col.unique[t - 1] + col.unique[t]) / 2.0;
    return col;
  }

  std::size_t n_ = 0;
  std::vector<FeatureColumn> columns_;
};

inline FeatureIndex build_feature_index(const Dataset& ds) { return FeatureIndex(ds); }

/// Members of `I` whose value of feature f lies between midpoints a and b,
/// i.e. whose rank t satisfies a < t <= b.
inline IndexSet subset_range(const FeatureIndex& fi, std::span<const std::uint32_t> I,
                             std::size_t f, std::uint32_t a, std::uint32_t b) {
  require(f < fi.p(), "feature out of range");
  require(a <= b && b <= fi.u(f), "subset_range needs 0 <= a <= b <= u(f)");
  const auto& rank = fi[f].rank;
  IndexSet out;
  for (auto i : I) {
    require(i < fi.n(), "sample id out of range");
    if (rank[i] > a && rank[i] <= b) out.push_back(i);
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Replace every feature by one indicator per interior midpoint:
/// column (f, j) is 1 iff x_f >= (w_j + w_{j+1}) / 2. Constant features vanish.
inline Dataset binarize_equivalent(const Dataset& ds) {
  const FeatureIndex fi(ds);
  std::vector<std::vector<double>> rows(ds.n());
  std::vector<std::string> names;
  for (std::size_t f = 0; f < ds.p(); ++f) {
    const auto& col = fi[f];
    for (std::uint32_t j = 1; j < col.u(); ++j) {
      const double cut = col.midpoints[j];
      std::ostringstream name;
      name << ds.feature_names()[f] << ">=" << cut;
      names.push_back(name.str());
      for (std::size_t i = 0; i < ds.n(); ++i) rows[i].push_back(ds.x(i, f) < cut ? 0.0 : 1.0);
    }
  }
  if (names.empty()) {
    // Every feature was constant; keep a single constant column so p >= 1 holds.
    names.push_back("const");
    for (auto& r : rows) r.push_back(0.0);
  }
  return ds.with_features(rows, std::move(names));
}

// ---------------------------------------------------------------------------
// CSV ingestion

struct CsvSchema {
  Task task = Task::kClassification;
  std::vector<std::string> targets;
};

namespace detail {

/// Splits one RFC-4180 record; `pos` advances past the record terminator.
inline std::vector<std::string> read_record(std::string_view text, std::size_t& pos) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  bool field_started = false;
  while (pos < text.size()) {
    char c = text[pos];
    if (quoted) {
      if (c == '"') {
        if (pos + 1 < text.size() && text[pos + 1] == '"') {
          cur.push_back('"');
          pos += 2;
          continue;
        }
        quoted = false;
        ++pos;
        continue;
      }
      cur.push_back(c);
      ++pos;
      continue;
    }
    if (c == '"' && !field_started) {
      quoted = true;
      field_started = true;
      ++pos;
      continue;
    }
    if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
      field_started = false;
      ++pos;
      continue;
    }
    if (c == '\r' || c == '\n') {
      ++pos;
      if (c == '\r' && pos < text.size() && text[pos] == '\n') ++pos;
      break;
    }
    cur.push_back(c);
    field_started = true;
    ++pos;
  }
  if (quoted) throw DataError("unterminated quoted CSV field");
  fields.push_back(std::move(cur));
  return fields;
}

inline std::string trim(std::string s) {
  auto issp = [](unsigned char c) { return c == ' ' || c == '\t'; };
  while (!s.empty() && issp(static_cast<unsigned char>(s.back()))) s.pop_back();
  std::size_t k = 0;
  while (k < s.size() && issp(static_cast<unsigned char>(s[k]))) ++k;
  return s.substr(k);
}

inline bool parse_real(const std::string& cell, double& out) {
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (first != last && *first == '+') ++first;
  if (first == last) return false;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

}  // namespace detail

/// Parses CSV text (header row required). Row numbers in errors are 1-based
/// data rows; the header is row 0.
inline Dataset parse_csv(std::string_view text, const CsvSchema& schema) {
  if (schema.targets.empty()) throw DataError("no target column given");
  std::size_t pos = 0;
  if (text.size() >= 3 && static_cast<unsigned char>(text[0]) == 0xEF) pos = 3;  // UTF-8 BOM
  auto header = detail::read_record(text, pos);
  for (auto& h : header) h = detail::trim(h);
  if (header.size() == 1 && header[0].empty()) throw DataError("missing CSV header");

  std::vector<std::size_t> target_cols;
  for (const auto& name : schema.targets) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("unknown column '" + name + "'");
    target_cols.push_back(static_cast<std::size_t>(it - header.begin()));
  }
  if (schema.task == Task::kClassification && target_cols.size() != 1) {
    throw DataError("classification takes exactly one target column");
  }
  std::vector<std::size_t> feature_cols;
  std::vector<std::string> feature_names;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (std::find(target_cols.begin(), target_cols.end(), c) == target_cols.end()) {
      feature_cols.push_back(c);
      feature_names.push_back(header[c]);
    }
  }

  std::vector<std::vector<double>> rows;
  std::vector<std::string> labels;
  std::vector<std::vector<double>> targets;
  std::size_t row_no = 0;
  while (pos < text.size()) {
    auto rec = detail::read_record(text, pos);
    if (rec.size() == 1 && detail::trim(rec[0]).empty()) continue;  // blank line
    ++row_no;
    if (rec.size() != header.size()) {
      throw DataError("row " + std::to_string(row_no) + " has " + std::to_string(rec.size()) +
                      " cells, header has " + std::to_string(header.size()));
    }
    std::vector<double> r;
    r.reserve(feature_cols.size());
    for (auto c : feature_cols) {
      double v = 0;
      auto cell = detail::trim(rec[c]);
      if (!detail::parse_real(cell, v)) {
        throw DataError("unparseable value '" + cell + "' at row " + std::to_string(row_no) +
                        ", column '" + header[c] + "'");
      }
      r.push_back(v);
    }
    rows.push_back(std::move(r));
    if (schema.task == Task::kClassification) {
      auto cell = detail::trim(rec[target_cols[0]]);
      if (cell.empty()) {
        throw DataError("empty label at row " + std::to_string(row_no) + ", column '" +
                        header[target_cols[0]] + "'");
      }
      labels.push_back(cell);
    } else {
      std::vector<double> t;
      for (auto c : target_cols) {
        double v = 0;
        auto cell = detail::trim(rec[c]);
        if (!detail::parse_real(cell, v)) {
          throw DataError("unparseable value '" + cell + "' at row " + std::to_string(row_no) +
                          ", column '" + header[c] + "'");
        }
        t.push_back(v);
      }
      targets.push_back(std::move(t));
    }
  }
  if (rows.empty()) throw DataError("empty dataset");
  if (feature_cols.empty()) throw DataError("dataset has no feature columns");
  if (schema.task == Task::kClassification) {
    Dataset ds = Dataset::classification(rows, labels, feature_names);
    ds.set_target_names(schema.targets);
    return ds;
  }
  Dataset ds = Dataset::regression(rows, targets, feature_names);
  ds.set_target_names(schema.targets);
  return ds;
}

inline Dataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), schema);
}

}  // namespace shallowtree
