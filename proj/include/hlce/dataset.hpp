#ifndef HLCE_DATASET_HPP
#define HLCE_DATASET_HPP

// Combined experimental/observational panel, its CSV schema, subgroup views
// and stratified splitting.

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "hlce/common.hpp"

namespace hlce {

enum class Group : std::uint8_t { experimental, observational };

inline char group_char(Group g) { return g == Group::experimental ? 'E' : 'O'; }

// One unit's observed fields, without covariates.
struct Observation {
  Group g = Group::experimental;
  int a = 0;
  double s = 0.0;
  std::optional<double> y;
};

class PanelDataset {
 public:
  // Validates every invariant; throws DataError naming the first offending row
  // (1-based) or the missing stratum.
  PanelDataset(std::vector<Group> g, std::vector<int> a, Matrix x, Vector s,
               std::vector<std::optional<double>> y)
      : g_(std::move(g)), a_(std::move(a)), x_(std::move(x)), s_(std::move(s)), y_(std::move(y)) {
    validate();
  }

  Index size() const { return static_cast<Index>(g_.size()); }
  Index dim() const { return x_.cols(); }

  Group group(Index i) const { return g_[i]; }
  int treatment(Index i) const { return a_[i]; }
  double short_term(Index i) const { return s_[i]; }
  const std::optional<double>& long_term(Index i) const { return y_[i]; }
  std::span<const double> covariates(Index i) const { return row_span(x_, i); }
  Observation observation(Index i) const { return {g_[i], a_[i], s_[i], y_[i]}; }

  const Matrix& x() const { return x_; }
  const Vector& s() const { return s_; }
  const std::vector<Group>& groups() const { return g_; }
  const std::vector<int>& treatments() const { return a_; }
  const std::vector<std::optional<double>>& y() const { return y_; }

  Index count(Group g) const {
    return std::count(g_.begin(), g_.end(), g);
  }
  Index count(Group g, int a) const {
    Index c = 0;
    for (Index i = 0; i < size(); ++i) c += (g_[i] == g && a_[i] == a);
    return c;
  }

  // Rows in the given order (duplicates allowed). The result is validated.
  PanelDataset subset(std::span<const Index> rows) const {
    std::vector<Group> g;
    std::vector<int> a;
    std::vector<std::optional<double>> y;
    Matrix x(static_cast<Index>(rows.size()), dim());
    Vector s(static_cast<Index>(rows.size()));
    g.reserve(rows.size());
    a.reserve(rows.size());
    y.reserve(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const Index i = rows[k];
      g.push_back(g_[i]);
      a.push_back(a_[i]);
      y.push_back(y_[i]);
      x.row(static_cast<Index>(k)) = x_.row(i);
      s[static_cast<Index>(k)] = s_[i];
    }
    return PanelDataset(std::move(g), std::move(a), std::move(x), std::move(s), std::move(y));
  }

  friend bool operator==(const PanelDataset& l, const PanelDataset& r) {
    return l.g_ == r.g_ && l.a_ == r.a_ && l.x_.rows() == r.x_.rows() &&
           l.x_.cols() == r.x_.cols() && l.x_ == r.x_ && l.s_ == r.s_ && l.y_ == r.y_;
  }

 private:
  void validate() const {
    const std::size_t n = g_.size();
    if (n == 0) throw DataError("dataset is empty");
    if (a_.size() != n || y_.size() != n || static_cast<std::size_t>(x_.rows()) != n ||
        static_cast<std::size_t>(s_.size()) != n) {
      throw DataError("column lengths disagree");
    }
    for (std::size_t i = 0; i < n; ++i) {
      const std::string row = std::to_string(i + 1);
      if (a_[i] != 0 && a_[i] != 1) throw DataError("non-binary a in row " + row);
      if (g_[i] != Group::experimental && g_[i] != Group::observational) {
        throw DataError("invalid group in row " + row);
      }
      if (g_[i] == Group::experimental && y_[i].has_value()) {
        throw DataError("y present for experimental row " + row);
      }
      if (g_[i] == Group::observational && !y_[i].has_value()) {
        throw DataError("y missing for observational row " + row);
      }
      if (!std::isfinite(s_[static_cast<Index>(i)])) throw DataError("non-finite s in row " + row);
      if (y_[i] && !std::isfinite(*y_[i])) throw DataError("non-finite y in row " + row);
      if (!x_.row(static_cast<Index>(i)).allFinite()) throw DataError("non-finite x in row " + row);
    }
    for (Group g : {Group::experimental, Group::observational}) {
      for (int a : {0, 1}) {
        if (count(g, a) == 0) {
          throw DataError(std::string("empty stratum (") + group_char(g) + "," +
                          std::to_string(a) + "): positivity requires both arms in both groups");
        }
      }
    }
  }

  std::vector<Group> g_;
  std::vector<int> a_;
  Matrix x_;
  Vector s_;
  std::vector<std::optional<double>> y_;
};

// Per-row ground truth emitted by the generators.
struct GroundTruth {
  Vector tau;
  // Either all four are empty or all have tau.size() entries.
  Vector s0, s1, y0, y1;

  bool has_potential_outcomes() const { return s0.size() > 0; }
  Index size() const { return tau.size(); }

  GroundTruth subset(std::span<const Index> rows) const {
    auto take = [&](const Vector& v) {
      if (v.size() == 0) return Vector();
      Vector out(static_cast<Index>(rows.size()));
      for (std::size_t k = 0; k < rows.size(); ++k) out[static_cast<Index>(k)] = v[rows[k]];
      return out;
    };
    return {take(tau), take(s0), take(s1), take(y0), take(y1)};
  }
};

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view v) {
  while (!v.empty() && (v.front() == ' ' || v.front() == '\t')) v.remove_prefix(1);
  while (!v.empty() && (v.back() == ' ' || v.back() == '\t' || v.back() == '\r')) v.remove_suffix(1);
  return v;
}

inline double parse_double(std::string_view field, const std::string& what) {
  field = trim(field);
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  double v = 0.0;
  auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size() || field.empty()) {
    throw DataError("cannot parse " + what + ": '" + std::string(field) + "'");
  }
  if (!std::isfinite(v)) throw DataError("non-finite " + what);
  return v;
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  return lines;
}

}  // namespace detail

// Header: g,a,s,y,x0,...,x{d-1}. y is empty for experimental rows.
inline std::string to_csv(const PanelDataset& data) {
  std::string out = "g,a,s,y";
  for (Index j = 0; j < data.dim(); ++j) out += ",x" + std::to_string(j);
  out += '\n';
  for (Index i = 0; i < data.size(); ++i) {
    out += group_char(data.group(i));
    out += ',';
    out += data.treatment(i) ? '1' : '0';
    out += ',';
    out += detail::format_double(data.short_term(i));
    out += ',';
    if (data.long_term(i)) out += detail::format_double(*data.long_term(i));
    for (double v : data.covariates(i)) {
      out += ',';
      out += detail::format_double(v);
    }
    out += '\n';
  }
  return out;
}

inline void write_csv(const PanelDataset& data, const std::string& path) {
  detail::write_file(path, to_csv(data));
}

inline PanelDataset parse_csv(const std::vector<std::string>& lines) {
  if (lines.empty()) throw DataError("malformed header: file is empty");
  const auto header = detail::split_fields(lines[0]);
  if (header.size() < 4 || detail::trim(header[0]) != "g" || detail::trim(header[1]) != "a" ||
      detail::trim(header[2]) != "s" || detail::trim(header[3]) != "y") {
    throw DataError("malformed header: expected g,a,s,y,x0,...");
  }
  const std::size_t d = header.size() - 4;
  for (std::size_t j = 0; j < d; ++j) {
    if (detail::trim(header[4 + j]) != "x" + std::to_string(j)) {
      throw DataError("malformed header: expected column x" + std::to_string(j));
    }
  }
  const std::size_t n = lines.size() - 1;
  std::vector<Group> g(n);
  std::vector<int> a(n);
  std::vector<std::optional<double>> y(n);
  Matrix x(static_cast<Index>(n), static_cast<Index>(d));
  Vector s(static_cast<Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const std::string row = std::to_string(i + 1);
    const auto f = detail::split_fields(lines[i + 1]);
    if (f.size() != header.size()) {
      throw DataError("row " + row + ": expected " + std::to_string(header.size()) + " fields, got " +
                      std::to_string(f.size()));
    }
    const auto gf = detail::trim(f[0]);
    if (gf == "E") {
      g[i] = Group::experimental;
    } else if (gf == "O") {
      g[i] = Group::observational;
    } else {
      throw DataError("invalid group '" + std::string(gf) + "' in row " + row);
    }
    const auto af = detail::trim(f[1]);
    if (af == "0") {
      a[i] = 0;
    } else if (af == "1") {
      a[i] = 1;
    } else {
      throw DataError("non-binary a in row " + row);
    }
    s[static_cast<Index>(i)] = detail::parse_double(f[2], "s in row " + row);
    const auto yf = detail::trim(f[3]);
    if (!yf.empty()) {
      if (g[i] == Group::experimental) throw DataError("y present for experimental row " + row);
      y[i] = detail::parse_double(yf, "y in row " + row);
    } else if (g[i] == Group::observational) {
      throw DataError("y missing for observational row " + row);
    }
    for (std::size_t j = 0; j < d; ++j) {
      x(static_cast<Index>(i), static_cast<Index>(j)) =
          detail::parse_double(f[4 + j], "x" + std::to_string(j) + " in row " + row);
    }
  }
  return PanelDataset(std::move(g), std::move(a), std::move(x), std::move(s), std::move(y));
}

inline PanelDataset load_csv(const std::string& path) { return parse_csv(detail::read_lines(path)); }

// Truth sidecar: tau[,s0,s1,y0,y1], row-aligned with the dataset file.
inline void write_truth_csv(const GroundTruth& truth, const std::string& path) {
  const bool po = truth.has_potential_outcomes();
  std::string out = po ? "tau,s0,s1,y0,y1\n" : "tau\n";
  for (Index i = 0; i < truth.size(); ++i) {
    out += detail::format_double(truth.tau[i]);
    if (po) {
      for (const Vector* v : {&truth.s0, &truth.s1, &truth.y0, &truth.y1}) {
        out += ',';
        out += detail::format_double((*v)[i]);
      }
    }
    out += '\n';
  }
  detail::write_file(path, out);
}

inline GroundTruth load_truth_csv(const std::string& path) {
  const auto lines = detail::read_lines(path);
  if (lines.empty()) throw DataError("malformed truth header: file is empty");
  const auto header = detail::split_fields(lines[0]);
  bool po = false;
  if (header.size() == 5 && detail::trim(header[0]) == "tau" && detail::trim(header[1]) == "s0" &&
      detail::trim(header[2]) == "s1" && detail::trim(header[3]) == "y0" &&
      detail::trim(header[4]) == "y1") {
    po = true;
  } else if (!(header.size() == 1 && detail::trim(header[0]) == "tau")) {
    throw DataError("malformed truth header: expected tau[,s0,s1,y0,y1]");
  }
  const Index n = static_cast<Index>(lines.size()) - 1;
  GroundTruth t;
  t.tau.resize(n);
  if (po) {
    t.s0.resize(n);
    t.s1.resize(n);
    t.y0.resize(n);
    t.y1.resize(n);
  }
  for (Index i = 0; i < n; ++i) {
    const std::string row = std::to_string(i + 1);
    const auto f = detail::split_fields(lines[static_cast<std::size_t>(i) + 1]);
    if (f.size() != header.size()) throw DataError("truth row " + row + ": wrong field count");
    t.tau[i] = detail::parse_double(f[0], "tau in row " + row);
    if (po) {
      t.s0[i] = detail::parse_double(f[1], "s0 in row " + row);
      t.s1[i] = detail::parse_double(f[2], "s1 in row " + row);
      t.y0[i] = detail::parse_double(f[3], "y0 in row " + row);
      t.y1[i] = detail::parse_double(f[4], "y1 in row " + row);
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Subgroup views

// Read-only filtered view; holds a reference, so the dataset must outlive it.
class PanelView {
 public:
  PanelView(const PanelDataset& data, std::vector<Index> rows) : data_(&data), rows_(std::move(rows)) {}

  Index size() const { return static_cast<Index>(rows_.size()); }
  const std::vector<Index>& rows() const { return rows_; }
  const PanelDataset& source() const { return *data_; }

  Matrix x() const {
    Matrix out(size(), data_->dim());
    for (Index k = 0; k < size(); ++k) out.row(k) = data_->x().row(rows_[static_cast<std::size_t>(k)]);
    return out;
  }
  Vector s() const {
    Vector out(size());
    for (Index k = 0; k < size(); ++k) out[k] = data_->short_term(rows_[static_cast<std::size_t>(k)]);
    return out;
  }
  // Throws if any row lacks y.
  Vector y() const {
    Vector out(size());
    for (Index k = 0; k < size(); ++k) {
      const auto& v = data_->long_term(rows_[static_cast<std::size_t>(k)]);
      if (!v) throw DataError("long-term outcome requested on an experimental row");
      out[k] = *v;
    }
    return out;
  }
  Vector a() const {
    Vector out(size());
    for (Index k = 0; k < size(); ++k) out[k] = data_->treatment(rows_[static_cast<std::size_t>(k)]);
    return out;
  }

 private:
  const PanelDataset* data_;
  std::vector<Index> rows_;
};

// Rows matching (g, a); nullopt matches anything. Empty result throws.
inline PanelView subgroup(const PanelDataset& data, std::optional<Group> g, std::optional<int> a) {
  std::vector<Index> rows;
  for (Index i = 0; i < data.size(); ++i) {
    if ((!g || data.group(i) == *g) && (!a || data.treatment(i) == *a)) rows.push_back(i);
  }
  if (rows.empty()) throw DataError("empty subgroup");
  return PanelView(data, std::move(rows));
}

// Empirical p(G=O).
inline double group_prior(const PanelDataset& data) {
  return static_cast<double>(data.count(Group::observational)) / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------------
// Splitting

struct SplitIndices {
  std::vector<Index> train, validation, test;
};

struct SplitParts {
  PanelDataset train, validation, test;
};

namespace detail {

inline int stratum_of(const PanelDataset& data, Index i) {
  return (data.group(i) == Group::observational ? 2 : 0) + data.treatment(i);
}

inline std::string stratum_name(int s) {
  return std::string("(") + ((s >= 2) ? 'O' : 'E') + "," + std::to_string(s % 2) + ")";
}

inline std::array<std::vector<Index>, 4> strata(const PanelDataset& data) {
  std::array<std::vector<Index>, 4> out;
  for (Index i = 0; i < data.size(); ++i) out[static_cast<std::size_t>(stratum_of(data, i))].push_back(i);
  return out;
}

// Largest-remainder apportionment of `total` across strata proportional to sizes.
inline std::array<Index, 4> apportion(const std::array<Index, 4>& sizes, Index n, Index total) {
  std::array<Index, 4> out{};
  std::array<double, 4> rem{};
  Index used = 0;
  for (std::size_t k = 0; k < 4; ++k) {
    const double q = static_cast<double>(sizes[k]) * static_cast<double>(total) / static_cast<double>(n);
    out[k] = static_cast<Index>(std::floor(q));
    rem[k] = q - std::floor(q);
    used += out[k];
  }
  std::array<std::size_t, 4> order{0, 1, 2, 3};
  std::stable_sort(order.begin(), order.end(), [&](auto l, auto r) { return rem[l] > rem[r]; });
  for (std::size_t k = 0; used < total; k = (k + 1) % 4) {
    out[order[k]] += 1;
    ++used;
  }
  return out;
}

}  // namespace detail

// Stratified by (g, a). Validation and test sizes are round(n*f); the
// remainder goes to training. Each part receives at least one row of every
// stratum; a stratum that cannot supply that throws.
inline SplitIndices split_indices(const PanelDataset& data, std::array<double, 3> fractions,
                                  std::uint64_t seed) {
  for (double f : fractions) {
    if (!(f > 0.0)) throw std::invalid_argument("split fractions must all be positive");
  }
  if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9) {
    throw std::invalid_argument("split fractions must sum to 1");
  }
  const Index n = data.size();
  const Index n_val = static_cast<Index>(std::llround(static_cast<double>(n) * fractions[1]));
  const Index n_test = static_cast<Index>(std::llround(static_cast<double>(n) * fractions[2]));
  auto strata = detail::strata(data);
  std::array<Index, 4> sizes{};
  for (std::size_t k = 0; k < 4; ++k) sizes[k] = static_cast<Index>(strata[k].size());
  for (std::size_t k = 0; k < 4; ++k) {
    if (sizes[k] < 3) {
      throw DataError("stratum " + detail::stratum_name(static_cast<int>(k)) +
                      " too small to populate train/validation/test");
    }
  }
  auto val = detail::apportion(sizes, n, n_val);
  auto test = detail::apportion(sizes, n, n_test);
  // Guarantee one row per part per stratum, borrowing from the largest stratum.
  for (auto* part : {&val, &test}) {
    for (std::size_t k = 0; k < 4; ++k) {
      if ((*part)[k] == 0) {
        std::size_t donor = 0;
        for (std::size_t j = 1; j < 4; ++j) {
          if ((*part)[j] > (*part)[donor]) donor = j;
        }
        if ((*part)[donor] <= 1) {
          throw DataError("stratum " + detail::stratum_name(static_cast<int>(k)) +
                          " too small to populate train/validation/test");
        }
        (*part)[donor] -= 1;
        (*part)[k] = 1;
      }
    }
  }
  SplitIndices out;
  Rng rng(seed);
  for (std::size_t k = 0; k < 4; ++k) {
    if (sizes[k] - val[k] - test[k] < 1) {
      throw DataError("stratum " + detail::stratum_name(static_cast<int>(k)) +
                      " too small to populate train/validation/test");
    }
    auto rows = strata[k];
    std::shuffle(rows.begin(), rows.end(), rng);
    const auto t_end = rows.begin() + test[k];
    const auto v_end = t_end + val[k];
    out.test.insert(out.test.end(), rows.begin(), t_end);
    out.validation.insert(out.validation.end(), t_end, v_end);
    out.train.insert(out.train.end(), v_end, rows.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.validation.begin(), out.validation.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

inline SplitParts split(const PanelDataset& data, std::array<double, 3> fractions, std::uint64_t seed) {
  const auto idx = split_indices(data, fractions, seed);
  return {data.subset(idx.train), data.subset(idx.validation), data.subset(idx.test)};
}

// k stratified folds (round-robin within shuffled strata); folds are sorted.
inline std::vector<std::vector<Index>> stratified_folds(const PanelDataset& data, int k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("need at least two folds");
  auto strata = detail::strata(data);
  std::vector<std::vector<Index>> folds(static_cast<std::size_t>(k));
  Rng rng(seed);
  std::size_t next = 0;
  for (std::size_t s = 0; s < 4; ++s) {
    if (strata[s].size() < static_cast<std::size_t>(k)) {
      throw DataError("stratum " + detail::stratum_name(static_cast<int>(s)) + " has fewer rows than folds");
    }
    auto rows = strata[s];
    std::shuffle(rows.begin(), rows.end(), rng);
    for (Index i : rows) {
      folds[next].push_back(i);
      next = (next + 1) % folds.size();
    }
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

inline std::vector<Index> complement(Index n, const std::vector<Index>& sorted_rows) {
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(n) - sorted_rows.size());
  std::size_t j = 0;
  for (Index i = 0; i < n; ++i) {
    if (j < sorted_rows.size() && sorted_rows[j] == i) {
      ++j;
    } else {
      out.push_back(i);
    }
  }
  return out;
}

}  // namespace hlce

#endif  // HLCE_DATASET_HPP
