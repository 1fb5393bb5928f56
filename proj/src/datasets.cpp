#include "poisonlab/datasets.hpp"
#include "poisonlab/random.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace poisonlab {

Dataset Dataset::subset(const IndexList& rows) const {
  Dataset out;
  out.features.resize(static_cast<Index>(rows.size()), features.cols());
  out.labels.resize(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Index>(i)) = features.row(rows[i]);
    out.labels(static_cast<Index>(i)) = labels(rows[i]);
  }
  out.column_names = column_names;
  return out;
}

IndexList complement(const IndexList& rows, Index n) {
  std::vector<bool> taken(static_cast<std::size_t>(n), false);
  for (Index r : rows) taken[static_cast<std::size_t>(r)] = true;
  IndexList out;
  for (Index i = 0; i < n; ++i)
    if (!taken[static_cast<std::size_t>(i)]) out.push_back(i);
  return out;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool parse_real(const std::string& text, Scalar& out) {
  std::string t = trim(text);
  if (t.empty()) return false;
  const char* first = t.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), out);
  return ec == std::errc() && ptr == t.data() + t.size() && std::isfinite(out);
}

} // namespace

RawDataset load_csv(const std::filesystem::path& path, bool has_header,
                    std::optional<Index> target_col) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open CSV file: " + path.string());

  std::string line;
  std::vector<std::string> header;
  if (has_header && std::getline(in, line)) header = split_fields(line);

  std::vector<std::vector<Scalar>> rows;
  std::size_t width = header.size();
  Index row_no = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty() || line == "\r") continue;
    ++row_no;
    auto fields = split_fields(line);
    if (width == 0) width = fields.size();
    if (fields.size() != width)
      throw Error("row " + std::to_string(row_no) + " has " + std::to_string(fields.size()) +
                  " columns, expected " + std::to_string(width));
    std::vector<Scalar> values(width);
    for (std::size_t c = 0; c < width; ++c) {
      if (!parse_real(fields[c], values[c]))
        throw Error("non-numeric cell '" + fields[c] + "' at (" + std::to_string(row_no) + "," +
                    std::to_string(c + 1) + ")");
    }
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw Error("empty body in CSV file: " + path.string());
  if (width < 2) throw Error("CSV needs at least 2 columns");

  const Index cols = static_cast<Index>(width);
  const Index target = target_col.value_or(cols - 1);
  if (target < 0 || target >= cols) throw Error("target column out of range");

  RawDataset raw;
  raw.features.resize(static_cast<Index>(rows.size()), cols - 1);
  raw.labels.resize(static_cast<Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    Index f = 0;
    for (Index c = 0; c < cols; ++c) {
      if (c == target)
        raw.labels(static_cast<Index>(r)) = rows[r][static_cast<std::size_t>(c)];
      else
        raw.features(static_cast<Index>(r), f++) = rows[r][static_cast<std::size_t>(c)];
    }
  }
  for (Index c = 0; c < cols; ++c) {
    if (c == target) continue;
    raw.column_names.push_back(header.empty() ? "x" + std::to_string(c)
                                              : header[static_cast<std::size_t>(c)]);
  }
  raw.column_names.push_back(header.empty() ? "y" : header[static_cast<std::size_t>(target)]);
  return raw;
}

Index resolve_column(const std::filesystem::path& path, const std::string& column) {
  Index idx = 0;
  auto [ptr, ec] = std::from_chars(column.data(), column.data() + column.size(), idx);
  if (ec == std::errc() && ptr == column.data() + column.size()) return idx;
  std::ifstream in(path);
  std::string line;
  if (!in || !std::getline(in, line)) throw Error("cannot read header of " + path.string());
  auto header = split_fields(line);
  for (std::size_t c = 0; c < header.size(); ++c)
    if (trim(header[c]) == column) return static_cast<Index>(c);
  throw Error("no column named '" + column + "'");
}

void save_csv(const std::filesystem::path& path, const Dataset& d,
              const std::vector<bool>& is_poison) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(17);
  const Index m = d.num_features();
  for (Index c = 0; c < m; ++c) {
    auto idx = static_cast<std::size_t>(c);
    out << (idx < d.column_names.size() ? d.column_names[idx] : "x" + std::to_string(c)) << ',';
  }
  out << (d.column_names.size() > static_cast<std::size_t>(m) ? d.column_names.back() : "y");
  if (!is_poison.empty()) out << ",is_poison";
  out << '\n';
  for (Index r = 0; r < d.size(); ++r) {
    for (Index c = 0; c < m; ++c) out << d.features(r, c) << ',';
    out << d.labels(r);
    if (!is_poison.empty()) out << ',' << (is_poison[static_cast<std::size_t>(r)] ? 1 : 0);
    out << '\n';
  }
}

std::array<Index, 3> split_sizes(Index n, const SplitRatios& ratios) {
  if (ratios.train <= 0 || ratios.val <= 0 || ratios.test <= 0)
    throw Error("empty partition disallowed: every split ratio must be positive");
  if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
    throw Error("split ratios must sum to 1");
  if (n < 3) throw Error("need at least 3 rows to split");
  Index n_train = static_cast<Index>(std::llround(ratios.train * static_cast<Scalar>(n)));
  Index n_val = static_cast<Index>(std::llround(ratios.val * static_cast<Scalar>(n)));
  n_train = std::clamp<Index>(n_train, 1, n - 2);
  n_val = std::clamp<Index>(n_val, 1, n - n_train - 1);
  return {n_train, n_val, n - n_train - n_val};
}

SplitRatios parse_ratios(const std::string& text) {
  std::stringstream ss(text);
  std::string item;
  std::vector<Scalar> v;
  while (std::getline(ss, item, ',')) {
    Scalar x = 0;
    if (!parse_real(item, x)) throw Error("bad split ratio '" + item + "'");
    v.push_back(x);
  }
  if (v.size() != 3) throw Error("split needs three comma-separated ratios");
  return {v[0], v[1], v[2]};
}

SplitBundle split(const RawDataset& raw, const SplitRatios& ratios, std::uint64_t seed) {
  const auto [n_train, n_val, n_test] = split_sizes(raw.size(), ratios);
  IndexList perm(static_cast<std::size_t>(raw.size()));
  std::iota(perm.begin(), perm.end(), Index{0});
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);

  SplitBundle b;
  b.seed = seed;
  b.train_rows.assign(perm.begin(), perm.begin() + n_train);
  b.val_rows.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
  b.test_rows.assign(perm.begin() + n_train + n_val, perm.end());
  (void)n_test;
  b.train = raw.subset(b.train_rows);
  b.val = raw.subset(b.val_rows);
  b.test = raw.subset(b.test_rows);
  return b;
}

Scaler fit_scaler(const Dataset& train) {
  if (train.empty()) throw Error("cannot standardize an empty training partition");
  const Index m = train.num_features();
  Matrix all(train.size(), m + 1);
  all << train.features, train.labels;
  Scaler s;
  s.mean = all.colwise().mean().transpose();
  s.std.resize(m + 1);
  for (Index c = 0; c <= m; ++c) {
    Scalar var = (all.col(c).array() - s.mean(c)).square().mean();
    Scalar sd = std::sqrt(var);
    // zero-variance column: center only
    s.std(c) = sd > 1e-12 * std::max<Scalar>(1.0, std::abs(s.mean(c))) ? sd : 1.0;
  }
  return s;
}

Dataset Scaler::apply(const Dataset& d) const {
  const Index m = d.num_features();
  Dataset out = d;
  out.features = (d.features.rowwise() - mean.head(m).transpose()).array().rowwise() /
                 std.head(m).transpose().array();
  out.labels = (d.labels.array() - mean(m)) / std(m);
  return out;
}

Dataset Scaler::invert(const Dataset& d) const {
  const Index m = d.num_features();
  Dataset out = d;
  out.features = (d.features.array().rowwise() * std.head(m).transpose().array()).matrix().rowwise() +
                 mean.head(m).transpose();
  out.labels = d.labels.array() * std(m) + mean(m);
  return out;
}

std::pair<SplitBundle, Scaler> standardize(const SplitBundle& bundle) {
  Scaler s = fit_scaler(bundle.train);
  SplitBundle out = bundle;
  out.train = s.apply(bundle.train);
  out.val = s.apply(bundle.val);
  out.test = s.apply(bundle.test);
  return {std::move(out), std::move(s)};
}

Dataset gen_synthetic(Index n, std::uint64_t seed) {
  if (n < 0) throw Error("synthetic size must be non-negative");
  Rng rng(seed);
  std::uniform_real_distribution<Scalar> ux(-5.0, 5.0);
  std::normal_distribution<Scalar> noise(0.0, 1.2);
  Dataset d;
  d.features.resize(n, 1);
  d.labels.resize(n);
  for (Index i = 0; i < n; ++i) {
    Scalar x = ux(rng);
    d.features(i, 0) = x;
    d.labels(i) = 0.8 * x + noise(rng);
  }
  d.column_names = {"x", "y"};
  return d;
}

} // namespace poisonlab
