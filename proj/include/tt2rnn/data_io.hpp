#pragma once

// Synthetic task generators and CSV time-series ingestion.

#include "tt2rnn/dataset.hpp"
#include "tt2rnn/models.hpp"
#include "tt2rnn/tensor.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <functional>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tt2rnn {

/// Malformed input file; the message carries the offending line number.
class ParseError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <class Rng>
Vector gaussian_vector(std::size_t d, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(static_cast<Eigen::Index>(d));
  for (auto& x : v) x = normal(rng);
  return v;
}

/// Labels `count` Gaussian sequences of the given length with `f` plus
/// N(0, sigma2 I_p) noise. `input` maps a raw Gaussian draw to the model
/// input (identity by default).
template <class Rng, class F>
SequenceDataset sample_dataset(std::size_t count, std::size_t length, std::size_t raw_dim,
                               double sigma2, Rng& rng, F&& f,
                               const std::function<Vector(const Vector&)>& input = nullptr) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sigma = std::sqrt(std::max(sigma2, 0.0));
  std::vector<SequenceExample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    SequenceExample ex;
    ex.x.reserve(length);
    for (std::size_t t = 0; t < length; ++t) {
      Vector raw = gaussian_vector(raw_dim, rng);
      ex.x.push_back(input ? input(raw) : std::move(raw));
    }
    ex.y = f(ex.x);
    if (sigma > 0.0) {
      for (auto& v : ex.y) v += sigma * normal(rng);
    }
    out.push_back(std::move(ex));
  }
  return SequenceDataset(std::move(out));
}

/// Three training sets (lengths L, 2L, 2L+1), a noiseless test set and the
/// generating model.
struct SyntheticTask {
  Linear2RNN target;
  std::size_t L = 2;
  SequenceDataset d_l;
  SequenceDataset d_2l;
  SequenceDataset d_2l1;
  SequenceDataset test;

  std::vector<SequenceExample> pooled_training() const {
    std::vector<SequenceExample> all;
    for (const auto* d : {&d_l, &d_2l, &d_2l1}) {
      all.insert(all.end(), d->examples().begin(), d->examples().end());
    }
    return all;
  }
};

struct TaskOptions {
  std::size_t N = 1000;
  /// Per-dataset sizes overriding N.
  std::optional<std::size_t> n_l, n_2l, n_2l1;
  double sigma2 = 0.0;
  std::uint64_t seed = 0;
  std::size_t L = 2;
  std::size_t test_size = 1000;
  std::size_t test_length = 6;
};

namespace detail {

inline void tag(SequenceDataset& ds, const std::string& gen, const TaskOptions& o, double var) {
  ds.metadata().generator = gen;
  ds.metadata().seed = o.seed;
  ds.metadata().noise_variance = var;
}

template <class Rng>
SyntheticTask sample_task(Linear2RNN target, const TaskOptions& o, std::size_t raw_dim,
                          const std::string& name, Rng& rng,
                          const std::function<Vector(const Vector&)>& input) {
  SyntheticTask task;
  task.L = o.L;
  task.target = std::move(target);
  const auto f = [&](const std::vector<Vector>& xs) { return rnn_evaluate(task.target, xs); };
  task.d_l = sample_dataset(o.n_l.value_or(o.N), o.L, raw_dim, o.sigma2, rng, f, input);
  task.d_2l = sample_dataset(o.n_2l.value_or(o.N), 2 * o.L, raw_dim, o.sigma2, rng, f, input);
  task.d_2l1 =
      sample_dataset(o.n_2l1.value_or(o.N), 2 * o.L + 1, raw_dim, o.sigma2, rng, f, input);
  task.test = sample_dataset(o.test_size, o.test_length, raw_dim, 0.0, rng, f, input);
  tag(task.d_l, name, o, o.sigma2);
  tag(task.d_2l, name, o, o.sigma2);
  tag(task.d_2l1, name, o, o.sigma2);
  tag(task.test, name, o, 0.0);
  return task;
}

}  // namespace detail

/// Random linear 2-RNN target with N(0, scale^2) parameters and standard
/// normal inputs; the default scale gives parameter variance 0.2.
/// Draw order: target, D_L, D_2L, D_2L+1, test.
inline SyntheticTask gen_random_rnn_task(const TaskOptions& o, std::size_t n = 5,
                                         std::size_t d = 3, std::size_t p = 2,
                                         double scale = std::sqrt(0.2)) {
  if (o.N < 1) throw std::invalid_argument("gen_random_rnn_task: N must be >= 1");
  std::mt19937_64 rng(o.seed);
  auto target = random_rnn(n, d, p, scale, rng);
  return detail::sample_task(std::move(target), o, d, "random_rnn", rng, nullptr);
}

/// Two-unit model computing sum_t (x_t[1] - x_t[0]) on inputs (x[0], x[1], 1).
inline Linear2RNN arithmetic_reference_rnn() {
  DenseTensor A({2, 3, 2});
  A.at({0, 2, 0}) = 1.0;
  A.at({1, 1, 0}) = 1.0;
  A.at({1, 0, 0}) = -1.0;
  A.at({1, 2, 1}) = 1.0;
  Vector h0(2);
  h0 << 0.0, 1.0;
  Matrix omega(1, 2);
  omega << 1.0, 0.0;
  return {std::move(h0), std::move(A), std::move(omega)};
}

inline double arithmetic_function(std::span<const Vector> xs) {
  double s = 0.0;
  for (const auto& x : xs) s += x[1] - x[0];
  return s;
}

inline Vector with_bias(const Vector& raw) {
  Vector x(raw.size() + 1);
  x.head(raw.size()) = raw;
  x[raw.size()] = 1.0;
  return x;
}

/// Running difference task: 2-d Gaussian inputs with a constant 1 appended
/// (d = 3, p = 1). The returned target is the two-unit reference model.
inline SyntheticTask gen_arithmetic_task(const TaskOptions& o) {
  if (o.N < 1) throw std::invalid_argument("gen_arithmetic_task: N must be >= 1");
  std::mt19937_64 rng(o.seed);
  return detail::sample_task(arithmetic_reference_rnn(), o, 2, "arithmetic", rng, with_bias);
}

/// Sequences of length T labelled after every step. Inputs are Gaussian of
/// size `raw_dim` (default m.d()) mapped through `input` when given.
template <class Rng>
SequenceDataset gen_per_step_dataset(const Linear2RNN& m, std::size_t count, std::size_t T,
                                     double sigma2, Rng& rng,
                                     const std::function<Vector(const Vector&)>& input = nullptr,
                                     std::optional<std::size_t> raw_dim = std::nullopt) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sigma = std::sqrt(std::max(sigma2, 0.0));
  const std::size_t rd = raw_dim.value_or(m.d());
  std::vector<SequenceExample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    SequenceExample ex;
    for (std::size_t t = 0; t < T; ++t) {
      Vector raw = gaussian_vector(rd, rng);
      ex.x.push_back(input ? input(raw) : std::move(raw));
    }
    ex.y_steps = rnn_evaluate_steps(m, ex.x);
    if (sigma > 0.0) {
      for (auto& y : ex.y_steps)
        for (auto& v : y) v += sigma * normal(rng);
    }
    ex.y = ex.y_steps.empty() ? Vector(m.Omega * m.h0) : ex.y_steps.back();
    out.push_back(std::move(ex));
  }
  return SequenceDataset(std::move(out));
}

/// Splits sequences with per-step targets into fixed-length datasets D_l,
/// l = 1, ..., 2L+1, each sequence contributing its length-l prefix.
inline std::map<std::size_t, SequenceDataset> per_step_datasets(const SequenceDataset& seqs,
                                                                 std::size_t L) {
  const std::size_t need = 2 * L + 1;
  std::map<std::size_t, SequenceDataset> out;
  for (std::size_t l = 1; l <= need; ++l) out[l] = SequenceDataset({}, seqs.metadata());
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const auto& ex = seqs[i];
    if (ex.length() < need) {
      throw std::invalid_argument("per_step_datasets: sequence " + std::to_string(i) +
                                  " has length " + std::to_string(ex.length()) +
                                  ", need at least 2L+1 = " + std::to_string(need));
    }
    if (!ex.has_step_targets()) {
      throw std::invalid_argument("per_step_datasets: sequence " + std::to_string(i) +
                                  " has no per-step targets");
    }
    for (std::size_t l = 1; l <= need; ++l) {
      SequenceExample prefix;
      prefix.x.assign(ex.x.begin(), ex.x.begin() + static_cast<std::ptrdiff_t>(l));
      prefix.y = ex.y_steps[l - 1];
      out[l].push_back(std::move(prefix));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV ingestion

enum class GapPolicy { Drop, Interpolate };

inline GapPolicy parse_gap_policy(const std::string& s) {
  if (s == "drop") return GapPolicy::Drop;
  if (s == "interpolate") return GapPolicy::Interpolate;
  throw std::invalid_argument("unknown gap policy '" + s + "' (expected drop|interpolate)");
}

struct CsvSchema {
  std::string timestamp_col = "timestamp";
  std::vector<std::string> value_cols;
  /// Width of the averaging bucket in seconds.
  std::int64_t interval_seconds = 3600;
  /// Input window length.
  std::size_t window = 3;
  /// Steps ahead of the last input that the target refers to.
  std::size_t horizon = 1;
  GapPolicy gaps = GapPolicy::Drop;
  /// Append a constant 1 to every input vector.
  bool add_bias = false;
  /// Column predicted; defaults to the first value column.
  std::string target_col;
};

/// Bucket means of a time series: `values[b]` is empty when bucket
/// `start + b` has no records.
struct BucketSeries {
  std::int64_t start_bucket = 0;
  std::vector<std::optional<Vector>> values;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  std::string out = s.substr(b, e - b);
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') {
    out = out.substr(1, out.size() - 2);
  }
  return out;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
      cur.push_back(c);
    } else if (c == ',' && !quoted) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  std::size_t pos = 0;
  try {
    const double v = std::stod(s, &pos);
    if (pos != s.size()) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace detail

/// Epoch seconds, or "YYYY-MM-DD HH:MM:SS" / "YYYY-MM-DDTHH:MM:SS" in UTC.
inline std::optional<std::int64_t> parse_timestamp(const std::string& s) {
  if (s.empty()) return std::nullopt;
  if (auto v = detail::parse_double(s)) {
    return static_cast<std::int64_t>(std::floor(*v));
  }
  std::string norm = s;
  std::replace(norm.begin(), norm.end(), 'T', ' ');
  std::tm tm{};
  std::istringstream iss(norm);
  iss >> std::get_time(&tm, "%Y-%m-%d %H:%M:%S");
  if (iss.fail()) {
    std::istringstream date_only(norm);
    tm = std::tm{};
    date_only >> std::get_time(&tm, "%Y-%m-%d");
    if (date_only.fail()) return std::nullopt;
    date_only >> std::ws;
    if (!date_only.eof()) return std::nullopt;
  } else {
    iss >> std::ws;
    if (!iss.eof()) return std::nullopt;
  }
  return static_cast<std::int64_t>(timegm(&tm));
}

/// Parses the CSV and averages records into fixed-width buckets.
inline BucketSeries aggregate_csv(std::istream& in, const CsvSchema& schema) {
  if (schema.value_cols.empty()) {
    throw std::invalid_argument("CsvSchema: at least one value column is required");
  }
  if (schema.interval_seconds <= 0) {
    throw std::invalid_argument("CsvSchema: interval_seconds must be positive");
  }
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!detail::trim(line).empty()) {
      header = detail::split_csv_line(line);
      break;
    }
  }
  if (header.empty()) throw ParseError("CSV: missing header line");
  auto column = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw ParseError("CSV: column '" + name + "' not found in header (line " +
                       std::to_string(line_no) + ")");
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t ts_col = column(schema.timestamp_col);
  std::vector<std::size_t> val_cols;
  for (const auto& c : schema.value_cols) val_cols.push_back(column(c));

  std::map<std::int64_t, std::pair<Vector, std::size_t>> buckets;
  const auto nv = static_cast<Eigen::Index>(val_cols.size());
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size()) {
      throw ParseError("CSV line " + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " fields, found " +
                       std::to_string(fields.size()));
    }
    const auto ts = parse_timestamp(fields[ts_col]);
    if (!ts) {
      throw ParseError("CSV line " + std::to_string(line_no) + ": bad timestamp '" +
                       fields[ts_col] + "'");
    }
    Vector v(nv);
    for (Eigen::Index j = 0; j < nv; ++j) {
      const auto& f = fields[val_cols[static_cast<std::size_t>(j)]];
      const auto x = detail::parse_double(f);
      if (!x || !std::isfinite(*x)) {
        throw ParseError("CSV line " + std::to_string(line_no) + ": bad value '" + f +
                         "' in column '" + schema.value_cols[static_cast<std::size_t>(j)] + "'");
      }
      v[j] = *x;
    }
    const std::int64_t b = static_cast<std::int64_t>(
        std::floor(static_cast<double>(*ts) / static_cast<double>(schema.interval_seconds)));
    auto [it, fresh] = buckets.try_emplace(b, Vector::Zero(nv), 0);
    it->second.first += v;
    ++it->second.second;
  }
  BucketSeries series;
  if (buckets.empty()) return series;
  series.start_bucket = buckets.begin()->first;
  const std::int64_t span = buckets.rbegin()->first - series.start_bucket + 1;
  series.values.assign(static_cast<std::size_t>(span), std::nullopt);
  for (const auto& [b, acc] : buckets) {
    series.values[static_cast<std::size_t>(b - series.start_bucket)] =
        Vector(acc.first / static_cast<double>(acc.second));
  }
  return series;
}

/// Linear interpolation of interior gaps.
inline void interpolate_gaps(BucketSeries& s) {
  std::optional<std::size_t> last;
  for (std::size_t i = 0; i < s.values.size(); ++i) {
    if (!s.values[i]) continue;
    if (last && i > *last + 1) {
      const Vector a = *s.values[*last];
      const Vector b = *s.values[i];
      const double span = static_cast<double>(i - *last);
      for (std::size_t j = *last + 1; j < i; ++j) {
        const double w = static_cast<double>(j - *last) / span;
        s.values[j] = Vector((1.0 - w) * a + w * b);
      }
    }
    last = i;
  }
}

/// Windows the bucket series into examples: inputs are buckets s..s+L-1 and
/// the target is the target column at bucket s+L-1+h.
inline SequenceDataset window_series(const BucketSeries& series, const CsvSchema& schema) {
  if (schema.window < 1) throw std::invalid_argument("CsvSchema: window must be >= 1");
  if (schema.horizon < 1) throw std::invalid_argument("CsvSchema: horizon must be >= 1");
  std::size_t target_idx = 0;
  if (!schema.target_col.empty()) {
    auto it = std::find(schema.value_cols.begin(), schema.value_cols.end(), schema.target_col);
    if (it == schema.value_cols.end()) {
      throw std::invalid_argument("CsvSchema: target column '" + schema.target_col +
                                  "' is not a value column");
    }
    target_idx = static_cast<std::size_t>(it - schema.value_cols.begin());
  }
  BucketSeries s = series;
  if (schema.gaps == GapPolicy::Interpolate) interpolate_gaps(s);
  const std::size_t T = s.values.size();
  const std::size_t L = schema.window, h = schema.horizon;
  SequenceDataset out;
  out.metadata().generator = "csv";
  if (T < L + h) return out;
  for (std::size_t start = 0; start + L + h - 1 < T; ++start) {
    bool complete = s.values[start + L - 1 + h].has_value();
    for (std::size_t t = start; complete && t < start + L; ++t) complete = s.values[t].has_value();
    if (!complete) continue;
    SequenceExample ex;
    for (std::size_t t = start; t < start + L; ++t) {
      ex.x.push_back(schema.add_bias ? with_bias(*s.values[t]) : *s.values[t]);
    }
    ex.y = Vector::Constant(1, (*s.values[start + L - 1 + h])[static_cast<Eigen::Index>(target_idx)]);
    out.push_back(std::move(ex));
  }
  return out;
}

inline SequenceDataset load_sequences_csv(std::istream& in, const CsvSchema& schema) {
  return window_series(aggregate_csv(in, schema), schema);
}

inline SequenceDataset load_sequences_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open CSV file '" + path + "'");
  return load_sequences_csv(in, schema);
}

}  // namespace tt2rnn
