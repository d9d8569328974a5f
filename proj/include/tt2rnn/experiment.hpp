#pragma once

// Sweeps over (method, N, sigma2, R, seed) on a synthetic task.
//
// Results CSV columns:
//   method,N,sigma2,R,seed,train_mse,test_mse,wall_time,status
// status is "ok", "fallback" (zero function returned) or "error: <message>".
// Summary CSV columns:
//   method,N,sigma2,R,runs,ok,mean_train_mse,mean_test_mse,mean_wall_time

#include "tt2rnn/data_io.hpp"
#include "tt2rnn/metrics.hpp"
#include "tt2rnn/recovery.hpp"
#include "tt2rnn/refine.hpp"
#include "tt2rnn/spectral.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

namespace tt2rnn {

/// A recovery method, optionally followed by Adam refinement ("tiht+sgd").
struct MethodSpec {
  RecoveryMethod method = RecoveryMethod::LeastSquares;
  bool refine = false;

  std::string name() const { return to_string(method) + (refine ? "+sgd" : ""); }
  friend bool operator==(const MethodSpec&, const MethodSpec&) = default;
};

inline MethodSpec parse_method_spec(const std::string& s) {
  const auto plus = s.find('+');
  if (plus == std::string::npos) return {parse_recovery_method(s), false};
  if (s.substr(plus) != "+sgd") throw std::invalid_argument("unknown method suffix in '" + s + "'");
  return {parse_recovery_method(s.substr(0, plus)), true};
}

enum class TaskKind { RandomRnn, Arithmetic };

inline TaskKind parse_task_kind(const std::string& s) {
  if (s == "random" || s == "random_rnn") return TaskKind::RandomRnn;
  if (s == "arithmetic") return TaskKind::Arithmetic;
  throw std::invalid_argument("unknown task '" + s + "' (expected random|arithmetic)");
}

inline std::string to_string(TaskKind t) {
  return t == TaskKind::RandomRnn ? "random" : "arithmetic";
}

inline SyntheticTask make_task(TaskKind kind, const TaskOptions& o) {
  return kind == TaskKind::RandomRnn ? gen_random_rnn_task(o) : gen_arithmetic_task(o);
}

struct SweepConfig {
  TaskKind task = TaskKind::RandomRnn;
  std::vector<MethodSpec> methods = {{RecoveryMethod::LeastSquares, false}};
  std::vector<std::size_t> Ns = {20, 100, 500, 2000, 10000};
  std::vector<double> sigma2s = {1.0};
  std::vector<std::size_t> ranks = {5};
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::size_t L = 2;
  std::size_t test_size = 1000;
  /// Applied to every method; rank and method are filled in per cell.
  RecoveryConfig recovery;
  RefineConfig refine;
  SpectralOptions spectral;
  /// 0 means TT2RNN_THREADS or the hardware concurrency.
  std::size_t threads = 0;
};

struct SweepRow {
  std::string method;
  std::size_t N = 0;
  double sigma2 = 0.0;
  std::size_t R = 0;
  std::uint64_t seed = 0;
  double train_mse = std::numeric_limits<double>::quiet_NaN();
  double test_mse = std::numeric_limits<double>::quiet_NaN();
  double wall_time = 0.0;
  std::string status;
};

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

inline const char* sweep_csv_header() {
  return "method,N,sigma2,R,seed,train_mse,test_mse,wall_time,status";
}

inline std::string sweep_csv_line(const SweepRow& r) {
  std::ostringstream os;
  os << csv_escape(r.method) << ',' << r.N << ',' << format_double(r.sigma2) << ',' << r.R << ','
     << r.seed << ',' << format_double(r.train_mse) << ',' << format_double(r.test_mse) << ','
     << format_double(r.wall_time) << ',' << csv_escape(r.status);
  return os.str();
}

/// Thread count from TT2RNN_THREADS, else the hardware concurrency.
inline std::size_t default_thread_count() {
  if (const char* env = std::getenv("TT2RNN_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

struct CellResult {
  Linear2RNN model;
  SpectralDiagnostics diagnostics;
  double train_mse = 0.0;
  double test_mse = 0.0;
};

/// Learns one model on a task: spectral learning with the given method and
/// rank, then optional refinement on the pooled training data.
inline CellResult learn_on_task(const SyntheticTask& task, const MethodSpec& method,
                                std::size_t R, const RecoveryConfig& base,
                                const RefineConfig& refine, const SpectralOptions& spectral) {
  RecoveryConfig cfg = base;
  cfg.method = method.method;
  cfg.rank = R;
  auto res = spectral_learn(task.d_l, task.d_2l, task.d_2l1, cfg, spectral);
  CellResult out;
  out.model = std::move(res.model);
  out.diagnostics = std::move(res.diagnostics);
  const auto pooled = task.pooled_training();
  if (method.refine) {
    out.model = sgd_refine(out.model, pooled, refine).model;
  }
  const SequenceDataset train(pooled);
  out.train_mse = mse(out.model, train);
  out.test_mse = mse(out.model, task.test);
  return out;
}

/// Runs every cell on a worker pool. Each finished row is passed to
/// `on_row` under a single lock, in completion order. The returned rows are
/// in grid order (N, sigma2, seed, method, R).
inline std::vector<SweepRow> run_sweep(const SweepConfig& sc,
                                       const std::function<void(const SweepRow&)>& on_row = nullptr) {
  struct Cell {
    std::size_t N;
    double sigma2;
    std::uint64_t seed;
    MethodSpec method;
    std::size_t R;
  };
  std::vector<Cell> cells;
  for (auto N : sc.Ns)
    for (auto s2 : sc.sigma2s)
      for (auto seed : sc.seeds)
        for (const auto& m : sc.methods)
          for (auto R : sc.ranks) cells.push_back({N, s2, seed, m, R});
  if (cells.empty()) return {};

  std::vector<SweepRow> rows(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex write_mutex;

  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      const Cell& c = cells[i];
      SweepRow row;
      row.method = c.method.name();
      row.N = c.N;
      row.sigma2 = c.sigma2;
      row.R = c.R;
      row.seed = c.seed;
      const auto t0 = std::chrono::steady_clock::now();
      try {
        TaskOptions o;
        o.N = c.N;
        o.sigma2 = c.sigma2;
        o.seed = c.seed;
        o.L = sc.L;
        o.test_size = sc.test_size;
        const auto task = make_task(sc.task, o);
        const auto res = learn_on_task(task, c.method, c.R, sc.recovery, sc.refine, sc.spectral);
        row.train_mse = res.train_mse;
        row.test_mse = res.test_mse;
        row.status = res.diagnostics.fallback ? "fallback" : "ok";
      } catch (const std::exception& e) {
        row.status = std::string("error: ") + e.what();
      }
      row.wall_time =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::lock_guard<std::mutex> lock(write_mutex);
      rows[i] = row;
      if (on_row) on_row(row);
    }
  };

  const std::size_t nthreads =
      std::min(cells.size(), sc.threads ? sc.threads : default_thread_count());
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return rows;
}

struct SummaryRow {
  std::string method;
  std::size_t N = 0;
  double sigma2 = 0.0;
  std::size_t R = 0;
  std::size_t runs = 0;
  std::size_t ok = 0;
  double mean_train_mse = 0.0;
  double mean_test_mse = 0.0;
  double mean_wall_time = 0.0;
};

/// Averages over seeds; failed runs are excluded from the means.
inline std::vector<SummaryRow> summarize(const std::vector<SweepRow>& rows) {
  std::map<std::tuple<std::string, std::size_t, double, std::size_t>, SummaryRow> acc;
  std::vector<std::tuple<std::string, std::size_t, double, std::size_t>> order;
  for (const auto& r : rows) {
    const auto key = std::make_tuple(r.method, r.N, r.sigma2, r.R);
    auto [it, fresh] = acc.try_emplace(key);
    if (fresh) order.push_back(key);
    auto& s = it->second;
    s.method = r.method;
    s.N = r.N;
    s.sigma2 = r.sigma2;
    s.R = r.R;
    ++s.runs;
    if (r.status.rfind("error", 0) == 0) continue;
    ++s.ok;
    s.mean_train_mse += r.train_mse;
    s.mean_test_mse += r.test_mse;
    s.mean_wall_time += r.wall_time;
  }
  std::vector<SummaryRow> out;
  for (const auto& key : order) {
    auto s = acc.at(key);
    if (s.ok) {
      s.mean_train_mse /= static_cast<double>(s.ok);
      s.mean_test_mse /= static_cast<double>(s.ok);
      s.mean_wall_time /= static_cast<double>(s.ok);
    } else {
      s.mean_train_mse = s.mean_test_mse = std::numeric_limits<double>::quiet_NaN();
    }
    out.push_back(s);
  }
  return out;
}

inline void write_summary_csv(const std::vector<SummaryRow>& rows, std::ostream& out) {
  out << "method,N,sigma2,R,runs,ok,mean_train_mse,mean_test_mse,mean_wall_time\n";
  for (const auto& s : rows) {
    out << csv_escape(s.method) << ',' << s.N << ',' << format_double(s.sigma2) << ',' << s.R
        << ',' << s.runs << ',' << s.ok << ',' << format_double(s.mean_train_mse) << ','
        << format_double(s.mean_test_mse) << ',' << format_double(s.mean_wall_time) << '\n';
  }
}

}  // namespace tt2rnn
