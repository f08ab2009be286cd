#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "landmark/baselines.hpp"
#include "landmark/eval.hpp"
#include "landmark/io.hpp"
#include "landmark/linop.hpp"
#include "landmark/optimizer.hpp"

namespace landmark {

enum class BenchmarkTask { Cssp, Nystrom };

struct BenchmarkConfig {
  BenchmarkTask task = BenchmarkTask::Cssp;
  std::vector<std::string> methods = {"continuous", "uniform", "greedy"};
  std::vector<Index> k_grid;
  Index trials = 1;
  std::uint64_t seed = 0;

  KernelSpec kernel;               // Nystrom task only
  Objective continuous_objective = Objective::Cssp;
  OptimizerConfig opt;             // lambda is filled per k by the search
  LambdaSearchConfig search;

  bool record_timing = true;  // off: wall_time_s column written as 0
  Index workers = 1;

  void validate() const {
    require(!methods.empty(), "benchmark: no methods");
    for (const auto& m : methods)
      require(m == "continuous" || m == "uniform" || m == "greedy",
              "benchmark: unknown method '" + m + "'");
    require(!k_grid.empty(), "benchmark: empty k grid");
    require(trials >= 1, "benchmark: trials must be at least 1");
    require(workers >= 1, "benchmark: workers must be at least 1");
  }
};

struct ReportRow {
  std::string method;
  Index k = 0;
  Index trial = 0;
  std::uint64_t seed = 0;
  double frobenius_sq_error = 0.0;
  double trace_error = 0.0;
  double best_rank_k_error = 0.0;
  double approximation_factor = 0.0;
  double wall_time_s = 0.0;
};

struct BenchmarkFailure {
  std::string method;
  Index k = 0;
  Index trial = 0;
  std::string message;
};

struct BenchmarkResult {
  std::vector<ReportRow> rows;
  std::vector<BenchmarkFailure> failures;
  std::map<Index, double> lambda_per_k;  // continuous method only
  std::filesystem::path report_csv;
  std::filesystem::path metrics_csv;
  std::filesystem::path summary_csv;
  std::filesystem::path report_json;
  std::filesystem::path config_json;
};

namespace detail {

inline const char* kReportHeader =
    "method,k,trial,seed,frobenius_sq_error,trace_error,best_rank_k_error,"
    "approximation_factor,wall_time_s\n";

inline std::string report_csv_text(const std::vector<ReportRow>& rows) {
  std::string out = kReportHeader;
  for (const auto& r : rows) {
    out += r.method + "," + std::to_string(r.k) + "," + std::to_string(r.trial) +
           "," + std::to_string(r.seed) + "," +
           format_double(r.frobenius_sq_error) + "," +
           format_double(r.trace_error) + "," +
           format_double(r.best_rank_k_error) + "," +
           format_double(r.approximation_factor) + "," +
           format_double(r.wall_time_s) + "\n";
  }
  return out;
}

inline std::string metrics_csv_text(const std::vector<ReportRow>& rows) {
  std::string out = "method,k,metric,value,trial,seed\n";
  auto emit = [&](const ReportRow& r, const char* metric, double v) {
    out += r.method + "," + std::to_string(r.k) + "," + metric + "," +
           format_double(v) + "," + std::to_string(r.trial) + "," +
           std::to_string(r.seed) + "\n";
  };
  for (const auto& r : rows) {
    emit(r, "frobenius_sq_error", r.frobenius_sq_error);
    emit(r, "trace_error", r.trace_error);
    emit(r, "best_rank_k_error", r.best_rank_k_error);
    emit(r, "approximation_factor", r.approximation_factor);
    emit(r, "wall_time_s", r.wall_time_s);
  }
  return out;
}

struct Welford {
  Index n = 0;
  double mean = 0.0, m2 = 0.0;
  void add(double v) {
    ++n;
    const double d = v - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (v - mean);
  }
  double std_dev() const {
    return n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1)) : 0.0;
  }
};

inline std::string summary_csv_text(const BenchmarkConfig& cfg,
                                    const std::vector<ReportRow>& rows) {
  std::string out = "method,k,metric,mean,std,trials\n";
  const char* metrics[] = {"frobenius_sq_error", "trace_error",
                           "approximation_factor"};
  for (const auto& method : cfg.methods) {
    for (Index k : cfg.k_grid) {
      for (const char* metric : metrics) {
        Welford acc;
        for (const auto& r : rows) {
          if (r.method != method || r.k != k) continue;
          const double v = metric == std::string("frobenius_sq_error")
                               ? r.frobenius_sq_error
                               : metric == std::string("trace_error")
                                     ? r.trace_error
                                     : r.approximation_factor;
          if (std::isnan(v)) continue;
          acc.add(v);
        }
        if (acc.n == 0) continue;
        out += method + "," + std::to_string(k) + "," + metric + "," +
               format_double(acc.mean) + "," + format_double(acc.std_dev()) +
               "," + std::to_string(acc.n) + "\n";
      }
    }
  }
  return out;
}

inline std::uint64_t method_tag(const std::string& method) {
  std::uint64_t tag = 0;
  for (char c : method) tag = tag * 131 + static_cast<unsigned char>(c);
  return tag;
}

}  // namespace detail

inline nlohmann::json benchmark_config_json(const BenchmarkConfig& cfg) {
  nlohmann::json j;
  j["task"] = cfg.task == BenchmarkTask::Cssp ? "cssp" : "nystrom";
  j["methods"] = cfg.methods;
  j["k_grid"] = cfg.k_grid;
  j["trials"] = cfg.trials;
  j["seed"] = cfg.seed;
  j["sigma"] = cfg.kernel.sigma;
  j["objective"] = cfg.continuous_objective == Objective::NystromFrobenius
                       ? "nystrom-frobenius"
                       : cfg.continuous_objective == Objective::NystromTrace
                             ? "nystrom-trace"
                             : "cssp";
  j["delta"] = cfg.opt.hp.delta;
  j["mc_size"] = cfg.opt.hp.mc_size;
  j["epsilon"] = cfg.opt.epsilon;
  j["tau"] = cfg.opt.tau;
  j["max_iters"] = cfg.opt.max_iters;
  j["base_rate"] = cfg.opt.base_rate;
  j["step_kind"] = cfg.opt.step_kind == StepKind::Adam ? "adam" : "constant";
  j["warm_start"] = cfg.opt.warm_start;
  j["cg_rel_tolerance"] = cfg.opt.cg.rel_tolerance;
  j["cg_max_iters"] = cfg.opt.cg.max_iters;
  j["lambda_lo"] = cfg.search.lambda_lo;
  j["lambda_hi"] = cfg.search.lambda_hi;
  j["lambda_max_runs"] = cfg.search.max_runs;
  j["record_timing"] = cfg.record_timing;
  j["workers"] = cfg.workers;
  return j;
}

/// Full benchmark sweep: for each method x k x trial, select landmarks,
/// evaluate, and write report/metrics/summary CSVs plus JSON records into
/// out_dir.  Continuous runs share one lambda per k, found once by
/// search_lambda under a seed derived from the master seed; each trial then
/// reruns selection under its own derived seed and is cut to exactly k
/// columns.  Row order and formatting are fixed, so a fixed master seed
/// reproduces the files byte for byte (timing column aside).
inline BenchmarkResult run_benchmark(const Matrix& data,
                                     const BenchmarkConfig& cfg,
                                     const std::filesystem::path& out_dir) {
  cfg.validate();
  using clock = std::chrono::steady_clock;

  // operator + dense view for evaluation
  Matrix k_dense;
  std::unique_ptr<SymmetricOperator> op;
  if (cfg.task == BenchmarkTask::Nystrom) {
    op = kernel_operator(data, cfg.kernel,
                         data.rows() <= kKernelMaterializeCap
                             ? KernelMode::Materialized
                             : KernelMode::OnTheFly);
    require(data.rows() <= kKernelMaterializeCap,
            "benchmark: evaluation needs a materializable kernel");
    k_dense = materialize(*op, kKernelMaterializeCap);
  } else {
    op = gram_operator(data);
  }
  const Index n = op->dim();
  for (Index k : cfg.k_grid)
    require(k >= 1 && k <= n, "benchmark: k out of range");

  // per-k references and deterministic per-k prep
  std::map<Index, double> best_rank_k;
  for (Index k : cfg.k_grid)
    if (!best_rank_k.count(k))
      best_rank_k[k] = cfg.task == BenchmarkTask::Cssp
                           ? best_rank_k_error(data, k, ErrorNorm::FrobeniusSq)
                           : best_rank_k_error(k_dense, k, ErrorNorm::FrobeniusSq);

  BenchmarkResult result;
  std::map<Index, std::vector<int>> greedy_masks;
  const bool wants_greedy = std::count(cfg.methods.begin(), cfg.methods.end(),
                                       std::string("greedy")) > 0;
  const bool wants_continuous =
      std::count(cfg.methods.begin(), cfg.methods.end(),
                 std::string("continuous")) > 0;
  if (wants_greedy) {
    for (Index k : cfg.k_grid)
      if (!greedy_masks.count(k))
        greedy_masks[k] = cfg.task == BenchmarkTask::Cssp
                              ? greedy_select(data, k, GreedyObjective::Cssp).mask
                              : greedy_select(k_dense, k,
                                              GreedyObjective::NystromTrace).mask;
  }
  std::map<Index, std::string> lambda_errors;
  if (wants_continuous) {
    for (Index k : cfg.k_grid) {
      if (result.lambda_per_k.count(k) || lambda_errors.count(k)) continue;
      OptimizerConfig oc = cfg.opt;
      oc.seed = derive_seed(cfg.seed, 0x73656172ULL, static_cast<std::uint64_t>(k));
      try {
        LambdaSearchResult sr = search_lambda(k, cfg.continuous_objective, *op,
                                              oc, cfg.search);
        result.lambda_per_k[k] = sr.lambda;
      } catch (const std::exception& e) {
        // the k's continuous cells fail individually; other methods still run
        lambda_errors[k] = e.what();
      }
    }
  }

  struct Cell {
    std::size_t method_idx;
    Index k;
    Index trial;
  };
  std::vector<Cell> cells;
  for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi)
    for (Index k : cfg.k_grid)
      for (Index trial = 0; trial < cfg.trials; ++trial)
        cells.push_back({mi, k, trial});

  std::vector<ReportRow> rows(cells.size());
  std::vector<char> ok(cells.size(), 0);
  std::vector<BenchmarkFailure> failures(cells.size());

  auto run_cell = [&](std::size_t ci) {
    const Cell& cell = cells[ci];
    const std::string& method = cfg.methods[cell.method_idx];
    const std::uint64_t cell_seed =
        derive_seed(cfg.seed, detail::method_tag(method),
                    static_cast<std::uint64_t>(cell.k),
                    static_cast<std::uint64_t>(cell.trial));
    ReportRow row;
    row.method = method;
    row.k = cell.k;
    row.trial = cell.trial;
    row.seed = cell_seed;
    try {
      const auto t0 = clock::now();
      std::vector<int> mask;
      if (method == "uniform") {
        mask = uniform_select(n, cell.k, cell_seed);
      } else if (method == "greedy") {
        mask = greedy_masks.at(cell.k);
      } else {
        auto found = result.lambda_per_k.find(cell.k);
        if (found == result.lambda_per_k.end())
          throw std::runtime_error("lambda search failed for k=" +
                                   std::to_string(cell.k) + ": " +
                                   lambda_errors.at(cell.k));
        OptimizerConfig oc = cfg.opt;
        oc.hp.lambda = found->second;
        oc.seed = cell_seed;
        SelectionResult sel = run_selection(cfg.continuous_objective, *op, oc);
        force_exact_k(sel, cell.k);
        mask = sel.s;
      }

      if (cfg.task == BenchmarkTask::Cssp) {
        row.frobenius_sq_error = cssp_error(data, mask);
        row.trace_error = std::numeric_limits<double>::quiet_NaN();
      } else {
        NystromErrors err = nystrom_errors(k_dense, mask);
        row.frobenius_sq_error = err.frobenius_sq;
        row.trace_error = err.trace;
      }
      row.best_rank_k_error = best_rank_k.at(cell.k);
      ApproxFactor factor =
          approximation_factor(row.frobenius_sq_error, row.best_rank_k_error);
      row.approximation_factor =
          factor.exact_reference ? std::numeric_limits<double>::quiet_NaN()
                                 : factor.value;
      if (cfg.record_timing)
        row.wall_time_s =
            std::chrono::duration<double>(clock::now() - t0).count();
      rows[ci] = std::move(row);
      ok[ci] = 1;
    } catch (const std::exception& e) {
      failures[ci] = {method, cell.k, cell.trial, e.what()};
    }
  };

  if (cfg.workers <= 1 || cells.size() <= 1) {
    for (std::size_t ci = 0; ci < cells.size(); ++ci) run_cell(ci);
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
      for (std::size_t ci = next.fetch_add(1); ci < cells.size();
           ci = next.fetch_add(1))
        run_cell(ci);
    };
    std::vector<std::thread> pool;
    const std::size_t nw = std::min<std::size_t>(
        static_cast<std::size_t>(cfg.workers), cells.size());
    for (std::size_t i = 0; i < nw; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    if (ok[ci])
      result.rows.push_back(rows[ci]);
    else
      result.failures.push_back(failures[ci]);
  }

  // reports
  std::filesystem::create_directories(out_dir);
  result.report_csv = out_dir / "report.csv";
  result.metrics_csv = out_dir / "metrics.csv";
  result.summary_csv = out_dir / "summary.csv";
  result.report_json = out_dir / "report.json";
  result.config_json = out_dir / "config.json";

  atomic_write(result.report_csv, detail::report_csv_text(result.rows));
  atomic_write(result.metrics_csv, detail::metrics_csv_text(result.rows));
  atomic_write(result.summary_csv, detail::summary_csv_text(cfg, result.rows));

  nlohmann::json jr;
  jr["rows"] = nlohmann::json::array();
  for (const auto& r : result.rows) {
    nlohmann::json o;
    o["method"] = r.method;
    o["k"] = r.k;
    o["trial"] = r.trial;
    o["seed"] = r.seed;
    o["frobenius_sq_error"] = r.frobenius_sq_error;
    o["trace_error"] = r.trace_error;
    o["best_rank_k_error"] = r.best_rank_k_error;
    o["approximation_factor"] = r.approximation_factor;
    o["wall_time_s"] = r.wall_time_s;
    jr["rows"].push_back(o);
  }
  jr["failures"] = nlohmann::json::array();
  for (const auto& f : result.failures) {
    nlohmann::json o;
    o["method"] = f.method;
    o["k"] = f.k;
    o["trial"] = f.trial;
    o["message"] = f.message;
    jr["failures"].push_back(o);
  }
  nlohmann::json jl;
  for (const auto& [k, lambda] : result.lambda_per_k)
    jl[std::to_string(k)] = lambda;
  jr["lambda_per_k"] = jl;
  atomic_write(result.report_json, jr.dump(2) + "\n");
  atomic_write(result.config_json, benchmark_config_json(cfg).dump(2) + "\n");
  return result;
}

}  // namespace landmark
