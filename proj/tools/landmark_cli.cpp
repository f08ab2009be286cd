// Command-line front end: CSV in, selection/benchmark reports out.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "landmark/baselines.hpp"
#include "landmark/benchmark.hpp"
#include "landmark/cssp.hpp"
#include "landmark/eval.hpp"
#include "landmark/io.hpp"
#include "landmark/linop.hpp"
#include "landmark/nystrom.hpp"
#include "landmark/optimizer.hpp"

namespace {

using namespace landmark;

constexpr int kExitOk = 0;
constexpr int kExitBadConfig = 1;
constexpr int kExitPartial = 2;

struct CommonOpts {
  std::string input;
  std::string output_dir = ".";
  bool no_standardize = false;

  double lambda = -1.0;  // negative: unset
  long long target_k = -1;
  double delta = 1.0;
  long long mc_size = 10;
  std::uint64_t seed = 0;
  double epsilon = 1e-3;
  double tau = 0.5;
  long long max_iters = 2000;
  double rate = 0.05;
  std::string step = "adam";
  double cg_tol = 1e-8;
  bool no_warm_start = false;
  bool dump_trajectory = false;

  std::string kernel;  // "rbf" or empty
  double sigma = 1.0;
  std::string objective = "frobenius";  // select-nystrom: frobenius | trace
};

void add_selection_flags(CLI::App* cmd, CommonOpts& o, bool kernel_cmd) {
  cmd->add_option("--input", o.input, "input CSV file")->required();
  cmd->add_option("--output-dir", o.output_dir, "directory for result files");
  cmd->add_flag("--no-standardize", o.no_standardize,
                "skip column standardization");
  cmd->add_option("--lambda", o.lambda, "penalty weight (mutually exclusive with --target-k)");
  cmd->add_option("--target-k", o.target_k, "subset size; runs the lambda search");
  cmd->add_option("--delta", o.delta, "regularization shift")->capture_default_str();
  cmd->add_option("--mc-size", o.mc_size, "Monte Carlo probes per gradient")->capture_default_str();
  cmd->add_option("--seed", o.seed, "master seed")->capture_default_str();
  cmd->add_option("--epsilon", o.epsilon, "truncation threshold")->capture_default_str();
  cmd->add_option("--tau", o.tau, "mask threshold on final t")->capture_default_str();
  cmd->add_option("--max-iters", o.max_iters, "iteration cap")->capture_default_str();
  cmd->add_option("--rate", o.rate, "step size")->capture_default_str();
  cmd->add_option("--step", o.step, "step schedule: adam | constant")->capture_default_str();
  cmd->add_option("--cg-tol", o.cg_tol, "CG relative tolerance")->capture_default_str();
  cmd->add_flag("--no-warm-start", o.no_warm_start, "cold-start every CG solve");
  cmd->add_flag("--dump-trajectory", o.dump_trajectory,
                "write per-iteration t values to trajectory.csv");
  if (kernel_cmd) {
    cmd->add_option("--kernel", o.kernel, "kernel family (rbf)")->capture_default_str();
    cmd->add_option("--sigma", o.sigma, "RBF bandwidth")->capture_default_str();
    cmd->add_option("--objective", o.objective,
                    "nystrom objective: frobenius | trace")->capture_default_str();
  }
}

OptimizerConfig make_opt_config(const CommonOpts& o) {
  OptimizerConfig cfg;
  cfg.step_kind = o.step == "constant" ? StepKind::Constant : StepKind::Adam;
  cfg.base_rate = o.rate;
  cfg.max_iters = static_cast<Index>(o.max_iters);
  cfg.epsilon = o.epsilon;
  cfg.tau = o.tau;
  cfg.hp.delta = o.delta;
  cfg.hp.lambda = o.lambda >= 0.0 ? o.lambda : 0.0;
  cfg.hp.mc_size = static_cast<Index>(o.mc_size);
  cfg.cg.rel_tolerance = o.cg_tol;
  cfg.seed = o.seed;
  cfg.warm_start = !o.no_warm_start;
  cfg.trajectory_stride = o.dump_trajectory ? 1 : 10;
  return cfg;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = landmark::detail::trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<Index> parse_index_list(const std::string& s, const char* what) {
  std::vector<Index> out;
  for (const auto& item : split_list(s)) {
    try {
      out.push_back(static_cast<Index>(std::stoll(item)));
    } catch (const std::exception&) {
      throw std::invalid_argument(std::string(what) + ": bad entry '" + item + "'");
    }
  }
  return out;
}

void warn(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

nlohmann::json selection_to_json(const SelectionResult& sel) {
  nlohmann::json j;
  j["s"] = sel.s;
  j["selected"] = sel.selected();
  j["count"] = sel.count();
  j["t_final"] = std::vector<double>(sel.t_final.data(),
                                     sel.t_final.data() + sel.t_final.size());
  j["iterations"] = sel.iterations;
  j["termination"] = sel.termination == Termination::Stall
                         ? "stall"
                         : sel.termination == Termination::AllFrozen
                               ? "all-frozen"
                               : "max-iters";
  j["truncated_coordinates"] = sel.truncations.size();
  j["cg_warnings"] = sel.cg_warnings;
  return j;
}

int run_select(const CommonOpts& o, bool kernel_cmd) {
  if ((o.lambda >= 0.0) == (o.target_k >= 0)) {
    std::cerr << "error: give exactly one of --lambda or --target-k\n";
    return kExitBadConfig;
  }
  if (kernel_cmd && !o.kernel.empty() && o.kernel != "rbf") {
    std::cerr << "error: unsupported kernel '" << o.kernel << "'\n";
    return kExitBadConfig;
  }
  if (kernel_cmd && o.objective != "frobenius" && o.objective != "trace") {
    std::cerr << "error: --objective must be frobenius or trace\n";
    return kExitBadConfig;
  }

  IngestResult in = ingest_csv(o.input, !o.no_standardize);
  warn(in.warnings);

  std::unique_ptr<SymmetricOperator> op;
  Objective obj;
  if (kernel_cmd) {
    KernelSpec spec{o.sigma};
    op = kernel_operator(in.data, spec,
                         in.data.rows() <= kKernelMaterializeCap
                             ? KernelMode::Materialized
                             : KernelMode::OnTheFly);
    obj = o.objective == "trace" ? Objective::NystromTrace
                                 : Objective::NystromFrobenius;
  } else {
    op = gram_operator(in.data);
    obj = Objective::Cssp;
  }

  OptimizerConfig cfg = make_opt_config(o);
  const std::filesystem::path out_dir(o.output_dir);

  SelectionResult sel;
  double lambda_used = o.lambda;
  try {
    if (o.target_k >= 0) {
      LambdaSearchResult sr =
          search_lambda(static_cast<Index>(o.target_k), obj, *op, cfg);
      sel = std::move(sr.result);
      lambda_used = sr.lambda;
      if (sr.budget_exhausted)
        std::cerr << "warning: lambda search budget exhausted; "
                     "closest run postprocessed to the target size\n";
    } else {
      sel = run_selection(obj, *op, cfg);
    }
  } catch (const OptimizerFailure& e) {
    write_trajectory_csv(out_dir / "trajectory.csv", e.trajectory);
    std::cerr << "error: " << e.what() << " (trajectory dumped)\n";
    return kExitBadConfig;
  }

  nlohmann::json j = selection_to_json(sel);
  j["command"] = kernel_cmd ? "select-nystrom" : "select-cssp";
  j["input"] = o.input;
  j["n"] = op->dim();
  j["lambda"] = lambda_used;
  if (o.target_k >= 0) j["target_k"] = o.target_k;
  j["delta"] = o.delta;
  j["mc_size"] = o.mc_size;
  j["seed"] = o.seed;
  j["epsilon"] = o.epsilon;
  j["tau"] = o.tau;
  if (kernel_cmd) {
    j["kernel"] = "rbf";
    j["sigma"] = o.sigma;
    j["objective"] = o.objective;
  }

  // cheap exact metrics while the dense view is at hand
  const Index kk = sel.count();
  if (!kernel_cmd) {
    const double err = cssp_error(in.data, sel.s);
    const double ref = best_rank_k_error(in.data, kk, ErrorNorm::FrobeniusSq);
    j["frobenius_sq_error"] = err;
    j["best_rank_k_error"] = ref;
    ApproxFactor f = approximation_factor(err, ref);
    if (!f.exact_reference) j["approximation_factor"] = f.value;
  } else if (op->dim() <= kKernelMaterializeCap) {
    Matrix kd = materialize(*op, kKernelMaterializeCap);
    NystromErrors err = nystrom_errors(kd, sel.s);
    const double ref = best_rank_k_error(kd, kk, ErrorNorm::FrobeniusSq);
    j["frobenius_sq_error"] = err.frobenius_sq;
    j["trace_error"] = err.trace;
    j["best_rank_k_error"] = ref;
    ApproxFactor f = approximation_factor(err.frobenius_sq, ref);
    if (!f.exact_reference) j["approximation_factor"] = f.value;
  }

  atomic_write(out_dir / "selection.json", j.dump(2) + "\n");
  if (o.dump_trajectory)
    write_trajectory_csv(out_dir / "trajectory.csv", sel.trajectory);

  std::cout << "selected " << kk << " of " << op->dim() << " columns (lambda "
            << lambda_used << ", " << j["termination"].get<std::string>()
            << " after " << sel.iterations << " iterations)\n";
  std::cout << "wrote " << (out_dir / "selection.json").string() << "\n";
  return kExitOk;
}

int run_benchmark_cmd(const CommonOpts& o, const std::string& methods_arg,
                      const std::string& k_grid_arg, long long trials,
                      long long workers, bool no_timing) {
  BenchmarkConfig cfg;
  cfg.methods = split_list(methods_arg);
  cfg.k_grid = parse_index_list(k_grid_arg, "--k-grid");
  cfg.trials = static_cast<Index>(trials);
  cfg.seed = o.seed;
  cfg.workers = static_cast<Index>(workers);
  cfg.record_timing = !no_timing;
  cfg.opt = make_opt_config(o);

  if (!o.kernel.empty()) {
    if (o.kernel != "rbf") {
      std::cerr << "error: unsupported kernel '" << o.kernel << "'\n";
      return kExitBadConfig;
    }
    cfg.task = BenchmarkTask::Nystrom;
    cfg.kernel.sigma = o.sigma;
    cfg.continuous_objective = o.objective == "trace"
                                   ? Objective::NystromTrace
                                   : Objective::NystromFrobenius;
  } else {
    cfg.task = BenchmarkTask::Cssp;
    cfg.continuous_objective = Objective::Cssp;
  }

  IngestResult in = ingest_csv(o.input, !o.no_standardize);
  warn(in.warnings);

  BenchmarkResult res = run_benchmark(in.data, cfg, o.output_dir);
  std::cout << "wrote " << res.report_csv.string() << " ("
            << res.rows.size() << " rows";
  if (!res.failures.empty())
    std::cout << ", " << res.failures.size() << " failed cells";
  std::cout << ")\n";
  for (const auto& f : res.failures)
    std::cerr << "failed: " << f.method << " k=" << f.k << " trial=" << f.trial
              << ": " << f.message << "\n";
  return res.failures.empty() ? kExitOk : kExitPartial;
}

int run_evaluate(const CommonOpts& o, const std::string& selection_path,
                 const std::string& indices_arg, long long k_ref) {
  IngestResult in = ingest_csv(o.input, !o.no_standardize);
  warn(in.warnings);

  const bool kernel_eval = !o.kernel.empty();
  if (kernel_eval && o.kernel != "rbf") {
    std::cerr << "error: unsupported kernel '" << o.kernel << "'\n";
    return kExitBadConfig;
  }
  const Index n = kernel_eval ? in.data.rows() : in.data.cols();

  std::vector<int> mask(n, 0);
  if (!selection_path.empty()) {
    std::ifstream f(selection_path);
    if (!f) {
      std::cerr << "error: cannot open " << selection_path << "\n";
      return kExitBadConfig;
    }
    nlohmann::json j;
    f >> j;
    std::vector<int> s = j.at("s").get<std::vector<int>>();
    if (static_cast<Index>(s.size()) != n) {
      std::cerr << "error: selection length " << s.size()
                << " does not match input dimension " << n << "\n";
      return kExitBadConfig;
    }
    mask = std::move(s);
  } else if (!indices_arg.empty()) {
    for (Index j : parse_index_list(indices_arg, "--indices")) {
      if (j < 0 || j >= n) {
        std::cerr << "error: index " << j << " out of range\n";
        return kExitBadConfig;
      }
      mask[j] = 1;
    }
  } else {
    std::cerr << "error: give --selection or --indices\n";
    return kExitBadConfig;
  }

  Index kk = 0;
  for (int v : mask) kk += v;
  const Index ref_k = k_ref >= 0 ? static_cast<Index>(k_ref) : kk;

  nlohmann::json j;
  j["command"] = "evaluate";
  j["input"] = o.input;
  j["k"] = kk;
  j["reference_k"] = ref_k;
  double err;
  if (kernel_eval) {
    KernelSpec spec{o.sigma};
    auto op = kernel_operator(in.data, spec, KernelMode::Materialized);
    Matrix kd = materialize(*op, kKernelMaterializeCap);
    NystromErrors ne = nystrom_errors(kd, mask);
    err = ne.frobenius_sq;
    j["trace_error"] = ne.trace;
    j["best_rank_k_error"] = best_rank_k_error(kd, ref_k, ErrorNorm::FrobeniusSq);
  } else {
    err = cssp_error(in.data, mask);
    j["best_rank_k_error"] =
        best_rank_k_error(in.data, ref_k, ErrorNorm::FrobeniusSq);
  }
  j["frobenius_sq_error"] = err;
  ApproxFactor f = approximation_factor(err, j["best_rank_k_error"].get<double>());
  if (!f.exact_reference) j["approximation_factor"] = f.value;

  atomic_write(std::filesystem::path(o.output_dir) / "evaluation.json",
               j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continuous landmark selection for column subsets and Nystrom approximation"};
  app.require_subcommand(1);

  CommonOpts sel_cssp, sel_nys, bench, eval_o;
  std::string methods = "continuous,uniform,greedy";
  std::string k_grid;
  long long trials = 1, workers = 1, eval_k = -1;
  bool no_timing = false;
  std::string selection_path, indices_arg;

  CLI::App* c1 = app.add_subcommand("select-cssp", "select data columns");
  add_selection_flags(c1, sel_cssp, false);

  CLI::App* c2 = app.add_subcommand("select-nystrom", "select kernel landmarks");
  add_selection_flags(c2, sel_nys, true);

  CLI::App* c3 = app.add_subcommand("benchmark",
                                    "sweep methods over a k grid with trials");
  add_selection_flags(c3, bench, true);
  c3->add_option("--methods", methods, "comma list: continuous,uniform,greedy")->capture_default_str();
  c3->add_option("--k-grid", k_grid, "comma list of subset sizes")->required();
  c3->add_option("--trials", trials, "trials per cell")->capture_default_str();
  c3->add_option("--workers", workers, "concurrent grid cells")->capture_default_str();
  c3->add_flag("--no-timing", no_timing, "write wall_time_s as 0 for reproducible files");

  CLI::App* c4 = app.add_subcommand("evaluate", "score an existing selection");
  c4->add_option("--input", eval_o.input, "input CSV file")->required();
  c4->add_option("--output-dir", eval_o.output_dir, "directory for result files");
  c4->add_flag("--no-standardize", eval_o.no_standardize, "skip column standardization");
  c4->add_option("--selection", selection_path, "selection.json from a select run");
  c4->add_option("--indices", indices_arg, "comma list of selected indices");
  c4->add_option("--k", eval_k, "reference rank (default: selection size)");
  c4->add_option("--kernel", eval_o.kernel, "kernel family (rbf) for Nystrom evaluation");
  c4->add_option("--sigma", eval_o.sigma, "RBF bandwidth")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitBadConfig;
  }

  try {
    if (c1->parsed()) return run_select(sel_cssp, false);
    if (c2->parsed()) return run_select(sel_nys, true);
    if (c3->parsed())
      return run_benchmark_cmd(bench, methods, k_grid, trials, workers, no_timing);
    if (c4->parsed()) return run_evaluate(eval_o, selection_path, indices_arg, eval_k);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadConfig;
  }
  return kExitBadConfig;
}
