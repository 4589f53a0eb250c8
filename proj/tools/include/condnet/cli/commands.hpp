#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "condnet/checkpoint.hpp"
#include "condnet/cli/run_config.hpp"

namespace condnet::cli {

enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitUsage = 2 };

/// Output file names inside RunConfig::out.
inline constexpr const char* kConfigFile = "config.json";
inline constexpr const char* kMetricsFile = "metrics.csv";
inline constexpr const char* kCheckpointFile = "model.ckpt";
inline constexpr const char* kSummaryFile = "summary.csv";
inline constexpr const char* kEvalFile = "eval.csv";
inline constexpr const char* kBenchKernelFile = "bench_kernel.csv";
inline constexpr const char* kBenchModelFile = "bench_model.csv";
inline constexpr const char* kSweepFile = "sweep.csv";
inline constexpr const char* kSweepEpochsFile = "sweep_epochs.csv";

struct TrainSummary {
  TrainResult result;
  double mean_sparsity = 0.0;  // final test pass, averaged over layers
};

/// Trains, then writes config.json, metrics.csv, model.ckpt and summary.csv
/// (`test_error,mean_sparsity,epoch_wall_ms`). The dataset is loaded before
/// anything is written. Progress goes to `log`, the summary line to `out`.
TrainSummary cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& log);

struct EvalSummary {
  EvalResult result;
  double mean_sparsity = 0.0;
};

/// One seeded stochastic pass of a checkpoint over the test split; writes
/// eval.csv (`test_error,mean_sparsity,test_time_s`).
EvalSummary cmd_eval(const RunConfig& cfg, std::ostream& out, std::ostream& log);

struct ModelBench {
  double sparse_s = 0.0;
  double dense_s = 0.0;
  double speedup = 0.0;
};

struct BenchSummary {
  std::vector<BenchRow> kernel;
  bool has_model = false;
  ModelBench model;
};

/// Kernel sweep into bench_kernel.csv; with a checkpoint, also the model's
/// test-set forward time with block skipping vs. dense compute into
/// bench_model.csv (`sparse_s,dense_s,speedup`).
BenchSummary cmd_bench(const RunConfig& cfg, std::ostream& out, std::ostream& log);

/// Test-set forward pass timed with and without block skipping. Both runs
/// draw identical masks; the reported time is the median over `trials`.
ModelBench bench_model_forward(const Model& model, const Dataset& test, std::uint64_t seed,
                               std::size_t trials);

struct SweepRow {
  double lambda = 0.0;
  double test_error = 0.0;
  double test_time_s = 0.0;
  std::string status;  // "ok" or "failed: <reason>"
  std::vector<EpochMetrics> history;
};

/// One training run per grid value; writes sweep.csv
/// (`lambda,test_error,test_time_s,status`) and sweep_epochs.csv
/// (`lambda,epoch,train_nll,valid_err`). A failing run is recorded and the
/// sweep continues.
std::vector<SweepRow> cmd_sweep(const RunConfig& cfg, std::ostream& out, std::ostream& log);

struct InspectSummary {
  /// Per layer: class label → mean σ per block, over the inspected examples.
  std::vector<std::vector<Vector>> class_mean_sigma;
  std::vector<std::size_t> class_counts;
  std::size_t examples = 0;
};

/// Writes, per hidden layer L (1-based):
///   policy_sigma_lL.csv       example_id,class_label,block_id,sigma
///   policy_class_mean_lL.csv  class_label,block_id,mean_sigma
///   policy_weights_lL.csv     block_id,input_id,weight
InspectSummary cmd_inspect(const RunConfig& cfg, std::ostream& out, std::ostream& log);

/// Parses argv, runs the command and maps errors to exit codes.
int run_cli(int argc, char** argv);

}  // namespace condnet::cli
