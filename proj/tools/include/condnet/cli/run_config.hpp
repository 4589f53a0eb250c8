#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "condnet/bench.hpp"
#include "condnet/data.hpp"
#include "condnet/network.hpp"
#include "condnet/trainer.hpp"

namespace condnet::cli {

/// Bad flags, bad config or missing inputs; maps to exit code 2.
class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

enum class Command { train, eval, bench, sweep, inspect };
std::string to_string(Command c);
Command command_from_string(const std::string& s);

struct DatasetSpec {
  std::string kind = "mnist";  // mnist | cifar10 | synth
  std::string path;            // relative paths resolve against the data root
  std::size_t valid = 0;       // validation examples; 0 = loader default
  std::size_t train_limit = 0; // keep the first N training examples; 0 = all
  std::size_t test_limit = 0;  // keep the first N test examples; 0 = all

  // synth only
  std::size_t n_classes = 4;
  std::size_t n_features = 32;
  std::size_t n_examples = 3000;
  std::size_t n_train = 2000;
  double separation = 4.0;
};

struct BenchSpec {
  std::vector<MatmulDims> dims{{1024, 1024, 1024}};
  std::vector<std::size_t> block_sizes{64};
  std::vector<double> sparsities{0.125};
  std::size_t trials = 5;
  bool model = true;  // also time a checkpoint's forward pass when one is given
};

struct SweepSpec {
  std::string param = "lambda_s";  // lambda_s | lambda_v | both
  std::vector<double> values;
};

struct InspectSpec {
  std::string split = "test";  // train | valid | test
  std::size_t limit = 0;       // first N examples after class filtering; 0 = all
  std::vector<int> classes;    // empty = every class
};

struct RunConfig {
  Command command = Command::train;
  DatasetSpec dataset;
  ModelKind kind = ModelKind::condnet;
  std::vector<LayerSpec> hidden{{16, 16}};
  Activation activation = Activation::tanh;
  std::optional<double> uniform_rate;  // bdnn rate; defaults to tau
  Hyperparams hyper;
  std::filesystem::path out = "runs/condnet";
  std::filesystem::path checkpoint;  // eval, inspect, bench (model timing)
  std::filesystem::path data_root;   // resolved at load time when empty
  BenchSpec bench;
  SweepSpec sweep;
  InspectSpec inspect;

  /// Input width and class count implied by the dataset spec.
  Architecture architecture() const;
  TrainConfig train_config() const;
  /// Rejects anything a later stage would reject, before any work is done.
  void validate() const;
};

/// Parses a config document. Unknown keys are rejected so typos surface.
RunConfig parse_config(const nlohmann::json& doc, Command command);
RunConfig load_config(const std::filesystem::path& file, Command command);

/// The fully resolved config, as written next to run artifacts.
nlohmann::json to_json(const RunConfig& cfg);

/// `CONDNET_DATA_ROOT` if set, else `./data`.
std::filesystem::path default_data_root();

/// Where the dataset files live: absolute paths as given, relative ones
/// under the data root, with a per-kind default directory.
std::filesystem::path dataset_dir(const RunConfig& cfg);

/// Throws UsageError naming the first missing file.
void check_dataset_files(const RunConfig& cfg);

DataSplits load_dataset(const RunConfig& cfg);

}  // namespace condnet::cli
