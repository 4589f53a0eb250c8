#include "condnet/cli/run_config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>

namespace condnet::cli {
namespace {

using nlohmann::json;

void check_keys(const json& obj, const char* where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw UsageError(std::string(where) + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : obj.items())
    if (!ok.count(key)) throw UsageError(std::string(where) + ": unknown key '" + key + "'");
}

template <class T>
void read(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw UsageError(std::string("config key '") + key + "': " + e.what());
  }
}

// A per-layer value given as a number or an array of numbers.
void read_layers(const json& obj, const char* key, Vector& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (v.is_number()) {
    out = {v.get<double>()};
  } else if (v.is_array() && !v.empty() && std::all_of(v.begin(), v.end(), [](const json& e) {
               return e.is_number();
             })) {
    out = v.get<Vector>();
  } else {
    throw UsageError(std::string("config key '") + key + "': expected a number or array of numbers");
  }
}

PenaltyNorm norm_from_string(const std::string& s) {
  if (s == "absolute") return PenaltyNorm::absolute;
  if (s == "squared") return PenaltyNorm::squared;
  throw UsageError("unknown norm '" + s + "' (expected absolute or squared)");
}

std::string to_string(PenaltyNorm n) { return n == PenaltyNorm::squared ? "squared" : "absolute"; }

PolicyInit policy_init_from_string(const std::string& s) {
  if (s == "zeros") return PolicyInit::zeros;
  if (s == "glorot") return PolicyInit::glorot;
  throw UsageError("unknown policy_init '" + s + "' (expected zeros or glorot)");
}

CostReduction reduction_from_string(const std::string& s) {
  if (s == "mean") return CostReduction::mean;
  if (s == "sum") return CostReduction::sum;
  throw UsageError("unknown reduction '" + s + "' (expected mean or sum)");
}

std::string to_string(CostReduction r) { return r == CostReduction::sum ? "sum" : "mean"; }

std::string to_string(PolicyInit p) { return p == PolicyInit::zeros ? "zeros" : "glorot"; }

template <class F>
auto translate(F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

void parse_dataset(const json& j, DatasetSpec& d) {
  check_keys(j, "dataset", {"kind", "path", "valid", "train_limit", "test_limit", "n_classes",
                            "n_features", "n_examples", "n_train", "separation"});
  read(j, "kind", d.kind);
  read(j, "path", d.path);
  read(j, "valid", d.valid);
  read(j, "train_limit", d.train_limit);
  read(j, "test_limit", d.test_limit);
  read(j, "n_classes", d.n_classes);
  read(j, "n_features", d.n_features);
  read(j, "n_examples", d.n_examples);
  read(j, "n_train", d.n_train);
  read(j, "separation", d.separation);
}

void parse_model(const json& j, RunConfig& c) {
  check_keys(j, "model", {"kind", "hidden", "activation", "uniform_rate"});
  if (j.contains("kind")) c.kind = translate([&] { return model_kind_from_string(j.at("kind").get<std::string>()); });
  if (j.contains("activation"))
    c.activation = translate([&] { return activation_from_string(j.at("activation").get<std::string>()); });
  if (j.contains("hidden")) {
    const json& h = j.at("hidden");
    if (!h.is_array()) throw UsageError("model.hidden: expected an array of layers");
    c.hidden.clear();
    for (const json& layer : h) {
      check_keys(layer, "model.hidden[]", {"blocks", "block_size"});
      LayerSpec s;
      read(layer, "blocks", s.n_blocks);
      read(layer, "block_size", s.block_size);
      c.hidden.push_back(s);
    }
  }
  if (j.contains("uniform_rate")) {
    double r = 0.0;
    read(j, "uniform_rate", r);
    c.uniform_rate = r;
  }
}

void parse_train(const json& j, Hyperparams& h) {
  check_keys(j, "train", {"alpha", "alpha_pi", "lambda_s", "lambda_v", "lambda_l2", "tau",
                          "batch_size", "max_epochs", "patience", "norm", "reduction",
                          "baseline", "baseline_decay", "policy_init"});
  read(j, "alpha", h.alpha);
  read_layers(j, "alpha_pi", h.alpha_pi);
  read_layers(j, "lambda_s", h.lambda_s);
  read_layers(j, "lambda_v", h.lambda_v);
  read(j, "lambda_l2", h.lambda_l2);
  read_layers(j, "tau", h.tau);
  read(j, "batch_size", h.batch_size);
  read(j, "max_epochs", h.max_epochs);
  read(j, "patience", h.patience);
  if (j.contains("norm")) h.norm = norm_from_string(j.at("norm").get<std::string>());
  if (j.contains("reduction"))
    h.reduction = reduction_from_string(j.at("reduction").get<std::string>());
  read(j, "baseline", h.baseline);
  read(j, "baseline_decay", h.baseline_decay);
  if (j.contains("policy_init")) h.policy_init = policy_init_from_string(j.at("policy_init").get<std::string>());
}

void parse_bench(const json& j, BenchSpec& b) {
  check_keys(j, "bench", {"dims", "block_sizes", "sparsities", "trials", "model"});
  if (j.contains("dims")) {
    b.dims.clear();
    for (const json& d : j.at("dims")) {
      if (!d.is_array() || d.size() != 3)
        throw UsageError("bench.dims: each entry is [rows, inner, cols]");
      b.dims.push_back({d[0].get<std::size_t>(), d[1].get<std::size_t>(), d[2].get<std::size_t>()});
    }
  }
  read(j, "block_sizes", b.block_sizes);
  read(j, "sparsities", b.sparsities);
  read(j, "trials", b.trials);
  read(j, "model", b.model);
}

void parse_sweep(const json& j, SweepSpec& s) {
  check_keys(j, "sweep", {"param", "values"});
  read(j, "param", s.param);
  read(j, "values", s.values);
}

void parse_inspect(const json& j, InspectSpec& s) {
  check_keys(j, "inspect", {"split", "limit", "classes"});
  read(j, "split", s.split);
  read(j, "limit", s.limit);
  read(j, "classes", s.classes);
}

}  // namespace

std::string to_string(Command c) {
  switch (c) {
    case Command::train: return "train";
    case Command::eval: return "eval";
    case Command::bench: return "bench";
    case Command::sweep: return "sweep";
    case Command::inspect: return "inspect";
  }
  return "?";
}

Command command_from_string(const std::string& s) {
  if (s == "train") return Command::train;
  if (s == "eval") return Command::eval;
  if (s == "bench") return Command::bench;
  if (s == "sweep") return Command::sweep;
  if (s == "inspect") return Command::inspect;
  throw UsageError("unknown command '" + s + "'");
}

Architecture RunConfig::architecture() const {
  Architecture a;
  if (dataset.kind == "mnist") {
    a.n_inputs = 784;
    a.n_classes = 10;
  } else if (dataset.kind == "cifar10") {
    a.n_inputs = 3072;
    a.n_classes = 10;
  } else {
    a.n_inputs = dataset.n_features;
    a.n_classes = dataset.n_classes;
  }
  a.hidden = hidden;
  a.activation = activation;
  return a;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t{kind, architecture(), hyper, {}};
  if (uniform_rate) t.uniform_rate = {*uniform_rate};
  return t;
}

void RunConfig::validate() const {
  if (dataset.kind != "mnist" && dataset.kind != "cifar10" && dataset.kind != "synth")
    throw UsageError("dataset.kind must be mnist, cifar10 or synth (got '" + dataset.kind + "')");
  if (dataset.kind == "synth") {
    if (dataset.n_classes < 2 || dataset.n_features == 0)
      throw UsageError("dataset: synth needs n_classes >= 2 and n_features >= 1");
    const std::size_t valid = dataset.valid ? dataset.valid : dataset.n_examples / 6;
    if (dataset.n_train < 2 || dataset.n_train + valid >= dataset.n_examples)
      throw UsageError("dataset: synth n_train + valid must leave test examples");
  }
  if (!(dataset.separation > 0.0)) throw UsageError("dataset.separation must be > 0");

  const Architecture arch = architecture();
  translate([&] {
    arch.validate();
    hyper.validate(arch.hidden.size());
    return 0;
  });
  if (uniform_rate && !(*uniform_rate > 0.0 && *uniform_rate <= 1.0))
    throw UsageError("model.uniform_rate must be in (0, 1]");

  if ((command == Command::eval || command == Command::inspect) && checkpoint.empty())
    throw UsageError(to_string(command) + " needs a checkpoint (--checkpoint or \"checkpoint\")");
  if (command == Command::bench) {
    if (bench.dims.empty() || bench.block_sizes.empty() || bench.sparsities.empty())
      throw UsageError("bench: dims, block_sizes and sparsities must be non-empty");
    if (bench.trials == 0) throw UsageError("bench.trials must be >= 1");
    for (const double s : bench.sparsities)
      if (!(s > 0.0 && s <= 1.0)) throw UsageError("bench.sparsities must lie in (0, 1]");
    for (const auto& d : bench.dims)
      for (const std::size_t b : bench.block_sizes)
        if (b == 0 || d.inner % b || d.cols % b)
          throw UsageError("bench: block size " + std::to_string(b) +
                           " must divide inner and cols of every dims entry");
  }
  if (command == Command::sweep) {
    if (sweep.values.empty()) throw UsageError("sweep.values must be non-empty");
    if (sweep.param != "lambda_s" && sweep.param != "lambda_v" && sweep.param != "both")
      throw UsageError("sweep.param must be lambda_s, lambda_v or both");
    for (const double v : sweep.values)
      if (!(v >= 0.0)) throw UsageError("sweep.values must be >= 0");
  }
  if (command == Command::inspect) {
    if (inspect.split != "train" && inspect.split != "valid" && inspect.split != "test")
      throw UsageError("inspect.split must be train, valid or test");
    for (const int c : inspect.classes)
      if (c < 0 || static_cast<std::size_t>(c) >= arch.n_classes)
        throw UsageError("inspect.classes: class " + std::to_string(c) + " out of range");
  }
}

RunConfig parse_config(const json& doc, Command command) {
  check_keys(doc, "config", {"dataset", "model", "train", "seed", "out", "checkpoint", "bench",
                             "sweep", "inspect"});
  RunConfig c;
  c.command = command;
  c.hyper.alpha_pi = {5e-5};
  c.hyper.lambda_s = {200.0};
  c.hyper.lambda_v = {200.0};
  c.hyper.lambda_l2 = 0.005;
  c.hyper.tau = {1.0 / 16.0};
  if (doc.contains("dataset")) parse_dataset(doc.at("dataset"), c.dataset);
  if (doc.contains("model")) parse_model(doc.at("model"), c);
  if (doc.contains("train")) parse_train(doc.at("train"), c.hyper);
  read(doc, "seed", c.hyper.seed);
  if (doc.contains("out")) c.out = doc.at("out").get<std::string>();
  if (doc.contains("checkpoint")) c.checkpoint = doc.at("checkpoint").get<std::string>();
  if (doc.contains("bench")) parse_bench(doc.at("bench"), c.bench);
  if (doc.contains("sweep")) parse_sweep(doc.at("sweep"), c.sweep);
  if (doc.contains("inspect")) parse_inspect(doc.at("inspect"), c.inspect);
  return c;
}

RunConfig load_config(const std::filesystem::path& file, Command command) {
  std::ifstream in(file);
  if (!in) throw UsageError("cannot open config " + file.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError(file.string() + ": " + e.what());
  }
  return parse_config(doc, command);
}

json to_json(const RunConfig& c) {
  json hidden = json::array();
  for (const auto& l : c.hidden) hidden.push_back({{"blocks", l.n_blocks}, {"block_size", l.block_size}});
  json model = {{"kind", condnet::to_string(c.kind)},
                {"hidden", hidden},
                {"activation", condnet::to_string(c.activation)}};
  if (c.uniform_rate) model["uniform_rate"] = *c.uniform_rate;
  const Hyperparams& h = c.hyper;
  json dims = json::array();
  for (const auto& d : c.bench.dims) dims.push_back({d.rows, d.inner, d.cols});
  return {
      {"dataset",
       {{"kind", c.dataset.kind},
        {"path", c.dataset.path},
        {"valid", c.dataset.valid},
        {"train_limit", c.dataset.train_limit},
        {"test_limit", c.dataset.test_limit},
        {"n_classes", c.dataset.n_classes},
        {"n_features", c.dataset.n_features},
        {"n_examples", c.dataset.n_examples},
        {"n_train", c.dataset.n_train},
        {"separation", c.dataset.separation}}},
      {"model", model},
      {"train",
       {{"alpha", h.alpha},
        {"alpha_pi", h.alpha_pi},
        {"lambda_s", h.lambda_s},
        {"lambda_v", h.lambda_v},
        {"lambda_l2", h.lambda_l2},
        {"tau", h.tau},
        {"batch_size", h.batch_size},
        {"max_epochs", h.max_epochs},
        {"patience", h.patience},
        {"norm", to_string(h.norm)},
        {"reduction", to_string(h.reduction)},
        {"baseline", h.baseline},
        {"baseline_decay", h.baseline_decay},
        {"policy_init", to_string(h.policy_init)}}},
      {"seed", h.seed},
      {"out", c.out.string()},
      {"checkpoint", c.checkpoint.string()},
      {"bench",
       {{"dims", dims},
        {"block_sizes", c.bench.block_sizes},
        {"sparsities", c.bench.sparsities},
        {"trials", c.bench.trials},
        {"model", c.bench.model}}},
      {"sweep", {{"param", c.sweep.param}, {"values", c.sweep.values}}},
      {"inspect",
       {{"split", c.inspect.split}, {"limit", c.inspect.limit}, {"classes", c.inspect.classes}}},
  };
}

std::filesystem::path default_data_root() {
  if (const char* env = std::getenv("CONDNET_DATA_ROOT"); env && *env) return env;
  return "data";
}

std::filesystem::path dataset_dir(const RunConfig& cfg) {
  std::filesystem::path p = cfg.dataset.path;
  if (p.empty()) p = cfg.dataset.kind == "cifar10" ? "cifar-10-batches-bin" : cfg.dataset.kind;
  if (p.is_absolute()) return p;
  const auto root = cfg.data_root.empty() ? default_data_root() : cfg.data_root;
  return root / p;
}

void check_dataset_files(const RunConfig& cfg) {
  if (cfg.dataset.kind == "synth") return;
  const auto dir = dataset_dir(cfg);
  std::vector<std::string> files;
  if (cfg.dataset.kind == "mnist") {
    files = {"train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte",
             "t10k-labels-idx1-ubyte"};
  } else {
    for (int i = 1; i <= 5; ++i) files.push_back("data_batch_" + std::to_string(i) + ".bin");
    files.push_back("test_batch.bin");
  }
  for (const auto& f : files)
    if (!std::filesystem::is_regular_file(dir / f))
      throw UsageError("dataset file not found: " + (dir / f).string() +
                       " (set CONDNET_DATA_ROOT or dataset.path)");
}

DataSplits load_dataset(const RunConfig& cfg) {
  check_dataset_files(cfg);
  const DatasetSpec& d = cfg.dataset;
  DataSplits s;
  if (d.kind == "mnist") {
    s = load_mnist_idx(dataset_dir(cfg), d.valid ? d.valid : 10000);
  } else if (d.kind == "cifar10") {
    s = load_cifar10_bin(dataset_dir(cfg), d.valid ? d.valid : 5000);
  } else {
    Rng rng = make_rng(cfg.hyper.seed, RngStream::data);
    const Dataset all = synth_blobs(d.n_classes, d.n_features, d.n_examples, d.separation, rng);
    s = split_consecutive(all, d.n_train, d.valid ? d.valid : d.n_examples / 6);
  }
  if (d.train_limit) s.train = s.train.head(d.train_limit);
  if (d.test_limit) s.test = s.test.head(d.test_limit);
  return s;
}

}  // namespace condnet::cli
