#include "condnet/cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <optional>

#include <CLI11.hpp>

namespace condnet::cli {
namespace {

namespace fs = std::filesystem;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fixed(double v, int digits) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

double mean(const Vector& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  return os;
}

void write_file(const fs::path& p, const std::string& text) {
  auto os = open_out(p);
  os << text;
  if (!os) throw std::runtime_error("write failed: " + p.string());
}

Checkpoint load_checked(const RunConfig& cfg, const DataSplits& data) {
  if (!fs::is_regular_file(cfg.checkpoint))
    throw UsageError("checkpoint not found: " + cfg.checkpoint.string());
  Checkpoint ck = load_checkpoint(cfg.checkpoint);
  const Architecture& a = ck.model.net.arch;
  if (a.n_inputs != data.test.x.cols() || a.n_classes != data.test.n_classes)
    throw std::runtime_error("checkpoint/dataset mismatch: model expects " +
                             std::to_string(a.n_inputs) + " features and " +
                             std::to_string(a.n_classes) + " classes, dataset has " +
                             std::to_string(data.test.x.cols()) + " and " +
                             std::to_string(data.test.n_classes));
  return ck;
}

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

const Dataset& pick_split(const DataSplits& d, const std::string& name) {
  if (name == "train") return d.train;
  if (name == "valid") return d.valid;
  return d.test;
}

}  // namespace

TrainSummary cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& log) {
  cfg.validate();
  const DataSplits data = load_dataset(cfg);
  const TrainConfig tc = cfg.train_config();

  fs::create_directories(cfg.out);
  write_file(cfg.out / kConfigFile, to_json(cfg).dump(2) + "\n");
  auto metrics = open_out(cfg.out / kMetricsFile);
  write_metrics_header(metrics, tc.arch.hidden.size());

  TrainSummary s;
  s.result = train(tc, data, [&](const EpochMetrics& m) {
    write_metrics_row(metrics, m);
    metrics.flush();
    log << "epoch " << m.epoch << " train_nll=" << fixed(m.train_nll, 4)
        << " valid_err=" << fixed(m.valid_err, 4) << " test_err=" << fixed(m.test_err, 4)
        << " sparsity=" << fixed(mean(m.sparsity), 3) << " ms=" << fixed(m.wall_ms, 0) << '\n';
  });
  s.mean_sparsity = mean(s.result.test_sparsity);

  Checkpoint ck{s.result.model, cfg.hyper.seed,
                {{"dataset", cfg.dataset.kind},
                 {"best_epoch", std::to_string(s.result.best_epoch)},
                 {"test_error", num(s.result.test_err)}}};
  save_checkpoint(cfg.out / kCheckpointFile, ck);

  const std::string header = "test_error,mean_sparsity,epoch_wall_ms\n";
  const std::string row = num(s.result.test_err) + "," + num(s.mean_sparsity) + "," +
                          fixed(s.result.mean_epoch_wall_ms, 3) + "\n";
  write_file(cfg.out / kSummaryFile, header + row);
  out << header << row;
  return s;
}

EvalSummary cmd_eval(const RunConfig& cfg, std::ostream& out, std::ostream& log) {
  cfg.validate();
  const DataSplits data = load_dataset(cfg);
  const Checkpoint ck = load_checked(cfg, data);
  log << "eval " << to_string(ck.model.kind) << " on " << data.test.size() << " test examples\n";

  EvalSummary s;
  Rng rng = make_rng(cfg.hyper.seed, RngStream::eval, 0);
  s.result = evaluate(ck.model, data.test, rng);
  s.mean_sparsity = mean(s.result.sparsity);

  fs::create_directories(cfg.out);
  const std::string header = "test_error,mean_sparsity,test_time_s\n";
  const std::string row =
      num(s.result.error) + "," + num(s.mean_sparsity) + "," + fixed(s.result.wall_s, 6) + "\n";
  write_file(cfg.out / kEvalFile, header + row);
  out << header << row;
  return s;
}

ModelBench bench_model_forward(const Model& model, const Dataset& test, std::uint64_t seed,
                               std::size_t trials) {
  const std::size_t chunk = 1000;
  std::vector<Matrix> chunks;
  for (std::size_t b = 0; b < test.size(); b += chunk) {
    std::vector<std::size_t> idx(std::min(test.size(), b + chunk) - b);
    std::iota(idx.begin(), idx.end(), b);
    chunks.push_back(test.x.gather_rows(idx));
  }
  auto pass = [&](bool dense) {
    ForwardOptions opt = model.forward_options();
    opt.dense_compute = dense;
    return [&, opt] {
      Rng rng = make_rng(seed, RngStream::eval, 0);
      for (const Matrix& x : chunks) (void)forward(model.net, model.policies, x, rng, opt);
    };
  };
  ModelBench r;
  r.sparse_s = time_median_ns(pass(false), trials) * 1e-9;
  r.dense_s = time_median_ns(pass(true), trials) * 1e-9;
  r.speedup = r.dense_s / r.sparse_s;
  return r;
}

BenchSummary cmd_bench(const RunConfig& cfg, std::ostream& out, std::ostream& log) {
  cfg.validate();
  BenchSummary s;
  std::optional<Checkpoint> ck;
  std::optional<DataSplits> data;
  if (!cfg.checkpoint.empty() && cfg.bench.model) {
    data = load_dataset(cfg);
    ck = load_checked(cfg, *data);
  }

  fs::create_directories(cfg.out);
  log << "kernel sweep: " << cfg.bench.dims.size() * cfg.bench.block_sizes.size() *
                                 cfg.bench.sparsities.size()
      << " points, " << cfg.bench.trials << " trials each\n";
  s.kernel = bench_sweep(cfg.bench.dims, cfg.bench.block_sizes, cfg.bench.sparsities,
                         {cfg.bench.trials, cfg.hyper.seed});
  {
    auto os = open_out(cfg.out / kBenchKernelFile);
    write_bench_csv(os, s.kernel);
  }
  write_bench_csv(out, s.kernel);

  if (ck) {
    log << "model forward: " << data->test.size() << " test examples\n";
    s.has_model = true;
    s.model = bench_model_forward(ck->model, data->test, cfg.hyper.seed, cfg.bench.trials);
    const std::string text = "sparse_s,dense_s,speedup\n" + fixed(s.model.sparse_s, 6) + "," +
                             fixed(s.model.dense_s, 6) + "," + fixed(s.model.speedup, 3) + "\n";
    write_file(cfg.out / kBenchModelFile, text);
    out << text;
  }
  return s;
}

std::vector<SweepRow> cmd_sweep(const RunConfig& cfg, std::ostream& out, std::ostream& log) {
  cfg.validate();
  const DataSplits data = load_dataset(cfg);

  fs::create_directories(cfg.out);
  write_file(cfg.out / kConfigFile, to_json(cfg).dump(2) + "\n");
  auto table = open_out(cfg.out / kSweepFile);
  auto epochs = open_out(cfg.out / kSweepEpochsFile);
  const std::string header = "lambda,test_error,test_time_s,status\n";
  table << header;
  epochs << "lambda,epoch,train_nll,valid_err\n";
  out << header;

  std::vector<SweepRow> rows;
  for (const double value : cfg.sweep.values) {
    RunConfig point = cfg;
    if (cfg.sweep.param != "lambda_v") point.hyper.lambda_s = {value};
    if (cfg.sweep.param != "lambda_s") point.hyper.lambda_v = {value};

    SweepRow row;
    row.lambda = value;
    log << cfg.sweep.param << "=" << num(value) << '\n';
    try {
      const TrainResult r = train(point.train_config(), data);
      row.test_error = r.test_err;
      row.test_time_s = r.test_wall_s;
      row.history = r.history;
      row.status = "ok";
    } catch (const std::exception& e) {
      row.test_error = std::numeric_limits<double>::quiet_NaN();
      row.test_time_s = std::numeric_limits<double>::quiet_NaN();
      row.status = "failed: " + one_line(e.what());
      log << "  " << row.status << '\n';
    }
    const std::string line = num(row.lambda) + "," + num(row.test_error) + "," +
                             fixed(row.test_time_s, 6) + "," + row.status + "\n";
    table << line << std::flush;
    out << line << std::flush;
    for (const auto& m : row.history)
      epochs << num(value) << ',' << m.epoch << ',' << num(m.train_nll) << ',' << num(m.valid_err)
             << '\n';
    rows.push_back(std::move(row));
  }
  return rows;
}

InspectSummary cmd_inspect(const RunConfig& cfg, std::ostream& out, std::ostream& log) {
  cfg.validate();
  const DataSplits data = load_dataset(cfg);
  const Checkpoint ck = load_checked(cfg, data);
  const Model& model = ck.model;
  if (model.kind != ModelKind::condnet || model.policies.empty())
    throw std::runtime_error("inspect: checkpoint holds a " + to_string(model.kind) +
                             " model without a learned policy");

  const Dataset& split = pick_split(data, cfg.inspect.split);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < split.size(); ++i) {
    const int y = split.labels[i];
    if (!cfg.inspect.classes.empty() &&
        std::find(cfg.inspect.classes.begin(), cfg.inspect.classes.end(), y) ==
            cfg.inspect.classes.end())
      continue;
    idx.push_back(i);
    if (cfg.inspect.limit && idx.size() == cfg.inspect.limit) break;
  }
  if (idx.empty()) throw std::runtime_error("inspect: no examples match the class filter");

  const Architecture& arch = model.net.arch;
  const std::size_t layers = arch.hidden.size();
  const std::size_t n_classes = arch.n_classes;
  fs::create_directories(cfg.out);
  std::vector<std::ofstream> sigma_files;
  for (std::size_t l = 0; l < layers; ++l) {
    sigma_files.push_back(open_out(cfg.out / ("policy_sigma_l" + std::to_string(l + 1) + ".csv")));
    sigma_files.back() << "example_id,class_label,block_id,sigma\n";
  }

  InspectSummary s;
  s.examples = idx.size();
  s.class_counts.assign(n_classes, 0);
  s.class_mean_sigma.resize(layers);
  for (std::size_t l = 0; l < layers; ++l)
    s.class_mean_sigma[l].assign(n_classes, Vector(arch.hidden[l].n_blocks, 0.0));

  Rng rng = make_rng(cfg.hyper.seed, RngStream::eval, 0);
  const ForwardOptions opt = model.forward_options();
  for (std::size_t b = 0; b < idx.size(); b += 1000) {
    const std::span<const std::size_t> part(idx.data() + b, std::min(idx.size(), b + 1000) - b);
    const ForwardCache cache = forward(model.net, model.policies, split.x.gather_rows(part), rng, opt);
    for (std::size_t i = 0; i < part.size(); ++i) {
      const int y = split.labels[part[i]];
      ++s.class_counts[static_cast<std::size_t>(y)];
      for (std::size_t l = 0; l < layers; ++l) {
        const Matrix& probs = cache.layers[l].probs;
        Vector& acc = s.class_mean_sigma[l][static_cast<std::size_t>(y)];
        for (std::size_t j = 0; j < probs.cols(); ++j) {
          sigma_files[l] << part[i] << ',' << y << ',' << j << ',' << num(probs(i, j)) << '\n';
          acc[j] += probs(i, j);
        }
      }
    }
  }

  for (std::size_t l = 0; l < layers; ++l) {
    for (std::size_t c = 0; c < n_classes; ++c)
      if (s.class_counts[c])
        for (double& v : s.class_mean_sigma[l][c]) v /= static_cast<double>(s.class_counts[c]);

    const std::string tag = std::to_string(l + 1);
    auto means = open_out(cfg.out / ("policy_class_mean_l" + tag + ".csv"));
    means << "class_label,block_id,mean_sigma\n";
    for (std::size_t c = 0; c < n_classes; ++c) {
      if (!s.class_counts[c]) continue;
      for (std::size_t j = 0; j < s.class_mean_sigma[l][c].size(); ++j)
        means << c << ',' << j << ',' << num(s.class_mean_sigma[l][c][j]) << '\n';
    }

    auto weights = open_out(cfg.out / ("policy_weights_l" + tag + ".csv"));
    weights << "block_id,input_id,weight\n";
    const Matrix& z = model.policies[l].z;
    for (std::size_t j = 0; j < z.rows(); ++j)
      for (std::size_t k = 0; k < z.cols(); ++k) weights << j << ',' << k << ',' << num(z(j, k)) << '\n';
  }

  log << "inspect: " << s.examples << " examples from the " << cfg.inspect.split << " split\n";
  out << "layer,class_a,class_b,l1_distance\n";
  for (std::size_t l = 0; l < layers; ++l)
    for (std::size_t a = 0; a < n_classes; ++a)
      for (std::size_t b = a + 1; b < n_classes; ++b) {
        if (!s.class_counts[a] || !s.class_counts[b]) continue;
        double d = 0.0;
        for (std::size_t j = 0; j < s.class_mean_sigma[l][a].size(); ++j)
          d += std::abs(s.class_mean_sigma[l][a][j] - s.class_mean_sigma[l][b][j]);
        out << l + 1 << ',' << a << ',' << b << ',' << num(d) << '\n';
      }
  return s;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Conditional computation networks with learned block-dropout policies"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint, data_root;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  bool bdnn = false;

  const std::vector<std::pair<const char*, const char*>> commands = {
      {"train", "Train a model and write metrics, checkpoint and summary"},
      {"eval", "Evaluate a checkpoint on the test split"},
      {"bench", "Benchmark the block-sparse kernel and a model's forward pass"},
      {"sweep", "Train one model per regularizer value"},
      {"inspect", "Dump policy probabilities and weights as CSV"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--seed", seed, "Run seed (overrides the config)");
    sub->add_option("--out", out_dir, "Output directory (overrides the config)");
    sub->add_option("--checkpoint", checkpoint, "Checkpoint to read");
    sub->add_option("--data-root", data_root, "Dataset root (default: $CONDNET_DATA_ROOT or ./data)");
    if (std::string(name) == "train" || std::string(name) == "sweep") {
      sub->add_flag("--bdnn", bdnn, "Uniform block dropout at rate tau, no learned policy");
      sub->add_option("--epochs", epochs, "Maximum epochs (overrides the config)")
          ->check(CLI::PositiveNumber);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    const Command cmd = command_from_string(app.get_subcommands().front()->get_name());
    RunConfig cfg =
        config_path.empty() ? parse_config(nlohmann::json::object(), cmd) : load_config(config_path, cmd);
    if (seed) cfg.hyper.seed = *seed;
    if (!out_dir.empty()) cfg.out = out_dir;
    if (!checkpoint.empty()) cfg.checkpoint = checkpoint;
    if (!data_root.empty()) cfg.data_root = data_root;
    if (bdnn) cfg.kind = ModelKind::bdnn;
    if (epochs) cfg.hyper.max_epochs = *epochs;
    if (cfg.checkpoint.empty() && (cmd == Command::eval || cmd == Command::inspect))
      cfg.checkpoint = cfg.out / kCheckpointFile;

    switch (cmd) {
      case Command::train: cmd_train(cfg, std::cout, std::cerr); break;
      case Command::eval: cmd_eval(cfg, std::cout, std::cerr); break;
      case Command::bench: cmd_bench(cfg, std::cout, std::cerr); break;
      case Command::sweep: cmd_sweep(cfg, std::cout, std::cerr); break;
      case Command::inspect: cmd_inspect(cfg, std::cout, std::cerr); break;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace condnet::cli
