#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "condnet/checkpoint.hpp"
#include "condnet/cli/commands.hpp"
#include "condnet/cli/run_config.hpp"
#include "oracles.hpp"

using namespace condnet;
using namespace condnet::cli;
using nlohmann::json;

namespace {

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "condnet");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

json synth_doc(const std::filesystem::path& out) {
  return json{{"dataset",
               {{"kind", "synth"},
                {"n_classes", 3},
                {"n_features", 6},
                {"n_examples", 400},
                {"n_train", 200},
                {"valid", 100}}},
              {"model", {{"hidden", {{{"blocks", 4}, {"block_size", 3}}}}}},
              {"train",
               {{"alpha", 0.05},
                {"alpha_pi", 1e-3},
                {"lambda_s", 1.0},
                {"lambda_v", 1.0},
                {"tau", 0.5},
                {"batch_size", 16},
                {"max_epochs", 3}}},
              {"seed", 3},
              {"out", out.string()}};
}

std::filesystem::path write_doc(const std::filesystem::path& dir, const json& doc) {
  const auto p = dir / "cfg.json";
  std::ofstream(p) << doc.dump(2);
  return p;
}

std::vector<std::string> lines(const std::filesystem::path& p) {
  std::ifstream is(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(is, l);) out.push_back(l);
  return out;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("config defaults and strict keys") {
  const RunConfig c = parse_config(json::object(), Command::train);
  CHECK(c.dataset.kind == "mnist");
  CHECK(c.hidden.size() == 1);
  CHECK(c.hidden[0].n_blocks == 16);
  CHECK(c.hidden[0].block_size == 16);
  CHECK(c.hyper.tau == Vector{1.0 / 16});
  CHECK(c.hyper.lambda_s == Vector{200.0});
  CHECK(c.hyper.lambda_l2 == 0.005);
  CHECK(c.hyper.alpha == 1e-3);
  CHECK(c.hyper.alpha_pi == Vector{5e-5});
  CHECK(c.hyper.reduction == CostReduction::mean);

  CHECK_THROWS_AS(parse_config(json{{"trian", json::object()}}, Command::train), UsageError);
  CHECK_THROWS_AS(parse_config(json{{"train", {{"alpah", 1}}}}, Command::train), UsageError);
  CHECK_THROWS_AS(parse_config(json{{"train", {{"norm", "l3"}}}}, Command::train), UsageError);
  CHECK_THROWS_AS(parse_config(json{{"train", {{"reduction", "max"}}}}, Command::train),
                  UsageError);
  CHECK_THROWS_AS(parse_config(json{{"model", {{"kind", "cnn"}}}}, Command::train), UsageError);

  const RunConfig s = parse_config(json{{"train", {{"reduction", "sum"}, {"norm", "squared"}}}},
                                   Command::train);
  CHECK(s.hyper.reduction == CostReduction::sum);
  CHECK(s.hyper.norm == PenaltyNorm::squared);
}

TEST_CASE("per-layer values and the resolved config round trip") {
  const json doc{{"model", {{"hidden", {{{"blocks", 4}, {"block_size", 8}}, {{"blocks", 2}, {"block_size", 8}}}}}},
                 {"train", {{"lambda_s", {1.0, 2.0}}, {"tau", 0.25}}}};
  const RunConfig c = parse_config(doc, Command::train);
  CHECK(c.hyper.lambda_s == Vector{1.0, 2.0});
  CHECK(c.train_config().arch.hidden.size() == 2);
  const json resolved = to_json(c);
  CHECK(to_json(parse_config(resolved, Command::train)) == resolved);
  CHECK_THROWS_AS(parse_config(json{{"train", {{"lambda_s", {1.0, 2.0, 3.0}}}}}, Command::train)
                      .validate(),
                  std::exception);
}

TEST_CASE("usage errors exit with code 2 and write nothing") {
  const auto dir = oracle::temp_dir("cli_usage");
  CHECK(run({}) == kExitUsage);
  CHECK(run({"train", "--no-such-flag"}) == kExitUsage);
  CHECK(run({"frobnicate"}) == kExitUsage);
  CHECK(run({"train", "--config", (dir / "missing.json").string()}) == kExitUsage);
  CHECK(run({"train", "--epochs", "0"}) == kExitUsage);

  const auto out = dir / "run";
  CHECK(run({"train", "--data-root", (dir / "nodata").string(), "--out", out.string()}) ==
        kExitUsage);
  CHECK_FALSE(std::filesystem::exists(out));

  std::ofstream(dir / "bad.json") << "{ not json";
  CHECK(run({"train", "--config", (dir / "bad.json").string(), "--out", out.string()}) ==
        kExitUsage);
  CHECK_FALSE(std::filesystem::exists(out));
}

TEST_CASE("train, eval and inspect on synthetic data") {
  const auto dir = oracle::temp_dir("cli_train");
  const auto out = dir / "run";
  const auto cfg = write_doc(dir, synth_doc(out));
  REQUIRE(run({"train", "--config", cfg.string()}) == kExitOk);
  for (const char* f : {kConfigFile, kMetricsFile, kCheckpointFile, kSummaryFile})
    CHECK(std::filesystem::exists(out / f));
  const auto metrics = lines(out / kMetricsFile);
  CHECK(metrics.size() == 4);
  CHECK(metrics[0].rfind("epoch,train_nll,valid_err,test_err,l_b,l_e,l_v,mean_sparsity_l1,", 0) == 0);
  CHECK(lines(out / kSummaryFile)[0] == "test_error,mean_sparsity,epoch_wall_ms");
  const Checkpoint ck = load_checkpoint(out / kCheckpointFile);
  CHECK(ck.seed == 3);
  CHECK(ck.metadata.count("test_error") == 1);

  CHECK(run({"eval", "--config", cfg.string()}) == kExitOk);
  CHECK(lines(out / kEvalFile)[0] == "test_error,mean_sparsity,test_time_s");

  CHECK(run({"inspect", "--config", cfg.string()}) == kExitOk);
  const auto sigma = lines(out / "policy_sigma_l1.csv");
  CHECK(sigma[0] == "example_id,class_label,block_id,sigma");
  CHECK(sigma.size() == 1 + 100 * 4);
  CHECK(lines(out / "policy_class_mean_l1.csv").size() == 1 + 3 * 4);
  CHECK(lines(out / "policy_weights_l1.csv").size() == 1 + 4 * 6);

  // The bdnn and dense models have no policy to inspect.
  const auto dense_out = dir / "dense";
  json doc = synth_doc(dense_out);
  doc["model"]["kind"] = "dense";
  const auto dense_cfg = dir / "dense.json";
  std::ofstream(dense_cfg) << doc.dump();
  REQUIRE(run({"train", "--config", dense_cfg.string()}) == kExitOk);
  CHECK(run({"inspect", "--config", dense_cfg.string()}) == kExitRuntime);
}

TEST_CASE("an untrained zero policy gives σ = 0.5 for every class") {
  const auto dir = oracle::temp_dir("cli_inspect");
  RunConfig cfg = parse_config(synth_doc(dir / "out"), Command::inspect);
  Rng rng(0);
  Checkpoint ck;
  ck.model.net = init_glorot(cfg.architecture(), rng);
  ck.model.policies = init_policies(cfg.architecture(), rng, PolicyInit::zeros);
  save_checkpoint(dir / "zero.ckpt", ck);
  cfg.checkpoint = dir / "zero.ckpt";
  cfg.inspect.classes = {0, 1};
  std::ostringstream out, log;
  const InspectSummary s = cmd_inspect(cfg, out, log);
  CHECK(s.class_counts[0] > 0);
  CHECK(s.class_counts[2] == 0);
  for (int c : {0, 1})
    for (double v : s.class_mean_sigma[0][c]) CHECK(v == 0.5);
  CHECK(s.examples == s.class_counts[0] + s.class_counts[1]);
}

TEST_CASE("sweep writes one row per grid value and survives failures") {
  const auto dir = oracle::temp_dir("cli_sweep");
  json doc = synth_doc(dir / "out");
  doc["train"]["max_epochs"] = 2;
  doc["sweep"] = {{"param", "lambda_s"}, {"values", {0.0, 1.0, 1e300}}};
  const auto cfg = write_doc(dir, doc);
  REQUIRE(run({"sweep", "--config", cfg.string()}) == kExitOk);
  const auto rows = lines(dir / "out" / kSweepFile);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0] == "lambda,test_error,test_time_s,status");
  CHECK(rows[1].find(",ok") != std::string::npos);
  CHECK(rows[3].find("failed") != std::string::npos);
  CHECK(lines(dir / "out" / kSweepEpochsFile)[0] == "lambda,epoch,train_nll,valid_err");
}

TEST_CASE("bench writes one kernel row per grid point and times a model") {
  const auto dir = oracle::temp_dir("cli_bench");
  json doc = synth_doc(dir / "out");
  REQUIRE(run({"train", "--config", write_doc(dir, doc).string()}) == kExitOk);
  doc["bench"] = {{"dims", {{16, 32, 32}, {8, 16, 16}}},
                  {"block_sizes", {4, 8}},
                  {"sparsities", {0.25, 1.0}},
                  {"trials", 1}};
  const auto cfg = write_doc(dir, doc);
  REQUIRE(run({"bench", "--config", cfg.string(), "--checkpoint",
               (dir / "out" / kCheckpointFile).string()}) == kExitOk);
  CHECK(lines(dir / "out" / kBenchKernelFile).size() == 1 + 8);
  const auto model = lines(dir / "out" / kBenchModelFile);
  CHECK(model[0] == "sparse_s,dense_s,speedup");
  CHECK(model.size() == 2);
}

TEST_CASE("repeated runs give identical artifacts") {
  const auto dir = oracle::temp_dir("cli_repeat");
  std::vector<std::string> metrics, ckpts;
  for (const char* name : {"a", "b"}) {
    const auto out = dir / name;
    const auto cfg = dir / (std::string(name) + ".json");
    std::ofstream(cfg) << synth_doc(out).dump();
    REQUIRE(run({"train", "--config", cfg.string()}) == kExitOk);
    std::string m;
    for (const auto& l : lines(out / kMetricsFile)) m += l.substr(0, l.rfind(',')) + "\n";
    metrics.push_back(m);
    ckpts.push_back(slurp(out / kCheckpointFile));
  }
  CHECK(metrics[0] == metrics[1]);
  CHECK(ckpts[0] == ckpts[1]);
}

}  // TEST_SUITE
