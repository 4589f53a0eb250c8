#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "condnet/data.hpp"
#include "condnet/network.hpp"
#include "condnet/rng.hpp"

namespace condnet {

struct Hyperparams {
  double alpha = 1e-3;  // Θ_NN learning rate (also the ∇ℒ rate for Θ_π)
  Vector alpha_pi;      // REINFORCE rate per policy layer
  Vector lambda_s;      // per layer
  Vector lambda_v;      // per layer
  double lambda_l2 = 0.0;
  Vector tau;           // target block activation rate per layer
  std::size_t batch_size = 32;
  std::size_t max_epochs = 50;
  std::size_t patience = 10;
  std::uint64_t seed = 1;
  PenaltyNorm norm = PenaltyNorm::absolute;
  CostReduction reduction = CostReduction::mean;
  bool baseline = false;        // moving-average cost baseline for REINFORCE
  double baseline_decay = 0.9;
  PolicyInit policy_init = PolicyInit::glorot;

  /// Per-layer vectors of length 1 are broadcast to `layers`.
  Hyperparams broadcast(std::size_t layers) const;
  void validate(std::size_t layers) const;
  LossWeights loss_weights() const;
};

struct TrainConfig {
  ModelKind kind = ModelKind::condnet;
  Architecture arch;
  Hyperparams hyper;
  Vector uniform_rate;  // bdnn block rate per layer (length 1 broadcasts); empty = tau
};

struct StepMetrics {
  LossBreakdown loss;
  Vector sparsity;  // per layer
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_nll = 0.0;
  double valid_err = 0.0;
  double test_err = 0.0;
  double l_b = 0.0;
  double l_e = 0.0;
  double l_v = 0.0;
  Vector sparsity;  // per layer, training minibatches
  double wall_ms = 0.0;
};

struct TrainState {
  Model model;
  std::size_t epoch = 0;
  double best_valid_err = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  Rng shuffle_rng;
  Rng mask_rng;
  double cost_baseline = 0.0;
  bool baseline_ready = false;
  std::vector<EpochMetrics> history;
  BackwardResult grad;  // reused gradient buffers, zero between steps
};

/// Raised when the loss stops being finite or keeps blowing up.
class DivergenceError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Fresh model and RNG streams for a run.
TrainState init_state(const TrainConfig& cfg);

/// Per-layer (1/m_b) Σ_i w_i ∇_θ log π(u_i | s_i), read from the cache.
std::vector<PolicyGrad> reinforce_gradient(std::span<const PolicyParams> pols,
                                           const ForwardCache& cache,
                                           std::span<const double> weights);

/// θ_l ← θ_l - α_π,l · reinforce_gradient(costs)_l.
void reinforce_update(std::vector<PolicyParams>& pols, const ForwardCache& cache,
                      std::span<const double> costs, std::span<const double> alpha_pi);

/// One minibatch of forward, ∇ℒ and REINFORCE, applied in a single combined
/// update per parameter.
StepMetrics sgd_step(TrainState& state, const Matrix& x, std::span<const int> labels,
                     const Hyperparams& hp);

/// Fraction of active blocks per hidden layer.
Vector measure_sparsity(const ForwardCache& cache);

struct EvalResult {
  double error = 0.0;
  double mean_nll = 0.0;
  Vector sparsity;
  double wall_s = 0.0;
};

/// One pass over `data` with the model's own masking, in chunks.
EvalResult evaluate(const Model& model, const Dataset& data, Rng& rng,
                    std::size_t chunk = 1000);

struct TrainResult {
  Model model;  // parameters of the best validation epoch
  std::vector<EpochMetrics> history;
  std::size_t best_epoch = 0;
  double best_valid_err = 0.0;
  double test_err = 0.0;
  Vector test_sparsity;
  double test_wall_s = 0.0;  // forward time of the final test pass
  double mean_epoch_wall_ms = 0.0;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Epochs of shuffled minibatches with early stopping on validation error;
/// the returned model is the best one seen. Test error comes from a single
/// seeded stochastic pass.
TrainResult train(const TrainConfig& cfg, const DataSplits& data,
                  const EpochCallback& on_epoch = {});

/// `epoch,train_nll,valid_err,test_err,l_b,l_e,l_v,mean_sparsity_l1..L,epoch_wall_ms`
void write_metrics_header(std::ostream& os, std::size_t layers);
void write_metrics_row(std::ostream& os, const EpochMetrics& m);

/// Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng);

}  // namespace condnet
