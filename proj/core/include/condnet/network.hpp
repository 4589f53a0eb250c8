#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "condnet/matrix.hpp"
#include "condnet/policy.hpp"
#include "condnet/regularizers.hpp"
#include "condnet/rng.hpp"

namespace condnet {

enum class Activation { tanh, relu };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct LayerSpec {
  std::size_t n_blocks = 1;
  std::size_t block_size = 1;
  std::size_t units() const noexcept { return n_blocks * block_size; }
};

/// Shape chain: inputs -> hidden layers (blocks of units) -> softmax classes.
struct Architecture {
  std::size_t n_inputs = 0;
  std::vector<LayerSpec> hidden;
  std::size_t n_classes = 0;
  Activation activation = Activation::tanh;

  /// Input width of hidden layer l (0-based) or of the output layer when
  /// l == hidden.size().
  std::size_t fan_in(std::size_t l) const;
  void validate() const;
  bool operator==(const Architecture&) const = default;
};

inline bool operator==(const LayerSpec& a, const LayerSpec& b) {
  return a.n_blocks == b.n_blocks && a.block_size == b.block_size;
}

struct DenseLayer {
  Matrix w;  // fan_in × units
  Vector b;  // units
};

struct NetworkParams {
  Architecture arch;
  std::vector<DenseLayer> hidden;
  DenseLayer out;

  /// Same architecture, all parameters zero (gradient accumulator layout).
  static NetworkParams zeros_like(const NetworkParams& p);
  double squared_norm() const;
};

using NetworkGrad = NetworkParams;

/// Glorot-uniform weights in ±√(6/(fan_in+fan_out)), zero biases. Draws are
/// row-major, hidden layers ascending, then the output layer.
NetworkParams init_glorot(const Architecture& arch, Rng& rng);

enum class PolicyInit { zeros, glorot };

/// One policy per hidden layer; policy l reads the (masked) input of layer l.
std::vector<PolicyParams> init_policies(const Architecture& arch, Rng& rng,
                                        PolicyInit init = PolicyInit::glorot);

double squared_norm(const std::vector<PolicyParams>& pols);

enum class MaskMode {
  stochastic,     // u ~ Bernoulli(σ), train and test behaviour
  deterministic,  // u = [σ >= 0.5], diagnostics only
  all_ones,       // dense network, policies ignored
  uniform,        // input-independent Bernoulli(rate) block dropout (bdNN)
  fixed,          // replay caller-provided masks
};

struct ForwardOptions {
  MaskMode mode = MaskMode::stochastic;
  Vector uniform_rate;                             // per hidden layer, for MaskMode::uniform
  const std::vector<BlockMask>* fixed_masks = nullptr;  // for MaskMode::fixed
  /// Multiply every block densely and mask afterwards. Same outputs, no
  /// skipped work; the reference timing for the block-sparse path.
  bool dense_compute = false;
};

struct LayerCache {
  Matrix input;   // s_l = h_{l-1}, already masked
  Matrix logits;  // policy pre-sigmoid (empty unless a learned policy ran)
  Matrix probs;   // σ_l
  BlockMask mask; // u_l
  Matrix pre;     // W·s + b on active units, 0 elsewhere
  Matrix h;       // f(pre) ⊗ expand(u_l)
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  BlockMask input_mask;  // u_0, all ones
  Matrix logits;
  Matrix yhat;  // softmax rows
  MaskMode mode = MaskMode::stochastic;

  bool has_policy() const noexcept {
    return mode == MaskMode::stochastic || mode == MaskMode::deterministic ||
           mode == MaskMode::fixed;
  }
};

/// Masked forward pass. Policies may be empty in all_ones and uniform modes.
ForwardCache forward(const NetworkParams& net, std::span<const PolicyParams> pols, const Matrix& x,
                     Rng& rng, const ForwardOptions& opt = {});

/// Row-wise softmax with max subtraction.
Matrix softmax(const Matrix& logits);

/// c_i = -log ŷ_i[label_i], probabilities clamped at 1e-12.
Vector nll(const Matrix& yhat, std::span<const int> labels);

/// Weights of the regularized loss
/// ℒ = mean(c) + Σ_l λ_s,l (L_b + L_e) + λ_v,l L_v + λ_L2 (‖Θ_NN‖² + ‖Θ_π‖²).
/// How per-example costs enter ℒ: their minibatch mean, or their sum with
/// the penalties still counted once per minibatch.
enum class CostReduction { mean, sum };

struct LossWeights {
  Vector lambda_s;  // per hidden layer
  Vector lambda_v;  // per hidden layer
  double lambda_l2 = 0.0;
  Vector tau;  // per hidden layer
  PenaltyNorm norm = PenaltyNorm::absolute;
  CostReduction reduction = CostReduction::mean;

  /// Broadcasts scalars to every layer.
  static LossWeights uniform(std::size_t layers, double lambda_s, double lambda_v,
                             double lambda_l2, double tau,
                             PenaltyNorm norm = PenaltyNorm::absolute);
};

struct LossBreakdown {
  double nll = 0.0;  // mean cost, whatever the reduction
  double l_b = 0.0;  // summed over layers, unweighted
  double l_e = 0.0;
  double l_v = 0.0;
  double l2 = 0.0;   // ‖Θ_NN‖² + ‖Θ_π‖², unweighted
  double total = 0.0;
};

/// ℒ on an existing cache, masks treated as constants.
LossBreakdown regularized_loss(const NetworkParams& net, std::span<const PolicyParams> pols,
                               const ForwardCache& cache, std::span<const int> labels,
                               const LossWeights& lw);

struct BackwardResult {
  NetworkGrad net;
  std::vector<PolicyGrad> pols;  // empty when the cache has no learned policy
  LossBreakdown loss;
  Vector costs;  // per-example NLL
};

/// Exact ∇ℒ w.r.t. Θ_NN and Θ_π with the sampled masks held fixed. The cost
/// term reaches Θ_NN only; the regularizers reach Θ_π through σ and Θ_NN
/// through σ's dependence on lower layers.
BackwardResult backward_nn(const NetworkParams& net, std::span<const PolicyParams> pols,
                           const ForwardCache& cache, std::span<const int> labels,
                           const LossWeights& lw);

/// The data and regularizer part of backward_nn, added into `res`, whose
/// gradient buffers must be shaped like the parameters (normally zero). The
/// L2 term is left out of the gradients but included in `res.loss`.
void backward_accumulate(const NetworkParams& net, std::span<const PolicyParams> pols,
                         const ForwardCache& cache, std::span<const int> labels,
                         const LossWeights& lw, BackwardResult& res);

enum class ModelKind {
  condnet,  // learned per-layer policies
  bdnn,     // uniform block dropout at a fixed rate
  dense,    // plain MLP, no masking
};

std::string to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);

/// Everything needed to run a forward pass: weights, policies and how masks
/// are produced.
struct Model {
  ModelKind kind = ModelKind::condnet;
  NetworkParams net;
  std::vector<PolicyParams> policies;  // condnet only
  Vector uniform_rate;                 // bdnn only, per hidden layer

  /// Mask options for the model's own test-time behaviour.
  ForwardOptions forward_options() const;
};

/// Index of the largest softmax output per row.
std::vector<int> predict(const Matrix& yhat);

}  // namespace condnet
