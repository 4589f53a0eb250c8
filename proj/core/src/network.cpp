#include "condnet/network.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "condnet/linalg.hpp"

namespace condnet {
namespace {

double act(Activation a, double x) { return a == Activation::tanh ? std::tanh(x) : std::max(0.0, x); }

// Derivative expressed through the activation output (tanh) or the input (relu).
double act_slope(Activation a, double pre, double out) {
  return a == Activation::tanh ? 1.0 - out * out : (pre > 0.0 ? 1.0 : 0.0);
}

double sigmoid(double q) { return 1.0 / (1.0 + std::exp(-q)); }

Matrix clamped_sigmoid(const Matrix& logits) {
  Matrix p = logits;
  for (double& v : p.flat()) v = std::clamp(sigmoid(v), kProbEps, 1.0 - kProbEps);
  return p;
}

void fill_uniform(Matrix& m, double bound, Rng& rng) {
  for (double& v : m.flat()) v = rng.uniform(-bound, bound);
}

const BlockMask& input_mask_of(const ForwardCache& cache, std::size_t l) {
  return l == 0 ? cache.input_mask : cache.layers[l - 1].mask;
}

void check_policies(const Architecture& arch, std::span<const PolicyParams> pols) {
  if (pols.size() != arch.hidden.size())
    throw std::invalid_argument("forward: " + std::to_string(pols.size()) + " policies for " +
                                std::to_string(arch.hidden.size()) + " hidden layers");
  for (std::size_t l = 0; l < pols.size(); ++l) {
    if (pols[l].n_blocks() != arch.hidden[l].n_blocks || pols[l].n_inputs() != arch.fan_in(l))
      throw std::invalid_argument("forward: policy " + std::to_string(l) + " is " +
                                  shape_str(pols[l].z) + ", layer expects " +
                                  std::to_string(arch.hidden[l].n_blocks) + "x" +
                                  std::to_string(arch.fan_in(l)));
  }
}

}  // namespace

std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  throw std::invalid_argument("unknown activation '" + s + "' (expected tanh or relu)");
}

std::size_t Architecture::fan_in(std::size_t l) const {
  return l == 0 ? n_inputs : hidden[l - 1].units();
}

void Architecture::validate() const {
  if (n_inputs == 0) throw std::invalid_argument("architecture: n_inputs must be > 0");
  if (n_classes < 2) throw std::invalid_argument("architecture: need at least 2 classes");
  if (hidden.empty()) throw std::invalid_argument("architecture: need at least one hidden layer");
  for (std::size_t l = 0; l < hidden.size(); ++l) {
    if (hidden[l].n_blocks == 0 || hidden[l].block_size == 0)
      throw std::invalid_argument("architecture: layer " + std::to_string(l + 1) +
                                  " needs n_blocks >= 1 and block_size >= 1");
  }
}

NetworkParams NetworkParams::zeros_like(const NetworkParams& p) {
  NetworkParams z;
  z.arch = p.arch;
  for (const auto& layer : p.hidden)
    z.hidden.push_back({Matrix(layer.w.rows(), layer.w.cols()), Vector(layer.b.size())});
  z.out = {Matrix(p.out.w.rows(), p.out.w.cols()), Vector(p.out.b.size())};
  return z;
}

double NetworkParams::squared_norm() const {
  double s = 0.0;
  for (const auto& layer : hidden) s += condnet::squared_norm(layer.w) + condnet::squared_norm(layer.b);
  return s + condnet::squared_norm(out.w) + condnet::squared_norm(out.b);
}

NetworkParams init_glorot(const Architecture& arch, Rng& rng) {
  arch.validate();
  NetworkParams p;
  p.arch = arch;
  for (std::size_t l = 0; l < arch.hidden.size(); ++l) {
    const std::size_t fi = arch.fan_in(l), fo = arch.hidden[l].units();
    DenseLayer layer{Matrix(fi, fo), Vector(fo, 0.0)};
    fill_uniform(layer.w, std::sqrt(6.0 / static_cast<double>(fi + fo)), rng);
    p.hidden.push_back(std::move(layer));
  }
  const std::size_t fi = arch.fan_in(arch.hidden.size());
  p.out = {Matrix(fi, arch.n_classes), Vector(arch.n_classes, 0.0)};
  fill_uniform(p.out.w, std::sqrt(6.0 / static_cast<double>(fi + arch.n_classes)), rng);
  return p;
}

std::vector<PolicyParams> init_policies(const Architecture& arch, Rng& rng, PolicyInit init) {
  std::vector<PolicyParams> pols;
  for (std::size_t l = 0; l < arch.hidden.size(); ++l) {
    PolicyParams p(arch.hidden[l].n_blocks, arch.fan_in(l));
    if (init == PolicyInit::glorot)
      fill_uniform(p.z, std::sqrt(6.0 / static_cast<double>(p.n_inputs() + p.n_blocks())), rng);
    pols.push_back(std::move(p));
  }
  return pols;
}

double squared_norm(const std::vector<PolicyParams>& pols) {
  double s = 0.0;
  for (const auto& p : pols) s += squared_norm(p.z) + squared_norm(p.d);
  return s;
}

ForwardCache forward(const NetworkParams& net, std::span<const PolicyParams> pols, const Matrix& x,
                     Rng& rng, const ForwardOptions& opt) {
  const Architecture& arch = net.arch;
  if (x.cols() != arch.n_inputs)
    throw std::invalid_argument("forward: input has " + std::to_string(x.cols()) +
                                " features, network expects " + std::to_string(arch.n_inputs));
  const std::size_t m = x.rows();
  const std::size_t n_layers = arch.hidden.size();

  ForwardCache cache;
  cache.mode = opt.mode;
  if (cache.has_policy()) check_policies(arch, pols);
  if (opt.mode == MaskMode::uniform && opt.uniform_rate.size() != n_layers)
    throw std::invalid_argument("forward: uniform mode needs one rate per hidden layer");
  if (opt.mode == MaskMode::fixed && (!opt.fixed_masks || opt.fixed_masks->size() != n_layers))
    throw std::invalid_argument("forward: fixed mode needs one mask per hidden layer");

  // u_0: the input mask is all ones.
  cache.input_mask = BlockMask::ones(m, 1, arch.n_inputs);
  cache.layers.reserve(n_layers);

  const Matrix* a = &x;
  const BlockMask* a_mask = &cache.input_mask;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const LayerSpec& spec = arch.hidden[l];
    LayerCache lc;
    lc.input = *a;

    switch (opt.mode) {
      case MaskMode::stochastic:
      case MaskMode::deterministic:
      case MaskMode::fixed:
        lc.logits = compute_logits(pols[l], lc.input);
        lc.probs = clamped_sigmoid(lc.logits);
        if (opt.mode == MaskMode::stochastic) {
          lc.mask = sample_mask(lc.probs, rng, spec.block_size);
        } else if (opt.mode == MaskMode::deterministic) {
          lc.mask = BlockMask(m, spec.n_blocks, spec.block_size);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < spec.n_blocks; ++j) lc.mask.set(i, j, lc.probs(i, j) >= 0.5);
        } else {
          lc.mask = (*opt.fixed_masks)[l];
          if (lc.mask.examples() != m || lc.mask.n_blocks() != spec.n_blocks ||
              lc.mask.block_size() != spec.block_size)
            throw std::invalid_argument("forward: fixed mask " + std::to_string(l) +
                                        " does not match layer shape");
        }
        break;
      case MaskMode::all_ones:
        lc.mask = BlockMask::ones(m, spec.n_blocks, spec.block_size);
        break;
      case MaskMode::uniform:
        lc.probs = Matrix(m, spec.n_blocks, opt.uniform_rate[l]);
        lc.mask = sample_mask(lc.probs, rng, spec.block_size);
        break;
    }

    const DenseLayer& layer = net.hidden[l];
    lc.pre = opt.dense_compute ? matmul(lc.input, layer.w)
                               : masked_matmul(lc.input, layer.w, *a_mask, lc.mask);
    lc.h = Matrix(m, spec.units());
    const std::size_t bs = spec.block_size;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < spec.n_blocks; ++j) {
        if (!lc.mask(i, j)) {
          if (opt.dense_compute)
            for (std::size_t u = j * bs; u < (j + 1) * bs; ++u) lc.pre(i, u) = 0.0;
          continue;
        }
        for (std::size_t u = j * bs; u < (j + 1) * bs; ++u) {
          lc.pre(i, u) += layer.b[u];
          lc.h(i, u) = act(arch.activation, lc.pre(i, u));
        }
      }
    }
    cache.layers.push_back(std::move(lc));
    a = &cache.layers.back().h;
    a_mask = &cache.layers.back().mask;
  }

  // The softmax layer is never masked.
  const BlockMask out_mask = BlockMask::ones(m, 1, arch.n_classes);
  cache.logits = opt.dense_compute ? matmul(*a, net.out.w)
                                   : masked_matmul(*a, net.out.w, *a_mask, out_mask);
  add_row_vector(cache.logits, net.out.b);
  cache.yhat = softmax(cache.logits);
  return cache;
}

Matrix softmax(const Matrix& logits) {
  Matrix y(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto in = logits.row(i);
    auto out = y.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) z += (out[j] = std::exp(in[j] - mx));
    for (double& v : out) v /= z;
  }
  return y;
}

Vector nll(const Matrix& yhat, std::span<const int> labels) {
  if (labels.size() != yhat.rows())
    throw std::invalid_argument("nll: " + std::to_string(labels.size()) + " labels for " +
                                std::to_string(yhat.rows()) + " rows");
  Vector c(yhat.rows());
  for (std::size_t i = 0; i < yhat.rows(); ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= yhat.cols())
      throw std::invalid_argument("nll: label " + std::to_string(y) + " out of range");
    c[i] = -std::log(std::max(yhat(i, static_cast<std::size_t>(y)), 1e-12));
  }
  return c;
}

LossWeights LossWeights::uniform(std::size_t layers, double lambda_s, double lambda_v,
                                 double lambda_l2, double tau, PenaltyNorm norm) {
  return {Vector(layers, lambda_s), Vector(layers, lambda_v), lambda_l2, Vector(layers, tau), norm};
}

namespace {

void check_loss_weights(const LossWeights& lw, std::size_t layers) {
  if (lw.lambda_s.size() != layers || lw.lambda_v.size() != layers || lw.tau.size() != layers)
    throw std::invalid_argument("loss weights: need per-layer lambda_s, lambda_v and tau for " +
                                std::to_string(layers) + " layers");
}

double sum(const Vector& v) {
  double s = 0.0;
  for (const double x : v) s += x;
  return s;
}

double mean(const Vector& v) { return v.empty() ? 0.0 : sum(v) / static_cast<double>(v.size()); }

}  // namespace

LossBreakdown regularized_loss(const NetworkParams& net, std::span<const PolicyParams> pols,
                               const ForwardCache& cache, std::span<const int> labels,
                               const LossWeights& lw) {
  const std::size_t n_layers = cache.layers.size();
  check_loss_weights(lw, n_layers);
  LossBreakdown lb;
  const Vector costs = nll(cache.yhat, labels);
  lb.nll = mean(costs);
  lb.total = lw.reduction == CostReduction::sum ? sum(costs) : lb.nll;
  lb.l2 = net.squared_norm();
  if (cache.has_policy()) {
    for (std::size_t l = 0; l < n_layers; ++l) {
      const auto t = regularizer_terms(cache.layers[l].probs, lw.tau[l], lw.norm);
      lb.l_b += t.b.value;
      lb.l_e += t.e.value;
      lb.l_v += t.v.value;
      lb.total += lw.lambda_s[l] * (t.b.value + t.e.value) + lw.lambda_v[l] * t.v.value;
    }
    for (const auto& p : pols) lb.l2 += squared_norm(p.z) + squared_norm(p.d);
  }
  lb.total += lw.lambda_l2 * lb.l2;
  return lb;
}

void backward_accumulate(const NetworkParams& net, std::span<const PolicyParams> pols,
                         const ForwardCache& cache, std::span<const int> labels,
                         const LossWeights& lw, BackwardResult& res) {
  const Architecture& arch = net.arch;
  const std::size_t n_layers = arch.hidden.size();
  if (cache.layers.size() != n_layers || cache.yhat.cols() != arch.n_classes)
    throw std::invalid_argument("backward_nn: cache does not match the network (stale cache?)");
  const std::size_t m = cache.yhat.rows();
  if (labels.size() != m)
    throw std::invalid_argument("backward_nn: " + std::to_string(labels.size()) +
                                " labels for a minibatch of " + std::to_string(m));
  check_loss_weights(lw, n_layers);
  const bool learn_policy = cache.has_policy();
  if (learn_policy) check_policies(arch, pols);

  if (!(res.net.arch == arch))
    throw std::invalid_argument("backward_accumulate: gradient buffers do not match the network");
  if (learn_policy && res.pols.size() != n_layers)
    throw std::invalid_argument("backward_accumulate: need one policy gradient buffer per layer");
  res.loss = {};
  res.costs = nll(cache.yhat, labels);
  res.loss.nll = mean(res.costs);
  const bool summed = lw.reduction == CostReduction::sum;
  res.loss.total = summed ? sum(res.costs) : res.loss.nll;
  res.loss.l2 = net.squared_norm();

  const double inv_m = 1.0 / static_cast<double>(m);
  Matrix dlogits = cache.yhat;
  for (std::size_t i = 0; i < m; ++i) {
    dlogits(i, static_cast<std::size_t>(labels[i])) -= 1.0;
    if (!summed)
      for (double& v : dlogits.row(i)) v *= inv_m;
  }

  const BlockMask out_mask = BlockMask::ones(m, 1, arch.n_classes);
  const BlockMask& top_mask = input_mask_of(cache, n_layers);
  masked_accumulate_at_b(cache.layers.back().h, top_mask, dlogits, out_mask, res.net.out.w);
  accumulate_col_sums(dlogits, res.net.out.b);
  Matrix dh = masked_matmul_bt(dlogits, net.out.w, out_mask, top_mask);

  for (std::size_t l = n_layers; l-- > 0;) {
    const LayerCache& lc = cache.layers[l];
    const LayerSpec& spec = arch.hidden[l];
    const BlockMask& in_mask = input_mask_of(cache, l);
    const std::size_t bs = spec.block_size;

    Matrix dpre(m, spec.units());
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < spec.n_blocks; ++j) {
        if (!lc.mask(i, j)) continue;
        for (std::size_t u = j * bs; u < (j + 1) * bs; ++u)
          dpre(i, u) = dh(i, u) * act_slope(arch.activation, lc.pre(i, u), lc.h(i, u));
      }
    masked_accumulate_at_b(lc.input, in_mask, dpre, lc.mask, res.net.hidden[l].w);
    accumulate_col_sums(dpre, res.net.hidden[l].b);

    Matrix dh_prev;
    if (l > 0) dh_prev = masked_matmul_bt(dpre, net.hidden[l].w, lc.mask, in_mask);

    if (learn_policy) {
      const auto t = regularizer_terms(lc.probs, lw.tau[l], lw.norm);
      res.loss.l_b += t.b.value;
      res.loss.l_e += t.e.value;
      res.loss.l_v += t.v.value;
      res.loss.total += lw.lambda_s[l] * (t.b.value + t.e.value) + lw.lambda_v[l] * t.v.value;

      // dℒ/dq through the clamped sigmoid; the clamp is flat.
      Matrix dq(m, spec.n_blocks);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < spec.n_blocks; ++j) {
          const double s = sigmoid(lc.logits(i, j));
          if (s < kProbEps || s > 1.0 - kProbEps) continue;
          const double g = lw.lambda_s[l] * (t.b.grad(i, j) + t.e.grad(i, j)) +
                           lw.lambda_v[l] * t.v.grad(i, j);
          dq(i, j) = g * s * (1.0 - s);
        }
      accumulate_at_b(dq, lc.input, res.pols[l].z);
      accumulate_col_sums(dq, res.pols[l].d);
      if (l > 0) axpy(1.0, matmul(dq, pols[l].z), dh_prev);
    }
    dh = std::move(dh_prev);
  }

  if (learn_policy)
    for (std::size_t l = 0; l < n_layers; ++l)
      res.loss.l2 += squared_norm(pols[l].z) + squared_norm(pols[l].d);
  res.loss.total += lw.lambda_l2 * res.loss.l2;
}

BackwardResult backward_nn(const NetworkParams& net, std::span<const PolicyParams> pols,
                           const ForwardCache& cache, std::span<const int> labels,
                           const LossWeights& lw) {
  BackwardResult res;
  res.net = NetworkParams::zeros_like(net);
  const bool learn_policy = cache.has_policy();
  if (learn_policy) {
    check_policies(net.arch, pols);
    for (const auto& p : pols) res.pols.emplace_back(p.n_blocks(), p.n_inputs());
  }
  backward_accumulate(net, pols, cache, labels, lw, res);

  if (lw.lambda_l2 != 0.0) {
    const double c = 2.0 * lw.lambda_l2;
    for (std::size_t l = 0; l < net.hidden.size(); ++l) {
      axpy(c, net.hidden[l].w, res.net.hidden[l].w);
      axpy(c, net.hidden[l].b, res.net.hidden[l].b);
    }
    axpy(c, net.out.w, res.net.out.w);
    axpy(c, net.out.b, res.net.out.b);
    if (learn_policy)
      for (std::size_t l = 0; l < pols.size(); ++l) {
        axpy(c, pols[l].z, res.pols[l].z);
        axpy(c, pols[l].d, res.pols[l].d);
      }
  }
  return res;
}

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::condnet: return "condnet";
    case ModelKind::bdnn: return "bdnn";
    case ModelKind::dense: return "dense";
  }
  return "?";
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "condnet") return ModelKind::condnet;
  if (s == "bdnn") return ModelKind::bdnn;
  if (s == "dense") return ModelKind::dense;
  throw std::invalid_argument("unknown model kind '" + s + "' (expected condnet, bdnn or dense)");
}

ForwardOptions Model::forward_options() const {
  ForwardOptions o;
  switch (kind) {
    case ModelKind::condnet: o.mode = MaskMode::stochastic; break;
    case ModelKind::bdnn:
      o.mode = MaskMode::uniform;
      o.uniform_rate = uniform_rate;
      break;
    case ModelKind::dense: o.mode = MaskMode::all_ones; break;
  }
  return o;
}

std::vector<int> predict(const Matrix& yhat) {
  std::vector<int> out(yhat.rows());
  for (std::size_t i = 0; i < yhat.rows(); ++i) {
    const auto r = yhat.row(i);
    out[i] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return out;
}

}  // namespace condnet
