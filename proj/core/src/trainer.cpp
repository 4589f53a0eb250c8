#include "condnet/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <string>

#include "condnet/linalg.hpp"

namespace condnet {
namespace {

Vector broadcast_vec(const Vector& v, std::size_t layers, const char* name) {
  if (v.size() == layers) return v;
  if (v.size() == 1) return Vector(layers, v.front());
  throw std::invalid_argument(std::string("hyperparams: ") + name + " has " +
                              std::to_string(v.size()) + " entries for " + std::to_string(layers) +
                              " layers");
}

// θ ← θ - rate·(g + c·θ) with g then cleared; the same arithmetic as adding
// the ridge gradient c·θ to g and applying it, in one pass.
void step_and_clear(std::span<double> theta, std::span<double> g, double rate, double c) {
  if (c != 0.0)
    for (std::size_t i = 0; i < theta.size(); ++i) {
      theta[i] += -rate * (g[i] + c * theta[i]);
      g[i] = 0.0;
    }
  else
    for (std::size_t i = 0; i < theta.size(); ++i) {
      theta[i] += -rate * g[i];
      g[i] = 0.0;
    }
}

// As step_and_clear, after first applying a REINFORCE step -rate_pi·r. The
// ridge gradient uses θ from before either step.
void step_and_clear(std::span<double> theta, std::span<double> g, std::span<const double> r,
                    double rate_pi, double rate, double c) {
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double t0 = theta[i];
    const double t1 = t0 + -rate_pi * r[i];
    theta[i] = c != 0.0 ? t1 + -rate * (g[i] + c * t0) : t1 + -rate * g[i];
    g[i] = 0.0;
  }
}

void step_and_clear(NetworkParams& p, NetworkParams& g, double rate, double c) {
  for (std::size_t l = 0; l < p.hidden.size(); ++l) {
    step_and_clear(p.hidden[l].w.flat(), g.hidden[l].w.flat(), rate, c);
    step_and_clear(p.hidden[l].b, g.hidden[l].b, rate, c);
  }
  step_and_clear(p.out.w.flat(), g.out.w.flat(), rate, c);
  step_and_clear(p.out.b, g.out.b, rate, c);
}

void apply(PolicyParams& p, const PolicyGrad& g, double rate) {
  axpy(-rate, g.z, p.z);
  axpy(-rate, g.d, p.d);
}

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

}  // namespace

Hyperparams Hyperparams::broadcast(std::size_t layers) const {
  Hyperparams h = *this;
  h.alpha_pi = broadcast_vec(alpha_pi, layers, "alpha_pi");
  h.lambda_s = broadcast_vec(lambda_s, layers, "lambda_s");
  h.lambda_v = broadcast_vec(lambda_v, layers, "lambda_v");
  h.tau = broadcast_vec(tau, layers, "tau");
  return h;
}

void Hyperparams::validate(std::size_t layers) const {
  const Hyperparams h = broadcast(layers);
  if (!(h.alpha > 0.0)) throw std::invalid_argument("hyperparams: alpha must be > 0");
  for (const double a : h.alpha_pi)
    if (!(a > 0.0)) throw std::invalid_argument("hyperparams: alpha_pi must be > 0");
  for (const double t : h.tau)
    if (!(t > 0.0 && t < 1.0)) throw std::invalid_argument("hyperparams: tau must be in (0, 1)");
  for (const double l : h.lambda_s)
    if (!(l >= 0.0)) throw std::invalid_argument("hyperparams: lambda_s must be >= 0");
  for (const double l : h.lambda_v)
    if (!(l >= 0.0)) throw std::invalid_argument("hyperparams: lambda_v must be >= 0");
  if (!(lambda_l2 >= 0.0)) throw std::invalid_argument("hyperparams: lambda_l2 must be >= 0");
  if (batch_size < 2) throw std::invalid_argument("hyperparams: batch_size must be >= 2");
  if (max_epochs == 0) throw std::invalid_argument("hyperparams: max_epochs must be >= 1");
  if (patience == 0) throw std::invalid_argument("hyperparams: patience must be >= 1");
  if (!(baseline_decay >= 0.0 && baseline_decay < 1.0))
    throw std::invalid_argument("hyperparams: baseline_decay must be in [0, 1)");
}

LossWeights Hyperparams::loss_weights() const {
  return {lambda_s, lambda_v, lambda_l2, tau, norm, reduction};
}

TrainState init_state(const TrainConfig& cfg) {
  cfg.arch.validate();
  const std::size_t layers = cfg.arch.hidden.size();
  cfg.hyper.validate(layers);
  const Hyperparams hp = cfg.hyper.broadcast(layers);

  TrainState s;
  Rng init_rng = make_rng(hp.seed, RngStream::init);
  s.model.kind = cfg.kind;
  s.model.net = init_glorot(cfg.arch, init_rng);
  if (cfg.kind == ModelKind::condnet) s.model.policies = init_policies(cfg.arch, init_rng, hp.policy_init);
  if (cfg.kind == ModelKind::bdnn) {
    s.model.uniform_rate =
        cfg.uniform_rate.empty() ? hp.tau : broadcast_vec(cfg.uniform_rate, layers, "uniform_rate");
    for (const double r : s.model.uniform_rate)
      if (!(r > 0.0 && r <= 1.0)) throw std::invalid_argument("train: uniform_rate must be in (0, 1]");
  }
  s.shuffle_rng = make_rng(hp.seed, RngStream::shuffle);
  s.mask_rng = make_rng(hp.seed, RngStream::masks);
  s.grad.net = NetworkParams::zeros_like(s.model.net);
  for (const auto& p : s.model.policies) s.grad.pols.emplace_back(p.n_blocks(), p.n_inputs());
  return s;
}

std::vector<PolicyGrad> reinforce_gradient(std::span<const PolicyParams> pols,
                                           const ForwardCache& cache,
                                           std::span<const double> weights) {
  if (!cache.has_policy() || cache.layers.size() != pols.size())
    throw std::invalid_argument("reinforce: cache does not hold one sampled policy per layer");
  std::vector<PolicyGrad> out;
  out.reserve(pols.size());
  for (std::size_t l = 0; l < pols.size(); ++l) {
    const LayerCache& lc = cache.layers[l];
    if (weights.size() != lc.input.rows())
      throw std::invalid_argument("reinforce: " + std::to_string(weights.size()) + " costs for " +
                                  std::to_string(lc.input.rows()) + " examples");
    out.push_back(grad_log_prob(pols[l], lc.input, PolicySample{lc.probs, lc.mask}, weights));
  }
  return out;
}

void reinforce_update(std::vector<PolicyParams>& pols, const ForwardCache& cache,
                      std::span<const double> costs, std::span<const double> alpha_pi) {
  if (alpha_pi.size() != pols.size())
    throw std::invalid_argument("reinforce_update: need one alpha_pi per policy layer");
  const auto g = reinforce_gradient(pols, cache, costs);
  for (std::size_t l = 0; l < pols.size(); ++l) apply(pols[l], g[l], alpha_pi[l]);
}

StepMetrics sgd_step(TrainState& state, const Matrix& x, std::span<const int> labels,
                     const Hyperparams& hp_in) {
  Model& model = state.model;
  const std::size_t layers = model.net.hidden.size();
  const Hyperparams hp = hp_in.broadcast(layers);

  const ForwardCache cache =
      forward(model.net, model.policies, x, state.mask_rng, model.forward_options());
  BackwardResult& bw = state.grad;
  backward_accumulate(model.net, model.policies, cache, labels, hp.loss_weights(), bw);
  if (!std::isfinite(bw.loss.total))
    throw DivergenceError("sgd_step: non-finite loss (nll=" + std::to_string(bw.loss.nll) +
                          ", total=" + std::to_string(bw.loss.total) + ") at epoch " +
                          std::to_string(state.epoch));

  const double c = 2.0 * hp.lambda_l2;
  if (model.kind == ModelKind::condnet) {
    Vector weights = bw.costs;
    if (hp.baseline) {
      if (!state.baseline_ready) {
        state.cost_baseline = bw.loss.nll;
        state.baseline_ready = true;
      }
      for (double& w : weights) w -= state.cost_baseline;
      state.cost_baseline =
          hp.baseline_decay * state.cost_baseline + (1.0 - hp.baseline_decay) * bw.loss.nll;
    }
    const auto g_reinforce = reinforce_gradient(model.policies, cache, weights);
    for (std::size_t l = 0; l < layers; ++l) {
      PolicyParams& p = model.policies[l];
      step_and_clear(p.z.flat(), bw.pols[l].z.flat(), g_reinforce[l].z.flat(), hp.alpha_pi[l],
                     hp.alpha, c);
      step_and_clear(p.d, bw.pols[l].d, g_reinforce[l].d, hp.alpha_pi[l], hp.alpha, c);
    }
  }
  step_and_clear(model.net, bw.net, hp.alpha, c);

  return {bw.loss, measure_sparsity(cache)};
}

Vector measure_sparsity(const ForwardCache& cache) {
  Vector out;
  out.reserve(cache.layers.size());
  for (const auto& lc : cache.layers) {
    const std::size_t total = lc.mask.examples() * lc.mask.n_blocks();
    out.push_back(total ? static_cast<double>(lc.mask.count_active()) / static_cast<double>(total)
                        : 0.0);
  }
  return out;
}

EvalResult evaluate(const Model& model, const Dataset& data, Rng& rng, std::size_t chunk) {
  if (data.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  const std::size_t layers = model.net.hidden.size();
  const ForwardOptions opt = model.forward_options();
  EvalResult r;
  r.sparsity.assign(layers, 0.0);
  std::size_t wrong = 0;
  double nll_sum = 0.0;
  const auto t0 = Clock::now();
  for (std::size_t begin = 0; begin < data.size(); begin += chunk) {
    const std::size_t end = std::min(data.size(), begin + chunk);
    std::vector<std::size_t> idx(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    const Matrix x = data.x.gather_rows(idx);
    const ForwardCache cache = forward(model.net, model.policies, x, rng, opt);
    const auto pred = predict(cache.yhat);
    const std::span<const int> labels(data.labels.data() + begin, end - begin);
    for (std::size_t i = 0; i < pred.size(); ++i) wrong += pred[i] != labels[i];
    for (const double c : nll(cache.yhat, labels)) nll_sum += c;
    const Vector sp = measure_sparsity(cache);
    for (std::size_t l = 0; l < layers; ++l) r.sparsity[l] += sp[l] * static_cast<double>(end - begin);
  }
  r.wall_s = ms_since(t0) / 1000.0;
  const double n = static_cast<double>(data.size());
  r.error = static_cast<double>(wrong) / n;
  r.mean_nll = nll_sum / n;
  for (double& s : r.sparsity) s /= n;
  return r;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  return idx;
}

TrainResult train(const TrainConfig& cfg, const DataSplits& data, const EpochCallback& on_epoch) {
  if (data.train.size() < 2 || data.valid.size() == 0 || data.test.size() == 0)
    throw std::invalid_argument("train: train (>= 2 examples), valid and test splits are required");
  if (data.train.x.cols() != cfg.arch.n_inputs)
    throw std::invalid_argument("train: data has " + std::to_string(data.train.x.cols()) +
                                " features, architecture expects " +
                                std::to_string(cfg.arch.n_inputs));
  if (data.train.n_classes != cfg.arch.n_classes)
    throw std::invalid_argument("train: data has " + std::to_string(data.train.n_classes) +
                                " classes, architecture expects " +
                                std::to_string(cfg.arch.n_classes));

  TrainState state = init_state(cfg);
  const std::size_t layers = cfg.arch.hidden.size();
  const Hyperparams hp = cfg.hyper.broadcast(layers);
  const std::size_t n = data.train.size();

  TrainResult res;
  res.model = state.model;
  double initial_nll = std::numeric_limits<double>::quiet_NaN();
  std::size_t blowup_streak = 0;
  std::size_t since_best = 0;
  double wall_total = 0.0;

  for (std::size_t epoch = 1; epoch <= hp.max_epochs; ++epoch) {
    state.epoch = epoch;
    const auto t0 = Clock::now();
    const auto order = shuffled_indices(n, state.shuffle_rng);

    EpochMetrics em;
    em.epoch = epoch;
    em.sparsity.assign(layers, 0.0);
    double seen = 0.0;
    for (std::size_t begin = 0; begin < n; begin += hp.batch_size) {
      const std::size_t end = std::min(n, begin + hp.batch_size);
      if (end - begin < 2) break;  // the variance penalty needs two examples
      const std::span<const std::size_t> idx(order.data() + begin, end - begin);
      const Matrix x = data.train.x.gather_rows(idx);
      std::vector<int> labels(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) labels[i] = data.train.labels[idx[i]];

      const StepMetrics sm = sgd_step(state, x, labels, hp);
      if (std::isnan(initial_nll)) initial_nll = sm.loss.nll;
      const double w = static_cast<double>(idx.size());
      em.train_nll += sm.loss.nll * w;
      em.l_b += sm.loss.l_b * w;
      em.l_e += sm.loss.l_e * w;
      em.l_v += sm.loss.l_v * w;
      for (std::size_t l = 0; l < layers; ++l) em.sparsity[l] += sm.sparsity[l] * w;
      seen += w;
    }
    em.train_nll /= seen;
    em.l_b /= seen;
    em.l_e /= seen;
    em.l_v /= seen;
    for (double& s : em.sparsity) s /= seen;

    Rng valid_rng = make_rng(hp.seed, RngStream::eval, 2 * epoch);
    Rng test_rng = make_rng(hp.seed, RngStream::eval, 2 * epoch + 1);
    em.valid_err = evaluate(state.model, data.valid, valid_rng).error;
    em.test_err = evaluate(state.model, data.test, test_rng).error;
    em.wall_ms = ms_since(t0);
    wall_total += em.wall_ms;
    state.history.push_back(em);
    if (on_epoch) on_epoch(em);

    if (em.train_nll > 10.0 * initial_nll) {
      if (++blowup_streak >= 3)
        throw DivergenceError("train: mean cost above 10x its initial value for 3 epochs");
    } else {
      blowup_streak = 0;
    }

    if (em.valid_err < state.best_valid_err) {
      state.best_valid_err = em.valid_err;
      state.best_epoch = epoch;
      res.model = state.model;
      since_best = 0;
    } else if (++since_best >= hp.patience) {
      break;
    }
  }

  res.history = state.history;
  res.best_epoch = state.best_epoch;
  res.best_valid_err = state.best_valid_err;
  res.mean_epoch_wall_ms = wall_total / static_cast<double>(res.history.size());
  Rng final_rng = make_rng(hp.seed, RngStream::eval, 0);
  const EvalResult test = evaluate(res.model, data.test, final_rng);
  res.test_err = test.error;
  res.test_sparsity = test.sparsity;
  res.test_wall_s = test.wall_s;
  return res;
}

void write_metrics_header(std::ostream& os, std::size_t layers) {
  os << "epoch,train_nll,valid_err,test_err,l_b,l_e,l_v";
  for (std::size_t l = 1; l <= layers; ++l) os << ",mean_sparsity_l" << l;
  os << ",epoch_wall_ms\n";
}

void write_metrics_row(std::ostream& os, const EpochMetrics& m) {
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  os << m.epoch << ',' << num(m.train_nll) << ',' << num(m.valid_err) << ',' << num(m.test_err)
     << ',' << num(m.l_b) << ',' << num(m.l_e) << ',' << num(m.l_v);
  for (const double s : m.sparsity) os << ',' << num(s);
  std::snprintf(buf, sizeof buf, "%.3f", m.wall_ms);
  os << ',' << buf << '\n';
}

}  // namespace condnet
