#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "condnet/linalg.hpp"
#include "condnet/network.hpp"
#include "oracles.hpp"

using namespace condnet;

namespace {

struct Toy {
  NetworkParams net;
  std::vector<PolicyParams> pols;
  Matrix x;
  std::vector<int> y;
  std::vector<BlockMask> masks;
};

Toy make_toy(const Architecture& arch, std::size_t m, std::uint64_t seed, double keep = 0.6) {
  std::mt19937_64 g(seed);
  Rng rng(seed);
  Toy t;
  t.net = init_glorot(arch, rng);
  for (auto& layer : t.net.hidden)
    for (double& v : layer.b) v = std::uniform_real_distribution<double>(-0.5, 0.5)(g);
  for (double& v : t.net.out.b) v = std::uniform_real_distribution<double>(-0.5, 0.5)(g);
  t.pols = init_policies(arch, rng, PolicyInit::glorot);
  for (auto& p : t.pols)
    for (double& v : p.d) v = std::uniform_real_distribution<double>(-1.0, 1.0)(g);
  t.x = oracle::random_matrix(m, arch.n_inputs, g, 0.0, 1.0);
  std::uniform_int_distribution<int> lab(0, static_cast<int>(arch.n_classes) - 1);
  for (std::size_t i = 0; i < m; ++i) t.y.push_back(lab(g));
  for (const auto& spec : arch.hidden)
    t.masks.push_back(oracle::random_mask(m, spec.n_blocks, spec.block_size, keep, g));
  return t;
}

ForwardCache run_fixed(const Toy& t) {
  Rng rng(0);
  ForwardOptions opt;
  opt.mode = MaskMode::fixed;
  opt.fixed_masks = &t.masks;
  return forward(t.net, t.pols, t.x, rng, opt);
}

oracle::DenseMlp as_dense(const NetworkParams& net) {
  oracle::DenseMlp d;
  for (const auto& layer : net.hidden) {
    d.w.push_back(layer.w);
    d.b.push_back(layer.b);
  }
  d.w.push_back(net.out.w);
  d.b.push_back(net.out.b);
  return d;
}

// Every scalar parameter of net and policies, in a fixed order.
std::vector<double*> all_params(NetworkParams& net, std::vector<PolicyParams>& pols) {
  std::vector<double*> ps;
  auto add = [&](std::span<double> s) {
    for (double& v : s) ps.push_back(&v);
  };
  for (auto& layer : net.hidden) {
    add(layer.w.flat());
    add(layer.b);
  }
  add(net.out.w.flat());
  add(net.out.b);
  for (auto& p : pols) {
    add(p.z.flat());
    add(p.d);
  }
  return ps;
}

std::vector<double> flatten(BackwardResult& r) {
  std::vector<double> out;
  for (double* p : all_params(r.net, r.pols)) out.push_back(*p);
  return out;
}

double fd_max_rel_err(Toy t, const LossWeights& lw) {
  const ForwardCache cache = run_fixed(t);
  BackwardResult g = backward_nn(t.net, t.pols, cache, t.y, lw);
  const std::vector<double> analytic = flatten(g);
  auto f = [&] { return regularized_loss(t.net, t.pols, run_fixed(t), t.y, lw).total; };
  const auto params = all_params(t.net, t.pols);
  double worst = 0.0;
  for (std::size_t q = 0; q < params.size(); ++q) {
    const double fd = oracle::central_diff(f, *params[q], 1e-5);
    worst = std::max(worst, oracle::rel_err(analytic[q], fd, 1e-6));
  }
  return worst;
}

Architecture arch_of(std::size_t in, std::vector<LayerSpec> hidden, std::size_t classes,
                     Activation a = Activation::tanh) {
  return Architecture{in, std::move(hidden), classes, a};
}

}  // namespace

TEST_SUITE("network") {

TEST_CASE("glorot init draws row-major within bounds with zero biases") {
  const Architecture arch = arch_of(5, {{2, 3}, {3, 1}}, 4);
  Rng a(7), b(7);
  const NetworkParams net = init_glorot(arch, a);
  const double bound0 = std::sqrt(6.0 / (5 + 6));
  for (double v : net.hidden[0].w.flat()) CHECK(v == b.uniform(-bound0, bound0));
  const double bound1 = std::sqrt(6.0 / (6 + 3));
  for (double v : net.hidden[1].w.flat()) CHECK(v == b.uniform(-bound1, bound1));
  const double bound2 = std::sqrt(6.0 / (3 + 4));
  for (double v : net.out.w.flat()) CHECK(v == b.uniform(-bound2, bound2));
  for (const auto& l : net.hidden)
    for (double v : l.b) CHECK(v == 0.0);
  for (double v : net.out.b) CHECK(v == 0.0);

  Rng c(7);
  const auto zeros = init_policies(arch, c, PolicyInit::zeros);
  for (const auto& p : zeros) CHECK(squared_norm(p.z) == 0.0);
  CHECK(zeros[1].z.rows() == 3);
  CHECK(zeros[1].z.cols() == 6);
}

TEST_CASE("architecture validation") {
  Rng rng(0);
  CHECK_THROWS_AS(init_glorot(arch_of(0, {{1, 1}}, 2), rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(init_glorot(arch_of(3, {}, 2), rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(init_glorot(arch_of(3, {{0, 2}}, 2), rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(init_glorot(arch_of(3, {{1, 1}}, 1), rng),
                  std::invalid_argument);
}

TEST_CASE("all-ones forward equals a dense MLP exactly") {
  const Toy t = make_toy(arch_of(7, {{3, 4}, {2, 5}}, 5), 9, 30);
  Rng rng(1);
  ForwardOptions opt;
  opt.mode = MaskMode::all_ones;
  const ForwardCache c = forward(t.net, {}, t.x, rng, opt);
  CHECK(c.yhat == as_dense(t.net).forward(t.x).a.back());

  // Policies clamped on give the same network.
  auto pols = t.pols;
  for (auto& p : pols) std::fill(p.d.begin(), p.d.end(), 1000.0);
  Rng rng2(1);
  const ForwardCache c2 = forward(t.net, pols, t.x, rng2);
  CHECK(c2.yhat == c.yhat);
}

TEST_CASE("masked forward matches the expanded-mask oracle") {
  const Architecture arch = arch_of(6, {{3, 2}, {2, 3}}, 4);
  const Toy t = make_toy(arch, 8, 31);
  const ForwardCache c = run_fixed(t);

  Matrix h = t.x;
  BlockMask in_mask = BlockMask::ones(8, 1, 6);
  for (std::size_t l = 0; l < 2; ++l) {
    const Matrix probs = compute_probs(t.pols[l], h);
    CHECK(oracle::max_abs_diff(c.layers[l].probs, probs) <= 1e-15);
    Matrix pre = oracle::masked_matmul(h, t.net.hidden[l].w, in_mask, t.masks[l]);
    const Matrix um = oracle::unit_mask(t.masks[l]);
    for (std::size_t i = 0; i < pre.rows(); ++i)
      for (std::size_t j = 0; j < pre.cols(); ++j)
        pre(i, j) = um(i, j) * std::tanh(pre(i, j) + t.net.hidden[l].b[j]);
    h = pre;
    in_mask = t.masks[l];
    CHECK(oracle::max_abs_diff(c.layers[l].h, h) <= 1e-12);
  }
  Matrix logits = oracle::matmul(h, t.net.out.w);
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 4; ++j) logits(i, j) += t.net.out.b[j];
  CHECK(oracle::max_abs_diff(c.logits, logits) <= 1e-12);
}

TEST_CASE("stochastic, fixed and dense-compute passes agree") {
  const Toy t = make_toy(arch_of(5, {{4, 2}, {3, 2}}, 3), 10, 32);
  Rng a(5), b(5);
  const ForwardCache s = forward(t.net, t.pols, t.x, a);
  ForwardOptions dense;
  dense.dense_compute = true;
  const ForwardCache d = forward(t.net, t.pols, t.x, b, dense);
  CHECK(s.yhat == d.yhat);
  CHECK(s.layers[1].mask == d.layers[1].mask);

  std::vector<BlockMask> masks{s.layers[0].mask, s.layers[1].mask};
  ForwardOptions fixed;
  fixed.mode = MaskMode::fixed;
  fixed.fixed_masks = &masks;
  Rng r(0);
  CHECK(forward(t.net, t.pols, t.x, r, fixed).yhat == s.yhat);
}

TEST_CASE("deterministic and uniform masking") {
  const Toy t = make_toy(arch_of(5, {{6, 2}}, 3), 40, 33);
  Rng rng(2);
  ForwardOptions det;
  det.mode = MaskMode::deterministic;
  const ForwardCache c = forward(t.net, t.pols, t.x, rng, det);
  for (std::size_t i = 0; i < 40; ++i)
    for (std::size_t j = 0; j < 6; ++j)
      CHECK(c.layers[0].mask(i, j) == (c.layers[0].probs(i, j) >= 0.5));

  ForwardOptions uni;
  uni.mode = MaskMode::uniform;
  uni.uniform_rate = {0.25};
  Rng a(3), b(3);
  const ForwardCache u = forward(t.net, {}, t.x, a, uni);
  CHECK(u.layers[0].mask == sample_mask(Matrix(40, 6, 0.25), b, 2));
  uni.uniform_rate = {};
  CHECK_THROWS_AS(forward(t.net, {}, t.x, a, uni), std::invalid_argument);
}

TEST_CASE("softmax and nll") {
  std::mt19937_64 g(34);
  const Matrix y = softmax(oracle::random_matrix(20, 7, g, -30.0, 30.0));
  for (std::size_t i = 0; i < 20; ++i) {
    double s = 0.0;
    for (double v : y.row(i)) s += v;
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
  for (double c : nll(y, std::vector<int>(20, 3))) CHECK(c >= 0.0);

  CHECK(nll(Matrix(1, 10, 0.1), std::vector<int>{4})[0] == doctest::Approx(std::log(10.0)));
  CHECK(nll(Matrix::from_rows({{0, 1, 0}}), std::vector<int>{1})[0] == 0.0);
  CHECK(nll(Matrix::from_rows({{0, 1, 0}}), std::vector<int>{0})[0] ==
        doctest::Approx(-std::log(1e-12)));
  const Vector c = nll(Matrix::from_rows({{0.5, 0.25, 0.25}, {0.1, 0.2, 0.7}}),
                       std::vector<int>{0, 2});
  CHECK(c[0] == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(c[1] == doctest::Approx(-std::log(0.7)).epsilon(1e-15));
  CHECK_THROWS_AS(nll(Matrix(1, 3, 1.0 / 3), std::vector<int>{3}), std::invalid_argument);
}

TEST_CASE("all-ones backward with no penalties equals dense backprop") {
  const Toy t = make_toy(arch_of(6, {{2, 4}, {3, 2}}, 4), 11, 35);
  Rng rng(0);
  ForwardOptions opt;
  opt.mode = MaskMode::all_ones;
  const ForwardCache c = forward(t.net, {}, t.x, rng, opt);
  const BackwardResult r = backward_nn(t.net, {}, c, t.y, LossWeights::uniform(2, 0, 0, 0, 0.5));
  const auto [gw, gb] = as_dense(t.net).grad(t.x, t.y);
  CHECK(r.net.hidden[0].w == gw[0]);
  CHECK(r.net.hidden[1].w == gw[1]);
  CHECK(r.net.out.w == gw[2]);
  CHECK(r.net.hidden[0].b == gb[0]);
  CHECK(r.net.out.b == gb[2]);
  CHECK(r.pols.empty());
}

TEST_CASE("the ridge term adds 2λθ") {
  Toy t = make_toy(arch_of(4, {{3, 2}}, 3), 6, 36);
  const ForwardCache c = run_fixed(t);
  const double lam = 0.37;
  BackwardResult plain = backward_nn(t.net, t.pols, c, t.y, LossWeights::uniform(1, 1, 1, 0, 0.3));
  BackwardResult ridge =
      backward_nn(t.net, t.pols, c, t.y, LossWeights::uniform(1, 1, 1, lam, 0.3));
  const auto a = flatten(plain), b = flatten(ridge);
  const auto theta = all_params(t.net, t.pols);
  for (std::size_t q = 0; q < a.size(); ++q)
    CHECK(b[q] - a[q] == doctest::Approx(2 * lam * *theta[q]).epsilon(1e-12));
  CHECK(ridge.loss.total - plain.loss.total ==
        doctest::Approx(lam * (t.net.squared_norm() + squared_norm(t.pols))));
}

TEST_CASE("backward matches central differences on toy nets") {
  struct Case {
    Architecture arch;
    std::size_t m;
    LossWeights lw;
  };
  LossWeights sq = LossWeights::uniform(2, 0.7, 1.3, 0.01, 0.4, PenaltyNorm::squared);
  sq.reduction = CostReduction::sum;
  std::vector<Case> cases{
      {arch_of(5, {{3, 2}}, 3), 6, LossWeights::uniform(1, 0.5, 2.0, 0.02, 0.3)},
      {arch_of(4, {{2, 3}, {3, 2}}, 4), 5, sq},
      {arch_of(6, {{4, 1}, {2, 2}}, 3, Activation::relu), 7,
       LossWeights::uniform(2, 1.5, 0.8, 0.005, 0.25)},
      {arch_of(3, {{2, 2}, {2, 2}, {2, 1}}, 2), 4, LossWeights::uniform(3, 0.3, 0.3, 0.0, 0.5)},
  };
  for (std::size_t k = 0; k < cases.size(); ++k) {
    CAPTURE(k);
    const Toy t = make_toy(cases[k].arch, cases[k].m, 40 + k);
    CHECK(fd_max_rel_err(t, cases[k].lw) < 1e-4);
  }
}

TEST_CASE("a dropped block gets no cost gradient from its example") {
  // Two examples with the same pattern; the variance penalty needs m >= 2.
  Toy t = make_toy(arch_of(4, {{3, 2}, {2, 2}}, 3), 2, 37);
  t.masks[0] = BlockMask::from_bits({{1, 0, 1}, {1, 0, 1}}, 2);
  t.masks[1] = BlockMask::from_bits({{0, 1}, {0, 1}}, 2);
  const ForwardCache c = run_fixed(t);
  const BackwardResult r = backward_nn(t.net, t.pols, c, t.y, LossWeights::uniform(2, 0, 0, 0, 0.5));
  // Outgoing weights of layer-1 block 1 (units 2,3) into layer 2, and of
  // layer-2 block 0 (units 0,1) into the output layer.
  for (std::size_t u : {2u, 3u})
    for (std::size_t j = 0; j < 4; ++j) CHECK(r.net.hidden[1].w(u, j) == 0.0);
  for (std::size_t u : {0u, 1u})
    for (std::size_t j = 0; j < 3; ++j) CHECK(r.net.out.w(u, j) == 0.0);
  // Incoming weights and biases of dropped units too.
  for (std::size_t k = 0; k < 4; ++k) CHECK(r.net.hidden[0].w(k, 2) == 0.0);
  CHECK(r.net.hidden[1].b[0] == 0.0);
  CHECK(r.net.out.w(2, 0) != 0.0);
}

TEST_CASE("backward_accumulate plus the ridge term equals backward_nn") {
  Toy t = make_toy(arch_of(5, {{3, 2}, {2, 3}}, 3), 6, 38);
  const ForwardCache c = run_fixed(t);
  const LossWeights lw = LossWeights::uniform(2, 0.5, 0.5, 0.1, 0.3);
  BackwardResult full = backward_nn(t.net, t.pols, c, t.y, lw);
  BackwardResult acc;
  acc.net = NetworkParams::zeros_like(t.net);
  for (const auto& p : t.pols) acc.pols.emplace_back(p.n_blocks(), p.n_inputs());
  backward_accumulate(t.net, t.pols, c, t.y, lw, acc);
  auto got = flatten(acc);
  const auto theta = all_params(t.net, t.pols);
  const auto want = flatten(full);
  for (std::size_t q = 0; q < got.size(); ++q) CHECK(got[q] + 0.2 * *theta[q] == want[q]);
  CHECK(acc.loss.total == full.loss.total);
  CHECK(acc.loss.total == doctest::Approx(regularized_loss(t.net, t.pols, c, t.y, lw).total));
}

TEST_CASE("a stale cache is rejected") {
  const Toy t = make_toy(arch_of(4, {{2, 2}}, 3), 5, 39);
  const Toy other = make_toy(arch_of(4, {{2, 2}, {2, 2}}, 3), 5, 39);
  const ForwardCache c = run_fixed(t);
  const LossWeights lw = LossWeights::uniform(2, 0, 0, 0, 0.5);
  CHECK_THROWS_AS(backward_nn(other.net, other.pols, c, t.y, lw), std::invalid_argument);
  CHECK_THROWS_AS(backward_nn(t.net, t.pols, c, std::vector<int>{0, 1},
                              LossWeights::uniform(1, 0, 0, 0, 0.5)),
                  std::invalid_argument);
}

}  // TEST_SUITE
