#include <doctest.h>

#include <cmath>
#include <random>

#include "cpoison/checkpoint.hpp"
#include "cpoison/classifier.hpp"
#include "cpoison/errors.hpp"
#include "cpoison/extractor.hpp"
#include "cpoison/optim.hpp"
#include "cpoison/rng.hpp"
#include "oracles.hpp"

using namespace cpoison;

namespace {

FeatureExtractor scalar_linear(double w) {
  ExtractorSpec spec{{{1, 1}}, Nonlinearity::identity, {false}, 0, 0.0};
  return FeatureExtractor(spec, {Block{Tensor::matrix(1, 1, {w}), Tensor::vector({0.0})}});
}

Tensor random_vector(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t({n});
  for (double& v : t.values()) v = u(rng);
  return t;
}

// Smallest |pre-activation| over all blocks.
double min_abs_preactivation(const FeatureExtractor& ex, const Tensor& x) {
  double best = INFINITY;
  Tensor h = x;
  for (std::size_t l = 0; l < ex.num_blocks(); ++l) {
    const Block& b = ex.block(l);
    Tensor z({b.bias.size()});
    for (std::size_t r = 0; r < z.size(); ++r) {
      double s = b.bias[r];
      for (std::size_t c = 0; c < h.size(); ++c) s += b.weight.at(r, c) * h[c];
      z[r] = s;
      best = std::min(best, std::abs(s));
    }
    for (double& v : z.values()) v = std::max(v, 0.0);
    h = z;
  }
  return best;
}

}  // namespace

TEST_CASE("tensor validates shapes and data") {
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor(std::vector<std::size_t>{0}), DimensionError);
  const Tensor m = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  CHECK(m.at(1, 2) == 6);
  CHECK(shape_string(m.shape()) == "[2, 3]");
  CHECK_THROWS_AS(require_finite(std::vector<double>{1.0, NAN}, "x"), NumericError);
  CHECK(linf_distance(std::vector<double>{0, 1}, std::vector<double>{0.5, 0}) == 1.0);
}

TEST_CASE("forward on a one-block linear chain") {
  const auto ex = scalar_linear(2.0);
  const auto acts = forward_all(ex, Tensor::vector({2.0}));
  REQUIRE(acts.size() == 1);
  CHECK(acts[0] == Tensor::vector({4.0}));
  CHECK_THROWS_AS(forward(ex, Tensor::vector({1.0, 2.0})), DimensionError);
}

TEST_CASE("dropout with keep probability one is the identity") {
  const std::vector<std::size_t> widths{6, 5, 4};
  const FeatureExtractor ex(ExtractorSpec::mlp(3, widths, Nonlinearity::relu, 11));
  const DropoutState none = sample_dropout_masks(ex, 0.0, 3);
  Rng rng(1);
  const Tensor x = random_vector(3, rng);
  CHECK(forward_all(ex, x, &none) == forward_all(ex, x));
  for (const auto& m : none.masks) {
    if (m) {
      for (double v : m->values()) CHECK(v == 1.0);
    }
  }
  CHECK(none.scale == 1.0);
}

TEST_CASE("inverted dropout preserves the expected activation") {
  const std::vector<std::size_t> widths{8, 4};
  const FeatureExtractor ex(ExtractorSpec::mlp(3, widths, Nonlinearity::relu, 5));
  Rng rng(2);
  const Tensor x = random_vector(3, rng, 0.0, 1.0);
  // Block 0 carries the dropout site; the relu after it makes deeper
  // outputs nonlinear in the mask.
  const Tensor clean = forward_all(ex, x).front();
  const std::size_t n = 10000;
  std::vector<double> sum(clean.size(), 0.0), sum_sq(clean.size(), 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    const DropoutState d = sample_dropout_masks(ex, 0.25, derive_seed(9, {s}));
    const Tensor y = forward_all(ex, x, &d).front();
    for (std::size_t i = 0; i < y.size(); ++i) {
      sum[i] += y[i];
      sum_sq[i] += y[i] * y[i];
    }
  }
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const double mean = sum[i] / n;
    const double var = sum_sq[i] / n - mean * mean;
    const double se = std::sqrt(std::max(var, 0.0) / n);
    CHECK(std::abs(mean - clean[i]) <= 3.0 * se + 1e-12);
  }
}

TEST_CASE("dropout masks: off fraction, determinism, range") {
  const std::vector<std::size_t> widths{1000, 1000, 1};
  const FeatureExtractor ex(ExtractorSpec::mlp(2, widths, Nonlinearity::relu, 1));
  std::size_t off = 0, total = 0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const DropoutState d = sample_dropout_masks(ex, 0.25, s);
    CHECK(d.scale * d.keep_prob == doctest::Approx(1.0).epsilon(1e-15));
    for (const auto& m : d.masks) {
      if (!m) continue;
      for (double v : m->values()) {
        CHECK((v == 0.0 || v == 1.0));
        off += v == 0.0;
        ++total;
      }
    }
  }
  REQUIRE(total == 100000);
  CHECK(std::abs(static_cast<double>(off) / total - 0.25) < 0.01);

  const DropoutState a = sample_dropout_masks(ex, 0.3, 77);
  const DropoutState b = sample_dropout_masks(ex, 0.3, 77);
  CHECK(a.masks == b.masks);
  CHECK_THROWS_AS(sample_dropout_masks(ex, 1.0, 0), ParameterError);
  CHECK_THROWS_AS(sample_dropout_masks(ex, -0.1, 0), ParameterError);
}

TEST_CASE("backward on a hand-computed scalar chain") {
  // phi(x) = 2x at x = 2; loss 0.5 (phi - 1)^2 seeds with phi - 1 = 3.
  const auto ex = scalar_linear(2.0);
  const Gradients g = backward(ex, Tensor::vector({2.0}), Tensor::vector({3.0}));
  CHECK(g.wrt_input[0] == doctest::Approx(6.0));
  CHECK(g.wrt_params[0].weight[0] == doctest::Approx(6.0));
  CHECK(g.wrt_params[0].bias[0] == doctest::Approx(3.0));

  const Gradients zero = backward(ex, Tensor::vector({2.0}), Tensor::vector({0.0}));
  CHECK(zero.wrt_input[0] == 0.0);
  CHECK(zero.wrt_params[0].weight[0] == 0.0);
  CHECK_THROWS_AS(backward(ex, Tensor::vector({2.0}), Tensor::vector({1.0, 1.0})), DimensionError);
}

TEST_CASE("reverse-mode gradients match central differences") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::vector<std::size_t> widths{7, 6, 4};
    const FeatureExtractor ex(ExtractorSpec::mlp(5, widths, trial % 2 ? Nonlinearity::relu : Nonlinearity::tanh,
                                                 derive_seed(4, {static_cast<std::uint64_t>(trial)})));
    Tensor x = random_vector(5, rng);
    while (min_abs_preactivation(ex, x) < 1e-3) x = random_vector(5, rng);
    const Tensor seed = random_vector(4, rng);
    const Gradients g = backward(ex, x, seed);
    const auto f = [&](const oracle::Vec& v) { return dot(forward(ex, Tensor::vector(v)).values(), seed.values()); };
    const auto fd = oracle::central_gradient(f, x.data());
    for (std::size_t i = 0; i < fd.size(); ++i) {
      CHECK(std::abs(g.wrt_input[i] - fd[i]) <= 1e-4 * std::max(1.0, std::abs(fd[i])));
    }
    // one weight per block through a parameter perturbation
    for (std::size_t l = 0; l < ex.num_blocks(); ++l) {
      FeatureExtractor probe = ex;
      const double h = 1e-5;
      probe.block(l).weight[0] += h;
      const double up = dot(forward(probe, x).values(), seed.values());
      probe.block(l).weight[0] -= 2 * h;
      const double down = dot(forward(probe, x).values(), seed.values());
      const double expected = (up - down) / (2 * h);
      CHECK(std::abs(g.wrt_params[l].weight[0] - expected) <= 1e-4 * std::max(1.0, std::abs(expected)));
    }
  }
}

TEST_CASE("backward honours dropout masks as constants") {
  const std::vector<std::size_t> widths{6, 3};
  const FeatureExtractor ex(ExtractorSpec::mlp(4, widths, Nonlinearity::tanh, 8, 0.3));
  const DropoutState d = sample_dropout_masks(ex, 0.3, 12);
  Rng rng(5);
  const Tensor x = random_vector(4, rng);
  const Tensor seed = random_vector(3, rng);
  const Gradients g = backward(ex, x, seed, &d);
  const auto f = [&](const oracle::Vec& v) { return dot(forward(ex, Tensor::vector(v), &d).values(), seed.values()); };
  const auto fd = oracle::central_gradient(f, x.data());
  for (std::size_t i = 0; i < fd.size(); ++i) CHECK(g.wrt_input[i] == doctest::Approx(fd[i]).epsilon(1e-6));
}

TEST_CASE("per-layer backward sums the block seeds") {
  const std::vector<std::size_t> widths{5, 4, 3};
  const FeatureExtractor ex(ExtractorSpec::mlp(3, widths, Nonlinearity::tanh, 21));
  Rng rng(6);
  const Tensor x = random_vector(3, rng);
  std::vector<std::optional<Tensor>> seeds{random_vector(5, rng), std::nullopt, random_vector(3, rng)};
  const Gradients g = backward_layers(ex, x, seeds, nullptr, GradientScope::input_only);
  CHECK(g.wrt_params.empty());
  const auto f = [&](const oracle::Vec& v) {
    const auto acts = forward_all(ex, Tensor::vector(v));
    return dot(acts[0].values(), seeds[0]->values()) + dot(acts[2].values(), seeds[2]->values());
  };
  const auto fd = oracle::central_gradient(f, x.data());
  for (std::size_t i = 0; i < fd.size(); ++i) CHECK(g.wrt_input[i] == doctest::Approx(fd[i]).epsilon(1e-6));
}

TEST_CASE("initialization is reproducible and seed dependent") {
  const std::vector<std::size_t> widths{4, 3};
  const auto spec = ExtractorSpec::mlp(2, widths, Nonlinearity::relu, 42);
  CHECK(FeatureExtractor(spec) == FeatureExtractor(spec));
  auto other = spec;
  other.seed = 43;
  CHECK_FALSE(FeatureExtractor(spec).block(0).weight == FeatureExtractor(other).block(0).weight);
  const double bound = 1.0 / std::sqrt(2.0);
  const FeatureExtractor ex(spec);
  for (double w : ex.block(0).weight.values()) CHECK(std::abs(w) <= bound);
}

TEST_CASE("extractor spec validation") {
  ExtractorSpec bad{{{2, 3}, {4, 1}}, Nonlinearity::relu, {false, false}, 0, 0.0};
  CHECK_THROWS_AS(bad.validate(), DimensionError);
  ExtractorSpec empty{};
  CHECK_THROWS(empty.validate());
  CHECK(parse_nonlinearity("tanh") == Nonlinearity::tanh);
  CHECK_THROWS_AS(parse_nonlinearity("gelu"), ParameterError);
}

TEST_CASE("forward is pure") {
  const std::vector<std::size_t> widths{9, 9, 2};
  const FeatureExtractor ex(ExtractorSpec::mlp(4, widths, Nonlinearity::relu, 10));
  Rng rng(9);
  const Tensor x = random_vector(4, rng);
  CHECK(forward_all(ex, x) == forward_all(ex, x));
}

TEST_CASE("adam: first step magnitude, zero gradient, descent") {
  AdamState s = AdamState::for_shape({1}, 0.04);
  Tensor w = Tensor::vector({1.0});
  adam_step(s, w, Tensor::vector({0.5}));
  CHECK(std::abs((1.0 - w[0]) - 0.04) < 1e-6);
  CHECK(s.step_count == 1);

  AdamState z = AdamState::for_shape({1}, 0.04);
  Tensor w0 = Tensor::vector({0.3});
  adam_step(z, w0, Tensor::vector({0.0}));
  CHECK(w0[0] == 0.3);

  AdamState q = AdamState::for_shape({1}, 0.04);
  Tensor wq = Tensor::vector({1.0});
  for (int i = 0; i < 100; ++i) adam_step(q, wq, wq);  // grad of 0.5 w^2
  CHECK(std::abs(wq[0]) < 1.0);
  CHECK(q.step_count == 100);

  Tensor keep = Tensor::vector({2.0});
  CHECK_THROWS_AS(adam_step(q, keep, Tensor::vector({NAN})), NumericError);
  CHECK(keep[0] == 2.0);
  CHECK_THROWS_AS(adam_step(q, keep, Tensor::vector({1.0, 2.0})), DimensionError);
}

TEST_CASE("cross entropy") {
  const auto eq = cross_entropy(Tensor::vector({0.7, 0.7, 0.7}), 1);
  CHECK(eq.loss == doctest::Approx(std::log(3.0)));
  const auto big = cross_entropy(Tensor::vector({1000.0, 0.0}), 0);
  CHECK(std::isfinite(big.loss));
  CHECK(big.loss == doctest::Approx(0.0).epsilon(1e-12));
  CHECK_THROWS(cross_entropy(Tensor::vector({1.0, 2.0}), 2));

  Rng rng(4);
  for (int t = 0; t < 10; ++t) {
    const Tensor logits = random_vector(4, rng, -3.0, 3.0);
    const auto ce = cross_entropy(logits, t % 4);
    const auto f = [&](const oracle::Vec& v) { return cross_entropy(Tensor::vector(v), t % 4).loss; };
    const auto fd = oracle::central_gradient(f, logits.data());
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(ce.grad_wrt_logits[i] - fd[i]) < 1e-6);
  }
}

TEST_CASE("linear classifier ties go to the lowest index") {
  LinearClassifier c = LinearClassifier::zeros(3, 2);
  CHECK(c.predict(std::vector<double>{1.0, 1.0}) == 0);
  c.bias[2] = 1.0;
  CHECK(c.predict(std::vector<double>{1.0, 1.0}) == 2);
}

TEST_CASE("checkpoint round trip is bit exact") {
  const std::vector<std::size_t> widths{5, 3};
  const FeatureExtractor ex(ExtractorSpec::mlp(4, widths, Nonlinearity::tanh, 99, 0.25));
  const LinearClassifier head = LinearClassifier::random(2, 3, 7);
  const std::string text = save_checkpoint({ex, head});
  const Checkpoint back = load_checkpoint(text);
  CHECK(back.extractor == ex);
  REQUIRE(back.head);
  CHECK(*back.head == head);
  CHECK(back.extractor.spec().dropout_prob == 0.25);
  CHECK(save_checkpoint(back) == text);

  const Checkpoint bare = load_checkpoint(save_checkpoint({ex, std::nullopt}));
  CHECK_FALSE(bare.head);
}

TEST_CASE("checkpoint parse errors carry the line") {
  const std::vector<std::size_t> widths{2};
  std::string text = save_checkpoint({FeatureExtractor(ExtractorSpec::mlp(2, widths, Nonlinearity::relu, 1)), {}});
  const auto pos = text.find("weight 2 2\n") + 11;
  text.replace(pos, text.find('\n', pos) - pos, "0.1 oops");
  try {
    load_checkpoint(text);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 8);
  }
  CHECK_THROWS_AS(load_checkpoint("not a checkpoint\n"), ParseError);
}
