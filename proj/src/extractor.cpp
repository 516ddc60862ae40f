#include "cpoison/extractor.hpp"

#include <cmath>
#include <string>

#include "cpoison/errors.hpp"
#include "cpoison/rng.hpp"

namespace cpoison {

std::string_view to_string(Nonlinearity nl) {
  switch (nl) {
    case Nonlinearity::relu: return "relu";
    case Nonlinearity::tanh: return "tanh";
    case Nonlinearity::identity: return "identity";
  }
  return "relu";
}

Nonlinearity parse_nonlinearity(std::string_view name) {
  if (name == "relu") return Nonlinearity::relu;
  if (name == "tanh") return Nonlinearity::tanh;
  if (name == "identity") return Nonlinearity::identity;
  throw ParameterError("unknown nonlinearity '" + std::string(name) + "'");
}

ExtractorSpec ExtractorSpec::mlp(std::size_t input_dim, std::span<const std::size_t> widths,
                                 Nonlinearity nl, std::uint64_t seed, double dropout_prob,
                                 bool hidden_dropout) {
  ExtractorSpec spec;
  spec.nonlinearity = nl;
  spec.seed = seed;
  spec.dropout_prob = dropout_prob;
  std::size_t in = input_dim;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    spec.block_dims.push_back({in, widths[i]});
    spec.dropout_sites.push_back(hidden_dropout && i + 1 < widths.size());
    in = widths[i];
  }
  spec.validate();
  return spec;
}

void ExtractorSpec::validate() const {
  if (block_dims.empty()) throw ParameterError("extractor needs at least one block");
  if (dropout_sites.size() != block_dims.size()) {
    throw DimensionError("dropout_sites has " + std::to_string(dropout_sites.size()) +
                         " flags for " + std::to_string(block_dims.size()) + " blocks");
  }
  for (std::size_t l = 0; l < block_dims.size(); ++l) {
    if (block_dims[l].in_dim == 0 || block_dims[l].out_dim == 0) {
      throw DimensionError("block " + std::to_string(l) + " has a zero dimension");
    }
    if (l > 0 && block_dims[l].in_dim != block_dims[l - 1].out_dim) {
      throw DimensionError("block " + std::to_string(l) + " expects " +
                           std::to_string(block_dims[l].in_dim) + " inputs but block " +
                           std::to_string(l - 1) + " emits " + std::to_string(block_dims[l - 1].out_dim));
    }
  }
  if (!(dropout_prob >= 0.0 && dropout_prob < 1.0)) {
    throw ParameterError("dropout_prob must lie in [0, 1)");
  }
}

FeatureExtractor::FeatureExtractor(ExtractorSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  Rng rng(spec_.seed);
  for (const BlockDims& dims : spec_.block_dims) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims.in_dim));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Block block{Tensor({dims.out_dim, dims.in_dim}), Tensor({dims.out_dim})};
    for (double& w : block.weight.values()) w = dist(rng);
    for (double& b : block.bias.values()) b = dist(rng);
    blocks_.push_back(std::move(block));
  }
}

FeatureExtractor::FeatureExtractor(ExtractorSpec spec, std::vector<Block> blocks)
    : spec_(std::move(spec)), blocks_(std::move(blocks)) {
  spec_.validate();
  if (blocks_.size() != spec_.block_dims.size()) {
    throw DimensionError("expected " + std::to_string(spec_.block_dims.size()) + " parameter blocks, got " +
                         std::to_string(blocks_.size()));
  }
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const BlockDims& d = spec_.block_dims[l];
    if (blocks_[l].weight.shape() != std::vector<std::size_t>{d.out_dim, d.in_dim} ||
        blocks_[l].bias.shape() != std::vector<std::size_t>{d.out_dim}) {
      throw DimensionError("block " + std::to_string(l) + " parameters do not match the declared block shapes");
    }
  }
}

namespace {

double activate(Nonlinearity nl, double z) {
  switch (nl) {
    case Nonlinearity::relu: return z > 0.0 ? z : 0.0;
    case Nonlinearity::tanh: return std::tanh(z);
    case Nonlinearity::identity: return z;
  }
  return z;
}

// Derivative expressed through the pre-activation; relu'(0) = 0.
double activate_grad(Nonlinearity nl, double z) {
  switch (nl) {
    case Nonlinearity::relu: return z > 0.0 ? 1.0 : 0.0;
    case Nonlinearity::tanh: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case Nonlinearity::identity: return 1.0;
  }
  return 1.0;
}

void check_input(const FeatureExtractor& extractor, const Tensor& x) {
  if (x.rank() != 1 || x.size() != extractor.input_dim()) {
    throw DimensionError("input of shape " + shape_string(x.shape()) + " does not match extractor input dim " +
                         std::to_string(extractor.input_dim()));
  }
}

void check_dropout(const FeatureExtractor& extractor, const DropoutState* dropout) {
  if (dropout == nullptr) return;
  if (dropout->masks.size() != extractor.num_blocks()) {
    throw DimensionError("dropout state has " + std::to_string(dropout->masks.size()) + " sites for " +
                         std::to_string(extractor.num_blocks()) + " blocks");
  }
  for (std::size_t l = 0; l < dropout->masks.size(); ++l) {
    const auto& mask = dropout->masks[l];
    if (mask && mask->size() != extractor.spec().block_dims[l].out_dim) {
      throw DimensionError("dropout mask " + std::to_string(l) + " has the wrong width");
    }
  }
}

struct ForwardTrace {
  std::vector<Tensor> pre;   // affine outputs
  std::vector<Tensor> post;  // block outputs after nonlinearity and dropout
};

ForwardTrace run_forward(const FeatureExtractor& extractor, const Tensor& x, const DropoutState* dropout) {
  check_input(extractor, x);
  check_dropout(extractor, dropout);
  const Nonlinearity nl = extractor.spec().nonlinearity;
  ForwardTrace trace;
  trace.pre.reserve(extractor.num_blocks());
  trace.post.reserve(extractor.num_blocks());
  const Tensor* input = &x;
  for (std::size_t l = 0; l < extractor.num_blocks(); ++l) {
    const Block& block = extractor.block(l);
    const std::size_t rows = block.weight.shape()[0];
    const std::size_t cols = block.weight.shape()[1];
    Tensor z({rows});
    const double* w = block.weight.values().data();
    const double* in = input->values().data();
    for (std::size_t r = 0; r < rows; ++r) {
      double acc = block.bias[r];
      const double* row = w + r * cols;
      for (std::size_t c = 0; c < cols; ++c) acc += row[c] * in[c];
      z[r] = acc;
    }
    Tensor a({rows});
    const std::optional<Tensor>* mask = dropout ? &dropout->masks[l] : nullptr;
    for (std::size_t r = 0; r < rows; ++r) {
      double v = activate(nl, z[r]);
      if (mask && *mask) v *= (**mask)[r] * dropout->scale;
      a[r] = v;
    }
    trace.pre.push_back(std::move(z));
    trace.post.push_back(std::move(a));
    input = &trace.post.back();
  }
  return trace;
}

}  // namespace

BlockActivations forward_all(const FeatureExtractor& extractor, const Tensor& x, const DropoutState* dropout) {
  return run_forward(extractor, x, dropout).post;
}

Tensor forward(const FeatureExtractor& extractor, const Tensor& x, const DropoutState* dropout) {
  auto trace = run_forward(extractor, x, dropout);
  return std::move(trace.post.back());
}

Gradients backward(const FeatureExtractor& extractor, const Tensor& x, const Tensor& loss_seed,
                   const DropoutState* dropout, GradientScope scope) {
  std::vector<std::optional<Tensor>> seeds(extractor.num_blocks());
  seeds.back() = loss_seed;
  return backward_layers(extractor, x, seeds, dropout, scope);
}

Gradients backward_layers(const FeatureExtractor& extractor, const Tensor& x,
                          std::span<const std::optional<Tensor>> seeds, const DropoutState* dropout,
                          GradientScope scope) {
  if (seeds.size() != extractor.num_blocks()) {
    throw DimensionError("backward needs one seed slot per block");
  }
  for (std::size_t l = 0; l < seeds.size(); ++l) {
    if (seeds[l] && (seeds[l]->rank() != 1 || seeds[l]->size() != extractor.spec().block_dims[l].out_dim)) {
      throw DimensionError("loss seed for block " + std::to_string(l) + " has shape " +
                           shape_string(seeds[l]->shape()));
    }
  }
  const ForwardTrace trace = run_forward(extractor, x, dropout);
  const Nonlinearity nl = extractor.spec().nonlinearity;
  const bool want_params = scope == GradientScope::input_and_params;

  Gradients grads;
  if (want_params) grads.wrt_params.resize(extractor.num_blocks());

  // Gradient w.r.t. the current block's output, accumulated from above.
  std::vector<double> upstream(extractor.output_dim(), 0.0);
  for (std::size_t l = extractor.num_blocks(); l-- > 0;) {
    const Block& block = extractor.block(l);
    const std::size_t rows = block.weight.shape()[0];
    const std::size_t cols = block.weight.shape()[1];
    if (seeds[l]) {
      for (std::size_t r = 0; r < rows; ++r) upstream[r] += (*seeds[l])[r];
    }
    std::vector<double> dz(rows);
    const std::optional<Tensor>* mask = dropout ? &dropout->masks[l] : nullptr;
    for (std::size_t r = 0; r < rows; ++r) {
      double g = upstream[r];
      if (mask && *mask) g *= (**mask)[r] * dropout->scale;
      dz[r] = g * activate_grad(nl, trace.pre[l][r]);
    }
    const Tensor& input = l == 0 ? x : trace.post[l - 1];
    if (want_params) {
      BlockGradients& bg = grads.wrt_params[l];
      bg.weight = Tensor({rows, cols});
      bg.bias = Tensor({rows});
      for (std::size_t r = 0; r < rows; ++r) {
        bg.bias[r] = dz[r];
        double* out = bg.weight.values().data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) out[c] = dz[r] * input[c];
      }
    }
    std::vector<double> down(cols, 0.0);
    const double* w = block.weight.values().data();
    for (std::size_t r = 0; r < rows; ++r) {
      const double g = dz[r];
      if (g == 0.0) continue;
      const double* row = w + r * cols;
      for (std::size_t c = 0; c < cols; ++c) down[c] += row[c] * g;
    }
    upstream = std::move(down);
  }
  grads.wrt_input = Tensor::vector(std::move(upstream));
  return grads;
}

DropoutState sample_dropout_masks(const FeatureExtractor& extractor, double p, std::uint64_t rng_seed) {
  if (!(p >= 0.0 && p < 1.0)) throw ParameterError("dropout probability must lie in [0, 1)");
  DropoutState state;
  state.keep_prob = 1.0 - p;
  state.scale = 1.0 / state.keep_prob;
  state.masks.resize(extractor.num_blocks());
  Rng rng(rng_seed);
  std::bernoulli_distribution keep(state.keep_prob);
  for (std::size_t l = 0; l < extractor.num_blocks(); ++l) {
    if (!extractor.spec().dropout_sites[l]) continue;
    Tensor mask({extractor.spec().block_dims[l].out_dim});
    for (double& m : mask.values()) m = (p == 0.0 || keep(rng)) ? 1.0 : 0.0;
    state.masks[l] = std::move(mask);
  }
  return state;
}

}  // namespace cpoison
