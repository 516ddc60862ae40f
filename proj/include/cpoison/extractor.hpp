#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cpoison/tensor.hpp"

namespace cpoison {

enum class Nonlinearity { relu, tanh, identity };

std::string_view to_string(Nonlinearity nl);
Nonlinearity parse_nonlinearity(std::string_view name);

struct BlockDims {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;

  bool operator==(const BlockDims&) const = default;
};

// Shape of a feed-forward chain. Each block is affine -> nonlinearity ->
// optional dropout site; the output of block l is the composed feature
// phi_{1:l}(x).
struct ExtractorSpec {
  std::vector<BlockDims> block_dims;
  Nonlinearity nonlinearity = Nonlinearity::relu;
  std::vector<bool> dropout_sites;  // one flag per block
  std::uint64_t seed = 0;
  // Dropout probability the model was trained with; reused when crafting.
  double dropout_prob = 0.0;

  // Chain input_dim -> widths[0] -> ... -> widths.back(). Dropout sites on
  // every block except the last when `hidden_dropout` is set.
  static ExtractorSpec mlp(std::size_t input_dim, std::span<const std::size_t> widths,
                           Nonlinearity nl, std::uint64_t seed, double dropout_prob = 0.0,
                           bool hidden_dropout = true);

  void validate() const;
  std::size_t input_dim() const { return block_dims.front().in_dim; }
  std::size_t output_dim() const { return block_dims.back().out_dim; }

  bool operator==(const ExtractorSpec&) const = default;
};

struct Block {
  Tensor weight;  // out_dim x in_dim
  Tensor bias;    // out_dim

  bool operator==(const Block&) const = default;
};

class FeatureExtractor {
 public:
  // Fan-in scaled uniform initialization, U(-1/sqrt(in), 1/sqrt(in)),
  // drawn from spec.seed.
  explicit FeatureExtractor(ExtractorSpec spec);
  FeatureExtractor(ExtractorSpec spec, std::vector<Block> blocks);

  const ExtractorSpec& spec() const noexcept { return spec_; }
  std::size_t num_blocks() const noexcept { return blocks_.size(); }
  std::size_t input_dim() const { return spec_.input_dim(); }
  std::size_t output_dim() const { return spec_.output_dim(); }

  const Block& block(std::size_t l) const { return blocks_.at(l); }
  Block& block(std::size_t l) { return blocks_.at(l); }
  std::span<const Block> blocks() const noexcept { return blocks_; }

  bool operator==(const FeatureExtractor&) const = default;

 private:
  ExtractorSpec spec_;
  std::vector<Block> blocks_;
};

// Inverted-dropout masks for one sampled sub-network. masks[l] is set only
// for dropout sites.
struct DropoutState {
  std::vector<std::optional<Tensor>> masks;
  double keep_prob = 1.0;
  double scale = 1.0;
};

using BlockActivations = std::vector<Tensor>;

// Entry l is the (post-dropout) output of block l.
BlockActivations forward_all(const FeatureExtractor& extractor, const Tensor& x,
                             const DropoutState* dropout = nullptr);

// phi(x): the last entry of forward_all.
Tensor forward(const FeatureExtractor& extractor, const Tensor& x,
               const DropoutState* dropout = nullptr);

struct BlockGradients {
  Tensor weight;
  Tensor bias;
};

struct Gradients {
  Tensor wrt_input;
  std::vector<BlockGradients> wrt_params;  // empty when only the input gradient was requested
};

enum class GradientScope { input_only, input_and_params };

// Gradient of seed^T phi(x). Dropout masks are held constant.
Gradients backward(const FeatureExtractor& extractor, const Tensor& x, const Tensor& loss_seed,
                   const DropoutState* dropout = nullptr,
                   GradientScope scope = GradientScope::input_and_params);

// Gradient of sum_l seeds[l]^T phi_{1:l}(x); unset entries contribute nothing.
// `seeds` must have one entry per block.
Gradients backward_layers(const FeatureExtractor& extractor, const Tensor& x,
                          std::span<const std::optional<Tensor>> seeds,
                          const DropoutState* dropout = nullptr,
                          GradientScope scope = GradientScope::input_and_params);

// Each neuron at a dropout site is switched off independently with
// probability p; survivors are scaled by 1/(1-p).
DropoutState sample_dropout_masks(const FeatureExtractor& extractor, double p, std::uint64_t rng_seed);

}  // namespace cpoison
