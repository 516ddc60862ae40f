#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cpoison/classifier.hpp"
#include "cpoison/extractor.hpp"
#include "cpoison/tensor.hpp"

namespace cpoison {

// ---- datasets -------------------------------------------------------------

enum class DatasetKind { blobs, moons, rings };

std::string_view to_string(DatasetKind kind);
DatasetKind parse_dataset_kind(std::string_view name);

struct Dataset {
  std::vector<Tensor> inputs;  // each in [0, 1]^dim
  std::vector<std::size_t> labels;
  std::size_t n_classes = 0;

  std::size_t size() const noexcept { return inputs.size(); }
  std::size_t dim() const { return inputs.empty() ? 0 : inputs.front().size(); }

  bool operator==(const Dataset&) const = default;
};

// blobs: Gaussian classes around unit-norm means (antipodal for two
//   classes). Noise has std `noise` within the span of the means and std
//   `spread` (default: `noise`) orthogonal to it, so the mean separation is
//   2 / noise standard deviations along the class axis.
// moons: the two interleaved half circles in the first two coordinates.
// rings: concentric circles of radius 1, 2, ... in the first two coordinates.
// Coordinates past the second carry pure noise for moons and rings. All
// inputs are min-max scaled into [0, 1] per coordinate (constant columns map
// to 0.5). Samples are ordered class by class.
Dataset make_dataset(DatasetKind kind, std::size_t n_per_class, std::size_t n_classes, std::size_t dim,
                     double noise, std::uint64_t seed, std::optional<double> spread = std::nullopt);

// One row per sample: label, then features.
std::string dataset_to_csv(const Dataset& dataset);
Dataset dataset_from_csv(std::string_view text);

// ---- splits ---------------------------------------------------------------

enum class SplitTag { pretrain, finetune, target_pool, test };

struct SplitSpec {
  // Size of each pretraining set as a fraction of a class's pretrain pool.
  double pretrain_fraction = 0.5;
  std::size_t finetune_count_per_class = 250;
  std::size_t target_count = 20;
  std::size_t test_count_per_class = 100;
  // Fraction of the substitute pretraining indices shared with the victim's.
  double overlap_fraction = 1.0;
  std::size_t target_class = 0;
  std::uint64_t seed = 0;

  bool operator==(const SplitSpec&) const = default;
};

struct DatasetSplit {
  std::vector<SplitTag> tags;  // one per sample
  std::vector<std::size_t> substitute_pretrain;
  std::vector<std::size_t> victim_pretrain;
  std::vector<std::size_t> finetune;
  std::vector<std::size_t> target_pool;
  std::vector<std::size_t> test;
};

// Per class (after a seeded shuffle): finetune first, then targets (target
// class only), then test; the remainder is the pretrain pool. Substitutes
// train on pool[0, n), victims on pool[s, s + n) with
// n = floor(pretrain_fraction * |pool|) and s = round((1 - overlap) * n).
DatasetSplit split_dataset(const Dataset& dataset, const SplitSpec& spec);

// ---- models and training --------------------------------------------------

struct ArchSpec {
  std::vector<std::size_t> widths;
  Nonlinearity nonlinearity = Nonlinearity::relu;

  bool operator==(const ArchSpec&) const = default;
};

// Feature trunk plus linear head. Without a trunk the head reads raw inputs.
struct Model {
  std::optional<FeatureExtractor> trunk;
  LinearClassifier head;

  Tensor features(const Tensor& x) const;
  std::size_t predict(const Tensor& x) const;
};

struct TrainOptions {
  double lr = 1e-3;
  std::size_t epochs = 20;
  std::size_t max_steps = 0;  // 0: no step cap
  std::size_t batch_size = 32;
  double dropout_prob = 0.0;  // per-sample inverted dropout on trunk dropout sites
  std::uint64_t seed = 0;
  bool train_trunk = true;
  bool stop_at_full_accuracy = false;
};

struct TrainReport {
  std::size_t steps = 0;
  double final_loss = 0.0;       // mean cross-entropy over the training set
  double train_accuracy = 0.0;
  bool reached_full_accuracy = false;
};

// Minibatch Adam on mean cross-entropy. The sample order is one fixed
// shuffle drawn from `seed`, reused every epoch. Throws NumericError naming
// the step when the loss diverges.
TrainReport train_model(Model& model, std::span<const Tensor> inputs, std::span<const std::size_t> labels,
                        const TrainOptions& options);

double accuracy(const Model& model, std::span<const Tensor> inputs, std::span<const std::size_t> labels);

ExtractorSpec arch_to_spec(const ArchSpec& arch, std::size_t input_dim, std::uint64_t seed, double dropout_prob);

// Train arch (+ a fresh head) on the given samples.
Model pretrain_model(const Dataset& dataset, std::span<const std::size_t> indices, const ArchSpec& arch,
                     double dropout_prob, std::uint64_t seed, const TrainOptions& options);

// One trained extractor per (arch, dropout probability) pair, arch-major.
// The dropout probability is stored in each extractor's spec.
std::vector<FeatureExtractor> pretrain_substitutes(const Dataset& dataset, std::span<const std::size_t> indices,
                                                   std::span<const ArchSpec> archs,
                                                   std::span<const double> dropout_probs, std::uint64_t seed,
                                                   const TrainOptions& options);

struct FinetuneOptions {
  double lr = 0.1;
  std::size_t max_steps = 3000;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
};

struct FinetuneResult {
  Model model;
  bool overfit = false;  // 100% accuracy on the fine-tune set within max_steps
  TrainReport report;
};

// Frozen extractor, freshly initialized linear head (seeded by options.seed).
FinetuneResult finetune_transfer_victim(const FeatureExtractor& extractor, std::span<const Tensor> inputs,
                                        std::span<const std::size_t> labels, std::size_t n_classes,
                                        const FinetuneOptions& options);

// All parameters trainable, starting from `model` as given.
FinetuneResult finetune_end2end_victim(Model model, std::span<const Tensor> inputs,
                                       std::span<const std::size_t> labels, const FinetuneOptions& options);

// ---- outcomes -------------------------------------------------------------

enum class VictimMode { transfer, end2end };

std::string_view to_string(VictimMode mode);
VictimMode parse_victim_mode(std::string_view name);

struct VictimOutcome {
  std::size_t trial = 0;
  std::string attack;
  std::string victim;
  bool gray_box = false;
  std::size_t target_index = 0;
  std::size_t target_label_pred = 0;
  std::size_t poison_label = 0;
  bool success = false;
  bool overfit = false;
  double clean_test_acc = 0.0;
  double poisoned_test_acc = 0.0;
  double target_hull_residual = 0.0;  // in the victim's final feature space

  // Positive means the poisons degraded clean accuracy.
  double accuracy_drop() const { return clean_test_acc - poisoned_test_acc; }
};

struct EvaluationInputs {
  std::size_t trial = 0;
  std::string attack;
  std::string victim;
  bool gray_box = false;
  std::size_t target_index = 0;
  std::size_t target_label_pred = 0;
  std::size_t poison_label = 0;
  bool overfit = false;
  double clean_test_acc = 0.0;
  double poisoned_test_acc = 0.0;
  double target_hull_residual = 0.0;
};

VictimOutcome evaluate_attack(const EvaluationInputs& inputs);

struct SuccessBucket {
  std::size_t n_trials = 0;  // overfit trials only
  std::size_t n_success = 0;
  std::size_t n_flagged = 0;  // non-overfit trials, excluded from the rate
  double rate = 0.0;
};

struct SuccessStats {
  SuccessBucket overall;
  std::map<std::string, SuccessBucket> per_victim;  // only victims that appear
};

SuccessStats aggregate_success(std::span<const VictimOutcome> outcomes);

// Gray-box when the victim's architecture matches some substitute's.
bool is_gray_box(const ArchSpec& victim, std::span<const ArchSpec> substitutes);

std::string outcomes_to_csv(std::span<const VictimOutcome> outcomes);
std::vector<VictimOutcome> outcomes_from_csv(std::string_view text);

}  // namespace cpoison
