#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cpoison/extractor.hpp"
#include "cpoison/simplex.hpp"
#include "cpoison/tensor.hpp"

namespace cpoison {

enum class AttackMode { fc_penalty, fc_ensemble, cp, cp_multilayer };

std::string_view to_string(AttackMode mode);
AttackMode parse_attack_mode(std::string_view name);

struct AttackConfig {
  AttackMode mode = AttackMode::cp;
  double epsilon = 0.1;               // l_inf budget in input units
  double lr = 0.04;                   // Adam step on the poisons
  std::size_t max_outer_iters = 4000;
  double mu = 1.0;                    // fc_penalty only
  std::vector<std::size_t> layers;    // cp_multilayer only; block indices
  bool dropout_enabled = true;
  std::uint64_t rng_seed = 0;
  // When false the coefficients stay pinned at the uniform vector.
  bool solve_coefficients = true;
  // Stop once the loss improved by less than this relative amount over
  // `plateau_window` consecutive iterations.
  double plateau_rel_tol = 1e-7;
  std::size_t plateau_window = 200;
  double fbs_tol = kDefaultFbsTolerance;
  std::size_t fbs_max_iter = kDefaultFbsMaxIter;

  void validate() const;
  bool operator==(const AttackConfig&) const = default;
};

struct PoisonSet {
  std::vector<Tensor> bases;
  std::vector<Tensor> poisons;
  std::size_t label = 0;
  double epsilon = 0.0;
};

// coefficients[i][s]: model i, layer slot s. Slot order follows
// AttackConfig::layers in cp_multilayer mode; the other modes use one
// slot (the last block).
struct CoefficientSet {
  std::vector<std::vector<SimplexVector>> coefficients;
};

struct CraftTraceRow {
  std::size_t iteration = 0;
  double total_loss = 0.0;
  std::vector<double> model_residuals;
  double max_perturbation = 0.0;
};

struct CraftTrace {
  std::vector<CraftTraceRow> rows;
  std::vector<std::string> warnings;
  bool stopped_on_plateau = false;
};

struct CraftResult {
  PoisonSet poisons;
  CoefficientSet coefficients;
  CraftTrace trace;
};

// ||x_p - x_b||^2 + mu ||phi(x_p) - phi(x_t)||^2
double fc_penalty_loss(const FeatureExtractor& extractor, const Tensor& poison, const Tensor& base,
                       const Tensor& target, double mu);

// sum_i sum_j ||phi_i(x_p^j) - phi_i(x_t)||^2 / ||phi_i(x_t)||^2.
// Throws NumericError when some ||phi_i(x_t)|| is (numerically) zero.
double fc_ensemble_loss(std::span<const FeatureExtractor> extractors, std::span<const Tensor> poisons,
                        const Tensor& target);

// 1/2 sum_i ||phi_i(x_t) - sum_j c_ij phi_i(x_p^j)||^2 / ||phi_i(x_t)||^2
double cp_loss(std::span<const FeatureExtractor> extractors, std::span<const Tensor> poisons,
               const Tensor& target, std::span<const SimplexVector> coeffs);

// sum_l sum_i ||phi_{1:l,i}(x_t) - sum_j c_lij phi_{1:l,i}(x_p^j)||^2 / ||phi_{1:l,i}(x_t)||^2
// over the block indices in `layers`; coeffs[i][s] belongs to layers[s].
// No 1/2 factor.
double multilayer_cp_loss(std::span<const FeatureExtractor> extractors, std::span<const Tensor> poisons,
                          const Tensor& target, std::span<const std::vector<SimplexVector>> coeffs,
                          std::span<const std::size_t> layers);

// Clamp to [base - eps, base + eps], then to [0, 1].
Tensor clip_linf(const Tensor& x, const Tensor& base, double epsilon);

// Value and poison gradients of the objective for `config.mode` at fixed
// coefficients. `dropouts` is empty or holds one state per extractor.
struct ObjectiveEvaluation {
  double loss = 0.0;
  std::vector<Tensor> poison_grads;
  std::vector<double> model_residuals;
  std::vector<std::string> warnings;
};

ObjectiveEvaluation evaluate_objective(const AttackConfig& config, std::span<const FeatureExtractor> extractors,
                                       std::span<const Tensor> poisons, std::span<const Tensor> bases,
                                       const Tensor& target, const CoefficientSet& coeffs,
                                       std::span<const DropoutState> dropouts = {});

// Called after the clip of every outer iteration with the current poisons.
using CraftObserver = std::function<void(std::size_t iteration, std::span<const Tensor> poisons)>;

// Alternating crafting loop: per outer iteration, resample dropout
// masks (when enabled and the substitute was trained with dropout), solve
// the simplex coefficients per model with warm start, take one Adam step on
// every poison entry, clip to the budget.
CraftResult craft_poisons(const AttackConfig& config, std::span<const FeatureExtractor> substitutes,
                          std::span<const Tensor> bases, const Tensor& target, std::size_t poison_label = 0,
                          const CraftObserver& observer = {});

// Block indices that carry a coefficient slot for `config`.
std::vector<std::size_t> coefficient_layers(const AttackConfig& config, const FeatureExtractor& extractor);

}  // namespace cpoison
