#include "cpoison/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

#include "cpoison/errors.hpp"
#include "cpoison/optim.hpp"
#include "cpoison/rng.hpp"
#include "cpoison/textio.hpp"

namespace cpoison {

std::string_view to_string(AttackMode mode) {
  switch (mode) {
    case AttackMode::fc_penalty: return "fc_penalty";
    case AttackMode::fc_ensemble: return "fc_ensemble";
    case AttackMode::cp: return "cp";
    case AttackMode::cp_multilayer: return "cp_multilayer";
  }
  return "cp";
}

AttackMode parse_attack_mode(std::string_view name) {
  if (name == "fc_penalty") return AttackMode::fc_penalty;
  if (name == "fc_ensemble") return AttackMode::fc_ensemble;
  if (name == "cp") return AttackMode::cp;
  if (name == "cp_multilayer") return AttackMode::cp_multilayer;
  throw ParameterError("unknown attack mode '" + std::string(name) + "'");
}

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ParameterError("epsilon must be >= 0");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ParameterError("lr must be > 0");
  if (!(mu >= 0.0) || !std::isfinite(mu)) throw ParameterError("mu must be >= 0");
  if (mode == AttackMode::cp_multilayer && layers.empty()) {
    throw ParameterError("layers must be non-empty in cp_multilayer mode");
  }
  if (!(plateau_rel_tol >= 0.0)) throw ParameterError("plateau_rel_tol must be >= 0");
  if (plateau_window == 0) throw ParameterError("plateau_window must be positive");
  if (!(fbs_tol > 0.0)) throw ParameterError("fbs_tol must be > 0");
  if (fbs_max_iter == 0) throw ParameterError("fbs_max_iter must be positive");
}

namespace {

constexpr double kMinFeatureNorm = 1e-12;

// ||phi(x_t)||^2 for the normalized objectives; throws when degenerate.
double strict_denominator(std::span<const double> target_feature) {
  const double n2 = squared_norm(target_feature);
  if (std::sqrt(n2) < kMinFeatureNorm) throw NumericError("target feature norm is zero");
  return n2;
}

void check_poison_shapes(std::span<const FeatureExtractor> extractors, std::span<const Tensor> poisons,
                         const Tensor& target) {
  if (extractors.empty()) throw ParameterError("need at least one feature extractor");
  if (poisons.empty()) throw ParameterError("need at least one poison");
  for (const Tensor& p : poisons) require_same_shape(p, target, "poison vs target");
}

std::vector<double> combine(std::span<const Tensor> features, std::span<const double> c) {
  std::vector<double> out(features[0].size(), 0.0);
  for (std::size_t j = 0; j < features.size(); ++j) {
    for (std::size_t d = 0; d < out.size(); ++d) out[d] += c[j] * features[j][d];
  }
  return out;
}

// Activations of the target and every poison under one model's masks.
struct ModelActivations {
  BlockActivations target;
  std::vector<BlockActivations> poisons;

  std::vector<Tensor> poison_layer(std::size_t layer) const {
    std::vector<Tensor> out;
    out.reserve(poisons.size());
    for (const auto& acts : poisons) out.push_back(acts[layer]);
    return out;
  }
};

ModelActivations activations_for(const FeatureExtractor& model, std::span<const Tensor> poisons, const Tensor& target,
                                 const DropoutState* dropout) {
  ModelActivations acts;
  acts.target = forward_all(model, target, dropout);
  acts.poisons.reserve(poisons.size());
  for (const Tensor& p : poisons) acts.poisons.push_back(forward_all(model, p, dropout));
  return acts;
}

double guarded_denominator(std::span<const double> target_feature, std::size_t model, std::size_t layer,
                           std::vector<std::string>& warnings) {
  const double n2 = squared_norm(target_feature);
  if (std::sqrt(n2) < kMinFeatureNorm) {
    warnings.push_back("model " + std::to_string(model) + " layer " + std::to_string(layer) +
                       ": target feature norm below 1e-12, denominator replaced by 1");
    return 1.0;
  }
  return n2;
}

ObjectiveEvaluation evaluate_with_activations(const AttackConfig& config, std::span<const FeatureExtractor> extractors,
                                              std::span<const Tensor> poisons, std::span<const Tensor> bases,
                                              const Tensor& target, const CoefficientSet& coeffs,
                                              std::span<const DropoutState> dropouts,
                                              std::span<const ModelActivations> activations) {
  const std::size_t k = poisons.size();
  ObjectiveEvaluation eval;
  eval.poison_grads.assign(k, Tensor(target.shape()));
  eval.model_residuals.assign(extractors.size(), 0.0);

  if (config.mode == AttackMode::fc_penalty) {
    if (bases.size() != k) throw DimensionError("fc_penalty needs one base per poison");
    for (std::size_t j = 0; j < k; ++j) {
      require_same_shape(poisons[j], bases[j], "poison vs base");
      eval.loss += squared_distance(poisons[j].values(), bases[j].values());
      for (std::size_t d = 0; d < target.size(); ++d) {
        eval.poison_grads[j][d] += 2.0 * (poisons[j][d] - bases[j][d]);
      }
    }
  }

  for (std::size_t i = 0; i < extractors.size(); ++i) {
    const FeatureExtractor& model = extractors[i];
    const DropoutState* dropout = dropouts.empty() ? nullptr : &dropouts[i];
    const ModelActivations& acts = activations[i];
    const std::size_t last = model.num_blocks() - 1;
    std::vector<std::vector<std::optional<Tensor>>> seeds(k, std::vector<std::optional<Tensor>>(model.num_blocks()));

    switch (config.mode) {
      case AttackMode::fc_penalty:
      case AttackMode::fc_ensemble: {
        const Tensor& t = acts.target[last];
        const double denom = config.mode == AttackMode::fc_ensemble
                                 ? guarded_denominator(t.values(), i, last, eval.warnings)
                                 : 1.0;
        const double weight = config.mode == AttackMode::fc_penalty ? config.mu : 1.0;
        double closest = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < k; ++j) {
          const Tensor& f = acts.poisons[j][last];
          const double dist2 = squared_distance(f.values(), t.values());
          closest = std::min(closest, std::sqrt(dist2));
          eval.loss += weight * dist2 / denom;
          Tensor seed(t.shape());
          for (std::size_t d = 0; d < t.size(); ++d) seed[d] = weight * 2.0 * (f[d] - t[d]) / denom;
          seeds[j][last] = std::move(seed);
        }
        eval.model_residuals[i] = closest;
        break;
      }
      case AttackMode::cp:
      case AttackMode::cp_multilayer: {
        const bool multilayer = config.mode == AttackMode::cp_multilayer;
        const std::vector<std::size_t> layers = coefficient_layers(config, model);
        const double factor = multilayer ? 1.0 : 0.5;
        for (std::size_t s = 0; s < layers.size(); ++s) {
          const std::size_t layer = layers[s];
          const Tensor& t = acts.target[layer];
          const std::vector<Tensor> feats = acts.poison_layer(layer);
          const auto c = coeffs.coefficients.at(i).at(s).values();
          std::vector<double> r = combine(feats, c);
          for (std::size_t d = 0; d < r.size(); ++d) r[d] = t[d] - r[d];
          const double denom = guarded_denominator(t.values(), i, layer, eval.warnings);
          eval.loss += factor * squared_norm(r) / denom;
          if (s + 1 == layers.size()) eval.model_residuals[i] = norm(r);
          for (std::size_t j = 0; j < k; ++j) {
            if (c[j] == 0.0) continue;
            Tensor& seed = seeds[j][layer] ? *seeds[j][layer] : seeds[j][layer].emplace(t.shape());
            for (std::size_t d = 0; d < r.size(); ++d) seed[d] -= 2.0 * factor * c[j] * r[d] / denom;
          }
        }
        break;
      }
    }

    for (std::size_t j = 0; j < k; ++j) {
      const bool any = std::any_of(seeds[j].begin(), seeds[j].end(), [](const auto& s) { return s.has_value(); });
      if (!any) continue;
      const Gradients g = backward_layers(model, poisons[j], seeds[j], dropout, GradientScope::input_only);
      for (std::size_t d = 0; d < target.size(); ++d) eval.poison_grads[j][d] += g.wrt_input[d];
    }
  }
  return eval;
}

std::string diagnostic(const CraftTrace& trace, std::size_t iteration) {
  std::ostringstream out;
  out << "non-finite attack loss at outer iteration " << iteration;
  const std::size_t n = trace.rows.size();
  for (std::size_t r = n > 3 ? n - 3 : 0; r < n; ++r) {
    out << "; iter " << trace.rows[r].iteration << " loss " << format_double(trace.rows[r].total_loss)
        << " max_pert " << format_double(trace.rows[r].max_perturbation);
  }
  return out.str();
}

}  // namespace

double fc_penalty_loss(const FeatureExtractor& extractor, const Tensor& poison, const Tensor& base,
                       const Tensor& target, double mu) {
  require_same_shape(poison, base, "fc_penalty_loss poison vs base");
  require_same_shape(poison, target, "fc_penalty_loss poison vs target");
  const Tensor fp = forward(extractor, poison);
  const Tensor ft = forward(extractor, target);
  return squared_distance(poison.values(), base.values()) + mu * squared_distance(fp.values(), ft.values());
}

double fc_ensemble_loss(std::span<const FeatureExtractor> extractors, std::span<const Tensor> poisons,
                        const Tensor& target) {
  check_poison_shapes(extractors, poisons, target);
  double total = 0.0;
  for (const FeatureExtractor& model : extractors) {
    const Tensor ft = forward(model, target);
    const double denom = strict_denominator(ft.values());
    for (const Tensor& p : poisons) total += squared_distance(forward(model, p).values(), ft.values()) / denom;
  }
  return total;
}

double cp_loss(std::span<const FeatureExtractor> extractors, std::span<const Tensor> poisons, const Tensor& target,
               std::span<const SimplexVector> coeffs) {
  check_poison_shapes(extractors, poisons, target);
  if (coeffs.size() != extractors.size()) throw DimensionError("cp_loss needs one coefficient vector per model");
  double total = 0.0;
  for (std::size_t i = 0; i < extractors.size(); ++i) {
    if (coeffs[i].size() != poisons.size()) throw DimensionError("coefficient vector length differs from k");
    const Tensor ft = forward(extractors[i], target);
    std::vector<double> mix(ft.size(), 0.0);
    for (std::size_t j = 0; j < poisons.size(); ++j) {
      const Tensor fp = forward(extractors[i], poisons[j]);
      for (std::size_t d = 0; d < mix.size(); ++d) mix[d] += coeffs[i][j] * fp[d];
    }
    total += 0.5 * squared_distance(ft.values(), mix) / strict_denominator(ft.values());
  }
  return total;
}

double multilayer_cp_loss(std::span<const FeatureExtractor> extractors, std::span<const Tensor> poisons,
                          const Tensor& target, std::span<const std::vector<SimplexVector>> coeffs,
                          std::span<const std::size_t> layers) {
  check_poison_shapes(extractors, poisons, target);
  if (layers.empty()) throw ParameterError("multilayer_cp_loss needs at least one layer");
  if (coeffs.size() != extractors.size()) throw DimensionError("need coefficients for every model");
  double total = 0.0;
  for (std::size_t i = 0; i < extractors.size(); ++i) {
    const FeatureExtractor& model = extractors[i];
    if (coeffs[i].size() != layers.size()) throw DimensionError("need one coefficient vector per layer");
    const BlockActivations at = forward_all(model, target);
    std::vector<BlockActivations> ap;
    for (const Tensor& p : poisons) ap.push_back(forward_all(model, p));
    for (std::size_t s = 0; s < layers.size(); ++s) {
      const std::size_t layer = layers[s];
      if (layer >= model.num_blocks()) throw ParameterError("layer index " + std::to_string(layer) + " out of range");
      if (coeffs[i][s].size() != poisons.size()) throw DimensionError("coefficient vector length differs from k");
      std::vector<double> mix(at[layer].size(), 0.0);
      for (std::size_t j = 0; j < poisons.size(); ++j) {
        for (std::size_t d = 0; d < mix.size(); ++d) mix[d] += coeffs[i][s][j] * ap[j][layer][d];
      }
      total += squared_distance(at[layer].values(), mix) / strict_denominator(at[layer].values());
    }
  }
  return total;
}

Tensor clip_linf(const Tensor& x, const Tensor& base, double epsilon) {
  require_same_shape(x, base, "clip_linf");
  Tensor out = x;
  for (std::size_t d = 0; d < out.size(); ++d) {
    const double v = std::clamp(x[d], base[d] - epsilon, base[d] + epsilon);
    out[d] = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

std::vector<std::size_t> coefficient_layers(const AttackConfig& config, const FeatureExtractor& extractor) {
  if (config.mode != AttackMode::cp_multilayer) return {extractor.num_blocks() - 1};
  for (std::size_t layer : config.layers) {
    if (layer >= extractor.num_blocks()) {
      throw ParameterError("layer index " + std::to_string(layer) + " out of range for a " +
                           std::to_string(extractor.num_blocks()) + "-block substitute");
    }
  }
  return config.layers;
}

ObjectiveEvaluation evaluate_objective(const AttackConfig& config, std::span<const FeatureExtractor> extractors,
                                       std::span<const Tensor> poisons, std::span<const Tensor> bases,
                                       const Tensor& target, const CoefficientSet& coeffs,
                                       std::span<const DropoutState> dropouts) {
  config.validate();
  check_poison_shapes(extractors, poisons, target);
  if (!dropouts.empty() && dropouts.size() != extractors.size()) {
    throw DimensionError("need one dropout state per extractor");
  }
  std::vector<ModelActivations> acts;
  for (std::size_t i = 0; i < extractors.size(); ++i) {
    acts.push_back(activations_for(extractors[i], poisons, target, dropouts.empty() ? nullptr : &dropouts[i]));
  }
  return evaluate_with_activations(config, extractors, poisons, bases, target, coeffs, dropouts, acts);
}

CraftResult craft_poisons(const AttackConfig& config, std::span<const FeatureExtractor> substitutes,
                          std::span<const Tensor> bases, const Tensor& target, std::size_t poison_label,
                          const CraftObserver& observer) {
  config.validate();
  if (substitutes.empty()) throw ParameterError("need at least one substitute model");
  if (bases.empty()) throw ParameterError("need at least one base");
  for (const FeatureExtractor& model : substitutes) {
    if (model.input_dim() != target.size()) throw DimensionError("substitute input dim differs from target");
  }
  for (const Tensor& b : bases) {
    require_same_shape(b, target, "base vs target");
    if (std::any_of(b.values().begin(), b.values().end(), [](double v) { return v < 0.0 || v > 1.0; })) {
      throw ParameterError("bases must lie in [0, 1]");
    }
  }

  const std::size_t m = substitutes.size();
  const std::size_t k = bases.size();
  const bool cp_mode = config.mode == AttackMode::cp || config.mode == AttackMode::cp_multilayer;

  CraftResult result;
  result.poisons.bases.assign(bases.begin(), bases.end());
  result.poisons.poisons.assign(bases.begin(), bases.end());
  result.poisons.label = poison_label;
  result.poisons.epsilon = config.epsilon;
  std::vector<Tensor>& poisons = result.poisons.poisons;

  std::vector<std::vector<std::size_t>> layers(m);
  result.coefficients.coefficients.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    layers[i] = coefficient_layers(config, substitutes[i]);
    result.coefficients.coefficients[i].assign(layers[i].size(), SimplexVector::uniform(k));
  }

  std::vector<AdamState> adam;
  for (std::size_t j = 0; j < k; ++j) adam.push_back(AdamState::for_shape(target.shape(), config.lr));

  std::vector<DropoutState> dropouts(m);
  for (std::size_t i = 0; i < m; ++i) dropouts[i].masks.resize(substitutes[i].num_blocks());

  // Plateau test on window means, so dropout noise in single iterations
  // neither triggers nor blocks it.
  double window_sum = 0.0;
  std::optional<double> previous_window_mean;

  for (std::size_t it = 0; it < config.max_outer_iters; ++it) {
    std::vector<ModelActivations> acts;
    acts.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
      const double p = substitutes[i].spec().dropout_prob;
      if (config.dropout_enabled && p > 0.0) {
        dropouts[i] = sample_dropout_masks(substitutes[i], p, derive_seed(config.rng_seed, {it, i}));
      }
      acts.push_back(activations_for(substitutes[i], poisons, target, &dropouts[i]));

      if (cp_mode && config.solve_coefficients) {
        for (std::size_t s = 0; s < layers[i].size(); ++s) {
          const std::size_t layer = layers[i][s];
          const FeatureMatrix a = FeatureMatrix::from_columns(acts[i].poison_layer(layer));
          SimplexVector& c = result.coefficients.coefficients[i][s];
          if (squared_norm(std::span<const double>(a.gram())) == 0.0) continue;  // all poison features zero
          c = solve_coefficients(a, acts[i].target[layer].values(), c, config.fbs_tol, config.fbs_max_iter)
                  .coefficients;
        }
      }
    }

    ObjectiveEvaluation eval = evaluate_with_activations(config, substitutes, poisons, result.poisons.bases, target,
                                                         result.coefficients, dropouts, acts);
    for (auto& w : eval.warnings) {
      if (std::find(result.trace.warnings.begin(), result.trace.warnings.end(), w) == result.trace.warnings.end()) {
        result.trace.warnings.push_back(std::move(w));
      }
    }

    CraftTraceRow row;
    row.iteration = it;
    row.total_loss = eval.loss;
    row.model_residuals = std::move(eval.model_residuals);
    for (std::size_t j = 0; j < k; ++j) {
      row.max_perturbation = std::max(row.max_perturbation, linf_distance(poisons[j].values(), bases[j].values()));
    }
    result.trace.rows.push_back(std::move(row));

    if (!std::isfinite(eval.loss)) throw NumericError(diagnostic(result.trace, it));

    window_sum += eval.loss;
    if ((it + 1) % config.plateau_window == 0) {
      const double mean = window_sum / static_cast<double>(config.plateau_window);
      window_sum = 0.0;
      if (previous_window_mean &&
          *previous_window_mean - mean < config.plateau_rel_tol * std::abs(*previous_window_mean)) {
        result.trace.stopped_on_plateau = true;
        break;
      }
      previous_window_mean = mean;
    }

    for (std::size_t j = 0; j < k; ++j) {
      adam_step(adam[j], poisons[j], eval.poison_grads[j]);
      poisons[j] = clip_linf(poisons[j], bases[j], config.epsilon);
    }
    if (observer) observer(it, poisons);
  }
  return result;
}

}  // namespace cpoison
