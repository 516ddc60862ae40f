#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cpoison/attacks.hpp"
#include "cpoison/harness.hpp"

namespace cpoison {

struct DatasetConfig {
  DatasetKind kind = DatasetKind::blobs;
  std::size_t n_per_class = 800;
  std::size_t n_classes = 2;
  std::size_t dim = 20;
  double noise = 0.5;
  std::optional<double> spread;  // blobs only; defaults to noise

  bool operator==(const DatasetConfig&) const = default;
};

struct PretrainConfig {
  double lr = 1e-3;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;

  bool operator==(const PretrainConfig&) const = default;
};

struct SubstituteConfig {
  std::string name;
  ArchSpec arch{{32, 16}, Nonlinearity::relu};
  std::vector<double> dropout_probs{0.2, 0.25, 0.3};

  bool operator==(const SubstituteConfig&) const = default;
};

// How each trial picks its bases among the poison-class fine-tune samples.
enum class BaseSelection {
  first,    // the first n in fine-tune order, shared by every trial
  nearest,  // the n closest to the trial's target in input space
};

std::string_view to_string(BaseSelection selection);
BaseSelection parse_base_selection(std::string_view name);

struct AttackEntry {
  std::string name;
  AttackConfig config;
  std::size_t n_poisons = 5;
  BaseSelection base_selection = BaseSelection::first;

  bool operator==(const AttackEntry&) const = default;
};

struct VictimConfig {
  std::string name;
  VictimMode mode = VictimMode::transfer;
  ArchSpec arch{{24, 16}, Nonlinearity::relu};
  double lr = 0.1;  // resolves to 1e-4 for end2end when unset
  std::size_t max_steps = 3000;
  std::size_t batch_size = 64;

  bool operator==(const VictimConfig&) const = default;
};

// Everything a run depends on. Seeds for data, splits, models, crafting and
// fine-tuning all derive from master_seed.
struct ExperimentConfig {
  std::uint64_t master_seed = 0;
  std::size_t trial_count = 20;
  std::size_t poison_class = 1;
  std::size_t verify_samples = 1000;
  std::string output_dir = "out";
  DatasetConfig dataset;
  SplitSpec split;  // split.seed is derived, not configured
  PretrainConfig pretrain;
  std::vector<SubstituteConfig> substitutes;
  std::vector<AttackEntry> attacks;
  std::vector<VictimConfig> victims;

  // Throws ParameterError naming the offending key.
  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

// Config text format (all keys lowercase snake case):
//
//   # comment
//   master_seed = 7            top-level keys come before any section
//   trial_count = 20
//
//   [dataset]                  kind, n_per_class, n_classes, dim, noise,
//                              spread
//   [split]                    pretrain_fraction, finetune_count_per_class,
//                              target_count, test_count_per_class,
//                              overlap_fraction, target_class
//   [pretrain]                 lr, epochs, batch_size
//   [substitute.<name>]        widths, nonlinearity, dropout_probs
//   [attack.<name>]            mode, epsilon, lr, max_outer_iters, mu, layers,
//                              dropout_enabled, solve_coefficients, n_poisons,
//                              base_selection,
//                              plateau_rel_tol, plateau_window, fbs_tol,
//                              fbs_max_iter
//   [victim.<name>]            mode, widths, nonlinearity, lr, max_steps,
//                              batch_size
//
// Lists are comma separated. Unknown sections or keys, duplicates and
// malformed values are errors that name the key and line.
ExperimentConfig parse_config_text(std::string_view text);
ExperimentConfig parse_config(const std::string& path);

// Fully resolved config in the same format; parse_config_text(echo) == cfg.
std::string echo_config(const ExperimentConfig& config);

}  // namespace cpoison
