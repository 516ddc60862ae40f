#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cpoison/attacks.hpp"
#include "cpoison/config.hpp"
#include "cpoison/harness.hpp"
#include "cpoison/polytope.hpp"

namespace cpoison {

// A pipeline stage failed. The message names the stage and, when the failure
// belongs to one trial, its index.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, std::optional<std::size_t> trial, const std::string& cause);

  const std::string& stage() const noexcept { return stage_; }
  std::optional<std::size_t> trial() const noexcept { return trial_; }

 private:
  std::string stage_;
  std::optional<std::size_t> trial_;
};

// Runs fn(0..n-1) on at most `jobs` threads (0 or 1: inline). Every index
// runs even if some throw; afterwards the exception of the lowest failing
// index is rethrown, so failures do not depend on scheduling.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

struct PipelineContext {
  ExperimentConfig config;
  Dataset dataset;
  DatasetSplit split;
  std::size_t jobs = 1;
};

// Generates the dataset and split from the config's master seed.
PipelineContext make_context(const ExperimentConfig& config, std::size_t jobs = 1);

struct TrainedModels {
  std::vector<FeatureExtractor> substitutes;
  std::vector<std::string> substitute_names;  // "<substitute>_<dropout index>"
  std::vector<Model> victims;                 // pretrained trunk + head, one per config victim
};

struct TrialPoisons {
  std::string attack;
  std::size_t trial = 0;
  std::size_t target_index = 0;
  std::vector<std::size_t> base_indices;
  std::vector<Tensor> poisons;
  CraftTrace trace;
};

struct VerificationRow {
  std::string attack;
  std::size_t trial = 0;
  std::string victim;
  HullLabellingReport report;  // in the victim's final feature space
};

struct EvaluationResult {
  std::vector<VictimOutcome> outcomes;  // attack-major, then trial, then victim
  std::vector<VerificationRow> verification;
};

// Indices (into the dataset) of the poison-class fine-tune samples the
// attack perturbs for the given target. `nearest` ranks by Euclidean
// distance to the target, ties broken by fine-tune order.
std::vector<std::size_t> base_indices(const PipelineContext& ctx, std::size_t n_poisons, BaseSelection selection,
                                      std::size_t target_index);

TrainedModels pretrain_stage(const PipelineContext& ctx);
std::vector<TrialPoisons> craft_stage(const PipelineContext& ctx, const TrainedModels& models);
EvaluationResult evaluate_stage(const PipelineContext& ctx, const TrainedModels& models,
                                const std::vector<TrialPoisons>& poisons);

// Persistence below the output directory.
void save_models(const std::string& dir, const PipelineContext& ctx, const TrainedModels& models);
TrainedModels load_models(const std::string& dir, const PipelineContext& ctx);

std::string poisons_to_csv(const std::vector<TrialPoisons>& poisons);
std::vector<TrialPoisons> poisons_from_csv(std::string_view text);
std::string trace_to_csv(const CraftTrace& trace);
std::string verification_to_csv(const std::vector<VerificationRow>& rows);

// One row per (attack, victim) plus an "all" row per attack:
// attack,victim,n_trials,n_success,n_flagged,rate
std::string success_to_csv(const std::vector<VictimOutcome>& outcomes);

// Writes the files a stage produces into `dir`.
void write_poisons(const std::string& dir, const std::vector<TrialPoisons>& poisons);
void write_evaluation(const std::string& dir, const EvaluationResult& result);
void write_report(const std::string& dir, const std::vector<VictimOutcome>& outcomes);

struct RunSummary {
  std::vector<VictimOutcome> outcomes;
  std::string success_csv;
};

// Full pipeline into config.output_dir: config.echo.ini, dataset.csv,
// models/, poisons.csv, traces/, outcomes.csv, verification.csv,
// success.csv.
RunSummary run_experiment(const ExperimentConfig& config, std::size_t jobs = 1);

}  // namespace cpoison
