// cpoison: pretrain substitutes, craft poisons, evaluate victims, verify
// hull membership and summarize success rates.

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "cpoison/config.hpp"
#include "cpoison/errors.hpp"
#include "cpoison/pipeline.hpp"
#include "cpoison/polytope.hpp"
#include "cpoison/textio.hpp"

namespace {

using namespace cpoison;

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool needs_config = true) {
  auto* cfg = cmd->add_option("--config", o.config_path, "experiment config file");
  if (needs_config) cfg->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "override the config's master seed");
  cmd->add_option("--jobs", o.jobs, "worker thread cap")->check(CLI::PositiveNumber);
  cmd->add_option("--out", o.out, "override the output directory");
}

ExperimentConfig load_config(const CommonOptions& o) {
  ExperimentConfig cfg;
  try {
    cfg = parse_config(o.config_path);
  } catch (const std::exception& e) {
    throw std::runtime_error(o.config_path + ": " + e.what());
  }
  if (o.seed) cfg.master_seed = *o.seed;
  if (o.out) cfg.output_dir = *o.out;
  cfg.validate();
  return cfg;
}

std::vector<Tensor> read_vectors(const std::string& path) {
  const std::string text = read_file(path);
  std::vector<Tensor> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  try {
    while (pos < text.size()) {
      const auto end = text.find('\n', pos);
      auto line = std::string_view(text).substr(pos, end == std::string::npos ? std::string::npos : end - pos);
      pos = end == std::string::npos ? text.size() : end + 1;
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      if (trim(line).empty()) continue;
      std::vector<double> values;
      for (auto field : split_fields(line)) values.push_back(parse_double(field, line_no));
      if (!out.empty() && values.size() != out.front().size()) {
        throw ParseError("expected " + std::to_string(out.front().size()) + " values, got " +
                             std::to_string(values.size()),
                         line_no);
      }
      out.push_back(Tensor::vector(std::move(values)));
    }
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.line());
  }
  if (out.empty()) throw ParseError(path + ": no vectors found");
  return out;
}

PipelineContext context_for(const CommonOptions& o) {
  return make_context(load_config(o), o.jobs);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Clean-label poisoning toolkit: feature collision and convex polytope attacks"};
  app.require_subcommand(1);

  CommonOptions common;
  auto* pretrain = app.add_subcommand("pretrain", "train substitute and victim extractors");
  auto* craft = app.add_subcommand("craft", "craft poisons for every attack and trial");
  auto* attack_eval = app.add_subcommand("attack-eval", "fine-tune victims on poisoned data and record outcomes");
  auto* report = app.add_subcommand("report", "aggregate outcomes.csv into success.csv");
  auto* run = app.add_subcommand("run", "full pipeline");
  for (auto* cmd : {pretrain, craft, attack_eval, run}) add_common(cmd, common);
  add_common(report, common, false);

  std::string points_path;
  std::string target_path;
  std::size_t label = 0;
  std::size_t samples = 10000;
  std::uint64_t verify_seed = 0;
  std::string report_path;
  auto* verify = app.add_subcommand("verify", "hull membership and labelling check for feature vectors");
  verify->add_option("--points", points_path, "file with one point per line")->required();
  verify->add_option("--target", target_path, "file with the target vector")->required();
  verify->add_option("--label", label, "poison class label");
  verify->add_option("--samples", samples, "Monte Carlo classifiers")->check(CLI::PositiveNumber);
  verify->add_option("--seed", verify_seed, "Monte Carlo seed");
  verify->add_option("--out", report_path, "also write the report here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*pretrain) {
      const PipelineContext ctx = context_for(common);
      const auto& dir = ctx.config.output_dir;
      write_file(dir + "/config.echo.ini", echo_config(ctx.config));
      write_file(dir + "/dataset.csv", dataset_to_csv(ctx.dataset));
      save_models(dir, ctx, pretrain_stage(ctx));
      std::cout << "models written to " << dir << "/models\n";
    } else if (*craft) {
      const PipelineContext ctx = context_for(common);
      const auto& dir = ctx.config.output_dir;
      const TrainedModels models = load_models(dir, ctx);
      write_poisons(dir, craft_stage(ctx, models));
      std::cout << "poisons written to " << dir << "/poisons.csv\n";
    } else if (*attack_eval) {
      const PipelineContext ctx = context_for(common);
      const auto& dir = ctx.config.output_dir;
      const TrainedModels models = load_models(dir, ctx);
      const auto poisons = poisons_from_csv(read_file(dir + "/poisons.csv"));
      write_evaluation(dir, evaluate_stage(ctx, models, poisons));
      std::cout << "outcomes written to " << dir << "/outcomes.csv\n";
    } else if (*report) {
      std::string dir = common.out.value_or("out");
      if (!common.config_path.empty()) dir = load_config(common).output_dir;
      const auto outcomes = outcomes_from_csv(read_file(dir + "/outcomes.csv"));
      write_report(dir, outcomes);
      std::cout << success_to_csv(outcomes);
    } else if (*run) {
      const RunSummary summary = run_experiment(load_config(common), common.jobs);
      std::cout << summary.success_csv;
    } else if (*verify) {
      const auto points = read_vectors(points_path);
      const auto targets = read_vectors(target_path);
      if (targets.size() != 1) throw ParseError(target_path + ": expected exactly one target vector");
      const std::string text = format_report(check_hull_labelling(points, targets.front(), label, samples, verify_seed));
      if (!report_path.empty()) write_file(report_path, text);
      std::cout << text;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
