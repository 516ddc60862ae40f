#include "cpoison/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <iterator>
#include <map>
#include <numeric>
#include <thread>
#include <unordered_map>

#include "cpoison/checkpoint.hpp"
#include "cpoison/errors.hpp"
#include "cpoison/rng.hpp"
#include "cpoison/textio.hpp"

namespace cpoison {

namespace {

std::string stage_message(const std::string& stage, std::optional<std::size_t> trial, const std::string& cause) {
  std::string msg = "stage " + stage;
  if (trial) msg += ", trial " + std::to_string(*trial);
  return msg + ": " + cause;
}

// Runs body; anything other than a StageError is rewrapped with the stage.
template <typename Fn>
auto in_stage(const std::string& stage, std::optional<std::size_t> trial, Fn&& body) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, trial, e.what());
  }
}

std::vector<ArchSpec> substitute_archs(const ExperimentConfig& c) {
  std::vector<ArchSpec> out;
  for (const auto& s : c.substitutes) out.push_back(s.arch);
  return out;
}

struct SubstituteSlot {
  std::size_t config_index;
  std::size_t dropout_index;
  std::string name;
};

std::vector<SubstituteSlot> substitute_slots(const ExperimentConfig& c) {
  std::vector<SubstituteSlot> out;
  for (std::size_t a = 0; a < c.substitutes.size(); ++a) {
    for (std::size_t p = 0; p < c.substitutes[a].dropout_probs.size(); ++p) {
      out.push_back({a, p, c.substitutes[a].name + "_" + std::to_string(p)});
    }
  }
  return out;
}

std::string substitute_path(const std::string& dir, const std::string& name) {
  return dir + "/models/substitute_" + name + ".ckpt";
}

std::string victim_path(const std::string& dir, const std::string& name) {
  return dir + "/models/victim_" + name + ".ckpt";
}

struct FinetuneData {
  std::vector<Tensor> inputs;
  std::vector<std::size_t> labels;
  std::unordered_map<std::size_t, std::size_t> position;  // dataset index -> slot in the fine-tune set
};

FinetuneData finetune_data(const PipelineContext& ctx) {
  FinetuneData d;
  for (std::size_t i : ctx.split.finetune) {
    d.position[i] = d.inputs.size();
    d.inputs.push_back(ctx.dataset.inputs[i]);
    d.labels.push_back(ctx.dataset.labels[i]);
  }
  return d;
}

FinetuneResult finetune_victim(const VictimConfig& vc, const Model& pretrained, const FinetuneData& data,
                               std::span<const Tensor> inputs, std::size_t n_classes, std::uint64_t seed) {
  FinetuneOptions opts;
  opts.lr = vc.lr;
  opts.max_steps = vc.max_steps;
  opts.batch_size = vc.batch_size;
  opts.seed = seed;
  if (vc.mode == VictimMode::transfer) {
    return finetune_transfer_victim(*pretrained.trunk, inputs, data.labels, n_classes, opts);
  }
  return finetune_end2end_victim(pretrained, inputs, data.labels, opts);
}

void check_target_excluded(const PipelineContext& ctx, std::size_t target) {
  auto contains = [target](const std::vector<std::size_t>& v) {
    return std::find(v.begin(), v.end(), target) != v.end();
  };
  if (contains(ctx.split.finetune) || contains(ctx.split.substitute_pretrain) ||
      contains(ctx.split.victim_pretrain) || contains(ctx.split.test)) {
    throw ParameterError("target " + std::to_string(target) + " appears in a training or test split");
  }
}

std::vector<Tensor> gather(const Dataset& ds, std::span<const std::size_t> indices) {
  std::vector<Tensor> out;
  for (std::size_t i : indices) out.push_back(ds.inputs.at(i));
  return out;
}

}  // namespace

StageError::StageError(std::string stage, std::optional<std::size_t> trial, const std::string& cause)
    : std::runtime_error(stage_message(stage, trial, cause)), stage_(std::move(stage)), trial_(trial) {}

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  auto run = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t workers = std::min(std::max<std::size_t>(jobs, 1), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) run(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

PipelineContext make_context(const ExperimentConfig& config, std::size_t jobs) {
  return in_stage("setup", std::nullopt, [&] {
    config.validate();
    PipelineContext ctx;
    ctx.config = config;
    ctx.jobs = jobs;
    const DatasetConfig& d = config.dataset;
    ctx.dataset = make_dataset(d.kind, d.n_per_class, d.n_classes, d.dim, d.noise,
                               derive_seed(config.master_seed, {name_hash("dataset")}), d.spread);
    SplitSpec spec = config.split;
    spec.seed = derive_seed(config.master_seed, {name_hash("split")});
    ctx.split = split_dataset(ctx.dataset, spec);
    if (ctx.split.target_pool.size() < config.trial_count) {
      throw ParameterError("trial_count exceeds the target pool size");
    }
    return ctx;
  });
}

std::vector<std::size_t> base_indices(const PipelineContext& ctx, std::size_t n_poisons, BaseSelection selection,
                                      std::size_t target_index) {
  std::vector<std::size_t> candidates;
  for (std::size_t i : ctx.split.finetune) {
    if (ctx.dataset.labels[i] == ctx.config.poison_class) candidates.push_back(i);
  }
  if (candidates.size() < n_poisons) throw ParameterError("not enough poison-class samples in the fine-tune set");
  if (selection == BaseSelection::nearest) {
    const Tensor& target = ctx.dataset.inputs.at(target_index);
    std::vector<double> dist(candidates.size());
    for (std::size_t j = 0; j < candidates.size(); ++j) {
      dist[j] = squared_distance(ctx.dataset.inputs[candidates[j]].values(), target.values());
    }
    std::vector<std::size_t> order(candidates.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
    std::vector<std::size_t> ranked;
    for (std::size_t j : order) ranked.push_back(candidates[j]);
    candidates = std::move(ranked);
  }
  candidates.resize(n_poisons);
  return candidates;
}

TrainedModels pretrain_stage(const PipelineContext& ctx) {
  const ExperimentConfig& c = ctx.config;
  const auto slots = substitute_slots(c);
  TrainOptions opts;
  opts.lr = c.pretrain.lr;
  opts.epochs = c.pretrain.epochs;
  opts.batch_size = c.pretrain.batch_size;

  std::vector<std::optional<Model>> trained(slots.size() + c.victims.size());
  parallel_for(trained.size(), ctx.jobs, [&](std::size_t job) {
    in_stage("pretrain", std::nullopt, [&] {
      try {
        if (job < slots.size()) {
          const SubstituteSlot& s = slots[job];
          const SubstituteConfig& sc = c.substitutes[s.config_index];
          trained[job] = pretrain_model(ctx.dataset, ctx.split.substitute_pretrain, sc.arch,
                                        sc.dropout_probs[s.dropout_index],
                                        derive_seed(c.master_seed, {name_hash("substitute"), s.config_index, s.dropout_index}),
                                        opts);
        } else {
          const std::size_t v = job - slots.size();
          trained[job] = pretrain_model(ctx.dataset, ctx.split.victim_pretrain, c.victims[v].arch, 0.0,
                                        derive_seed(c.master_seed, {name_hash("victim"), v}), opts);
        }
      } catch (const std::exception& e) {
        const std::string name =
            job < slots.size() ? "substitute " + slots[job].name : "victim " + c.victims[job - slots.size()].name;
        throw StageError("pretrain", std::nullopt, name + ": " + e.what());
      }
    });
  });

  TrainedModels models;
  for (std::size_t j = 0; j < slots.size(); ++j) {
    models.substitutes.push_back(std::move(*trained[j]->trunk));
    models.substitute_names.push_back(slots[j].name);
  }
  for (std::size_t v = 0; v < c.victims.size(); ++v) models.victims.push_back(std::move(*trained[slots.size() + v]));
  return models;
}

std::vector<TrialPoisons> craft_stage(const PipelineContext& ctx, const TrainedModels& models) {
  const ExperimentConfig& c = ctx.config;
  const std::size_t n_tasks = c.attacks.size() * c.trial_count;
  std::vector<TrialPoisons> out(n_tasks);
  parallel_for(n_tasks, ctx.jobs, [&](std::size_t task) {
    const std::size_t a = task / c.trial_count;
    const std::size_t t = task % c.trial_count;
    in_stage("craft", t, [&] {
      const AttackEntry& entry = c.attacks[a];
      AttackConfig cfg = entry.config;
      cfg.rng_seed = derive_seed(c.master_seed, {name_hash("craft"), a, t});
      TrialPoisons& tp = out[task];
      tp.attack = entry.name;
      tp.trial = t;
      tp.target_index = ctx.split.target_pool.at(t);
      check_target_excluded(ctx, tp.target_index);
      tp.base_indices = base_indices(ctx, entry.n_poisons, entry.base_selection, tp.target_index);
      const auto bases = gather(ctx.dataset, tp.base_indices);
      try {
        CraftResult r = craft_poisons(cfg, models.substitutes, bases, ctx.dataset.inputs[tp.target_index],
                                      c.poison_class);
        tp.poisons = std::move(r.poisons.poisons);
        tp.trace = std::move(r.trace);
      } catch (const std::exception& e) {
        throw StageError("craft", t, "attack " + entry.name + ": " + e.what());
      }
    });
  });
  return out;
}

EvaluationResult evaluate_stage(const PipelineContext& ctx, const TrainedModels& models,
                                const std::vector<TrialPoisons>& poisons) {
  const ExperimentConfig& c = ctx.config;
  if (models.victims.size() != c.victims.size()) {
    throw StageError("attack-eval", std::nullopt, "model count does not match the config's victims");
  }
  const FinetuneData data = finetune_data(ctx);
  const auto test_inputs = gather(ctx.dataset, ctx.split.test);
  std::vector<std::size_t> test_labels;
  for (std::size_t i : ctx.split.test) test_labels.push_back(ctx.dataset.labels[i]);
  const auto sub_archs = substitute_archs(c);
  const std::size_t n_victims = c.victims.size();

  auto finetune_seed = [&](std::size_t v) { return derive_seed(c.master_seed, {name_hash("finetune"), v}); };

  std::vector<double> clean_acc(n_victims);
  parallel_for(n_victims, ctx.jobs, [&](std::size_t v) {
    in_stage("attack-eval", std::nullopt, [&] {
      const FinetuneResult clean = finetune_victim(c.victims[v], models.victims[v], data, data.inputs,
                                                   c.dataset.n_classes, finetune_seed(v));
      clean_acc[v] = accuracy(clean.model, test_inputs, test_labels);
    });
  });

  const std::size_t n_tasks = poisons.size() * n_victims;
  EvaluationResult result;
  result.outcomes.resize(n_tasks);
  result.verification.resize(n_tasks);
  parallel_for(n_tasks, ctx.jobs, [&](std::size_t task) {
    const TrialPoisons& tp = poisons[task / n_victims];
    const std::size_t v = task % n_victims;
    in_stage("attack-eval", tp.trial, [&] {
      const VictimConfig& vc = c.victims[v];
      check_target_excluded(ctx, tp.target_index);
      if (tp.poisons.size() != tp.base_indices.size()) throw DimensionError("poison and base counts differ");

      std::vector<Tensor> inputs = data.inputs;
      for (std::size_t j = 0; j < tp.poisons.size(); ++j) {
        const auto it = data.position.find(tp.base_indices[j]);
        if (it == data.position.end() || data.labels[it->second] != c.poison_class) {
          throw ParameterError("base " + std::to_string(tp.base_indices[j]) + " is not a poison-class fine-tune sample");
        }
        inputs[it->second] = tp.poisons[j];
      }
      const FinetuneResult fr =
          finetune_victim(vc, models.victims[v], data, inputs, c.dataset.n_classes, finetune_seed(v));

      const Tensor& target = ctx.dataset.inputs[tp.target_index];
      std::vector<Tensor> poison_feats;
      for (const Tensor& p : tp.poisons) poison_feats.push_back(fr.model.features(p));
      const std::size_t trial_key = task / n_victims;
      VerificationRow& row = result.verification[task];
      row.attack = tp.attack;
      row.trial = tp.trial;
      row.victim = vc.name;
      row.report = check_hull_labelling(poison_feats, fr.model.features(target), c.poison_class, c.verify_samples,
                                      derive_seed(c.master_seed, {name_hash("verify"), trial_key, v}));

      EvaluationInputs in;
      in.trial = tp.trial;
      in.attack = tp.attack;
      in.victim = vc.name;
      in.gray_box = is_gray_box(vc.arch, sub_archs);
      in.target_index = tp.target_index;
      in.target_label_pred = fr.model.predict(target);
      in.poison_label = c.poison_class;
      in.overfit = fr.overfit;
      in.clean_test_acc = clean_acc[v];
      in.poisoned_test_acc = accuracy(fr.model, test_inputs, test_labels);
      in.target_hull_residual = row.report.residual;
      result.outcomes[task] = evaluate_attack(in);
    });
  });
  return result;
}

void save_models(const std::string& dir, const PipelineContext& ctx, const TrainedModels& models) {
  for (std::size_t i = 0; i < models.substitutes.size(); ++i) {
    write_checkpoint_file(substitute_path(dir, models.substitute_names[i]), Checkpoint{models.substitutes[i], {}});
  }
  for (std::size_t v = 0; v < models.victims.size(); ++v) {
    const Model& m = models.victims[v];
    write_checkpoint_file(victim_path(dir, ctx.config.victims[v].name), Checkpoint{*m.trunk, m.head});
  }
}

TrainedModels load_models(const std::string& dir, const PipelineContext& ctx) {
  TrainedModels models;
  for (const auto& slot : substitute_slots(ctx.config)) {
    models.substitutes.push_back(read_checkpoint_file(substitute_path(dir, slot.name)).extractor);
    models.substitute_names.push_back(slot.name);
  }
  for (const auto& vc : ctx.config.victims) {
    Checkpoint cp = read_checkpoint_file(victim_path(dir, vc.name));
    if (!cp.head) throw ParseError("victim checkpoint " + vc.name + " has no head");
    models.victims.push_back(Model{std::move(cp.extractor), std::move(*cp.head)});
  }
  return models;
}

std::string poisons_to_csv(const std::vector<TrialPoisons>& poisons) {
  std::string out = "attack,trial,target_index,slot,base_index,values\n";
  for (const TrialPoisons& tp : poisons) {
    for (std::size_t j = 0; j < tp.poisons.size(); ++j) {
      out += tp.attack + "," + std::to_string(tp.trial) + "," + std::to_string(tp.target_index) + "," +
             std::to_string(j) + "," + std::to_string(tp.base_indices[j]);
      for (double x : tp.poisons[j].values()) out += "," + format_double(x);
      out += "\n";
    }
  }
  return out;
}

std::vector<TrialPoisons> poisons_from_csv(std::string_view text) {
  std::vector<TrialPoisons> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto end = text.find('\n', pos);
    const auto line = trim(text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos));
    pos = end == std::string_view::npos ? text.size() : end + 1;
    ++line_no;
    if (line.empty() || line_no == 1) continue;
    const auto f = split(line, ',');
    if (f.size() < 6) throw ParseError("poison row needs at least 6 fields", line_no);
    const std::string attack(f[0]);
    const std::size_t trial = parse_uint(f[1], line_no);
    const std::size_t slot = parse_uint(f[3], line_no);
    if (out.empty() || out.back().attack != attack || out.back().trial != trial) {
      if (slot != 0) throw ParseError("poison rows of a trial must start at slot 0", line_no);
      out.push_back(TrialPoisons{attack, trial, parse_uint(f[2], line_no), {}, {}, {}});
    } else if (slot != out.back().poisons.size()) {
      throw ParseError("poison slots must be consecutive", line_no);
    }
    std::vector<double> values;
    for (std::size_t i = 5; i < f.size(); ++i) values.push_back(parse_double(f[i], line_no));
    if (!out.back().poisons.empty() && values.size() != out.back().poisons.front().size()) {
      throw ParseError("poison dimension differs within a trial", line_no);
    }
    out.back().base_indices.push_back(parse_uint(f[4], line_no));
    out.back().poisons.push_back(Tensor::vector(std::move(values)));
  }
  return out;
}

std::string trace_to_csv(const CraftTrace& trace) {
  std::string out;
  for (const auto& w : trace.warnings) out += "# warning: " + w + "\n";
  out += "iteration,total_loss";
  const std::size_t m = trace.rows.empty() ? 0 : trace.rows.front().model_residuals.size();
  for (std::size_t i = 0; i < m; ++i) out += ",residual_" + std::to_string(i);
  out += ",max_perturbation\n";
  for (const CraftTraceRow& r : trace.rows) {
    out += std::to_string(r.iteration) + "," + format_double(r.total_loss);
    for (double x : r.model_residuals) out += "," + format_double(x);
    out += "," + format_double(r.max_perturbation) + "\n";
  }
  return out;
}

std::string verification_to_csv(const std::vector<VerificationRow>& rows) {
  std::string out =
      "attack,trial,victim,residual,inside,n_samples,n_consistent_classifiers,n_mislabeled_targets,mc_consistent,"
      "counterexample_found\n";
  for (const VerificationRow& r : rows) {
    const HullLabellingReport& p = r.report;
    out += r.attack + "," + std::to_string(r.trial) + "," + r.victim + "," + format_double(p.residual) + "," +
           (p.membership ? "1" : "0") + "," + std::to_string(p.n_samples) + "," + std::to_string(p.n_consistent) +
           "," + std::to_string(p.n_mislabeled) + "," + (p.mc_consistent ? "1" : "0") + "," +
           (p.counterexample ? "1" : "0") + "\n";
  }
  return out;
}

std::string success_to_csv(const std::vector<VictimOutcome>& outcomes) {
  std::string out = "attack,victim,n_trials,n_success,n_flagged,rate\n";
  std::vector<std::string> attacks;
  for (const auto& o : outcomes) {
    if (std::find(attacks.begin(), attacks.end(), o.attack) == attacks.end()) attacks.push_back(o.attack);
  }
  auto row = [&](const std::string& attack, const std::string& victim, const SuccessBucket& b) {
    out += attack + "," + victim + "," + std::to_string(b.n_trials) + "," + std::to_string(b.n_success) + "," +
           std::to_string(b.n_flagged) + "," + format_double(b.rate) + "\n";
  };
  for (const auto& attack : attacks) {
    std::vector<VictimOutcome> mine;
    std::copy_if(outcomes.begin(), outcomes.end(), std::back_inserter(mine),
                 [&](const VictimOutcome& o) { return o.attack == attack; });
    const SuccessStats stats = aggregate_success(mine);
    row(attack, "all", stats.overall);
    for (const auto& [victim, bucket] : stats.per_victim) row(attack, victim, bucket);
  }
  return out;
}

void write_poisons(const std::string& dir, const std::vector<TrialPoisons>& poisons) {
  write_file(dir + "/poisons.csv", poisons_to_csv(poisons));
  for (const TrialPoisons& tp : poisons) {
    write_file(dir + "/traces/" + tp.attack + "_trial" + std::to_string(tp.trial) + ".csv", trace_to_csv(tp.trace));
  }
}

void write_evaluation(const std::string& dir, const EvaluationResult& result) {
  write_file(dir + "/outcomes.csv", outcomes_to_csv(result.outcomes));
  write_file(dir + "/verification.csv", verification_to_csv(result.verification));
}

void write_report(const std::string& dir, const std::vector<VictimOutcome>& outcomes) {
  write_file(dir + "/success.csv", success_to_csv(outcomes));
}

RunSummary run_experiment(const ExperimentConfig& config, std::size_t jobs) {
  const PipelineContext ctx = make_context(config, jobs);
  const std::string& dir = config.output_dir;
  in_stage("setup", std::nullopt, [&] {
    write_file(dir + "/config.echo.ini", echo_config(config));
    write_file(dir + "/dataset.csv", dataset_to_csv(ctx.dataset));
  });
  const TrainedModels models = pretrain_stage(ctx);
  in_stage("pretrain", std::nullopt, [&] { save_models(dir, ctx, models); });
  const auto poisons = craft_stage(ctx, models);
  in_stage("craft", std::nullopt, [&] { write_poisons(dir, poisons); });
  const EvaluationResult eval = evaluate_stage(ctx, models, poisons);
  in_stage("attack-eval", std::nullopt, [&] { write_evaluation(dir, eval); });
  return in_stage("report", std::nullopt, [&] {
    RunSummary summary{eval.outcomes, success_to_csv(eval.outcomes)};
    write_file(dir + "/success.csv", summary.success_csv);
    return summary;
  });
}

}  // namespace cpoison
