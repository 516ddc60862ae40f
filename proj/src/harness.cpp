#include "cpoison/harness.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "cpoison/errors.hpp"
#include "cpoison/optim.hpp"
#include "cpoison/rng.hpp"
#include "cpoison/textio.hpp"

namespace cpoison {

std::string_view to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::blobs: return "blobs";
    case DatasetKind::moons: return "moons";
    case DatasetKind::rings: return "rings";
  }
  return "blobs";
}

DatasetKind parse_dataset_kind(std::string_view name) {
  if (name == "blobs") return DatasetKind::blobs;
  if (name == "moons") return DatasetKind::moons;
  if (name == "rings") return DatasetKind::rings;
  throw ParameterError("unknown dataset kind '" + std::string(name) + "'");
}

std::string_view to_string(VictimMode mode) { return mode == VictimMode::transfer ? "transfer" : "end2end"; }

VictimMode parse_victim_mode(std::string_view name) {
  if (name == "transfer") return VictimMode::transfer;
  if (name == "end2end") return VictimMode::end2end;
  throw ParameterError("unknown victim mode '" + std::string(name) + "'");
}

// ---- datasets -------------------------------------------------------------

namespace {

void scale_to_unit_box(std::vector<Tensor>& inputs) {
  const std::size_t dim = inputs.front().size();
  for (std::size_t d = 0; d < dim; ++d) {
    double lo = inputs.front()[d];
    double hi = lo;
    for (const Tensor& x : inputs) {
      lo = std::min(lo, x[d]);
      hi = std::max(hi, x[d]);
    }
    for (Tensor& x : inputs) x[d] = hi > lo ? (x[d] - lo) / (hi - lo) : 0.5;
  }
}

}  // namespace

Dataset make_dataset(DatasetKind kind, std::size_t n_per_class, std::size_t n_classes, std::size_t dim, double noise,
                     std::uint64_t seed, std::optional<double> spread) {
  if (n_per_class == 0) throw ParameterError("n_per_class must be at least 1");
  if (dim < 2) throw ParameterError("dim must be at least 2");
  if (n_classes < 2) throw ParameterError("n_classes must be at least 2");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw ParameterError("noise must be >= 0");
  if (kind == DatasetKind::moons && n_classes != 2) throw ParameterError("moons has exactly 2 classes");
  if (spread && (!(*spread >= 0.0) || !std::isfinite(*spread))) throw ParameterError("spread must be >= 0");
  if (spread && kind != DatasetKind::blobs) throw ParameterError("spread applies to blobs only");

  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<std::vector<double>> means;
  if (kind == DatasetKind::blobs) {
    for (std::size_t c = 0; c < n_classes; ++c) {
      if (n_classes == 2 && c == 1) {
        std::vector<double> opposite = means[0];
        for (double& v : opposite) v = -v;
        means.push_back(std::move(opposite));
        break;
      }
      std::vector<double> mu(dim);
      for (double& v : mu) v = gauss(rng);
      const double n = norm(mu);
      for (double& v : mu) v /= n;
      means.push_back(std::move(mu));
    }
  }
  // Orthonormal basis of the span of the class means; blob noise along it
  // has std `noise`, orthogonal to it std `spread`.
  std::vector<std::vector<double>> mean_basis;
  for (const auto& mu : means) {
    std::vector<double> b = mu;
    for (const auto& q : mean_basis) {
      const double proj = dot(b, q);
      for (std::size_t d = 0; d < dim; ++d) b[d] -= proj * q[d];
    }
    const double n = norm(b);
    if (n > 1e-9) {
      for (double& v : b) v /= n;
      mean_basis.push_back(std::move(b));
    }
  }
  const double orth_std = spread.value_or(noise);

  Dataset ds;
  ds.n_classes = n_classes;
  for (std::size_t c = 0; c < n_classes; ++c) {
    for (std::size_t s = 0; s < n_per_class; ++s) {
      Tensor x({dim});
      switch (kind) {
        case DatasetKind::blobs:
        {
          std::vector<double> z(dim);
          for (double& v : z) v = gauss(rng);
          std::vector<double> along(dim, 0.0);
          for (const auto& q : mean_basis) {
            const double proj = dot(z, q);
            for (std::size_t d = 0; d < dim; ++d) along[d] += proj * q[d];
          }
          for (std::size_t d = 0; d < dim; ++d) x[d] = means[c][d] + noise * along[d] + orth_std * (z[d] - along[d]);
          break;
        }
        case DatasetKind::moons: {
          const double theta = std::numbers::pi * unit(rng);
          x[0] = c == 0 ? std::cos(theta) : 1.0 - std::cos(theta);
          x[1] = c == 0 ? std::sin(theta) : 0.5 - std::sin(theta);
          for (std::size_t d = 0; d < dim; ++d) x[d] += noise * gauss(rng);
          break;
        }
        case DatasetKind::rings: {
          const double theta = 2.0 * std::numbers::pi * unit(rng);
          const double radius = static_cast<double>(c + 1);
          x[0] = radius * std::cos(theta);
          x[1] = radius * std::sin(theta);
          for (std::size_t d = 0; d < dim; ++d) x[d] += noise * gauss(rng);
          break;
        }
      }
      ds.inputs.push_back(std::move(x));
      ds.labels.push_back(c);
    }
  }
  scale_to_unit_box(ds.inputs);
  return ds;
}

std::string dataset_to_csv(const Dataset& dataset) {
  std::string out = "label";
  for (std::size_t d = 0; d < dataset.dim(); ++d) out += ",x" + std::to_string(d);
  out += '\n';
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    out += std::to_string(dataset.labels[i]);
    for (double v : dataset.inputs[i].values()) out += "," + format_double(v);
    out += '\n';
  }
  return out;
}

Dataset dataset_from_csv(std::string_view text) {
  Dataset ds;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto end = text.find('\n', pos);
    const auto line = trim(text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos));
    pos = end == std::string_view::npos ? text.size() : end + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split(line, ',');
    if (line_no == 1 && fields[0] == "label") continue;
    if (fields.size() < 2) throw ParseError("row needs a label and at least one feature", line_no);
    if (dim == 0) dim = fields.size() - 1;
    if (fields.size() - 1 != dim) {
      throw ParseError("expected " + std::to_string(dim) + " features, got " + std::to_string(fields.size() - 1),
                       line_no);
    }
    std::vector<double> values;
    values.reserve(dim);
    for (std::size_t f = 1; f < fields.size(); ++f) values.push_back(parse_double(fields[f], line_no));
    ds.labels.push_back(parse_uint(fields[0], line_no));
    ds.inputs.push_back(Tensor::vector(std::move(values)));
  }
  if (ds.inputs.empty()) throw ParseError("dataset file has no samples");
  ds.n_classes = *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
  return ds;
}

// ---- splits ---------------------------------------------------------------

DatasetSplit split_dataset(const Dataset& dataset, const SplitSpec& spec) {
  if (!(spec.overlap_fraction >= 0.0 && spec.overlap_fraction <= 1.0)) {
    throw ParameterError("overlap_fraction must lie in [0, 1]");
  }
  if (!(spec.pretrain_fraction > 0.0 && spec.pretrain_fraction <= 1.0)) {
    throw ParameterError("pretrain_fraction must lie in (0, 1]");
  }
  if (spec.target_class >= dataset.n_classes) throw ParameterError("target_class out of range");

  std::vector<std::vector<std::size_t>> by_class(dataset.n_classes);
  for (std::size_t i = 0; i < dataset.size(); ++i) by_class.at(dataset.labels[i]).push_back(i);

  DatasetSplit split;
  split.tags.assign(dataset.size(), SplitTag::pretrain);
  Rng rng(spec.seed);
  for (std::size_t c = 0; c < dataset.n_classes; ++c) {
    std::vector<std::size_t>& idx = by_class[c];
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t n_targets = c == spec.target_class ? spec.target_count : 0;
    const std::size_t reserved = spec.finetune_count_per_class + n_targets + spec.test_count_per_class;
    if (reserved >= idx.size()) {
      throw ParameterError("class " + std::to_string(c) + " has " + std::to_string(idx.size()) +
                           " samples, too few for the requested finetune/target/test counts");
    }
    std::size_t at = 0;
    auto take = [&](std::size_t n, SplitTag tag, std::vector<std::size_t>& into) {
      for (std::size_t s = 0; s < n; ++s, ++at) {
        split.tags[idx[at]] = tag;
        into.push_back(idx[at]);
      }
    };
    take(spec.finetune_count_per_class, SplitTag::finetune, split.finetune);
    take(n_targets, SplitTag::target_pool, split.target_pool);
    take(spec.test_count_per_class, SplitTag::test, split.test);

    const std::size_t pool = idx.size() - at;
    const auto n = static_cast<std::size_t>(std::floor(spec.pretrain_fraction * static_cast<double>(pool)));
    const auto shift = static_cast<std::size_t>(std::llround((1.0 - spec.overlap_fraction) * static_cast<double>(n)));
    if (n == 0 || shift + n > pool) {
      throw ParameterError("class " + std::to_string(c) + ": pretrain pool of " + std::to_string(pool) +
                           " cannot hold two sets of " + std::to_string(n) + " with the requested overlap");
    }
    for (std::size_t s = 0; s < n; ++s) {
      split.substitute_pretrain.push_back(idx[at + s]);
      split.victim_pretrain.push_back(idx[at + shift + s]);
    }
  }
  return split;
}

// ---- models and training --------------------------------------------------

Tensor Model::features(const Tensor& x) const { return trunk ? forward(*trunk, x) : x; }

std::size_t Model::predict(const Tensor& x) const { return head.predict(features(x).values()); }

double accuracy(const Model& model, std::span<const Tensor> inputs, std::span<const std::size_t> labels) {
  if (inputs.size() != labels.size()) throw DimensionError("inputs and labels differ in length");
  if (inputs.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) correct += model.predict(inputs[i]) == labels[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(inputs.size());
}

ExtractorSpec arch_to_spec(const ArchSpec& arch, std::size_t input_dim, std::uint64_t seed, double dropout_prob) {
  if (arch.widths.empty()) throw ParameterError("architecture needs at least one width");
  return ExtractorSpec::mlp(input_dim, arch.widths, arch.nonlinearity, seed, dropout_prob);
}

namespace {

struct ModelOptimizer {
  std::vector<AdamState> trunk_weight, trunk_bias;
  AdamState head_weight, head_bias;
};

ModelOptimizer make_optimizer(const Model& model, double lr, bool train_trunk) {
  ModelOptimizer opt;
  if (train_trunk && model.trunk) {
    for (const Block& b : model.trunk->blocks()) {
      opt.trunk_weight.push_back(AdamState::for_shape(b.weight.shape(), lr));
      opt.trunk_bias.push_back(AdamState::for_shape(b.bias.shape(), lr));
    }
  }
  opt.head_weight = AdamState::for_shape(model.head.weight.shape(), lr);
  opt.head_bias = AdamState::for_shape(model.head.bias.shape(), lr);
  return opt;
}

double mean_loss(const Model& model, std::span<const Tensor> feats, std::span<const std::size_t> labels) {
  double total = 0.0;
  for (std::size_t i = 0; i < feats.size(); ++i) {
    total += cross_entropy(model.head.logits(feats[i].values()), labels[i]).loss;
  }
  return total / static_cast<double>(feats.size());
}

double feature_accuracy(const Model& model, std::span<const Tensor> feats, std::span<const std::size_t> labels) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < feats.size(); ++i) correct += model.head.predict(feats[i].values()) == labels[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(feats.size());
}

}  // namespace

TrainReport train_model(Model& model, std::span<const Tensor> inputs, std::span<const std::size_t> labels,
                        const TrainOptions& options) {
  if (inputs.size() != labels.size()) throw DimensionError("inputs and labels differ in length");
  if (inputs.empty()) throw ParameterError("cannot train on an empty set");
  if (options.batch_size == 0) throw ParameterError("batch_size must be positive");
  if (!(options.dropout_prob >= 0.0 && options.dropout_prob < 1.0)) throw ParameterError("dropout_prob in [0, 1)");
  for (std::size_t y : labels) {
    if (y >= model.head.n_classes()) throw DimensionError("label exceeds the head's class count");
  }

  const bool train_trunk = options.train_trunk && model.trunk.has_value();
  ModelOptimizer opt = make_optimizer(model, options.lr, train_trunk);

  // A frozen trunk lets every epoch reuse the same features.
  std::vector<Tensor> cached;
  if (!train_trunk) {
    cached.reserve(inputs.size());
    for (const Tensor& x : inputs) cached.push_back(model.features(x));
  }

  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(options.seed);
  std::shuffle(order.begin(), order.end(), rng);

  const std::size_t n = inputs.size();
  const std::size_t per_epoch = (n + options.batch_size - 1) / options.batch_size;
  std::size_t budget = options.epochs * per_epoch;
  if (options.max_steps > 0) budget = std::min(budget, options.max_steps);

  auto full_accuracy = [&]() {
    if (!train_trunk) return feature_accuracy(model, cached, labels);
    return accuracy(model, inputs, labels);
  };

  TrainReport report;
  const std::size_t feat_dim = model.head.feature_dim();
  while (report.steps < budget) {
    for (std::size_t start = 0; start < n && report.steps < budget; start += options.batch_size) {
      const std::size_t stop = std::min(n, start + options.batch_size);
      const double inv = 1.0 / static_cast<double>(stop - start);

      Tensor g_head_w(model.head.weight.shape());
      Tensor g_head_b(model.head.bias.shape());
      std::vector<BlockGradients> g_trunk;
      if (train_trunk) {
        for (const Block& b : model.trunk->blocks()) g_trunk.push_back({Tensor(b.weight.shape()), Tensor(b.bias.shape())});
      }
      double batch_loss = 0.0;
      for (std::size_t pos = start; pos < stop; ++pos) {
        const std::size_t i = order[pos];
        std::optional<DropoutState> dropout;
        if (train_trunk && options.dropout_prob > 0.0) {
          dropout = sample_dropout_masks(*model.trunk, options.dropout_prob, derive_seed(options.seed, {report.steps, i}));
        }
        const Tensor z = train_trunk ? forward(*model.trunk, inputs[i], dropout ? &*dropout : nullptr) : cached[i];
        const CrossEntropy ce = cross_entropy(model.head.logits(z.values()), labels[i]);
        batch_loss += ce.loss;
        const Tensor& g = ce.grad_wrt_logits;
        for (std::size_t r = 0; r < g.size(); ++r) {
          g_head_b[r] += inv * g[r];
          for (std::size_t c = 0; c < feat_dim; ++c) g_head_w.at(r, c) += inv * g[r] * z[c];
        }
        if (train_trunk) {
          Tensor dz({feat_dim});
          for (std::size_t r = 0; r < g.size(); ++r) {
            for (std::size_t c = 0; c < feat_dim; ++c) dz[c] += g[r] * model.head.weight.at(r, c);
          }
          const Gradients grads = backward(*model.trunk, inputs[i], dz, dropout ? &*dropout : nullptr);
          for (std::size_t l = 0; l < g_trunk.size(); ++l) {
            auto gw = g_trunk[l].weight.values();
            const auto sw = grads.wrt_params[l].weight.values();
            for (std::size_t e = 0; e < gw.size(); ++e) gw[e] += inv * sw[e];
            auto gb = g_trunk[l].bias.values();
            const auto sb = grads.wrt_params[l].bias.values();
            for (std::size_t e = 0; e < gb.size(); ++e) gb[e] += inv * sb[e];
          }
        }
      }
      if (!std::isfinite(batch_loss)) {
        throw NumericError("training diverged at step " + std::to_string(report.steps));
      }
      adam_step(opt.head_weight, model.head.weight, g_head_w);
      adam_step(opt.head_bias, model.head.bias, g_head_b);
      for (std::size_t l = 0; l < g_trunk.size(); ++l) {
        adam_step(opt.trunk_weight[l], model.trunk->block(l).weight, g_trunk[l].weight);
        adam_step(opt.trunk_bias[l], model.trunk->block(l).bias, g_trunk[l].bias);
      }
      ++report.steps;
    }
    if (options.stop_at_full_accuracy && full_accuracy() == 1.0) break;
  }

  if (!train_trunk) {
    report.final_loss = mean_loss(model, cached, labels);
  } else {
    std::vector<Tensor> feats;
    feats.reserve(n);
    for (const Tensor& x : inputs) feats.push_back(model.features(x));
    report.final_loss = mean_loss(model, feats, labels);
  }
  if (!std::isfinite(report.final_loss)) throw NumericError("training ended with a non-finite loss");
  report.train_accuracy = full_accuracy();
  report.reached_full_accuracy = report.train_accuracy == 1.0;
  return report;
}

Model pretrain_model(const Dataset& dataset, std::span<const std::size_t> indices, const ArchSpec& arch,
                     double dropout_prob, std::uint64_t seed, const TrainOptions& options) {
  std::vector<Tensor> inputs;
  std::vector<std::size_t> labels;
  for (std::size_t i : indices) {
    inputs.push_back(dataset.inputs.at(i));
    labels.push_back(dataset.labels.at(i));
  }
  Model model{FeatureExtractor(arch_to_spec(arch, dataset.dim(), derive_seed(seed, {1}), dropout_prob)),
              LinearClassifier::random(dataset.n_classes, arch.widths.back(), derive_seed(seed, {2}))};
  TrainOptions opts = options;
  opts.dropout_prob = dropout_prob;
  opts.train_trunk = true;
  opts.seed = derive_seed(seed, {3});
  train_model(model, inputs, labels, opts);
  return model;
}

std::vector<FeatureExtractor> pretrain_substitutes(const Dataset& dataset, std::span<const std::size_t> indices,
                                                   std::span<const ArchSpec> archs,
                                                   std::span<const double> dropout_probs, std::uint64_t seed,
                                                   const TrainOptions& options) {
  if (archs.empty() || dropout_probs.empty()) throw ParameterError("need at least one arch and one dropout prob");
  std::vector<FeatureExtractor> out;
  for (std::size_t a = 0; a < archs.size(); ++a) {
    for (std::size_t p = 0; p < dropout_probs.size(); ++p) {
      Model model = pretrain_model(dataset, indices, archs[a], dropout_probs[p], derive_seed(seed, {a, p}), options);
      out.push_back(std::move(*model.trunk));
    }
  }
  return out;
}

namespace {

FinetuneResult finetune(Model model, std::span<const Tensor> inputs, std::span<const std::size_t> labels,
                        const FinetuneOptions& options, bool train_trunk) {
  TrainOptions opts;
  opts.lr = options.lr;
  opts.batch_size = options.batch_size;
  opts.max_steps = options.max_steps;
  opts.epochs = options.max_steps;  // the step cap binds first
  opts.seed = options.seed;
  opts.train_trunk = train_trunk;
  opts.stop_at_full_accuracy = true;
  FinetuneResult result{std::move(model), false, {}};
  result.report = train_model(result.model, inputs, labels, opts);
  result.overfit = result.report.reached_full_accuracy;
  return result;
}

}  // namespace

FinetuneResult finetune_transfer_victim(const FeatureExtractor& extractor, std::span<const Tensor> inputs,
                                        std::span<const std::size_t> labels, std::size_t n_classes,
                                        const FinetuneOptions& options) {
  Model model{extractor, LinearClassifier::random(n_classes, extractor.output_dim(), derive_seed(options.seed, {7}))};
  return finetune(std::move(model), inputs, labels, options, false);
}

FinetuneResult finetune_end2end_victim(Model model, std::span<const Tensor> inputs,
                                       std::span<const std::size_t> labels, const FinetuneOptions& options) {
  return finetune(std::move(model), inputs, labels, options, true);
}

// ---- outcomes -------------------------------------------------------------

VictimOutcome evaluate_attack(const EvaluationInputs& in) {
  VictimOutcome out;
  out.trial = in.trial;
  out.attack = in.attack;
  out.victim = in.victim;
  out.gray_box = in.gray_box;
  out.target_index = in.target_index;
  out.target_label_pred = in.target_label_pred;
  out.poison_label = in.poison_label;
  out.success = in.target_label_pred == in.poison_label;
  out.overfit = in.overfit;
  out.clean_test_acc = in.clean_test_acc;
  out.poisoned_test_acc = in.poisoned_test_acc;
  out.target_hull_residual = in.target_hull_residual;
  return out;
}

namespace {

void add_to(SuccessBucket& bucket, const VictimOutcome& o) {
  if (!o.overfit) {
    ++bucket.n_flagged;
    return;
  }
  ++bucket.n_trials;
  bucket.n_success += o.success ? 1 : 0;
}

void finish(SuccessBucket& bucket) {
  bucket.rate = bucket.n_trials == 0 ? 0.0 : static_cast<double>(bucket.n_success) / static_cast<double>(bucket.n_trials);
}

}  // namespace

SuccessStats aggregate_success(std::span<const VictimOutcome> outcomes) {
  if (outcomes.empty()) throw ParameterError("aggregate_success needs at least one outcome");
  SuccessStats stats;
  for (const VictimOutcome& o : outcomes) {
    add_to(stats.overall, o);
    add_to(stats.per_victim[o.victim], o);
  }
  finish(stats.overall);
  for (auto& [name, bucket] : stats.per_victim) finish(bucket);
  return stats;
}

bool is_gray_box(const ArchSpec& victim, std::span<const ArchSpec> substitutes) {
  return std::find(substitutes.begin(), substitutes.end(), victim) != substitutes.end();
}

std::string outcomes_to_csv(std::span<const VictimOutcome> outcomes) {
  std::string out =
      "trial,attack,victim,box,target_index,target_label_pred,poison_label,success,overfit,clean_test_acc,"
      "poisoned_test_acc,accuracy_drop,target_hull_residual\n";
  for (const VictimOutcome& o : outcomes) {
    out += std::to_string(o.trial) + "," + o.attack + "," + o.victim + "," + (o.gray_box ? "gray" : "black") + "," +
           std::to_string(o.target_index) + "," + std::to_string(o.target_label_pred) + "," +
           std::to_string(o.poison_label) + "," + (o.success ? "1" : "0") + "," + (o.overfit ? "1" : "0") + "," +
           format_double(o.clean_test_acc) + "," + format_double(o.poisoned_test_acc) + "," +
           format_double(o.accuracy_drop()) + "," + format_double(o.target_hull_residual) + "\n";
  }
  return out;
}

std::vector<VictimOutcome> outcomes_from_csv(std::string_view text) {
  std::vector<VictimOutcome> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  auto flag = [](std::string_view f, std::size_t line) {
    if (f == "1") return true;
    if (f == "0") return false;
    throw ParseError("expected 0 or 1, got '" + std::string(f) + "'", line);
  };
  while (pos < text.size()) {
    const auto end = text.find('\n', pos);
    const auto line = trim(text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos));
    pos = end == std::string_view::npos ? text.size() : end + 1;
    ++line_no;
    if (line.empty() || line_no == 1) continue;
    const auto f = split(line, ',');
    if (f.size() != 13) throw ParseError("outcome rows have 13 fields", line_no);
    VictimOutcome o;
    o.trial = parse_uint(f[0], line_no);
    o.attack = std::string(f[1]);
    o.victim = std::string(f[2]);
    if (f[3] != "gray" && f[3] != "black") throw ParseError("box must be gray or black", line_no);
    o.gray_box = f[3] == "gray";
    o.target_index = parse_uint(f[4], line_no);
    o.target_label_pred = parse_uint(f[5], line_no);
    o.poison_label = parse_uint(f[6], line_no);
    o.success = flag(f[7], line_no);
    o.overfit = flag(f[8], line_no);
    o.clean_test_acc = parse_double(f[9], line_no);
    o.poisoned_test_acc = parse_double(f[10], line_no);
    o.target_hull_residual = parse_double(f[12], line_no);
    out.push_back(std::move(o));
  }
  return out;
}

}  // namespace cpoison
