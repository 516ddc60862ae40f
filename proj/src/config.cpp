#include "cpoison/config.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <set>

#include "cpoison/errors.hpp"
#include "cpoison/textio.hpp"

namespace cpoison {

std::string_view to_string(BaseSelection selection) {
  return selection == BaseSelection::first ? "first" : "nearest";
}

BaseSelection parse_base_selection(std::string_view name) {
  if (name == "first") return BaseSelection::first;
  if (name == "nearest") return BaseSelection::nearest;
  throw ParameterError("unknown base selection '" + std::string(name) + "'");
}

namespace {

using Setter = std::function<void(std::string_view value, std::size_t line)>;
using KeyTable = std::map<std::string, Setter, std::less<>>;

bool is_snake_case(std::string_view s) {
  if (s.empty() || !std::islower(static_cast<unsigned char>(s.front()))) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::islower(static_cast<unsigned char>(c)) || std::isdigit(static_cast<unsigned char>(c)) || c == '_';
  });
}

bool parse_bool(std::string_view v, std::size_t line) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ParseError("expected true or false, got '" + std::string(v) + "'", line);
}

std::vector<std::size_t> parse_uint_list(std::string_view v, std::size_t line) {
  std::vector<std::size_t> out;
  if (trim(v).empty()) return out;
  for (auto item : split(v, ',')) out.push_back(parse_uint(item, line));
  return out;
}

std::vector<double> parse_double_list(std::string_view v, std::size_t line) {
  std::vector<double> out;
  if (trim(v).empty()) return out;
  for (auto item : split(v, ',')) out.push_back(parse_double(item, line));
  return out;
}

template <typename Enum, typename Fn>
Enum parse_enum(std::string_view v, std::size_t line, Fn fn) {
  try {
    return fn(v);
  } catch (const ParameterError& e) {
    throw ParseError(e.what(), line);
  }
}

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + std::to_string(v[i]);
  return out;
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + format_double(v[i]);
  return out;
}

KeyTable top_level_keys(ExperimentConfig& cfg) {
  return {
      {"master_seed", [&](auto v, auto l) { cfg.master_seed = parse_uint(v, l); }},
      {"trial_count", [&](auto v, auto l) { cfg.trial_count = parse_uint(v, l); }},
      {"poison_class", [&](auto v, auto l) { cfg.poison_class = parse_uint(v, l); }},
      {"verify_samples", [&](auto v, auto l) { cfg.verify_samples = parse_uint(v, l); }},
      {"output_dir", [&](auto v, auto) { cfg.output_dir = std::string(v); }},
  };
}

KeyTable dataset_keys(DatasetConfig& d) {
  return {
      {"kind", [&](auto v, auto l) { d.kind = parse_enum<DatasetKind>(v, l, parse_dataset_kind); }},
      {"n_per_class", [&](auto v, auto l) { d.n_per_class = parse_uint(v, l); }},
      {"n_classes", [&](auto v, auto l) { d.n_classes = parse_uint(v, l); }},
      {"dim", [&](auto v, auto l) { d.dim = parse_uint(v, l); }},
      {"noise", [&](auto v, auto l) { d.noise = parse_double(v, l); }},
      {"spread", [&](auto v, auto l) { d.spread = parse_double(v, l); }},
  };
}

KeyTable split_keys(SplitSpec& s) {
  return {
      {"pretrain_fraction", [&](auto v, auto l) { s.pretrain_fraction = parse_double(v, l); }},
      {"finetune_count_per_class", [&](auto v, auto l) { s.finetune_count_per_class = parse_uint(v, l); }},
      {"target_count", [&](auto v, auto l) { s.target_count = parse_uint(v, l); }},
      {"test_count_per_class", [&](auto v, auto l) { s.test_count_per_class = parse_uint(v, l); }},
      {"overlap_fraction", [&](auto v, auto l) { s.overlap_fraction = parse_double(v, l); }},
      {"target_class", [&](auto v, auto l) { s.target_class = parse_uint(v, l); }},
  };
}

KeyTable pretrain_keys(PretrainConfig& p) {
  return {
      {"lr", [&](auto v, auto l) { p.lr = parse_double(v, l); }},
      {"epochs", [&](auto v, auto l) { p.epochs = parse_uint(v, l); }},
      {"batch_size", [&](auto v, auto l) { p.batch_size = parse_uint(v, l); }},
  };
}

KeyTable substitute_keys(SubstituteConfig& s) {
  return {
      {"widths", [&](auto v, auto l) { s.arch.widths = parse_uint_list(v, l); }},
      {"nonlinearity", [&](auto v, auto l) { s.arch.nonlinearity = parse_enum<Nonlinearity>(v, l, parse_nonlinearity); }},
      {"dropout_probs", [&](auto v, auto l) { s.dropout_probs = parse_double_list(v, l); }},
  };
}

KeyTable attack_keys(AttackEntry& a) {
  AttackConfig& c = a.config;
  return {
      {"mode", [&](auto v, auto l) { c.mode = parse_enum<AttackMode>(v, l, parse_attack_mode); }},
      {"epsilon", [&](auto v, auto l) { c.epsilon = parse_double(v, l); }},
      {"lr", [&](auto v, auto l) { c.lr = parse_double(v, l); }},
      {"max_outer_iters", [&](auto v, auto l) { c.max_outer_iters = parse_uint(v, l); }},
      {"mu", [&](auto v, auto l) { c.mu = parse_double(v, l); }},
      {"layers", [&](auto v, auto l) { c.layers = parse_uint_list(v, l); }},
      {"dropout_enabled", [&](auto v, auto l) { c.dropout_enabled = parse_bool(v, l); }},
      {"solve_coefficients", [&](auto v, auto l) { c.solve_coefficients = parse_bool(v, l); }},
      {"n_poisons", [&](auto v, auto l) { a.n_poisons = parse_uint(v, l); }},
      {"base_selection", [&](auto v, auto l) { a.base_selection = parse_enum<BaseSelection>(v, l, parse_base_selection); }},
      {"plateau_rel_tol", [&](auto v, auto l) { c.plateau_rel_tol = parse_double(v, l); }},
      {"plateau_window", [&](auto v, auto l) { c.plateau_window = parse_uint(v, l); }},
      {"fbs_tol", [&](auto v, auto l) { c.fbs_tol = parse_double(v, l); }},
      {"fbs_max_iter", [&](auto v, auto l) { c.fbs_max_iter = parse_uint(v, l); }},
  };
}

KeyTable victim_keys(VictimConfig& vc, bool& lr_set) {
  return {
      {"mode", [&](auto v, auto l) { vc.mode = parse_enum<VictimMode>(v, l, parse_victim_mode); }},
      {"widths", [&](auto v, auto l) { vc.arch.widths = parse_uint_list(v, l); }},
      {"nonlinearity", [&](auto v, auto l) { vc.arch.nonlinearity = parse_enum<Nonlinearity>(v, l, parse_nonlinearity); }},
      {"lr",
       [&](auto v, auto l) {
         vc.lr = parse_double(v, l);
         lr_set = true;
       }},
      {"max_steps", [&](auto v, auto l) { vc.max_steps = parse_uint(v, l); }},
      {"batch_size", [&](auto v, auto l) { vc.batch_size = parse_uint(v, l); }},
  };
}

struct Entry {
  std::string key;
  std::string value;
  std::size_t line;
};

struct Section {
  std::string kind;  // "", dataset, split, pretrain, substitute, attack, victim
  std::string name;
  std::size_t line = 0;
  std::vector<Entry> entries;
};

std::vector<Section> lex(std::string_view text) {
  std::vector<Section> sections(1);
  std::set<std::string> seen_headers;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto end = text.find('\n', pos);
    std::string_view line = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    pos = end == std::string_view::npos ? text.size() : end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError("unterminated section header", line_no);
      const std::string header(trim(line.substr(1, line.size() - 2)));
      if (!seen_headers.insert(header).second) throw ParseError("duplicate section [" + header + "]", line_no);
      Section s;
      s.line = line_no;
      const auto dot = header.find('.');
      s.kind = header.substr(0, dot);
      if (dot != std::string::npos) s.name = header.substr(dot + 1);
      const bool named = s.kind == "substitute" || s.kind == "attack" || s.kind == "victim";
      const bool plain = s.kind == "dataset" || s.kind == "split" || s.kind == "pretrain";
      if (!named && !plain) throw ParseError("unknown section [" + header + "]", line_no);
      if (named && !is_snake_case(s.name)) {
        throw ParseError("section [" + header + "] needs a lowercase snake_case name, e.g. [" + s.kind + ".main]",
                         line_no);
      }
      if (plain && dot != std::string::npos) throw ParseError("section [" + s.kind + "] takes no name", line_no);
      sections.push_back(std::move(s));
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected 'key = value'", line_no);
    std::string key(trim(line.substr(0, eq)));
    if (!is_snake_case(key)) throw ParseError("key '" + key + "' is not lowercase snake_case", line_no);
    auto& entries = sections.back().entries;
    if (std::any_of(entries.begin(), entries.end(), [&](const Entry& e) { return e.key == key; })) {
      throw ParseError("duplicate key '" + key + "'", line_no);
    }
    entries.push_back({std::move(key), std::string(trim(line.substr(eq + 1))), line_no});
  }
  return sections;
}

void apply_keys(const Section& section, const KeyTable& table) {
  const std::string where = section.kind.empty() ? "top level"
                                                 : "[" + section.kind + (section.name.empty() ? "" : "." + section.name) + "]";
  for (const Entry& e : section.entries) {
    const auto it = table.find(e.key);
    if (it == table.end()) throw ParseError("unknown key '" + e.key + "' in " + where, e.line);
    try {
      it->second(e.value, 0);
    } catch (const ParseError& err) {
      throw ParseError("key '" + e.key + "' in " + where + ": " + err.what(), e.line);
    }
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) { throw ParameterError(key + ": " + why); };
  if (trial_count == 0) fail("trial_count", "must be at least 1");
  if (verify_samples == 0) fail("verify_samples", "must be at least 1");
  if (output_dir.empty()) fail("output_dir", "must not be empty");
  if (dataset.n_per_class == 0) fail("dataset.n_per_class", "must be at least 1");
  if (dataset.n_classes < 2) fail("dataset.n_classes", "must be at least 2");
  if (dataset.dim < 2) fail("dataset.dim", "must be at least 2");
  if (!(dataset.noise >= 0.0)) fail("dataset.noise", "must be >= 0");
  if (dataset.spread && !(*dataset.spread >= 0.0)) fail("dataset.spread", "must be >= 0");
  if (dataset.spread && dataset.kind != DatasetKind::blobs) fail("dataset.spread", "applies to blobs only");
  if (dataset.kind == DatasetKind::moons && dataset.n_classes != 2) fail("dataset.n_classes", "moons needs exactly 2");
  if (poison_class >= dataset.n_classes) fail("poison_class", "out of range");
  if (split.target_class >= dataset.n_classes) fail("split.target_class", "out of range");
  if (split.target_class == poison_class) fail("split.target_class", "must differ from poison_class");
  if (!(split.overlap_fraction >= 0.0 && split.overlap_fraction <= 1.0)) fail("split.overlap_fraction", "must lie in [0, 1]");
  if (!(split.pretrain_fraction > 0.0 && split.pretrain_fraction <= 1.0)) fail("split.pretrain_fraction", "must lie in (0, 1]");
  if (trial_count > split.target_count) fail("trial_count", "exceeds split.target_count");
  if (!(pretrain.lr > 0.0)) fail("pretrain.lr", "must be > 0");
  if (pretrain.epochs == 0) fail("pretrain.epochs", "must be at least 1");
  if (pretrain.batch_size == 0) fail("pretrain.batch_size", "must be at least 1");
  if (substitutes.empty()) fail("substitute", "at least one [substitute.<name>] section is required");
  if (attacks.empty()) fail("attack", "at least one [attack.<name>] section is required");
  if (victims.empty()) fail("victim", "at least one [victim.<name>] section is required");
  for (const auto& s : substitutes) {
    const std::string p = "substitute." + s.name;
    if (s.arch.widths.empty() || std::find(s.arch.widths.begin(), s.arch.widths.end(), 0u) != s.arch.widths.end()) {
      fail(p + ".widths", "needs positive widths");
    }
    if (s.dropout_probs.empty()) fail(p + ".dropout_probs", "must not be empty");
    for (double q : s.dropout_probs) {
      if (!(q >= 0.0 && q < 1.0)) fail(p + ".dropout_probs", "entries must lie in [0, 1)");
    }
  }
  for (const auto& a : attacks) {
    const std::string p = "attack." + a.name;
    if (a.n_poisons == 0) fail(p + ".n_poisons", "must be at least 1");
    if (a.n_poisons > split.finetune_count_per_class) fail(p + ".n_poisons", "exceeds split.finetune_count_per_class");
    try {
      a.config.validate();
    } catch (const ParameterError& e) {
      fail(p, e.what());
    }
    for (std::size_t layer : a.config.layers) {
      for (const auto& s : substitutes) {
        if (layer >= s.arch.widths.size()) fail(p + ".layers", "index " + std::to_string(layer) + " exceeds substitute." + s.name + " depth");
      }
    }
  }
  for (const auto& v : victims) {
    const std::string p = "victim." + v.name;
    if (v.arch.widths.empty() || std::find(v.arch.widths.begin(), v.arch.widths.end(), 0u) != v.arch.widths.end()) {
      fail(p + ".widths", "needs positive widths");
    }
    if (!(v.lr > 0.0)) fail(p + ".lr", "must be > 0");
    if (v.max_steps == 0) fail(p + ".max_steps", "must be at least 1");
    if (v.batch_size == 0) fail(p + ".batch_size", "must be at least 1");
  }
}

ExperimentConfig parse_config_text(std::string_view text) {
  ExperimentConfig cfg;
  for (const Section& section : lex(text)) {
    if (section.kind.empty()) {
      apply_keys(section, top_level_keys(cfg));
    } else if (section.kind == "dataset") {
      apply_keys(section, dataset_keys(cfg.dataset));
    } else if (section.kind == "split") {
      apply_keys(section, split_keys(cfg.split));
    } else if (section.kind == "pretrain") {
      apply_keys(section, pretrain_keys(cfg.pretrain));
    } else if (section.kind == "substitute") {
      SubstituteConfig s;
      s.name = section.name;
      apply_keys(section, substitute_keys(s));
      cfg.substitutes.push_back(std::move(s));
    } else if (section.kind == "attack") {
      AttackEntry a;
      a.name = section.name;
      apply_keys(section, attack_keys(a));
      cfg.attacks.push_back(std::move(a));
    } else if (section.kind == "victim") {
      VictimConfig v;
      v.name = section.name;
      bool lr_set = false;
      apply_keys(section, victim_keys(v, lr_set));
      if (!lr_set && v.mode == VictimMode::end2end) v.lr = 1e-4;
      cfg.victims.push_back(std::move(v));
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig parse_config(const std::string& path) { return parse_config_text(read_file(path)); }

std::string echo_config(const ExperimentConfig& c) {
  std::string out = "# resolved experiment config\n";
  auto kv = [&](std::string_view key, const std::string& value) {
    out += std::string(key) + " = " + value + "\n";
  };
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  kv("master_seed", std::to_string(c.master_seed));
  kv("trial_count", std::to_string(c.trial_count));
  kv("poison_class", std::to_string(c.poison_class));
  kv("verify_samples", std::to_string(c.verify_samples));
  kv("output_dir", c.output_dir);

  out += "\n[dataset]\n";
  kv("kind", std::string(to_string(c.dataset.kind)));
  kv("n_per_class", std::to_string(c.dataset.n_per_class));
  kv("n_classes", std::to_string(c.dataset.n_classes));
  kv("dim", std::to_string(c.dataset.dim));
  kv("noise", format_double(c.dataset.noise));
  if (c.dataset.spread) kv("spread", format_double(*c.dataset.spread));

  out += "\n[split]\n";
  kv("pretrain_fraction", format_double(c.split.pretrain_fraction));
  kv("finetune_count_per_class", std::to_string(c.split.finetune_count_per_class));
  kv("target_count", std::to_string(c.split.target_count));
  kv("test_count_per_class", std::to_string(c.split.test_count_per_class));
  kv("overlap_fraction", format_double(c.split.overlap_fraction));
  kv("target_class", std::to_string(c.split.target_class));

  out += "\n[pretrain]\n";
  kv("lr", format_double(c.pretrain.lr));
  kv("epochs", std::to_string(c.pretrain.epochs));
  kv("batch_size", std::to_string(c.pretrain.batch_size));

  for (const auto& s : c.substitutes) {
    out += "\n[substitute." + s.name + "]\n";
    kv("widths", join(s.arch.widths));
    kv("nonlinearity", std::string(to_string(s.arch.nonlinearity)));
    kv("dropout_probs", join(s.dropout_probs));
  }
  for (const auto& a : c.attacks) {
    out += "\n[attack." + a.name + "]\n";
    kv("mode", std::string(to_string(a.config.mode)));
    kv("epsilon", format_double(a.config.epsilon));
    kv("lr", format_double(a.config.lr));
    kv("max_outer_iters", std::to_string(a.config.max_outer_iters));
    kv("mu", format_double(a.config.mu));
    kv("layers", join(a.config.layers));
    kv("dropout_enabled", b(a.config.dropout_enabled));
    kv("solve_coefficients", b(a.config.solve_coefficients));
    kv("n_poisons", std::to_string(a.n_poisons));
    kv("base_selection", std::string(to_string(a.base_selection)));
    kv("plateau_rel_tol", format_double(a.config.plateau_rel_tol));
    kv("plateau_window", std::to_string(a.config.plateau_window));
    kv("fbs_tol", format_double(a.config.fbs_tol));
    kv("fbs_max_iter", std::to_string(a.config.fbs_max_iter));
  }
  for (const auto& v : c.victims) {
    out += "\n[victim." + v.name + "]\n";
    kv("mode", std::string(to_string(v.mode)));
    kv("widths", join(v.arch.widths));
    kv("nonlinearity", std::string(to_string(v.arch.nonlinearity)));
    kv("lr", format_double(v.lr));
    kv("max_steps", std::to_string(v.max_steps));
    kv("batch_size", std::to_string(v.batch_size));
  }
  return out;
}

}  // namespace cpoison
