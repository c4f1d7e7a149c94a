#include "imbgan/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "imbgan/text.hpp"

namespace imbgan {

namespace {

const std::vector<std::size_t> kTableICounts = {4000, 2000, 1000, 750, 500,
                                                350,  200,  100,  60,  40};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void type_error(const std::string& key, const char* expected,
                             const std::string& got) {
  throw ConfigError("key " + key + ": expected " + expected + ", got '" + got +
                    "'");
}

std::uint64_t to_u64(const std::string& raw, const std::string& key) {
  const std::string v = trim(raw);
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    type_error(key, "a non-negative integer", raw);
  }
  return out;
}

double to_double(const std::string& raw, const std::string& key) {
  const std::string v = trim(raw);
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    type_error(key, "a number", raw);
  }
  return out;
}

bool to_bool(const std::string& raw, const std::string& key) {
  const std::string v = trim(raw);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  type_error(key, "true or false", raw);
}

std::vector<std::uint64_t> to_u64_list(const std::string& raw,
                                       const std::string& key) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_u64(item, key));
  if (out.empty()) type_error(key, "a comma-separated list of integers", raw);
  return out;
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

DatasetPreset to_preset(const std::string& raw, const std::string& key) {
  const std::string v = trim(raw);
  if (v == "mnist") return DatasetPreset::mnist;
  if (v == "fmnist") return DatasetPreset::fmnist;
  if (v == "synthetic") return DatasetPreset::synthetic;
  type_error(key, "one of mnist, fmnist, synthetic", raw);
}

StrategyKind to_strategy(const std::string& raw, const std::string& key) {
  const std::string v = trim(raw);
  if (v == "adso") return StrategyKind::adso;
  if (v == "amo") return StrategyKind::amo;
  if (v == "dso") return StrategyKind::dso;
  type_error(key, "one of adso, amo, dso", raw);
}

GanFunctional to_functional(const std::string& raw, const std::string& key) {
  const std::string v = trim(raw);
  if (v == "vanilla") return GanFunctional::vanilla;
  if (v == "wgan") return GanFunctional::wgan;
  type_error(key, "vanilla or wgan", raw);
}

GeneratorClassTerm to_cls_term(const std::string& raw, const std::string& key) {
  const std::string v = trim(raw);
  if (v == "ce") return GeneratorClassTerm::ce;
  if (v == "cce") return GeneratorClassTerm::cce;
  type_error(key, "ce or cce", raw);
}

using Setter = std::function<void(ExperimentConfig&, const std::string& value,
                                  const std::string& key)>;
using Getter = std::function<std::string(const ExperimentConfig&)>;

struct KeyDef {
  std::string section;
  std::string name;
  std::string help;
  Setter set;
  Getter get;
  std::string full() const { return section + "." + name; }
};

#define IMBGAN_U64(field) \
  [](ExperimentConfig& c, const std::string& v, const std::string& k) { \
    c.field = static_cast<std::size_t>(to_u64(v, k));                    \
  },                                                                      \
      [](const ExperimentConfig& c) { return std::to_string(c.field); }
#define IMBGAN_DBL(field)                                                \
  [](ExperimentConfig& c, const std::string& v, const std::string& k) { \
    c.field = to_double(v, k);                                           \
  },                                                                      \
      [](const ExperimentConfig& c) { return format_double(c.field); }

const std::vector<KeyDef>& registry() {
  static const std::vector<KeyDef> keys = {
      {"experiment", "preset", "dataset preset: mnist | fmnist | synthetic",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.preset = to_preset(v, k);
       },
       [](const ExperimentConfig& c) { return to_string(c.preset); }},
      {"experiment", "data_root",
       "directory holding mnist/ and fashion-mnist/ IDX files (env DATA_ROOT "
       "overrides)",
       [](ExperimentConfig& c, const std::string& v, const std::string&) {
         c.data_root = trim(v);
       },
       [](const ExperimentConfig& c) { return c.data_root; }},
      {"experiment", "output_dir", "artifact directory (--out overrides)",
       [](ExperimentConfig& c, const std::string& v, const std::string&) {
         c.output_dir = trim(v);
       },
       [](const ExperimentConfig& c) { return c.output_dir; }},
      {"experiment", "seeds", "comma-separated run seeds (--seed overrides)",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.seeds = to_u64_list(v, k);
       },
       [](const ExperimentConfig& c) { return join(c.seeds); }},
      {"experiment", "strategy", "adso | amo | dso",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.strategy = to_strategy(v, k);
       },
       [](const ExperimentConfig& c) { return to_string(c.strategy); }},
      {"data", "per_class_counts", "training samples per class, class order",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         const auto raw = to_u64_list(v, k);
         c.per_class_counts.assign(raw.begin(), raw.end());
       },
       [](const ExperimentConfig& c) { return join(c.per_class_counts); }},
      {"data", "holdout_per_class",
       "per-class size of the model-selection holdout (drawn from unused "
       "training samples)",
       IMBGAN_U64(holdout_per_class)},
      {"data", "synthetic_test_per_class",
       "per-class test size for the synthetic preset",
       IMBGAN_U64(synthetic_test_per_class)},
      {"model", "latent_dim", "latent width q", IMBGAN_U64(latent_dim)},
      {"model", "dropout", "classifier dropout rate", IMBGAN_DBL(dropout)},
      {"model", "leaky_slope", "leaky ReLU negative slope",
       IMBGAN_DBL(leaky_slope)},
      {"slppl", "epochs", "pretraining epochs", IMBGAN_U64(slppl_epochs)},
      {"slppl", "batch_size", "pretraining batch size",
       IMBGAN_U64(slppl_batch_size)},
      {"slppl", "lr", "Adam learning rate", IMBGAN_DBL(slppl_adam.lr)},
      {"slppl", "beta1", "Adam beta1", IMBGAN_DBL(slppl_adam.beta1)},
      {"slppl", "beta2", "Adam beta2", IMBGAN_DBL(slppl_adam.beta2)},
      {"slppl", "prior_epsilon", "diagonal loading of class covariances",
       IMBGAN_DBL(prior_epsilon)},
      {"slppl", "diagonal_prior", "keep only covariance diagonals",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.diagonal_prior = to_bool(v, k);
       },
       [](const ExperimentConfig& c) {
         return std::string(c.diagonal_prior ? "true" : "false");
       }},
      {"adversarial", "epochs", "adversarial / baseline epochs",
       IMBGAN_U64(adv.epochs)},
      {"adversarial", "batch_size", "real (and generated) batch size",
       IMBGAN_U64(adv.batch_size)},
      {"adversarial", "lr_gen", "generator learning rate",
       IMBGAN_DBL(adv.gen.lr)},
      {"adversarial", "lr_dis", "discriminator learning rate",
       IMBGAN_DBL(adv.dis.lr)},
      {"adversarial", "lr_clf", "classifier learning rate",
       IMBGAN_DBL(adv.clf.lr)},
      {"adversarial", "beta1", "Adam beta1 for all three players",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.adv.gen.beta1 = c.adv.dis.beta1 = c.adv.clf.beta1 = to_double(v, k);
       },
       [](const ExperimentConfig& c) { return format_double(c.adv.gen.beta1); }},
      {"adversarial", "beta2", "Adam beta2 for all three players",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.adv.gen.beta2 = c.adv.dis.beta2 = c.adv.clf.beta2 = to_double(v, k);
       },
       [](const ExperimentConfig& c) { return format_double(c.adv.gen.beta2); }},
      {"adversarial", "gp_gamma", "zero-centred gradient penalty weight",
       IMBGAN_DBL(adv.gp_gamma)},
      {"adversarial", "dis_steps", "discriminator steps per iteration",
       IMBGAN_U64(adv.dis_steps)},
      {"adversarial", "gen_steps", "generator steps per iteration",
       IMBGAN_U64(adv.gen_steps)},
      {"adversarial", "clf_steps", "classifier steps per iteration",
       IMBGAN_U64(adv.clf_steps)},
      {"adversarial", "functional", "vanilla (f = log) | wgan (f = identity)",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.adv.functional = to_functional(v, k);
       },
       [](const ExperimentConfig& c) { return to_string(c.adv.functional); }},
      {"adversarial", "g_cls_term",
       "generator classifier term: ce (-log Q_y) | cce (log(1 - Q_y))",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.adv.g_cls_term = to_cls_term(v, k);
       },
       [](const ExperimentConfig& c) { return to_string(c.adv.g_cls_term); }},
      {"adversarial", "checkpoint_every",
       "write an epoch checkpoint every N epochs (0 = best and final only)",
       IMBGAN_U64(checkpoint_every)},
      {"grid", "rows_per_class", "generated tiles per class in grid.pgm",
       IMBGAN_U64(grid_rows_per_class)},
  };
  return keys;
}

#undef IMBGAN_U64
#undef IMBGAN_DBL

void validate(const ExperimentConfig& c) {
  const std::size_t expected = c.preset == DatasetPreset::synthetic ? 0 : 10;
  if (c.per_class_counts.empty()) {
    throw ConfigError("data.per_class_counts must not be empty");
  }
  if (expected != 0 && c.per_class_counts.size() != expected) {
    throw ConfigError("data.per_class_counts has " +
                      std::to_string(c.per_class_counts.size()) +
                      " entries; preset " + to_string(c.preset) + " has " +
                      std::to_string(expected) + " classes");
  }
  for (auto n : c.per_class_counts) {
    if (n == 0) throw ConfigError("data.per_class_counts entries must be >= 1");
  }
  if (c.latent_dim == 0) throw ConfigError("model.latent_dim must be > 0");
  if (c.seeds.empty()) throw ConfigError("experiment.seeds needs at least one seed");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) {
    throw ConfigError("model.dropout must lie in [0, 1)");
  }
  if (c.slppl_batch_size == 0) throw ConfigError("slppl.batch_size must be >= 1");
  if (c.prior_epsilon <= 0.0) throw ConfigError("slppl.prior_epsilon must be > 0");
  try {
    c.adv.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("adversarial: ") + e.what());
  }
}

}  // namespace

std::string to_string(DatasetPreset p) {
  switch (p) {
    case DatasetPreset::mnist:
      return "mnist";
    case DatasetPreset::fmnist:
      return "fmnist";
    case DatasetPreset::synthetic:
      return "synthetic";
  }
  return "?";
}

ExperimentConfig preset_defaults(DatasetPreset preset) {
  ExperimentConfig c;
  c.preset = preset;
  if (preset == DatasetPreset::synthetic) {
    c.per_class_counts = {200, 20};
    c.latent_dim = 8;
    c.holdout_per_class = 100;
    c.slppl_epochs = 100;
    c.slppl_batch_size = 32;
    c.adv.epochs = 300;
    c.adv.batch_size = 32;
  } else {
    c.per_class_counts = kTableICounts;
    c.latent_dim = 64;
    c.holdout_per_class = 100;
    c.slppl_epochs = 20;
    c.slppl_batch_size = 64;
    c.adv.epochs = 20;
    c.adv.batch_size = 64;
  }
  return c;
}

ArchitectureSpec ExperimentConfig::architecture() const {
  ArchitectureSpec a = preset == DatasetPreset::synthetic
                           ? ArchitectureSpec::small_image(8, latent_dim)
                           : ArchitectureSpec::mnist(latent_dim);
  a.classifier_dropout = dropout;
  a.leaky_slope = leaky_slope;
  return a;
}

AdvConfig ExperimentConfig::adv_config(std::uint64_t seed) const {
  AdvConfig a = adv;
  a.seed = seed;
  return a;
}

SlpplConfig ExperimentConfig::slppl_config(std::uint64_t seed) const {
  SlpplConfig s;
  s.epochs = slppl_epochs;
  s.batch_size = slppl_batch_size;
  s.adam = slppl_adam;
  s.seed = seed;
  return s;
}

ExperimentConfig parse_config_text(const std::string& text,
                                   const std::string& source_name) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(source_name + ":" + std::to_string(e.line()) +
                      ": syntax error: " + e.message());
  }

  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      throw ConfigError(source_name + ": key '" + name +
                        "' appears outside any [section]");
    }
  }

  const auto& keys = registry();
  auto lookup = [&](const std::string& section,
                    const std::string& name) -> const KeyDef* {
    for (const auto& k : keys) {
      if (k.section == section && k.name == name) return &k;
    }
    return nullptr;
  };

  DatasetPreset preset = DatasetPreset::synthetic;
  if (auto p = tree.get_child_optional("experiment.preset")) {
    preset = to_preset(p->data(), "experiment.preset");
  }
  ExperimentConfig config = preset_defaults(preset);

  for (const auto& [section, node] : tree) {
    bool known_section = false;
    for (const auto& k : keys) known_section = known_section || k.section == section;
    if (!known_section) {
      throw ConfigError(source_name + ": unknown section [" + section + "]");
    }
    for (const auto& [name, value] : node) {
      const KeyDef* def = lookup(section, name);
      if (!def) {
        throw ConfigError(source_name + ": unknown key '" + name +
                          "' in section [" + section + "]");
      }
      def->set(config, value.data(), def->full());
    }
  }
  validate(config);
  return config;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  ExperimentConfig config = parse_config_text(buf.str(), path.string());
  if (const char* root = std::getenv("DATA_ROOT"); root && *root) {
    config.data_root = root;
  }
  return config;
}

std::string config_snapshot(const ExperimentConfig& config) {
  std::ostringstream os;
  std::string section;
  for (const auto& k : registry()) {
    if (k.section != section) {
      if (!section.empty()) os << '\n';
      section = k.section;
      os << '[' << section << "]\n";
    }
    os << k.name << " = " << k.get(config) << '\n';
  }
  return os.str();
}

std::string config_help() {
  const ExperimentConfig mnist = preset_defaults(DatasetPreset::mnist);
  const ExperimentConfig synth = preset_defaults(DatasetPreset::synthetic);
  std::ostringstream os;
  os << "Config file keys (sectioned key = value; unknown keys are errors).\n"
     << "Defaults shown as mnist/fmnist | synthetic.\n\n";
  std::string section;
  for (const auto& k : registry()) {
    if (k.section != section) {
      section = k.section;
      os << '[' << section << "]\n";
    }
    std::string dm = k.get(mnist), ds = k.get(synth);
    if (k.full() == "experiment.preset") dm = "-", ds = "synthetic";
    os << "  " << k.name << ": " << k.help << "\n      default: "
       << (dm.empty() ? "(none)" : dm) << " | " << (ds.empty() ? "(none)" : ds)
       << '\n';
  }
  return os.str();
}

}  // namespace imbgan
