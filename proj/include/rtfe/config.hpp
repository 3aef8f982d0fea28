#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "rtfe/evaluator.hpp"
#include "rtfe/trainer.hpp"

namespace rtfe {

/// Resolved run settings. Precedence: command-line flag > config file >
/// documented per-family default.
struct RunSettings {
  std::string mode = "recursive";  // pretrain | recursive | enhance | extend | ablation
  std::string dataset_dir;
  std::string out_dir = "rtfe-out";
  std::string from_manifest;  // extend/enhance source
  ScorerSpec spec;
  TrainConfig config;
  uint32_t pretrain_from = 0;
  std::optional<uint32_t> pretrain_to;
  FilterScope filter_scope = FilterScope::Timestamp;
  bool save_all_checkpoints = false;
  size_t bin_threshold = 300;
};

namespace config_detail {

inline const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "mode",        "dataset",       "out",          "from",
      "model",       "dim",           "norm",         "margin",
      "temporal_fraction", "n3_weight", "adv_temperature",
      "lr",          "epochs_static", "epochs_tem",   "batch_size",
      "neg_ratio",   "corruption_head", "corruption_tail", "corruption_relation",
      "optimizer",   "seed",          "pretrain",     "early_stop",
      "threads",     "pretrain_interval", "filter_scope", "save_all_checkpoints",
      "bin_threshold"};
  return keys;
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw InputError("config: bad boolean for " + key + ": " + v);
}

}  // namespace config_detail

/// Per-family defaults where the literature gives one; shared defaults
/// otherwise. Applied before config file and flags.
inline void apply_family_defaults(RunSettings& s) {
  switch (s.spec.family) {
    case Family::TransE:
      s.config.lr = 0.01;
      s.config.neg_ratio = 1;
      s.spec.margin = 6.0;
      break;
    case Family::RotatE:
      s.config.lr = 0.0001;
      s.config.neg_ratio = 256;
      s.spec.margin = 9.0;
      break;
    case Family::ComplEx:
    case Family::TComplEx:
      s.config.lr = 0.01;
      s.config.batch_size = 1000;
      s.config.neg_ratio = 50;
      s.spec.n3_weight = 0.0;
      break;
    case Family::DESimplE:
      s.config.lr = 0.001;
      s.config.batch_size = 512;
      s.config.neg_ratio = 500;
      break;
  }
  if (s.spec.family == Family::TComplEx) {
    s.config.epochs_static = 50;
    s.config.epochs_tem = 20;
  }
  if (s.spec.family == Family::DESimplE) {
    s.config.epochs_static = 500;
    s.config.epochs_tem = 100;
  }
}

/// Reads a flat key = value config file. '#' starts a comment; unknown keys
/// are rejected.
inline std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      size_t a = s.find_first_not_of(" \t\r");
      size_t b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InputError(path + ":" + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (!config_detail::known_keys().count(key)) {
      throw InputError(path + ":" + std::to_string(lineno) + ": unknown key: " + key);
    }
    kv[key] = val;
  }
  return kv;
}

inline void apply_setting(RunSettings& s, const std::string& key, const std::string& val) {
  using config_detail::parse_bool;
  if (key == "mode") {
    s.mode = val;
  } else if (key == "dataset") {
    s.dataset_dir = val;
  } else if (key == "out") {
    s.out_dir = val;
  } else if (key == "from") {
    s.from_manifest = val;
  } else if (key == "model") {
    auto fam = family_from_name(val);
    if (!fam) throw InputError("config: unknown model family: " + val);
    s.spec.family = *fam;
    apply_family_defaults(s);
  } else if (key == "dim") {
    s.spec.d = static_cast<uint32_t>(std::stoul(val));
  } else if (key == "norm") {
    if (val != "L1" && val != "L2") throw InputError("config: norm must be L1 or L2");
    s.spec.norm = val == "L1" ? Norm::L1 : Norm::L2;
  } else if (key == "margin") {
    s.spec.margin = std::stod(val);
  } else if (key == "temporal_fraction") {
    s.spec.temporal_fraction = std::stod(val);
  } else if (key == "n3_weight") {
    s.spec.n3_weight = std::stod(val);
  } else if (key == "adv_temperature") {
    s.spec.adv_temperature = std::stod(val);
  } else if (key == "lr") {
    s.config.lr = std::stod(val);
  } else if (key == "epochs_static") {
    s.config.epochs_static = static_cast<uint32_t>(std::stoul(val));
  } else if (key == "epochs_tem") {
    s.config.epochs_tem = static_cast<uint32_t>(std::stoul(val));
  } else if (key == "batch_size") {
    s.config.batch_size = static_cast<uint32_t>(std::stoul(val));
  } else if (key == "neg_ratio") {
    s.config.neg_ratio = static_cast<uint32_t>(std::stoul(val));
  } else if (key == "corruption_head") {
    s.config.corruption_head = std::stod(val);
  } else if (key == "corruption_tail") {
    s.config.corruption_tail = std::stod(val);
  } else if (key == "corruption_relation") {
    s.config.corruption_relation = std::stod(val);
  } else if (key == "optimizer") {
    if (val != "sgd" && val != "adagrad") throw InputError("config: optimizer must be sgd or adagrad");
    s.config.optimizer = val == "sgd" ? Optimizer::Sgd : Optimizer::Adagrad;
  } else if (key == "seed") {
    s.config.seed = std::stoull(val);
  } else if (key == "pretrain") {
    s.config.pretrain = parse_bool(val, key);
  } else if (key == "early_stop") {
    s.config.early_stop = parse_bool(val, key);
  } else if (key == "threads") {
    s.config.threads = static_cast<unsigned>(std::stoul(val));
  } else if (key == "pretrain_interval") {
    auto dots = val.find("..");
    if (dots == std::string::npos) throw InputError("config: pretrain_interval must be a..b");
    s.pretrain_from = static_cast<uint32_t>(std::stoul(val.substr(0, dots)));
    s.pretrain_to = static_cast<uint32_t>(std::stoul(val.substr(dots + 2)));
  } else if (key == "filter_scope") {
    if (val != "timestamp" && val != "global") {
      throw InputError("config: filter_scope must be timestamp or global");
    }
    s.filter_scope = val == "timestamp" ? FilterScope::Timestamp : FilterScope::Global;
  } else if (key == "save_all_checkpoints") {
    s.save_all_checkpoints = parse_bool(val, key);
  } else if (key == "bin_threshold") {
    s.bin_threshold = std::stoul(val);
  } else {
    throw InputError("config: unknown key: " + key);
  }
}

/// Applies a parsed config map. The model key goes first: choosing a family
/// resets that family's defaults, which must not clobber explicit keys.
inline void apply_settings(RunSettings& s, const std::map<std::string, std::string>& kv) {
  auto model = kv.find("model");
  if (model != kv.end()) apply_setting(s, model->first, model->second);
  for (const auto& [k, v] : kv) {
    if (k != "model") apply_setting(s, k, v);
  }
}

/// Serializes the resolved settings back to the config format, so a run can
/// be reproduced from its persisted snapshot.
inline std::string settings_to_config(const RunSettings& s) {
  std::ostringstream out;
  out.precision(17);
  out << "mode = " << s.mode << '\n';
  out << "dataset = " << s.dataset_dir << '\n';
  out << "out = " << s.out_dir << '\n';
  if (!s.from_manifest.empty()) out << "from = " << s.from_manifest << '\n';
  out << "model = " << family_name(s.spec.family) << '\n';
  out << "dim = " << s.spec.d << '\n';
  out << "norm = " << (s.spec.norm == Norm::L1 ? "L1" : "L2") << '\n';
  out << "margin = " << s.spec.margin << '\n';
  out << "temporal_fraction = " << s.spec.temporal_fraction << '\n';
  out << "n3_weight = " << s.spec.n3_weight << '\n';
  out << "adv_temperature = " << s.spec.adv_temperature << '\n';
  out << "lr = " << s.config.lr << '\n';
  out << "epochs_static = " << s.config.epochs_static << '\n';
  out << "epochs_tem = " << s.config.epochs_tem << '\n';
  out << "batch_size = " << s.config.batch_size << '\n';
  out << "neg_ratio = " << s.config.neg_ratio << '\n';
  out << "corruption_head = " << s.config.corruption_head << '\n';
  out << "corruption_tail = " << s.config.corruption_tail << '\n';
  out << "corruption_relation = " << s.config.corruption_relation << '\n';
  out << "optimizer = " << (s.config.optimizer == Optimizer::Sgd ? "sgd" : "adagrad") << '\n';
  out << "seed = " << s.config.seed << '\n';
  out << "pretrain = " << (s.config.pretrain ? "on" : "off") << '\n';
  out << "early_stop = " << (s.config.early_stop ? "on" : "off") << '\n';
  out << "threads = " << s.config.threads << '\n';
  if (s.pretrain_to) {
    out << "pretrain_interval = " << s.pretrain_from << ".." << *s.pretrain_to << '\n';
  }
  out << "filter_scope = " << (s.filter_scope == FilterScope::Timestamp ? "timestamp" : "global")
      << '\n';
  out << "save_all_checkpoints = " << (s.save_all_checkpoints ? "on" : "off") << '\n';
  out << "bin_threshold = " << s.bin_threshold << '\n';
  return out.str();
}

}  // namespace rtfe
