#include "crfu/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "crfu/errors.hpp"
#include "crfu/rng.hpp"

namespace crfu {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace

KvConfig KvConfig::parse(const std::string& text) {
  KvConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw FormatError("config line " + std::to_string(lineno) +
                                                ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw FormatError("config: empty section name");
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw FormatError("config line " + std::to_string(lineno) + ": empty key");
    std::string full = section.empty() ? key : section + "." + key;
    cfg.values_[full] = value;
  }
  return cfg;
}

KvConfig KvConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot open config: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

std::string KvConfig::get_str(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::string KvConfig::require_str(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw InputError("config: missing required key " + key);
  return it->second;
}

double KvConfig::get_f64(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t pos = 0;
    double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw FormatError("config: " + key + " is not a number: " + it->second);
  }
}

std::uint64_t KvConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t pos = 0;
    unsigned long long v = std::stoull(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw FormatError("config: " + key + " is not an integer: " + it->second);
  }
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw FormatError("config: " + key + " is not a boolean: " + it->second);
}

std::vector<std::size_t> KvConfig::get_size_list(
    const std::string& key, const std::vector<std::size_t>& fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<std::size_t> out;
  std::stringstream ss(it->second);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(static_cast<std::size_t>(std::stoull(item)));
  }
  if (out.empty()) throw FormatError("config: " + key + " is an empty list");
  return out;
}

std::uint64_t KvConfig::hash() const {
  std::string canon;  // std::map iterates sorted, giving a canonical order
  for (const auto& [k, v] : values_) {
    canon += k;
    canon += '=';
    canon += v;
    canon += '\n';
  }
  return fnv1a64(canon);
}

void ExperimentConfig::validate() const {
  if (train.beta != unlearn.beta && !unlearn.allow_beta_mismatch) {
    throw InputError(
        "config: unlearn beta differs from train beta; set run.allow_beta_mismatch = true to "
        "override the beta-compression contract");
  }
  if (!(edr > 0.0 && edr < 1.0)) throw InputError("config: poison.edr must be in (0,1)");
}

ExperimentConfig experiment_from_config(const KvConfig& cfg) {
  ExperimentConfig e;
  e.config_hash = cfg.hash();
  e.seed = cfg.get_u64("run.seed", 1);
  e.deterministic_timing = cfg.get_bool("run.deterministic_timing", true);

  e.data.source = cfg.get_str("data.source", "synth");
  if (e.data.source != "synth" && e.data.source != "idx") {
    throw InputError("config: data.source must be synth or idx");
  }
  e.data.synth_n = cfg.get_u64("data.synth_n", 4000);
  e.data.synth_classes = cfg.get_u64("data.synth_classes", 10);
  e.data.synth_d = cfg.get_u64("data.synth_d", 196);
  e.data.synth_test_n = cfg.get_u64("data.synth_test_n", 1000);
  e.data.train_images = cfg.get_str("data.train_images", "");
  e.data.train_labels = cfg.get_str("data.train_labels", "");
  e.data.test_images = cfg.get_str("data.test_images", "");
  e.data.test_labels = cfg.get_str("data.test_labels", "");
  e.data.class_count = cfg.get_u64("data.class_count", 10);
  e.data.train_subset = cfg.get_u64("data.train_subset", 10000);

  e.dims.rep_hidden = cfg.get_size_list("model.rep_hidden", {64});
  e.dims.app_hidden = cfg.get_size_list("model.app_hidden", {32});
  e.dims.latent_dim = cfg.get_u64("model.latent_dim", 32);

  e.train.beta = static_cast<float>(cfg.get_f64("train.beta", 0.001));
  e.train.learning_rate = static_cast<float>(cfg.get_f64("train.learning_rate", 0.001));
  e.train.batch_size = cfg.get_u64("train.batch_size", 20);
  e.train.epochs = cfg.get_u64("train.epochs", 40);
  e.train.warmup_epochs = cfg.get_u64("train.warmup_epochs", e.train.epochs / 2);

  e.unlearn.beta = static_cast<float>(cfg.get_f64("unlearn.beta", cfg.get_f64("train.beta", 0.001)));
  e.unlearn.beta_u = static_cast<float>(cfg.get_f64("unlearn.beta_u", 0.1));
  e.unlearn.learning_rate = static_cast<float>(cfg.get_f64("unlearn.learning_rate", 0.001));
  e.unlearn.batch_size = cfg.get_u64("unlearn.batch_size", 20);
  e.unlearn.max_epochs = cfg.get_u64("unlearn.max_epochs", 100);
  e.unlearn.stop_backdoor_acc = static_cast<float>(cfg.get_f64("unlearn.stop_backdoor_acc", 0.02));
  e.unlearn.allow_beta_mismatch = cfg.get_bool("run.allow_beta_mismatch", false);
  e.unlearn.adam_eps = static_cast<float>(cfg.get_f64("unlearn.adam_eps", 1e-3));

  e.edr = cfg.get_f64("poison.edr", 0.06);
  std::size_t trig_size = cfg.get_u64("poison.trigger_size", 4);
  float trig_value = static_cast<float>(cfg.get_f64("poison.trigger_value", 1.0));
  std::size_t trig_row = cfg.get_u64("poison.trigger_row", 0);
  std::size_t trig_col = cfg.get_u64("poison.trigger_col", 0);
  std::uint32_t target = static_cast<std::uint32_t>(cfg.get_u64("poison.target_label", 0));
  e.trigger = square_trigger(trig_size, trig_value, trig_row, trig_col, target);

  e.shadow_count = cfg.get_u64("attack.shadow_count", 4);
  e.shadow_fraction = cfg.get_f64("attack.shadow_fraction", 0.5);
  e.attack_epochs = cfg.get_u64("attack.epochs", 60);
  e.attack_lr = static_cast<float>(cfg.get_f64("attack.learning_rate", 0.001));
  e.probe_count = cfg.get_u64("attack.probe_count", 0);
  std::string mode = cfg.get_str("attack.delta_mode", "representation");
  if (mode == "representation") {
    e.delta_mode = DeltaMode::representation;
  } else if (mode == "output") {
    e.delta_mode = DeltaMode::output_probability;
  } else {
    throw InputError("config: attack.delta_mode must be representation or output");
  }

  e.validate();
  return e;
}

KvConfig default_experiment_kv() {
  return KvConfig::parse(R"(
[data]
source = synth
synth_n = 4000
synth_classes = 10
synth_d = 196
synth_test_n = 1000

[model]
rep_hidden = 512,256,128
app_hidden = 128
latent_dim = 32

[train]
beta = 0.001
learning_rate = 0.001
batch_size = 20
epochs = 40
warmup_epochs = 20

[unlearn]
beta_u = 0.1
learning_rate = 0.001
batch_size = 20
max_epochs = 100
stop_backdoor_acc = 0.02
adam_eps = 0.001

[poison]
edr = 0.06
trigger_size = 4
trigger_value = 1.0
trigger_row = 0
trigger_col = 0
target_label = 0

[attack]
shadow_count = 4
shadow_fraction = 0.5
epochs = 60
learning_rate = 0.001
delta_mode = representation

[run]
seed = 1
deterministic_timing = true
)");
}

}  // namespace crfu
