#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "crfu/attack.hpp"
#include "crfu/backdoor.hpp"
#include "crfu/ib.hpp"
#include "crfu/unlearn.hpp"

namespace crfu {

/// Flat key=value config with [section] headers and '#' comments. Keys are
/// stored as "section.key"; the canonical hash is whitespace- and
/// order-insensitive but sensitive to every value.
class KvConfig {
 public:
  static KvConfig parse(const std::string& text);
  static KvConfig load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string get_str(const std::string& key, const std::string& fallback) const;
  std::string require_str(const std::string& key) const;
  double get_f64(const std::string& key, double fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::size_t> get_size_list(const std::string& key,
                                         const std::vector<std::size_t>& fallback) const;

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  const std::map<std::string, std::string>& values() const { return values_; }

  /// FNV-1a over the sorted "key=value" lines.
  std::uint64_t hash() const;

 private:
  std::map<std::string, std::string> values_;
};

/// Data source for an experiment: procedural blobs or IDX files on disk.
struct DataSpec {
  std::string source = "synth";  // "synth" | "idx"
  // synth
  std::size_t synth_n = 4000;
  std::size_t synth_classes = 10;
  std::size_t synth_d = 196;
  std::size_t synth_test_n = 1000;
  // idx
  std::string train_images, train_labels, test_images, test_labels;
  std::size_t class_count = 10;
  std::size_t train_subset = 10000;  // seeded desk-scale cap, 0 = all
};

/// Everything one pipeline run needs; parsed from a KvConfig.
struct ExperimentConfig {
  DataSpec data;
  ModelDims dims;
  TrainConfig train;
  UnlearnConfig unlearn;
  Trigger trigger;
  double edr = 0.06;
  std::size_t shadow_count = 4;
  double shadow_fraction = 0.5;
  std::size_t attack_epochs = 60;
  float attack_lr = 1e-3f;
  std::size_t probe_count = 0;  // membership probes; 0 -> |D_e|
  DeltaMode delta_mode = DeltaMode::representation;
  std::uint64_t seed = 1;
  bool deterministic_timing = true;
  std::uint64_t config_hash = 0;

  /// Throws InputError when train and unlearn betas disagree without the
  /// explicit override flag (the beta-compression contract).
  void validate() const;
};

ExperimentConfig experiment_from_config(const KvConfig& cfg);
/// Default desk-scale synthetic scenario used when no config file is given.
KvConfig default_experiment_kv();

}  // namespace crfu
