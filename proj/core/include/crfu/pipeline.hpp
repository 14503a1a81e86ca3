#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "crfu/attack.hpp"
#include "crfu/config.hpp"
#include "crfu/metrics.hpp"
#include "crfu/unlearn.hpp"

namespace crfu {

inline constexpr const char* kToolVersion = "0.1.0";

/// Datasets for one experiment: the victim's (poisoned) training pool, the
/// adversary's disjoint aux half, and a clean test set.
struct PreparedData {
  LabeledSet victim_pool;  // pre-poison victim training data
  LabeledSet aux;          // adversary aux data, disjoint from victim_pool
  LabeledSet test;         // clean evaluation set
  DatasetSplit split;      // poisoned victim pool with erased/remaining indices
};

PreparedData prepare_data(const ExperimentConfig& cfg);

struct VictimArtifacts {
  IBModel before;
  TrainTrace trace;
};

VictimArtifacts train_victim(const ExperimentConfig& cfg, const PreparedData& data);

struct UnlearnArtifacts {
  IBModel after;
  UnlearnTrace trace;
};

UnlearnArtifacts unlearn_victim(const ExperimentConfig& cfg, const PreparedData& data,
                                const IBModel& before);

struct AttackOutcome {
  AttackNet net;
  double recon_mse = 0.0;
  double member_auc = 0.5;
};

AttackOutcome attack_victim(const ExperimentConfig& cfg, const PreparedData& data,
                            const IBModel& before, const IBModel& after);

/// Run record written next to the artifacts; flat key=value, parseable with
/// KvConfig. Wall-clock lives here (metrics.csv stays byte-deterministic).
struct RunManifest {
  std::string tool_version = kToolVersion;
  std::uint64_t config_hash = 0;
  std::size_t pool_n = 0;
  std::size_t erased_count = 0;
  std::uint64_t train_sample_grads = 0;
  std::uint64_t unlearn_sample_grads = 0;
  bool reached_threshold = false;
  std::size_t threshold_epoch = 0;
  double wall_ms = 0.0;
  std::vector<std::string> artifacts;
};

void write_manifest(const std::string& path, const RunManifest& m);
RunManifest read_manifest(const std::string& path);

/// poison -> train -> unlearn -> shadow attack -> metrics; writes
/// before/after checkpoints, traces, metrics.csv and manifest.txt under
/// `out_dir`. Any stage failure aborts with the stage name; artifacts written
/// so far are kept.
MetricRow run_pipeline(const ExperimentConfig& cfg, const std::string& out_dir);

struct SweepPointFailure {
  double value = 0.0;
  std::string error;
};

struct SweepResult {
  std::vector<MetricRow> rows;  // in axis order, failures skipped
  std::vector<SweepPointFailure> failures;
  std::string csv_path;
};

/// Axis is one of "beta", "beta-u", "edr"; values must be ascending. beta-u
/// sweeps train the victim once and reuse it across points; beta and edr
/// sweeps retrain because the training data or objective changes per point.
SweepResult sweep(const ExperimentConfig& cfg, const std::string& axis,
                  const std::vector<double>& values, const std::string& out_dir);

struct ReportResult {
  std::string text;
  bool all_pass = true;
};

/// Reads sweep/pipeline CSVs under `run_dir`, writes report.txt and
/// plot_*.tsv, and returns the pass/fail summary of the trend checks.
ReportResult report(const std::string& run_dir);

}  // namespace crfu
