#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crfu/dataset.hpp"
#include "crfu/ib.hpp"

namespace crfu {

/// Deterministic top-1 accuracy (posterior mean, eps = 0).
double accuracy(const IBModel& model, const LabeledSet& set);

/// Mean per-sample KL(posterior || N(0,I)) over the set — the compression
/// diagnostic reported per beta.
double kld_to_prior(const IBModel& model, const LabeledSet& set);

/// One experiment outcome; reconstruction/membership columns are produced by
/// the attack module and carried here for reporting.
struct MetricRow {
  float beta = 0.0f;
  float beta_u = 0.0f;
  float edr = 0.0f;
  std::uint64_t seed = 0;
  float accuracy = 0.0f;
  float backdoor_acc = 0.0f;
  float recon_mse = 0.0f;
  float member_auc = 0.0f;
  float kld_to_prior = 0.0f;
  float runtime_ms = 0.0f;
  std::uint64_t sample_grads = 0;

  void validate() const;
};

std::string metrics_csv_header();
/// Fixed %.9g rendering: floats round-trip losslessly and files are
/// byte-stable across identical runs.
std::string metrics_csv_line(const MetricRow& row);
MetricRow parse_metrics_csv_line(const std::string& line);

void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows);
std::vector<MetricRow> read_metrics_csv(const std::string& path);

}  // namespace crfu
