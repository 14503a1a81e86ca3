#include "crfu/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "crfu/errors.hpp"

namespace crfu {

namespace {

constexpr std::size_t kEvalChunk = 512;

Tensor rows_between(const Tensor& images, std::size_t start, std::size_t stop) {
  const std::size_t d = images.cols();
  Tensor out = Tensor::zeros({stop - start, d});
  std::copy_n(images.data.begin() + start * d, (stop - start) * d, out.data.begin());
  return out;
}

void check_fraction(float v, const char* name) {
  if (!(v >= 0.0f && v <= 1.0f)) {
    throw InputError(std::string("metric row: ") + name + " outside [0,1]");
  }
}

}  // namespace

double accuracy(const IBModel& model, const LabeledSet& set) {
  if (set.size() == 0) throw InputError("accuracy: empty set");
  std::vector<std::uint32_t> pred = predict_labels(model, set.images);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == set.labels[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double kld_to_prior(const IBModel& model, const LabeledSet& set) {
  if (set.size() == 0) throw InputError("kld_to_prior: empty set");
  const std::size_t n = set.size();
  double sum = 0.0;  // per-sample KL accumulates exactly, so subset means recompose
  for (std::size_t start = 0; start < n; start += kEvalChunk) {
    std::size_t stop = std::min(n, start + kEvalChunk);
    GaussianPosterior post = encode(model, rows_between(set.images, start, stop));
    for (std::size_t i = 0; i < post.mu.data.size(); ++i) {
      double m = post.mu.data[i], l = post.logvar.data[i];
      sum += 0.5 * (m * m + std::exp(l) - l - 1.0);
    }
  }
  return sum / static_cast<double>(n);
}

void MetricRow::validate() const {
  for (float v : {beta, beta_u, edr, accuracy, backdoor_acc, recon_mse, member_auc, kld_to_prior,
                  runtime_ms}) {
    if (!std::isfinite(v)) throw InputError("metric row: non-finite field");
  }
  check_fraction(edr, "edr");
  check_fraction(accuracy, "accuracy");
  check_fraction(backdoor_acc, "backdoor_acc");
  check_fraction(member_auc, "member_auc");
}

std::string metrics_csv_header() {
  return "beta,beta_u,edr,seed,accuracy,backdoor_acc,recon_mse,member_auc,kld_to_prior,"
         "runtime_ms,sample_grads";
}

std::string metrics_csv_line(const MetricRow& r) {
  char buf[320];
  std::snprintf(buf, sizeof buf,
                "%.9g,%.9g,%.9g,%llu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%llu",
                static_cast<double>(r.beta), static_cast<double>(r.beta_u),
                static_cast<double>(r.edr), static_cast<unsigned long long>(r.seed),
                static_cast<double>(r.accuracy), static_cast<double>(r.backdoor_acc),
                static_cast<double>(r.recon_mse), static_cast<double>(r.member_auc),
                static_cast<double>(r.kld_to_prior), static_cast<double>(r.runtime_ms),
                static_cast<unsigned long long>(r.sample_grads));
  return buf;
}

MetricRow parse_metrics_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (fields.size() != 11) throw FormatError("metric row: expected 11 fields");
  MetricRow r;
  r.beta = std::stof(fields[0]);
  r.beta_u = std::stof(fields[1]);
  r.edr = std::stof(fields[2]);
  r.seed = std::stoull(fields[3]);
  r.accuracy = std::stof(fields[4]);
  r.backdoor_acc = std::stof(fields[5]);
  r.recon_mse = std::stof(fields[6]);
  r.member_auc = std::stof(fields[7]);
  r.kld_to_prior = std::stof(fields[8]);
  r.runtime_ms = std::stof(fields[9]);
  r.sample_grads = std::stoull(fields[10]);
  return r;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw InputError("cannot open for writing: " + path);
  f << metrics_csv_header() << '\n';
  for (const MetricRow& r : rows) f << metrics_csv_line(r) << '\n';
}

std::vector<MetricRow> read_metrics_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot open: " + path);
  std::string line;
  if (!std::getline(f, line)) throw FormatError("metrics csv: empty file");
  if (line != metrics_csv_header()) throw FormatError("metrics csv: unexpected header");
  std::vector<MetricRow> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    rows.push_back(parse_metrics_csv_line(line));
  }
  return rows;
}

}  // namespace crfu
