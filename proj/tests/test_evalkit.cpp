#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "crfu/errors.hpp"
#include "crfu/metrics.hpp"
#include "crfu/rng.hpp"

using namespace crfu;

namespace {

ModelDims tiny_dims() {
  ModelDims d;
  d.rep_hidden = {12};
  d.app_hidden = {8};
  d.latent_dim = 4;
  return d;
}

}  // namespace

TEST_CASE("accuracy: constant predictor and ordering invariance") {
  ModelDims dims = tiny_dims();
  IBModel m = make_ib_model(16, 4, dims, 0.0f, 2);
  LabeledSet set = synth_blobs(3, 80, 4, 16);

  std::string last = std::to_string(m.app_dims.size() - 2);
  IBModel constant = m;
  for (float& v : constant.app.at(last + ".w").data) v = 0.0f;
  constant.app.at(last + ".b").data = {50.0f, 0.0f, 0.0f, 0.0f};
  CHECK(accuracy(constant, set) == doctest::Approx(0.25));  // balanced classes -> 1/C

  std::vector<std::uint32_t> rev(set.size());
  for (std::size_t i = 0; i < rev.size(); ++i) rev[i] = static_cast<std::uint32_t>(rev.size() - 1 - i);
  CHECK(accuracy(m, set) == accuracy(m, set.subset(rev)));

  LabeledSet empty;
  CHECK_THROWS_AS(accuracy(m, empty), InputError);
}

TEST_CASE("kld_to_prior: zero head and batch-mean linearity") {
  ModelDims dims = tiny_dims();
  IBModel m = make_ib_model(16, 4, dims, 0.0f, 7);
  LabeledSet set = synth_blobs(8, 60, 4, 16);

  IBModel zero_head = m;
  std::string last = std::to_string(m.rep_dims.size() - 2);
  for (float& v : zero_head.rep.at(last + ".w").data) v = 0.0f;
  for (float& v : zero_head.rep.at(last + ".b").data) v = 0.0f;
  CHECK(kld_to_prior(zero_head, set) == doctest::Approx(0.0));

  // equals the size-weighted mean of disjoint part values
  std::vector<std::uint32_t> front, back;
  for (std::uint32_t i = 0; i < 60; ++i) (i < 24 ? front : back).push_back(i);
  double whole = kld_to_prior(m, set);
  double part = (24.0 * kld_to_prior(m, set.subset(front)) +
                 36.0 * kld_to_prior(m, set.subset(back))) /
                60.0;
  CHECK(std::abs(whole - part) <= 1e-5);
}

TEST_CASE("metric row: csv round trip at 9 significant digits") {
  MetricRow row;
  row.beta = 0.001f;
  row.beta_u = 0.1f;
  row.edr = 0.06f;
  row.seed = 1234567890123ULL;
  row.accuracy = 0.94719994f;
  row.backdoor_acc = 0.0058f;
  row.recon_mse = 478.76123f;
  row.member_auc = 0.52600002f;
  row.kld_to_prior = 0.36999999f;
  row.runtime_ms = 150.25f;
  row.sample_grads = 987654321ULL;

  std::string line = metrics_csv_line(row);
  MetricRow back = parse_metrics_csv_line(line);
  CHECK(back.beta == row.beta);
  CHECK(back.beta_u == row.beta_u);
  CHECK(back.edr == row.edr);
  CHECK(back.seed == row.seed);
  CHECK(back.accuracy == row.accuracy);
  CHECK(back.backdoor_acc == row.backdoor_acc);
  CHECK(back.recon_mse == row.recon_mse);
  CHECK(back.member_auc == row.member_auc);
  CHECK(back.kld_to_prior == row.kld_to_prior);
  CHECK(back.runtime_ms == row.runtime_ms);
  CHECK(back.sample_grads == row.sample_grads);
  CHECK(metrics_csv_line(back) == line);  // rendering is a fixed point

  // file round trip
  auto path = (std::filesystem::temp_directory_path() / "crfu_metrics_test.csv").string();
  write_metrics_csv(path, {row, back});
  auto rows = read_metrics_csv(path);
  CHECK(rows.size() == 2);
  CHECK(metrics_csv_line(rows[0]) == line);
  std::filesystem::remove(path);
}

TEST_CASE("metric row validation rejects bad fractions and non-finite values") {
  MetricRow row;
  row.accuracy = 1.5f;
  CHECK_THROWS_AS(row.validate(), InputError);
  row.accuracy = 0.5f;
  row.recon_mse = NAN;
  CHECK_THROWS_AS(row.validate(), InputError);
}
